use std::fs;
use std::path::{Path, PathBuf};

use dsseg_core::Volume;

use crate::error::{Error, Result};
use crate::rvol;

/// `*.rvol` files directly inside `dir`, sorted by file name.
pub fn list_volumes(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "rvol"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Every volume in `dir`, paired with its file name, in name order.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, Volume)>> {
    list_volumes(dir)?
        .into_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, rvol::read_volume(&p)?))
        })
        .collect()
}
