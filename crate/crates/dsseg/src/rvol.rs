//! RVOL volume files.
//!
//! Little-endian layout:
//!
//! | bytes        | field                                  |
//! |--------------|----------------------------------------|
//! | 4            | magic `RVOL`                           |
//! | 4            | version, `u32` = 1                     |
//! | 12           | `D`, `H`, `W` as `u32`                 |
//! | 12           | spacing `(sz, sy, sx)` as `f32` (mm)   |
//! | 1            | labels present, `u8` 0 or 1            |
//! | 4·D·H·W      | intensities, `f32`, `[z][y][x]` order  |
//! | D·H·W        | labels, `u8` in {0,1,2}, if present    |
//!
//! Nothing may follow the payload.

use std::fs;
use std::path::Path;

use dsseg_core::{Volume, VolumeShape};

use crate::bytes::{dim, to_u32, Reader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RVOL";
pub const VERSION: u32 = 1;

pub fn encode(volume: &Volume) -> Result<Vec<u8>> {
    let shape = volume.shape();
    let labels = volume.labels();
    let mut out = Vec::with_capacity(33 + shape.voxels() * 5);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (d, field) in [(shape.depth, "depth"), (shape.height, "height"), (shape.width, "width")] {
        out.extend_from_slice(&to_u32(d, field)?.to_le_bytes());
    }
    for s in volume.spacing() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.push(u8::from(labels.is_some()));
    for v in volume.intensities() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(labels) = labels {
        out.extend_from_slice(labels);
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Volume> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format { field: "magic", detail: format!("expected RVOL, found {magic:?}") });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format { field: "version", detail: format!("unsupported version {version}") });
    }
    let depth = dim(r.u32("depth")?, "depth")?;
    let height = dim(r.u32("height")?, "height")?;
    let width = dim(r.u32("width")?, "width")?;
    let mut spacing = [0f32; 3];
    for s in &mut spacing {
        *s = r.f32("spacing")?;
        if !(*s > 0.0 && s.is_finite()) {
            return Err(Error::Format { field: "spacing", detail: format!("component {s} is not positive") });
        }
    }
    let has_labels = match r.u8("labels_present")? {
        0 => false,
        1 => true,
        other => return Err(Error::Format { field: "labels_present", detail: format!("flag {other} is not 0 or 1") }),
    };
    let shape = VolumeShape::new(depth, height, width);
    let voxels = depth
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or(Error::Format { field: "depth", detail: "grid size overflows".into() })?;
    let intensities = r.f32s(voxels, "intensities")?;
    let labels = if has_labels {
        let raw = r.take(voxels, "labels")?;
        if let Some(bad) = raw.iter().find(|&&l| l > dsseg_core::volume::MAX_LABEL) {
            return Err(Error::Format { field: "labels", detail: format!("class id {bad} outside {{0,1,2}}") });
        }
        Some(raw.to_vec())
    } else {
        None
    };
    if r.remaining() != 0 {
        return Err(Error::Format { field: "payload", detail: format!("{} trailing bytes", r.remaining()) });
    }
    Ok(Volume::new(shape, intensities, labels, spacing)?)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(Error::io(path))?)
}

pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(volume)?).map_err(Error::io(path))
}
