//! RNET network checkpoints.
//!
//! Little-endian layout:
//!
//! | bytes   | field                                                    |
//! |---------|----------------------------------------------------------|
//! | 4       | magic `RNET`                                             |
//! | 4       | version, `u32` = 1                                       |
//! | 4×4     | `depth`, `base_channels`, `thickness`, `num_classes` u32 |
//! | 1       | variant, `u8`: 0 standard, 1 depthwise-separable         |
//! | 4×3     | `growth`, `channel_cap`, `kernel_size` u32               |
//! | 4×2     | preprocessing clip window `lo`, `hi` as `f32`            |
//! | 4       | tensor count, `u32`                                      |
//! | per tensor: 4×4 shape `N, C, H, W` as u32, then `N·C·H·W` `f32` |
//!
//! Tensors appear in network build order (encoder stages, decoder steps from
//! the deepest, classifier). Weights are stored in single precision, so a
//! loaded network matches the saved one to `f32` rounding.

use std::fs;
use std::path::Path;

use dsseg_core::{ConvVariant, Network, NetworkConfig, Shape, Tensor};

use crate::bytes::{dim, to_u32, Reader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RNET";
pub const VERSION: u32 = 1;

/// A network plus the intensity window its inputs were preprocessed with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub clip: (f32, f32),
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let cfg = ckpt.network.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (v, field) in [
        (cfg.depth, "depth"),
        (cfg.base_channels, "base_channels"),
        (cfg.thickness, "thickness"),
        (cfg.num_classes, "num_classes"),
    ] {
        out.extend_from_slice(&to_u32(v, field)?.to_le_bytes());
    }
    out.push(match cfg.variant {
        ConvVariant::Standard => 0,
        ConvVariant::DepthwiseSeparable => 1,
    });
    for (v, field) in [(cfg.growth, "growth"), (cfg.channel_cap, "channel_cap"), (cfg.kernel_size, "kernel_size")] {
        out.extend_from_slice(&to_u32(v, field)?.to_le_bytes());
    }
    out.extend_from_slice(&ckpt.clip.0.to_le_bytes());
    out.extend_from_slice(&ckpt.clip.1.to_le_bytes());
    let params = ckpt.network.params();
    out.extend_from_slice(&to_u32(params.len(), "tensor_count")?.to_le_bytes());
    for p in params {
        let s = p.shape();
        for d in [s.n, s.c, s.h, s.w] {
            out.extend_from_slice(&to_u32(d, "tensor_shape")?.to_le_bytes());
        }
        for &v in p.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format { field: "magic", detail: format!("expected RNET, found {magic:?}") });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format { field: "version", detail: format!("unsupported version {version}") });
    }
    let depth = r.u32("depth")? as usize;
    let base_channels = r.u32("base_channels")? as usize;
    let thickness = r.u32("thickness")? as usize;
    let num_classes = r.u32("num_classes")? as usize;
    let variant = match r.u8("variant")? {
        0 => ConvVariant::Standard,
        1 => ConvVariant::DepthwiseSeparable,
        other => return Err(Error::Format { field: "variant", detail: format!("unknown variant {other}") }),
    };
    let growth = r.u32("growth")? as usize;
    let channel_cap = r.u32("channel_cap")? as usize;
    let kernel_size = r.u32("kernel_size")? as usize;
    let config =
        NetworkConfig { depth, base_channels, thickness, num_classes, variant, growth, channel_cap, kernel_size };
    config.validate()?;
    let clip = (r.f32("clip")?, r.f32("clip")?);
    if !(clip.0 < clip.1) {
        return Err(Error::Format { field: "clip", detail: format!("window {clip:?} is empty") });
    }
    let count = r.u32("tensor_count")? as usize;
    let mut params = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut d = [0usize; 4];
        for v in &mut d {
            *v = dim(r.u32("tensor_shape")?, "tensor_shape")?;
        }
        let shape = Shape::new(d[0], d[1], d[2], d[3]);
        let data = r.f32s(shape.len(), "tensor_data")?.into_iter().map(f64::from).collect();
        params.push(Tensor::new(shape, data)?);
    }
    if r.remaining() != 0 {
        return Err(Error::Format { field: "payload", detail: format!("{} trailing bytes", r.remaining()) });
    }
    let network = Network::from_params(&config, params)
        .map_err(|e| Error::Format { field: "tensor_shape", detail: e.to_string() })?;
    Ok(Checkpoint { network, clip })
}

pub fn save(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(ckpt)?).map_err(Error::io(path))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(Error::io(path))?)
}
