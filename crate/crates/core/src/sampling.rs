//! Dense-sparse slice sampling.
//!
//! A stack of thickness `T` around center slice `i` with stride `s` takes the
//! slices `i + k·s` for `k = -(T/2) ..= T/2`. At `T = 3` this is
//! `{S(i-s), S(i), S(i+s)}`. Indices past either end of the volume are
//! clamped, which repeats the boundary slice. `s = 1` gives densely adjacent
//! slices, `s > 1` sparsely adjacent ones.
//!
//! Slice indices in this module's public API are 1-based, `1 ..= |V|`.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::volume::Volume;

/// The `T` 1-based slice indices of a stack, in through-plane order.
pub fn sample_indices(center: usize, thickness: usize, stride: usize, depth: usize) -> Result<Vec<usize>> {
    if thickness.is_multiple_of(2) {
        bail!(Argument, "thickness must be odd, got {}", thickness);
    }
    if stride == 0 {
        bail!(Argument, "stride must be >= 1");
    }
    if center == 0 || center > depth {
        bail!(Argument, "center slice {} outside 1..={}", center, depth);
    }
    let half = (thickness / 2) as i64;
    let (i, s, d) = (center as i64, stride as i64, depth as i64);
    Ok((-half..=half).map(|k| (i + k * s).clamp(1, d) as usize).collect())
}

/// A `T`-channel 2D input around one center slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    /// `T × H × W`, channel `k` is slice `indices[k]`.
    pub data: Vec<f32>,
    pub thickness: usize,
    pub height: usize,
    pub width: usize,
    /// 1-based.
    pub center: usize,
    pub stride: usize,
    pub indices: Vec<usize>,
    /// Labels of the center slice, when the volume has them.
    pub label: Option<Vec<u8>>,
}

pub fn extract_stack(volume: &Volume, center: usize, thickness: usize, stride: usize) -> Result<SliceStack> {
    let indices = sample_indices(center, thickness, stride, volume.depth())?;
    let shape = volume.shape();
    let mut data = Vec::with_capacity(thickness * shape.slice_len());
    for &idx in &indices {
        data.extend_from_slice(volume.slice(idx - 1));
    }
    Ok(SliceStack {
        data,
        thickness,
        height: shape.height,
        width: shape.width,
        center,
        stride,
        indices,
        label: volume.label_slice(center - 1).map(<[u8]>::to_vec),
    })
}
