//! In-memory volumes and intensity preprocessing.

use alloc::vec::Vec;

use crate::error::{bail, Result};

/// Grid extent `(depth, height, width)`; voxels are stored `[z][y][x]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VolumeShape {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl VolumeShape {
    pub const fn new(depth: usize, height: usize, width: usize) -> Self {
        Self { depth, height, width }
    }

    pub const fn voxels(&self) -> usize {
        self.depth * self.height * self.width
    }

    pub const fn slice_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.height + y) * self.width + x
    }
}

/// Largest valid class id: 0 background, 1 organ, 2 lesion.
pub const MAX_LABEL: u8 = 2;

/// A scalar volume with optional aligned labels and voxel spacing in mm,
/// ordered `(sz, sy, sx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    shape: VolumeShape,
    intensities: Vec<f32>,
    labels: Option<Vec<u8>>,
    spacing: [f32; 3],
}

impl Volume {
    pub fn new(shape: VolumeShape, intensities: Vec<f32>, labels: Option<Vec<u8>>, spacing: [f32; 3]) -> Result<Self> {
        if shape.depth == 0 || shape.height == 0 || shape.width == 0 {
            bail!(Volume, "every dimension must be at least 1, got {:?}", shape);
        }
        if intensities.len() != shape.voxels() {
            bail!(
                Volume,
                "{} intensities for a {}x{}x{} grid",
                intensities.len(),
                shape.depth,
                shape.height,
                shape.width
            );
        }
        if let Some(labels) = &labels {
            if labels.len() != shape.voxels() {
                bail!(Volume, "{} labels for {} voxels", labels.len(), shape.voxels());
            }
            if let Some(bad) = labels.iter().find(|&&l| l > MAX_LABEL) {
                bail!(Volume, "label value {} outside {{0,1,2}}", bad);
            }
        }
        if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            bail!(Volume, "spacing components must be positive, got {:?}", spacing);
        }
        Ok(Self { shape, intensities, labels, spacing })
    }

    /// Unit-spacing volume filled with `value`, without labels.
    pub fn filled(shape: VolumeShape, value: f32) -> Result<Self> {
        Self::new(shape, alloc::vec![value; shape.voxels()], None, [1.0; 3])
    }

    pub fn shape(&self) -> VolumeShape {
        self.shape
    }

    /// Number of axial slices, `|V|`.
    pub fn depth(&self) -> usize {
        self.shape.depth
    }

    pub fn intensities(&self) -> &[f32] {
        &self.intensities
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    /// Zero-based axial slice `z`.
    pub fn slice(&self, z: usize) -> &[f32] {
        let len = self.shape.slice_len();
        &self.intensities[z * len..(z + 1) * len]
    }

    pub fn label_slice(&self, z: usize) -> Option<&[u8]> {
        let len = self.shape.slice_len();
        self.labels.as_ref().map(|l| &l[z * len..(z + 1) * len])
    }

    pub fn label_volume(&self) -> Option<crate::eval::LabelVolume> {
        self.labels.clone().map(|data| crate::eval::LabelVolume { shape: self.shape, data })
    }

    pub fn with_labels(self, labels: Option<Vec<u8>>) -> Result<Self> {
        Self::new(self.shape, self.intensities, labels, self.spacing)
    }

    pub fn into_parts(self) -> (VolumeShape, Vec<f32>, Option<Vec<u8>>, [f32; 3]) {
        (self.shape, self.intensities, self.labels, self.spacing)
    }
}

/// Clips intensities to `[lo, hi]`, then z-scores them over the whole volume
/// (population standard deviation). A constant volume maps to all zeros.
/// Labels and spacing are carried over unchanged.
pub fn preprocess(volume: &Volume, clip: (f32, f32)) -> Result<Volume> {
    let (lo, hi) = clip;
    if !(lo < hi) {
        bail!(Argument, "clip window requires lo < hi, got ({}, {})", lo, hi);
    }
    let clipped: Vec<f64> = volume.intensities.iter().map(|&v| f64::from(v.clamp(lo, hi))).collect();
    let n = clipped.len() as f64;
    let mean = clipped.iter().sum::<f64>() / n;
    let var = clipped.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    let intensities = if std > 0.0 {
        clipped.iter().map(|v| ((v - mean) / std) as f32).collect()
    } else {
        alloc::vec![0.0; clipped.len()]
    };
    Ok(Volume { shape: volume.shape, intensities, labels: volume.labels.clone(), spacing: volume.spacing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_labels_and_spacing() {
        let shape = VolumeShape::new(1, 1, 2);
        assert!(Volume::new(shape, vec![0.0; 2], Some(vec![0, 3]), [1.0; 3]).is_err());
        assert!(Volume::new(shape, vec![0.0; 2], Some(vec![0]), [1.0; 3]).is_err());
        assert!(Volume::new(shape, vec![0.0; 2], None, [1.0, 0.0, 1.0]).is_err());
        assert!(Volume::new(VolumeShape::new(0, 1, 1), vec![], None, [1.0; 3]).is_err());
    }

    #[test]
    fn constant_volume_normalizes_to_zeros() {
        let v = Volume::filled(VolumeShape::new(2, 3, 4), 42.0).unwrap();
        let p = preprocess(&v, (-100.0, 100.0)).unwrap();
        assert!(p.intensities().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_voxel_window_maps_to_unit_scores() {
        let v = Volume::new(VolumeShape::new(1, 1, 2), vec![-200.0, 300.0], None, [1.0; 3]).unwrap();
        let p = preprocess(&v, (-200.0, 300.0)).unwrap();
        assert_eq!(p.intensities(), &[-1.0, 1.0]);
    }

    #[test]
    fn values_below_window_match_window_floor() {
        let a = Volume::new(VolumeShape::new(1, 1, 3), vec![-900.0, 0.0, 50.0], None, [1.0; 3]).unwrap();
        let b = Volume::new(VolumeShape::new(1, 1, 3), vec![-100.0, 0.0, 50.0], None, [1.0; 3]).unwrap();
        let pa = preprocess(&a, (-100.0, 100.0)).unwrap();
        let pb = preprocess(&b, (-100.0, 100.0)).unwrap();
        assert_eq!(pa.intensities(), pb.intensities());
    }

    #[test]
    fn labels_pass_through() {
        let v =
            Volume::new(VolumeShape::new(1, 1, 3), vec![1.0, 2.0, 3.0], Some(vec![0, 1, 2]), [2.0, 1.0, 1.0]).unwrap();
        let p = preprocess(&v, (0.0, 10.0)).unwrap();
        assert_eq!(p.labels(), v.labels());
        assert_eq!(p.spacing(), v.spacing());
    }

    #[test]
    fn inverted_window_is_rejected() {
        let v = Volume::filled(VolumeShape::new(1, 1, 1), 0.0).unwrap();
        assert!(preprocess(&v, (1.0, 1.0)).is_err());
    }
}
