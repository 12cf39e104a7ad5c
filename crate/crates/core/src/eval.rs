//! Slice-wise volume prediction and Dice per case.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Shape, Tensor};
use crate::error::{bail, Result};
use crate::network::Network;
use crate::sampling::extract_stack;
use crate::volume::{Volume, VolumeShape};

/// Inference always samples dense stacks.
pub const INFERENCE_STRIDE: usize = 1;

/// A class-id grid `[z][y][x]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    pub shape: VolumeShape,
    pub data: Vec<u8>,
}

impl LabelVolume {
    pub fn slice(&self, z: usize) -> &[u8] {
        let len = self.shape.slice_len();
        &self.data[z * len..(z + 1) * len]
    }
}

/// Per-pixel argmax over the class channel of a `1×C×H×W` tensor. Ties go
/// to the lowest class index.
pub fn argmax_classes(logits: &Tensor) -> Vec<u8> {
    let s = logits.shape();
    let m = s.plane();
    let d = logits.data();
    let mut out = Vec::with_capacity(s.n * m);
    for n in 0..s.n {
        for p in 0..m {
            let mut best = 0;
            for c in 1..s.c {
                if d[(n * s.c + c) * m + p] > d[(n * s.c + best) * m + p] {
                    best = c;
                }
            }
            out.push(best as u8);
        }
    }
    out
}

/// Predicts every slice `i` from the dense stack `(i, T, 1)` and stacks the
/// 2D argmax maps back into a volume.
pub fn predict_volume(network: &Network, volume: &Volume, thickness: usize) -> Result<LabelVolume> {
    if network.config().thickness != thickness {
        bail!(Shape, "network takes {} slices, asked for {}", network.config().thickness, thickness);
    }
    let shape = volume.shape();
    let mut data = Vec::with_capacity(shape.voxels());
    for i in 1..=shape.depth {
        data.extend(predict_slice(network, volume, i, thickness)?);
    }
    Ok(LabelVolume { shape, data })
}

/// Prediction for the 1-based slice `center` alone.
pub fn predict_slice(network: &Network, volume: &Volume, center: usize, thickness: usize) -> Result<Vec<u8>> {
    let stack = extract_stack(volume, center, thickness, INFERENCE_STRIDE)?;
    let input = Tensor::new(
        Shape::new(1, thickness, stack.height, stack.width),
        stack.data.iter().map(|&v| f64::from(v)).collect(),
    )?;
    Ok(argmax_classes(&network.infer(&input)?))
}

/// `2|P∩G| / (|P| + |G|)` for voxels of `class`. Both masks empty gives 1,
/// exactly one empty gives 0.
pub fn dice_per_volume(pred: &LabelVolume, gt: &LabelVolume, class: u8) -> Result<f64> {
    if pred.shape != gt.shape {
        bail!(Shape, "prediction {:?} and ground truth {:?} differ", pred.shape, gt.shape);
    }
    let (mut inter, mut p, mut g) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        let (pa, gb) = (a == class, b == class);
        p += usize::from(pa);
        g += usize::from(gb);
        inter += usize::from(pa && gb);
    }
    Ok(match (p, g) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ => 2.0 * inter as f64 / (p + g) as f64,
    })
}

/// Mean and population standard deviation of per-volume scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiceSummary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub fn dice_per_case(scores: &[f64]) -> Result<DiceSummary> {
    if scores.is_empty() {
        bail!(Data, "dice per case needs at least one volume");
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Ok(DiceSummary { mean, std: libm::sqrt(var), count: scores.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub prediction: LabelVolume,
    /// Dice for classes `1..C`, when ground truth was available.
    pub dice: Option<Vec<f64>>,
    pub checkpoint: String,
    pub thickness: usize,
    pub stride: usize,
}

/// Predicts `volume` and scores it against its labels, if any.
pub fn segment(network: &Network, volume: &Volume, checkpoint: &str) -> Result<SegmentationResult> {
    let thickness = network.config().thickness;
    let prediction = predict_volume(network, volume, thickness)?;
    let dice = match volume.label_volume() {
        Some(gt) => Some(
            (1..network.config().num_classes)
                .map(|c| dice_per_volume(&prediction, &gt, c as u8))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(SegmentationResult {
        prediction,
        dice,
        checkpoint: String::from(checkpoint),
        thickness,
        stride: INFERENCE_STRIDE,
    })
}
