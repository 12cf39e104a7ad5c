//! Segmentation losses over `N × C × H × W` logits and `N × H × W` class ids.

use crate::autodiff::{Op, Shape, Tape, Tensor, Var};
use crate::error::{bail, Error, Result};

/// Weights of the cross-entropy and soft Dice terms, and the Dice smoothing
/// constant.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossWeights {
    pub cross_entropy: f64,
    pub dice: f64,
    pub dice_smooth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { cross_entropy: 1.0, dice: 1.0, dice_smooth: 1e-5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.cross_entropy >= 0.0) || !(self.dice >= 0.0) {
            bail!(Config, "loss weights must be >= 0");
        }
        if self.cross_entropy == 0.0 && self.dice == 0.0 {
            bail!(Config, "at least one loss weight must be positive");
        }
        if !(self.dice_smooth > 0.0) {
            bail!(Config, "dice smoothing must be positive");
        }
        Ok(())
    }
}

fn check_target(shape: Shape, target: &[u8]) -> Result<()> {
    if target.len() != shape.n * shape.plane() {
        bail!(Shape, "target has {} labels, logits {:?} need {}", target.len(), shape, shape.n * shape.plane());
    }
    if let Some(&bad) = target.iter().find(|&&t| usize::from(t) >= shape.c) {
        return Err(Error::Label { class: bad, classes: shape.c });
    }
    Ok(())
}

/// Channel softmax plus log-sum-exp per pixel.
fn softmax_lse(logits: &Tensor) -> (Tensor, alloc::vec::Vec<f64>) {
    let s = logits.shape();
    let m = s.plane();
    let z = logits.data();
    let mut probs = Tensor::zeros(s);
    let mut lse = alloc::vec![0.0; s.n * m];
    let pd = probs.data_mut();
    for n in 0..s.n {
        let base = n * s.c * m;
        for p in 0..m {
            let max = (0..s.c).map(|c| z[base + c * m + p]).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = (0..s.c).map(|c| libm::exp(z[base + c * m + p] - max)).sum();
            let l = max + libm::log(total);
            for c in 0..s.c {
                pd[base + c * m + p] = libm::exp(z[base + c * m + p] - l);
            }
            lse[n * m + p] = l;
        }
    }
    (probs, lse)
}

/// Mean over pixels of `−log softmax(z)[true class]`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, target: &[u8]) -> Result<Var> {
    let z = tape.value(logits);
    let s = z.shape();
    check_target(s, target)?;
    let (probs, lse) = softmax_lse(z);
    let m = s.plane();
    let mut total = 0.0;
    for n in 0..s.n {
        for p in 0..m {
            let t = usize::from(target[n * m + p]);
            total += lse[n * m + p] - z.data()[(n * s.c + t) * m + p];
        }
    }
    let value = total / (s.n * m) as f64;
    let op = Op::CrossEntropy { logits, target: target.to_vec(), probs };
    Ok(tape.record_loss(value, op, logits))
}

pub(crate) fn cross_entropy_backward(probs: &Tensor, target: &[u8], gout: f64, gx: &mut [f64]) {
    let s = probs.shape();
    let m = s.plane();
    let scale = gout / (s.n * m) as f64;
    for n in 0..s.n {
        for c in 0..s.c {
            for p in 0..m {
                let i = (n * s.c + c) * m + p;
                let onehot = if usize::from(target[n * m + p]) == c { 1.0 } else { 0.0 };
                gx[i] += scale * (probs.data()[i] - onehot);
            }
        }
    }
}

/// Per foreground class `(Σ p·g, Σ p, Σ g)` over the whole batch.
fn dice_terms(probs: &Tensor, target: &[u8]) -> alloc::vec::Vec<(f64, f64, f64)> {
    let s = probs.shape();
    let m = s.plane();
    (1..s.c)
        .map(|c| {
            let (mut inter, mut psum, mut gsum) = (0.0, 0.0, 0.0);
            for n in 0..s.n {
                let plane = &probs.data()[(n * s.c + c) * m..(n * s.c + c + 1) * m];
                for (p, &t) in plane.iter().zip(&target[n * m..(n + 1) * m]) {
                    psum += p;
                    if usize::from(t) == c {
                        inter += p;
                        gsum += 1.0;
                    }
                }
            }
            (inter, psum, gsum)
        })
        .collect()
}

/// Soft Dice loss over the foreground classes `1..C`:
/// `1 − mean_c (2·Σ p_c g_c + ε) / (Σ p_c + Σ g_c + ε)`, with sums over the
/// whole batch.
pub fn dice_loss(tape: &mut Tape, logits: Var, target: &[u8], smooth: f64) -> Result<Var> {
    let s = tape.value(logits).shape();
    check_target(s, target)?;
    if s.c < 2 {
        bail!(Shape, "dice loss needs at least one foreground class");
    }
    let (probs, _) = softmax_lse(tape.value(logits));
    let terms = dice_terms(&probs, target);
    let mean = terms.iter().map(|(i, p, g)| (2.0 * i + smooth) / (p + g + smooth)).sum::<f64>() / terms.len() as f64;
    let op = Op::Dice { logits, target: target.to_vec(), probs, smooth };
    Ok(tape.record_loss(1.0 - mean, op, logits))
}

pub(crate) fn dice_backward(probs: &Tensor, target: &[u8], smooth: f64, gout: f64, gx: &mut [f64]) {
    let s = probs.shape();
    let m = s.plane();
    let terms = dice_terms(probs, target);
    let classes = terms.len() as f64;
    // d loss / d p, then through the softmax Jacobian.
    let mut dp = alloc::vec![0.0; s.len()];
    for (k, &(inter, psum, gsum)) in terms.iter().enumerate() {
        let c = k + 1;
        let denom = psum + gsum + smooth;
        let ratio = (2.0 * inter + smooth) / (denom * denom);
        for n in 0..s.n {
            for p in 0..m {
                let g = if usize::from(target[n * m + p]) == c { 1.0 } else { 0.0 };
                dp[(n * s.c + c) * m + p] = -gout / classes * (2.0 * g / denom - ratio);
            }
        }
    }
    let pd = probs.data();
    for n in 0..s.n {
        for p in 0..m {
            let dot: f64 = (0..s.c).map(|c| pd[(n * s.c + c) * m + p] * dp[(n * s.c + c) * m + p]).sum();
            for c in 0..s.c {
                let i = (n * s.c + c) * m + p;
                gx[i] += pd[i] * (dp[i] - dot);
            }
        }
    }
}

/// `w_ce · cross_entropy + w_dice · dice_loss`. A zero-weighted term is not
/// evaluated, so a single active term is reproduced exactly.
pub fn combined_loss(tape: &mut Tape, logits: Var, target: &[u8], weights: &LossWeights) -> Result<Var> {
    weights.validate()?;
    let ce = (weights.cross_entropy > 0.0)
        .then(|| cross_entropy(tape, logits, target).map(|v| scaled(tape, v, weights.cross_entropy)))
        .transpose()?;
    let dice = (weights.dice > 0.0)
        .then(|| dice_loss(tape, logits, target, weights.dice_smooth).map(|v| scaled(tape, v, weights.dice)))
        .transpose()?;
    match (ce, dice) {
        (Some(a), Some(b)) => tape.add(a, b),
        (Some(v), None) | (None, Some(v)) => Ok(v),
        (None, None) => unreachable!("validated above"),
    }
}

fn scaled(tape: &mut Tape, v: Var, w: f64) -> Var {
    if w == 1.0 {
        v
    } else {
        tape.scale(v, w)
    }
}
