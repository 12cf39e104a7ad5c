use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::error::{bail, Result};

/// SGD with (optionally Nesterov) momentum and L2 weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, nesterov: bool, weight_decay: f64) -> Self {
        Self { momentum, nesterov, weight_decay, velocity: Vec::new() }
    }

    /// One update with learning rate `lr`; `grads[i]` belongs to `params[i]`.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            bail!(Argument, "{} gradients for {} parameters", grads.len(), params.len());
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| alloc::vec![0.0; p.shape().len()]).collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            if g.len() != v.len() {
                bail!(Shape, "gradient of length {} for parameter of length {}", g.len(), v.len());
            }
            for ((w, &gi), vi) in p.data_mut().iter_mut().zip(g).zip(v.iter_mut()) {
                let d = gi + self.weight_decay * *w;
                *vi = self.momentum * *vi + d;
                let update = if self.nesterov { d + self.momentum * *vi } else { *vi };
                *w -= lr * update;
            }
        }
        Ok(())
    }
}

/// `lr0 · (1 − epoch/total)^exponent`.
pub fn poly_lr(initial: f64, epoch: usize, total: usize, exponent: f64) -> f64 {
    if total == 0 {
        return initial;
    }
    initial * libm::pow(1.0 - epoch as f64 / total as f64, exponent)
}

/// Rescales `grads` in place to global L2 norm at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = libm::sqrt(grads.iter().flatten().map(|g| g * g).sum::<f64>());
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}
