//! Two-stage dense-sparse / dense stride schedule.
//!
//! Stage 1 (`DS`) draws the stride of each sampled stack at random from a
//! stride set, mixing densely and sparsely adjacent slices. Stage 2 (`D`)
//! continues training the same weights with stride 1 only.

use alloc::vec::Vec;
use core::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{bail, Error, Result};

pub const DENSE_STRIDE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    DenseSparse,
    Dense,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::DenseSparse => "DS",
            Stage::Dense => "D",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DsdSchedule {
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage1_strides: Vec<usize>,
    /// Relative draw weights for `stage1_strides`; empty means uniform.
    pub stage1_weights: Vec<f64>,
}

impl Default for DsdSchedule {
    fn default() -> Self {
        Self { stage1_epochs: 400, stage2_epochs: 600, stage1_strides: alloc::vec![1, 2], stage1_weights: Vec::new() }
    }
}

impl DsdSchedule {
    pub fn new(stage1_epochs: usize, stage2_epochs: usize) -> Self {
        Self { stage1_epochs, stage2_epochs, ..Self::default() }
    }

    pub fn total_epochs(&self) -> usize {
        self.stage1_epochs + self.stage2_epochs
    }

    pub fn validate(&self) -> Result<()> {
        if self.stage1_strides.is_empty() {
            bail!(Config, "stage-1 stride set must be nonempty");
        }
        if self.stage1_strides.contains(&0) {
            bail!(Config, "strides must be >= 1");
        }
        if !self.stage1_weights.is_empty() {
            if self.stage1_weights.len() != self.stage1_strides.len() {
                bail!(Config, "{} stride weights for {} strides", self.stage1_weights.len(), self.stage1_strides.len());
            }
            if self.stage1_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
                || !(self.stage1_weights.iter().sum::<f64>() > 0.0)
            {
                bail!(Config, "stride weights must be finite, >= 0 and not all zero");
            }
        }
        Ok(())
    }

    pub fn stage(&self, epoch: usize) -> Result<Stage> {
        if epoch >= self.total_epochs() {
            return Err(Error::Schedule { epoch, total: self.total_epochs() });
        }
        Ok(if epoch < self.stage1_epochs { Stage::DenseSparse } else { Stage::Dense })
    }

    /// Probability of each stage-1 stride, in `stage1_strides` order.
    pub fn stage1_probabilities(&self) -> Vec<f64> {
        if self.stage1_weights.is_empty() {
            let p = 1.0 / self.stage1_strides.len() as f64;
            alloc::vec![p; self.stage1_strides.len()]
        } else {
            let total: f64 = self.stage1_weights.iter().sum();
            self.stage1_weights.iter().map(|w| w / total).collect()
        }
    }
}

/// Stride for one sampled stack at `epoch`. Stage 2 always returns 1 and
/// consumes no randomness.
pub fn choose_stride<R: Rng + ?Sized>(epoch: usize, schedule: &DsdSchedule, rng: &mut R) -> Result<usize> {
    match schedule.stage(epoch)? {
        Stage::Dense => Ok(DENSE_STRIDE),
        Stage::DenseSparse => {
            schedule.validate()?;
            let strides = &schedule.stage1_strides;
            let k = if schedule.stage1_weights.is_empty() {
                rng.random_range(0..strides.len())
            } else {
                WeightedIndex::new(&schedule.stage1_weights)
                    .map_err(|e| Error::Config(alloc::format!("stride weights: {e}")))?
                    .sample(rng)
            };
            Ok(strides[k])
        }
    }
}
