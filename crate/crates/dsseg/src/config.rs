//! JSON configuration files.
//!
//! Every file carries `"schema_version": 1`. Sections not present take
//! their defaults, and unknown keys are rejected.
//!
//! Run configuration (`params`, `train`):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "network":    { "depth": 3, "base_channels": 8, "thickness": 3, "num_classes": 3,
//!                   "variant": "depthwise-separable", "growth": 2, "channel_cap": 256,
//!                   "kernel_size": 3 },
//!   "training":   { "batch_size": 4, "iterations_per_epoch": 8, "learning_rate": 0.01,
//!                   "momentum": 0.99, "nesterov": true, "weight_decay": 3e-5,
//!                   "lr_decay_exponent": 0.9, "grad_clip": 12.0,
//!                   "schedule": { "stage1_epochs": 40, "stage2_epochs": 60,
//!                                 "stage1_strides": [1, 2], "stage1_weights": [] },
//!                   "loss": { "cross_entropy": 1.0, "dice": 1.0, "dice_smooth": 1e-5 },
//!                   "seed": 0, "foreground_oversample": 0.33,
//!                   "validation_volumes": 1, "validate_every": 10 },
//!   "preprocess": { "clip": [-200.0, 300.0] }
//! }
//! ```
//!
//! Phantom specification (`phantom`):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "phantom": { "shape": [16, 64, 64], "organ_center": [7.5, 31.5, 31.5],
//!                "organ_radii": [6.5, 20.0, 24.0], "lesion_count": 3,
//!                "lesion_radius": [3, 5], "means": [-60.0, 80.0, 20.0],
//!                "noise_std": 15.0, "spacing": [2.5, 0.8, 0.8], "seed": 0 }
//! }
//! ```

use std::fs;
use std::path::Path;

use dsseg_core::{NetworkConfig, PhantomSpec, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub clip: (f32, f32),
}

impl Default for Preprocess {
    fn default() -> Self {
        Self { clip: (-200.0, 300.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub preprocess: Preprocess,
}

impl RunConfigFile {
    /// The training config with the network section folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { network: self.network.clone(), ..self.training.clone() }
    }
}

impl Default for RunConfigFile {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            network: NetworkConfig::default(),
            training: TrainConfig::default(),
            preprocess: Preprocess::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomFile {
    pub schema_version: u32,
    #[serde(default)]
    pub phantom: PhantomSpec,
}

trait Versioned {
    fn schema_version(&self) -> u32;
}

impl Versioned for RunConfigFile {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
}

impl Versioned for PhantomFile {
    fn schema_version(&self) -> u32 {
        self.schema_version
    }
}

fn parse<T: DeserializeOwned + Versioned>(text: &str, path: &Path) -> Result<T> {
    let value: T = serde_json::from_str(text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    if value.schema_version() != SCHEMA_VERSION {
        return Err(Error::Schema { found: value.schema_version(), expected: SCHEMA_VERSION });
    }
    Ok(value)
}

pub fn parse_run_config(text: &str) -> Result<RunConfigFile> {
    parse(text, Path::new("<inline>"))
}

pub fn parse_phantom(text: &str) -> Result<PhantomFile> {
    parse(text, Path::new("<inline>"))
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfigFile> {
    let path = path.as_ref();
    parse(&fs::read_to_string(path).map_err(Error::io(path))?, path)
}

pub fn load_phantom(path: impl AsRef<Path>) -> Result<PhantomFile> {
    let path = path.as_ref();
    parse(&fs::read_to_string(path).map_err(Error::io(path))?, path)
}
