//! Dense-sparse 2.5D volumetric segmentation, without `std`.
//!
//! The crate covers the pure parts of the pipeline:
//!
//! - [`volume`] and [`phantom`]: in-memory volumes, clip/z-score preprocessing
//!   and a synthetic organ/lesion phantom generator.
//! - [`sampling`]: extraction of `T`-slice stacks around a center slice with a
//!   through-plane stride, repeating edge slices.
//! - [`autodiff`]: an `N×C×H×W` tensor type, a reverse-mode tape and the
//!   standard, depthwise and pointwise convolutions.
//! - [`network`]: a U-Net style encoder-decoder in standard and
//!   depthwise-separable variants.
//! - [`training`]: cross-entropy and soft Dice losses, SGD, the two-stage
//!   dense-sparse / dense schedule and the training loop.
//! - [`eval`]: slice-by-slice volume prediction and Dice per case.
//!
//! File formats, configuration files and the command line live in the `dsseg`
//! crate.
#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod network;
pub mod phantom;
pub mod rng;
pub mod sampling;
pub mod training;
pub mod volume;

pub use autodiff::{conv2d_forward, param_count, ConvGeometry, Kernel, KernelKind, Shape, Tape, Tensor, Var};
pub use error::{Error, Result};
pub use eval::{dice_per_case, dice_per_volume, predict_volume, DiceSummary, LabelVolume, SegmentationResult};
pub use network::{ConvVariant, Network, NetworkConfig};
pub use phantom::{generate_phantom, PhantomSpec};
pub use sampling::{extract_stack, sample_indices, SliceStack};
pub use training::{
    choose_stride, combined_loss, cross_entropy, dice_loss, train, train_with, DsdSchedule, EpochRecord, LossWeights,
    MetricsLog, Stage, TrainConfig, TrainOutput,
};
pub use volume::{preprocess, Volume, VolumeShape};
