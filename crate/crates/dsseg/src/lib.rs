//! I/O side of the dense-sparse segmentation pipeline: the RVOL volume and
//! RNET checkpoint formats, JSON configuration files and the `dsseg`
//! command line. The algorithms live in [`dsseg_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bytes;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod rvol;

pub use dsseg_core as core;
pub use error::{Error, Result};
