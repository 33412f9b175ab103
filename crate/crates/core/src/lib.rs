//! Coarse-grain clustering (CGC) of gridded 4-way tensors across wavelet scales,
//! and mutual-information ensemble reduction (MIER) of the resulting clusterings.
//!
//! The pipeline runs in three layers:
//!
//! - [`tensor`], [`wavelet`], [`clustering`], [`info`]: numerical building blocks.
//! - [`cgc`] and [`mier`]: one clustering per resolution point, then the reduced ensemble.
//! - [`synth`], [`io`], [`pipeline`], [`report`]: data generation, file formats and sweeps.

pub mod cgc;
pub mod clustering;
pub mod error;
pub mod info;
pub mod io;
pub mod mier;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod tensor;
pub mod wavelet;

pub use error::{Error, Result};
