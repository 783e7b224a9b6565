//! Synthetic bird imagery, distortions, learners and hierarchical classification.

// Range checks are written as `!(x >= lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distort;
pub mod error;
pub mod flocksynth;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod taxonomy;

pub use error::{Error, Result};
