//! Cosparse analysis operator learning and multi-focus image fusion.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fuse;
pub mod imageio;
pub mod learn;
pub mod linalg;
pub mod metrics;
pub mod patch;

pub use error::{Error, Result};
pub use fuse::{fuse, FusionConfig, FusionResult};
pub use imageio::ImageBuffer;
pub use learn::{cosparse_code, train, AnalysisOperator, TrainConfig, TrainReport};
pub use linalg::Matrix;
pub use patch::{Patch, PatchGrid};
