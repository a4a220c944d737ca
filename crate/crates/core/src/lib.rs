//! Model-free feature screening with projection correlation, and two-step
//! knockoff selection with false-discovery-rate control.
//!
//! The crate is organized bottom-up:
//!
//! - [`kernel`]: squared sample projection covariance / correlation
//! - [`screening`]: ranking features, threshold and top-d active sets, a Pearson baseline
//! - [`knockoff`]: second-order Gaussian knockoff construction
//! - [`fdr`]: knockoff statistics, knockoff+ threshold and FDP estimates
//! - [`pipeline`]: the split / screen / knockoff procedure end to end
//! - [`models`]: simulation designs used in the experiments
//! - [`harness`]: replicated experiments, CSV ingestion and result files

pub mod error;
pub mod fdr;
pub mod harness;
pub mod kernel;
pub mod knockoff;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod screening;
pub mod sum;

pub use error::{Error, Result};
pub use matrix::SampleMatrix;
