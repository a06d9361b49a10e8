//! Early time series forecasting with meta-learning.
//!
//! A shared convolutional encoder with per-dataset linear heads is trained
//! across auxiliary datasets with serialized Reptile and adapted to a
//! data-scarce target with FGSM-augmented samples. The [`bench`] module
//! implements the leave-one-out MASE protocol used to compare it against
//! baselines and ablations.

pub mod augment;
pub mod baselines;
pub mod bench;
pub mod error;
pub mod model;
pub mod numerics;
pub mod trainer;
pub mod tsf;

pub use error::{Error, Result};
