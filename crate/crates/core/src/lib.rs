#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Importance-weighted gradient descent on homogeneous predictors: risks,
//! max-margin oracles, training instrumentation and margin-based bounds.

pub mod bounds;
pub mod data;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod loss;
pub mod predictors;
pub mod risk;
pub mod trainer;

pub use data::{Dataset, WeightVector};
pub use error::{LabError, Result};
pub use loss::LossKind;
