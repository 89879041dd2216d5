//! Component-wise gradient boosting for distributional regression.
//!
//! Models every parameter of a response distribution (location, scale,
//! shape) with its own additive predictor, fitted by cyclic gradient
//! boosting with intrinsic variable selection. The crate covers the model
//! families and base-learners, the boosting loop itself, multi-dimensional
//! early stopping via subsampled cross-validation, and downstream
//! inference helpers (prediction intervals, partial effects, regional
//! aggregation).

pub mod boost;
pub mod data;
pub mod error;
pub mod family;
pub mod infer;
pub mod learner;
pub mod model_io;
pub mod sim;
pub mod tune;

pub use error::{Error, Result};
