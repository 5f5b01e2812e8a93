//! Interpretable causality neural ODEs for anomaly detection, anomaly-type
//! classification and root-cause localization in ODE-governed systems.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the experiment harness.

pub mod error;
pub mod analysis;
pub mod anomaly;
pub mod model;
pub mod ode;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tape64 = tensor::Tape<f64>;
pub type Trajectory64 = ode::Trajectory<f64>;
pub type SystemSpec64 = ode::SystemSpec<f64>;
