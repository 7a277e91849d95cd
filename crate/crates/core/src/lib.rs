//! Per-video neural representation codec with scale-wise recursive
//! parameter sharing.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). Aliases
//! below fix the precision for common use.

pub mod checkpoint;
pub mod codec;
pub mod kv;
pub mod media;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Graph32 = tensor::Graph<f32>;
pub type Graph64 = tensor::Graph<f64>;
pub type ParameterStore32 = model::ParameterStore<f32>;
pub type ParameterStore64 = model::ParameterStore<f64>;
pub type OptimizerState32 = train::OptimizerState<f32>;
pub type OptimizerState64 = train::OptimizerState<f64>;
