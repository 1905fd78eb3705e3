pub mod baselines;
pub mod causal;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod model;
pub mod nn;
pub mod params;
pub mod preprocessing;
pub mod report;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use forecast::{AnyModel, Architecture, Forecaster, ModelKind};
pub use model::Variant;
pub use params::Parameters;
pub use scalar::Scalar;

/// Double-precision aliases used by the experiment pipeline.
pub type Tensor = tensor::Tensor<f64>;
pub type CgptModel = model::CgptModel<f64>;
pub type DLinear = baselines::DLinear<f64>;
pub type MlpBaseline = baselines::MlpBaseline<f64>;

pub type Tensor32 = tensor::Tensor<f32>;
pub type CgptModel32 = model::CgptModel<f32>;
pub type DLinear32 = baselines::DLinear<f32>;
pub type MlpBaseline32 = baselines::MlpBaseline<f32>;
