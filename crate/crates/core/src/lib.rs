pub mod backend;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod features;
pub mod losses;
pub mod model;
pub mod scalar;
pub mod trainer;
pub mod tsm;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParamsF32 = model::ModelParams<f32>;
pub type ModelParamsF64 = model::ModelParams<f64>;
pub type EmbeddingSetF32 = backend::EmbeddingSet<f32>;
pub type EmbeddingSetF64 = backend::EmbeddingSet<f64>;
pub type PldaModelF64 = backend::PldaModel<f64>;
pub type TrainOutcomeF32 = trainer::TrainOutcome<f32>;
