//! Fixed-slot text recognition for horizontally aligned stickers.
//!
//! A column-wise recurrent (or temporal-convolution) encoder turns an
//! `H × W` grayscale image into an `F × W` latent matrix; a two-stage
//! convolutional projection maps that to an `M × N` matrix of per-slot class
//! probabilities. Everything is implemented directly on dense tensors with
//! hand-written backward passes.

pub mod adversarial;
pub mod datasets;
pub mod digitgen;
pub mod encoder;
pub mod error;
pub mod math;
pub mod model;
pub mod projection;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use math::{Precision, Real, Tensor};
pub use model::{GeoTrNet, ModelConfig, ModelParams, Prediction};

/// Serializes to compact JSON with object keys sorted.
pub fn to_sorted_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_value(value).expect("serializable value").to_string()
}
