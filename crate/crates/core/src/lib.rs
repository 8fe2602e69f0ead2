//! Neural-network building blocks, training, data preparation and an
//! analytical cost model for five-class ECG beat classification.
//!
//! Everything is implemented on a small dense [`Tensor`] type with `f64`
//! elements and seeded [`RngStream`]s, so every run is reproducible.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod data;
pub mod dsl;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod rbm;
pub mod recurrent;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Activation, RngStream, Tensor};
