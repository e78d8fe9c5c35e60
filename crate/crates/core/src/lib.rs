#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod metrics;
pub mod rng;
pub mod detection;
pub mod spatiotemporal;
pub mod stream;
pub mod temporal;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::SeedRng;
pub use tensor::{ConvSpec, Tensor};
