pub mod data;
pub mod engines;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod stability;

pub use error::{Error, Result};
