//! Dense feed-forward regression network trained with mean absolute error.
//!
//! Hidden layers are `dense -> ReLU -> batch norm -> dropout`; the output layer
//! is a linear dense layer of width 2. Everything is written against ndarray so
//! the same code runs in `f32` (training and inference) and `f64` (gradient
//! checks).

mod adam;
mod fit;
mod network;
mod spec;

pub use adam::{AdamConfig, AdamState};
pub use fit::{fit, fit_split, EpochLoss, FitConfig, Fitted};
pub use network::{
    mae, BatchNorm, Dense, Gradients, LayerGradients, LayerParameters, Mode, Network, TrainStep,
};
pub use spec::{Activation, Loss, NetworkSpec, DEFAULT_DROPOUT, DEFAULT_HIDDEN};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};

/// Floating-point element type usable by the network.
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Sum
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self;
}

impl Real for f32 {
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}
