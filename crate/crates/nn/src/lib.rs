//! A minimal tensor engine: convolution, dense, concatenated branches,
//! leaky ReLU, dropout, softmax and average pooling, with exact backward
//! passes and an Adam trainer.
//!
//! Everything is generic over [`Scalar`]; training runs in `f64` and the
//! trained weights are usually cast to `f32` for inference.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub mod gradcheck;
mod layer;
pub mod loss;
mod network;
mod tensor;
pub mod train;

pub use layer::LayerSpec;
pub use network::{Cache, Gradients, Network};
pub use tensor::Tensor;
pub use train::{train, Dataset, EpochMetrics, LossKind, Targets, TrainConfig, TrainOutcome};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("cache does not match this network")]
    MissingCache,
    #[error("unknown tensor {0}")]
    UnknownTensor(String),
}

#[inline]
pub(crate) fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("finite f64 converts")
}
