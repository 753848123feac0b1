//! Minimal reverse-mode differentiable tensors.
//!
//! Everything needed by the fingerprint encoder and the U-Net hypernetwork:
//! a [`Tape`] recording operations on [`Tensor`] values, a
//! [`ParameterStore`] holding named trainable tensors with Adam state, a
//! radix-2 [`fft`] used for circular convolution, and a small binary
//! checkpoint format (see [`serialize`]).

pub mod error;
pub mod fft;
pub mod init;
pub mod ops;
pub mod optim;
pub mod serialize;
pub mod store;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use optim::{adam_step, AdamConfig};
pub use serialize::{deserialize_params, serialize_params};
pub use store::{Parameter, ParameterStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
