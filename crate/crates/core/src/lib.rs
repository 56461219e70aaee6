//! Memory-budgeted compressed replay for class-incremental learning.
//!
//! Samples arrive one task at a time as pre-encoded tensors. Each sample is
//! offered to a class-balanced [`memory::EpisodicMemory`], compressed on
//! acceptance by one of the [`codec`] compressors, and accounted for byte by
//! byte with the [`codec::StorageModel`]. After the stream ends the memory is
//! decompressed and a fresh [`head::Head`] is trained on it from scratch.
//! The [`harness`] module wires this into reproducible budget and
//! compression sweeps.

pub mod codec;
pub mod error;
pub mod harness;
pub mod head;
pub mod memory;
pub mod rng;
pub mod tensor_io;
pub(crate) mod wire;

pub use error::{Error, Result};
pub use tensor_io::{DType, Dataset, TensorData, TensorSample};
