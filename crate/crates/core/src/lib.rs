//! Directed-evolution sparsification of small neural networks, followed by
//! density-aware quantization of the surviving weights and entropy-coded
//! packing into a compact container.
//!
//! Pipeline: train a teacher ([`nn`]), evolve a sparse student against it
//! ([`de`]), quantize each parameter tensor with its own level table
//! ([`quantizer`]), and pack masks, tables and Huffman-coded codes
//! ([`codec`]). [`data`] provides IDX ingestion and seeded synthetic sets.

mod error;
mod io;
pub mod codec;
pub mod data;
pub mod de;
pub mod nn;
pub mod par;
pub mod quantizer;
pub mod rng;
pub mod sparsity;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
