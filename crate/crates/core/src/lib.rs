//! Masked-language modeling of G protein-coupled receptor sequences.
//!
//! The crate covers the full desk-scale pipeline: corpus ingestion and
//! motif-masked dataset construction, a from-scratch transformer encoder
//! with reverse-mode differentiation and attention capture, masked-residue
//! training and evaluation, attention/embedding interpretability reports,
//! a linear SVM baseline, and a bit-exact binary checkpoint container.

pub mod autograd;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod interpret;
pub mod model;
pub mod svm;
pub mod tensor;
pub mod tokenizer;
pub mod train;
pub mod tsne;

pub use error::{Error, Result};
