//! Adaptive dictionary embeddings.
//!
//! Words are represented as sparse weighted combinations of a small shared
//! anchor table. A single segment-aware attention block reweights anchors in
//! context before they are composed into token embeddings and classified.

pub mod binio;
pub mod cli;
pub mod codebook;
pub mod data;
pub mod distill;
pub mod error;
pub mod evalbench;
pub mod gpe;
pub mod numcore;
pub mod pipeline;
pub mod sat;

pub use error::{AdeError, Result};
