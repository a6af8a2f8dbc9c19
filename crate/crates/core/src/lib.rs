//! Hybrid curriculum learning for emotion recognition in conversation.
//!
//! This crate holds the pure algorithmic side: the conversation data model,
//! the valence-arousal emotion wheel and its similarity matrix, the
//! conversation-level difficulty scheduler, the evolving soft-target matrix,
//! a small reference classifier with exact gradients, the training loop for
//! every ablation strategy, the ERC metrics and a synthetic corpus generator.
//!
//! It is `no_std` and only needs `alloc`. File formats, run directories and
//! the command line live in the `hcl` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod curriculum;
pub mod error;
pub mod eval;
pub mod model;
pub mod synth;
pub mod training;
pub mod wheel;

pub use error::{Error, Result};
