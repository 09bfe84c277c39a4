//! Code-poisoning detection for training datasets.
//!
//! A lightweight n-gram language model is trained on a small trusted corpus;
//! every token of a suspect dataset is then scored by how much deleting it
//! improves its sample's naturalness (cross-entropy) under that model.
//! Improvements are accumulated per token text across the whole dataset, the
//! top-k tokens are declared backdoor triggers, and purification drops every
//! sample containing one of them. Attack simulators, detection metrics, and
//! sensitivity sweeps round out the pipeline.

pub mod attacks;
pub mod corpus;
pub mod detector;
mod error;
pub mod eval;
pub mod ngram;
pub mod reference;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};
