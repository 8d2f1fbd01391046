//! Cross-lingual transfer toolkit for transition-based dependency parsers.
//!
//! The crate covers the full transfer recipe: reading and writing dependency
//! treebanks, an arc-eager transition system with beam decoding, averaged
//! structured perceptron training, word clustering over code-switched text,
//! IBM-style word alignment and lexicon extraction, annotation projection with
//! density-driven retraining, typology-based source selection, and evaluation.

pub mod alignment;
pub mod alphabet;
pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod learning;
pub mod pipeline;
pub mod scoring;
pub mod synth;
pub mod transfer;
pub mod transition;
pub mod treebank;

pub use alphabet::Alphabet;
pub use error::{Error, Result};
