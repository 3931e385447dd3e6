//! Staged subword vocabulary expansion.
//!
//! Grows a byte-pair-encoding vocabulary in stages against a multilingual
//! corpus, plans the per-stage data mixture, measures tokenizer quality at
//! every stage and prepares embedding initialization for the new tokens.

pub mod bpe;
pub mod corpus;
pub mod desk;
pub mod embed_init;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod schedule;

pub use error::{Error, Result};
