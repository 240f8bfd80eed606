//! Answer-aware question generation with a jointly trained sentence selector.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches the file
//! system, the clock, or a command line lives in the `qgen` companion crate.
//!
//! Pipeline pieces, bottom-up:
//!
//! * [`corpus`] sentence splitting and answer alignment over raw documents.
//! * [`tokenizer`] word-level vocabulary and the `[CLS] context [SEP] answer [SEP]` layout.
//! * [`embedding`] and [`labeler`] weak-supervision relevance labels (top-k cosine).
//! * [`autograd`] and [`model`] a small transformer encoder-decoder with a selector head.
//! * [`training`] losses, AdamW, and the joint / two-step / auxiliary training loops.
//! * [`decoding`] greedy and beam search.
//! * [`metrics`] BLEU-4, ROUGE-L and METEOR-lite.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autograd;
pub mod corpus;
pub mod decoding;
pub mod embedding;
pub mod error;
pub mod labeler;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
