//! Item-token recommendation with a hash-compressed item vocabulary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod data;
pub mod error;
pub mod eval;
pub mod float;
pub mod hashing;
pub mod item_table;
pub mod model;
pub mod pipeline;
pub mod prompt;
pub mod seed;
pub mod tokenizer;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
