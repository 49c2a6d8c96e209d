//! Relation extraction with an LSTM encoder and attention enriched by
//! dependency-tree and entity features.

pub mod corpus;
pub mod depfeat;
pub mod error;
pub mod eval;
pub mod model;
pub mod numcore;
pub mod train;

pub use error::{Error, Result};
