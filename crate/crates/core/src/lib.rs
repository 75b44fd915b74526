//! Curation and evaluation toolkit for visual commonsense graphs.
//!
//! The crate is organised around the pipeline it serves:
//!
//! * [`graph`] loads, indexes and re-emits image/description graphs and the
//!   image embeddings that accompany them.
//! * [`filtering`] removes generic inferences using the semantic
//!   concentration of each description's related images.
//! * [`subsets`] builds the unique and novel evaluation subsets.
//! * [`metrics`] scores generated corpora for descriptiveness and diversity.
//! * [`contrastive`] trains a small recurrent captioner with a contrastive
//!   retrieval term and exact analytic gradients.

pub mod contrastive;
pub mod error;
pub mod filtering;
pub mod graph;
pub mod metrics;
pub mod subsets;
pub mod text;

pub use error::{Error, Result};
