//! Exploratory cross-domain search over scientific abstracts.
//!
//! A query is an abstract plus one selected sentence. The corpus is split
//! into global domain clusters (k-means over document vectors); every
//! cluster has its own nearest-neighbor index over sentence vectors.
//! Searching returns the closest sentences from each cluster, and zooming in
//! retrieves more from selected clusters and re-clusters them locally.
//!
//! The [`eval`] module measures how well document representations recover
//! keyword-defined sub-domains (cluster purity, with and without the
//! keywords in the text).

pub mod ann;
pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod search;
pub mod service;
pub mod snapshot;
pub mod synth;
pub mod text;
