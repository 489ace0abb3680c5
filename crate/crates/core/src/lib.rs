//! Topology-driven tracking of features in time-varying 2D scalar fields.
//!
//! The pipeline per frame: build the merge tree of superlevel-set
//! connectivity, simplify it by topological-zone area, detect threshold
//! objects, group them into systems, and place anchor points (tree maxima)
//! on a measure network. Adjacent frames are matched by a partial fused
//! Gromov-Wasserstein coupling between their networks; system-level scores
//! derived from the coupling drive a greedy main matching whose chains are
//! trajectories and whose extra valid links become merge/split events. An
//! evaluation harness computes timespan, mean-value variability, and
//! linearity-loss statistics over the resulting trajectory set.

// Validation deliberately writes `!(x > 0.0)` instead of `x <= 0.0`: the
// negated form also rejects NaN, which must never pass a range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod field;
pub mod measure;
pub mod merge_tree;
pub mod metrics;
pub mod objects;
pub mod pfgw;
pub mod pipeline;
pub mod tracker;
pub mod transport;

pub use config::{Preset, RunConfig};
pub use error::{Error, Result};
