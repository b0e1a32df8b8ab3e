//! Private online learning with tree-aggregated gradient sums.
//!
//! The crate is organised bottom-up:
//!
//! * [`primitives`] has vectors, clipping, ball projection and the seeded
//!   Gaussian noise source.
//! * [`tree`] is the binary-tree aggregation mechanism with the vanilla and
//!   variance-reduced prefix-sum estimators.
//! * [`privacy`] has Renyi-DP curves, composition, conversion to (ε, δ),
//!   noise calibration and the tree sensitivity analyses.
//! * [`optimizers`] has DP-FTRL (base, momentum, composite ℓ1, least
//!   squares) and the noisy-SGD baseline.
//! * [`harness`] has synthetic streams, online training loops, regret
//!   metrics and CSV output used by the `dpftrl` binary.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod optimizers;
pub mod primitives;
pub mod privacy;
pub mod tree;

pub use error::{DpError, Result};
pub use primitives::{clip, project_ball, NoiseSource, RealVector};
pub use tree::{AggregationTree, EstimatorMode, PrefixSumEstimate};
