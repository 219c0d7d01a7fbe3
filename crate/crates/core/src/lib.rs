//! Implicit-feedback matrix factorization trained with alternating least
//! squares.
//!
//! Three solvers share one objective ([`model::compute_loss`]):
//!
//! * `ials`: every user (item) vector is solved exactly in closed form;
//! * `icd`: one embedding coordinate at a time, with a prediction cache;
//! * `ialspp`: Newton steps on subvectors of `block_size` coordinates,
//!   which reduces to `icd` at width 1 and to `ials` at full width.
//!
//! The crate also carries the evaluation protocol (holdout fold-in, Recall and
//! NDCG) and synthetic data generators used by the benchmarks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod solver;
pub mod synthetic;

pub use dataset::{Interaction, InteractionDataset, Side};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{compute_loss, compute_predictions, init_model, FactorModel, PredictionCache, SolverConfig, SolverKind};
pub use solver::{partition_dims, train, BlockPartition, EpochReport, Trainer};
