//! Directed-evolution pruning: random candidate sets are proposed, the one
//! whose zeroing moves the student least from the teacher is committed, and
//! the student is retrained, until every in-scope tensor reaches its target.

mod combinatorics;
mod config;
mod divergence;
mod engine;
mod histogram;
pub mod history;

pub use combinatorics::combinations_count;
pub use config::DeConfig;
pub use divergence::{DivergenceLoss, DivergenceSpec, Head};
pub use engine::{
    evaluate_candidate, propose_candidates, retrain, run, run_with, select_and_commit,
    trial_stats, CycleRecord, DeOutcome, RunStatus, TrialEval,
};
pub use histogram::{surviving_values, weight_histogram, Histogram};
