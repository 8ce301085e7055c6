//! Friedman rank test, Borda aggregation of per-scale rankings, and
//! objective metrics from recorded games.

mod borda;
mod friedman;
mod metrics;

pub use borda::*;
pub use friedman::*;
pub use metrics::*;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least 2 conditions, got {0}")]
    TooFewConditions(usize),
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {col} is not a finite number")]
    NonFinite { row: usize, col: usize },
    #[error("ranking {name:?} is not a permutation of NC, DC, IC, MC")]
    NotAPermutation { name: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
