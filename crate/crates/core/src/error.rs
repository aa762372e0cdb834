use alloc::boxed::Box;
use alloc::string::String;

use crate::estimators::EstimatorTag;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("under-identified: {instruments} instruments for {predictors} predictors (need instruments >= predictors)")]
    UnderIdentified { instruments: usize, predictors: usize },

    #[error("need more cases than columns: n = {n}, but {what} has {columns} columns")]
    TooFewRows {
        n: usize,
        columns: usize,
        what: &'static str,
    },

    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    /// Numerical rank of a matrix fell below its column count.
    #[error("{what} is rank deficient: estimated rank {rank} of {cols} (condition number {condition:.3e})")]
    Singular {
        what: &'static str,
        rank: usize,
        cols: usize,
        condition: f64,
    },

    #[error("case {index} has leverage {leverage} (>= 1 - 1e-12); leave-one-out first stage undefined")]
    LeverageOne { index: usize, leverage: f64 },

    #[error("proportion {0} is outside [0, 1]")]
    InvalidProportion(f64),

    #[error("non-finite MSE component: {0}")]
    NonFiniteMoments(&'static str),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid bootstrap plan: {0}")]
    InvalidPlan(String),

    #[error("bootstrap aborted: {failures} of {reps} replicates failed (last error: {last})")]
    BootstrapFailures {
        failures: usize,
        reps: usize,
        last: Box<Error>,
    },

    #[error("{tag} failed on every Monte Carlo iteration ({iterations})")]
    AllIterationsFailed { tag: EstimatorTag, iterations: usize },

    #[error("{tag}: {source}")]
    Estimator {
        tag: EstimatorTag,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn tagged(self, tag: EstimatorTag) -> Self {
        match self {
            e @ Error::Estimator { .. } => e,
            e => Error::Estimator {
                tag,
                source: Box::new(e),
            },
        }
    }

    /// Innermost error, with estimator tags stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Estimator { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of the numerical kind (singular designs, unit
    /// leverage, exhausted replicates) as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::Singular { .. }
                | Error::LeverageOne { .. }
                | Error::NonFiniteMoments(_)
                | Error::BootstrapFailures { .. }
                | Error::AllIterationsFailed { .. }
        )
    }
}
