//! Differential (Boltzmann) entropy of statistical samples.
//!
//! The entropy of a probability density `F` is `S = -∫ F ln F dv` (nats).
//! When only a sample is available, `F` must be estimated first — here by
//! uniform-bin histograms ([`histogram`]) or kernel density estimation
//! ([`kde`]). Both estimates make `S` a monotonically increasing function of
//! the smoothing parameter (bin width or bandwidth), so the value of the
//! plug-in entropy depends entirely on that parameter.
//!
//! The [`selector`] module implements a purely data-based way out: tabulate
//! `S` over a log-spaced parameter grid, average over replicates, and pick
//! the parameter where `dS̄/d ln(param)` attains its minimum. That point
//! tracks the true entropy increasingly well as the sample grows. Classical
//! reference selectors (Scott bin width, AMISE bandwidth) are provided for
//! comparison, and [`experiment`] orchestrates full replicated runs.

pub mod distributions;
pub mod experiment;
pub mod histogram;
pub mod kde;
pub mod numeric;
pub mod selector;

pub use distributions::{AnalyticDistribution, DistributionId, Sample};
pub use histogram::HistogramEstimate;
pub use kde::{EntropyMethod, KdeEstimate, Kernel, KernelId};
pub use selector::{EntropyCurve, SelectorResult, SmoothingGrid};

use thiserror::Error;

/// Errors shared by all estimation and experiment operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The derivative minimum fell on the first or last searched grid index,
    /// so the true minimum may lie outside the grid. Callers should re-run
    /// with a wider grid on the reported side.
    #[error("derivative minimum at the {side} edge of the grid (index {index}){detail}; widen the grid")]
    BoundaryMinimum {
        side: BoundarySide,
        index: usize,
        /// Context added by callers (e.g. which sample size hit it).
        detail: String,
    },

    /// A quadrature grid would exceed the configured node budget.
    #[error("quadrature grid of {requested} nodes exceeds the budget of {budget} nodes")]
    QuadratureBudget { requested: u128, budget: u64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Which end of the grid a boundary minimum was found on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum BoundarySide {
    Lower,
    Upper,
}

impl std::fmt::Display for BoundarySide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundarySide::Lower => write!(f, "lower"),
            BoundarySide::Upper => write!(f, "upper"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
