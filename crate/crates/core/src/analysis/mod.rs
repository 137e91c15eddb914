// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Binomial intervals and least-squares fits.

pub mod fit;
mod lm;
pub mod stats;

use thiserror::Error;

pub use fit::{
    fit_decaying_sinusoid, fit_exponential_decay, fit_log_echo, fit_log_phase, guess_sinusoid, FitPoint, FitResult,
    SinusoidMask, SinusoidParams,
};
pub use lm::{LmOptions, LmOutcome};
pub use stats::{wilson_interval, BinomialPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("empty sample (n = 0)")]
    EmptySample,
    #[error("successes {k} exceed trials {n}")]
    TooManySuccesses { k: u64, n: u64 },
    #[error("z must be positive, got {0}")]
    NonPositiveZ(f64),
    #[error("{points} points cannot constrain {free} free parameters")]
    Underdetermined { points: usize, free: usize },
    #[error("fit did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("abscissa {0} must be positive")]
    NonPositiveTime(f64),
    #[error("non-finite input data")]
    NonFinite,
}
