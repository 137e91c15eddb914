// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// `k` successes in `n` trials at abscissa `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialPoint {
    pub x: f64,
    pub k: u64,
    pub n: u64,
}

impl BinomialPoint {
    pub fn new(x: f64, k: u64, n: u64) -> Result<Self, AnalysisError> {
        if n == 0 {
            return Err(AnalysisError::EmptySample);
        }
        if k > n {
            return Err(AnalysisError::TooManySuccesses { k, n });
        }
        Ok(Self { x, k, n })
    }

    pub fn fraction(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// Wilson score interval for `k` of `n`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> Result<(f64, f64), AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::EmptySample);
    }
    if k > n {
        return Err(AnalysisError::TooManySuccesses { k, n });
    }
    if !(z > 0.0) {
        return Err(AnalysisError::NonPositiveZ(z));
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}
