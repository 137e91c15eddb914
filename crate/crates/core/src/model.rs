// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Register geometry, site occupancy and stochastic loading.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::SeedSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("array dimensions must be non-zero (rows={rows}, cols={cols})")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("trap pitch must be positive, got {0}")]
    NonPositivePitch(f64),
    #[error("fill probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("mean atom number {0} is negative")]
    NegativeMean(f64),
    #[error("qubit frequency must be positive, got {0}")]
    NonPositiveQubitFrequency(f64),
    #[error("target region {0} does not fit inside a {1}x{2} array")]
    TargetOutOfBounds(Rect, usize, usize),
    #[error("occupancy has {got} sites but the array has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("malformed occupancy text: {0}")]
    Parse(String),
}

/// Row-major rectangular grid of traps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapArray {
    rows: usize,
    cols: usize,
    pitch_um: f64,
    depth_scale: Vec<f64>,
}

impl TrapArray {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pitch(&self) -> f64 {
        self.pitch_um
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn depth_scale(&self) -> &[f64] {
        &self.depth_scale
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site / self.cols, site % self.cols)
    }

    /// Focal-plane position of a site in micrometres, `(x, y) = (col, row) * pitch`.
    pub fn position(&self, site: usize) -> (f64, f64) {
        let (r, c) = self.coords(site);
        (c as f64 * self.pitch_um, r as f64 * self.pitch_um)
    }

    pub fn contains(&self, site: usize) -> bool {
        site < self.len()
    }
}

/// Builds a uniform-depth grid.
pub fn make_grid(rows: usize, cols: usize, pitch_um: f64) -> Result<TrapArray, ModelError> {
    if rows == 0 || cols == 0 {
        return Err(ModelError::ZeroDimension { rows, cols });
    }
    if !(pitch_um > 0.0) || !pitch_um.is_finite() {
        return Err(ModelError::NonPositivePitch(pitch_um));
    }
    Ok(TrapArray {
        rows,
        cols,
        pitch_um,
        depth_scale: vec![1.0; rows * cols],
    })
}

/// Per-site atom presence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Occupancy {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Occupancy {
    pub fn empty(array: &TrapArray) -> Self {
        Self {
            rows: array.rows,
            cols: array.cols,
            bits: vec![false; array.len()],
        }
    }

    pub fn from_bits(array: &TrapArray, bits: Vec<bool>) -> Result<Self, ModelError> {
        if bits.len() != array.len() {
            return Err(ModelError::SizeMismatch {
                expected: array.len(),
                got: bits.len(),
            });
        }
        Ok(Self {
            rows: array.rows,
            cols: array.cols,
            bits,
        })
    }

    pub fn from_sites(array: &TrapArray, sites: &[usize]) -> Self {
        let mut occ = Self::empty(array);
        for &s in sites {
            occ.bits[s] = true;
        }
        occ
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, site: usize) -> bool {
        self.bits[site]
    }

    pub fn set(&mut self, site: usize, value: bool) {
        self.bits[site] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn matches(&self, array: &TrapArray) -> bool {
        self.rows == array.rows && self.cols == array.cols
    }
}

/// One line per row, `1`/`0` per site, newline-terminated.
impl fmt::Display for Occupancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.bits.chunks(self.cols) {
            for &b in row {
                f.write_str(if b { "1" } else { "0" })?;
            }
            f.write_str("\n")?;
        }
        Ok(())
    }
}

impl FromStr for Occupancy {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let row: Vec<bool> = line
                .chars()
                .map(|c| match c {
                    '1' => Ok(true),
                    '0' => Ok(false),
                    other => Err(ModelError::Parse(format!(
                        "line {}: unexpected character {other:?}",
                        lineno + 1
                    ))),
                })
                .collect::<Result<_, _>>()?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(ModelError::Parse(format!(
                        "line {}: expected {c} sites, found {}",
                        lineno + 1,
                        row.len()
                    )))
                }
                _ => {}
            }
            bits.extend(row);
            rows += 1;
        }
        let cols = cols.ok_or_else(|| ModelError::Parse("no rows".into()))?;
        Ok(Self { rows, cols, bits })
    }
}

/// Axis-aligned block of sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row0 + self.rows && col >= self.col0 && col < self.col0 + self.cols
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}@({},{})", self.rows, self.cols, self.row0, self.col0)
    }
}

/// Computational sub-array plus the static field and qubit splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterSpec {
    pub target: Rect,
    pub magnetic_field_gauss: f64,
    pub qubit_freq_hz: f64,
}

impl RegisterSpec {
    pub const DEFAULT_FIELD_GAUSS: f64 = 11.0;
    pub const DEFAULT_QUBIT_FREQ_HZ: f64 = 2.1e3;

    pub fn new(array: &TrapArray, target: Rect) -> Result<Self, ModelError> {
        let spec = Self {
            target,
            magnetic_field_gauss: Self::DEFAULT_FIELD_GAUSS,
            qubit_freq_hz: Self::DEFAULT_QUBIT_FREQ_HZ,
        };
        spec.validate(array)?;
        Ok(spec)
    }

    /// `rows x cols` block centred in the array (rounded toward the origin).
    pub fn centered(array: &TrapArray, rows: usize, cols: usize) -> Result<Self, ModelError> {
        let target = Rect {
            row0: array.rows().saturating_sub(rows) / 2,
            col0: array.cols().saturating_sub(cols) / 2,
            rows,
            cols,
        };
        Self::new(array, target)
    }

    pub fn validate(&self, array: &TrapArray) -> Result<(), ModelError> {
        let t = self.target;
        if t.rows == 0 || t.cols == 0 || t.row0 + t.rows > array.rows() || t.col0 + t.cols > array.cols() {
            return Err(ModelError::TargetOutOfBounds(t, array.rows(), array.cols()));
        }
        if !(self.qubit_freq_hz > 0.0) {
            return Err(ModelError::NonPositiveQubitFrequency(self.qubit_freq_hz));
        }
        Ok(())
    }

    pub fn target_mask(&self, array: &TrapArray) -> Vec<bool> {
        (0..array.len())
            .map(|i| {
                let (r, c) = array.coords(i);
                self.target.contains(r, c)
            })
            .collect()
    }

    /// Target sites in row-major order.
    pub fn target_sites(&self, array: &TrapArray) -> Vec<usize> {
        let t = self.target;
        (t.row0..t.row0 + t.rows)
            .flat_map(|r| (t.col0..t.col0 + t.cols).map(move |c| array.index(r, c)))
            .collect()
    }

    pub fn is_target(&self, array: &TrapArray, site: usize) -> bool {
        let (r, c) = array.coords(site);
        self.target.contains(r, c)
    }

    pub fn is_filled(&self, array: &TrapArray, occ: &Occupancy) -> bool {
        self.target_sites(array).into_iter().all(|s| occ.get(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadingModel {
    /// Independent fill with probability `p_fill`.
    Bernoulli { p_fill: f64 },
    /// Poisson atom number with mean `mean`, pairs ejected: a site keeps an
    /// atom iff the number loaded is odd.
    ParityProjected { mean: f64 },
}

impl Default for LoadingModel {
    fn default() -> Self {
        LoadingModel::Bernoulli { p_fill: 0.5 }
    }
}

impl LoadingModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            LoadingModel::Bernoulli { p_fill } if !(0.0..=1.0).contains(&p_fill) => {
                Err(ModelError::InvalidProbability(p_fill))
            }
            LoadingModel::ParityProjected { mean } if !(mean >= 0.0) => Err(ModelError::NegativeMean(mean)),
            _ => Ok(()),
        }
    }

    /// Expected single-site fill fraction.
    pub fn expected_fill(&self) -> f64 {
        match *self {
            LoadingModel::Bernoulli { p_fill } => p_fill,
            LoadingModel::ParityProjected { mean } => 0.5 * (1.0 - (-2.0 * mean).exp()),
        }
    }
}

/// Draws an occupancy pattern. Each site uses its own substream, so the
/// result does not depend on evaluation order.
pub fn sample_loading(array: &TrapArray, model: LoadingModel, seed: &SeedSpec) -> Result<Occupancy, ModelError> {
    model.validate()?;
    let poisson = match model {
        LoadingModel::ParityProjected { mean } if mean > 0.0 => {
            Some(Poisson::new(mean).map_err(|_| ModelError::NegativeMean(mean))?)
        }
        _ => None,
    };
    let bits = (0..array.len())
        .map(|site| {
            let mut rng = seed.rng("loading", &[site as u64]);
            match model {
                LoadingModel::Bernoulli { p_fill } => rng.random::<f64>() < p_fill,
                LoadingModel::ParityProjected { .. } => match &poisson {
                    Some(dist) => (dist.sample(&mut rng) as u64) % 2 == 1,
                    None => false,
                },
            }
        })
        .collect();
    Occupancy::from_bits(array, bits)
}
