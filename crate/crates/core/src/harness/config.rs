// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration (TOML). Every table is optional except
//! `[experiment]`; unknown keys are rejected.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{make_grid, LoadingModel, Rect, RegisterSpec, TrapArray};
use crate::readout::ImagingModel;
use crate::rearrange::LossModel;
use crate::spin::{DriveParams, NoiseModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub pitch_um: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 11,
            pitch_um: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegisterConfig {
    pub rows: usize,
    pub cols: usize,
    /// Top-left corner; centred when absent.
    pub row0: Option<usize>,
    pub col0: Option<usize>,
    pub magnetic_field_gauss: f64,
    pub qubit_freq_hz: f64,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        Self {
            rows: 7,
            cols: 3,
            row0: None,
            col0: None,
            magnetic_field_gauss: RegisterSpec::DEFAULT_FIELD_GAUSS,
            qubit_freq_hz: RegisterSpec::DEFAULT_QUBIT_FREQ_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutConfig {
    /// Probability of reading `|up>` as `|down>`.
    pub q: f64,
    /// Wilson interval z-score.
    pub z: f64,
    /// Apply the reference-atom correction.
    pub correct: bool,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            q: 0.0,
            z: 1.96,
            correct: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Also write every shot's counts.
    pub shots_csv: bool,
}

/// Scan axis: an explicit list or `points` samples from `start` to `stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scan {
    List(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        points: usize,
        #[serde(default)]
        log: bool,
    },
}

impl Scan {
    pub fn linear(start: f64, stop: f64, points: usize) -> Self {
        Scan::Range {
            start,
            stop,
            points,
            log: false,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Scan::List(v) => Ok(v.clone()),
            Scan::Range {
                start,
                stop,
                points,
                log,
            } => {
                if *log && !(*start > 0.0 && *stop > 0.0) {
                    return Err(Error::Config("log scans need positive bounds".into()));
                }
                Ok((0..*points)
                    .map(|i| {
                        let u = if *points == 1 {
                            0.0
                        } else {
                            i as f64 / (*points - 1) as f64
                        };
                        if *log {
                            start * (stop / start).powf(u)
                        } else {
                            start + (stop - start) * u
                        }
                    })
                    .collect())
            }
        }
    }
}

/// Which experiment to run and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    /// Fixed-length drive, swept two-photon detuning.
    ResonanceScan {
        #[serde(default = "default_resonance_duration")]
        duration_s: f64,
        #[serde(default = "default_resonance_detunings")]
        detunings_hz: Scan,
    },
    /// Resonant drive of swept length.
    RabiScan {
        #[serde(default = "default_rabi_durations")]
        durations_s: Scan,
    },
    /// Pi pulse on the even checkerboard sublattice, then a hold.
    T1Checkerboard {
        #[serde(default = "default_t1_holds")]
        holds_s: Scan,
    },
    /// Ramsey with per-column artificial detuning and per-row phase offset.
    RamseyGrid {
        #[serde(default = "default_ramsey_freqs")]
        freqs_hz: Vec<f64>,
        /// One per register row; evenly spread over the circle by default.
        #[serde(default)]
        phases: Option<Vec<f64>>,
        #[serde(default = "default_ramsey_holds")]
        holds_s: Scan,
    },
    /// Ramsey snapshots in short windows at growing offsets.
    T2star {
        #[serde(default = "default_window")]
        window_s: f64,
        #[serde(default = "default_window_offsets")]
        offsets_s: Vec<f64>,
        #[serde(default = "default_window_points")]
        points_per_window: usize,
        #[serde(default = "default_artificial")]
        artificial_hz: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Spin echo with the readout phase advanced logarithmically in hold time.
    Echo {
        #[serde(default = "default_n_osc")]
        n_osc: f64,
        #[serde(default)]
        phi0: f64,
        #[serde(default = "default_echo_holds")]
        holds_s: Scan,
        /// Holds up to this length feed the preliminary phase fit.
        #[serde(default = "default_echo_early")]
        early_s: f64,
    },
}

fn default_resonance_duration() -> f64 {
    446e-6
}
fn default_resonance_detunings() -> Scan {
    Scan::linear(-5e3, 5e3, 81)
}
fn default_rabi_durations() -> Scan {
    Scan::linear(0.0, 2e-3, 41)
}
fn default_t1_holds() -> Scan {
    Scan::List(vec![0.1, 1.0, 5.0, 10.0])
}
fn default_ramsey_freqs() -> Vec<f64> {
    vec![700.0, 1000.0, 1300.0]
}
fn default_ramsey_holds() -> Scan {
    Scan::linear(0.0, 4e-3, 41)
}
fn default_window() -> f64 {
    3e-3
}
fn default_window_offsets() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2]
}
fn default_window_points() -> usize {
    15
}
fn default_artificial() -> f64 {
    1000.0
}
fn default_n_osc() -> f64 {
    2.0
}
fn default_echo_holds() -> Scan {
    Scan::Range {
        start: 0.01,
        stop: 30.0,
        points: 30,
        log: true,
    }
}
fn default_echo_early() -> f64 {
    1.0
}

/// Phase offsets `-pi + 2 pi (i + 1/2) / n` for `n` rows.
pub fn spread_phases(n: usize) -> Vec<f64> {
    (0..n).map(|i| -PI + 2.0 * PI * (i as f64 + 0.5) / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    ResonanceScan,
    RabiScan,
    T1Checkerboard,
    RamseyGrid,
    T2star,
    Echo,
}

impl KindName {
    pub const ALL: [KindName; 6] = [
        KindName::ResonanceScan,
        KindName::RabiScan,
        KindName::T1Checkerboard,
        KindName::RamseyGrid,
        KindName::T2star,
        KindName::Echo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KindName::ResonanceScan => "resonance_scan",
            KindName::RabiScan => "rabi_scan",
            KindName::T1Checkerboard => "t1_checkerboard",
            KindName::RamseyGrid => "ramsey_grid",
            KindName::T2star => "t2star",
            KindName::Echo => "echo",
        }
    }

    /// The kind with all parameters at their defaults.
    pub fn default_experiment(self) -> ExperimentKind {
        let text = format!("kind = \"{}\"", self.as_str());
        toml::from_str(&text).expect("every kind has full defaults")
    }
}

impl fmt::Display for KindName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KindName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KindName::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown experiment kind {s:?}")))
    }
}

impl ExperimentKind {
    pub fn name(&self) -> KindName {
        match self {
            ExperimentKind::ResonanceScan { .. } => KindName::ResonanceScan,
            ExperimentKind::RabiScan { .. } => KindName::RabiScan,
            ExperimentKind::T1Checkerboard { .. } => KindName::T1Checkerboard,
            ExperimentKind::RamseyGrid { .. } => KindName::RamseyGrid,
            ExperimentKind::T2star { .. } => KindName::T2star,
            ExperimentKind::Echo { .. } => KindName::Echo,
        }
    }
}

fn default_seed() -> u64 {
    0x5EED
}
fn default_shots() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Shots per scan point.
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub register: RegisterConfig,
    #[serde(default)]
    pub loading: LoadingModel,
    #[serde(default)]
    pub transport: LossModel,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub imaging: ImagingModel,
    #[serde(default)]
    pub drive: DriveParams,
    #[serde(default)]
    pub readout: ReadoutConfig,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn for_kind(kind: KindName) -> Self {
        Self {
            seed: default_seed(),
            shots: default_shots(),
            array: ArrayConfig::default(),
            register: RegisterConfig::default(),
            loading: LoadingModel::default(),
            transport: LossModel::default(),
            noise: NoiseModel::default(),
            imaging: ImagingModel::default(),
            drive: DriveParams::default(),
            readout: ReadoutConfig::default(),
            experiment: kind.default_experiment(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn trap_array(&self) -> Result<TrapArray> {
        Ok(make_grid(self.array.rows, self.array.cols, self.array.pitch_um)?)
    }

    pub fn register_spec(&self, array: &TrapArray) -> Result<RegisterSpec> {
        let r = &self.register;
        let mut spec = match (r.row0, r.col0) {
            (None, None) => RegisterSpec::centered(array, r.rows, r.cols)?,
            (row0, col0) => {
                let centred = RegisterSpec::centered(array, r.rows, r.cols);
                let fallback = centred.as_ref().map(|s| s.target).ok();
                let target = Rect {
                    row0: row0.or(fallback.map(|t| t.row0)).unwrap_or(0),
                    col0: col0.or(fallback.map(|t| t.col0)).unwrap_or(0),
                    rows: r.rows,
                    cols: r.cols,
                };
                RegisterSpec::new(array, target)?
            }
        };
        spec.magnetic_field_gauss = r.magnetic_field_gauss;
        spec.qubit_freq_hz = r.qubit_freq_hz;
        spec.validate(array)?;
        Ok(spec)
    }

    /// Checks every sub-model and the kind's parameters.
    pub fn validate(&self) -> Result<()> {
        let array = self.trap_array()?;
        self.register_spec(&array)?;
        self.loading.validate()?;
        if !self.transport.is_valid() {
            return Err(Error::Config("transport loss probabilities must lie in [0, 1]".into()));
        }
        self.noise.validate()?;
        self.imaging.validate()?;
        self.drive.validate()?;
        if self.drive.rabi_hz <= 0.0 {
            return Err(Error::Config("drive.rabi_hz must be positive".into()));
        }
        if self.shots == 0 {
            return Err(Error::Config("shots must be at least 1".into()));
        }
        if !(self.readout.z > 0.0) || !(0.0..1.0).contains(&self.readout.q) {
            return Err(Error::Config("readout.z must be positive and q in [0, 1)".into()));
        }
        let reg_rows = self.register.rows;
        let reg_cols = self.register.cols;
        match &self.experiment {
            ExperimentKind::ResonanceScan {
                duration_s,
                detunings_hz,
            } => {
                detunings_hz.values()?;
                if !(*duration_s >= 0.0) {
                    return Err(Error::Config("duration_s must be non-negative".into()));
                }
            }
            ExperimentKind::RabiScan { durations_s } => {
                if durations_s.values()?.iter().any(|d| !(*d >= 0.0)) {
                    return Err(Error::Config("durations must be non-negative".into()));
                }
            }
            ExperimentKind::T1Checkerboard { holds_s } => {
                if holds_s.values()?.iter().any(|d| !(*d >= 0.0)) {
                    return Err(Error::Config("holds must be non-negative".into()));
                }
            }
            ExperimentKind::RamseyGrid {
                freqs_hz,
                phases,
                holds_s,
            } => {
                if freqs_hz.len() != reg_cols {
                    return Err(Error::Config(format!(
                        "ramsey_grid needs one frequency per register column ({reg_cols}), got {}",
                        freqs_hz.len()
                    )));
                }
                if let Some(p) = phases {
                    if p.len() != reg_rows {
                        return Err(Error::Config(format!(
                            "ramsey_grid needs one phase per register row ({reg_rows}), got {}",
                            p.len()
                        )));
                    }
                }
                if holds_s.values()?.iter().any(|d| !(*d >= 0.0)) {
                    return Err(Error::Config("holds must be non-negative".into()));
                }
            }
            ExperimentKind::T2star {
                window_s,
                offsets_s,
                points_per_window,
                ..
            } => {
                if !(*window_s >= 0.0) || offsets_s.iter().any(|o| !(*o >= 0.0)) {
                    return Err(Error::Config("window and offsets must be non-negative".into()));
                }
                if *points_per_window == 0 && !offsets_s.is_empty() {
                    return Err(Error::Config("points_per_window must be at least 1".into()));
                }
            }
            ExperimentKind::Echo { holds_s, .. } => {
                if holds_s.values()?.iter().any(|t| !(*t > 0.0)) {
                    return Err(Error::Config("echo holds must be positive".into()));
                }
            }
        }
        Ok(())
    }
}
