// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Pulse sequences for each experiment kind. Rotations address register
//! columns only, restricted to register rows, so atoms outside the register
//! stay undriven references.

use std::f64::consts::PI;

use super::config::{spread_phases, ExperimentConfig, ExperimentKind};
use crate::model::{RegisterSpec, TrapArray};
use crate::spin::sequence::{Instruction, PulseSequence, Rotate, SiteSet};
use crate::spin::DriveParams;
use crate::Result;

/// One scan point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub value: f64,
    pub seq: PulseSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub points: Vec<Point>,
    /// Register sites in row-major order with their analysis group.
    pub sites: Vec<(usize, &'static str)>,
}

impl ExperimentPlan {
    pub fn groups(&self) -> Vec<&'static str> {
        let mut g: Vec<&'static str> = Vec::new();
        for (_, name) in &self.sites {
            if !g.contains(name) {
                g.push(name);
            }
        }
        g
    }
}

struct Builder<'a> {
    reg: &'a RegisterSpec,
    drive: DriveParams,
}

impl Builder<'_> {
    fn reg_rows(&self) -> Vec<usize> {
        (self.reg.target.row0..self.reg.target.row0 + self.reg.target.rows).collect()
    }

    fn col(&self, local: usize) -> usize {
        self.reg.target.col0 + local
    }

    /// Rotation of register column `local` on the given absolute rows.
    fn rotate(&self, local: usize, rows: Vec<usize>, theta: f64, phi: Vec<f64>, drive: DriveParams) -> Instruction {
        Instruction::Rotate(Rotate {
            sites: SiteSet::Column {
                col: self.col(local),
                rows: Some(rows),
            },
            theta,
            phi,
            drive,
        })
    }

    /// The same rotation on every register column.
    fn all_columns(&self, seq: &mut PulseSequence, theta: f64, phi: f64) {
        for c in 0..self.reg.target.cols {
            seq.push(self.rotate(c, self.reg_rows(), theta, vec![phi], self.drive));
        }
    }

    fn finish(mut seq: PulseSequence) -> PulseSequence {
        seq.push(Instruction::Shelve);
        seq.push(Instruction::Image("main".into()));
        seq
    }

    /// `pi/2 (x) - wait - pi/2 (phase per site)`.
    fn ramsey(&self, hold: f64, final_phase: impl Fn(usize, usize) -> f64) -> PulseSequence {
        let mut seq = PulseSequence::new();
        self.all_columns(&mut seq, PI / 2.0, 0.0);
        seq.push(Instruction::Wait(hold));
        let rows = self.reg.target.rows;
        for c in 0..self.reg.target.cols {
            let phis = (0..rows).map(|r| final_phase(r, c)).collect();
            seq.push(self.rotate(c, self.reg_rows(), PI / 2.0, phis, self.drive));
        }
        Self::finish(seq)
    }
}

/// Builds every scan point of the configured experiment.
pub fn build_plan(cfg: &ExperimentConfig, array: &TrapArray, reg: &RegisterSpec) -> Result<ExperimentPlan> {
    let b = Builder { reg, drive: cfg.drive };
    let t = reg.target;
    let checkerboard = matches!(cfg.experiment, ExperimentKind::T1Checkerboard { .. });
    let group_of = |r: usize, c: usize| match (checkerboard, (r + c).is_multiple_of(2)) {
        (false, _) => "all",
        (true, true) => "driven",
        (true, false) => "undriven",
    };
    let points: Vec<Point> = match &cfg.experiment {
        ExperimentKind::ResonanceScan {
            duration_s,
            detunings_hz,
        } => detunings_hz
            .values()?
            .into_iter()
            .map(|delta| {
                let drive = DriveParams {
                    detuning_hz: delta,
                    ..cfg.drive
                };
                let mut seq = PulseSequence::new();
                let theta = 2.0 * PI * drive.rabi_hz * duration_s;
                for c in 0..t.cols {
                    seq.push(b.rotate(c, b.reg_rows(), theta, vec![0.0], drive));
                }
                Point {
                    value: delta,
                    seq: Builder::finish(seq),
                }
            })
            .collect(),
        ExperimentKind::RabiScan { durations_s } => durations_s
            .values()?
            .into_iter()
            .map(|d| {
                let mut seq = PulseSequence::new();
                b.all_columns(&mut seq, 2.0 * PI * cfg.drive.rabi_hz * d, 0.0);
                Point {
                    value: d,
                    seq: Builder::finish(seq),
                }
            })
            .collect(),
        ExperimentKind::T1Checkerboard { holds_s } => holds_s
            .values()?
            .into_iter()
            .map(|hold| {
                let mut seq = PulseSequence::new();
                for c in 0..t.cols {
                    let rows: Vec<usize> = (0..t.rows).filter(|r| (r + c) % 2 == 0).map(|r| t.row0 + r).collect();
                    if !rows.is_empty() {
                        seq.push(b.rotate(c, rows, PI, vec![0.0], cfg.drive));
                    }
                }
                seq.push(Instruction::Wait(hold));
                Point {
                    value: hold,
                    seq: Builder::finish(seq),
                }
            })
            .collect(),
        ExperimentKind::RamseyGrid {
            freqs_hz,
            phases,
            holds_s,
        } => {
            let phases = phases.clone().unwrap_or_else(|| spread_phases(t.rows));
            holds_s
                .values()?
                .into_iter()
                .map(|hold| Point {
                    value: hold,
                    seq: b.ramsey(hold, |r, c| 2.0 * PI * freqs_hz[c] * hold + phases[r]),
                })
                .collect()
        }
        ExperimentKind::T2star {
            window_s,
            offsets_s,
            points_per_window,
            artificial_hz,
            phase,
        } => t2star_holds(offsets_s, *window_s, *points_per_window)
            .into_iter()
            .map(|hold| Point {
                value: hold,
                seq: b.ramsey(hold, |_, _| 2.0 * PI * artificial_hz * hold + phase),
            })
            .collect(),
        ExperimentKind::Echo {
            n_osc, phi0, holds_s, ..
        } => holds_s
            .values()?
            .into_iter()
            .map(|hold| {
                let mut seq = PulseSequence::new();
                b.all_columns(&mut seq, PI / 2.0, 0.0);
                seq.push(Instruction::Wait(hold / 2.0));
                b.all_columns(&mut seq, PI, PI / 2.0);
                seq.push(Instruction::Wait(hold / 2.0));
                b.all_columns(&mut seq, PI / 2.0, echo_phase(*phi0, *n_osc, hold));
                Point {
                    value: hold,
                    seq: Builder::finish(seq),
                }
            })
            .collect(),
    };
    let sites = reg
        .target_sites(array)
        .into_iter()
        .map(|s| {
            let (r, c) = array.coords(s);
            (s, group_of(r - t.row0, c - t.col0))
        })
        .collect();
    Ok(ExperimentPlan { points, sites })
}

/// `phi0 + 2 pi n log10(t / 1 s)`.
pub fn echo_phase(phi0: f64, n_osc: f64, hold_s: f64) -> f64 {
    phi0 + 2.0 * PI * n_osc * hold_s.log10()
}

/// Hold times of the windowed Ramsey scan, in window order.
pub fn t2star_holds(offsets: &[f64], window: f64, per_window: usize) -> Vec<f64> {
    offsets
        .iter()
        .flat_map(|&o| {
            (0..per_window).map(move |i| {
                if per_window == 1 {
                    o
                } else {
                    o + window * i as f64 / (per_window - 1) as f64
                }
            })
        })
        .collect()
}
