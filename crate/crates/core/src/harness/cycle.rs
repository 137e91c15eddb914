// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! The load / rearrange / run / image loop and per-point statistics.
//!
//! A run first fixes the occupancy of every shot, walking the shots in order
//! and rearranging whenever imaging loss empties a register site. Atom loss
//! is drawn from streams independent of the qubit state, so the shots can
//! then be simulated in parallel.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::experiments::{build_plan, ExperimentPlan};
use crate::analysis::{
    fit_decaying_sinusoid, fit_exponential_decay, fit_log_echo, fit_log_phase, guess_sinusoid, wilson_interval,
    FitPoint, FitResult, SinusoidMask, SinusoidParams,
};
use crate::model::{sample_loading, Occupancy, RegisterSpec, TrapArray};
use crate::readout::{povm_correct, ReadoutError};
use crate::rearrange::{execute_plan, plan_moves, RearrangeError};
use crate::seed::SeedSpec;
use crate::spin::runner::Runner;
use crate::{Error, Result};

/// Attempts to fill the register from one load before reloading.
const MAX_REARRANGE_ATTEMPTS: usize = 50;
/// Reloads tolerated for a single shot before giving up.
const MAX_RELOADS_PER_SHOT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleAction {
    Load,
    Rearrange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleEvent {
    /// Global shot index the event precedes.
    pub shot: u64,
    pub action: CycleAction,
    /// Atoms in the array before the action.
    pub atoms: usize,
    pub moves: usize,
    pub transport_losses: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleLog {
    pub events: Vec<CycleEvent>,
}

impl CycleLog {
    pub fn count(&self, action: CycleAction) -> usize {
        self.events.iter().filter(|e| e.action == action).count()
    }
}

/// Walks `total` shots, returning the occupancy each one starts from.
/// `losses(occ, shot)` gives the sites imaging removes in that shot.
pub fn occupancy_schedule<F>(
    cfg: &ExperimentConfig,
    array: &TrapArray,
    reg: &RegisterSpec,
    total: u64,
    seed: &SeedSpec,
    losses: F,
) -> Result<(Vec<Occupancy>, CycleLog)>
where
    F: Fn(&Occupancy, u64) -> Vec<usize>,
{
    let mut log = CycleLog::default();
    let mut loads = 0u64;
    let mut rearrangements = 0u64;
    let mut occ = Occupancy::empty(array);
    let mut schedule = Vec::with_capacity(total as usize);
    let mut fresh = true;
    for shot in 0..total {
        let mut reloads = 0;
        let mut attempts = 0;
        while fresh || !reg.is_filled(array, &occ) {
            if fresh {
                log.events.push(CycleEvent {
                    shot,
                    action: CycleAction::Load,
                    atoms: occ.count(),
                    moves: 0,
                    transport_losses: 0,
                });
                occ = sample_loading(array, cfg.loading, &seed.derive("load", &[loads]))?;
                loads += 1;
                fresh = false;
                attempts = 0;
                reloads += 1;
                if reloads > MAX_RELOADS_PER_SHOT {
                    return Err(Error::Rearrange(RearrangeError::InsufficientAtoms {
                        needed: reg.target.rows * reg.target.cols,
                        have: occ.count(),
                    }));
                }
                continue;
            }
            match plan_moves(array, &occ, reg) {
                Ok(plan) => {
                    let (next, move_log) = execute_plan(
                        array,
                        &occ,
                        &plan,
                        &cfg.transport,
                        &seed.derive("rearrange", &[rearrangements]),
                    );
                    log.events.push(CycleEvent {
                        shot,
                        action: CycleAction::Rearrange,
                        atoms: occ.count(),
                        moves: plan.len(),
                        transport_losses: move_log.losses(),
                    });
                    rearrangements += 1;
                    occ = next;
                    attempts += 1;
                    if attempts >= MAX_REARRANGE_ATTEMPTS {
                        fresh = true;
                    }
                }
                Err(RearrangeError::InsufficientAtoms { .. }) | Err(RearrangeError::PlanningStalled) => fresh = true,
                Err(e) => return Err(e.into()),
            }
        }
        schedule.push(occ.clone());
        for site in losses(&occ, shot) {
            occ.set(site, false);
        }
    }
    Ok((schedule, log))
}

/// One register site at one scan point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRow {
    pub point_value: f64,
    pub site_row: usize,
    pub site_col: usize,
    pub k: u64,
    pub n: u64,
    pub m: Option<f64>,
    pub m_corr: Option<f64>,
    pub wilson_lo: Option<f64>,
    pub wilson_hi: Option<f64>,
}

/// One analysis group (all register sites, or a sublattice) at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub group: String,
    pub point_value: f64,
    pub k: u64,
    pub n: u64,
    /// Reference-atom bright fraction used for the correction.
    pub p: f64,
    pub m: Option<f64>,
    pub m_corr: Option<f64>,
    pub wilson_lo: Option<f64>,
    pub wilson_hi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRow {
    pub shot_index: u64,
    pub site_row: usize,
    pub site_col: usize,
    pub image1_counts: u64,
    pub image2_counts: u64,
    pub class1: bool,
    pub class2: bool,
    pub post_selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub point_values: Vec<f64>,
    pub sites: Vec<SiteRow>,
    pub averages: Vec<AverageRow>,
    pub fits: BTreeMap<String, FitResult>,
    pub fit_errors: BTreeMap<String, String>,
    pub cycle: CycleLog,
    pub shots: Vec<ShotRow>,
}

#[derive(Debug, Default)]
struct Tally {
    k: Vec<u64>,
    n: Vec<u64>,
    ref_k: u64,
    ref_n: u64,
    shots: Vec<ShotRow>,
}

/// Corrected value and interval for `k` of `n`.
fn corrected(k: u64, n: u64, p: f64, cfg: &ExperimentConfig) -> Result<[Option<f64>; 4]> {
    if n == 0 {
        return Ok([None; 4]);
    }
    let m = k as f64 / n as f64;
    let (lo, hi) = wilson_interval(k, n, cfg.readout.z)?;
    let q = cfg.readout.q;
    let c = |x: f64| povm_correct(x, p, q).map(|c| c.value);
    Ok([Some(m), Some(c(m)?), Some(c(lo)?), Some(c(hi)?)])
}

impl AverageRow {
    /// Group average from raw counts, corrected with reference fraction `p`.
    pub fn from_counts(cfg: &ExperimentConfig, group: &str, point_value: f64, k: u64, n: u64, p: f64) -> Result<Self> {
        let [m, m_corr, wilson_lo, wilson_hi] = corrected(k, n, p, cfg)?;
        Ok(Self {
            group: group.to_string(),
            point_value,
            k,
            n,
            p,
            m,
            m_corr,
            wilson_lo,
            wilson_hi,
        })
    }
}

/// Runs the configured experiment end to end.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let array = cfg.trap_array()?;
    let reg = cfg.register_spec(&array)?;
    let plan = build_plan(cfg, &array, &reg)?;
    let seed = SeedSpec::new(cfg.seed);
    let shots = cfg.shots as u64;

    let runners = plan
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| Runner::new(&array, &p.seq, &cfg.noise, &cfg.imaging).map_err(|e| Error::from(e).at_point(i)))
        .collect::<Result<Vec<_>>>()?;

    let total = shots * runners.len() as u64;
    let (schedule, cycle) = occupancy_schedule(cfg, &array, &reg, total, &seed, |occ, g| {
        runners[(g / shots) as usize].losses(occ, &seed, g)
    })?;

    let mut reg_index = vec![None; array.len()];
    for (i, (site, _)) in plan.sites.iter().enumerate() {
        reg_index[*site] = Some(i);
    }
    let keep_shots = cfg.output.shots_csv;
    let tallies = runners
        .par_iter()
        .enumerate()
        .map(|(pi, runner)| {
            let mut t = Tally {
                k: vec![0; plan.sites.len()],
                n: vec![0; plan.sites.len()],
                ..Tally::default()
            };
            for s in 0..shots {
                let g = pi as u64 * shots + s;
                let rec = runner
                    .run_shot(&schedule[g as usize], &seed, g)
                    .map_err(|e| Error::from(e).at_point(pi))?;
                let Some(image) = rec.images.first() else { continue };
                for site in &image.sites {
                    let bright = site.class1 && site.post_selected();
                    match reg_index[site.site] {
                        Some(i) => {
                            t.k[i] += bright as u64;
                            t.n[i] += site.post_selected() as u64;
                        }
                        None => {
                            t.ref_k += bright as u64;
                            t.ref_n += site.post_selected() as u64;
                        }
                    }
                    if keep_shots {
                        let (r, c) = array.coords(site.site);
                        t.shots.push(ShotRow {
                            shot_index: g,
                            site_row: r,
                            site_col: c,
                            image1_counts: site.counts1,
                            image2_counts: site.counts2,
                            class1: site.class1,
                            class2: site.class2,
                            post_selected: site.post_selected(),
                        });
                    }
                }
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sites = Vec::new();
    let mut averages = Vec::new();
    let groups = plan.groups();
    let mut shots_out = Vec::new();
    for (pi, (t, point)) in tallies.into_iter().zip(&plan.points).enumerate() {
        let p = if cfg.readout.correct {
            if t.ref_n == 0 {
                return Err(Error::from(ReadoutError::NoReferenceAtoms).at_point(pi));
            }
            t.ref_k as f64 / t.ref_n as f64
        } else {
            0.0
        };
        if p + cfg.readout.q >= 1.0 {
            return Err(Error::from(ReadoutError::DegenerateConfusion(p + cfg.readout.q)).at_point(pi));
        }
        for (i, (site, _)) in plan.sites.iter().enumerate() {
            let (r, c) = array.coords(*site);
            let [m, m_corr, wilson_lo, wilson_hi] = corrected(t.k[i], t.n[i], p, cfg)?;
            sites.push(SiteRow {
                point_value: point.value,
                site_row: r,
                site_col: c,
                k: t.k[i],
                n: t.n[i],
                m,
                m_corr,
                wilson_lo,
                wilson_hi,
            });
        }
        for g in &groups {
            let (k, n) = plan
                .sites
                .iter()
                .enumerate()
                .filter(|(_, (_, grp))| grp == g)
                .fold((0, 0), |(k, n), (i, _)| (k + t.k[i], n + t.n[i]));
            averages.push(AverageRow::from_counts(cfg, g, point.value, k, n, p)?);
        }
        shots_out.extend(t.shots);
    }

    let mut out = RunOutput {
        config: cfg.clone(),
        point_values: plan.points.iter().map(|p| p.value).collect(),
        sites,
        averages,
        fits: BTreeMap::new(),
        fit_errors: BTreeMap::new(),
        cycle,
        shots: shots_out,
    };
    if !plan.points.is_empty() {
        fit_outputs(&mut out, &plan, &array);
    }
    Ok(out)
}

/// Discards the fits of `out` and repeats them from its current rows.
pub fn refit(out: &mut RunOutput) -> Result<()> {
    let array = out.config.trap_array()?;
    let reg = out.config.register_spec(&array)?;
    let plan = build_plan(&out.config, &array, &reg)?;
    out.fits.clear();
    out.fit_errors.clear();
    if !plan.points.is_empty() {
        fit_outputs(out, &plan, &array);
    }
    Ok(())
}

/// Weighted points from rows; weight is the inverse squared half-width of
/// the corrected Wilson interval.
fn fit_points<'a, I>(rows: I) -> Vec<FitPoint>
where
    I: Iterator<Item = (f64, u64, Option<f64>, Option<f64>, Option<f64>)> + 'a,
{
    rows.filter_map(|(x, n, y, lo, hi)| {
        let (y, lo, hi) = (y?, lo?, hi?);
        let half = (0.5 * (hi - lo)).max(0.5 / n as f64);
        Some(FitPoint::new(x, y, 1.0 / (half * half)))
    })
    .collect()
}

fn average_points(out: &RunOutput, group: &str) -> Vec<FitPoint> {
    fit_points(
        out.averages
            .iter()
            .filter(|a| a.group == group)
            .map(|a| (a.point_value, a.n, a.m_corr, a.wilson_lo, a.wilson_hi)),
    )
}

fn record(
    out: &mut RunOutput,
    name: &str,
    fit: Result<FitResult, crate::analysis::AnalysisError>,
) -> Option<FitResult> {
    match fit {
        Ok(f) => {
            out.fits.insert(name.to_string(), f.clone());
            Some(f)
        }
        Err(e) => {
            out.fit_errors.insert(name.to_string(), e.to_string());
            None
        }
    }
}

fn fit_outputs(out: &mut RunOutput, plan: &ExperimentPlan, array: &TrapArray) {
    let cfg = out.config.clone();
    match &cfg.experiment {
        ExperimentKind::ResonanceScan { .. } => {}
        ExperimentKind::RabiScan { .. } => {
            let pts = average_points(out, "all");
            let start = SinusoidParams {
                a: 0.5,
                b: 0.5,
                f: cfg.drive.rabi_hz,
                phi: std::f64::consts::PI,
                tau: f64::INFINITY,
            };
            record(out, "all", fit_decaying_sinusoid(&pts, &start, &SinusoidMask::free()));
        }
        ExperimentKind::T1Checkerboard { .. } => {
            let span = out.point_values.iter().copied().fold(0.0, f64::max).max(1e-3);
            // Relaxation heads for the equal mixture, so the offset is held.
            for (g, a0) in [("driven", 0.5), ("undriven", -0.5)] {
                let pts = average_points(out, g);
                record(
                    out,
                    g,
                    fit_exponential_decay(&pts, [a0, 0.5, 10.0 * span], [false, true, false]),
                );
            }
            let d = average_points(out, "driven");
            let u = average_points(out, "undriven");
            let diff: Vec<FitPoint> = d
                .iter()
                .zip(&u)
                .map(|(a, b)| FitPoint::new(a.t, a.y - b.y, 1.0 / (1.0 / a.w + 1.0 / b.w)))
                .collect();
            record(
                out,
                "difference",
                fit_exponential_decay(&diff, [1.0, 0.0, span], [false, true, false]),
            );
        }
        ExperimentKind::RamseyGrid { .. } => {
            for (site, _) in &plan.sites {
                let (r, c) = array.coords(*site);
                let pts = fit_points(
                    out.sites
                        .iter()
                        .filter(|s| s.site_row == r && s.site_col == c)
                        .map(|s| (s.point_value, s.n, s.m_corr, s.wilson_lo, s.wilson_hi)),
                );
                let mut start = guess_sinusoid(&pts);
                start.a = start.a.max(0.1);
                let mask = SinusoidMask {
                    tau: true,
                    ..SinusoidMask::free()
                };
                record(
                    out,
                    &format!("site_{r}_{c}"),
                    fit_decaying_sinusoid(&pts, &start, &mask),
                );
            }
        }
        ExperimentKind::T2star {
            window_s,
            offsets_s,
            artificial_hz,
            phase,
            ..
        } => {
            // The fringe frequency is the programmed phase advance; amplitude
            // and phase come from the first window.
            let pts = average_points(out, "all");
            let first_end = offsets_s.first().copied().unwrap_or(0.0) + window_s;
            let early: Vec<FitPoint> = pts.iter().copied().filter(|p| p.t <= first_end + 1e-12).collect();
            let start = SinusoidParams {
                a: 0.5,
                b: 0.5,
                f: *artificial_hz,
                phi: *phase,
                tau: f64::INFINITY,
            };
            let mask = SinusoidMask {
                f: true,
                tau: true,
                ..SinusoidMask::free()
            };
            let Some(first) = record(out, "first_window", fit_decaying_sinusoid(&early, &start, &mask)) else {
                return;
            };
            let start = SinusoidParams {
                a: first.get("a"),
                b: first.get("b"),
                f: first.get("f"),
                phi: first.get("phi"),
                tau: 10.0,
            };
            let mask = SinusoidMask {
                a: true,
                f: true,
                phi: true,
                ..SinusoidMask::free()
            };
            record(out, "all", fit_decaying_sinusoid(&pts, &start, &mask));
        }
        ExperimentKind::Echo { n_osc, early_s, .. } => {
            let pts = average_points(out, "all");
            let early: Vec<FitPoint> = pts.iter().copied().filter(|p| p.t <= *early_s).collect();
            let Some(phase) = record(out, "log_phase", fit_log_phase(&early, *n_osc)) else {
                return;
            };
            let fit = fit_log_echo(&pts, phase.get("n_osc"), phase.get("phi"));
            record(out, "all", fit);
        }
    }
}
