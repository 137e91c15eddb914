// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Spin-selective readout: shelving, two-image fluorescence, thresholding and
//! confusion correction.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{SeedSpec, StreamRng};
use crate::spin::{propagate_pulse, DriveParams, Level, SiteState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReadoutError {
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("count histogram is unimodal (fitted means {0:.2} and {1:.2})")]
    UnimodalHistogram(f64, f64),
    #[error("no post-selected reference observations")]
    NoReferenceAtoms,
    #[error("p + q = {0} leaves the confusion matrix singular")]
    DegenerateConfusion(f64),
    #[error("invalid imaging model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingModel {
    pub bright_mean: f64,
    pub dark_mean: f64,
    pub image_duration_s: f64,
    pub p_loss_per_image: f64,
    pub clock_lifetime_s: f64,
    pub shelve_error: f64,
    /// Fixed classification threshold; `None` uses the Poisson likelihood
    /// crossing of the configured means.
    pub threshold: Option<f64>,
}

impl Default for ImagingModel {
    fn default() -> Self {
        Self {
            bright_mean: 200.0,
            dark_mean: 20.0,
            image_duration_s: 0.05,
            p_loss_per_image: 0.0,
            clock_lifetime_s: 1.0,
            shelve_error: 0.0,
            threshold: None,
        }
    }
}

impl ImagingModel {
    /// No loss, no shelving error, no clock decay.
    pub fn perfect() -> Self {
        Self {
            clock_lifetime_s: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ReadoutError> {
        let bad = |m: &str| Err(ReadoutError::InvalidModel(m.into()));
        if !(self.dark_mean >= 0.0) || !(self.bright_mean > self.dark_mean) {
            return bad("need bright_mean > dark_mean >= 0");
        }
        if !(0.0..=1.0).contains(&self.p_loss_per_image) || !(0.0..=1.0).contains(&self.shelve_error) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(self.clock_lifetime_s > 0.0) || !(self.image_duration_s > 0.0) {
            return bad("clock lifetime and image duration must be positive");
        }
        Ok(())
    }

    /// Counts above this value classify as bright.
    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or_else(|| {
            if self.dark_mean > 0.0 {
                (self.bright_mean - self.dark_mean) / (self.bright_mean / self.dark_mean).ln()
            } else {
                0.5
            }
        })
    }

    pub fn classify(&self, counts: u64) -> bool {
        counts as f64 > self.threshold()
    }
}

/// Photon counts per site for one image.
pub type SiteCounts = Vec<u64>;

/// What happened to one site during a shelve-and-image step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteImage {
    pub counts1: u64,
    pub counts2: u64,
    /// Projected level, `None` for an empty site.
    pub outcome: Option<Level>,
    pub shelved: bool,
    /// Atom still trapped after both images.
    pub present_after: bool,
}

fn poisson(rng: &mut StreamRng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// When, as a fraction of each exposure, an atom is lost during the two
/// images. Drawn separately from the spin outcome so that the occupancy
/// history of a run does not depend on the qubit state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossDraw {
    pub image1: Option<f64>,
    pub image2: Option<f64>,
}

impl LossDraw {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn sample(p_loss: f64, rng: &mut StreamRng) -> Self {
        let mut one = || {
            if p_loss > 0.0 && rng.random::<f64>() < p_loss {
                Some(rng.random::<f64>())
            } else {
                None
            }
        };
        let image1 = one();
        let image2 = if image1.is_some() { None } else { one() };
        Self { image1, image2 }
    }

    pub fn survives(&self) -> bool {
        self.image1.is_none() && self.image2.is_none()
    }
}

/// Samples both images for one site. With `shelve` false the first image is
/// a plain occupancy image.
pub fn image_site(
    state: Option<&SiteState>,
    model: &ImagingModel,
    shelve: bool,
    loss: LossDraw,
    rng: &mut StreamRng,
) -> SiteImage {
    let Some(s) = state.filter(|s| !s.lost) else {
        let counts1 = poisson(rng, model.dark_mean);
        let counts2 = poisson(rng, model.dark_mean);
        return SiteImage {
            counts1,
            counts2,
            outcome: None,
            shelved: false,
            present_after: false,
        };
    };
    let u: f64 = rng.random();
    let (p_up, p_down) = (s.p_up().clamp(0.0, 1.0), s.p_down().clamp(0.0, 1.0));
    let outcome = if u < p_up {
        Level::Up
    } else if u < p_up + p_down {
        Level::Down
    } else {
        Level::Leak
    };
    let shelved = shelve && outcome == Level::Down && rng.random::<f64>() >= model.shelve_error;

    // Fraction of image 1 during which the atom scatters.
    let bright_from = if shelved && model.clock_lifetime_s.is_finite() {
        let decay = Exp::new(1.0 / model.clock_lifetime_s)
            .map(|d| d.sample(rng))
            .unwrap_or(f64::INFINITY);
        (decay / model.image_duration_s).min(1.0)
    } else if shelved {
        1.0
    } else {
        0.0
    };
    let bright_until = loss.image1.unwrap_or(1.0);
    let frac1 = (bright_until - bright_from).max(0.0);
    let counts1 = poisson(rng, model.dark_mean + (model.bright_mean - model.dark_mean) * frac1);

    let frac2 = if loss.image1.is_some() {
        0.0
    } else {
        loss.image2.unwrap_or(1.0)
    };
    let counts2 = poisson(rng, model.dark_mean + (model.bright_mean - model.dark_mean) * frac2);
    SiteImage {
        counts1,
        counts2,
        outcome: Some(outcome),
        shelved,
        present_after: loss.survives(),
    }
}

/// Shelves `|down>`, images, repumps and images again. `None` marks an empty
/// site. Each site draws from its own stream.
pub fn shelve_and_image(
    states: &[Option<SiteState>],
    model: &ImagingModel,
    seed: &SeedSpec,
) -> (SiteCounts, SiteCounts) {
    states
        .iter()
        .enumerate()
        .map(|(site, st)| {
            let loss = LossDraw::sample(model.p_loss_per_image, &mut seed.rng("image_loss", &[site as u64]));
            let mut rng = seed.rng("readout", &[site as u64]);
            let img = image_site(st.as_ref(), model, true, loss, &mut rng);
            (img.counts1, img.counts2)
        })
        .unzip()
}

fn ln_poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * lambda.ln() - lambda - ln_factorial(k)
}

fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// `P(X <= k)` for `X ~ Poisson(lambda)`.
pub fn poisson_cdf(k: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 700.0 {
        let mut term = (-lambda).exp();
        let mut sum = term;
        for i in 1..=k {
            term *= lambda / i as f64;
            sum += term;
        }
        return sum.min(1.0);
    }
    // exp(-lambda) underflows: walk outwards from the mode instead.
    let mode = lambda.floor() as u64;
    let width = (40.0 * lambda.sqrt()) as u64 + 40;
    let lo = mode.saturating_sub(width);
    let p_mode = ln_poisson_pmf(mode, lambda).exp();
    let mut below = 0.0;
    let mut term = p_mode;
    for i in (lo..mode).rev() {
        term *= (i + 1) as f64 / lambda;
        if i <= k {
            below += term;
        }
    }
    let mut above = 0.0;
    term = p_mode;
    for i in mode + 1..=mode + width {
        term *= lambda / i as f64;
        if i > k {
            above += term;
        }
    }
    if k < mode {
        below.min(1.0)
    } else {
        (1.0 - above).clamp(0.0, 1.0)
    }
}

/// Fitted two-Poisson mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub dark_mean: f64,
    pub bright_mean: f64,
    pub bright_weight: f64,
    pub threshold: f64,
    pub misclassification: f64,
}

/// Fits a dark/bright Poisson mixture by EM and returns the integer
/// threshold minimising the expected misclassification (bright iff
/// `counts > threshold`).
pub fn fit_mixture(counts: &[u64]) -> Result<MixtureFit, ReadoutError> {
    if counts.is_empty() {
        return Err(ReadoutError::EmptyHistogram);
    }
    let max = *counts.iter().max().unwrap_or(&0) as usize;
    let mut hist = vec![0u64; max + 1];
    for &c in counts {
        hist[c as usize] += 1;
    }
    let n = counts.len() as f64;
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let half = sorted.len() / 2;
    let mean = |xs: &[u64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<u64>() as f64 / xs.len() as f64
        }
    };
    let mut l0 = mean(&sorted[..half.max(1)]);
    let mut l1 = mean(&sorted[half..]);
    let mut w: f64 = 0.5;
    let ln_fact: Vec<f64> = (0..=max as u64).map(ln_factorial).collect();
    let ln_pmf = |k: usize, lambda: f64| {
        if lambda <= 0.0 {
            if k == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            k as f64 * lambda.ln() - lambda - ln_fact[k]
        }
    };
    for _ in 0..500 {
        let (mut s0, mut s1, mut k0, mut k1) = (0.0, 0.0, 0.0, 0.0);
        for (k, &h) in hist.iter().enumerate() {
            if h == 0 {
                continue;
            }
            let a = (1.0 - w).ln() + ln_pmf(k, l0);
            let b = w.ln() + ln_pmf(k, l1);
            let m = a.max(b);
            let r1 = if m == f64::NEG_INFINITY {
                0.5
            } else {
                (b - m).exp() / ((a - m).exp() + (b - m).exp())
            };
            let h = h as f64;
            s0 += h * (1.0 - r1);
            s1 += h * r1;
            k0 += h * (1.0 - r1) * k as f64;
            k1 += h * r1 * k as f64;
        }
        let (n0, n1) = (if s0 > 0.0 { k0 / s0 } else { l0 }, if s1 > 0.0 { k1 / s1 } else { l1 });
        let nw = (s1 / n).clamp(1e-12, 1.0 - 1e-12);
        let done = (n0 - l0).abs() < 1e-10 && (n1 - l1).abs() < 1e-10 && (nw - w).abs() < 1e-12;
        l0 = n0;
        l1 = n1;
        w = nw;
        if done {
            break;
        }
    }
    let (dark, bright) = if l0 <= l1 { (l0, l1) } else { (l1, l0) };
    if bright - dark <= 3.0 * bright.max(dark).sqrt() || !(bright > 0.0) {
        return Err(ReadoutError::UnimodalHistogram(dark, bright));
    }
    let wb = if l0 <= l1 { w } else { 1.0 - w };
    let mut best = (f64::INFINITY, dark.floor() as u64);
    for k in dark.floor() as u64..=bright.ceil() as u64 {
        let err = (1.0 - wb) * (1.0 - poisson_cdf(k, dark)) + wb * poisson_cdf(k, bright);
        if err < best.0 {
            best = (err, k);
        }
    }
    Ok(MixtureFit {
        dark_mean: dark,
        bright_mean: bright,
        bright_weight: wb,
        threshold: best.1 as f64,
        misclassification: best.0,
    })
}

pub fn choose_threshold(counts: &[u64]) -> Result<f64, ReadoutError> {
    fit_mixture(counts).map(|m| m.threshold)
}

/// One reference-atom observation: first-image class and post-selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceObservation {
    pub bright: bool,
    pub post_selected: bool,
}

/// Bright fraction among post-selected reference observations.
pub fn estimate_p_reference(obs: &[ReferenceObservation]) -> Result<f64, ReadoutError> {
    let (bright, total) = obs
        .iter()
        .filter(|o| o.post_selected)
        .fold((0usize, 0usize), |(b, t), o| (b + o.bright as usize, t + 1));
    if total == 0 {
        return Err(ReadoutError::NoReferenceAtoms);
    }
    Ok(bright as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corrected {
    pub value: f64,
    pub clamped: bool,
}

/// `(m - p) / (1 - p - q)`, clamped to `[0, 1]`.
pub fn povm_correct(m: f64, p: f64, q: f64) -> Result<Corrected, ReadoutError> {
    if p + q >= 1.0 {
        return Err(ReadoutError::DegenerateConfusion(p + q));
    }
    let raw = (m - p) / (1.0 - p - q);
    let value = raw.clamp(0.0, 1.0);
    Ok(Corrected {
        value,
        clamped: value != raw,
    })
}

/// Clock-transition probe used for spin-selective shelving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockDrive {
    pub rabi_hz: f64,
    pub duration_s: f64,
    /// `|up>` clock line sits this far above the `|down>` line.
    pub zeeman_splitting_hz: f64,
}

impl ClockDrive {
    pub fn pi_pulse(rabi_hz: f64, zeeman_splitting_hz: f64) -> Self {
        Self {
            rabi_hz,
            duration_s: 0.5 / rabi_hz,
            zeeman_splitting_hz,
        }
    }
}

/// Shelved fraction of a state prepared in `prepared`, with the clock laser
/// detuned by `clock_detuning_hz` from the `|down>` line.
pub fn shelving_spectrum(prepared: Level, clock_detuning_hz: f64, drive: &ClockDrive) -> f64 {
    let offset = match prepared {
        Level::Up => drive.zeeman_splitting_hz,
        _ => 0.0,
    };
    let d = DriveParams::two_level(drive.rabi_hz, clock_detuning_hz - offset);
    propagate_pulse(&SiteState::down(), &d, drive.duration_s.max(0.0))
        .map(|s| s.p_up())
        .unwrap_or(0.0)
}
