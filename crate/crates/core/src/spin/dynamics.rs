// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Driven and free evolution of a single site.
//!
//! Driven Hamiltonian in Hz (multiplied by `2*pi` before exponentiating):
//!
//! ```text
//! H = (W/2)(e^{-i phi}|up><down| + h.c.) + (c W/2)(|L><up| + h.c.)
//!     + delta |up><up| + delta_L |L><L|
//! ```
//!
//! With `|down>` at the south pole, a resonant pulse of length `t` rotates
//! the Bloch vector by `2*pi*W*t` about `(cos phi, sin phi, 0)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::{expm, CMatrix3, SiteState, DOWN, LEAK, UP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("duration must be non-negative, got {0}")]
    NegativeDuration(f64),
    #[error("site is marked lost")]
    LostSite,
    #[error("invalid drive: {0}")]
    InvalidDrive(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveParams {
    pub rabi_hz: f64,
    pub phase: f64,
    pub detuning_hz: f64,
    /// Leakage coupling as a fraction of the qubit Rabi frequency.
    pub leakage_ratio: f64,
    pub stark_shift_hz: f64,
    pub stark_beam_on: bool,
    pub stark_scatter_rate_hz: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        Self {
            rabi_hz: 1160.0,
            phase: 0.0,
            detuning_hz: 0.0,
            leakage_ratio: 1.0,
            stark_shift_hz: 20e3,
            stark_beam_on: true,
            stark_scatter_rate_hz: 1.0,
        }
    }
}

impl DriveParams {
    /// Pure two-level drive: no leakage coupling, no scattering.
    pub fn two_level(rabi_hz: f64, detuning_hz: f64) -> Self {
        Self {
            rabi_hz,
            detuning_hz,
            leakage_ratio: 0.0,
            stark_scatter_rate_hz: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.rabi_hz >= 0.0) || !self.rabi_hz.is_finite() {
            return Err(DynamicsError::InvalidDrive(format!("rabi frequency {}", self.rabi_hz)));
        }
        if !(self.stark_scatter_rate_hz >= 0.0) {
            return Err(DynamicsError::InvalidDrive(format!(
                "scatter rate {}",
                self.stark_scatter_rate_hz
            )));
        }
        if !self.phase.is_finite() || !self.detuning_hz.is_finite() || !self.leakage_ratio.is_finite() {
            return Err(DynamicsError::InvalidDrive("non-finite parameter".into()));
        }
        Ok(())
    }

    fn effective_stark(&self) -> f64 {
        if self.stark_beam_on {
            self.stark_shift_hz
        } else {
            0.0
        }
    }

    /// Hamiltonian in Hz.
    pub fn hamiltonian(&self) -> CMatrix3 {
        let mut h = CMatrix3::zeros();
        let half = 0.5 * self.rabi_hz;
        h[(UP, DOWN)] = Complex64::from_polar(half, -self.phase);
        h[(DOWN, UP)] = h[(UP, DOWN)].conj();
        let leak = Complex64::new(0.5 * self.leakage_ratio * self.rabi_hz, 0.0);
        h[(LEAK, UP)] = leak;
        h[(UP, LEAK)] = leak;
        h[(UP, UP)] = Complex64::new(self.detuning_hz, 0.0);
        h[(LEAK, LEAK)] = Complex64::new(self.effective_stark(), 0.0);
        h
    }

    /// `exp(-2 pi i H t)`.
    pub fn propagator(&self, duration: f64) -> CMatrix3 {
        expm(&(self.hamiltonian() * Complex64::new(0.0, -2.0 * PI * duration)))
    }

    /// Time for a resonant rotation by `theta`.
    pub fn duration_for_angle(&self, theta: f64) -> f64 {
        theta / (2.0 * PI * self.rabi_hz)
    }
}

/// Relaxation and dephasing. `T2` follows from `1/T2 = 1/(2 T1) + 1/T_phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub t1_s: f64,
    pub t_phi_s: f64,
    /// Standard deviation of the per-site, per-shot fractional Rabi error.
    pub rabi_miscal_frac: f64,
    /// Standard deviation of the per-site, per-shot qubit frequency offset.
    pub freq_jitter_hz: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl NoiseModel {
    pub fn ideal() -> Self {
        Self {
            t1_s: f64::INFINITY,
            t_phi_s: f64::INFINITY,
            rabi_miscal_frac: 0.0,
            freq_jitter_hz: 0.0,
        }
    }

    /// Pure dephasing chosen so the coherence time is `t2_s` with `T1 = inf`.
    pub fn with_t2(t2_s: f64) -> Self {
        Self {
            t_phi_s: t2_s,
            ..Self::ideal()
        }
    }

    pub fn t2(&self) -> f64 {
        1.0 / (0.5 / self.t1_s + 1.0 / self.t_phi_s)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.t1_s > 0.0) || !(self.t_phi_s > 0.0) {
            return Err(DynamicsError::InvalidNoise("T1 and T_phi must be positive".into()));
        }
        if !(self.rabi_miscal_frac >= 0.0) || !(self.freq_jitter_hz >= 0.0) {
            return Err(DynamicsError::InvalidNoise(
                "standard deviations must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// No per-shot randomness in the evolution.
    pub fn is_deterministic(&self) -> bool {
        self.rabi_miscal_frac == 0.0 && self.freq_jitter_hz == 0.0
    }
}

/// Multiplies every coherence touching `level` by `lambda` (phase damping
/// of one level, completely positive for `0 <= lambda <= 1`).
fn dephase_level(rho: &mut CMatrix3, level: usize, lambda: f64) {
    if lambda == 1.0 {
        return;
    }
    for k in 0..3 {
        if k != level {
            rho[(level, k)] *= lambda;
            rho[(k, level)] *= lambda;
        }
    }
}

/// Unitary drive, with Stark-beam scattering split symmetrically around it.
pub fn propagate_pulse(s: &SiteState, d: &DriveParams, duration: f64) -> Result<SiteState, DynamicsError> {
    if s.lost {
        return Err(DynamicsError::LostSite);
    }
    if !(duration >= 0.0) {
        return Err(DynamicsError::NegativeDuration(duration));
    }
    d.validate()?;
    if duration == 0.0 {
        return Ok(*s);
    }
    Ok(apply_pulse(s, d, &d.propagator(duration), duration))
}

/// Same as [`propagate_pulse`] with a precomputed propagator.
pub(crate) fn apply_pulse(s: &SiteState, d: &DriveParams, u: &CMatrix3, duration: f64) -> SiteState {
    let mut out = *s;
    let scatter = d.stark_beam_on && d.stark_scatter_rate_hz > 0.0;
    let half = if scatter {
        (-0.5 * d.stark_scatter_rate_hz * duration).exp()
    } else {
        1.0
    };
    dephase_level(&mut out.rho, UP, half);
    out.conjugate_by(u);
    dephase_level(&mut out.rho, UP, half);
    out
}

/// Free precession at `detuning_offset_hz`, dephasing and relaxation toward
/// the equal qubit mixture. `|L>` populations are left alone.
pub fn free_evolve(
    s: &SiteState,
    duration: f64,
    detuning_offset_hz: f64,
    n: &NoiseModel,
) -> Result<SiteState, DynamicsError> {
    if !(duration >= 0.0) {
        return Err(DynamicsError::NegativeDuration(duration));
    }
    let mut out = *s;
    if duration == 0.0 {
        return Ok(out);
    }
    let rho = &mut out.rho;

    // Generalised amplitude damping at infinite temperature, extended to
    // act trivially on |L>.
    if n.t1_s.is_finite() {
        let gamma = 1.0 - (-duration / n.t1_s).exp();
        let keep = (1.0 - gamma).sqrt();
        let (pd, pu) = (rho[(DOWN, DOWN)], rho[(UP, UP)]);
        rho[(DOWN, DOWN)] = pd * (1.0 - 0.5 * gamma) + pu * (0.5 * gamma);
        rho[(UP, UP)] = pu * (1.0 - 0.5 * gamma) + pd * (0.5 * gamma);
        rho[(DOWN, UP)] *= keep;
        rho[(UP, DOWN)] *= keep;
        let leak_coh = 0.5 + 0.5 * keep;
        for q in [DOWN, UP] {
            rho[(q, LEAK)] *= leak_coh;
            rho[(LEAK, q)] *= leak_coh;
        }
    }
    if n.t_phi_s.is_finite() {
        dephase_level(rho, UP, (-duration / n.t_phi_s).exp());
    }
    if detuning_offset_hz != 0.0 {
        let phase = Complex64::from_polar(1.0, 2.0 * PI * detuning_offset_hz * duration);
        for k in [DOWN, LEAK] {
            rho[(UP, k)] *= phase;
            rho[(k, UP)] *= phase.conj();
        }
    }
    Ok(out)
}

/// Population of `|L>` after driving a site that starts in `|up>`.
pub fn leakage_fraction(d: &DriveParams, duration: f64) -> Result<f64, DynamicsError> {
    Ok(propagate_pulse(&SiteState::up(), d, duration)?.p_leak())
}
