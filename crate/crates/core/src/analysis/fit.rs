// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Decay-model fits. Decay is fitted as a rate `1/tau` so that `tau = inf`
//! is an interior point; results report both.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmOptions};
use super::AnalysisError;

/// Abscissa, value and weight (inverse variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub t: f64,
    pub y: f64,
    pub w: f64,
}

impl FitPoint {
    pub fn new(t: f64, y: f64, w: f64) -> Self {
        Self { t, y, w }
    }

    pub fn unweighted(t: f64, y: f64) -> Self {
        Self { t, y, w: 1.0 }
    }
}

mod nonfinite {
    //! Numbers in JSON, with `"inf"`, `"-inf"` and `"nan"` for the rest.
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|(k, v)| (k, to_repr(*v)))
            .collect::<BTreeMap<_, _>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let raw = BTreeMap::<String, Repr>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let x = match v {
                    Repr::Num(x) => x,
                    Repr::Text(t) => match t.as_str() {
                        "inf" => f64::INFINITY,
                        "-inf" => f64::NEG_INFINITY,
                        "nan" => f64::NAN,
                        other => return Err(serde::de::Error::custom(format!("bad number {other:?}"))),
                    },
                };
                Ok((k, x))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(with = "nonfinite")]
    pub params: BTreeMap<String, f64>,
    /// One-sigma uncertainties; zero for fixed parameters.
    #[serde(with = "nonfinite")]
    pub sigmas: BTreeMap<String, f64>,
    pub fixed: Vec<String>,
    /// Weighted residual norm.
    pub residual: f64,
    pub converged: bool,
    /// Free parameters whose uncertainty exceeds their magnitude.
    #[serde(default)]
    pub poorly_constrained: Vec<String>,
}

impl FitResult {
    /// Parameter value; panics on an unknown name.
    pub fn get(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.sigmas[name]
    }

    pub fn is_fixed(&self, name: &str) -> bool {
        self.fixed.iter().any(|f| f == name)
    }
}

/// `y = b + a exp(-t/tau) cos(2 pi f t + phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidParams {
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub phi: f64,
    pub tau: f64,
}

impl SinusoidParams {
    pub fn eval(&self, t: f64) -> f64 {
        self.b + self.a * (-t / self.tau).exp() * (2.0 * PI * self.f * t + self.phi).cos()
    }
}

/// Parameters held at their start value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SinusoidMask {
    pub a: bool,
    pub b: bool,
    pub f: bool,
    pub phi: bool,
    pub tau: bool,
}

impl SinusoidMask {
    pub fn free() -> Self {
        Self::default()
    }

    fn as_array(&self) -> [bool; 5] {
        [self.a, self.b, self.f, self.phi, self.tau]
    }
}

fn rate(tau: f64) -> f64 {
    if tau.is_infinite() {
        0.0
    } else {
        1.0 / tau
    }
}

fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn check_points(points: &[FitPoint], free: usize) -> Result<(), AnalysisError> {
    if points
        .iter()
        .any(|p| !p.t.is_finite() || !p.y.is_finite() || !(p.w >= 0.0) || !p.w.is_finite())
    {
        return Err(AnalysisError::NonFinite);
    }
    let used = points.iter().filter(|p| p.w > 0.0).count();
    if used < free + 2 {
        return Err(AnalysisError::Underdetermined { points: used, free });
    }
    Ok(())
}

struct Solved {
    x: Vec<f64>,
    sig: Vec<f64>,
    cost: f64,
    converged: bool,
}

/// Weighted least squares of `model(x, t, grad) -> y` over the parameters
/// with `free[i]`.
fn solve<M>(points: &[FitPoint], x0: &[f64], free: &[bool], model: &M) -> Solved
where
    M: Fn(&[f64], f64, &mut [f64]) -> f64,
{
    let idx: Vec<usize> = (0..x0.len()).filter(|&i| free[i]).collect();
    let n = points.len();
    let mut full = x0.to_vec();
    let eval = |z: &[f64]| {
        let mut x = x0.to_vec();
        for (k, &i) in idx.iter().enumerate() {
            x[i] = z[k];
        }
        let mut g = vec![0.0; x.len()];
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, idx.len());
        for (row, p) in points.iter().enumerate() {
            let sw = p.w.sqrt();
            r[row] = sw * (model(&x, p.t, &mut g) - p.y);
            for (k, &i) in idx.iter().enumerate() {
                j[(row, k)] = sw * g[i];
            }
        }
        (r, j)
    };
    let z0: Vec<f64> = idx.iter().map(|&i| x0[i]).collect();
    let out = minimize(eval, &z0, LmOptions::default());
    let mut sig = vec![0.0; x0.len()];
    for (k, &i) in idx.iter().enumerate() {
        full[i] = out.x[k];
        sig[i] = out.covariance[(k, k)].max(0.0).sqrt();
    }
    Solved {
        x: full,
        sig,
        cost: out.cost,
        converged: out.converged,
    }
}

fn best_of(starts: Vec<Solved>) -> Result<Solved, AnalysisError> {
    starts
        .into_iter()
        .filter(|s| s.converged && s.cost.is_finite())
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .ok_or(AnalysisError::NoConvergence(LmOptions::default().max_iter))
}

struct Reported<'a> {
    names: &'a [&'a str],
    fixed: &'a [bool],
}

fn build_result(rep: Reported<'_>, values: &[f64], sigmas: &[f64], cost: f64) -> FitResult {
    let mut params = BTreeMap::new();
    let mut sig = BTreeMap::new();
    let mut fixed = Vec::new();
    let mut poorly = Vec::new();
    for (i, name) in rep.names.iter().enumerate() {
        params.insert(name.to_string(), values[i]);
        sig.insert(name.to_string(), sigmas[i]);
        if rep.fixed[i] {
            fixed.push(name.to_string());
        } else if !(sigmas[i] <= values[i].abs()) {
            poorly.push(name.to_string());
        }
    }
    FitResult {
        params,
        sigmas: sig,
        fixed,
        residual: cost.sqrt(),
        converged: true,
        poorly_constrained: poorly,
    }
}

/// Adds `tau`/`decay_rate` entries from a fitted rate at index `k`.
fn tau_entries(values: &mut Vec<f64>, sigmas: &mut Vec<f64>, k: usize, tau_in: f64, tau_fixed: bool) {
    let g = values[k];
    let sg = sigmas[k];
    let (tau, stau) = if tau_fixed {
        (tau_in, 0.0)
    } else if g == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (1.0 / g, sg / (g * g))
    };
    values[k] = tau;
    sigmas[k] = stau;
    values.push(g);
    sigmas.push(sg);
}

/// Coarse least-squares periodogram plus mean and spread.
pub fn guess_sinusoid(points: &[FitPoint]) -> SinusoidParams {
    let n = points.len().max(1) as f64;
    let b = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mut ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    ts.sort_by(f64::total_cmp);
    let span = ts.last().copied().unwrap_or(0.0) - ts.first().copied().unwrap_or(0.0);
    let min_dt = ts
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut best = (0.0, 0.0, 0.0, 0.0);
    if span > 0.0 && min_dt.is_finite() {
        let f_max = 0.5 / min_dt;
        let df = 0.1 / span;
        let steps = ((f_max / df) as usize).min(20_000);
        for s in 1..=steps {
            let f = s as f64 * df;
            let (mut cc, mut ss, mut cs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for p in points {
                let (sn, cn) = (2.0 * PI * f * p.t).sin_cos();
                let y = p.y - b;
                cc += cn * cn;
                ss += sn * sn;
                cs += cn * sn;
                yc += y * cn;
                ys += y * sn;
            }
            let det = cc * ss - cs * cs;
            if det.abs() < 1e-12 {
                continue;
            }
            let c1 = (yc * ss - ys * cs) / det;
            let s1 = (ys * cc - yc * cs) / det;
            let power = c1 * yc + s1 * ys;
            if power > best.0 {
                best = (power, f, c1, s1);
            }
        }
    }
    let (_, f, c1, s1) = best;
    SinusoidParams {
        a: (c1 * c1 + s1 * s1).sqrt(),
        b,
        f,
        phi: (-s1).atan2(c1),
        tau: f64::INFINITY,
    }
}

/// Fits `y = b + a exp(-t/tau) cos(2 pi f t + phi)`. Fixed parameters keep
/// their `start` values; free phase is tried from four starting points.
pub fn fit_decaying_sinusoid(
    points: &[FitPoint],
    start: &SinusoidParams,
    fixed: &SinusoidMask,
) -> Result<FitResult, AnalysisError> {
    let mask = fixed.as_array();
    let free: Vec<bool> = mask.iter().map(|m| !m).collect();
    check_points(points, free.iter().filter(|f| **f).count())?;
    let model = |x: &[f64], t: f64, g: &mut [f64]| {
        let (a, b, f, phi, gam) = (x[0], x[1], x[2], x[3], x[4]);
        let e = (-gam * t).exp();
        let arg = 2.0 * PI * f * t + phi;
        let (s, c) = arg.sin_cos();
        g[0] = e * c;
        g[1] = 1.0;
        g[2] = -a * e * s * 2.0 * PI * t;
        g[3] = -a * e * s;
        g[4] = -t * a * e * c;
        b + a * e * c
    };
    let base = [start.a, start.b, start.f, start.phi, rate(start.tau)];
    let phases: Vec<f64> = if fixed.phi {
        vec![start.phi]
    } else {
        let mut v = vec![start.phi];
        v.extend([0.0, 0.5 * PI, PI, 1.5 * PI].into_iter().filter(|g| *g != start.phi));
        v
    };
    let runs = phases
        .into_iter()
        .map(|phi| {
            let mut x0 = base;
            x0[3] = phi;
            solve(points, &x0, &free, &model)
        })
        .collect();
    let mut best = best_of(runs)?;
    if !fixed.a && !fixed.phi && best.x[0] < 0.0 {
        best.x[0] = -best.x[0];
        best.x[3] += PI;
    }
    if !fixed.phi {
        best.x[3] = wrap_phase(best.x[3]);
    }
    let mut values = best.x.clone();
    let mut sigmas = best.sig.clone();
    // Fixed parameters echo their inputs.
    for (i, v) in [start.a, start.b, start.f, start.phi].iter().enumerate() {
        if mask[i] {
            values[i] = *v;
        }
    }
    tau_entries(&mut values, &mut sigmas, 4, start.tau, fixed.tau);
    let mut fixed_flags = mask.to_vec();
    fixed_flags.push(fixed.tau);
    Ok(build_result(
        Reported {
            names: &["a", "b", "f", "phi", "tau", "decay_rate"],
            fixed: &fixed_flags,
        },
        &values,
        &sigmas,
        best.cost,
    ))
}

/// `y = b + a exp(-t/tau)`; `fixed` is `[a, b, tau]`.
pub fn fit_exponential_decay(
    points: &[FitPoint],
    start: [f64; 3],
    fixed: [bool; 3],
) -> Result<FitResult, AnalysisError> {
    let free: Vec<bool> = fixed.iter().map(|m| !m).collect();
    check_points(points, free.iter().filter(|f| **f).count())?;
    let model = |x: &[f64], t: f64, g: &mut [f64]| {
        let e = (-x[2] * t).exp();
        g[0] = e;
        g[1] = 1.0;
        g[2] = -t * x[0] * e;
        x[1] + x[0] * e
    };
    let span = points.iter().map(|p| p.t).fold(0.0, f64::max).max(1e-300);
    let mut starts = vec![rate(start[2])];
    if !fixed[2] {
        starts.extend([0.1 / span, 1.0 / span, 10.0 / span]);
    }
    let runs = starts
        .into_iter()
        .map(|g| solve(points, &[start[0], start[1], g], &free, &model))
        .collect();
    let best = best_of(runs)?;
    let mut values = best.x.clone();
    let mut sigmas = best.sig.clone();
    for i in 0..2 {
        if fixed[i] {
            values[i] = start[i];
        }
    }
    tau_entries(&mut values, &mut sigmas, 2, start[2], fixed[2]);
    Ok(build_result(
        Reported {
            names: &["a", "b", "tau", "decay_rate"],
            fixed: &[fixed[0], fixed[1], fixed[2], fixed[2]],
        },
        &values,
        &sigmas,
        best.cost,
    ))
}

fn log_model(x: &[f64], t: f64, g: &mut [f64]) -> f64 {
    // x = [a, b, rate, n_osc, phi]
    let (a, b, gam, n, phi) = (x[0], x[1], x[2], x[3], x[4]);
    let e = (-gam * t).exp();
    let l = t.log10();
    let (s, c) = (phi + 2.0 * PI * n * l).sin_cos();
    g[0] = e * s;
    g[1] = 1.0;
    g[2] = -t * a * e * s;
    g[3] = a * e * c * 2.0 * PI * l;
    g[4] = a * e * c;
    b + a * e * s
}

fn check_times(points: &[FitPoint]) -> Result<(), AnalysisError> {
    match points.iter().find(|p| !(p.t > 0.0)) {
        Some(p) => Err(AnalysisError::NonPositiveTime(p.t)),
        None => Ok(()),
    }
}

/// No-decay fit of `y = b + a sin(phi + 2 pi n log10 t)` over `{a, b, n, phi}`.
pub fn fit_log_phase(points: &[FitPoint], n_start: f64) -> Result<FitResult, AnalysisError> {
    check_times(points)?;
    let free = [true, true, false, true, true];
    check_points(points, 4)?;
    let b0 = points.iter().map(|p| p.y).sum::<f64>() / points.len() as f64;
    let a0 = points.iter().map(|p| (p.y - b0).abs()).fold(0.0, f64::max);
    let runs = [0.0, 0.5 * PI, PI, 1.5 * PI]
        .into_iter()
        .map(|phi| solve(points, &[a0, b0, 0.0, n_start, phi], &free, &log_model))
        .collect();
    let mut best = best_of(runs)?;
    if best.x[0] < 0.0 {
        best.x[0] = -best.x[0];
        best.x[4] += PI;
    }
    best.x[4] = wrap_phase(best.x[4]);
    let values = [best.x[0], best.x[1], best.x[3], best.x[4]];
    let sigmas = [best.sig[0], best.sig[1], best.sig[3], best.sig[4]];
    Ok(build_result(
        Reported {
            names: &["a", "b", "n_osc", "phi"],
            fixed: &[false; 4],
        },
        &values,
        &sigmas,
        best.cost,
    ))
}

/// Fits `y = b + a exp(-t/tau) sin(phi + 2 pi n log10 t)` over `{a, b, tau}`
/// with `n_osc` and `phi` held.
pub fn fit_log_echo(points: &[FitPoint], n_osc: f64, phi: f64) -> Result<FitResult, AnalysisError> {
    check_times(points)?;
    let free = [true, true, true, false, false];
    check_points(points, 3)?;
    let b0 = points.iter().map(|p| p.y).sum::<f64>() / points.len() as f64;
    let span = points.iter().map(|p| p.t).fold(0.0, f64::max);
    let runs = [0.0, 0.1 / span, 1.0 / span, 10.0 / span]
        .into_iter()
        .flat_map(|g| [0.5, -0.5].map(|a| (a, g)))
        .map(|(a, g)| solve(points, &[a, b0, g, n_osc, phi], &free, &log_model))
        .collect();
    let best = best_of(runs)?;
    let mut values = vec![best.x[0], best.x[1], best.x[2]];
    let mut sigmas = vec![best.sig[0], best.sig[1], best.sig[2]];
    tau_entries(&mut values, &mut sigmas, 2, f64::INFINITY, false);
    values.extend([n_osc, phi]);
    sigmas.extend([0.0, 0.0]);
    Ok(build_result(
        Reported {
            names: &["a", "b", "tau", "decay_rate", "n_osc", "phi"],
            fixed: &[false, false, false, false, true, true],
        },
        &values,
        &sigmas,
        best.cost,
    ))
}
