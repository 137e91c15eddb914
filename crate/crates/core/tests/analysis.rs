// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

use rand_distr::{Binomial, Distribution};
use spinreg::analysis::{fit_decaying_sinusoid, fit_log_echo, wilson_interval, FitPoint, SinusoidMask, SinusoidParams};
use spinreg::seed::SeedSpec;

/// Exact coverage of the 95% interval at p = 0.3, n = 50, summed over the
/// binomial distribution.
const EXACT_COVERAGE: f64 = 0.956_659_611_576_412;

#[test]
fn wilson_coverage_by_monte_carlo() {
    let (p, n) = (0.3, 50u64);
    let exact: f64 = (0..=n)
        .filter(|&k| {
            let (lo, hi) = wilson_interval(k, n, 1.96).unwrap();
            lo <= p && p <= hi
        })
        .map(|k| {
            let ln_c: f64 = (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum();
            (ln_c + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
        })
        .sum();
    assert!((exact - EXACT_COVERAGE).abs() < 1e-12);

    let mut rng = SeedSpec::new(9).rng("coverage", &[]);
    let dist = Binomial::new(n, p).unwrap();
    let reps = 10_000;
    let hits = (0..reps)
        .filter(|_| {
            let (lo, hi) = wilson_interval(dist.sample(&mut rng), n, 1.96).unwrap();
            lo <= p && p <= hi
        })
        .count();
    let coverage = hits as f64 / reps as f64;
    assert!((0.94..=0.96).contains(&coverage), "coverage {coverage}");
}

#[test]
fn wilson_matches_quadratic_roots() {
    for (k, n) in [(0u64, 10u64), (3, 10), (50, 100), (99, 100), (7, 7)] {
        let z = 1.96f64;
        let (nf, kf) = (n as f64, k as f64);
        // (n + z²) p² - (2k + z²) p + k²/n = 0
        let (a, b, c) = (nf + z * z, -(2.0 * kf + z * z), kf * kf / nf);
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        let (lo, hi) = wilson_interval(k, n, z).unwrap();
        assert!((lo - (-b - disc) / (2.0 * a)).abs() < 1e-12);
        assert!((hi - (-b + disc) / (2.0 * a)).abs() < 1e-12);
    }
}

fn objective(points: &[FitPoint], f: impl Fn(f64) -> f64) -> f64 {
    points.iter().map(|p| p.w * (p.y - f(p.t)).powi(2)).sum()
}

#[test]
fn noiseless_fits_reach_the_global_minimum() {
    let truth = SinusoidParams {
        a: 0.45,
        b: 0.52,
        f: 700.0,
        phi: 1.1,
        tau: 0.004,
    };
    let pts: Vec<FitPoint> = (0..120)
        .map(|i| {
            let t = i as f64 * 5e-5;
            FitPoint::unweighted(t, truth.eval(t))
        })
        .collect();
    let start = SinusoidParams {
        f: 690.0,
        phi: 0.0,
        tau: 0.01,
        a: 0.4,
        b: 0.5,
    };
    let fit = fit_decaying_sinusoid(&pts, &start, &SinusoidMask::free()).unwrap();
    let got = SinusoidParams {
        a: fit.get("a"),
        b: fit.get("b"),
        f: fit.get("f"),
        phi: fit.get("phi"),
        tau: fit.get("tau"),
    };
    assert!(objective(&pts, |t| got.eval(t)) <= objective(&pts, |t| truth.eval(t)) + 1e-20);
    assert!((got.f - truth.f).abs() / truth.f < 1e-6);

    let echo = |t: f64| 0.5 + 0.5 * (-t / 42.0).exp() * (2.0 * std::f64::consts::PI * 2.0 * t.log10()).sin();
    let pts: Vec<FitPoint> = (0..30)
        .map(|i| {
            let t = 10f64.powf(-2.0 + i as f64 * (30f64.log10() + 2.0) / 29.0);
            FitPoint::unweighted(t, echo(t))
        })
        .collect();
    let fit = fit_log_echo(&pts, 2.0, 0.0).unwrap();
    assert!((fit.get("tau") - 42.0).abs() / 42.0 < 1e-6);
}

#[test]
fn binomial_noise_keeps_fits_unbiased() {
    // Decaying fringe sampled at 500 shots per point; the fitted frequency
    // should land within a few standard errors of the truth.
    let truth = SinusoidParams {
        a: 0.5,
        b: 0.5,
        f: 1000.0,
        phi: 0.3,
        tau: f64::INFINITY,
    };
    let mut rng = SeedSpec::new(12).rng("noise", &[]);
    let pts: Vec<FitPoint> = (0..41)
        .map(|i| {
            let t = i as f64 * 1e-4;
            let p = truth.eval(t).clamp(0.0, 1.0);
            let k = Binomial::new(500, p).unwrap().sample(&mut rng);
            FitPoint::new(t, k as f64 / 500.0, 500.0 / (p * (1.0 - p)).max(1e-3))
        })
        .collect();
    let start = SinusoidParams { f: 990.0, ..truth };
    let mask = SinusoidMask {
        tau: true,
        ..SinusoidMask::free()
    };
    let fit = fit_decaying_sinusoid(&pts, &start, &mask).unwrap();
    assert!((fit.get("f") - 1000.0).abs() < 4.0 * fit.sigma("f"));
    assert!((fit.get("phi") - 0.3).abs() < 4.0 * fit.sigma("phi"));
}
