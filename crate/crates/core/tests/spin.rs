// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use proptest::prelude::*;
use spinreg::analysis::wilson_interval;
use spinreg::model::{make_grid, Occupancy};
use spinreg::readout::ImagingModel;
use spinreg::seed::SeedSpec;
use spinreg::spin::runner::run_sequence;
use spinreg::spin::sequence::PulseSequence;
use spinreg::spin::{free_evolve, propagate_pulse, DriveParams, NoiseModel, SiteState};

#[derive(Debug, Clone)]
enum Op {
    Pulse(DriveParams, f64),
    Free(f64, f64, NoiseModel),
}

fn op() -> impl Strategy<Value = Op> {
    let pulse = (
        1.0..5e3f64,
        0.0..2.0 * PI,
        -5e3..5e3f64,
        0.0..1.5f64,
        -5e4..5e4f64,
        any::<bool>(),
        0.0..50.0f64,
        0.0..2e-3f64,
    )
        .prop_map(|(rabi, phase, det, c, stark, on, scatter, t)| {
            let d = DriveParams {
                rabi_hz: rabi,
                phase,
                detuning_hz: det,
                leakage_ratio: c,
                stark_shift_hz: stark,
                stark_beam_on: on,
                stark_scatter_rate_hz: scatter,
            };
            Op::Pulse(d, t)
        });
    let free = (
        0.0..20.0f64,
        -100.0..100.0f64,
        0.5..200.0f64,
        0.5..200.0f64,
        any::<bool>(),
    )
        .prop_map(|(t, off, t1, tphi, finite)| {
            let noise = NoiseModel {
                t1_s: if finite { t1 } else { f64::INFINITY },
                t_phi_s: tphi,
                ..NoiseModel::ideal()
            };
            Op::Free(t, off, noise)
        });
    prop_oneof![pulse, free]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trace_and_positivity_are_preserved(ops in prop::collection::vec(op(), 1..1000)) {
        let mut s = SiteState::down();
        for op in &ops {
            s = match op {
                Op::Pulse(d, t) => propagate_pulse(&s, d, *t).unwrap(),
                Op::Free(t, off, n) => free_evolve(&s, *t, *off, n).unwrap(),
            };
            prop_assert!((s.trace() - 1.0).abs() < 1e-9);
            prop_assert!(s.min_eigenvalue() >= -1e-10);
        }
    }
}

#[test]
fn rotations_compose() {
    let d = DriveParams::two_level(1160.0, 0.0);
    let half = d.duration_for_angle(PI / 2.0);
    for phi in [0.0, 0.4, PI / 2.0, 2.5] {
        let d = DriveParams { phase: phi, ..d };
        let twice = propagate_pulse(&propagate_pulse(&SiteState::down(), &d, half).unwrap(), &d, half).unwrap();
        let once = propagate_pulse(&SiteState::down(), &d, 2.0 * half).unwrap();
        assert!((twice.rho - once.rho).norm() < 1e-12);
        assert!((once.p_up() - 1.0).abs() < 1e-12);
    }
}

fn echo_p_up(offset_hz: f64, hold: f64) -> f64 {
    let d = DriveParams::two_level(1160.0, 0.0);
    let noise = NoiseModel::ideal();
    let mut s = propagate_pulse(&SiteState::down(), &d, d.duration_for_angle(PI / 2.0)).unwrap();
    s = free_evolve(&s, hold / 2.0, offset_hz, &noise).unwrap();
    let y = DriveParams { phase: PI / 2.0, ..d };
    s = propagate_pulse(&s, &y, y.duration_for_angle(PI)).unwrap();
    s = free_evolve(&s, hold / 2.0, offset_hz, &noise).unwrap();
    let last = DriveParams { phase: 0.7, ..d };
    propagate_pulse(&s, &last, last.duration_for_angle(PI / 2.0))
        .unwrap()
        .p_up()
}

#[test]
fn echo_is_insensitive_to_static_detuning() {
    for hold in [1e-3, 0.37, 5.0] {
        let reference = echo_p_up(0.0, hold);
        for k in -10..=10 {
            let off = 5.0 * k as f64;
            assert!((echo_p_up(off, hold) - reference).abs() < 1e-6, "δ={off} t={hold}");
        }
    }
}

fn p_up_from_runner(seq: &str, sites: &[usize], shots: usize, array_rc: (usize, usize)) -> Vec<(u64, u64)> {
    let array = make_grid(array_rc.0, array_rc.1, 4.0).unwrap();
    let occ = Occupancy::from_sites(&array, sites);
    let seq: PulseSequence = seq.parse().unwrap();
    let records = run_sequence(
        &array,
        &occ,
        &seq,
        &NoiseModel::ideal(),
        &ImagingModel::perfect(),
        shots,
        &SeedSpec::new(11),
    )
    .unwrap();
    let mut tally = vec![(0u64, 0u64); array.len()];
    for shot in &records.shots {
        for s in &shot.images[0].sites {
            if s.post_selected() {
                tally[s.site].0 += s.class1 as u64;
                tally[s.site].1 += 1;
            }
        }
    }
    sites.iter().map(|&s| tally[s]).collect()
}

// Family-wise 95% over the eight phases.
const Z_FAMILY: f64 = 2.734;

fn within_wilson(k: u64, n: u64, p: f64, z: f64) -> bool {
    let (lo, hi) = wilson_interval(k, n, z).unwrap();
    lo - 1e-12 <= p && p <= hi + 1e-12
}

#[test]
fn ramsey_fringe_follows_final_phase() {
    for j in 0..8 {
        let theta = j as f64 * PI / 4.0;
        let seq = format!("ROT cols=0 theta=pi/2 phi=0\nWAIT 2ms\nROT cols=0 theta=pi/2 phi={theta}\nSHELVE\nIMAGE\n");
        let expected = 0.5 * (1.0 + theta.cos());
        let [(k, n)] = p_up_from_runner(&seq, &[0], 500, (1, 1))[..] else {
            unreachable!()
        };
        assert_eq!(n, 500);
        assert!(
            within_wilson(k, n, expected, Z_FAMILY),
            "θ={theta}: {k}/{n} vs {expected}"
        );
    }
}

#[test]
fn checkerboard_survives_five_seconds() {
    let rows = 7;
    let mut text = String::new();
    for col in 0..3 {
        let driven: Vec<String> = (0..rows)
            .filter(|r| (r + col) % 2 == 0)
            .map(|r| r.to_string())
            .collect();
        text.push_str(&format!(
            "ROT cols={col} rows={} theta=pi phi=0 c=0 scatter=0\n",
            driven.join(",")
        ));
    }
    text.push_str("WAIT 5s\nSHELVE\nIMAGE\n");
    let sites: Vec<usize> = (0..21).collect();
    let tallies = p_up_from_runner(&text, &sites, 500, (7, 3));
    for (site, (k, n)) in tallies.into_iter().enumerate() {
        let (r, c) = (site / 3, site % 3);
        let expected = if (r + c) % 2 == 0 { 1.0 } else { 0.0 };
        assert!(within_wilson(k, n, expected, 1.96), "site ({r},{c}): {k}/{n}");
    }
}
