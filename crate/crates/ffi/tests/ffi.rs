// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

use std::ffi::CStr;
use std::ptr;

use spinreg_ffi::*;

fn last_error() -> String {
    let p = spinreg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(spinreg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(
            spinreg_array_new(3, 3, 5.0, ptr::null_mut()),
            SpinregStatus::NullPointer
        );
        assert!(last_error().contains("null"));
        assert_eq!(spinreg_array_len(ptr::null()), 0);
        assert_eq!(spinreg_occupancy_count(ptr::null()), 0);
        assert!(!spinreg_occupancy_get(ptr::null(), 0));
        spinreg_array_free(ptr::null_mut());
        spinreg_occupancy_free(ptr::null_mut());
        spinreg_plan_free(ptr::null_mut());
        spinreg_mask_free(ptr::null_mut());
    }
}

#[test]
fn invalid_arguments_are_reported() {
    unsafe {
        let mut a = ptr::null_mut();
        assert_eq!(spinreg_array_new(0, 3, 5.0, &mut a), SpinregStatus::InvalidArgument);
        assert!(a.is_null());
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(
            spinreg_wilson_interval(5, 3, 1.96, &mut lo, &mut hi),
            SpinregStatus::InvalidArgument
        );
        assert!(!last_error().is_empty());
    }
}

#[test]
fn load_plan_execute_round_trip() {
    unsafe {
        let mut array = ptr::null_mut();
        assert_eq!(spinreg_array_new(3, 3, 5.0, &mut array), SpinregStatus::Ok);
        assert_eq!(spinreg_array_len(array), 9);

        // Corners filled; centre row empty.
        let bits = [1u8, 0, 1, 0, 0, 0, 1, 0, 1];
        let mut occ = ptr::null_mut();
        assert_eq!(
            spinreg_occupancy_from_bits(array, bits.as_ptr(), bits.len(), &mut occ),
            SpinregStatus::Ok
        );
        assert_eq!(spinreg_occupancy_count(occ), 4);
        assert!(spinreg_occupancy_get(occ, 0));
        assert!(!spinreg_occupancy_get(occ, 4));
        assert!(!spinreg_occupancy_get(occ, 99));

        let mut plan = ptr::null_mut();
        assert_eq!(spinreg_plan_moves(array, occ, 1, 3, &mut plan), SpinregStatus::Ok);
        let n = spinreg_plan_len(plan);
        assert!(n >= 3);
        let (mut from, mut to, mut park) = (0usize, 0usize, false);
        for i in 0..n {
            assert_eq!(
                spinreg_plan_move(plan, i, &mut from, &mut to, &mut park),
                SpinregStatus::Ok
            );
            assert!(from < 9 && to < 9 && from != to);
        }
        assert_eq!(
            spinreg_plan_move(plan, n, &mut from, &mut to, &mut park),
            SpinregStatus::InvalidArgument
        );

        let mut after = ptr::null_mut();
        assert_eq!(
            spinreg_plan_execute(array, occ, plan, 0.0, 0.0, 0.0, 7, &mut after),
            SpinregStatus::Ok
        );
        assert_eq!(spinreg_occupancy_count(after), 4);
        for site in 3..6 {
            assert!(spinreg_occupancy_get(after, site));
        }

        spinreg_occupancy_free(after);
        spinreg_plan_free(plan);
        spinreg_occupancy_free(occ);
        spinreg_array_free(array);
    }
}

#[test]
fn insufficient_atoms_has_its_own_code() {
    unsafe {
        let mut array = ptr::null_mut();
        assert_eq!(spinreg_array_new(3, 3, 5.0, &mut array), SpinregStatus::Ok);
        let bits = [1u8, 0, 0, 0, 0, 0, 0, 0, 0];
        let mut occ = ptr::null_mut();
        assert_eq!(
            spinreg_occupancy_from_bits(array, bits.as_ptr(), 9, &mut occ),
            SpinregStatus::Ok
        );
        let mut plan = ptr::null_mut();
        assert_eq!(
            spinreg_plan_moves(array, occ, 1, 3, &mut plan),
            SpinregStatus::InsufficientAtoms
        );
        assert!(plan.is_null());
        spinreg_occupancy_free(occ);
        spinreg_array_free(array);
    }
}

#[test]
fn sampled_occupancy_is_seeded() {
    unsafe {
        let mut array = ptr::null_mut();
        assert_eq!(spinreg_array_new(10, 11, 5.0, &mut array), SpinregStatus::Ok);
        let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(spinreg_occupancy_sample(array, 0.5, 11, &mut a), SpinregStatus::Ok);
        assert_eq!(spinreg_occupancy_sample(array, 0.5, 11, &mut b), SpinregStatus::Ok);
        for site in 0..110 {
            assert_eq!(spinreg_occupancy_get(a, site), spinreg_occupancy_get(b, site));
        }
        spinreg_occupancy_free(a);
        spinreg_occupancy_free(b);
        spinreg_array_free(array);
    }
}

#[test]
fn wgs_mask_is_exported() {
    unsafe {
        let mut mask = ptr::null_mut();
        let mut uniformity = 0.0;
        assert_eq!(
            spinreg_wgs(3, 3, 8, 64, 30, 1, &mut mask, &mut uniformity),
            SpinregStatus::Ok
        );
        assert!(uniformity > 0.9 && uniformity <= 1.0);
        let g = spinreg_mask_grid_size(mask);
        assert_eq!(g, 64);
        let mut small = vec![0.0; 10];
        assert_eq!(
            spinreg_mask_phases(mask, small.as_mut_ptr(), small.len()),
            SpinregStatus::InvalidArgument
        );
        let mut buf = vec![f64::NAN; g * g];
        assert_eq!(
            spinreg_mask_phases(mask, buf.as_mut_ptr(), buf.len()),
            SpinregStatus::Ok
        );
        assert!(buf.iter().all(|p| p.is_finite()));
        spinreg_mask_free(mask);
    }
}

#[test]
fn scalar_helpers() {
    unsafe {
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(
            spinreg_wilson_interval(25, 50, 1.96, &mut lo, &mut hi),
            SpinregStatus::Ok
        );
        assert!((lo - 0.3664).abs() < 1e-3 && (hi - 0.6336).abs() < 1e-3);

        let (mut v, mut clamped) = (0.0, true);
        assert_eq!(
            spinreg_povm_correct(0.55, 0.1, 0.0, &mut v, &mut clamped),
            SpinregStatus::Ok
        );
        assert!((v - 0.5).abs() < 1e-12 && !clamped);
        assert_eq!(
            spinreg_povm_correct(0.05, 0.1, 0.0, &mut v, &mut clamped),
            SpinregStatus::Ok
        );
        assert!(v == 0.0 && clamped);

        let mut p = 0.0;
        let rabi = 1000.0;
        assert_eq!(
            spinreg_rabi_population(rabi, 0.0, 0.5 / rabi, &mut p),
            SpinregStatus::Ok
        );
        assert!((p - 1.0).abs() < 1e-9);
        // Detuned: Omega^2 / W^2 * sin^2(pi W t).
        let (d, t): (f64, f64) = (500.0, 3.1e-4);
        let w = (rabi * rabi + d * d).sqrt();
        let expected = (rabi / w).powi(2) * (std::f64::consts::PI * w * t).sin().powi(2);
        assert_eq!(spinreg_rabi_population(rabi, d, t, &mut p), SpinregStatus::Ok);
        assert!((p - expected).abs() < 1e-9);
    }
}
