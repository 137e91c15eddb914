// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Damped Gauss-Newton (Levenberg-Marquardt) on weighted residuals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    /// Stop once an accepted step changes the cost by less than this
    /// fraction.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Parameter covariance scaled by the reduced chi-square; infinite on
    /// the diagonal for directions the data do not constrain.
    pub covariance: DMatrix<f64>,
}

/// `eval(x)` returns residuals and the Jacobian (rows = residuals).
pub fn minimize<F>(eval: F, x0: &[f64], opts: LmOptions) -> LmOutcome
where
    F: Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
{
    let p = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut r, mut j) = eval(x.as_slice());
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        if cost <= 1e-300 {
            converged = true;
            break;
        }
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        if g.amax() <= 1e-300 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..p {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &x + &step;
            let (rt, jt_new) = eval(trial.as_slice());
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let change = cost - ct;
                x = trial;
                r = rt;
                j = jt_new;
                let small_step = step.amax() <= 1e-14 * x.amax().max(1e-300);
                let done = change <= opts.rel_tol * cost || small_step;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                converged = done;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No downhill step at any damping: a (numerical) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }
    let n = r.len();
    let dof = n.saturating_sub(p).max(1) as f64;
    let covariance = pseudo_inverse_cov(&(j.transpose() * &j), cost / dof);
    LmOutcome {
        x: x.as_slice().to_vec(),
        cost,
        converged,
        iterations,
        covariance,
    }
}

fn pseudo_inverse_cov(jtj: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let p = jtj.nrows();
    let eig = SymmetricEigen::new(jtj.clone());
    let max = eig.eigenvalues.amax();
    let mut cov = DMatrix::zeros(p, p);
    let mut unconstrained = vec![false; p];
    for k in 0..p {
        let ev = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        if ev <= 1e-12 * max || ev <= 0.0 {
            for i in 0..p {
                if v[i].abs() > 1e-6 {
                    unconstrained[i] = true;
                }
            }
            continue;
        }
        cov += v * v.transpose() * (scale / ev);
    }
    for i in 0..p {
        if unconstrained[i] {
            cov[(i, i)] = f64::INFINITY;
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_a_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let out = minimize(
            |p| {
                let r = DVector::from_iterator(10, xs.iter().zip(&ys).map(|(x, y)| p[0] * x + p[1] - y));
                let j = DMatrix::from_fn(10, 2, |i, c| if c == 0 { xs[i] } else { 1.0 });
                (r, j)
            },
            &[0.0, 0.0],
            LmOptions::default(),
        );
        assert!(out.converged);
        assert!((out.x[0] - 2.0).abs() < 1e-9 && (out.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flags_unconstrained_direction() {
        let out = minimize(
            |p| {
                let r = DVector::from_iterator(5, (0..5).map(|i| p[0] - i as f64));
                let j = DMatrix::from_fn(5, 2, |_, c| if c == 0 { 1.0 } else { 0.0 });
                (r, j)
            },
            &[0.0, 3.0],
            LmOptions::default(),
        );
        assert!((out.x[0] - 2.0).abs() < 1e-9);
        assert!(out.covariance[(1, 1)].is_infinite());
        assert!(out.covariance[(0, 0)].is_finite());
    }
}
