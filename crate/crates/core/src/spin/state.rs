// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Three-level site state over `{|down>, |up>, |L>}`.

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type CMatrix3 = Matrix3<Complex64>;

pub const DOWN: usize = 0;
pub const UP: usize = 1;
pub const LEAK: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Down,
    Up,
    Leak,
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::Down => DOWN,
            Level::Up => UP,
            Level::Leak => LEAK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteState {
    pub rho: CMatrix3,
    pub shelved: bool,
    pub lost: bool,
}

impl SiteState {
    pub fn pure_level(level: Level) -> Self {
        let mut rho = CMatrix3::zeros();
        rho[(level.index(), level.index())] = Complex64::new(1.0, 0.0);
        Self {
            rho,
            shelved: false,
            lost: false,
        }
    }

    /// The prepared state.
    pub fn down() -> Self {
        Self::pure_level(Level::Down)
    }

    pub fn up() -> Self {
        Self::pure_level(Level::Up)
    }

    /// `|psi><psi|` for an (unnormalised) amplitude vector.
    pub fn from_amplitudes(amps: [Complex64; 3]) -> Self {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let mut rho = CMatrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                rho[(i, j)] = amps[i] * amps[j].conj() / (norm * norm);
            }
        }
        Self {
            rho,
            shelved: false,
            lost: false,
        }
    }

    pub fn population(&self, level: Level) -> f64 {
        self.rho[(level.index(), level.index())].re
    }

    pub fn p_down(&self) -> f64 {
        self.population(Level::Down)
    }

    pub fn p_up(&self) -> f64 {
        self.population(Level::Up)
    }

    pub fn p_leak(&self) -> f64 {
        self.population(Level::Leak)
    }

    /// `<down| rho |up>`.
    pub fn coherence(&self) -> Complex64 {
        self.rho[(DOWN, UP)]
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.min()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Unit trace within 1e-9, Hermitian, eigenvalues above -1e-10.
    pub fn is_physical(&self) -> bool {
        (self.trace() - 1.0).abs() < 1e-9 && self.hermiticity_error() < 1e-9 && self.min_eigenvalue() >= -1e-10
    }

    pub(crate) fn conjugate_by(&mut self, u: &CMatrix3) {
        self.rho = u * self.rho * u.adjoint();
    }
}

fn one_norm(m: &CMatrix3) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(m: &CMatrix3) -> CMatrix3 {
    let norm = one_norm(m);
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m * Complex64::new(0.5f64.powi(squarings), 0.0);
    let mut result = CMatrix3::identity();
    let mut term = CMatrix3::identity();
    for k in 1..=24 {
        term = term * scaled * Complex64::new(1.0 / k as f64, 0.0);
        result += term;
        if one_norm(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result * result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal() {
        let mut m = CMatrix3::zeros();
        m[(0, 0)] = Complex64::new(0.0, 1.3);
        m[(1, 1)] = Complex64::new(-0.2, 0.0);
        m[(2, 2)] = Complex64::new(0.0, -40.0);
        let e = expm(&m);
        assert!((e[(0, 0)] - Complex64::new(0.0, 1.3).exp()).norm() < 1e-13);
        assert!((e[(1, 1)] - Complex64::new(-0.2, 0.0).exp()).norm() < 1e-13);
        assert!((e[(2, 2)] - Complex64::new(0.0, -40.0).exp()).norm() < 1e-12);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn expm_of_pauli_x_rotation() {
        // exp(-i a sigma_x) = cos a I - i sin a sigma_x on the first two levels.
        let a = 2.7;
        let mut m = CMatrix3::zeros();
        m[(0, 1)] = Complex64::new(0.0, -a);
        m[(1, 0)] = Complex64::new(0.0, -a);
        let e = expm(&m);
        assert!((e[(0, 0)].re - a.cos()).abs() < 1e-13);
        assert!((e[(0, 1)].im + a.sin()).abs() < 1e-13);
        assert!((e[(2, 2)].re - 1.0).abs() < 1e-15);
        let unitarity = e * e.adjoint() - CMatrix3::identity();
        assert!(one_norm(&unitarity) < 1e-13);
    }

    #[test]
    fn pure_states_are_physical() {
        let s = SiteState::from_amplitudes([
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.5, 0.0),
        ]);
        assert!(s.is_physical());
        assert!((s.trace() - 1.0).abs() < 1e-15);
        assert_eq!(SiteState::down().p_down(), 1.0);
        assert_eq!(SiteState::up().p_up(), 1.0);
    }
}
