// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Internal-state evolution of the register.

pub mod dynamics;
pub mod runner;
pub mod sequence;
pub mod state;

pub use dynamics::{free_evolve, leakage_fraction, propagate_pulse, DriveParams, DynamicsError, NoiseModel};
pub use state::{CMatrix3, Level, SiteState};
