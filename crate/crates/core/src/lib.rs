// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Simulator for a tweezer-array register of nuclear-spin qubits: trap
//! geometry and loading, hologram synthesis, rearrangement, spin dynamics,
//! spin-selective readout, statistics, and an experiment harness.

// `!(x > 0.0)` is used on purpose throughout so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
mod error;
pub mod harness;
pub mod hologram;
pub mod model;
pub mod readout;
pub mod rearrange;
pub mod seed;
pub mod spin;

pub use error::{Error, Result};
