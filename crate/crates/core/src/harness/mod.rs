// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Declarative experiment runs: config in, CSV/JSON results out.

pub mod config;
pub mod cycle;
pub mod experiments;
pub mod output;

pub use config::{ExperimentConfig, ExperimentKind, KindName, Scan};
pub use cycle::{refit, run_experiment, AverageRow, CycleAction, CycleLog, RunOutput};
pub use output::{write_outputs, RunManifest};
