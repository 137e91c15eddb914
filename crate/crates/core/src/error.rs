// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

use std::io;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::hologram::HologramError;
use crate::model::ModelError;
use crate::readout::ReadoutError;
use crate::rearrange::RearrangeError;
use crate::spin::runner::RunError;
use crate::spin::sequence::SequenceError;
use crate::spin::DynamicsError;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hologram(#[from] HologramError),
    #[error(transparent)]
    Rearrange(#[from] RearrangeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("config: {0}")]
    Config(String),
    #[error("point {point}: {source}")]
    AtPoint {
        point: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn at_point(self, point: usize) -> Self {
        Error::AtPoint {
            point,
            source: Box::new(self),
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
