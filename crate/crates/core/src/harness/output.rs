// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Result files and the run manifest.
//!
//! Everything written here is a pure function of the config, so repeated
//! runs produce identical bytes. Wall-clock time is only recorded on request.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cycle::{AverageRow, RunOutput, SiteRow};
use crate::analysis::FitResult;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEntry {
    pub index: usize,
    pub value: f64,
    /// Data rows of this point in the per-site file, `[first, end)`.
    pub site_rows: [usize; 2],
    /// Data rows in the averaged file.
    pub average_rows: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub kind: String,
    pub config_sha256: String,
    pub seed: u64,
    pub shots_per_point: usize,
    pub loads: usize,
    pub rearrangements: usize,
    pub points: Vec<PointEntry>,
    pub files: Vec<FileEntry>,
    pub fit_errors: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn sites_csv(rows: &[SiteRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "point_value",
        "site_row",
        "site_col",
        "k",
        "n",
        "m",
        "m_corr",
        "wilson_lo",
        "wilson_hi",
    ])?;
    for r in rows {
        w.write_record([
            r.point_value.to_string(),
            r.site_row.to_string(),
            r.site_col.to_string(),
            r.k.to_string(),
            r.n.to_string(),
            opt(r.m),
            opt(r.m_corr),
            opt(r.wilson_lo),
            opt(r.wilson_hi),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn averages_csv(rows: &[AverageRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "group",
        "point_value",
        "k",
        "n",
        "p",
        "m",
        "m_corr",
        "wilson_lo",
        "wilson_hi",
    ])?;
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.point_value.to_string(),
            r.k.to_string(),
            r.n.to_string(),
            r.p.to_string(),
            opt(r.m),
            opt(r.m_corr),
            opt(r.wilson_lo),
            opt(r.wilson_hi),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

/// Reads an averaged-series file back.
pub fn read_averages(text: &str) -> Result<Vec<AverageRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let parse = |s: &str| -> Option<f64> { s.parse().ok() };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| crate::Error::Config(format!("bad number {:?} in averaged series", field(i))))
        };
        out.push(AverageRow {
            group: field(0).to_string(),
            point_value: num(1)?,
            k: num(2)? as u64,
            n: num(3)? as u64,
            p: num(4)?,
            m: parse(field(5)),
            m_corr: parse(field(6)),
            wilson_lo: parse(field(7)),
            wilson_hi: parse(field(8)),
        });
    }
    Ok(out)
}

pub fn config_hash(out: &RunOutput) -> Result<String> {
    Ok(hex(&Sha256::digest(out.config.to_toml()?.as_bytes())))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn json_pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `<kind>_sites.csv`, `<kind>_average.csv`, `<kind>_fit.json`,
/// `<kind>_cycle.csv`, optionally `<kind>_shots.csv`, and `manifest.json`.
pub fn write_outputs(out: &RunOutput, dir: &Path, wall_clock_s: Option<f64>) -> Result<RunManifest> {
    fs::create_dir_all(dir)?;
    let kind = out.config.experiment.name().as_str();
    let mut files: Vec<(String, Vec<u8>)> = vec![
        (format!("{kind}_sites.csv"), sites_csv(&out.sites)?),
        (format!("{kind}_average.csv"), averages_csv(&out.averages)?),
        (
            format!("{kind}_fit.json"),
            json_pretty::<BTreeMap<String, FitResult>>(&out.fits)?,
        ),
    ];
    let mut cycle = csv::Writer::from_writer(Vec::new());
    for e in &out.cycle.events {
        cycle.serialize(e)?;
    }
    if out.cycle.events.is_empty() {
        cycle.write_record(["shot", "action", "atoms", "moves", "transport_losses"])?;
    }
    files.push((
        format!("{kind}_cycle.csv"),
        cycle.into_inner().map_err(|e| e.into_error())?,
    ));
    if out.config.output.shots_csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &out.shots {
            w.serialize(s)?;
        }
        if out.shots.is_empty() {
            w.write_record([
                "shot_index",
                "site_row",
                "site_col",
                "image1_counts",
                "image2_counts",
                "class1",
                "class2",
                "post_selected",
            ])?;
        }
        files.push((format!("{kind}_shots.csv"), w.into_inner().map_err(|e| e.into_error())?));
    }

    let n_sites = if out.point_values.is_empty() {
        0
    } else {
        out.sites.len() / out.point_values.len()
    };
    let n_groups = if out.point_values.is_empty() {
        0
    } else {
        out.averages.len() / out.point_values.len()
    };
    let points = out
        .point_values
        .iter()
        .enumerate()
        .map(|(i, &v)| PointEntry {
            index: i,
            value: v,
            site_rows: [i * n_sites, (i + 1) * n_sites],
            average_rows: [i * n_groups, (i + 1) * n_groups],
        })
        .collect();

    let mut entries = Vec::new();
    for (name, bytes) in &files {
        let mut f = fs::File::create(dir.join(name))?;
        f.write_all(bytes)?;
        entries.push(FileEntry {
            name: name.clone(),
            sha256: hex(&Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        kind: kind.to_string(),
        config_sha256: config_hash(out)?,
        seed: out.config.seed,
        shots_per_point: out.config.shots,
        loads: out.cycle.count(super::cycle::CycleAction::Load),
        rearrangements: out.cycle.count(super::cycle::CycleAction::Rearrange),
        points,
        files: entries,
        fit_errors: out.fit_errors.clone(),
        wall_clock_s,
    };
    fs::write(dir.join("manifest.json"), json_pretty(&manifest)?)?;
    Ok(manifest)
}
