// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Pulse-sequence instructions and their line-oriented text form.
//!
//! ```text
//! ROT cols=3 rows=1-7 theta=pi/2 phi=0 omega=1160 delta=0
//! WAIT 5.0s
//! SHELVE
//! IMAGE main
//! ```
//!
//! A rotation addresses either part of one column (`cols=C`, optional
//! `rows=` list) or part of one row (`rows=R`, optional `cols=` list).
//! `phi=` takes one value, or one value per addressed site in the order the
//! selector lists them.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::dynamics::DriveParams;
use crate::model::TrapArray;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("instruction {index}: rotation spans more than one row and more than one column")]
    ConstraintViolation { index: usize },
    #[error("instruction {index}: site ({row}, {col}) is outside the array")]
    SiteOutOfBounds { index: usize, row: usize, col: usize },
    #[error("instruction {index}: {got} phases given for {sites} sites")]
    PhaseCount { index: usize, got: usize, sites: usize },
    #[error("instruction {index}: {msg}")]
    Invalid { index: usize, msg: String },
}

/// Sites addressed by one rotation.
#[derive(Debug, Clone, PartialEq)]
pub enum SiteSet {
    /// Column `col`; `None` addresses every row.
    Column { col: usize, rows: Option<Vec<usize>> },
    /// Row `row`; `None` addresses every column.
    Row { row: usize, cols: Option<Vec<usize>> },
}

impl SiteSet {
    /// Addressed `(row, col)` pairs in selector order.
    pub fn coords(&self, array: &TrapArray) -> Vec<(usize, usize)> {
        match self {
            SiteSet::Column { col, rows } => match rows {
                Some(rs) => rs.iter().map(|&r| (r, *col)).collect(),
                None => (0..array.rows()).map(|r| (r, *col)).collect(),
            },
            SiteSet::Row { row, cols } => match cols {
                Some(cs) => cs.iter().map(|&c| (*row, c)).collect(),
                None => (0..array.cols()).map(|c| (*row, c)).collect(),
            },
        }
    }

    /// Builds the selector for an arbitrary site list, if it is legal.
    pub fn from_coords(coords: &[(usize, usize)]) -> Option<SiteSet> {
        let (r0, c0) = *coords.first()?;
        if coords.iter().all(|&(_, c)| c == c0) {
            Some(SiteSet::Column {
                col: c0,
                rows: Some(coords.iter().map(|&(r, _)| r).collect()),
            })
        } else if coords.iter().all(|&(r, _)| r == r0) {
            Some(SiteSet::Row {
                row: r0,
                cols: Some(coords.iter().map(|&(_, c)| c).collect()),
            })
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rotate {
    pub sites: SiteSet,
    pub theta: f64,
    /// Axis phase; length 1 (shared) or one per addressed site.
    pub phi: Vec<f64>,
    pub drive: DriveParams,
}

impl Rotate {
    pub fn phase_for(&self, k: usize) -> f64 {
        if self.phi.len() == 1 {
            self.phi[0]
        } else {
            self.phi[k]
        }
    }

    /// Nominal pulse length for the programmed angle.
    pub fn duration(&self) -> f64 {
        self.drive.duration_for_angle(self.theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Rotate(Rotate),
    Wait(f64),
    Shelve,
    Image(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseSequence {
    pub instructions: Vec<Instruction>,
}

impl PulseSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, ins: Instruction) -> &mut Self {
        self.instructions.push(ins);
        self
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Checks every instruction against the array.
    pub fn validate(&self, array: &TrapArray) -> Result<(), SequenceError> {
        for (index, ins) in self.instructions.iter().enumerate() {
            match ins {
                Instruction::Rotate(rot) => {
                    let coords = rot.sites.coords(array);
                    if SiteSet::from_coords(&coords).is_none() && coords.len() > 1 {
                        return Err(SequenceError::ConstraintViolation { index });
                    }
                    for &(row, col) in &coords {
                        if row >= array.rows() || col >= array.cols() {
                            return Err(SequenceError::SiteOutOfBounds { index, row, col });
                        }
                    }
                    if rot.phi.len() != 1 && rot.phi.len() != coords.len() {
                        return Err(SequenceError::PhaseCount {
                            index,
                            got: rot.phi.len(),
                            sites: coords.len(),
                        });
                    }
                    if !(rot.theta >= 0.0) || !rot.theta.is_finite() {
                        return Err(SequenceError::Invalid {
                            index,
                            msg: format!("rotation angle {}", rot.theta),
                        });
                    }
                    if rot.drive.validate().is_err() || rot.drive.rabi_hz == 0.0 {
                        return Err(SequenceError::Invalid {
                            index,
                            msg: "drive parameters".into(),
                        });
                    }
                }
                Instruction::Wait(d) => {
                    if !(*d >= 0.0) || !d.is_finite() {
                        return Err(SequenceError::Invalid {
                            index,
                            msg: format!("wait duration {d}"),
                        });
                    }
                }
                Instruction::Shelve | Instruction::Image(_) => {}
            }
        }
        Ok(())
    }

    /// Parses the text form, filling unspecified drive fields from `base`.
    pub fn parse_with(text: &str, base: &DriveParams) -> Result<Self, SequenceError> {
        let mut seq = PulseSequence::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: String| SequenceError::Parse { line, msg };
            let mut words = body.split_whitespace();
            let op = words.next().unwrap_or_default().to_ascii_uppercase();
            let rest: Vec<&str> = words.collect();
            let ins = match op.as_str() {
                "ROT" => Instruction::Rotate(parse_rotate(&rest, base).map_err(err)?),
                "WAIT" => {
                    if rest.len() != 1 {
                        return Err(err("WAIT takes one duration".into()));
                    }
                    Instruction::Wait(parse_duration(rest[0]).map_err(err)?)
                }
                "SHELVE" => {
                    if !rest.is_empty() {
                        return Err(err("SHELVE takes no arguments".into()));
                    }
                    Instruction::Shelve
                }
                "IMAGE" => match rest.as_slice() {
                    [] => Instruction::Image("main".into()),
                    [tag] => Instruction::Image((*tag).to_string()),
                    _ => return Err(err("IMAGE takes at most one tag".into())),
                },
                other => return Err(err(format!("unknown instruction {other:?}"))),
            };
            if let Instruction::Rotate(rot) = &ins {
                let listed = match &rot.sites {
                    SiteSet::Column { rows: Some(r), .. } | SiteSet::Row { cols: Some(r), .. } => Some(r.len()),
                    _ => None,
                };
                if rot.phi.len() > 1 && listed.is_some_and(|n| n != rot.phi.len()) {
                    return Err(err(format!(
                        "{} phases for {} sites",
                        rot.phi.len(),
                        listed.unwrap_or(0)
                    )));
                }
            }
            seq.instructions.push(ins);
        }
        Ok(seq)
    }
}

impl FromStr for PulseSequence {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_with(s, &DriveParams::default())
    }
}

fn parse_index_list(v: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in v.split(',') {
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| format!("bad index range {part:?}"))?;
            let b: usize = b.trim().parse().map_err(|_| format!("bad index range {part:?}"))?;
            if b < a {
                return Err(format!("descending range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.trim().parse().map_err(|_| format!("bad index {part:?}"))?);
        }
    }
    Ok(out)
}

/// Numbers with an optional `pi` factor: `pi`, `-pi/2`, `3pi/4`, `0.25*pi`, `1.5`.
pub fn parse_angle(v: &str) -> Result<f64, String> {
    let s = v.trim().to_ascii_lowercase();
    let bad = || format!("bad angle {v:?}");
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.to_string(), d.trim().parse::<f64>().map_err(|_| bad())?),
        None => (s.clone(), 1.0),
    };
    let value = if let Some(coef) = num.strip_suffix("pi") {
        let coef = coef.trim_end_matches('*').trim();
        let c = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| bad())?,
        };
        c * PI
    } else {
        num.parse::<f64>().map_err(|_| bad())?
    };
    if den == 0.0 || !value.is_finite() {
        return Err(bad());
    }
    Ok(value / den)
}

/// Durations with a unit suffix: `s`, `ms`, `us`.
pub fn parse_duration(v: &str) -> Result<f64, String> {
    let (num, scale) = if let Some(n) = v.strip_suffix("ms") {
        (n, 1e-3)
    } else if let Some(n) = v.strip_suffix("us") {
        (n, 1e-6)
    } else if let Some(n) = v.strip_suffix('s') {
        (n, 1.0)
    } else {
        return Err(format!("duration {v:?} needs a unit (s, ms, us)"));
    };
    let x: f64 = num.parse().map_err(|_| format!("bad duration {v:?}"))?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(format!("bad duration {v:?}"));
    }
    Ok(x * scale)
}

fn parse_number(key: &str, v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("bad value for {key}: {v:?}"))
}

fn parse_rotate(args: &[&str], base: &DriveParams) -> Result<Rotate, String> {
    let mut cols = None;
    let mut rows = None;
    let mut theta = None;
    let mut duration = None;
    let mut phi = vec![0.0];
    let mut drive = *base;
    for arg in args {
        let (k, v) = arg
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {arg:?}"))?;
        match k {
            "cols" | "col" => cols = Some(parse_index_list(v)?),
            "rows" | "row" => rows = Some(parse_index_list(v)?),
            "theta" => theta = Some(parse_angle(v)?),
            "t" => duration = Some(parse_duration(v)?),
            "phi" => phi = v.split(',').map(parse_angle).collect::<Result<_, _>>()?,
            "omega" => drive.rabi_hz = parse_number(k, v)?,
            "delta" => drive.detuning_hz = parse_number(k, v)?,
            "c" => drive.leakage_ratio = parse_number(k, v)?,
            "stark" => drive.stark_shift_hz = parse_number(k, v)?,
            "scatter" => drive.stark_scatter_rate_hz = parse_number(k, v)?,
            "stark_on" => {
                drive.stark_beam_on = v.parse().map_err(|_| format!("bad boolean {v:?}"))?;
            }
            other => return Err(format!("unknown ROT key {other:?}")),
        }
    }
    let sites = match (cols, rows) {
        (Some(c), None) if c.len() == 1 => SiteSet::Column { col: c[0], rows: None },
        (None, Some(r)) if r.len() == 1 => SiteSet::Row { row: r[0], cols: None },
        (Some(c), Some(r)) if c.len() == 1 => SiteSet::Column {
            col: c[0],
            rows: Some(r),
        },
        (Some(c), Some(r)) if r.len() == 1 => SiteSet::Row {
            row: r[0],
            cols: Some(c),
        },
        (None, None) => return Err("ROT needs cols= or rows=".into()),
        _ => return Err("ROT may address one column or one row only".into()),
    };
    let theta = match (theta, duration) {
        (Some(th), None) => th,
        (None, Some(t)) => 2.0 * PI * drive.rabi_hz * t,
        (None, None) => return Err("ROT needs theta= or t=".into()),
        (Some(_), Some(_)) => return Err("ROT takes theta= or t=, not both".into()),
    };
    if theta < 0.0 {
        return Err(format!("negative rotation angle {theta}"));
    }
    Ok(Rotate {
        sites,
        theta,
        phi,
        drive,
    })
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Rotate(r) => {
                write!(f, "ROT ")?;
                match &r.sites {
                    SiteSet::Column { col, rows } => {
                        write!(f, "cols={col}")?;
                        if let Some(rs) = rows {
                            write!(f, " rows={}", join(rs))?;
                        }
                    }
                    SiteSet::Row { row, cols } => {
                        write!(f, "rows={row}")?;
                        if let Some(cs) = cols {
                            write!(f, " cols={}", join(cs))?;
                        }
                    }
                }
                let phis: Vec<String> = r.phi.iter().map(|p| format!("{p:?}")).collect();
                let d = &r.drive;
                write!(
                    f,
                    " theta={:?} phi={} omega={:?} delta={:?} c={:?} stark={:?} stark_on={} scatter={:?}",
                    r.theta,
                    phis.join(","),
                    d.rabi_hz,
                    d.detuning_hz,
                    d.leakage_ratio,
                    d.stark_shift_hz,
                    d.stark_beam_on,
                    d.stark_scatter_rate_hz
                )
            }
            Instruction::Wait(t) => write!(f, "WAIT {t:?}s"),
            Instruction::Shelve => write!(f, "SHELVE"),
            Instruction::Image(tag) => write!(f, "IMAGE {tag}"),
        }
    }
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ins in &self.instructions {
            writeln!(f, "{ins}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;

    #[test]
    fn parses_example_lines() {
        let seq: PulseSequence = "ROT cols=3 theta=pi/2 phi=0 omega=1160 delta=0\nWAIT 5.0s\nSHELVE\nIMAGE main\n"
            .parse()
            .unwrap();
        assert_eq!(seq.len(), 4);
        let Instruction::Rotate(r) = &seq.instructions[0] else {
            panic!()
        };
        assert_eq!(r.sites, SiteSet::Column { col: 3, rows: None });
        assert!((r.theta - PI / 2.0).abs() < 1e-15);
        assert_eq!(seq.instructions[1], Instruction::Wait(5.0));
        assert_eq!(seq.instructions[3], Instruction::Image("main".into()));
    }

    #[test]
    fn rejects_multi_column_rotation() {
        let e = "ROT cols=3,4 theta=pi".parse::<PulseSequence>().unwrap_err();
        assert!(matches!(e, SequenceError::Parse { line: 1, .. }));
        let e = "WAIT 1s\nROT cols=3,4 rows=1,2 theta=pi"
            .parse::<PulseSequence>()
            .unwrap_err();
        assert!(matches!(e, SequenceError::Parse { line: 2, .. }));
    }

    #[test]
    fn validate_names_offending_instruction() {
        let array = make_grid(3, 3, 5.0).unwrap();
        let mut seq = PulseSequence::new();
        seq.push(Instruction::Wait(1.0));
        seq.push(Instruction::Rotate(Rotate {
            sites: SiteSet::Column { col: 5, rows: None },
            theta: PI,
            phi: vec![0.0],
            drive: DriveParams::default(),
        }));
        assert!(matches!(
            seq.validate(&array),
            Err(SequenceError::SiteOutOfBounds { index: 1, .. })
        ));
    }

    #[test]
    fn angles_and_durations() {
        assert!((parse_angle("pi").unwrap() - PI).abs() < 1e-15);
        assert!((parse_angle("-pi/2").unwrap() + PI / 2.0).abs() < 1e-15);
        assert!((parse_angle("3pi/4").unwrap() - 0.75 * PI).abs() < 1e-15);
        assert!((parse_angle("0.5*pi").unwrap() - 0.5 * PI).abs() < 1e-15);
        assert_eq!(parse_angle("1.25").unwrap(), 1.25);
        assert!(parse_angle("pi/0").is_err());
        assert_eq!(parse_duration("446us").unwrap(), 446e-6);
        assert_eq!(parse_duration("3ms").unwrap(), 3e-3);
        assert!(parse_duration("3").is_err());
    }

    #[test]
    fn display_round_trips() {
        let text = "ROT cols=4 rows=1-3 theta=pi/2 phi=0.1,0.2,0.3 omega=1160\nWAIT 2.5ms\nROT rows=2 cols=0,5 t=446us delta=-150 stark_on=false\nSHELVE\nIMAGE post\n";
        let seq: PulseSequence = text.parse().unwrap();
        let again: PulseSequence = seq.to_string().parse().unwrap();
        assert_eq!(seq, again);
    }

    #[test]
    fn phase_count_must_match() {
        assert!("ROT cols=1 rows=0,1 theta=pi phi=0,1,2"
            .parse::<PulseSequence>()
            .is_err());
    }
}
