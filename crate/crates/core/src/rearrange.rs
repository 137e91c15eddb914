// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Single-tweezer rearrangement: planning, validation, lossy execution and
//! the deflector waveform for each move.
//!
//! Paths are straight segments. A move is legal when its source holds an
//! atom, its destination is empty and no other atom sits within half a pitch
//! of the segment.

use std::cmp::Ordering;
use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Occupancy, RegisterSpec, TrapArray};
use crate::seed::SeedSpec;

#[derive(Debug, Error)]
pub enum RearrangeError {
    #[error("not enough atoms: need {needed}, have {have}")]
    InsufficientAtoms { needed: usize, have: usize },
    #[error("move source and destination are both site {0}")]
    SameSite(usize),
    #[error("site {0} is outside the array")]
    OutOfBounds(usize),
    #[error("zero-length move")]
    ZeroLengthMove,
    #[error("speed and ramp time must be positive")]
    NonPositiveTiming,
    #[error("planner could not resolve a blocked configuration")]
    PlanningStalled,
    #[error("occupancy does not match the array")]
    ShapeMismatch,
    #[error("plan CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<csv::Error> for RearrangeError {
    fn from(e: csv::Error) -> Self {
        RearrangeError::Csv(e.to_string())
    }
}

/// Straight path in focal-plane micrometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: (f64, f64),
    pub end: (f64, f64),
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end.0 - self.start.0).hypot(self.end.1 - self.start.1)
    }

    /// Distance from `p` to the closest point of the segment, plus the
    /// clamped projection parameter in `[0, 1]`.
    fn distance_to(&self, p: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (self.end.0 - self.start.0, self.end.1 - self.start.1);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((p.0 - self.start.0) * dx + (p.1 - self.start.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = (self.start.0 + t * dx, self.start.1 + t * dy);
        ((p.0 - q.0).hypot(p.1 - q.1), t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub from: usize,
    pub to: usize,
    pub path: Segment,
    /// Set on moves that relocate a blocking atom rather than fill a target
    /// from a reservoir site.
    pub is_parking: bool,
}

impl Move {
    pub fn new(array: &TrapArray, from: usize, to: usize, is_parking: bool) -> Result<Self, RearrangeError> {
        if from == to {
            return Err(RearrangeError::SameSite(from));
        }
        for s in [from, to] {
            if !array.contains(s) {
                return Err(RearrangeError::OutOfBounds(s));
            }
        }
        Ok(Self {
            from,
            to,
            path: Segment {
                start: array.position(from),
                end: array.position(to),
            },
            is_parking,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MovePlan {
    pub moves: Vec<Move>,
}

impl MovePlan {
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn parking_moves(&self) -> usize {
        self.moves.iter().filter(|m| m.is_parking).count()
    }

    /// CSV with columns `step,from_row,from_col,to_row,to_col,is_parking`.
    pub fn write_csv<W: io::Write>(&self, array: &TrapArray, w: W) -> Result<(), RearrangeError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "from_row", "from_col", "to_row", "to_col", "is_parking"])?;
        for (step, m) in self.moves.iter().enumerate() {
            let (fr, fc) = array.coords(m.from);
            let (tr, tc) = array.coords(m.to);
            out.write_record([
                step.to_string(),
                fr.to_string(),
                fc.to_string(),
                tr.to_string(),
                tc.to_string(),
                u8::from(m.is_parking).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(array: &TrapArray, r: R) -> Result<Self, RearrangeError> {
        #[derive(Deserialize)]
        struct Row {
            step: usize,
            from_row: usize,
            from_col: usize,
            to_row: usize,
            to_col: usize,
            is_parking: u8,
        }
        let mut moves = Vec::new();
        for (i, row) in csv::Reader::from_reader(r).deserialize::<Row>().enumerate() {
            let row = row?;
            if row.step != i {
                return Err(RearrangeError::Csv(format!("step {} out of order", row.step)));
            }
            for (r, c) in [(row.from_row, row.from_col), (row.to_row, row.to_col)] {
                if r >= array.rows() || c >= array.cols() {
                    return Err(RearrangeError::Csv(format!("site ({r}, {c}) outside the array")));
                }
            }
            moves.push(Move::new(
                array,
                array.index(row.from_row, row.from_col),
                array.index(row.to_row, row.to_col),
                row.is_parking != 0,
            )?);
        }
        Ok(Self { moves })
    }
}

fn clearance(array: &TrapArray) -> f64 {
    0.5 * array.pitch()
}

/// Occupied sites, other than the endpoints, within the clearance of the
/// path from `from` to `to`. Returned with their projection parameter.
fn blockers(array: &TrapArray, occ: &Occupancy, from: usize, to: usize) -> Vec<(usize, f64)> {
    let seg = Segment {
        start: array.position(from),
        end: array.position(to),
    };
    let eps = clearance(array) * (1.0 + 1e-9);
    occ.occupied()
        .filter(|&s| s != from && s != to)
        .filter_map(|s| {
            let (d, t) = seg.distance_to(array.position(s));
            (d <= eps).then_some((s, t))
        })
        .collect()
}

fn is_clear(array: &TrapArray, occ: &Occupancy, from: usize, to: usize) -> bool {
    blockers(array, occ, from, to).is_empty()
}

fn site_distance(array: &TrapArray, a: usize, b: usize) -> f64 {
    let (pa, pb) = (array.position(a), array.position(b));
    (pa.0 - pb.0).hypot(pa.1 - pb.1)
}

fn by_distance(d1: f64, i1: usize, d2: f64, i2: usize) -> Ordering {
    d1.partial_cmp(&d2).unwrap_or(Ordering::Equal).then(i1.cmp(&i2))
}

/// Fills the register's target block from the loaded atoms.
///
/// Targets are visited from the block centroid outward and each empty one is
/// paired with the nearest free reservoir atom. Moves are emitted whenever a
/// pending pair has a clear path; when none has, the first pair is repaired by
/// switching to a clear reservoir atom, by letting the blocking atom closest
/// to the target take the move, or finally by parking the blocker on the
/// nearest free non-target site.
pub fn plan_moves(array: &TrapArray, occ: &Occupancy, register: &RegisterSpec) -> Result<MovePlan, RearrangeError> {
    if !occ.matches(array) {
        return Err(RearrangeError::ShapeMismatch);
    }
    let targets = register.target_sites(array);
    let have = occ.count();
    if have < targets.len() {
        return Err(RearrangeError::InsufficientAtoms {
            needed: targets.len(),
            have,
        });
    }
    let is_target = register.target_mask(array);
    let (cy, cx) = targets.iter().fold((0.0, 0.0), |(y, x), &s| {
        let (py, px) = array.position(s);
        (y + py, x + px)
    });
    let centroid = (cy / targets.len() as f64, cx / targets.len() as f64);
    let centroid_dist = |s: usize| {
        let p = array.position(s);
        (p.0 - centroid.0).hypot(p.1 - centroid.1)
    };

    let mut empty_targets: Vec<usize> = targets.iter().copied().filter(|&t| !occ.get(t)).collect();
    empty_targets.sort_by(|&a, &b| by_distance(centroid_dist(a), a, centroid_dist(b), b));

    let mut state = occ.clone();
    let mut assigned = vec![false; array.len()];
    let mut pending: Vec<(usize, usize)> = Vec::with_capacity(empty_targets.len());
    for &t in &empty_targets {
        let source = state
            .occupied()
            .filter(|&s| !is_target[s] && !assigned[s])
            .min_by(|&a, &b| by_distance(site_distance(array, a, t), a, site_distance(array, b, t), b))
            .expect("atom count checked above");
        assigned[source] = true;
        pending.push((t, source));
    }

    let mut plan = MovePlan::default();
    let push = |plan: &mut MovePlan, state: &mut Occupancy, from: usize, to: usize, parking: bool| {
        plan.moves.push(Move::new(array, from, to, parking)?);
        state.set(from, false);
        state.set(to, true);
        Ok::<(), RearrangeError>(())
    };

    let budget = 4 * array.len() * array.len() + 16;
    for _ in 0..budget {
        if pending.is_empty() {
            return Ok(plan);
        }
        if let Some(k) = pending.iter().position(|&(t, s)| is_clear(array, &state, s, t)) {
            let (t, s) = pending.remove(k);
            push(&mut plan, &mut state, s, t, false)?;
            assigned[s] = false;
            continue;
        }

        let (t, s) = pending[0];
        let mut spare: Vec<usize> = state.occupied().filter(|&a| !is_target[a] && !assigned[a]).collect();
        spare.sort_by(|&a, &b| by_distance(site_distance(array, a, t), a, site_distance(array, b, t), b));
        if let Some(&alt) = spare.iter().find(|&&a| is_clear(array, &state, a, t)) {
            assigned[s] = false;
            assigned[alt] = true;
            pending[0].1 = alt;
            continue;
        }

        let mut blocking = blockers(array, &state, s, t);
        blocking.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        if let Some(&(b, _)) = blocking.iter().find(|&&(b, _)| is_clear(array, &state, b, t)) {
            let other = pending.iter().position(|&(_, src)| src == b);
            push(&mut plan, &mut state, b, t, is_target[b])?;
            match other {
                Some(j) => {
                    pending[j].1 = s;
                    pending.remove(0);
                }
                None if is_target[b] => pending[0] = (b, s),
                None => {
                    assigned[s] = false;
                    pending.remove(0);
                }
            }
            continue;
        }

        let parked = blocking.iter().filter(|&&(b, _)| !is_target[b]).find_map(|&(b, _)| {
            let mut free: Vec<usize> = (0..array.len()).filter(|&p| !is_target[p] && !state.get(p)).collect();
            free.sort_by(|&x, &y| by_distance(site_distance(array, b, x), x, site_distance(array, b, y), y));
            free.into_iter()
                .find(|&p| is_clear(array, &state, b, p))
                .map(|p| (b, p))
        });
        match parked {
            Some((b, p)) => {
                push(&mut plan, &mut state, b, p, true)?;
                if let Some(j) = pending.iter().position(|&(_, src)| src == b) {
                    pending[j].1 = p;
                    assigned[b] = false;
                    assigned[p] = true;
                }
            }
            None => return Err(RearrangeError::PlanningStalled),
        }
    }
    Err(RearrangeError::PlanningStalled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    OutOfBounds { step: usize },
    SameSite { step: usize },
    SourceEmpty { step: usize, site: usize },
    DestinationOccupied { step: usize, site: usize },
    PathBlocked { step: usize, blocker: usize },
}

/// Replays the plan symbolically and reports every broken move invariant.
pub fn validate_plan(array: &TrapArray, occ: &Occupancy, plan: &MovePlan) -> Vec<Violation> {
    let mut state = occ.clone();
    let mut out = Vec::new();
    for (step, m) in plan.moves.iter().enumerate() {
        if !array.contains(m.from) || !array.contains(m.to) {
            out.push(Violation::OutOfBounds { step });
            continue;
        }
        if m.from == m.to {
            out.push(Violation::SameSite { step });
            continue;
        }
        if !state.get(m.from) {
            out.push(Violation::SourceEmpty { step, site: m.from });
        }
        if state.get(m.to) {
            out.push(Violation::DestinationOccupied { step, site: m.to });
        }
        for (b, _) in blockers(array, &state, m.from, m.to) {
            out.push(Violation::PathBlocked { step, blocker: b });
        }
        state.set(m.from, false);
        state.set(m.to, true);
    }
    out
}

/// Per-move atom loss probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossModel {
    pub p_pickup: f64,
    /// Per pitch travelled.
    pub p_transit_per_site: f64,
    pub p_dropoff: f64,
}

impl LossModel {
    pub fn is_valid(&self) -> bool {
        [self.p_pickup, self.p_transit_per_site, self.p_dropoff]
            .iter()
            .all(|p| (0.0..=1.0).contains(p))
    }

    /// Probability that an atom survives one move of `sites` pitches.
    pub fn survival(&self, sites: f64) -> f64 {
        (1.0 - self.p_pickup) * (1.0 - self.p_transit_per_site).powf(sites) * (1.0 - self.p_dropoff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossStage {
    Pickup,
    Transit,
    Dropoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MoveEvent {
    /// Static traps lowered to this fraction of their depth before moving.
    TrapDepthLowered {
        fraction: f64,
    },
    Delivered {
        step: usize,
        from: usize,
        to: usize,
    },
    Lost {
        step: usize,
        from: usize,
        to: usize,
        stage: LossStage,
    },
    Skipped {
        step: usize,
        from: usize,
        to: usize,
    },
    TrapDepthRestored,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveLog {
    pub events: Vec<MoveEvent>,
}

impl MoveLog {
    pub fn losses(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, MoveEvent::Lost { .. }))
            .count()
    }
}

/// Static trap depth during rearrangement, as a fraction of the loading depth.
pub const REARRANGE_DEPTH_FRACTION: f64 = 0.2;

/// Executes the plan with stochastic loss. Moves whose source was emptied by
/// an earlier loss are skipped.
pub fn execute_plan(
    array: &TrapArray,
    occ: &Occupancy,
    plan: &MovePlan,
    loss: &LossModel,
    seed: &SeedSpec,
) -> (Occupancy, MoveLog) {
    let mut state = occ.clone();
    let mut log = MoveLog::default();
    log.events.push(MoveEvent::TrapDepthLowered {
        fraction: REARRANGE_DEPTH_FRACTION,
    });
    for (step, m) in plan.moves.iter().enumerate() {
        if !state.get(m.from) || state.get(m.to) {
            log.events.push(MoveEvent::Skipped {
                step,
                from: m.from,
                to: m.to,
            });
            continue;
        }
        let mut rng = seed.rng("move", &[step as u64]);
        let sites = m.path.length() / array.pitch();
        let stage = if rng.random::<f64>() < loss.p_pickup {
            Some(LossStage::Pickup)
        } else if rng.random::<f64>() >= (1.0 - loss.p_transit_per_site).powf(sites) {
            Some(LossStage::Transit)
        } else if rng.random::<f64>() < loss.p_dropoff {
            Some(LossStage::Dropoff)
        } else {
            None
        };
        state.set(m.from, false);
        match stage {
            Some(stage) => log.events.push(MoveEvent::Lost {
                step,
                from: m.from,
                to: m.to,
                stage,
            }),
            None => {
                state.set(m.to, true);
                log.events.push(MoveEvent::Delivered {
                    step,
                    from: m.from,
                    to: m.to,
                });
            }
        }
    }
    log.events.push(MoveEvent::TrapDepthRestored);
    (state, log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampShape {
    #[default]
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityRamp {
    pub duration_ms: f64,
    pub shape: RampShape,
    pub from_level: f64,
    pub to_level: f64,
}

impl IntensityRamp {
    pub fn level_at(&self, t_ms: f64) -> f64 {
        let x = (t_ms / self.duration_ms).clamp(0.0, 1.0);
        let s = match self.shape {
            RampShape::Linear => x,
            RampShape::Cosine => 0.5 - 0.5 * (std::f64::consts::PI * x).cos(),
        };
        self.from_level + (self.to_level - self.from_level) * s
    }
}

/// Simultaneous linear chirps on the horizontal (x) and vertical (y)
/// deflectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chirp {
    pub duration_ms: f64,
    pub x_mhz: (f64, f64),
    pub y_mhz: (f64, f64),
}

impl Chirp {
    pub fn frequencies_at(&self, t_ms: f64) -> (f64, f64) {
        let x = (t_ms / self.duration_ms).clamp(0.0, 1.0);
        (
            self.x_mhz.0 + (self.x_mhz.1 - self.x_mhz.0) * x,
            self.y_mhz.0 + (self.y_mhz.1 - self.y_mhz.0) * x,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveWaveform {
    pub ramp_up: IntensityRamp,
    pub chirp: Chirp,
    pub ramp_down: IntensityRamp,
}

impl MoveWaveform {
    pub fn total_ms(&self) -> f64 {
        self.ramp_up.duration_ms + self.chirp.duration_ms + self.ramp_down.duration_ms
    }
}

/// Linear map from focal-plane position to deflector drive frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeflectorCalibration {
    pub origin_x_mhz: f64,
    pub origin_y_mhz: f64,
    pub mhz_per_um: f64,
    pub ramp_shape: RampShape,
}

impl Default for DeflectorCalibration {
    fn default() -> Self {
        Self {
            origin_x_mhz: 90.0,
            origin_y_mhz: 90.0,
            mhz_per_um: 0.125,
            ramp_shape: RampShape::Linear,
        }
    }
}

/// Ramp up, chirp from source to destination at constant speed, ramp down.
pub fn waveform_for_move(
    m: &Move,
    speed_um_per_ms: f64,
    ramp_ms: f64,
    calib: &DeflectorCalibration,
) -> Result<MoveWaveform, RearrangeError> {
    if !(speed_um_per_ms > 0.0) || !(ramp_ms > 0.0) {
        return Err(RearrangeError::NonPositiveTiming);
    }
    let length = m.path.length();
    if length <= 0.0 {
        return Err(RearrangeError::ZeroLengthMove);
    }
    let fx = |x: f64| calib.origin_x_mhz + calib.mhz_per_um * x;
    let fy = |y: f64| calib.origin_y_mhz + calib.mhz_per_um * y;
    Ok(MoveWaveform {
        ramp_up: IntensityRamp {
            duration_ms: ramp_ms,
            shape: calib.ramp_shape,
            from_level: 0.0,
            to_level: 1.0,
        },
        chirp: Chirp {
            duration_ms: length / speed_um_per_ms,
            x_mhz: (fx(m.path.start.0), fx(m.path.end.0)),
            y_mhz: (fy(m.path.start.1), fy(m.path.end.1)),
        },
        ramp_down: IntensityRamp {
            duration_ms: ramp_ms,
            shape: calib.ramp_shape,
            from_level: 1.0,
            to_level: 0.0,
        },
    })
}
