// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Shot-by-shot execution of a pulse sequence over an occupied array.
//!
//! Rotations act only on the sites they address and take no time for the
//! others. Per-site frequency offsets act during `WAIT` only, so pulses are
//! treated as short compared with the offset period.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use super::dynamics::{apply_pulse, free_evolve, DriveParams, DynamicsError, NoiseModel};
use super::sequence::{Instruction, PulseSequence, SequenceError};
use super::state::{CMatrix3, SiteState};
use crate::model::{Occupancy, TrapArray};
use crate::readout::{image_site, ImagingModel, LossDraw, ReadoutError};
use crate::seed::SeedSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error("shot count must be at least 1")]
    NoShots,
    #[error("occupancy does not match the array")]
    ShapeMismatch,
}

/// One occupied site in one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SiteShot {
    pub site: usize,
    pub counts1: u64,
    pub counts2: u64,
    pub class1: bool,
    pub class2: bool,
}

impl SiteShot {
    /// The atom was seen in the second image.
    pub fn post_selected(&self) -> bool {
        self.class2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub tag: String,
    /// Occupied sites only, in site order.
    pub sites: Vec<SiteShot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShotRecord {
    pub shot: u64,
    pub images: Vec<ImageRecord>,
    /// Sites that held an atom at the start of the shot and not at the end.
    pub lost: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShotRecords {
    pub shots: Vec<ShotRecord>,
}

/// Per-site, per-shot calibration errors.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SiteNoise {
    pub rabi_error: f64,
    pub offset_hz: f64,
}

#[derive(Debug, Clone)]
struct CompiledRotate {
    /// Per array site: index into `phases`, or `None` if not addressed.
    slot: Vec<Option<usize>>,
    phases: Vec<f64>,
    drive: DriveParams,
    duration: f64,
    /// Nominal propagators, one per entry of `phases`.
    nominal: Vec<CMatrix3>,
}

impl CompiledRotate {
    fn drive_for(&self, k: usize, rabi_error: f64) -> DriveParams {
        DriveParams {
            phase: self.phases[k],
            rabi_hz: self.drive.rabi_hz * (1.0 + rabi_error),
            ..self.drive
        }
    }
}

#[derive(Debug, Clone)]
enum Step {
    Rotate(CompiledRotate),
    Wait(f64),
    Shelve,
    Image(String),
}

/// A sequence bound to an array, noise and imaging model.
#[derive(Debug, Clone)]
pub struct Runner {
    n_sites: usize,
    steps: Vec<Step>,
    /// Index of the first shelve or image step.
    first_image: usize,
    noise: NoiseModel,
    imaging: ImagingModel,
    /// Pre-image states per site when the noise is deterministic.
    cache: Option<Vec<SiteState>>,
}

impl Runner {
    /// Validates and compiles `seq`. A sequence without an `IMAGE` gets an
    /// implicit `SHELVE` / `IMAGE final` at the end.
    pub fn new(
        array: &TrapArray,
        seq: &PulseSequence,
        noise: &NoiseModel,
        imaging: &ImagingModel,
    ) -> Result<Self, RunError> {
        seq.validate(array)?;
        noise.validate()?;
        imaging.validate()?;
        let mut steps = Vec::with_capacity(seq.len() + 2);
        for ins in &seq.instructions {
            steps.push(match ins {
                Instruction::Rotate(rot) => {
                    let coords = rot.sites.coords(array);
                    let mut slot = vec![None; array.len()];
                    let mut phases = Vec::with_capacity(coords.len());
                    for (k, &(r, c)) in coords.iter().enumerate() {
                        slot[array.index(r, c)] = Some(k);
                        phases.push(rot.phase_for(k));
                    }
                    let duration = rot.duration();
                    let nominal = phases
                        .iter()
                        .map(|&phi| {
                            DriveParams {
                                phase: phi,
                                ..rot.drive
                            }
                            .propagator(duration)
                        })
                        .collect();
                    Step::Rotate(CompiledRotate {
                        slot,
                        phases,
                        drive: rot.drive,
                        duration,
                        nominal,
                    })
                }
                Instruction::Wait(d) => Step::Wait(*d),
                Instruction::Shelve => Step::Shelve,
                Instruction::Image(tag) => Step::Image(tag.clone()),
            });
        }
        if !steps.iter().any(|s| matches!(s, Step::Image(_))) {
            steps.push(Step::Shelve);
            steps.push(Step::Image("final".into()));
        }
        let first_image = steps
            .iter()
            .position(|s| matches!(s, Step::Image(_) | Step::Shelve))
            .unwrap_or(steps.len());
        let mut runner = Self {
            n_sites: array.len(),
            steps,
            first_image,
            noise: *noise,
            imaging: *imaging,
            cache: None,
        };
        if noise.is_deterministic() {
            let cache = (0..runner.n_sites)
                .map(|site| runner.evolve(site, SiteState::down(), 0, runner.first_image, SiteNoise::default()))
                .collect::<Result<Vec<_>, _>>()?;
            runner.cache = Some(cache);
        }
        Ok(runner)
    }

    pub fn imaging(&self) -> &ImagingModel {
        &self.imaging
    }

    /// Draws the calibration errors of `site` for shot `shot`.
    pub fn site_noise(&self, seed: &SeedSpec, shot: u64, site: usize) -> SiteNoise {
        if self.noise.is_deterministic() {
            return SiteNoise::default();
        }
        let mut rng = seed.rng("shot_noise", &[shot, site as u64]);
        let mut draw = |sigma: f64| {
            if sigma > 0.0 {
                Normal::new(0.0, sigma).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
            } else {
                0.0
            }
        };
        let rabi_error = draw(self.noise.rabi_miscal_frac);
        let offset_hz = draw(self.noise.freq_jitter_hz);
        SiteNoise { rabi_error, offset_hz }
    }

    fn evolve(
        &self,
        site: usize,
        mut s: SiteState,
        from: usize,
        to: usize,
        sn: SiteNoise,
    ) -> Result<SiteState, DynamicsError> {
        for step in &self.steps[from..to] {
            match step {
                Step::Rotate(rot) => {
                    if let Some(k) = rot.slot[site] {
                        if s.lost {
                            continue;
                        }
                        let u = if sn.rabi_error == 0.0 {
                            rot.nominal[k]
                        } else {
                            rot.drive_for(k, sn.rabi_error).propagator(rot.duration)
                        };
                        s = apply_pulse(&s, &rot.drive_for(k, sn.rabi_error), &u, rot.duration);
                    }
                }
                Step::Wait(d) => s = free_evolve(&s, *d, sn.offset_hz, &self.noise)?,
                Step::Shelve | Step::Image(_) => {}
            }
        }
        Ok(s)
    }

    /// State of `site` just before the first image, for the given noise draw.
    pub fn pre_image_state(&self, site: usize, sn: SiteNoise) -> Result<SiteState, DynamicsError> {
        match &self.cache {
            Some(c) if sn == SiteNoise::default() => Ok(c[site]),
            _ => self.evolve(site, SiteState::down(), 0, self.first_image, sn),
        }
    }

    /// Atom-loss draws for every image of a shot, per site.
    pub fn loss_draws(&self, seed: &SeedSpec, shot: u64, site: usize) -> Vec<LossDraw> {
        let n_images = self.steps.iter().filter(|s| matches!(s, Step::Image(_))).count();
        if self.imaging.p_loss_per_image == 0.0 {
            return vec![LossDraw::none(); n_images];
        }
        (0..n_images)
            .map(|i| {
                LossDraw::sample(
                    self.imaging.p_loss_per_image,
                    &mut seed.rng("image_loss", &[shot, i as u64, site as u64]),
                )
            })
            .collect()
    }

    /// Sites an occupancy would lose in shot `shot`. Depends only on the
    /// seed, never on the qubit state.
    pub fn losses(&self, occ: &Occupancy, seed: &SeedSpec, shot: u64) -> Vec<usize> {
        if self.imaging.p_loss_per_image == 0.0 {
            return Vec::new();
        }
        occ.occupied()
            .filter(|&site| !self.loss_draws(seed, shot, site).iter().all(|d| d.survives()))
            .collect()
    }

    /// Runs one shot; `shot` selects the random streams.
    pub fn run_shot(&self, occ: &Occupancy, seed: &SeedSpec, shot: u64) -> Result<ShotRecord, RunError> {
        if occ.len() != self.n_sites {
            return Err(RunError::ShapeMismatch);
        }
        let occupied: Vec<usize> = occ.occupied().collect();
        let mut per_site = Vec::with_capacity(occupied.len());
        for &site in &occupied {
            let sn = self.site_noise(seed, shot, site);
            let losses = self.loss_draws(seed, shot, site);
            let mut state = self.pre_image_state(site, sn)?;
            let mut images = Vec::new();
            let mut shelve = false;
            let mut image_idx = 0usize;
            let mut at = self.first_image;
            while at < self.steps.len() {
                match &self.steps[at] {
                    Step::Shelve => shelve = true,
                    Step::Image(_) => {
                        let mut rng = seed.rng("readout", &[shot, image_idx as u64, site as u64]);
                        let present = !state.lost;
                        let img = image_site(
                            present.then_some(&state),
                            &self.imaging,
                            shelve,
                            losses[image_idx],
                            &mut rng,
                        );
                        images.push(SiteShot {
                            site,
                            counts1: img.counts1,
                            counts2: img.counts2,
                            class1: self.imaging.classify(img.counts1),
                            class2: self.imaging.classify(img.counts2),
                        });
                        if let Some(level) = img.outcome {
                            state = SiteState::pure_level(level);
                        }
                        state.lost = !img.present_after;
                        shelve = false;
                        image_idx += 1;
                    }
                    _ => {
                        // Steps between images.
                        let next = self.steps[at..]
                            .iter()
                            .position(|s| matches!(s, Step::Image(_) | Step::Shelve))
                            .map_or(self.steps.len(), |p| at + p);
                        state = self.evolve(site, state, at, next, sn)?;
                        at = next;
                        continue;
                    }
                }
                at += 1;
            }
            per_site.push((site, images, state.lost));
        }
        let tags: Vec<String> = self
            .steps
            .iter()
            .filter_map(|s| match s {
                Step::Image(t) => Some(t.clone()),
                _ => None,
            })
            .collect();
        let images = tags
            .into_iter()
            .enumerate()
            .map(|(i, tag)| ImageRecord {
                tag,
                sites: per_site.iter().map(|(_, imgs, _)| imgs[i]).collect(),
            })
            .collect();
        let lost = per_site.iter().filter(|(_, _, l)| *l).map(|(s, _, _)| *s).collect();
        Ok(ShotRecord { shot, images, lost })
    }
}

/// Runs `shots` independent shots from the same starting occupancy.
pub fn run_sequence(
    array: &TrapArray,
    occ: &Occupancy,
    seq: &PulseSequence,
    noise: &NoiseModel,
    imaging: &ImagingModel,
    shots: usize,
    seed: &SeedSpec,
) -> Result<ShotRecords, RunError> {
    if shots == 0 {
        return Err(RunError::NoShots);
    }
    if !occ.matches(array) {
        return Err(RunError::ShapeMismatch);
    }
    let runner = Runner::new(array, seq, noise, imaging)?;
    let shots = (0..shots as u64)
        .into_par_iter()
        .map(|shot| runner.run_shot(occ, seed, shot))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShotRecords { shots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_grid;
    use crate::spin::sequence::{Rotate, SiteSet};
    use std::f64::consts::PI;

    fn rot(col: usize, rows: Vec<usize>, theta: f64, phi: f64) -> Instruction {
        Instruction::Rotate(Rotate {
            sites: SiteSet::Column { col, rows: Some(rows) },
            theta,
            phi: vec![phi],
            drive: DriveParams::two_level(1160.0, 0.0),
        })
    }

    #[test]
    fn empty_sequence_reads_down() {
        let array = make_grid(2, 2, 5.0).unwrap();
        let occ = Occupancy::from_sites(&array, &[0, 3]);
        let rec = run_sequence(
            &array,
            &occ,
            &PulseSequence::new(),
            &NoiseModel::ideal(),
            &ImagingModel::perfect(),
            50,
            &SeedSpec::new(4),
        )
        .unwrap();
        for shot in &rec.shots {
            assert_eq!(shot.images.len(), 1);
            assert_eq!(shot.images[0].sites.len(), 2);
            assert!(shot.images[0].sites.iter().all(|s| !s.class1 && s.class2));
        }
    }

    #[test]
    fn pi_rotation_flips_addressed_site_only() {
        let array = make_grid(2, 2, 5.0).unwrap();
        let occ = Occupancy::from_sites(&array, &[0, 1, 2, 3]);
        let mut seq = PulseSequence::new();
        seq.push(rot(0, vec![0, 1], PI, 0.0));
        let runner = Runner::new(&array, &seq, &NoiseModel::ideal(), &ImagingModel::perfect()).unwrap();
        assert!((runner.pre_image_state(0, SiteNoise::default()).unwrap().p_up() - 1.0).abs() < 1e-12);
        assert!(runner.pre_image_state(1, SiteNoise::default()).unwrap().p_up() < 1e-12);
        let shot = runner.run_shot(&occ, &SeedSpec::new(1), 0).unwrap();
        let bright: Vec<usize> = shot.images[0]
            .sites
            .iter()
            .filter(|s| s.class1)
            .map(|s| s.site)
            .collect();
        assert_eq!(bright, vec![0, 2]);
    }

    #[test]
    fn shots_are_reproducible_and_order_free() {
        let array = make_grid(1, 3, 5.0).unwrap();
        let occ = Occupancy::from_sites(&array, &[0, 1, 2]);
        let mut seq = PulseSequence::new();
        seq.push(rot(1, vec![0], PI / 2.0, 0.0));
        let noise = NoiseModel {
            rabi_miscal_frac: 0.02,
            freq_jitter_hz: 1.0,
            ..NoiseModel::ideal()
        };
        let seed = SeedSpec::new(9);
        let runner = Runner::new(&array, &seq, &noise, &ImagingModel::default()).unwrap();
        let a = runner.run_shot(&occ, &seed, 7).unwrap();
        let _ = runner.run_shot(&occ, &seed, 3).unwrap();
        let b = runner.run_shot(&occ, &seed, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lost_atoms_reported() {
        let array = make_grid(1, 4, 5.0).unwrap();
        let occ = Occupancy::from_sites(&array, &[0, 1, 2, 3]);
        let imaging = ImagingModel {
            p_loss_per_image: 1.0,
            ..ImagingModel::perfect()
        };
        let runner = Runner::new(&array, &PulseSequence::new(), &NoiseModel::ideal(), &imaging).unwrap();
        let shot = runner.run_shot(&occ, &SeedSpec::new(2), 0).unwrap();
        assert_eq!(shot.lost, vec![0, 1, 2, 3]);
        assert_eq!(runner.losses(&occ, &SeedSpec::new(2), 0), shot.lost);
        assert!(shot.images[0].sites.iter().all(|s| !s.post_selected()));
    }

    #[test]
    fn zero_shots_rejected() {
        let array = make_grid(1, 1, 5.0).unwrap();
        let occ = Occupancy::from_sites(&array, &[0]);
        let r = run_sequence(
            &array,
            &occ,
            &PulseSequence::new(),
            &NoiseModel::ideal(),
            &ImagingModel::perfect(),
            0,
            &SeedSpec::new(0),
        );
        assert_eq!(r, Err(RunError::NoShots));
    }
}
