// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Phase-only hologram synthesis for the static trap array.
//!
//! The SLM plane and the focal plane are related by a unitary 2-D DFT. Focal
//! pixel coordinates are "shifted": the zero spatial frequency sits at
//! `(N/2, N/2)`. Weighted Gerchberg-Saxton equalises the spot intensities by
//! rescaling a per-spot weight every iteration.

use std::f64::consts::PI;
use std::io::{self, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::SeedSpec;

pub const MASK_MAGIC: &[u8; 4] = b"PHMK";
pub const MASK_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum HologramError {
    #[error("no target spots")]
    EmptyTargets,
    #[error("target ({x}, {y}) lies outside the {n}x{n} focal grid")]
    GridTooSmall { x: usize, y: usize, n: usize },
    #[error("grid size {0} is not a power of two")]
    InvalidGridSize(usize),
    #[error("target amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),
    #[error("duplicate target at ({0}, {1})")]
    DuplicateTarget(usize, usize),
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("phase mask contains a non-finite entry at pixel {0}")]
    NonFinite(usize),
    #[error("bad phase mask file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpot {
    pub x: usize,
    pub y: usize,
    pub amplitude: f64,
}

/// Validated list of focal spots.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpots {
    spots: Vec<TargetSpot>,
}

impl TargetSpots {
    pub fn new(spots: Vec<TargetSpot>, grid_size: usize) -> Result<Self, HologramError> {
        if spots.is_empty() {
            return Err(HologramError::EmptyTargets);
        }
        let mut seen = std::collections::HashSet::new();
        for s in &spots {
            if s.x >= grid_size || s.y >= grid_size {
                return Err(HologramError::GridTooSmall {
                    x: s.x,
                    y: s.y,
                    n: grid_size,
                });
            }
            if !(s.amplitude > 0.0) || !s.amplitude.is_finite() {
                return Err(HologramError::NonPositiveAmplitude(s.amplitude));
            }
            if !seen.insert((s.x, s.y)) {
                return Err(HologramError::DuplicateTarget(s.x, s.y));
            }
        }
        Ok(Self { spots })
    }

    /// `rows x cols` equal-amplitude grid, `spacing` pixels apart, centred on
    /// the zero-order pixel.
    pub fn grid(rows: usize, cols: usize, spacing: usize, grid_size: usize) -> Result<Self, HologramError> {
        let half = grid_size / 2;
        let x0 = half as isize - ((cols.saturating_sub(1) * spacing) / 2) as isize;
        let y0 = half as isize - ((rows.saturating_sub(1) * spacing) / 2) as isize;
        let mut spots = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = x0 + (c * spacing) as isize;
                let y = y0 + (r * spacing) as isize;
                if x < 0 || y < 0 {
                    return Err(HologramError::GridTooSmall {
                        x: 0,
                        y: 0,
                        n: grid_size,
                    });
                }
                spots.push(TargetSpot {
                    x: x as usize,
                    y: y as usize,
                    amplitude: 1.0,
                });
            }
        }
        Self::new(spots, grid_size)
    }

    /// True when every spot has an equal-amplitude partner mirrored through
    /// the zero-order pixel `(N/2, N/2)`.
    pub fn is_point_symmetric(&self, grid_size: usize) -> bool {
        let n = grid_size;
        let lookup: std::collections::HashMap<(usize, usize), f64> =
            self.spots.iter().map(|s| ((s.x, s.y), s.amplitude)).collect();
        self.spots.iter().all(|s| {
            let mirror = ((n - s.x) % n, (n - s.y) % n);
            lookup.get(&mirror).is_some_and(|&a| a == s.amplitude)
        })
    }

    pub fn spots(&self) -> &[TargetSpot] {
        &self.spots
    }

    pub fn len(&self) -> usize {
        self.spots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spots.is_empty()
    }
}

/// SLM phase in radians, row-major, every entry in `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    n: usize,
    phase: Vec<f64>,
}

impl PhaseMask {
    pub fn new(n: usize, phase: Vec<f64>) -> Result<Self, HologramError> {
        if !n.is_power_of_two() {
            return Err(HologramError::InvalidGridSize(n));
        }
        if phase.len() != n * n {
            return Err(HologramError::Format(format!(
                "expected {} entries, got {}",
                n * n,
                phase.len()
            )));
        }
        if let Some(i) = phase.iter().position(|p| !p.is_finite()) {
            return Err(HologramError::NonFinite(i));
        }
        Ok(Self {
            n,
            phase: phase.into_iter().map(wrap_phase).collect(),
        })
    }

    pub fn zeros(n: usize) -> Result<Self, HologramError> {
        Self::new(n, vec![0.0; n * n])
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    /// 16-byte header (`PHMK`, u32 N, u32 reserved, u32 pad) then N*N
    /// little-endian f64, row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), HologramError> {
        w.write_all(MASK_MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        w.write_all(&0u32.to_le_bytes())?;
        for p in &self.phase {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, HologramError> {
        let mut header = [0u8; MASK_HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[0..4] != MASK_MAGIC {
            return Err(HologramError::Format("missing PHMK magic".into()));
        }
        let n = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
        if !n.is_power_of_two() {
            return Err(HologramError::InvalidGridSize(n));
        }
        let mut buf = vec![0u8; n * n * 8];
        r.read_exact(&mut buf)?;
        let phase = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(n, phase)
    }
}

/// Focal-plane intensity in shifted coordinates, `data[y * n + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    n: usize,
    data: Vec<f64>,
}

impl IntensityMap {
    pub fn grid_size(&self) -> usize {
        self.n
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.n + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn argmax(&self) -> (usize, usize) {
        let (i, _) = self
            .data
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        (i % self.n, i / self.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WgsReport {
    pub iterations_run: usize,
    pub uniformity: f64,
    pub efficiency: f64,
    /// Uniformity of the focal field at the start of each iteration.
    pub uniformity_trace: Vec<f64>,
    /// Largest `|sum I - P_in| / P_in` seen over all iterates.
    pub parseval_max_rel_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotMetrics {
    pub uniformity: f64,
    pub efficiency: f64,
}

/// `1 - (Imax - Imin)/(Imax + Imin)` over amplitude-normalised spot
/// intensities, and the fraction of total power landing on the spots.
pub fn spot_metrics(map: &IntensityMap, targets: &TargetSpots) -> SpotMetrics {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut on_target = 0.0;
    for s in targets.spots() {
        let i = map.at(s.x, s.y);
        on_target += i;
        let norm = i / (s.amplitude * s.amplitude);
        lo = lo.min(norm);
        hi = hi.max(norm);
    }
    let uniformity = if hi + lo > 0.0 {
        1.0 - (hi - lo) / (hi + lo)
    } else {
        0.0
    };
    let total = map.total();
    SpotMetrics {
        uniformity,
        efficiency: if total > 0.0 { on_target / total } else { 0.0 },
    }
}

/// Unitary 2-D DFT on an `n x n` row-major buffer.
struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            transposed: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    fn run(&mut self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inverse } else { &self.forward };
        plan.process_with_scratch(buf, &mut self.scratch);
        transpose(buf, &mut self.transposed, n);
        plan.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, buf, n);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    const BLOCK: usize = 16;
    for bi in (0..n).step_by(BLOCK) {
        for bj in (0..n).step_by(BLOCK) {
            for i in bi..(bi + BLOCK).min(n) {
                for j in bj..(bj + BLOCK).min(n) {
                    dst[j * n + i] = src[i * n + j];
                }
            }
        }
    }
}

/// Maps a shifted focal coordinate to its index in the raw DFT output.
fn unshifted_index(x: usize, y: usize, n: usize) -> usize {
    let h = n / 2;
    ((y + h) % n) * n + (x + h) % n
}

/// Makes `phase` even under `(x, y) -> (-x, -y) mod N`. An even SLM field
/// has a point-symmetric far field, so mirrored spots stay exactly balanced.
fn symmetrize(phase: &mut [f64], n: usize) {
    for y in 0..n {
        for x in 0..n {
            let (mx, my) = ((n - x) % n, (n - y) % n);
            if (my, mx) > (y, x) {
                phase[my * n + mx] = phase[y * n + x];
            }
        }
    }
}

fn wrap_phase(p: f64) -> f64 {
    let w = (p + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

fn intensity_map(field: &[Complex64], n: usize) -> IntensityMap {
    let mut data = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            data[y * n + x] = field[unshifted_index(x, y, n)].norm_sqr();
        }
    }
    IntensityMap { n, data }
}

/// Far-field intensity of a flat-illuminated phase mask. The unitary DFT
/// keeps the total equal to the input power `N^2`.
pub fn simulate_focal(mask: &PhaseMask) -> IntensityMap {
    let n = mask.n;
    let mut field: Vec<Complex64> = mask.phase.iter().map(|&p| Complex64::from_polar(1.0, p)).collect();
    Fft2::new(n).run(&mut field, false);
    intensity_map(&field, n)
}

/// Weighted Gerchberg-Saxton phase retrieval for a set of focal spots.
pub fn wgs_phase(
    targets: &TargetSpots,
    grid_size: usize,
    iterations: usize,
    seed: &SeedSpec,
) -> Result<(PhaseMask, WgsReport), HologramError> {
    if !grid_size.is_power_of_two() || grid_size < 2 {
        return Err(HologramError::InvalidGridSize(grid_size));
    }
    if iterations == 0 {
        return Err(HologramError::ZeroIterations);
    }
    let n = grid_size;
    for s in targets.spots() {
        if s.x >= n || s.y >= n {
            return Err(HologramError::GridTooSmall { x: s.x, y: s.y, n });
        }
    }
    let input_power = (n * n) as f64;
    let idx: Vec<usize> = targets.spots().iter().map(|s| unshifted_index(s.x, s.y, n)).collect();
    let amps: Vec<f64> = targets.spots().iter().map(|s| s.amplitude).collect();
    let mut weights = vec![1.0; idx.len()];

    let mut rng = seed.rng("wgs_initial_phase", &[n as u64]);
    let mut phase: Vec<f64> = (0..n * n).map(|_| rng.random_range(-PI..PI)).collect();
    let symmetric = targets.is_point_symmetric(n);
    if symmetric {
        symmetrize(&mut phase, n);
    }

    let mut fft = Fft2::new(n);
    let mut field = vec![Complex64::new(0.0, 0.0); n * n];
    let mut trace = Vec::with_capacity(iterations);
    let mut parseval_err: f64 = 0.0;

    for _ in 0..iterations {
        for (z, &p) in field.iter_mut().zip(&phase) {
            *z = Complex64::from_polar(1.0, p);
        }
        fft.run(&mut field, false);

        let total: f64 = field.iter().map(|z| z.norm_sqr()).sum();
        parseval_err = parseval_err.max((total - input_power).abs() / input_power);

        let norm_amp: Vec<f64> = idx.iter().zip(&amps).map(|(&i, &a)| field[i].norm() / a).collect();
        let (lo, hi) = norm_amp
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v * v), hi.max(v * v))
            });
        trace.push(if hi + lo > 0.0 {
            1.0 - (hi - lo) / (hi + lo)
        } else {
            0.0
        });

        let mean = norm_amp.iter().sum::<f64>() / norm_amp.len() as f64;
        for (w, &v) in weights.iter_mut().zip(&norm_amp) {
            if v > 0.0 {
                *w *= mean / v;
            }
        }

        let mut constrained = vec![Complex64::new(0.0, 0.0); n * n];
        for ((&i, &a), &w) in idx.iter().zip(&amps).zip(&weights) {
            let z = field[i];
            let unit = if z.norm() > 0.0 {
                z / z.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            constrained[i] = unit * (w * a);
        }
        field = constrained;
        fft.run(&mut field, true);
        for (p, z) in phase.iter_mut().zip(&field) {
            *p = wrap_phase(z.arg());
        }
        // The even subspace is invariant in exact arithmetic but unstable
        // under rounding.
        if symmetric {
            symmetrize(&mut phase, n);
        }
    }

    let mask = PhaseMask::new(n, phase)?;
    let map = simulate_focal(&mask);
    parseval_err = parseval_err.max((map.total() - input_power).abs() / input_power);
    let metrics = spot_metrics(&map, targets);
    Ok((
        mask,
        WgsReport {
            iterations_run: iterations,
            uniformity: metrics.uniformity,
            efficiency: metrics.efficiency,
            uniformity_trace: trace,
            parseval_max_rel_error: parseval_err,
        },
    ))
}
