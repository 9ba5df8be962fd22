//! Voxel Monte Carlo photon transport with implicit capture and roulette.
//!
//! Photons are split into batches, each with its own ChaCha stream derived from
//! the seed, and batch tallies are summed in batch order, so results depend on
//! the seed and batch count only.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::Grid;
use crate::phantom::PhantomGrid;

use super::{FluenceField, LaserPulse};

pub const MIN_PHOTONS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_photons: u64,
    pub seed: u64,
    pub batches: usize,
    pub roulette_threshold: f64,
    pub roulette_survival: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_photons: 1_000_000,
            seed: 1,
            batches: 32,
            roulette_threshold: 1e-4,
            roulette_survival: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    /// Deposition (collision estimator) and fluence (track-length estimator).
    pub field: FluenceField,
    /// Relative standard error per voxel, from the spread of batch tallies.
    pub absorbed_rse: Vec<f64>,
    pub fluence_rse: Vec<f64>,
    pub injected: f64,
    pub absorbed: f64,
    pub escaped: f64,
}

struct Tally {
    absorbed: Vec<f64>,
    track: Vec<f64>,
    escaped: f64,
}

struct Medium<'a> {
    grid: Grid,
    mu_a: &'a [f64],
    mu_s: &'a [f64],
    g: &'a [f64],
}

/// Henyey–Greenstein deflection cosine from a uniform variate.
pub fn sample_hg_cos(g: f64, xi: f64) -> f64 {
    if g.abs() < 1e-6 {
        return 2.0 * xi - 1.0;
    }
    let t = (1.0 - g * g) / (1.0 - g + 2.0 * g * xi);
    ((1.0 + g * g - t * t) / (2.0 * g)).clamp(-1.0, 1.0)
}

fn deflect(dir: Vec3, cos_t: f64, phi: f64) -> Vec3 {
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let (u, v) = dir.orthonormal_basis();
    (dir * cos_t + u * (sin_t * phi.cos()) + v * (sin_t * phi.sin()))
        .normalized()
        .unwrap_or(dir)
}

fn run_batch(
    m: &Medium,
    columns: &[(usize, usize)],
    photons: u64,
    weight: f64,
    settings: &McSettings,
    rng: &mut ChaCha8Rng,
) -> Tally {
    let n = m.grid.len();
    let dims = m.grid.dims;
    let dx = m.grid.spacing;
    let mut t = Tally { absorbed: vec![0.0; n], track: vec![0.0; n], escaped: 0.0 };
    for _ in 0..photons {
        // position in voxel units, cell (i, j, k) spans [i, i+1)
        let (ci, cj) = columns[rng.gen_range(0..columns.len())];
        let mut pos = [ci as f64 + rng.gen::<f64>(), cj as f64 + rng.gen::<f64>(), 0.0];
        let mut cell = [ci as i64, cj as i64, 0i64];
        let mut dir = Vec3::Z;
        let mut w = weight;
        'photon: loop {
            // optical depth to the next interaction
            let mut tau = -(1.0 - rng.gen::<f64>()).ln();
            let v = loop {
                let v = m.grid.index(cell[0] as usize, cell[1] as usize, cell[2] as usize);
                let mu_t = m.mu_a[v] + m.mu_s[v];
                let d = dir.to_array();
                let mut t_exit = f64::INFINITY;
                let mut axis = 0;
                for a in 0..3 {
                    let tb = if d[a] > 0.0 {
                        (cell[a] as f64 + 1.0 - pos[a]) / d[a]
                    } else if d[a] < 0.0 {
                        (cell[a] as f64 - pos[a]) / d[a]
                    } else {
                        f64::INFINITY
                    };
                    if tb < t_exit {
                        t_exit = tb;
                        axis = a;
                    }
                }
                let t_exit = t_exit.max(0.0);
                let tau_exit = mu_t * t_exit * dx;
                if tau_exit > tau {
                    let s = tau / (mu_t * dx);
                    t.track[v] += w * s * dx;
                    for a in 0..3 {
                        pos[a] += d[a] * s;
                    }
                    break v;
                }
                t.track[v] += w * t_exit * dx;
                tau -= tau_exit;
                for a in 0..3 {
                    pos[a] += d[a] * t_exit;
                }
                let step = if d[axis] > 0.0 { 1 } else { -1 };
                cell[axis] += step;
                pos[axis] = if step > 0 { cell[axis] as f64 } else { cell[axis] as f64 + 1.0 };
                if cell[axis] < 0 || cell[axis] >= dims[axis] as i64 {
                    t.escaped += w;
                    break 'photon;
                }
            };
            let mu_t = m.mu_a[v] + m.mu_s[v];
            let dep = w * m.mu_a[v] / mu_t;
            t.absorbed[v] += dep;
            w -= dep;
            if m.mu_s[v] == 0.0 {
                break;
            }
            if w < settings.roulette_threshold * weight {
                if rng.gen::<f64>() < settings.roulette_survival {
                    w /= settings.roulette_survival;
                } else {
                    break;
                }
            }
            let cos_t = sample_hg_cos(m.g[v], rng.gen());
            dir = deflect(dir, cos_t, 2.0 * PI * rng.gen::<f64>());
        }
    }
    t
}

/// Absorbed energy density and fluence for a top-hat beam entering the top
/// face along +z; source columns match those of the RTE solver.
pub fn simulate_mc_fluence(ph: &PhantomGrid, pulse: &LaserPulse, settings: &McSettings) -> Result<McResult> {
    if settings.n_photons < MIN_PHOTONS {
        return Err(Error::config(format!(
            "Monte Carlo needs at least {MIN_PHOTONS} photons, got {}",
            settings.n_photons
        )));
    }
    if settings.batches < 2 {
        return Err(Error::config("Monte Carlo needs at least two batches for error estimates"));
    }
    if !(settings.roulette_survival > 0.0 && settings.roulette_survival <= 1.0) {
        return Err(Error::config("roulette survival probability must lie in (0, 1]"));
    }
    pulse.validate()?;
    let grid = ph.grid;
    let n = grid.len();
    let dx = grid.spacing;
    let columns = pulse.beam_columns(&grid, ph.head_center)?;
    let injected = pulse.fluence * dx * dx * columns.len() as f64;
    let weight = injected / settings.n_photons as f64;
    let medium = Medium { grid, mu_a: &ph.mu_a, mu_s: &ph.mu_s, g: &ph.anisotropy };

    let b = settings.batches as u64;
    let per = settings.n_photons / b;
    let extra = settings.n_photons % b;
    let mut sum_a = vec![0.0; n];
    let mut sq_a = vec![0.0; n];
    let mut sum_t = vec![0.0; n];
    let mut sq_t = vec![0.0; n];
    let mut escaped = 0.0;
    let chunk = rayon::current_num_threads().max(1);
    let ids: Vec<u64> = (0..b).collect();
    for group in ids.chunks(chunk) {
        let tallies: Vec<Tally> = group
            .par_iter()
            .map(|&id| {
                let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
                rng.set_stream(id);
                let count = per + u64::from(id < extra);
                run_batch(&medium, &columns, count, weight, settings, &mut rng)
            })
            .collect();
        for tl in tallies {
            escaped += tl.escaped;
            for v in 0..n {
                sum_a[v] += tl.absorbed[v];
                sq_a[v] += tl.absorbed[v] * tl.absorbed[v];
                sum_t[v] += tl.track[v];
                sq_t[v] += tl.track[v] * tl.track[v];
            }
        }
    }

    // SE of a sum of B batch totals: sqrt(B · sample variance)
    let bf = b as f64;
    let rse = |sum: &[f64], sq: &[f64]| -> Vec<f64> {
        sum.iter()
            .zip(sq)
            .map(|(&s, &q)| {
                if s <= 0.0 {
                    return f64::INFINITY;
                }
                let mean = s / bf;
                let var = ((q - bf * mean * mean) / (bf - 1.0)).max(0.0);
                (bf * var).sqrt() / s
            })
            .collect()
    };
    let absorbed_rse = rse(&sum_a, &sq_a);
    let fluence_rse = rse(&sum_t, &sq_t);
    let absorbed_total: f64 = sum_a.iter().sum();
    let vol = dx * dx * dx;
    let fluence: Vec<f64> = sum_t.iter().map(|t| t / vol).collect();
    let deposit: Vec<f64> = sum_a.iter().map(|a| a / vol).collect();
    let field = FluenceField::from_parts(grid, &ph.mu_a, fluence, deposit, pulse.fluence)?;
    Ok(McResult {
        field,
        absorbed_rse,
        fluence_rse,
        injected,
        absorbed: absorbed_total,
        escaped,
    })
}
