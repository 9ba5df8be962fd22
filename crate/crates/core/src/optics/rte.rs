//! Steady-state radiative transfer by successive scattering orders.
//!
//! Each term of the Neumann series is transported with the method of
//! characteristics: for every discrete ordinate a bundle of parallel rays
//! (spacing `ray_spacing · dx`) is traced through the voxel grid, and energy
//! travelling in a ray tube is attenuated exactly over each voxel segment with
//! a source that is flat inside the voxel. Collisions are tallied as the
//! energy lost along each segment, so energy is conserved to rounding.
//! Scattering back into the incoming ordinate never changes the photon path,
//! so it is removed from the collision rate and the remaining directions are
//! renormalised.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::Grid;
use crate::phantom::PhantomGrid;

use super::directions::{DirectionSet, DirectionSpec, PhaseMatrix};
use super::LaserPulse;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RteSettings {
    /// Highest scattering order computed (the ballistic term is order 0).
    pub max_orders: usize,
    /// Stop once an order carries less than this fraction of the accumulated fluence.
    pub tol: f64,
    pub directions: DirectionSpec,
    /// Distance between neighbouring rays as a fraction of the voxel size, at most 0.5.
    pub ray_spacing: f64,
}

impl Default for RteSettings {
    fn default() -> Self {
        Self { max_orders: 30, tol: 1e-3, directions: DirectionSpec::default(), ray_spacing: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RteDiagnostics {
    /// Highest order included.
    pub orders: usize,
    pub converged: bool,
    /// Volume integral of each order's fluence contribution, J·m.
    pub order_power: Vec<f64>,
    pub injected: f64,
    pub absorbed: f64,
    pub escaped: f64,
    /// Scattered energy not yet transported when the series was truncated.
    pub residual: f64,
}

/// Radiance on a discrete direction set, stored direction-major, J/(m²·sr).
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceField {
    pub grid: Grid,
    pub directions: DirectionSet,
    pub radiance: Vec<f64>,
    /// Fluence of the incident beam, J/m².
    pub incident_fluence: f64,
    pub source_columns: Vec<(usize, usize)>,
    pub diagnostics: RteDiagnostics,
}

impl RadianceField {
    pub fn direction(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.radiance[i * n..(i + 1) * n]
    }

    /// Angular integral Σ w_i φ_i, J/m².
    pub fn fluence(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for (i, w) in self.directions.weights.iter().enumerate() {
            for (o, r) in out.iter_mut().zip(self.direction(i)) {
                *o += w * r;
            }
        }
        out
    }
}

/// One voxel crossing of a ray. For a segment of length ℓ with collision
/// coefficient μ̃: `trans` = e^{−μ̃ℓ}, `gain` = (1 − e^{−μ̃ℓ})/μ̃ (output per unit
/// source) and `hold` = (ℓ − gain)/μ̃ (track per unit source).
#[derive(Debug, Clone, Copy)]
struct Segment {
    voxel: u32,
    len: f32,
    trans: f32,
    gain: f32,
    hold: f32,
}

impl Segment {
    fn new(voxel: usize, len: f64, mu: f64) -> Segment {
        let x = mu * len;
        let (gain, hold) = if x < 1e-4 {
            (len * (1.0 - x / 2.0 + x * x / 6.0), len * len * (0.5 - x / 6.0 + x * x / 24.0))
        } else {
            let lost = -(-x).exp_m1();
            (lost / mu, (len - lost / mu) / mu)
        };
        Segment { voxel: voxel as u32, len: len as f32, trans: (-x).exp() as f32, gain: gain as f32, hold: hold as f32 }
    }
}

/// Parallel rays for one ordinate.
struct RayBundle {
    /// Cross-section of a ray tube, m².
    area: f64,
    /// `segments[offsets[r]..offsets[r + 1]]` belong to ray `r`.
    offsets: Vec<u32>,
    segments: Vec<Segment>,
    /// First voxel hit by each ray.
    entry: Vec<u32>,
    /// Σ ℓ·area per voxel: the volume the bundle actually samples.
    traced: Vec<f64>,
}

/// Entry and exit parameters of the line o + tΩ through the box.
fn clip(o: Vec3, d: Vec3, lo: Vec3, hi: Vec3) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for a in 0..3 {
        let (oa, da, l, h) = (o.to_array()[a], d.to_array()[a], lo.to_array()[a], hi.to_array()[a]);
        if da.abs() < 1e-15 {
            if oa <= l || oa >= h {
                return None;
            }
        } else {
            let (ta, tb) = ((l - oa) / da, (h - oa) / da);
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    (t1 > t0).then_some((t0, t1))
}

fn trace_bundle(grid: &Grid, d: Vec3, delta: f64, mu: &[f64]) -> RayBundle {
    let (lo, hi) = grid.bounds();
    let dx = grid.spacing;
    let center = (lo + hi) * 0.5;
    let (u, w) = d.orthonormal_basis();
    let (mut umin, mut umax, mut wmin, mut wmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in 0..8 {
        let p = Vec3::new(
            if c & 1 == 0 { lo.x } else { hi.x },
            if c & 2 == 0 { lo.y } else { hi.y },
            if c & 4 == 0 { lo.z } else { hi.z },
        ) - center;
        umin = umin.min(p.dot(u));
        umax = umax.max(p.dot(u));
        wmin = wmin.min(p.dot(w));
        wmax = wmax.max(p.dot(w));
    }
    let nu = ((umax - umin) / delta - 1e-9).ceil() as usize;
    let nw = ((wmax - wmin) / delta - 1e-9).ceil() as usize;
    // centre the ray lattice on the projected box
    let u0 = 0.5 * (umin + umax) - 0.5 * (nu as f64 - 1.0) * delta;
    let w0 = 0.5 * (wmin + wmax) - 0.5 * (nw as f64 - 1.0) * delta;
    let area = delta * delta;
    let dims = grid.dims;
    let da = d.to_array();
    let step: [i64; 3] = std::array::from_fn(|a| if da[a] > 0.0 { 1 } else { -1 });

    let mut bundle = RayBundle {
        area,
        offsets: vec![0],
        segments: Vec::new(),
        entry: Vec::new(),
        traced: vec![0.0; grid.len()],
    };
    for a in 0..nu {
        for b in 0..nw {
            let o = center + u * (u0 + a as f64 * delta) + w * (w0 + b as f64 * delta);
            let Some((t0, t1)) = clip(o, d, lo, hi) else { continue };
            let oa = o.to_array();
            let la = lo.to_array();
            let mid = o + d * (t0 + 1e-9 * dx);
            let ma = mid.to_array();
            let mut cell: [i64; 3] =
                std::array::from_fn(|k| (((ma[k] - la[k]) / dx).floor() as i64).clamp(0, dims[k] as i64 - 1));
            let mut tmax = [f64::INFINITY; 3];
            let mut tdelta = [f64::INFINITY; 3];
            for k in 0..3 {
                if da[k].abs() >= 1e-15 {
                    let edge = la[k] + (cell[k] + i64::from(step[k] > 0)) as f64 * dx;
                    tmax[k] = (edge - oa[k]) / da[k];
                    tdelta[k] = dx / da[k].abs();
                }
            }
            let first = grid.index(cell[0] as usize, cell[1] as usize, cell[2] as usize);
            let mut t = t0;
            let before = bundle.segments.len();
            loop {
                let k = (0..3).min_by(|&x, &y| tmax[x].total_cmp(&tmax[y])).unwrap();
                let tn = tmax[k].min(t1);
                let len = tn - t;
                if len > 1e-9 * dx {
                    let v = grid.index(cell[0] as usize, cell[1] as usize, cell[2] as usize);
                    bundle.segments.push(Segment::new(v, len, mu[v]));
                    bundle.traced[v] += (len as f32) as f64 * area;
                }
                t = tn;
                if t >= t1 {
                    break;
                }
                cell[k] += step[k];
                if cell[k] < 0 || cell[k] >= dims[k] as i64 {
                    break;
                }
                tmax[k] += tdelta[k];
            }
            if bundle.segments.len() > before {
                bundle.offsets.push(bundle.segments.len() as u32);
                bundle.entry.push(first as u32);
            }
        }
    }
    bundle
}

/// Sweeps every ray of a bundle. `density` is the emitted energy per unit
/// ray length in each voxel; `inflow` the energy entering each ray. Returns
/// (escaped energy, track energy).
fn sweep(b: &RayBundle, density: &[f64], inflow: &[f64], track: &mut [f64], coll: &mut [f64]) -> (f64, f64) {
    let mut escaped = 0.0;
    let mut power = 0.0;
    for r in 0..b.entry.len() {
        let mut e = inflow.get(r).copied().unwrap_or(0.0);
        for s in &b.segments[b.offsets[r] as usize..b.offsets[r + 1] as usize] {
            let v = s.voxel as usize;
            let q = density[v];
            if e == 0.0 && q == 0.0 {
                continue;
            }
            let len = s.len as f64;
            let t = e * s.gain as f64 + q * s.hold as f64;
            track[v] += t;
            power += t;
            if s.trans == 1.0 {
                e += q * len;
            } else {
                let out = e * s.trans as f64 + q * s.gain as f64;
                coll[v] += e + q * len - out;
                e = out;
            }
        }
        escaped += e;
    }
    (escaped, power)
}

/// `src = P · coll` for direction-major `nd × n` arrays, in voxel blocks.
fn redistribute(p: &[f64], nd: usize, n: usize, coll: &[f64], src: &mut [f64]) {
    const BLOCK: usize = 2048;
    let blocks = n.div_ceil(BLOCK);
    let out: Vec<(usize, Vec<f64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let w = BLOCK.min(n - lo);
            let mut c = vec![0.0; nd * w];
            // SAFETY: the strides describe the nd × nd, nd × w (inside the
            // nd × n array `coll`) and nd × w (`c`) row-major matrices.
            unsafe {
                matrixmultiply::dgemm(
                    nd, nd, w, 1.0,
                    p.as_ptr(), nd as isize, 1,
                    coll.as_ptr().add(lo), n as isize, 1,
                    0.0,
                    c.as_mut_ptr(), w as isize, 1,
                );
            }
            (lo, c)
        })
        .collect();
    for (lo, c) in out {
        let w = c.len() / nd;
        for j in 0..nd {
            src[j * n + lo..j * n + lo + w].copy_from_slice(&c[j * w..(j + 1) * w]);
        }
    }
}

/// Anisotropy shared by all scattering voxels.
fn uniform_anisotropy(ph: &PhantomGrid) -> Result<f64> {
    let mut g: Option<f64> = None;
    for (v, &mus) in ph.mu_s.iter().enumerate() {
        if mus > 0.0 {
            match g {
                None => g = Some(ph.anisotropy[v]),
                Some(g0) if (g0 - ph.anisotropy[v]).abs() > 1e-12 => {
                    return Err(Error::config("the RTE solver requires one anisotropy value for all scattering media"))
                }
                _ => {}
            }
        }
    }
    Ok(g.unwrap_or(0.0))
}

/// Neumann-series solution for a top-hat beam entering the grid's top face along +z.
pub fn solve_rte_neumann(ph: &PhantomGrid, pulse: &LaserPulse, settings: &RteSettings) -> Result<RadianceField> {
    if settings.max_orders < 1 {
        return Err(Error::config("max_orders must be at least 1"));
    }
    if !(settings.tol >= 0.0) {
        return Err(Error::config(format!("tolerance must be non-negative, got {}", settings.tol)));
    }
    if !(settings.ray_spacing > 0.0 && settings.ray_spacing <= 0.5) {
        return Err(Error::config(format!("ray spacing must lie in (0, 0.5], got {}", settings.ray_spacing)));
    }
    pulse.validate()?;
    let grid = ph.grid;
    let n = grid.len();
    let dx = grid.spacing;
    let dirs = DirectionSet::new(settings.directions)?;
    let nd = dirs.len();
    let pm = PhaseMatrix::henyey_greenstein(&dirs, uniform_anisotropy(ph)?)?;
    let columns = pulse.beam_columns(&grid, ph.head_center)?;
    let down = dirs.index_of(Vec3::Z).expect("direction sets contain +z");

    // collision coefficient per ordinate: μ_a + μ_s (1 − P_ii)
    let mu_of = |i: usize| -> Vec<f64> {
        let keep = 1.0 - pm.self_scatter(i);
        ph.mu_a.iter().zip(&ph.mu_s).map(|(a, s)| a + s * keep).collect()
    };
    let delta = settings.ray_spacing * dx;
    let bundles: Vec<RayBundle> =
        (0..nd).into_par_iter().map(|i| trace_bundle(&grid, dirs.units[i], delta, &mu_of(i))).collect();

    let mut lit = vec![false; n];
    for &(i, j) in &columns {
        lit[grid.index(i, j, 0)] = true;
    }
    // scattering into a different ordinate; self-scatter is already folded into μ̃
    let mut off_diagonal = pm.p.clone();
    for i in 0..nd {
        off_diagonal[i * nd + i] = 0.0;
    }
    let b0 = &bundles[down];
    let packet = pulse.fluence * b0.area;
    let inflow: Vec<f64> = b0.entry.iter().map(|&v| if lit[v as usize] { packet } else { 0.0 }).collect();
    let injected: f64 = inflow.iter().sum();

    let mut accum = vec![0.0; nd * n];
    let mut src = vec![0.0; nd * n];
    let mut coll = vec![0.0; nd * n];
    let mut track = vec![0.0; nd * n];
    let mut diag = RteDiagnostics {
        orders: 0,
        converged: false,
        order_power: Vec::new(),
        injected,
        absorbed: 0.0,
        escaped: 0.0,
        residual: 0.0,
    };
    let mut total_power = 0.0;

    for order in 0..=settings.max_orders {
        let results: Vec<(f64, f64)> = accum
            .par_chunks_mut(n)
            .zip(coll.par_chunks_mut(n))
            .zip(track.par_chunks_mut(n))
            .zip(src.par_chunks_mut(n))
            .enumerate()
            .map(|(i, (((acc, c), t), s))| {
                c.iter_mut().for_each(|x| *x = 0.0);
                if order == 0 && i != down {
                    return (0.0, 0.0);
                }
                let b = &bundles[i];
                // energy per voxel → energy per unit length of each ray
                for (x, vol) in s.iter_mut().zip(&b.traced) {
                    *x = if *vol > 0.0 { *x * b.area / vol } else { 0.0 };
                }
                t.iter_mut().for_each(|x| *x = 0.0);
                let flow: &[f64] = if order == 0 { &inflow } else { &[] };
                let res = sweep(b, s, flow, t, c);
                for ((a, x), vol) in acc.iter_mut().zip(t.iter()).zip(&b.traced) {
                    if *vol > 0.0 {
                        *a += x / vol;
                    }
                }
                res
            })
            .collect();
        let mut power = 0.0;
        for (esc, pw) in results {
            diag.escaped += esc;
            power += pw;
        }
        total_power += power;
        diag.order_power.push(power);
        diag.orders = order;

        // split collisions into absorption and scattering; coll becomes the
        // scattered energy divided by (1 − P_ii)
        let mut absorbed = 0.0;
        let mut scattered = 0.0;
        for i in 0..nd {
            let keep = 1.0 - pm.self_scatter(i);
            for (v, c) in coll[i * n..(i + 1) * n].iter_mut().enumerate() {
                if *c != 0.0 {
                    let mu = ph.mu_a[v] + ph.mu_s[v] * keep;
                    absorbed += *c * ph.mu_a[v] / mu;
                    let s = *c * ph.mu_s[v] / mu;
                    scattered += s * keep;
                    *c = s;
                }
            }
        }
        diag.absorbed += absorbed;

        let done = power <= settings.tol * total_power;
        if done || order == settings.max_orders {
            diag.converged = done;
            diag.residual = scattered;
            break;
        }
        redistribute(&off_diagonal, nd, n, &coll, &mut src);
    }

    for i in 0..nd {
        let scale = 1.0 / dirs.weights[i];
        accum[i * n..(i + 1) * n].iter_mut().for_each(|r| *r *= scale);
    }
    if !diag.converged {
        log::warn!(
            "RTE series not converged after {} orders (last order {:.3e} of accumulated)",
            diag.orders,
            diag.order_power.last().copied().unwrap_or(0.0) / total_power.max(f64::MIN_POSITIVE)
        );
    }
    Ok(RadianceField {
        grid,
        directions: dirs,
        radiance: accum,
        incident_fluence: pulse.fluence,
        source_columns: columns,
        diagnostics: diag,
    })
}
