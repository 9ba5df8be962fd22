//! First-order k-space pseudospectral propagation of an initial pressure field.
//!
//! The coupled system is advanced on staggered grids: particle velocity sits
//! half a voxel forward along its own axis and half a step in time from the
//! pressure. Spatial derivatives are taken in the Fourier domain and corrected
//! by `sinc(c_ref·|k|·dt/2)`, which makes the scheme exact in a homogeneous,
//! lossless medium when `c_ref` equals the sound speed. Power-law absorption
//! uses the two fractional-Laplacian terms of the lossy equation of state.
//! A split-field perfectly matched layer lines the inside of every active face.

mod fft;

pub use fft::Fft3;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::Grid;
use crate::optics::InitialPressureField;
use crate::phantom::PhantomGrid;
use crate::signal::SignalTrace;

/// dB per neper (20·log10 e).
const DB_PER_NEPER: f64 = 8.685_889_638_065_035;

/// Growth of max |p| over its initial value that counts as a blow-up.
pub const INSTABILITY_GROWTH: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Time step in s; `None` uses [`stable_dt`] with `cfl`.
    pub dt: Option<f64>,
    pub cfl: f64,
    /// Reference speed of the k-space correction, m/s.
    pub c_ref: f64,
    /// Voxels per face.
    pub pml_thickness: usize,
    /// Nepers per voxel at the outer edge of the layer.
    pub pml_attenuation: f64,
    /// s
    pub t_end: f64,
    /// Number of axes with more than one voxel (1, 2 or 3).
    pub dimensionality: usize,
    /// Exponent y of the absorption operator.
    pub absorption_exponent: f64,
    /// Hz. Tabulated attenuation is reproduced exactly at this frequency.
    pub absorption_match_frequency: f64,
    /// Include the dispersive fractional-Laplacian term. Off by default: with
    /// y close to 1 its prefactor tan(πy/2) is large enough at skull attenuation
    /// to swamp the propagation term and break stability.
    pub dispersion: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: None,
            cfl: 0.3,
            c_ref: 1550.0,
            pml_thickness: 10,
            pml_attenuation: 2.0,
            t_end: 10e-6,
            dimensionality: 3,
            absorption_exponent: 1.05,
            absorption_match_frequency: 2e6,
            dispersion: false,
        }
    }
}

impl SolverConfig {
    /// Checks that do not depend on the medium.
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::config(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.c_ref > 0.0 && self.c_ref.is_finite()) {
            return Err(Error::config(format!("c_ref must be positive, got {}", self.c_ref)));
        }
        if self.pml_thickness < 8 {
            return Err(Error::config(format!("pml_thickness must be at least 8 voxels, got {}", self.pml_thickness)));
        }
        if !(self.pml_attenuation >= 0.0 && self.pml_attenuation.is_finite()) {
            return Err(Error::config("pml_attenuation must be non-negative"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(1..=3).contains(&self.dimensionality) {
            return Err(Error::config(format!("dimensionality must be 1, 2 or 3, got {}", self.dimensionality)));
        }
        let y = self.absorption_exponent;
        if !(y > 0.0 && y < 3.0) || (y - 1.0).abs() < 1e-6 {
            return Err(Error::config(format!("absorption exponent must lie in (0, 3) and differ from 1, got {y}")));
        }
        if !(self.absorption_match_frequency > 0.0 && self.absorption_match_frequency.is_finite()) {
            return Err(Error::config("absorption match frequency must be positive"));
        }
        Ok(())
    }

    /// Time step for `medium`, checked against the stability bound.
    pub fn resolve_dt(&self, medium: &PhantomGrid) -> Result<f64> {
        self.validate()?;
        let bound = stable_dt(medium, self.cfl);
        match self.dt {
            None => Ok(bound),
            Some(dt) if dt <= bound * (1.0 + 1e-12) => Ok(dt),
            Some(dt) => Err(Error::config(format!(
                "dt = {dt:e} s exceeds cfl·dx/c_max = {bound:e} s"
            ))),
        }
    }

    /// Number of recorded samples, including t = 0.
    pub fn sample_count(&self, dt: f64) -> usize {
        (self.t_end / dt + 1e-9).floor() as usize + 1
    }
}

/// `cfl·Δx / max(sound speed)`.
pub fn stable_dt(medium: &PhantomGrid, cfl: f64) -> f64 {
    cfl * medium.grid.spacing / medium.max_sound_speed()
}

/// Acoustic field variables. Velocities are stored on the staggered grid
/// (per active axis) at half steps; all other fields at integer steps.
#[derive(Debug, Clone)]
pub struct WaveState {
    pub p: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub step: usize,
}

impl WaveState {
    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.u.iter().flatten()).chain(self.rho.iter().flatten()).all(|x| x.is_finite())
    }

    pub fn max_abs_pressure(&self) -> f64 {
        self.p.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

struct Absorption {
    tau: Vec<f64>,
    eta: Vec<f64>,
    /// |k|^(y-2), zero at k = 0.
    nabla1: Vec<f64>,
    /// |k|^(y-1), zero at k = 0; absent without dispersion.
    nabla2: Option<Vec<f64>>,
}

/// Precomputed operators for one medium and time step.
pub struct Solver {
    fft: Fft3,
    grid: Grid,
    axes: Vec<usize>,
    dt: f64,
    c2: Vec<f64>,
    rho0: Vec<f64>,
    /// dt/ρ0 on each staggered grid.
    dt_rho_sg: Vec<Vec<f64>>,
    pml: Vec<Vec<f64>>,
    pml_sg: Vec<Vec<f64>>,
    /// i·k·e^{+ik·dx/2}·κ per axis.
    grad_op: Vec<Vec<Complex64>>,
    /// i·k·e^{-ik·dx/2}·κ per axis.
    div_op: Vec<Vec<Complex64>>,
    absorption: Option<Absorption>,
    real_buf: Vec<f64>,
    real_out: Vec<f64>,
    div_sum: Vec<f64>,
    spec: Vec<Complex64>,
    spec_tmp: Vec<Complex64>,
}

impl Solver {
    pub fn new(medium: &PhantomGrid, config: &SolverConfig) -> Result<Solver> {
        let dt = config.resolve_dt(medium)?;
        let grid = medium.grid;
        let axes = grid.active_axes();
        if axes.len() != config.dimensionality {
            return Err(Error::config(format!(
                "grid {:?} has {} active axes but dimensionality is {}",
                grid.dims,
                axes.len(),
                config.dimensionality
            )));
        }
        let npml = config.pml_thickness;
        for &a in &axes {
            if grid.dims[a] < 2 * npml + 2 {
                return Err(Error::config(format!(
                    "axis {a} has {} voxels, too few for two {npml}-voxel absorbing layers",
                    grid.dims[a]
                )));
            }
        }
        let n = grid.len();
        let dx = grid.spacing;
        let fft = Fft3::new(grid.dims);
        let ns = fft.spectrum_len();

        let kvec: Vec<Vec<f64>> = (0..3).map(|a| fft.wavenumbers(a, dx)).collect();
        let half = fft.half;
        let spec_coords = |j: usize| -> [usize; 3] {
            let k = j % half[2];
            let r = j / half[2];
            [r / half[1], r % half[1], k]
        };
        let kmag: Vec<f64> = (0..ns)
            .map(|j| {
                let c = spec_coords(j);
                (0..3).map(|a| kvec[a][c[a]].powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        let kappa: Vec<f64> = kmag.iter().map(|&k| sinc(config.c_ref * k * dt / 2.0)).collect();
        let mut grad_op = Vec::new();
        let mut div_op = Vec::new();
        for &a in &axes {
            let (mut g, mut d) = (Vec::with_capacity(ns), Vec::with_capacity(ns));
            for j in 0..ns {
                let k = kvec[a][spec_coords(j)[a]];
                let ik = Complex64::new(0.0, k);
                let shift = Complex64::from_polar(1.0, k * dx / 2.0);
                g.push(ik * shift * kappa[j]);
                d.push(ik * shift.conj() * kappa[j]);
            }
            grad_op.push(g);
            div_op.push(d);
        }

        let mut dt_rho_sg = Vec::new();
        let mut pml = Vec::new();
        let mut pml_sg = Vec::new();
        for &a in &axes {
            let na = grid.dims[a];
            let profile = |pos: f64| -> f64 {
                let depth = if pos < npml as f64 {
                    (npml as f64 - pos) / npml as f64
                } else if pos > (na - 1 - npml) as f64 {
                    (pos - (na - 1 - npml) as f64) / npml as f64
                } else {
                    0.0
                };
                // per-step decay split over the two applications
                (-config.pml_attenuation * (config.c_ref * dt / dx) * depth.powi(4) / 2.0).exp()
            };
            let reg: Vec<f64> = (0..na).map(|i| profile(i as f64)).collect();
            let stag: Vec<f64> = (0..na).map(|i| profile(i as f64 + 0.5)).collect();
            let mut full = vec![0.0; n];
            let mut full_sg = vec![0.0; n];
            let mut drs = vec![0.0; n];
            let stride: usize = grid.dims[a + 1..].iter().product();
            for idx in 0..n {
                let i = grid.coords(idx)[a];
                full[idx] = reg[i];
                full_sg[idx] = stag[i];
                let next = if i + 1 < na { idx + stride } else { idx - i * stride };
                drs[idx] = dt / (0.5 * (medium.density[idx] + medium.density[next]));
            }
            pml.push(full);
            pml_sg.push(full_sg);
            dt_rho_sg.push(drs);
        }

        let absorbing = medium.attenuation.iter().any(|&a| a > 0.0);
        let absorption = absorbing.then(|| {
            let y = config.absorption_exponent;
            let fm = config.absorption_match_frequency / 1e6;
            let mut tau = vec![0.0; n];
            let mut eta = vec![0.0; n];
            for idx in 0..n {
                let y0 = medium.label_properties(medium.label(idx)).attenuation_exponent;
                let alpha_db = medium.attenuation[idx] * fm.powf(y0 - y);
                let alpha0 = 100.0 * alpha_db * (1e-6 / (2.0 * PI)).powf(y) / DB_PER_NEPER;
                let c = medium.sound_speed[idx];
                tau[idx] = -2.0 * alpha0 * c.powf(y - 1.0);
                if config.dispersion {
                    eta[idx] = 2.0 * alpha0 * c.powf(y) * (PI * y / 2.0).tan();
                }
            }
            let pw = |e: f64| kmag.iter().map(|&k| if k > 0.0 { k.powf(e) } else { 0.0 }).collect();
            Absorption { tau, eta, nabla1: pw(y - 2.0), nabla2: config.dispersion.then(|| pw(y - 1.0)) }
        });

        Ok(Solver {
            grid,
            axes,
            dt,
            c2: medium.sound_speed.iter().map(|c| c * c).collect(),
            rho0: medium.density.clone(),
            dt_rho_sg,
            pml,
            pml_sg,
            grad_op,
            div_op,
            absorption,
            real_buf: vec![0.0; n],
            real_out: vec![0.0; n],
            div_sum: vec![0.0; n],
            spec: vec![Complex64::default(); ns],
            spec_tmp: vec![Complex64::default(); ns],
            fft,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// State at t = 0: pressure `p0`, zero velocity, density split evenly over axes.
    pub fn initial_state(&self, p0: &[f64]) -> WaveState {
        let d = self.axes.len() as f64;
        let rho_a: Vec<f64> = p0.iter().zip(&self.c2).map(|(p, c2)| p / (c2 * d)).collect();
        WaveState {
            p: p0.to_vec(),
            u: vec![vec![0.0; p0.len()]; self.axes.len()],
            rho: vec![rho_a; self.axes.len()],
            step: 0,
        }
    }

    /// Advance by one time step. The first call moves the velocity by half a
    /// step so that it lands on the staggered time grid.
    pub fn step(&mut self, s: &mut WaveState) {
        let frac = if s.step == 0 { 0.5 } else { 1.0 };
        let n = s.p.len();

        // momentum
        self.real_buf.copy_from_slice(&s.p);
        self.fft.forward(&mut self.real_buf, &mut self.spec);
        for ai in 0..self.axes.len() {
            for ((t, p), op) in self.spec_tmp.iter_mut().zip(&self.spec).zip(&self.grad_op[ai]) {
                *t = p * op;
            }
            self.fft.inverse(&mut self.spec_tmp, &mut self.real_out);
            let (u, m, dr) = (&mut s.u[ai], &self.pml_sg[ai], &self.dt_rho_sg[ai]);
            for i in 0..n {
                u[i] = m[i] * (m[i] * u[i] - frac * dr[i] * self.real_out[i]);
            }
        }

        // mass conservation, split per axis
        let absorbing = self.absorption.is_some();
        if absorbing {
            self.div_sum.iter_mut().for_each(|x| *x = 0.0);
        }
        for ai in 0..self.axes.len() {
            self.real_buf.copy_from_slice(&s.u[ai]);
            self.fft.forward(&mut self.real_buf, &mut self.spec_tmp);
            for (t, op) in self.spec_tmp.iter_mut().zip(&self.div_op[ai]) {
                *t *= op;
            }
            self.fft.inverse(&mut self.spec_tmp, &mut self.real_out);
            let (r, m) = (&mut s.rho[ai], &self.pml[ai]);
            for i in 0..n {
                r[i] = m[i] * (m[i] * r[i] - self.dt * self.rho0[i] * self.real_out[i]);
            }
            if absorbing {
                for (d, v) in self.div_sum.iter_mut().zip(&self.real_out) {
                    *d += v;
                }
            }
        }

        // equation of state
        for i in 0..n {
            s.p[i] = s.rho.iter().map(|r| r[i]).sum();
        }
        if let Some(ab) = &self.absorption {
            // s.p holds Σρ here
            for i in 0..n {
                self.real_buf[i] = self.rho0[i] * self.div_sum[i];
            }
            self.fft.forward(&mut self.real_buf, &mut self.spec_tmp);
            for (t, k) in self.spec_tmp.iter_mut().zip(&ab.nabla1) {
                *t *= k;
            }
            self.fft.inverse(&mut self.spec_tmp, &mut self.div_sum);
            match &ab.nabla2 {
                Some(nabla2) => {
                    self.real_buf.copy_from_slice(&s.p);
                    self.fft.forward(&mut self.real_buf, &mut self.spec_tmp);
                    for (t, k) in self.spec_tmp.iter_mut().zip(nabla2) {
                        *t *= k;
                    }
                    self.fft.inverse(&mut self.spec_tmp, &mut self.real_out);
                }
                None => self.real_out.iter_mut().for_each(|x| *x = 0.0),
            }
            for i in 0..n {
                s.p[i] = self.c2[i] * (s.p[i] + ab.tau[i] * self.div_sum[i] - ab.eta[i] * self.real_out[i]);
            }
        } else {
            for (p, c2) in s.p.iter_mut().zip(&self.c2) {
                *p *= c2;
            }
        }
        s.step += 1;
    }

    /// Trilinear interpolation stencil for `p`; rejects points outside the
    /// interior (grid minus absorbing layers). Inactive axes are ignored.
    fn stencil(&self, p: Vec3, npml: usize) -> Result<Vec<(usize, f64)>> {
        let f = self.grid.fractional_index(p);
        let mut lo = [0usize; 3];
        let mut w = [0.0; 3];
        for a in 0..3 {
            if self.grid.dims[a] == 1 {
                continue;
            }
            let max = (self.grid.dims[a] - 1 - npml) as f64;
            if !(f[a] >= npml as f64 - 1e-9 && f[a] <= max + 1e-9) {
                return Err(Error::config(format!(
                    "sensor point {p:?} lies outside the solver interior (inside the absorbing layer or beyond the grid)"
                )));
            }
            let fa = f[a].clamp(npml as f64, max);
            let i0 = fa.floor() as usize;
            lo[a] = i0;
            w[a] = fa - i0 as f64;
        }
        let mut out = Vec::with_capacity(8);
        for corner in 0..8usize {
            let mut idx = [0usize; 3];
            let mut weight = 1.0;
            let mut skip = false;
            for a in 0..3 {
                let bit = (corner >> a) & 1;
                if self.grid.dims[a] == 1 {
                    if bit == 1 {
                        skip = true;
                    }
                    continue;
                }
                idx[a] = lo[a] + bit;
                weight *= if bit == 1 { w[a] } else { 1.0 - w[a] };
            }
            if !skip && weight != 0.0 {
                out.push((self.grid.index(idx[0], idx[1], idx[2]), weight));
            }
        }
        Ok(out)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Traces plus the per-step max |p| (solver diagnostics).
#[derive(Debug, Clone)]
pub struct Propagation {
    pub traces: Vec<SignalTrace>,
    pub max_pressure: Vec<f64>,
    pub dt: f64,
}

impl Propagation {
    /// CSV with columns `step,time_s,max_abs_pressure_pa`.
    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from("step,time_s,max_abs_pressure_pa\n");
        for (i, m) in self.max_pressure.iter().enumerate() {
            s.push_str(&format!("{i},{:e},{:e}\n", i as f64 * self.dt, m));
        }
        s
    }
}

/// Pressure traces at `points` (sampled every step from t = 0 to `t_end`).
pub fn propagate(
    p0: &InitialPressureField,
    medium: &PhantomGrid,
    points: &[Vec3],
    config: &SolverConfig,
) -> Result<Vec<SignalTrace>> {
    propagate_with_diagnostics(p0, medium, points, config).map(|r| r.traces)
}

pub fn propagate_with_diagnostics(
    p0: &InitialPressureField,
    medium: &PhantomGrid,
    points: &[Vec3],
    config: &SolverConfig,
) -> Result<Propagation> {
    if p0.grid.dims != medium.grid.dims || p0.grid.spacing != medium.grid.spacing {
        return Err(Error::shape(format!(
            "initial pressure grid {:?} does not match medium grid {:?}",
            p0.grid.dims, medium.grid.dims
        )));
    }
    if p0.p0.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("initial pressure contains non-finite values"));
    }
    let mut solver = Solver::new(medium, config)?;
    let stencils = points
        .iter()
        .map(|&p| solver.stencil(p, config.pml_thickness))
        .collect::<Result<Vec<_>>>()?;
    let dt = solver.dt;
    let nt = config.sample_count(dt);
    let mut samples = vec![vec![0.0; nt]; points.len()];
    let mut max_pressure = Vec::with_capacity(nt);
    let mut state = solver.initial_state(&p0.p0);
    let p_max0 = state.max_abs_pressure();

    let record = |state: &WaveState, samples: &mut [Vec<f64>], t: usize| {
        for (s, st) in samples.iter_mut().zip(&stencils) {
            s[t] = st.iter().map(|&(i, w)| w * state.p[i]).sum();
        }
    };
    record(&state, &mut samples, 0);
    max_pressure.push(p_max0);
    if p_max0 > 0.0 {
        for t in 1..nt {
            solver.step(&mut state);
            let m = state.max_abs_pressure();
            if !m.is_finite() || m > INSTABILITY_GROWTH * p_max0 {
                return Err(Error::Instability {
                    step: t,
                    max_pressure: m,
                    detail: format!(
                        "max |p| grew from {p_max0:e} Pa; dt = {dt:e} s, cfl = {}, c_ref = {} m/s",
                        config.cfl, config.c_ref
                    ),
                });
            }
            max_pressure.push(m);
            record(&state, &mut samples, t);
        }
    } else {
        max_pressure.resize(nt, 0.0);
    }
    let traces = samples
        .into_iter()
        .map(|s| SignalTrace::new(s, 1.0 / dt, 0.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(Propagation { traces, max_pressure, dt })
}

#[cfg(test)]
mod tests;
