//! One end-to-end run: absorber placement, light transport, initial pressure,
//! acoustic propagation to the array, averaging, band limiting and features.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::acoustics::{propagate, SolverConfig};
use crate::analysis::{extract_features, AnalysisSettings, Spectrum, SpectralFeatures, WelchSettings};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::{fft_friendly, Grid, Window};
use crate::optics::{absorbed_energy, initial_pressure, solve_rte_neumann, FluenceField, InitialPressureField, LaserPulse, RteSettings};
use crate::optics::directions::DirectionSpec;
use crate::phantom::{build_phantom, place_absorber, Material, PhantomGrid, PhantomSpec, ThermoacousticConstants};
use crate::sensing::{self, apply_bandwidth, average_elements, build_concave_array_with, SensorArray};
use crate::signal::SignalTrace;

/// How the fluence that drives an absorber is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluenceMode {
    /// Transport through the absorber-free head; deposition is then exactly
    /// linear in the absorber's μ_a (no self-shielding).
    Background,
    /// Transport through the head with the absorber in place.
    SelfConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySettings {
    pub elements: usize,
    /// m
    pub radius: f64,
    /// rad
    pub half_angle: f64,
    /// Hz
    pub max_frequency: f64,
    /// Keep the focus at this depth below the surface instead of following the absorber, m.
    pub fixed_focus_depth: Option<f64>,
}

impl Default for ArraySettings {
    fn default() -> Self {
        ArraySettings {
            elements: sensing::ELEMENT_COUNT,
            radius: sensing::ARRAY_RADIUS,
            half_angle: sensing::HALF_ANGLE,
            max_frequency: sensing::MAX_FREQUENCY,
            fixed_focus_depth: None,
        }
    }
}

/// Everything a run shares with the other runs of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    /// Head geometry and materials; absorbers listed here are ignored.
    pub phantom: PhantomSpec,
    pub laser: LaserPulse,
    pub rte: RteSettings,
    pub solver: SolverConfig,
    pub array: ArraySettings,
    pub analysis: AnalysisSettings,
    pub gruneisen: f64,
    pub fluence_mode: FluenceMode,
    /// Water/tissue voxels kept around the lit column and absorber in the optical window.
    pub optics_margin: usize,
    /// Voxels between the sources/elements and the PML in the acoustic window.
    pub acoustic_margin: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            phantom: PhantomSpec::default(),
            laser: LaserPulse::default(),
            rte: RteSettings { directions: DirectionSpec::Geodesic { level: 2 }, max_orders: 100, ..RteSettings::default() },
            solver: SolverConfig::default(),
            array: ArraySettings::default(),
            analysis: AnalysisSettings {
                welch: WelchSettings { min_nfft: 8192, ..WelchSettings::default() },
                ..AnalysisSettings::default()
            },
            gruneisen: ThermoacousticConstants::BRAIN_GRUNEISEN,
            fluence_mode: FluenceMode::Background,
            optics_margin: 4,
            acoustic_margin: 3,
        }
    }
}

/// The variable part of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub material: Material,
    /// mol/L
    pub concentration: f64,
    /// Absorber sphere radius, m.
    pub radius: f64,
    /// Absorber centre below the head surface along the beam, m.
    pub depth: f64,
    /// Top-hat beam radius, m.
    pub beam_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub spec: RunSpec,
    /// Array-averaged, band-limited trace.
    pub trace: SignalTrace,
    pub spectrum: Spectrum,
    pub features: SpectralFeatures,
    pub absorber_voxels: usize,
    /// J
    pub absorbed_energy: f64,
    /// Pa
    pub max_initial_pressure: f64,
    pub acoustic_dims: [usize; 3],
    pub optics_dims: [usize; 3],
    pub array: SensorArray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct FluenceKey {
    beam_radius: u64,
    lo: [usize; 3],
    dims: [usize; 3],
}

struct CachedFluence {
    fluence: Vec<f64>,
    incident: f64,
}

pub struct Pipeline {
    pub settings: PipelineSettings,
    /// Absorber-free head.
    pub head: PhantomGrid,
    cache: Mutex<HashMap<FluenceKey, Arc<CachedFluence>>>,
}

impl Pipeline {
    pub fn new(settings: PipelineSettings) -> Result<Pipeline> {
        settings.laser.validate()?;
        settings.solver.validate()?;
        ThermoacousticConstants::with_gruneisen(settings.gruneisen)?;
        if settings.array.elements == 0 {
            return Err(Error::config("the array needs at least one element"));
        }
        let spec = PhantomSpec { absorbers: Vec::new(), ..settings.phantom.clone() };
        let head = build_phantom(&spec)?;
        Ok(Pipeline { settings, head, cache: Mutex::new(HashMap::new()) })
    }

    pub fn beam_direction(&self) -> Result<Vec3> {
        self.settings.laser.direction(self.head.head_center)
    }

    /// Absorber centre for a depth measured from the head surface along the beam.
    pub fn absorber_center(&self, depth: f64) -> Result<Vec3> {
        Ok(self.settings.laser.entry_point + self.beam_direction()? * depth)
    }

    pub fn array_for(&self, focus: Vec3) -> Result<SensorArray> {
        let a = &self.settings.array;
        let mut arr = build_concave_array_with(focus, self.beam_direction()? * -1.0, a.elements, a.radius, a.half_angle)?;
        arr.max_frequency = a.max_frequency;
        Ok(arr)
    }

    fn laser(&self, beam_radius: f64) -> LaserPulse {
        LaserPulse { beam_radius, ..self.settings.laser }
    }

    /// Optical window: the lit column and the absorber with a margin, from the
    /// grid's top face down to just below the absorber.
    fn optics_window(&self, center: Vec3, radius: f64, beam_radius: f64) -> Window {
        let g = self.head.grid;
        let m = self.settings.optics_margin as f64 * g.spacing;
        let lateral = radius.max(beam_radius) + m;
        let entry = self.settings.laser.entry_point;
        let (glo, _) = g.bounds();
        let lo = Vec3::new(entry.x.min(center.x) - lateral, entry.y.min(center.y) - lateral, glo.z);
        let hi = Vec3::new(entry.x.max(center.x) + lateral, entry.y.max(center.y) + lateral, center.z + radius + m);
        let mut w = g.window_around(lo, hi, [0, 0, 0]);
        // the beam enters through the top face, so the window must start there
        w.dims[2] += w.lo[2];
        w.lo[2] = 0;
        w
    }

    fn background_fluence(&self, key: FluenceKey, window: &Window, laser: &LaserPulse) -> Result<Arc<CachedFluence>> {
        if let Some(c) = self.cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(c));
        }
        let optics = self.head.window(window)?;
        let rad = solve_rte_neumann(&optics, laser, &self.settings.rte)?;
        let entry = Arc::new(CachedFluence { fluence: rad.fluence(), incident: rad.incident_fluence });
        // concurrent misses may both solve; the results are identical
        Ok(Arc::clone(self.cache.lock().unwrap().entry(key).or_insert(entry)))
    }

    /// Deposited energy on the optical window with the absorber in place.
    pub fn fluence(&self, run: &RunSpec) -> Result<(PhantomGrid, FluenceField)> {
        let center = self.absorber_center(run.depth)?;
        let window = self.optics_window(center, run.radius, run.beam_radius);
        let laser = self.laser(run.beam_radius);
        laser.validate()?;
        let optics = place_absorber(self.head.window(&window)?, center, run.radius, run.material, run.concentration)?;
        let field = match self.settings.fluence_mode {
            FluenceMode::Background => {
                let key = FluenceKey { beam_radius: run.beam_radius.to_bits(), lo: window.lo, dims: window.dims };
                let bg = self.background_fluence(key, &window, &laser)?;
                FluenceField::from_fluence(optics.grid, &optics.mu_a, bg.fluence.clone(), bg.incident)?
            }
            FluenceMode::SelfConsistent => {
                let rad = solve_rte_neumann(&optics, &laser, &self.settings.rte)?;
                absorbed_energy(&rad, &optics)?
            }
        };
        Ok((optics, field))
    }

    /// Acoustic domain aligned with the head lattice: every source voxel and
    /// element plus the margin, surrounded by the PML, padded with water where
    /// it leaves the head grid.
    fn acoustic_grid(&self, sources: (Vec3, Vec3), array: &SensorArray) -> Result<Grid> {
        let g = self.head.grid;
        let (alo, ahi) = array.bounds();
        let lo = Vec3::new(sources.0.x.min(alo.x), sources.0.y.min(alo.y), sources.0.z.min(alo.z));
        let hi = Vec3::new(sources.1.x.max(ahi.x), sources.1.y.max(ahi.y), sources.1.z.max(ahi.z));
        let pad = (self.settings.acoustic_margin + self.settings.solver.pml_thickness) as f64;
        let flo = g.fractional_index(lo);
        let fhi = g.fractional_index(hi);
        let mut dims = [0usize; 3];
        let mut start = [0f64; 3];
        for a in 0..3 {
            let i0 = flo[a].floor() - pad;
            let i1 = fhi[a].ceil() + pad;
            let n = (i1 - i0) as usize + 1;
            dims[a] = fft_friendly(n);
            start[a] = i0 - ((dims[a] - n) / 2) as f64;
        }
        let origin = g.origin + Vec3::new(start[0], start[1], start[2]) * g.spacing;
        Grid::new(dims, g.spacing, origin)
    }

    pub fn run(&self, run: &RunSpec) -> Result<RunOutput> {
        let (optics, field) = self.fluence(run)?;
        let constants = ThermoacousticConstants::with_gruneisen(self.settings.gruneisen)?;
        let p0 = initial_pressure(&field, &constants)?;
        let center = self.absorber_center(run.depth)?;
        let focus = match self.settings.array.fixed_focus_depth {
            Some(d) => self.absorber_center(d)?,
            None => center,
        };
        let array = self.array_for(focus)?;

        let og = optics.grid;
        let mut src_lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut src_hi = src_lo * -1.0;
        for (idx, &v) in p0.p0.iter().enumerate() {
            if v != 0.0 {
                let p = og.position_of(idx);
                src_lo = Vec3::new(src_lo.x.min(p.x), src_lo.y.min(p.y), src_lo.z.min(p.z));
                src_hi = Vec3::new(src_hi.x.max(p.x), src_hi.y.max(p.y), src_hi.z.max(p.z));
            }
        }
        if !src_lo.x.is_finite() {
            src_lo = center;
            src_hi = center;
        }
        let ag = self.acoustic_grid((src_lo, src_hi), &array)?;
        let medium = place_absorber(self.head.embed(ag)?, center, run.radius, run.material, run.concentration)?;
        let p0_ac = transfer(&p0, ag)?;

        let traces = propagate(&p0_ac, &medium, &array.elements, &self.settings.solver)?;
        let mean = average_elements(&traces)?;
        let trace = apply_bandwidth(&mean, array.max_frequency)?;
        let (features, spectrum) = extract_features(&trace, &self.settings.analysis)?;
        Ok(RunOutput {
            spec: *run,
            trace,
            spectrum,
            features,
            absorber_voxels: optics.absorbers.first().map_or(0, |a| a.voxel_count),
            absorbed_energy: field.total_absorbed_energy(),
            max_initial_pressure: p0.max(),
            acoustic_dims: ag.dims,
            optics_dims: og.dims,
            array,
        })
    }
}

/// Copies an initial-pressure field onto an aligned grid; values falling
/// outside the target are an error.
fn transfer(p0: &InitialPressureField, target: Grid) -> Result<InitialPressureField> {
    let src = p0.grid;
    let mut out = InitialPressureField { p0: vec![0.0; target.len()], ..InitialPressureField::zeros(target) };
    out.gruneisen = p0.gruneisen;
    for (idx, &v) in p0.p0.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let pos = src.position_of(idx);
        let f = target.fractional_index(pos);
        let mut c = [0usize; 3];
        for a in 0..3 {
            let r = f[a].round();
            if (f[a] - r).abs() > 1e-6 || r < 0.0 || r as usize >= target.dims[a] {
                return Err(Error::shape(format!("source voxel at {pos:?} is off the acoustic grid")));
            }
            c[a] = r as usize;
        }
        out.p0[target.index(c[0], c[1], c[2])] = v;
    }
    Ok(out)
}
