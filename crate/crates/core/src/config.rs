//! Run configuration files.
//!
//! TOML with a strict schema: every physical quantity carries its unit in the
//! key name (`depth_mm`, `fluence_mj_per_cm2`, ...), unknown keys are rejected
//! and anything left out takes the default setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acoustics::SolverConfig;
use crate::analysis::{AnalysisSettings, WelchSettings, WindowKind};
use crate::error::{Error, Result};
use crate::experiments::{
    ArraySettings, FluenceMode, PairBasis, PipelineSettings, RunSpec, StudyKind, StudySpec, ValidationSettings,
};
use crate::geometry::Vec3;
use crate::optics::directions::DirectionSpec;
use crate::optics::{LaserPulse, RteSettings};
use crate::phantom::{Material, MaterialProperties, MaterialTable, PhantomSpec};

/// Unit suffixes a physical key may end in.
const UNIT_SUFFIXES: &[&str] = &[
    "mm", "um", "nm", "m", "ns", "us", "s", "mhz", "hz", "mj_per_cm2", "g_per_l", "mol_per_l", "g_per_mol",
    "m_per_s", "kg_per_m3", "db_per_mhz_cm", "per_mm", "per_cm_per_molar", "deg", "np", "voxels",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub study: StudySection,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Overridden by `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub verbose: bool,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub phantom: PhantomSection,
    #[serde(default)]
    pub laser: LaserSection,
    #[serde(default)]
    pub optics: OpticsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub array: ArraySection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub validation: ValidationSection,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub kind: StudyKind,
    pub sizes_um: Vec<f64>,
    /// ICG concentrations; give either the mass or the molar list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentrations_g_per_l: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentrations_mol_per_l: Option<Vec<f64>>,
    pub depths_mm: Vec<f64>,
    pub hemoglobin_g_per_l: f64,
    pub absorber_depth_mm: f64,
    pub absorber_radius_um: f64,
    pub pair_basis: PairBasis,
    pub pair_concentration_g_per_l: f64,
    pub linear_limit_g_per_l: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            kind: StudyKind::Validation,
            sizes_um: vec![234.0, 468.0, 702.0, 936.0],
            concentrations_g_per_l: None,
            concentrations_mol_per_l: None,
            depths_mm: vec![1.1, 1.3, 1.5],
            hemoglobin_g_per_l: 150.0,
            absorber_depth_mm: 1.5,
            absorber_radius_um: 234.0,
            pair_basis: PairBasis::EqualMolar,
            pair_concentration_g_per_l: 0.5e-3,
            linear_limit_g_per_l: 5.0,
            gamma_min: 0.0,
            gamma_max: 8.0,
        }
    }
}

const DEFAULT_CONCENTRATIONS_G_PER_L: [f64; 4] = [0.5e-3, 0.5, 5.0, 50.0];

/// The single run of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub material: Material,
    pub concentration_g_per_l: f64,
    pub radius_um: f64,
    pub depth_mm: f64,
    /// Defaults to the absorber radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam_radius_um: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            material: Material::Hemoglobin,
            concentration_g_per_l: 150.0,
            radius_um: 234.0,
            depth_mm: 1.5,
            beam_radius_um: None,
        }
    }
}

/// Overrides of one material's tabulated properties.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sound_speed_m_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_kg_per_m3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attenuation_db_per_mhz_cm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attenuation_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_a_per_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_s_per_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anisotropy_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extinction_per_cm_per_molar: Option<f64>,
}

impl MaterialSection {
    fn apply(&self, p: &mut MaterialProperties) {
        let set = |dst: &mut f64, v: Option<f64>, scale: f64| {
            if let Some(v) = v {
                *dst = v * scale;
            }
        };
        set(&mut p.sound_speed, self.sound_speed_m_per_s, 1.0);
        set(&mut p.density, self.density_kg_per_m3, 1.0);
        set(&mut p.acoustic_attenuation, self.attenuation_db_per_mhz_cm, 1.0);
        set(&mut p.attenuation_exponent, self.attenuation_exponent, 1.0);
        set(&mut p.mu_a, self.mu_a_per_mm, 1e3);
        set(&mut p.mu_s, self.mu_s_per_mm, 1e3);
        set(&mut p.anisotropy_g, self.anisotropy_g, 1.0);
        set(&mut p.extinction, self.extinction_per_cm_per_molar, 1.0);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    pub head_center_mm: [f64; 3],
    pub head_radius_mm: f64,
    pub skull_thickness_mm: f64,
    pub brain_radius_mm: f64,
    /// 115 µm by default; 230 µm gives the coarse grid.
    pub grid_spacing_um: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_dims: Option<[usize; 3]>,
    pub hemoglobin_molar_mass_g_per_mol: f64,
    pub icg_molar_mass_g_per_mol: f64,
    pub water: MaterialSection,
    pub skull: MaterialSection,
    pub brain: MaterialSection,
    pub hemoglobin: MaterialSection,
    pub icg: MaterialSection,
}

impl Default for PhantomSection {
    fn default() -> Self {
        let t = MaterialTable::default();
        PhantomSection {
            head_center_mm: [0.0; 3],
            head_radius_mm: 5.0,
            skull_thickness_mm: 0.5,
            brain_radius_mm: 4.5,
            grid_spacing_um: 115.0,
            grid_dims: None,
            hemoglobin_molar_mass_g_per_mol: t.hemoglobin_molar_mass,
            icg_molar_mass_g_per_mol: t.icg_molar_mass,
            water: MaterialSection::default(),
            skull: MaterialSection::default(),
            brain: MaterialSection::default(),
            hemoglobin: MaterialSection::default(),
            icg: MaterialSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserSection {
    pub wavelength_nm: f64,
    pub pulse_duration_ns: f64,
    pub fluence_mj_per_cm2: f64,
    /// Where the beam axis meets the head surface.
    pub entry_point_mm: [f64; 3],
    /// Size study only; the other studies use the absorber radius.
    pub beam_radius_um: f64,
    pub standoff_mm: f64,
    pub allow_above_mpe: bool,
}

impl Default for LaserSection {
    fn default() -> Self {
        LaserSection {
            wavelength_nm: 800.0,
            pulse_duration_ns: 5.0,
            fluence_mj_per_cm2: 31.7,
            entry_point_mm: [0.0, 0.0, -5.0],
            beam_radius_um: 234.0,
            standoff_mm: 0.25,
            allow_above_mpe: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsSection {
    pub directions: DirectionSpec,
    pub ray_spacing_voxels: f64,
    pub max_orders: usize,
    pub tolerance: f64,
    pub fluence_mode: FluenceMode,
    pub margin_voxels: usize,
    pub gruneisen: f64,
}

impl Default for OpticsSection {
    fn default() -> Self {
        let p = PipelineSettings::default();
        OpticsSection {
            directions: p.rte.directions,
            ray_spacing_voxels: p.rte.ray_spacing,
            max_orders: p.rte.max_orders,
            tolerance: p.rte.tol,
            fluence_mode: p.fluence_mode,
            margin_voxels: p.optics_margin,
            gruneisen: p.gruneisen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Derived from `cfl` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_ns: Option<f64>,
    pub cfl: f64,
    pub c_ref_m_per_s: f64,
    pub pml_thickness_voxels: usize,
    pub pml_attenuation_np: f64,
    pub t_end_us: f64,
    pub absorption_exponent: f64,
    pub absorption_match_frequency_mhz: f64,
    pub dispersion: bool,
    pub margin_voxels: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverSection {
            dt_ns: None,
            cfl: s.cfl,
            c_ref_m_per_s: s.c_ref,
            pml_thickness_voxels: s.pml_thickness,
            pml_attenuation_np: s.pml_attenuation,
            t_end_us: 10.0,
            absorption_exponent: s.absorption_exponent,
            absorption_match_frequency_mhz: 2.0,
            dispersion: s.dispersion,
            margin_voxels: PipelineSettings::default().acoustic_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub elements: usize,
    pub radius_mm: f64,
    pub half_angle_deg: f64,
    pub max_frequency_mhz: f64,
    /// Keep the focus at this depth instead of following the absorber.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_focus_depth_mm: Option<f64>,
}

impl Default for ArraySection {
    fn default() -> Self {
        ArraySection {
            elements: ArraySettings::default().elements,
            radius_mm: 1.4,
            half_angle_deg: 60.0,
            max_frequency_mhz: 3.0,
            fixed_focus_depth_mm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub welch_segments: usize,
    pub welch_overlap: f64,
    pub window: WindowKind,
    pub min_nfft: usize,
    pub band_mhz: [f64; 2],
    pub high_band_mhz: [f64; 2],
    pub peak_prominence: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let a = PipelineSettings::default().analysis;
        AnalysisSection {
            welch_segments: a.welch.segments,
            welch_overlap: a.welch.overlap,
            window: a.welch.window,
            min_nfft: a.welch.min_nfft,
            band_mhz: [0.0, 3.0],
            high_band_mhz: [1.5, 3.0],
            peak_prominence: a.peak_prominence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSection {
    pub mc_photons: u64,
    pub mc_batches: usize,
    pub rte_directions: DirectionSpec,
    pub rte_ray_spacing_voxels: f64,
    /// Forces the acoustic checks onto this step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver_dt_ns: Option<f64>,
}

impl Default for ValidationSection {
    fn default() -> Self {
        let v = ValidationSettings::default();
        ValidationSection {
            mc_photons: v.mc_photons,
            mc_batches: v.mc_batches,
            rte_directions: v.rte_directions,
            rte_ray_spacing_voxels: v.rte_ray_spacing,
            solver_dt_ns: None,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn toml_error(text: &str, e: &toml::de::Error) -> Option<(usize, usize)> {
    e.span().map(|s| line_col(text, s.start))
}

/// Is `candidate` a unit-suffixed spelling of the bare key `key`?
fn suffixed_form(key: &str, candidate: &str) -> bool {
    let stems = [format!("{key}_"), format!("{key}s_")];
    UNIT_SUFFIXES.iter().any(|u| {
        stems.iter().any(|s| candidate.strip_prefix(s.as_str()) == Some(*u))
            || candidate.strip_suffix(u).is_some_and(|rest| rest.ends_with(&format!("_{key}_")))
    })
}

fn all_keys(t: &toml::Table, out: &mut Vec<String>) {
    for (k, v) in t {
        match v {
            toml::Value::Table(sub) => all_keys(sub, out),
            _ => out.push(k.clone()),
        }
    }
}

/// Rejects bare keys whose schema spelling carries a unit.
fn check_units(raw: &toml::Table, schema: &toml::Table, path: &str) -> Result<()> {
    for (k, v) in raw {
        let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match (schema.get(k), v) {
            (Some(toml::Value::Table(s)), toml::Value::Table(r)) => check_units(r, s, &here)?,
            (Some(_), _) => {}
            (None, _) => {
                let mut keys = Vec::new();
                if path.is_empty() {
                    all_keys(schema, &mut keys);
                } else {
                    keys.extend(schema.iter().filter(|(_, v)| !v.is_table()).map(|(k, _)| k.clone()));
                }
                let mut hits: Vec<&String> = keys.iter().filter(|c| suffixed_form(k, c)).collect();
                hits.sort();
                hits.dedup();
                if !hits.is_empty() {
                    let names: Vec<String> = hits.iter().map(|h| format!("`{h}`")).collect();
                    return Err(Error::Unit {
                        path: here,
                        message: format!("`{k}` is a physical quantity without a unit suffix; write it as {}", names.join(" or ")),
                    });
                }
            }
        }
    }
    Ok(())
}

/// A configuration with every optional key present, used as the key schema.
fn schema_sample() -> toml::Table {
    let full = MaterialSection {
        sound_speed_m_per_s: Some(0.0),
        density_kg_per_m3: Some(0.0),
        attenuation_db_per_mhz_cm: Some(0.0),
        attenuation_exponent: Some(0.0),
        mu_a_per_mm: Some(0.0),
        mu_s_per_mm: Some(0.0),
        anisotropy_g: Some(0.0),
        extinction_per_cm_per_molar: Some(0.0),
    };
    let cfg = RunConfig {
        study: StudySection {
            concentrations_g_per_l: Some(vec![]),
            concentrations_mol_per_l: Some(vec![]),
            ..StudySection::default()
        },
        out_dir: Some(String::new()),
        run: RunSection { beam_radius_um: Some(0.0), ..RunSection::default() },
        phantom: PhantomSection {
            grid_dims: Some([0; 3]),
            water: full.clone(),
            skull: full.clone(),
            brain: full.clone(),
            hemoglobin: full.clone(),
            icg: full,
            ..PhantomSection::default()
        },
        solver: SolverSection { dt_ns: Some(0.0), ..SolverSection::default() },
        array: ArraySection { fixed_focus_depth_mm: Some(0.0), ..ArraySection::default() },
        validation: ValidationSection { solver_dt_ns: Some(0.0), ..ValidationSection::default() },
        ..RunConfig::default()
    };
    toml::Table::try_from(&cfg).expect("schema sample serializes")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            study: StudySection::default(),
            seed: default_seed(),
            out_dir: None,
            verbose: false,
            run: RunSection::default(),
            phantom: PhantomSection::default(),
            laser: LaserSection::default(),
            optics: OpticsSection::default(),
            solver: SolverSection::default(),
            array: ArraySection::default(),
            analysis: AnalysisSection::default(),
            validation: ValidationSection::default(),
        }
    }
}

fn finite(path: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Schema { path: path.into(), message: format!("expected a finite number, got {v}") })
    }
}

fn finite_all(path: &str, vs: &[f64]) -> Result<Vec<f64>> {
    vs.iter().map(|&v| finite(path, v)).collect()
}

fn mm(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0] / 1e3, v[1] / 1e3, v[2] / 1e3)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let raw: toml::Table = toml::from_str(text)
            .map_err(|e| Error::Parse { message: e.message().to_string(), location: toml_error(text, &e) })?;
        check_units(&raw, &schema_sample(), "")?;
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Deserializer::new(text)).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let at = toml_error(text, &inner).map(|(l, c)| format!(" (line {l}, column {c})")).unwrap_or_default();
            Error::Schema { path, message: format!("{}{at}", inner.message()) }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Seeds above `i64::MAX` have no TOML form and panic here.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Converts and checks every section.
    pub fn validate(&self) -> Result<()> {
        self.study_spec()?.validate()?;
        self.run_spec()?;
        Ok(())
    }

    pub fn materials(&self) -> Result<MaterialTable> {
        let p = &self.phantom;
        let mut t = MaterialTable {
            hemoglobin_molar_mass: finite("phantom.hemoglobin_molar_mass_g_per_mol", p.hemoglobin_molar_mass_g_per_mol)?,
            icg_molar_mass: finite("phantom.icg_molar_mass_g_per_mol", p.icg_molar_mass_g_per_mol)?,
            ..MaterialTable::default()
        };
        for (m, s) in [
            (Material::Water, &p.water),
            (Material::Skull, &p.skull),
            (Material::Brain, &p.brain),
            (Material::Hemoglobin, &p.hemoglobin),
            (Material::Icg, &p.icg),
        ] {
            s.apply(t.get_mut(m));
        }
        t.validate()?;
        Ok(t)
    }

    pub fn pipeline_settings(&self) -> Result<PipelineSettings> {
        let (ph, la, op, so, ar, an) = (&self.phantom, &self.laser, &self.optics, &self.solver, &self.array, &self.analysis);
        let phantom = PhantomSpec {
            head_center: mm(ph.head_center_mm),
            head_radius: finite("phantom.head_radius_mm", ph.head_radius_mm)? / 1e3,
            skull_thickness: finite("phantom.skull_thickness_mm", ph.skull_thickness_mm)? / 1e3,
            brain_radius: finite("phantom.brain_radius_mm", ph.brain_radius_mm)? / 1e3,
            grid_spacing: finite("phantom.grid_spacing_um", ph.grid_spacing_um)? / 1e6,
            grid_dims: ph.grid_dims,
            absorbers: Vec::new(),
            materials: self.materials()?,
        };
        let laser = LaserPulse {
            wavelength_nm: finite("laser.wavelength_nm", la.wavelength_nm)?,
            pulse_duration: finite("laser.pulse_duration_ns", la.pulse_duration_ns)? / 1e9,
            // mJ/cm² to J/m²
            fluence: finite("laser.fluence_mj_per_cm2", la.fluence_mj_per_cm2)? * 10.0,
            entry_point: mm(la.entry_point_mm),
            beam_radius: finite("laser.beam_radius_um", la.beam_radius_um)? / 1e6,
            standoff: finite("laser.standoff_mm", la.standoff_mm)? / 1e3,
            allow_above_mpe: la.allow_above_mpe,
        };
        laser.validate()?;
        let solver = SolverConfig {
            dt: so.dt_ns.map(|v| finite("solver.dt_ns", v).map(|v| v / 1e9)).transpose()?,
            cfl: finite("solver.cfl", so.cfl)?,
            c_ref: finite("solver.c_ref_m_per_s", so.c_ref_m_per_s)?,
            pml_thickness: so.pml_thickness_voxels,
            pml_attenuation: finite("solver.pml_attenuation_np", so.pml_attenuation_np)?,
            t_end: finite("solver.t_end_us", so.t_end_us)? / 1e6,
            dimensionality: 3,
            absorption_exponent: finite("solver.absorption_exponent", so.absorption_exponent)?,
            absorption_match_frequency: finite("solver.absorption_match_frequency_mhz", so.absorption_match_frequency_mhz)?
                * 1e6,
            dispersion: so.dispersion,
        };
        solver.validate()?;
        let array = ArraySettings {
            elements: ar.elements,
            radius: finite("array.radius_mm", ar.radius_mm)? / 1e3,
            half_angle: finite("array.half_angle_deg", ar.half_angle_deg)?.to_radians(),
            max_frequency: finite("array.max_frequency_mhz", ar.max_frequency_mhz)? * 1e6,
            fixed_focus_depth: ar
                .fixed_focus_depth_mm
                .map(|v| finite("array.fixed_focus_depth_mm", v).map(|v| v / 1e3))
                .transpose()?,
        };
        let band = finite_all("analysis.band_mhz", &an.band_mhz)?;
        let high = finite_all("analysis.high_band_mhz", &an.high_band_mhz)?;
        let analysis = AnalysisSettings {
            welch: WelchSettings {
                segments: an.welch_segments,
                overlap: finite("analysis.welch_overlap", an.welch_overlap)?,
                window: an.window,
                min_nfft: an.min_nfft,
            },
            band: (band[0] * 1e6, band[1] * 1e6),
            high_band: (high[0] * 1e6, high[1] * 1e6),
            peak_prominence: finite("analysis.peak_prominence", an.peak_prominence)?,
        };
        if !(analysis.band.0 < analysis.band.1 && analysis.high_band.0 < analysis.high_band.1) {
            return Err(Error::config("analysis bands must have low < high"));
        }
        if !(0.0..1.0).contains(&analysis.welch.overlap) || analysis.welch.segments == 0 {
            return Err(Error::config("Welch overlap must lie in [0, 1) with at least one segment"));
        }
        Ok(PipelineSettings {
            phantom,
            laser,
            rte: RteSettings {
                max_orders: op.max_orders,
                tol: finite("optics.tolerance", op.tolerance)?,
                directions: op.directions,
                ray_spacing: finite("optics.ray_spacing_voxels", op.ray_spacing_voxels)?,
            },
            solver,
            array,
            analysis,
            gruneisen: finite("optics.gruneisen", op.gruneisen)?,
            fluence_mode: op.fluence_mode,
            optics_margin: op.margin_voxels,
            acoustic_margin: so.margin_voxels,
        })
    }

    pub fn study_spec(&self) -> Result<StudySpec> {
        let st = &self.study;
        let pipeline = self.pipeline_settings()?;
        let concentrations = match (&st.concentrations_g_per_l, &st.concentrations_mol_per_l) {
            (Some(_), Some(_)) => {
                return Err(Error::Schema {
                    path: "study".into(),
                    message: "give either concentrations_g_per_l or concentrations_mol_per_l, not both".into(),
                })
            }
            (Some(g), None) => finite_all("study.concentrations_g_per_l", g)?,
            (None, Some(m)) => {
                let mm = pipeline.phantom.materials.icg_molar_mass;
                finite_all("study.concentrations_mol_per_l", m)?.iter().map(|c| c * mm).collect()
            }
            (None, None) => DEFAULT_CONCENTRATIONS_G_PER_L.to_vec(),
        };
        let v = &self.validation;
        let validation = ValidationSettings {
            mc_photons: v.mc_photons,
            mc_batches: v.mc_batches,
            rte_directions: v.rte_directions,
            rte_ray_spacing: finite("validation.rte_ray_spacing_voxels", v.rte_ray_spacing_voxels)?,
            solver_dt: v.solver_dt_ns.map(|d| finite("validation.solver_dt_ns", d).map(|d| d / 1e9)).transpose()?,
        };
        Ok(StudySpec {
            kind: st.kind,
            sizes: finite_all("study.sizes_um", &st.sizes_um)?.iter().map(|s| s / 1e6).collect(),
            concentrations,
            depths: finite_all("study.depths_mm", &st.depths_mm)?.iter().map(|d| d / 1e3).collect(),
            hemoglobin_concentration: finite("study.hemoglobin_g_per_l", st.hemoglobin_g_per_l)?,
            absorber_depth: finite("study.absorber_depth_mm", st.absorber_depth_mm)? / 1e3,
            absorber_radius: finite("study.absorber_radius_um", st.absorber_radius_um)? / 1e6,
            pair_basis: st.pair_basis,
            pair_concentration: finite("study.pair_concentration_g_per_l", st.pair_concentration_g_per_l)?,
            linear_limit: finite("study.linear_limit_g_per_l", st.linear_limit_g_per_l)?,
            gamma_range: (finite("study.gamma_min", st.gamma_min)?, finite("study.gamma_max", st.gamma_max)?),
            pipeline,
            validation,
            seed: self.seed,
        })
    }

    /// The `[run]` section in solver units.
    pub fn run_spec(&self) -> Result<RunSpec> {
        let r = &self.run;
        let materials = self.materials()?;
        let grams = finite("run.concentration_g_per_l", r.concentration_g_per_l)?;
        let radius = finite("run.radius_um", r.radius_um)? / 1e6;
        let beam = r.beam_radius_um.map(|b| finite("run.beam_radius_um", b).map(|b| b / 1e6)).transpose()?;
        if !(radius > 0.0) || beam.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::config("run radius and beam radius must be positive"));
        }
        Ok(RunSpec {
            material: r.material,
            concentration: materials.molarity(r.material, grams)?,
            radius,
            depth: finite("run.depth_mm", r.depth_mm)? / 1e3,
            beam_radius: beam.unwrap_or(radius),
        })
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &serde_json::Value, b: &serde_json::Value, at: &str) {
        use serde_json::Value::*;
        match (a, b) {
            (Number(x), Number(y)) => {
                let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
                assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()), "{at}: {x} vs {y}");
            }
            (Array(x), Array(y)) => {
                assert_eq!(x.len(), y.len(), "{at}");
                for (i, (p, q)) in x.iter().zip(y).enumerate() {
                    close(p, q, &format!("{at}[{i}]"));
                }
            }
            (Object(x), Object(y)) => {
                assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{at}");
                for (k, v) in x {
                    close(v, &y[k], &format!("{at}.{k}"));
                }
            }
            _ => assert_eq!(a, b, "{at}"),
        }
    }

    #[test]
    fn minimal_config_gives_default_setup() {
        for kind in ["size", "concentration", "depth", "validation"] {
            let cfg = RunConfig::parse(&format!("[study]\nkind = \"{kind}\"\n")).unwrap();
            let spec = cfg.study_spec().unwrap();
            let want = StudySpec::with_kind(spec.kind);
            close(&serde_json::to_value(&spec).unwrap(), &serde_json::to_value(&want).unwrap(), kind);
        }
        let spec = RunConfig::parse("[study]\nkind = \"size\"").unwrap().study_spec().unwrap();
        let p = &spec.pipeline;
        assert_eq!((p.laser.wavelength_nm, p.laser.pulse_duration), (800.0, 5e-9));
        assert_eq!(p.laser.fluence, 317.0);
        assert_eq!(p.array.elements, 97);
        assert_eq!((p.array.radius, p.array.max_frequency), (1.4e-3, 3e6));
        assert_eq!(spec.depths, vec![1.1e-3, 1.3e-3, 1.5e-3]);
    }

    #[test]
    fn coarse_grid_option() {
        let cfg = RunConfig::parse("[study]\nkind = \"size\"\n[phantom]\ngrid_spacing_um = 230\n").unwrap();
        assert_eq!(cfg.pipeline_settings().unwrap().phantom.grid_spacing, 230e-6);
    }

    #[test]
    fn unitless_quantities_are_rejected() {
        let cases = [
            ("[study]\nkind = \"depth\"\n[run]\ndepth = 1.5\n", "run.depth", "depth_mm"),
            ("[study]\nkind = \"depth\"\ndepth = 1.5\n", "study.depth", "absorber_depth_mm"),
            ("[study]\nkind = \"depth\"\ndepths = [1.1]\n", "study.depths", "depths_mm"),
            ("depth = 1.5\n[study]\nkind = \"depth\"\n", "depth", "depth_mm"),
            ("[study]\nkind = \"size\"\n[laser]\nfluence = 31.7\n", "laser.fluence", "fluence_mj_per_cm2"),
        ];
        for (text, path, hint) in cases {
            match RunConfig::parse(text) {
                Err(Error::Unit { path: p, message }) => {
                    assert_eq!(p, path);
                    assert!(message.contains(hint), "{message}");
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn schema_and_parse_errors_are_located() {
        match RunConfig::parse("[study]\nkind = \"size\"\n[array]\nelements = \"many\"\n") {
            Err(Error::Schema { path, message }) => {
                assert_eq!(path, "array.elements");
                assert!(message.contains("line 4"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            RunConfig::parse("[study]\nkind = \"size\"\ncolour = 3\n"),
            Err(Error::Schema { .. })
        ));
        assert!(matches!(RunConfig::parse("seed = 1\n"), Err(Error::Schema { .. })));
        match RunConfig::parse("[study]\nkind = \"size\"\n[laser\n") {
            Err(Error::Parse { location: Some((3, _)), .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse("[study]\nkind = \"size\"\nsizes_um = [-5.0]\n").is_err());
        assert!(RunConfig::parse("[study]\nkind = \"size\"\n[laser]\nfluence_mj_per_cm2 = 100.0\n").is_err());
        assert!(RunConfig::parse("[study]\nkind = \"size\"\nsizes_um = [nan]\n").is_err());
    }

    #[test]
    fn concentrations_in_either_unit() {
        let cfg = RunConfig::parse("[study]\nkind = \"concentration\"\nconcentrations_mol_per_l = [1e-3]\n").unwrap();
        assert_eq!(cfg.study_spec().unwrap().concentrations, vec![0.775]);
        let both = "[study]\nkind = \"concentration\"\nconcentrations_mol_per_l = [1]\nconcentrations_g_per_l = [1]\n";
        assert!(matches!(RunConfig::parse(both), Err(Error::Schema { .. })));
    }

    #[test]
    fn overrides_reach_the_material_table() {
        let text = "[study]\nkind = \"size\"\n[phantom.brain]\nmu_s_per_mm = 12.5\n";
        let t = RunConfig::parse(text).unwrap().materials().unwrap();
        assert_eq!(t.brain.mu_s, 12.5e3);
        assert_eq!(t.skull, MaterialTable::default().skull);
    }

    #[test]
    fn round_trip() {
        let text = r#"
seed = 7
[study]
kind = "concentration"
concentrations_g_per_l = [0.0005, 0.5]
[run]
material = "icg"
beam_radius_um = 300
[phantom]
grid_spacing_um = 230
[phantom.skull]
density_kg_per_m3 = 1850
[optics]
directions = { kind = "lattice", order = 2 }
fluence_mode = "self-consistent"
[solver]
dt_ns = 12.5
[array]
fixed_focus_depth_mm = 1.1
"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(RunConfig::parse(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn run_section_defaults_beam_to_radius() {
        let r = RunConfig::parse("[study]\nkind = \"size\"\n[run]\nradius_um = 468\n").unwrap().run_spec().unwrap();
        assert_eq!((r.radius, r.beam_radius), (468e-6, 468e-6));
        assert!((r.concentration - 150.0 / 64_500.0).abs() < 1e-18);
    }
}
