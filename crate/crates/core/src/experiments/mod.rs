//! The three parameter studies and the oracle suite, each producing a
//! self-checking [`StudyReport`].
//!
//! Runs inside a study are independent and execute in parallel; the report is
//! assembled in variable order so its tables do not depend on scheduling.

pub mod pipeline;
mod studies;
pub mod validation;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{Spectrum, SpectralFeatures};
use crate::error::{Error, Result};
use crate::phantom::Material;
use crate::signal::SignalTrace;

pub use pipeline::{ArraySettings, FluenceMode, Pipeline, PipelineSettings, RunOutput, RunSpec};
pub use studies::{run_concentration_study, run_depth_study, run_size_study};
pub use validation::{run_validation, ValidationSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Size,
    Concentration,
    Depth,
    Validation,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Size => "size",
            StudyKind::Concentration => "concentration",
            StudyKind::Depth => "depth",
            StudyKind::Validation => "validation",
        }
    }
}

/// What "equal concentration" means for the Hb/ICG comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairBasis {
    EqualMolar,
    EqualMass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub kind: StudyKind,
    /// Absorber radii for the size study, m.
    pub sizes: Vec<f64>,
    /// ICG mass concentrations, g/L.
    pub concentrations: Vec<f64>,
    /// Absorber depths below the head surface, m.
    pub depths: Vec<f64>,
    /// Hemoglobin mass concentration for the size and depth studies, g/L.
    pub hemoglobin_concentration: f64,
    /// Absorber depth in the size and concentration studies, m.
    pub absorber_depth: f64,
    /// Absorber (and beam) radius in the concentration and depth studies, m.
    pub absorber_radius: f64,
    pub pair_basis: PairBasis,
    /// ICG concentration of the Hb/ICG pair, g/L.
    pub pair_concentration: f64,
    /// Concentrations above this are reported but left out of the linear fit, g/L.
    pub linear_limit: f64,
    /// Search interval of the size-response exponent.
    pub gamma_range: (f64, f64),
    pub pipeline: PipelineSettings,
    pub validation: ValidationSettings,
    pub seed: u64,
}

impl Default for StudySpec {
    fn default() -> Self {
        StudySpec {
            kind: StudyKind::Validation,
            sizes: vec![234e-6, 468e-6, 702e-6, 936e-6],
            concentrations: vec![0.5e-3, 0.5, 5.0, 50.0],
            depths: vec![1.1e-3, 1.3e-3, 1.5e-3],
            hemoglobin_concentration: 150.0,
            absorber_depth: 1.5e-3,
            absorber_radius: 234e-6,
            pair_basis: PairBasis::EqualMolar,
            pair_concentration: 0.5e-3,
            linear_limit: 5.0,
            gamma_range: (0.0, 8.0),
            pipeline: PipelineSettings::default(),
            validation: ValidationSettings::default(),
            seed: 1,
        }
    }
}

impl StudySpec {
    pub fn with_kind(kind: StudyKind) -> StudySpec {
        StudySpec { kind, ..StudySpec::default() }
    }

    /// The variable list of this study's kind.
    pub fn variable(&self) -> &[f64] {
        match self.kind {
            StudyKind::Size => &self.sizes,
            StudyKind::Concentration => &self.concentrations,
            StudyKind::Depth => &self.depths,
            StudyKind::Validation => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = self.variable();
        if self.kind != StudyKind::Validation && vals.is_empty() {
            return Err(Error::config(format!("{} study needs at least one variable value", self.kind.name())));
        }
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config(format!("{} values must be finite and non-negative", self.kind.name())));
        }
        let positive = [self.hemoglobin_concentration, self.absorber_radius, self.absorber_depth, self.linear_limit];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("hemoglobin concentration, absorber radius/depth and linear limit must be positive"));
        }
        if !(self.pair_concentration > 0.0 && self.pair_concentration.is_finite()) {
            return Err(Error::config("pair concentration must be positive"));
        }
        if !(self.gamma_range.0 < self.gamma_range.1) {
            return Err(Error::config(format!("invalid gamma range {:?}", self.gamma_range)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("study spec serialises");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Unavailable,
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Unavailable => "UNAVAILABLE",
            Status::Error => "ERROR",
        }
    }
}

/// A self-check evaluated by the study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Assertion {
        Assertion { name: name.into(), status: if pass { Status::Pass } else { Status::Fail }, detail: detail.into() }
    }

    pub fn unavailable(name: &str, detail: impl Into<String>) -> Assertion {
        Assertion { name: name.into(), status: Status::Unavailable, detail: detail.into() }
    }
}

/// One pipeline run as recorded in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    /// Value of the study variable in its reporting unit.
    pub value: f64,
    pub material: Material,
    /// mol/L
    pub concentration_mol_per_l: f64,
    pub concentration_g_per_l: f64,
    pub radius_m: f64,
    pub depth_m: f64,
    pub beam_radius_m: f64,
    pub features: SpectralFeatures,
    pub absorber_voxels: usize,
    pub absorbed_energy_j: f64,
    pub max_initial_pressure_pa: f64,
    pub acoustic_grid: [usize; 3],
    pub optics_grid: [usize; 3],
    pub trace_file: String,
    pub spectrum_file: String,
    /// Set when the run is excluded from derived quantities.
    pub flag: Option<String>,
}

/// Feature-versus-variable table; `None` marks an unavailable entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.map_or_else(String::new, |v| format!("{v:e}"))).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub status: Status,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub gamma: Option<f64>,
    pub residual: Option<f64>,
    pub points: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares y = a + b·x.
pub fn linear_regression(points: &[(f64, f64)]) -> Result<Regression> {
    let n = points.len();
    if n < 2 {
        return Err(Error::UnderDetermined(format!("regression needs two points, got {n}")));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::UnderDetermined("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(Regression { slope, intercept: my - slope * mx, r_squared, points: n })
}

/// Hb/ICG comparison of the concentration study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub basis: PairBasis,
    pub icg_g_per_l: f64,
    pub hemoglobin_g_per_l: f64,
    pub concentration_mol_per_l: (f64, f64),
    pub ppp_ratio: f64,
    /// Ratio of absorption coefficients μ_a(ICG)/μ_a(Hb).
    pub expected_ratio: f64,
    pub band_power_ratio: f64,
    /// Indices into `runs`: (ICG, Hb).
    pub runs: (usize, usize),
}

/// Numeric oracle result of the validation suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: Status,
    pub error: Option<f64>,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub package: String,
    pub version: String,
}

impl Provenance {
    pub fn of(spec: &StudySpec) -> Provenance {
        Provenance {
            config_hash: spec.config_hash(),
            seed: spec.seed,
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub status: Status,
    /// Name and unit of the study variable.
    pub variable: String,
    pub runs: Vec<RunRecord>,
    pub table: Table,
    pub fit: Option<FitRecord>,
    pub regression: Option<Regression>,
    /// Regression including concentrations above the linear limit.
    pub regression_all: Option<Regression>,
    pub pair: Option<PairRecord>,
    pub checks: Vec<CheckRecord>,
    pub assertions: Vec<Assertion>,
    /// Set when a run failed; the runs before it are kept.
    pub error: Option<String>,
    pub provenance: Provenance,
}

impl StudyReport {
    pub fn empty(spec: &StudySpec, variable: &str) -> StudyReport {
        StudyReport {
            kind: spec.kind,
            status: Status::Pass,
            variable: variable.into(),
            runs: Vec::new(),
            table: Table { columns: Vec::new(), rows: Vec::new() },
            fit: None,
            regression: None,
            regression_all: None,
            pair: None,
            checks: Vec::new(),
            assertions: Vec::new(),
            error: None,
            provenance: Provenance::of(spec),
        }
    }

    /// PASS only when every assertion passes and no run failed.
    pub fn finalize(&mut self) {
        self.status = if self.error.is_some() {
            Status::Error
        } else if self.assertions.iter().all(|a| a.status == Status::Pass) {
            Status::Pass
        } else {
            Status::Fail
        };
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Trace and spectrum of one run, written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub stem: String,
    pub trace: SignalTrace,
    pub spectrum: Spectrum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub report: StudyReport,
    pub artifacts: Vec<RunArtifact>,
}

/// Dispatches on the study kind.
pub fn run_study(spec: &StudySpec) -> Result<StudyOutcome> {
    match spec.kind {
        StudyKind::Size => run_size_study(spec),
        StudyKind::Concentration => run_concentration_study(spec),
        StudyKind::Depth => run_depth_study(spec),
        StudyKind::Validation => Ok(StudyOutcome { report: run_validation(spec)?, artifacts: Vec::new() }),
    }
}

/// Strict ordering check; `None` entries break the chain.
pub(crate) fn strictly_monotone(values: &[Option<f64>], increasing: bool) -> Option<bool> {
    let vals: Option<Vec<f64>> = values.iter().copied().collect();
    let vals = vals?;
    Some(vals.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_examples() {
        let r = linear_regression(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12 && (r.intercept - 1.0).abs() < 1e-12);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        // y = x² on symmetric points has no linear trend
        let r = linear_regression(&[(-1.0, 1.0), (0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert!(r.slope.abs() < 1e-12 && r.r_squared.abs() < 1e-12);
        assert!(matches!(linear_regression(&[(1.0, 1.0)]), Err(Error::UnderDetermined(_))));
        assert!(matches!(linear_regression(&[(1.0, 1.0), (1.0, 2.0)]), Err(Error::UnderDetermined(_))));
    }

    #[test]
    fn monotone_checks() {
        assert_eq!(strictly_monotone(&[Some(1.0), Some(2.0)], true), Some(true));
        assert_eq!(strictly_monotone(&[Some(1.0), Some(1.0)], true), Some(false));
        assert_eq!(strictly_monotone(&[Some(3.0), Some(2.0)], false), Some(true));
        assert_eq!(strictly_monotone(&[Some(1.0), None], true), None);
    }

    #[test]
    fn spec_checks_and_hash() {
        let s = StudySpec::with_kind(StudyKind::Size);
        s.validate().unwrap();
        assert_eq!(s.config_hash(), s.clone().config_hash());
        assert_eq!(s.config_hash().len(), 64);
        let empty = StudySpec { sizes: vec![], ..s.clone() };
        assert!(matches!(empty.validate(), Err(Error::Config(_))));
        let other = StudySpec { seed: 2, ..s.clone() };
        assert_ne!(other.config_hash(), s.config_hash());
    }
}
