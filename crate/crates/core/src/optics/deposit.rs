use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::phantom::{PhantomGrid, ThermoacousticConstants};

use super::rte::RadianceField;

/// Fluence Φ (J/m²), absorbed energy density A (J/m³) and transmitted fraction F.
///
/// F is expressed against a reference fluence `phi_ref`, the larger of the
/// incident fluence and the peak fluence, so that `A = μ_a·phi_ref·(1 − F)`
/// holds with consistent units and `0 ≤ F ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluenceField {
    #[serde(skip)]
    pub grid: Grid,
    pub fluence: Vec<f64>,
    pub absorbed: Vec<f64>,
    pub transmitted: Vec<f64>,
    pub phi_ref: f64,
}

impl FluenceField {
    /// Builds the field from a fluence map and the absorption coefficients that
    /// turn it into deposited energy.
    pub fn from_fluence(grid: Grid, mu_a: &[f64], fluence: Vec<f64>, incident: f64) -> Result<Self> {
        let absorbed: Vec<f64> = mu_a.iter().zip(&fluence).map(|(m, f)| m * f).collect();
        Self::from_parts(grid, mu_a, fluence, absorbed, incident)
    }

    /// Builds the field from independently estimated fluence and deposition
    /// (as produced by Monte Carlo).
    pub fn from_parts(grid: Grid, mu_a: &[f64], fluence: Vec<f64>, absorbed: Vec<f64>, incident: f64) -> Result<Self> {
        let n = grid.len();
        if mu_a.len() != n || fluence.len() != n || absorbed.len() != n {
            return Err(Error::shape(format!(
                "fluence field arrays must have {n} voxels (mu_a {}, fluence {}, absorbed {})",
                mu_a.len(),
                fluence.len(),
                absorbed.len()
            )));
        }
        let mut phi_ref = incident.max(0.0);
        for (i, &m) in mu_a.iter().enumerate() {
            phi_ref = phi_ref.max(fluence[i]);
            if m > 0.0 {
                phi_ref = phi_ref.max(absorbed[i] / m);
            }
        }
        let transmitted = (0..n)
            .map(|i| {
                if phi_ref == 0.0 {
                    1.0
                } else if mu_a[i] > 0.0 {
                    1.0 - absorbed[i] / (mu_a[i] * phi_ref)
                } else {
                    1.0 - fluence[i] / phi_ref
                }
            })
            .collect();
        Ok(Self { grid, fluence, absorbed, transmitted, phi_ref })
    }

    pub fn total_absorbed_energy(&self) -> f64 {
        self.absorbed.iter().sum::<f64>() * self.grid.spacing.powi(3)
    }
}

/// Per-voxel initial pressure, Pa.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialPressureField {
    #[serde(skip)]
    pub grid: Grid,
    pub p0: Vec<f64>,
    pub gruneisen: f64,
}

impl InitialPressureField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, p0: vec![0.0; grid.len()], gruneisen: ThermoacousticConstants::BRAIN_GRUNEISEN }
    }

    pub fn max(&self) -> f64 {
        self.p0.iter().copied().fold(0.0, f64::max)
    }
}

/// Angular integral of the radiance times the absorption coefficients of `grid`.
///
/// The radiance may come from a different phantom on the same grid (e.g. the
/// absorber-free background), which yields deposition linear in μ_a.
pub fn absorbed_energy(radiance: &RadianceField, grid: &PhantomGrid) -> Result<FluenceField> {
    if radiance.grid.dims != grid.grid.dims || radiance.grid.spacing != grid.grid.spacing {
        return Err(Error::shape(format!(
            "radiance grid {:?} does not match phantom grid {:?}",
            radiance.grid.dims, grid.grid.dims
        )));
    }
    FluenceField::from_fluence(grid.grid, &grid.mu_a, radiance.fluence(), radiance.incident_fluence)
}

pub fn initial_pressure(fluence: &FluenceField, constants: &ThermoacousticConstants) -> Result<InitialPressureField> {
    constants.validate(None)?;
    let g = constants.gruneisen;
    Ok(InitialPressureField {
        grid: fluence.grid,
        p0: fluence.absorbed.iter().map(|a| g * a).collect(),
        gruneisen: g,
    })
}
