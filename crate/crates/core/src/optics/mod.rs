//! Light delivery and transport: laser pulse description, safety and
//! confinement checks, the Neumann-series RTE solver, a Monte Carlo reference
//! and the conversion from fluence to initial pressure.

mod deposit;
pub mod directions;
pub mod mc;
pub mod rte;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::Grid;

pub use deposit::{absorbed_energy, initial_pressure, FluenceField, InitialPressureField};
pub use mc::{simulate_mc_fluence, McResult, McSettings};
pub use rte::{solve_rte_neumann, RadianceField, RteDiagnostics, RteSettings};

/// Relative slack when comparing a fluence to the MPE. The customary 31.7 mJ/cm²
/// at 800 nm is the limit rounded to three significant figures.
const MPE_ROUNDING: f64 = 1e-3;

/// Skin maximum permissible exposure in mJ/cm² for 700–1050 nm nanosecond pulses.
pub fn mpe_skin(wavelength_nm: f64) -> Result<f64> {
    if !(700.0..=1050.0).contains(&wavelength_nm) {
        return Err(Error::domain(format!(
            "skin MPE is modelled only for 700–1050 nm, got {wavelength_nm} nm"
        )));
    }
    Ok(20.0 * 10f64.powf(2.0 * (wavelength_nm - 700.0) / 1000.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfinementReport {
    pub t_stress: f64,
    pub t_thermal: f64,
    pub stress_ok: bool,
    pub thermal_ok: bool,
}

/// Stress (d/v_s) and thermal (d²/4α) confinement times for a feature of size `d`.
pub fn check_confinement(d: f64, sound_speed: f64, alpha: f64, tau: f64) -> Result<ConfinementReport> {
    for (name, v) in [("d", d), ("v_s", sound_speed), ("alpha", alpha), ("tau", tau)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let t_stress = d / sound_speed;
    let t_thermal = d * d / (4.0 * alpha);
    Ok(ConfinementReport {
        t_stress,
        t_thermal,
        stress_ok: tau <= t_stress,
        thermal_ok: tau <= t_thermal,
    })
}

/// Grüneisen parameter β·v_s²/C_p.
pub fn gruneisen_from(beta: f64, sound_speed: f64, c_p: f64) -> Result<f64> {
    for (name, v) in [("beta", beta), ("v_s", sound_speed), ("c_p", c_p)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(beta * sound_speed * sound_speed / c_p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserPulse {
    pub wavelength_nm: f64,
    /// s
    pub pulse_duration: f64,
    /// J/m² at entry
    pub fluence: f64,
    /// Where the beam axis meets the head surface.
    pub entry_point: Vec3,
    /// m
    pub beam_radius: f64,
    /// Distance from the delivery optics to the head surface, m.
    pub standoff: f64,
    /// Permit fluences above the skin MPE.
    pub allow_above_mpe: bool,
}

impl Default for LaserPulse {
    fn default() -> Self {
        Self {
            wavelength_nm: 800.0,
            pulse_duration: 5e-9,
            fluence: 317.0,
            entry_point: Vec3::new(0.0, 0.0, -5e-3),
            beam_radius: 234e-6,
            standoff: 0.25e-3,
            allow_above_mpe: false,
        }
    }
}

impl LaserPulse {
    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_duration > 0.0) {
            return Err(Error::config(format!("pulse duration must be positive, got {}", self.pulse_duration)));
        }
        if !(self.fluence >= 0.0 && self.fluence.is_finite()) {
            return Err(Error::config(format!("fluence must be non-negative, got {}", self.fluence)));
        }
        if !(self.beam_radius > 0.0) || !(self.standoff >= 0.0) {
            return Err(Error::config("beam radius must be positive and standoff non-negative"));
        }
        // J/m² to mJ/cm²
        let mj_per_cm2 = self.fluence * 0.1;
        let limit = mpe_skin(self.wavelength_nm)?;
        if !self.allow_above_mpe && mj_per_cm2 > limit * (1.0 + MPE_ROUNDING) {
            return Err(Error::config(format!(
                "fluence {mj_per_cm2} mJ/cm² exceeds the skin MPE of {limit:.4} mJ/cm² at {} nm",
                self.wavelength_nm
            )));
        }
        Ok(())
    }

    /// Beam direction: the inward surface normal at the entry point.
    pub fn direction(&self, head_center: Vec3) -> Result<Vec3> {
        (head_center - self.entry_point)
            .normalized()
            .ok_or_else(|| Error::config("laser entry point coincides with the head centre"))
    }

    /// Grid columns `(i, j)` lit by the top-hat beam. The transport solvers
    /// inject along +z, so the beam must travel along that axis.
    pub fn beam_columns(&self, grid: &Grid, head_center: Vec3) -> Result<Vec<(usize, usize)>> {
        let dir = self.direction(head_center)?;
        if (dir.z - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("beam must travel along +z, got direction {dir:?}")));
        }
        let mut cols = Vec::new();
        let mut nearest = (f64::INFINITY, (0, 0));
        for i in 0..grid.dims[0] {
            for j in 0..grid.dims[1] {
                let p = grid.position(i, j, 0);
                let r = (p.x - self.entry_point.x).hypot(p.y - self.entry_point.y);
                if r <= self.beam_radius {
                    cols.push((i, j));
                }
                if r < nearest.0 {
                    nearest = (r, (i, j));
                }
            }
        }
        if cols.is_empty() {
            // spot narrower than a voxel
            if nearest.0 > grid.spacing {
                return Err(Error::config("beam does not intersect the optical grid"));
            }
            cols.push(nearest.1);
        }
        Ok(cols)
    }
}
