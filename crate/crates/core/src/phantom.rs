//! Voxelized mouse-head phantom: concentric water / skull / brain spheres with
//! spherical chromophore inclusions.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::{Grid, Window};

/// Water margin (in voxels) required between the head and the grid edge.
pub const MIN_WATER_MARGIN_VOXELS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Water,
    Skull,
    Brain,
    Hemoglobin,
    Icg,
}

impl Material {
    pub const ALL: [Material; 5] = [
        Material::Water,
        Material::Skull,
        Material::Brain,
        Material::Hemoglobin,
        Material::Icg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Material::Water => "water",
            Material::Skull => "skull",
            Material::Brain => "brain",
            Material::Hemoglobin => "hemoglobin",
            Material::Icg => "icg",
        }
    }

    pub fn is_chromophore(self) -> bool {
        matches!(self, Material::Hemoglobin | Material::Icg)
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Material {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "water" => Ok(Material::Water),
            "skull" => Ok(Material::Skull),
            "brain" => Ok(Material::Brain),
            "hemoglobin" | "hb" => Ok(Material::Hemoglobin),
            "icg" => Ok(Material::Icg),
            other => Err(Error::config(format!("unknown material label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialProperties {
    /// m/s
    pub sound_speed: f64,
    /// kg/m³
    pub density: f64,
    /// dB/(MHz^y·cm)
    pub acoustic_attenuation: f64,
    pub attenuation_exponent: f64,
    /// Optical absorption coefficient, 1/m.
    pub mu_a: f64,
    /// Optical scattering coefficient, 1/m.
    pub mu_s: f64,
    pub anisotropy_g: f64,
    /// Decadic molar extinction coefficient, 1/(cm·M). Zero for non-chromophores.
    pub extinction: f64,
}

impl MaterialProperties {
    pub fn mu_t(&self) -> f64 {
        self.mu_a + self.mu_s
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = self.sound_speed > 0.0
            && self.density > 0.0
            && self.acoustic_attenuation >= 0.0
            && self.mu_a >= 0.0
            && self.mu_s >= 0.0
            && self.anisotropy_g > -1.0
            && self.anisotropy_g < 1.0
            && self.extinction >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid material properties for {what}: {self:?}")))
        }
    }
}

/// Thermodynamic constants converting absorbed energy to initial pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoacousticConstants {
    /// Isobaric volume expansion, 1/K.
    pub beta: Option<f64>,
    /// Isobaric specific heat, J/(kg·K).
    pub c_p: Option<f64>,
    /// Thermal diffusivity, m²/s.
    pub alpha: Option<f64>,
    pub gruneisen: f64,
}

impl ThermoacousticConstants {
    /// Brain value used throughout the studies.
    pub const BRAIN_GRUNEISEN: f64 = 0.8;

    pub fn with_gruneisen(gruneisen: f64) -> Result<Self> {
        let c = Self {
            beta: None,
            c_p: None,
            alpha: None,
            gruneisen,
        };
        c.validate(None)?;
        Ok(c)
    }

    /// Constants whose Grüneisen parameter is derived from β, v_s and C_p.
    pub fn from_thermodynamics(beta: f64, sound_speed: f64, c_p: f64, alpha: Option<f64>) -> Result<Self> {
        let gruneisen = crate::optics::gruneisen_from(beta, sound_speed, c_p)?;
        Ok(Self {
            beta: Some(beta),
            c_p: Some(c_p),
            alpha,
            gruneisen,
        })
    }

    /// Checks Γ > 0 and, when β, C_p and a sound speed are all known, Γ = β·v_s²/C_p.
    pub fn validate(&self, sound_speed: Option<f64>) -> Result<()> {
        if !(self.gruneisen > 0.0 && self.gruneisen.is_finite()) {
            return Err(Error::config(format!("Grüneisen parameter must be positive, got {}", self.gruneisen)));
        }
        if let (Some(b), Some(cp), Some(vs)) = (self.beta, self.c_p, sound_speed) {
            let expect = b * vs * vs / cp;
            if ((expect - self.gruneisen) / expect).abs() > 1e-9 {
                return Err(Error::config(format!(
                    "Grüneisen {} inconsistent with β·v_s²/C_p = {expect}",
                    self.gruneisen
                )));
            }
        }
        Ok(())
    }
}

impl Default for ThermoacousticConstants {
    fn default() -> Self {
        Self {
            beta: None,
            c_p: None,
            alpha: Some(1.4e-7),
            gruneisen: Self::BRAIN_GRUNEISEN,
        }
    }
}

/// Per-material property table plus chromophore molar masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialTable {
    pub water: MaterialProperties,
    pub skull: MaterialProperties,
    pub brain: MaterialProperties,
    pub hemoglobin: MaterialProperties,
    pub icg: MaterialProperties,
    /// g/mol
    pub hemoglobin_molar_mass: f64,
    /// g/mol
    pub icg_molar_mass: f64,
}

impl Default for MaterialTable {
    fn default() -> Self {
        let g = 0.9;
        let water = MaterialProperties {
            sound_speed: 1480.0,
            density: 1000.0,
            acoustic_attenuation: 0.002,
            attenuation_exponent: 1.0,
            mu_a: 0.0,
            mu_s: 0.0,
            anisotropy_g: g,
            extinction: 0.0,
        };
        // Table densities are listed as 190 and 103 g/cm³; read as 1.90 and 1.03.
        let skull = MaterialProperties {
            sound_speed: 4180.0,
            density: 1900.0,
            acoustic_attenuation: 20.0,
            mu_s: 20.0e3,
            ..water
        };
        let brain = MaterialProperties {
            sound_speed: 1550.0,
            density: 1030.0,
            acoustic_attenuation: 0.8,
            mu_s: 10.0e3,
            ..water
        };
        // chromophores: brain acoustics and scattering, absorption set by concentration
        let hemoglobin = MaterialProperties {
            extinction: 816.0,
            ..brain
        };
        let icg = MaterialProperties {
            extinction: 154_550.0,
            ..brain
        };
        Self {
            water,
            skull,
            brain,
            hemoglobin,
            icg,
            hemoglobin_molar_mass: 64_500.0,
            icg_molar_mass: 775.0,
        }
    }
}

impl MaterialTable {
    pub fn get(&self, m: Material) -> &MaterialProperties {
        match m {
            Material::Water => &self.water,
            Material::Skull => &self.skull,
            Material::Brain => &self.brain,
            Material::Hemoglobin => &self.hemoglobin,
            Material::Icg => &self.icg,
        }
    }

    pub fn get_mut(&mut self, m: Material) -> &mut MaterialProperties {
        match m {
            Material::Water => &mut self.water,
            Material::Skull => &mut self.skull,
            Material::Brain => &mut self.brain,
            Material::Hemoglobin => &mut self.hemoglobin,
            Material::Icg => &mut self.icg,
        }
    }

    pub fn molar_mass(&self, m: Material) -> Result<f64> {
        match m {
            Material::Hemoglobin => Ok(self.hemoglobin_molar_mass),
            Material::Icg => Ok(self.icg_molar_mass),
            other => Err(Error::config(format!("{other} is not a chromophore"))),
        }
    }

    /// Mass concentration (g/L) to molar concentration (mol/L).
    pub fn molarity(&self, m: Material, grams_per_litre: f64) -> Result<f64> {
        if grams_per_litre < 0.0 {
            return Err(Error::domain(format!("negative concentration {grams_per_litre} g/L")));
        }
        Ok(grams_per_litre / self.molar_mass(m)?)
    }

    pub fn validate(&self) -> Result<()> {
        for m in Material::ALL {
            self.get(m).validate(m.name())?;
        }
        if !(self.hemoglobin_molar_mass > 0.0 && self.icg_molar_mass > 0.0) {
            return Err(Error::config("molar masses must be positive"));
        }
        Ok(())
    }
}

/// Properties of `label` from the default table.
pub fn material_lookup(label: &str) -> Result<MaterialProperties> {
    let m: Material = label.parse()?;
    Ok(*MaterialTable::default().get(m))
}

/// Beer–Lambert conversion of a decadic molar extinction coefficient (1/(cm·M))
/// and a molar concentration (mol/L) to an absorption coefficient in 1/m.
pub fn molar_mu_a(extinction: f64, concentration: f64) -> Result<f64> {
    if !(extinction >= 0.0) || !(concentration >= 0.0) {
        return Err(Error::domain(format!(
            "extinction ({extinction}) and concentration ({concentration}) must be non-negative"
        )));
    }
    Ok(std::f64::consts::LN_10 * extinction * concentration * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorberSpec {
    pub center: Vec3,
    /// m
    pub radius: f64,
    pub material: Material,
    /// mol/L
    pub concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub head_center: Vec3,
    pub head_radius: f64,
    pub skull_thickness: f64,
    pub brain_radius: f64,
    pub grid_spacing: f64,
    /// Voxels per axis; derived from the head size when `None`.
    pub grid_dims: Option<[usize; 3]>,
    pub absorbers: Vec<AbsorberSpec>,
    pub materials: MaterialTable,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            head_center: Vec3::ZERO,
            head_radius: 5.0e-3,
            skull_thickness: 0.5e-3,
            brain_radius: 4.5e-3,
            grid_spacing: 115e-6,
            grid_dims: None,
            absorbers: Vec::new(),
            materials: MaterialTable::default(),
        }
    }
}

impl PhantomSpec {
    /// Smallest odd grid size holding the head plus the water margin.
    pub fn auto_dims(&self) -> [usize; 3] {
        let half = (self.head_radius / self.grid_spacing + MIN_WATER_MARGIN_VOXELS).ceil() as usize;
        let n = 2 * half + 1;
        [n, n, n]
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid_dims.unwrap_or_else(|| self.auto_dims())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.head_radius, self.skull_thickness, self.brain_radius, self.grid_spacing];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config("phantom radii, thickness and spacing must be positive"));
        }
        let sum = self.brain_radius + self.skull_thickness;
        if ((sum - self.head_radius) / self.head_radius).abs() > 1e-9 {
            return Err(Error::config(format!(
                "brain radius ({}) + skull thickness ({}) must equal head radius ({})",
                self.brain_radius, self.skull_thickness, self.head_radius
            )));
        }
        self.materials.validate()?;
        let grid = Grid::centered(self.dims(), self.grid_spacing, Vec3::ZERO)?;
        let margin = MIN_WATER_MARGIN_VOXELS * self.grid_spacing * (1.0 - 1e-9);
        let last = grid.position(grid.dims[0] - 1, grid.dims[1] - 1, grid.dims[2] - 1);
        for a in 0..3 {
            let lo_gap = (self.head_center[a] - self.head_radius) - grid.origin[a];
            let hi_gap = last[a] - (self.head_center[a] + self.head_radius);
            if lo_gap < margin || hi_gap < margin {
                return Err(Error::config(format!(
                    "grid {:?} at {} m spacing does not contain the head plus a {MIN_WATER_MARGIN_VOXELS}-voxel water margin",
                    grid.dims, self.grid_spacing
                )));
            }
        }
        Ok(())
    }
}

/// Per-voxel label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VoxelLabel {
    Water,
    Skull,
    Brain,
    /// Index into [`PhantomGrid::absorbers`].
    Absorber(usize),
}

impl VoxelLabel {
    const FIRST_ABSORBER: u8 = 3;

    pub fn encode(self) -> u8 {
        match self {
            VoxelLabel::Water => 0,
            VoxelLabel::Skull => 1,
            VoxelLabel::Brain => 2,
            VoxelLabel::Absorber(i) => Self::FIRST_ABSORBER + i as u8,
        }
    }

    pub fn decode(code: u8) -> Self {
        match code {
            0 => VoxelLabel::Water,
            1 => VoxelLabel::Skull,
            2 => VoxelLabel::Brain,
            c => VoxelLabel::Absorber((c - Self::FIRST_ABSORBER) as usize),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorberInfo {
    pub spec: AbsorberSpec,
    /// 1/m
    pub mu_a: f64,
    pub voxel_count: usize,
}

/// Labelled voxel grid with per-voxel property fields derived from the labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomGrid {
    pub grid: Grid,
    pub head_center: Vec3,
    pub head_radius: f64,
    pub brain_radius: f64,
    pub materials: MaterialTable,
    pub absorbers: Vec<AbsorberInfo>,
    labels: Vec<u8>,
    pub sound_speed: Vec<f64>,
    pub density: Vec<f64>,
    pub attenuation: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub mu_s: Vec<f64>,
    pub anisotropy: Vec<f64>,
}

impl PhantomGrid {
    pub fn label(&self, idx: usize) -> VoxelLabel {
        VoxelLabel::decode(self.labels[idx])
    }

    pub fn labels(&self) -> impl Iterator<Item = VoxelLabel> + '_ {
        self.labels.iter().map(|&c| VoxelLabel::decode(c))
    }

    /// Material of a label (absorbers resolve to their chromophore).
    pub fn label_material(&self, label: VoxelLabel) -> Material {
        match label {
            VoxelLabel::Water => Material::Water,
            VoxelLabel::Skull => Material::Skull,
            VoxelLabel::Brain => Material::Brain,
            VoxelLabel::Absorber(i) => self.absorbers[i].spec.material,
        }
    }

    /// Properties a voxel with this label must carry.
    pub fn label_properties(&self, label: VoxelLabel) -> MaterialProperties {
        match label {
            VoxelLabel::Absorber(i) => {
                let info = &self.absorbers[i];
                let chromo = self.materials.get(info.spec.material);
                MaterialProperties { mu_a: info.mu_a, ..*chromo }
            }
            other => *self.materials.get(self.label_material(other)),
        }
    }

    /// Label a voxel centre at `p` would get from the concentric-sphere geometry alone.
    pub fn radial_label(&self, p: Vec3) -> VoxelLabel {
        let r = p.distance(self.head_center);
        if r > self.head_radius {
            VoxelLabel::Water
        } else if r > self.brain_radius {
            VoxelLabel::Skull
        } else {
            VoxelLabel::Brain
        }
    }

    pub fn count_label(&self, label: VoxelLabel) -> usize {
        let code = label.encode();
        self.labels.iter().filter(|&&c| c == code).count()
    }

    pub fn max_sound_speed(&self) -> f64 {
        self.sound_speed.iter().copied().fold(0.0, f64::max)
    }

    fn set_voxel(&mut self, idx: usize, label: VoxelLabel) {
        let p = self.label_properties(label);
        self.labels[idx] = label.encode();
        self.sound_speed[idx] = p.sound_speed;
        self.density[idx] = p.density;
        self.attenuation[idx] = p.acoustic_attenuation;
        self.mu_a[idx] = p.mu_a;
        self.mu_s[idx] = p.mu_s;
        self.anisotropy[idx] = p.anisotropy_g;
    }

    /// Unbounded block of a single medium, labelled brain.
    pub fn homogeneous(grid: Grid, props: MaterialProperties) -> Result<PhantomGrid> {
        props.validate("homogeneous medium")?;
        let n = grid.len();
        let (lo, hi) = grid.bounds();
        let materials = MaterialTable { brain: props, ..MaterialTable::default() };
        Ok(PhantomGrid {
            grid,
            head_center: (lo + hi) * 0.5,
            head_radius: f64::INFINITY,
            brain_radius: f64::INFINITY,
            materials,
            absorbers: Vec::new(),
            labels: vec![VoxelLabel::Brain.encode(); n],
            sound_speed: vec![props.sound_speed; n],
            density: vec![props.density; n],
            attenuation: vec![props.acoustic_attenuation; n],
            mu_a: vec![props.mu_a; n],
            mu_s: vec![props.mu_s; n],
            anisotropy: vec![props.anisotropy_g; n],
        })
    }

    /// Sub-block of the phantom (used to bound solver domains).
    pub fn window(&self, w: &Window) -> Result<PhantomGrid> {
        let grid = self.grid.subgrid(w)?;
        Ok(PhantomGrid {
            grid,
            head_center: self.head_center,
            head_radius: self.head_radius,
            brain_radius: self.brain_radius,
            materials: self.materials.clone(),
            absorbers: self.absorbers.clone(),
            labels: self.grid.extract(&self.labels, w),
            sound_speed: self.grid.extract(&self.sound_speed, w),
            density: self.grid.extract(&self.density, w),
            attenuation: self.grid.extract(&self.attenuation, w),
            mu_a: self.grid.extract(&self.mu_a, w),
            mu_s: self.grid.extract(&self.mu_s, w),
            anisotropy: self.grid.extract(&self.anisotropy, w),
        })
    }

    /// Resamples the phantom onto `grid`, which must share this lattice (same
    /// spacing, origin offset by whole voxels). Voxels outside the phantom grid
    /// are labelled from the sphere geometry, i.e. coupling water.
    pub fn embed(&self, grid: Grid) -> Result<PhantomGrid> {
        let dx = self.grid.spacing;
        if ((grid.spacing - dx) / dx).abs() > 1e-12 {
            return Err(Error::config(format!("embedding spacing {} differs from {dx}", grid.spacing)));
        }
        let off = (grid.origin - self.grid.origin) * (1.0 / dx);
        let mut shift = [0i64; 3];
        for a in 0..3 {
            let r = off[a].round();
            if (off[a] - r).abs() > 1e-6 {
                return Err(Error::config("embedding grid is not aligned with the phantom lattice"));
            }
            shift[a] = r as i64;
        }
        let n = grid.len();
        let mut out = PhantomGrid {
            grid,
            head_center: self.head_center,
            head_radius: self.head_radius,
            brain_radius: self.brain_radius,
            materials: self.materials.clone(),
            absorbers: self.absorbers.clone(),
            labels: vec![0; n],
            sound_speed: vec![0.0; n],
            density: vec![0.0; n],
            attenuation: vec![0.0; n],
            mu_a: vec![0.0; n],
            mu_s: vec![0.0; n],
            anisotropy: vec![0.0; n],
        };
        for idx in 0..n {
            let c = grid.coords(idx);
            let src: Option<usize> = (0..3)
                .map(|a| {
                    let s = c[a] as i64 + shift[a];
                    (s >= 0 && (s as usize) < self.grid.dims[a]).then_some(s as usize)
                })
                .collect::<Option<Vec<_>>>()
                .map(|s| self.grid.index(s[0], s[1], s[2]));
            match src {
                Some(s) => {
                    out.labels[idx] = self.labels[s];
                    out.sound_speed[idx] = self.sound_speed[s];
                    out.density[idx] = self.density[s];
                    out.attenuation[idx] = self.attenuation[s];
                    out.mu_a[idx] = self.mu_a[s];
                    out.mu_s[idx] = self.mu_s[s];
                    out.anisotropy[idx] = self.anisotropy[s];
                }
                None => {
                    let label = out.radial_label(grid.position_of(idx));
                    out.set_voxel(idx, label);
                }
            }
        }
        Ok(out)
    }

    /// The same phantom with every absorber voxel returned to brain.
    pub fn without_absorbers(&self) -> PhantomGrid {
        let mut out = self.clone();
        for idx in 0..out.labels.len() {
            if matches!(out.label(idx), VoxelLabel::Absorber(_)) {
                out.set_voxel(idx, VoxelLabel::Brain);
            }
        }
        out.absorbers.clear();
        out
    }

    /// Writes `x_m,y_m,z_m,label` rows for every voxel.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "x_m,y_m,z_m,label").map_err(io)?;
        for idx in 0..self.labels.len() {
            let p = self.grid.position_of(idx);
            let name = match self.label(idx) {
                VoxelLabel::Absorber(i) => format!("absorber{i}:{}", self.absorbers[i].spec.material),
                l => self.label_material(l).to_string(),
            };
            writeln!(w, "{:e},{:e},{:e},{name}", p.x, p.y, p.z).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Voxelizes the concentric-sphere head and places the spec's absorbers.
pub fn build_phantom(spec: &PhantomSpec) -> Result<PhantomGrid> {
    spec.validate()?;
    let grid = Grid::centered(spec.dims(), spec.grid_spacing, Vec3::ZERO)?;
    let n = grid.len();
    let mut ph = PhantomGrid {
        grid,
        head_center: spec.head_center,
        head_radius: spec.head_radius,
        brain_radius: spec.brain_radius,
        materials: spec.materials.clone(),
        absorbers: Vec::new(),
        labels: vec![0; n],
        sound_speed: vec![0.0; n],
        density: vec![0.0; n],
        attenuation: vec![0.0; n],
        mu_a: vec![0.0; n],
        mu_s: vec![0.0; n],
        anisotropy: vec![0.0; n],
    };
    for idx in 0..n {
        let label = ph.radial_label(ph.grid.position_of(idx));
        ph.set_voxel(idx, label);
    }
    for a in &spec.absorbers {
        ph = place_absorber(ph, a.center, a.radius, a.material, a.concentration)?;
    }
    Ok(ph)
}

/// Labels every brain voxel whose centre lies strictly inside the sphere.
pub fn place_absorber(
    mut grid: PhantomGrid,
    center: Vec3,
    radius: f64,
    material: Material,
    concentration: f64,
) -> Result<PhantomGrid> {
    if !material.is_chromophore() {
        return Err(Error::config(format!("absorber material must be a chromophore, got {material}")));
    }
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::config(format!("absorber radius must be non-negative, got {radius}")));
    }
    let extinction = grid.materials.get(material).extinction;
    let mu_a = molar_mu_a(extinction, concentration)?;
    if radius == 0.0 {
        return Ok(grid);
    }
    if center.distance(grid.head_center) + radius > grid.brain_radius * (1.0 + 1e-12) {
        return Err(Error::config(format!(
            "absorber at {center:?} with radius {radius} m extends outside the brain region"
        )));
    }
    if grid.absorbers.len() >= (u8::MAX - VoxelLabel::FIRST_ABSORBER) as usize {
        return Err(Error::config("too many absorbers"));
    }
    let id = grid.absorbers.len();
    grid.absorbers.push(AbsorberInfo {
        spec: AbsorberSpec { center, radius, material, concentration },
        mu_a,
        voxel_count: 0,
    });

    let g = grid.grid;
    let f_lo = g.fractional_index(center - Vec3::new(radius, radius, radius));
    let f_hi = g.fractional_index(center + Vec3::new(radius, radius, radius));
    let range = |a: usize| {
        let lo = f_lo[a].floor().max(0.0) as usize;
        let hi = (f_hi[a].ceil().max(0.0) as usize).min(g.dims[a] - 1);
        lo..=hi
    };
    let mut count = 0;
    for i in range(0) {
        for j in range(1) {
            for k in range(2) {
                if g.position(i, j, k).distance(center) >= radius {
                    continue;
                }
                let idx = g.index(i, j, k);
                match grid.label(idx) {
                    VoxelLabel::Brain => {
                        grid.set_voxel(idx, VoxelLabel::Absorber(id));
                        count += 1;
                    }
                    other => {
                        return Err(Error::config(format!(
                            "absorber overlaps a {other:?} voxel at index {idx}"
                        )))
                    }
                }
            }
        }
    }
    grid.absorbers[id].voxel_count = count;
    Ok(grid)
}
