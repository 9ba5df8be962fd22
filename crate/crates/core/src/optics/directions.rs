//! Discrete-ordinate direction sets and the discrete Henyey–Greenstein phase matrix.
//!
//! Two families are available: primitive lattice vectors in `[-order, order]³`
//! (26 or 98 directions) and geodesic icosphere vertices (42, 162, 642, …),
//! oriented so that one vertex points along +z. Quadrature weights are
//! solid-angle areas of the Voronoi cells on the unit sphere.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

const FOUR_PI: f64 = 4.0 * PI;
const VORONOI_SAMPLES: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DirectionSpec {
    /// 1 → 26 directions, 2 → 98 directions.
    Lattice { order: u8 },
    /// Icosphere after `level` subdivisions: 10·4^level + 2 directions.
    Geodesic { level: u8 },
}

impl Default for DirectionSpec {
    fn default() -> Self {
        DirectionSpec::Lattice { order: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    pub spec: DirectionSpec,
    pub units: Vec<Vec3>,
    /// Solid-angle weights, summing to 4π.
    pub weights: Vec<f64>,
}

fn cache() -> &'static Mutex<HashMap<DirectionSpec, DirectionSet>> {
    static CACHE: OnceLock<Mutex<HashMap<DirectionSpec, DirectionSet>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl DirectionSet {
    pub fn new(spec: DirectionSpec) -> Result<DirectionSet> {
        match spec {
            DirectionSpec::Lattice { order } if !(1..=2).contains(&order) => {
                return Err(Error::config(format!("lattice order must be 1 or 2, got {order}")))
            }
            DirectionSpec::Geodesic { level } if !(1..=4).contains(&level) => {
                return Err(Error::config(format!("geodesic level must be 1–4, got {level}")))
            }
            _ => {}
        }
        if let Some(d) = cache().lock().unwrap().get(&spec) {
            return Ok(d.clone());
        }
        let (units, weights) = match spec {
            DirectionSpec::Lattice { order } => {
                let (u, c) = lattice_units(order);
                let w = voronoi_weights(&u, &c);
                (u, w)
            }
            DirectionSpec::Geodesic { level } => {
                let (u, faces) = geodesic_mesh(level);
                let w = dual_cell_areas(&u, &faces);
                (u, w)
            }
        };
        let set = DirectionSet { spec, units, weights };
        cache().lock().unwrap().insert(spec, set.clone());
        Ok(set)
    }

    pub fn lattice(order: u8) -> Result<DirectionSet> {
        Self::new(DirectionSpec::Lattice { order })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Index of the direction closest to `d` if it matches to 1e-9.
    pub fn index_of(&self, d: Vec3) -> Option<usize> {
        let d = d.normalized()?;
        self.units.iter().position(|u| u.distance(d) < 1e-9)
    }
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Unit lattice vectors and their symmetry-class keys.
fn lattice_units(order: u8) -> (Vec<Vec3>, Vec<Vec<i64>>) {
    let n = order as i32;
    let mut units = Vec::new();
    let mut classes = Vec::new();
    for a in -n..=n {
        for b in -n..=n {
            for c in -n..=n {
                if gcd(gcd(a, b), c) == 1 {
                    units.push(Vec3::new(a as f64, b as f64, c as f64).normalized().unwrap());
                    let mut k = [a.abs() as i64, b.abs() as i64, c.abs() as i64];
                    k.sort_unstable();
                    classes.push(k.to_vec());
                }
            }
        }
    }
    (units, classes)
}

/// Icosphere vertices (one rotated onto +z) and triangles.
fn geodesic_mesh(level: u8) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = Vec::new();
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            verts.push(Vec3::new(0.0, s1, s2 * phi));
            verts.push(Vec3::new(s1, s2 * phi, 0.0));
            verts.push(Vec3::new(s2 * phi, 0.0, s1));
        }
    }
    let mut faces = Vec::new();
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                let e = |a: usize, b: usize| (verts[a].distance(verts[b]) - 2.0).abs() < 1e-9;
                if e(i, j) && e(j, k) && e(i, k) {
                    faces.push([i, j, k]);
                }
            }
        }
    }
    let mut verts: Vec<Vec3> = verts.into_iter().map(|v| v.normalized().unwrap()).collect();
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut m = [0usize; 3];
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[e] = *mid.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalized().unwrap());
                    verts.len() - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        faces = next;
    }
    // rotate about x so that (0, 1, φ) points along +z
    let a = (1.0 / phi).atan();
    let (s, c) = a.sin_cos();
    let verts = verts
        .into_iter()
        .map(|v| {
            let r = Vec3::new(v.x, v.y * c - v.z * s, v.y * s + v.z * c);
            if (r.z.abs() - 1.0).abs() < 1e-12 {
                Vec3::new(0.0, 0.0, r.z.signum())
            } else {
                r
            }
        })
        .collect();
    (verts, faces)
}

/// Solid angle of the spherical triangle abc.
fn spherical_triangle(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let num = a.dot(b.cross(c)).abs();
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

/// Exact Voronoi cell areas of a triangulated sphere with acute faces: each
/// face contributes the kite between a vertex, the two adjacent edge
/// midpoints and the circumcentre.
fn dual_cell_areas(units: &[Vec3], faces: &[[usize; 3]]) -> Vec<f64> {
    let mut w = vec![0.0; units.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| units[i]);
        let mut cc = (b - a).cross(c - a).normalized().unwrap();
        if cc.dot(a) < 0.0 {
            cc = -cc;
        }
        for e in 0..3 {
            let v = units[f[e]];
            let m1 = (v + units[f[(e + 1) % 3]]).normalized().unwrap();
            let m2 = (v + units[f[(e + 2) % 3]]).normalized().unwrap();
            w[f[e]] += spherical_triangle(v, m1, cc) + spherical_triangle(v, cc, m2);
        }
    }
    w
}

/// Voronoi cell areas by nearest-direction binning of a Fibonacci sphere,
/// averaged within symmetry classes and normalised to 4π.
fn voronoi_weights(units: &[Vec3], classes: &[Vec<i64>]) -> Vec<f64> {
    let mut counts = vec![0usize; units.len()];
    let golden = PI * (3.0 - 5f64.sqrt());
    for s in 0..VORONOI_SAMPLES {
        let z = 1.0 - (2 * s + 1) as f64 / VORONOI_SAMPLES as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * s as f64;
        let p = Vec3::new(r * phi.cos(), r * phi.sin(), z);
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, u) in units.iter().enumerate() {
            let c = p.dot(*u);
            if c > best.0 {
                best = (c, i);
            }
        }
        counts[best.1] += 1;
    }
    let mut weights = vec![0.0; units.len()];
    let mut groups: HashMap<&[i64], (usize, usize)> = HashMap::new();
    for (i, key) in classes.iter().enumerate() {
        let g = groups.entry(key.as_slice()).or_default();
        g.0 += counts[i];
        g.1 += 1;
    }
    for (i, key) in classes.iter().enumerate() {
        let (total, members) = groups[key.as_slice()];
        weights[i] = total as f64 / members as f64;
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w *= FOUR_PI / sum);
    weights
}

/// Henyey–Greenstein density per steradian.
pub fn henyey_greenstein(g: f64, cos_theta: f64) -> f64 {
    let denom = 1.0 + g * g - 2.0 * g * cos_theta;
    (1.0 - g * g) / (FOUR_PI * denom * denom.sqrt())
}

/// Column-stochastic scattering matrix: `p[i * n + j]` is the probability that
/// a photon travelling along `j` leaves along `i` after a scattering event.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    pub n: usize,
    pub g: f64,
    pub p: Vec<f64>,
    /// HG parameter used for each column so that its mean cosine equals `g`.
    pub g_column: Vec<f64>,
}

impl PhaseMatrix {
    pub fn henyey_greenstein(dirs: &DirectionSet, g: f64) -> Result<PhaseMatrix> {
        if !(g > -1.0 && g < 1.0) {
            return Err(Error::config(format!("anisotropy must lie in (-1, 1), got {g}")));
        }
        let n = dirs.len();
        let mut p = vec![0.0; n * n];
        let mut g_column = vec![0.0; n];
        for j in 0..n {
            let cosines: Vec<f64> = (0..n).map(|i| dirs.units[i].dot(dirs.units[j])).collect();
            let column = |gp: f64| -> Vec<f64> {
                let mut col: Vec<f64> = (0..n).map(|i| dirs.weights[i] * henyey_greenstein(gp, cosines[i])).collect();
                let s: f64 = col.iter().sum();
                col.iter_mut().for_each(|c| *c /= s);
                col
            };
            let mean_cos = |col: &[f64]| -> f64 { col.iter().zip(&cosines).map(|(p, c)| p * c).sum() };
            let (mut lo, mut hi) = (-0.999_999, 0.999_999);
            if mean_cos(&column(hi)) < g {
                lo = hi;
            } else if mean_cos(&column(lo)) > g {
                hi = lo;
            }
            for _ in 0..200 {
                if hi - lo < 1e-15 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                if mean_cos(&column(mid)) < g {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let gp = 0.5 * (lo + hi);
            g_column[j] = gp;
            for (i, v) in column(gp).into_iter().enumerate() {
                p[i * n + j] = v;
            }
        }
        Ok(PhaseMatrix { n, g, p, g_column })
    }

    #[inline]
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.p[to * self.n + from]
    }

    pub fn self_scatter(&self, i: usize) -> f64 {
        self.get(i, i)
    }

    pub fn mean_cosine(&self, dirs: &DirectionSet, from: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, from) * dirs.units[i].dot(dirs.units[from])).sum()
    }
}
