//! Uniform Cartesian voxel grid shared by the optical and acoustic solvers.
//!
//! Storage is row-major with `z` fastest: `index = (i * ny + j) * nz + k`.
//! Voxel `(i, j, k)` has its centre at `origin + spacing * (i, j, k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    /// Voxel edge length in metres.
    pub spacing: f64,
    /// Centre of voxel `(0, 0, 0)`.
    pub origin: Vec3,
}

/// Axis-aligned sub-block of a grid, in voxel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub lo: [usize; 3],
    pub dims: [usize; 3],
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: f64, origin: Vec3) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::config(format!("grid dimensions must be positive, got {dims:?}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::config(format!("grid spacing must be positive, got {spacing}")));
        }
        Ok(Self { dims, spacing, origin })
    }

    /// Grid of the given shape whose centre coincides with `center`.
    pub fn centered(dims: [usize; 3], spacing: f64, center: Vec3) -> Result<Self> {
        let half = |n: usize| (n as f64 - 1.0) * 0.5 * spacing;
        let origin = center - Vec3::new(half(dims[0]), half(dims[1]), half(dims[2]));
        Self::new(dims, spacing, origin)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn position_of(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.position(i, j, k)
    }

    /// Continuous voxel coordinates of a point (voxel centres are integers).
    pub fn fractional_index(&self, p: Vec3) -> [f64; 3] {
        let d = (p - self.origin) / self.spacing;
        [d.x, d.y, d.z]
    }

    /// Index of the voxel whose cell contains `p`, if inside the grid.
    pub fn voxel_containing(&self, p: Vec3) -> Option<[usize; 3]> {
        let f = self.fractional_index(p);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = f[a].round();
            if r < 0.0 || r >= self.dims[a] as f64 {
                return None;
            }
            out[a] = r as usize;
        }
        Some(out)
    }

    /// Axes along which the grid has more than one voxel.
    pub fn active_axes(&self) -> Vec<usize> {
        (0..3).filter(|&a| self.dims[a] > 1).collect()
    }

    /// Lower and upper bounds of the region covered by the voxel cells.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let h = self.spacing * 0.5;
        let lo = self.origin - Vec3::new(h, h, h);
        let ext = Vec3::new(
            self.dims[0] as f64 * self.spacing,
            self.dims[1] as f64 * self.spacing,
            self.dims[2] as f64 * self.spacing,
        );
        (lo, lo + ext)
    }

    /// Grid describing a sub-block of this one.
    pub fn subgrid(&self, w: &Window) -> Result<Grid> {
        for a in 0..3 {
            if w.dims[a] == 0 || w.lo[a] + w.dims[a] > self.dims[a] {
                return Err(Error::config(format!(
                    "window {w:?} does not fit in grid {:?}",
                    self.dims
                )));
            }
        }
        Grid::new(w.dims, self.spacing, self.position(w.lo[0], w.lo[1], w.lo[2]))
    }

    /// Copy the values of `field` (defined on `self`) that fall inside `w`.
    pub fn extract<T: Copy>(&self, field: &[T], w: &Window) -> Vec<T> {
        debug_assert_eq!(field.len(), self.len());
        let mut out = Vec::with_capacity(w.dims.iter().product());
        for i in w.lo[0]..w.lo[0] + w.dims[0] {
            for j in w.lo[1]..w.lo[1] + w.dims[1] {
                let start = self.index(i, j, w.lo[2]);
                out.extend_from_slice(&field[start..start + w.dims[2]]);
            }
        }
        out
    }

    /// Smallest window containing the axis-aligned box `[lo, hi]` padded by
    /// `pad` voxels, clipped to the grid. Dimensions are rounded up to FFT-friendly
    /// sizes when possible.
    pub fn window_around(&self, lo: Vec3, hi: Vec3, pad: [usize; 3]) -> Window {
        let flo = self.fractional_index(lo);
        let fhi = self.fractional_index(hi);
        let mut wlo = [0usize; 3];
        let mut wdims = [1usize; 3];
        for a in 0..3 {
            let n = self.dims[a];
            if n == 1 {
                continue;
            }
            let a_lo = (flo[a].floor() as i64 - pad[a] as i64).max(0) as usize;
            let a_hi = ((fhi[a].ceil() as i64 + pad[a] as i64).max(0) as usize).min(n - 1);
            let want = fft_friendly(a_hi - a_lo + 1).min(n);
            // grow symmetrically, then shift back inside the grid
            let extra = want - (a_hi - a_lo + 1);
            let mut start = a_lo.saturating_sub(extra / 2);
            if start + want > n {
                start = n - want;
            }
            wlo[a] = start;
            wdims[a] = want;
        }
        Window { lo: wlo, dims: wdims }
    }
}

/// Smallest integer ≥ n whose only prime factors are 2, 3 and 5.
pub fn fft_friendly(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = Grid::new([3, 4, 5], 1.0, Vec3::ZERO).unwrap();
        for idx in 0..g.len() {
            let [i, j, k] = g.coords(idx);
            assert_eq!(g.index(i, j, k), idx);
        }
    }

    #[test]
    fn centered_grid_is_symmetric() {
        let g = Grid::centered([5, 5, 5], 0.1, Vec3::ZERO).unwrap();
        assert!(g.position(2, 2, 2).norm() < 1e-15);
        assert!((g.position(0, 0, 0).x + 0.2).abs() < 1e-15);
    }

    #[test]
    fn extract_matches_subgrid_positions() {
        let g = Grid::centered([6, 7, 8], 0.5, Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let field: Vec<usize> = (0..g.len()).collect();
        let w = Window { lo: [1, 2, 3], dims: [3, 2, 4] };
        let sub = g.subgrid(&w).unwrap();
        let vals = g.extract(&field, &w);
        for (s, &v) in vals.iter().enumerate() {
            assert!(sub.position_of(s).distance(g.position_of(v)) < 1e-12);
        }
    }

    #[test]
    fn fft_sizes() {
        assert_eq!(fft_friendly(47), 48);
        assert_eq!(fft_friendly(49), 50);
        assert_eq!(fft_friendly(1), 1);
        assert_eq!(fft_friendly(97), 100);
    }
}
