//! Real-to-complex 3-D transforms for row-major grids (last index fastest).
//!
//! The real transform runs along the last axis with more than one point; the
//! remaining active axes use complex transforms on the half spectrum.
//! Axes of length 1 are skipped.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Number of strided lines gathered per complex transform call.
const LINE_BATCH: usize = 16;

pub struct Fft3 {
    pub dims: [usize; 3],
    /// Spectrum dimensions: `dims` with the real axis halved.
    pub half: [usize; 3],
    pub real_axis: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: [Option<Arc<dyn Fft<f64>>>; 3],
    inverse: [Option<Arc<dyn Fft<f64>>>; 3],
}

impl Fft3 {
    /// Panics if every axis has length 1.
    pub fn new(dims: [usize; 3]) -> Fft3 {
        let real_axis = (0..3).rev().find(|&a| dims[a] > 1).expect("at least one active axis");
        let mut half = dims;
        half[real_axis] = dims[real_axis] / 2 + 1;
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let mut forward: [Option<Arc<dyn Fft<f64>>>; 3] = [None, None, None];
        let mut inverse: [Option<Arc<dyn Fft<f64>>>; 3] = [None, None, None];
        for a in 0..3 {
            if a != real_axis && dims[a] > 1 {
                forward[a] = Some(cp.plan_fft_forward(dims[a]));
                inverse[a] = Some(cp.plan_fft_inverse(dims[a]));
            }
        }
        Fft3 {
            dims,
            half,
            real_axis,
            r2c: rp.plan_fft_forward(dims[real_axis]),
            c2r: rp.plan_fft_inverse(dims[real_axis]),
            forward,
            inverse,
        }
    }

    pub fn real_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn spectrum_len(&self) -> usize {
        self.half.iter().product()
    }

    /// Unnormalised forward transform. `input` is used as scratch.
    pub fn forward(&self, input: &mut [f64], out: &mut [Complex64]) {
        let n = self.dims[self.real_axis];
        let nh = self.half[self.real_axis];
        let mut scratch = self.r2c.make_scratch_vec();
        for (line, spec) in input.chunks_exact_mut(n).zip(out.chunks_exact_mut(nh)) {
            self.r2c.process_with_scratch(line, spec, &mut scratch).expect("matching lengths");
        }
        for a in 0..3 {
            if let Some(plan) = &self.forward[a] {
                self.strided(plan.as_ref(), a, out);
            }
        }
    }

    /// Inverse transform normalised by 1/N. `spec` is used as scratch.
    pub fn inverse(&self, spec: &mut [Complex64], out: &mut [f64]) {
        for a in 0..3 {
            if let Some(plan) = &self.inverse[a] {
                self.strided(plan.as_ref(), a, spec);
            }
        }
        let n = self.dims[self.real_axis];
        let nh = self.half[self.real_axis];
        let mut scratch = self.c2r.make_scratch_vec();
        let scale = 1.0 / self.real_len() as f64;
        for (line, s) in out.chunks_exact_mut(n).zip(spec.chunks_exact_mut(nh)) {
            // DC and Nyquist are real for a real field; drop rounding residue
            s[0].im = 0.0;
            if n % 2 == 0 {
                s[nh - 1].im = 0.0;
            }
            self.c2r.process_with_scratch(s, line, &mut scratch).expect("matching lengths");
            line.iter_mut().for_each(|x| *x *= scale);
        }
    }

    fn strided(&self, plan: &dyn Fft<f64>, axis: usize, data: &mut [Complex64]) {
        let n = self.half[axis];
        let stride: usize = self.half[axis + 1..].iter().product();
        let block = n * stride;
        let mut buf = vec![Complex64::default(); n * LINE_BATCH];
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        for chunk in data.chunks_exact_mut(block) {
            let mut j0 = 0;
            while j0 < stride {
                let g = LINE_BATCH.min(stride - j0);
                for i in 0..n {
                    for l in 0..g {
                        buf[l * n + i] = chunk[i * stride + j0 + l];
                    }
                }
                plan.process_with_scratch(&mut buf[..g * n], &mut scratch);
                for i in 0..n {
                    for l in 0..g {
                        chunk[i * stride + j0 + l] = buf[l * n + i];
                    }
                }
                j0 += g;
            }
        }
    }

    /// Wavenumbers (rad/m) along `axis` in spectrum order.
    pub fn wavenumbers(&self, axis: usize, dx: f64) -> Vec<f64> {
        let n = self.dims[axis];
        let dk = 2.0 * std::f64::consts::PI / (n as f64 * dx);
        (0..self.half[axis])
            .map(|i| {
                if axis == self.real_axis || i <= n / 2 {
                    i as f64 * dk
                } else {
                    (i as f64 - n as f64) * dk
                }
            })
            .collect()
    }
}
