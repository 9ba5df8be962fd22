//! Concave focused array: geometry, element averaging and the ideal band limit.

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
pub use crate::signal::SignalTrace;

/// Default element count.
pub const ELEMENT_COUNT: usize = 97;
/// Default focal radius, m.
pub const ARRAY_RADIUS: f64 = 1.4e-3;
/// Default upper band edge, Hz.
pub const MAX_FREQUENCY: f64 = 3e6;
/// Default cap half-angle, rad (60°).
pub const HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorArray {
    pub elements: Vec<Vec3>,
    pub focus: Vec3,
    /// Unit vector from the focus towards the centre of the cap.
    pub axis: Vec3,
    /// m
    pub radius: f64,
    /// Hz
    pub max_frequency: f64,
    /// rad
    pub half_angle: f64,
}

/// Array with the default 60° cap and 3 MHz band edge.
pub fn build_concave_array(focus: Vec3, axis: Vec3, n_elements: usize, radius: f64) -> Result<SensorArray> {
    build_concave_array_with(focus, axis, n_elements, radius, HALF_ANGLE)
}

/// Fibonacci spiral over the cap: element `i` sits at polar angle
/// `acos(1 − (1 − cos α)·i/(n−1))` and azimuth `i·golden angle`, so the first
/// element is on the axis and the last on the rim.
pub fn build_concave_array_with(
    focus: Vec3,
    axis: Vec3,
    n_elements: usize,
    radius: f64,
    half_angle: f64,
) -> Result<SensorArray> {
    let axis = axis.normalized().ok_or_else(|| Error::config("array axis must be a non-zero vector"))?;
    let (e1, e2) = axis.orthonormal_basis();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let span = 1.0 - half_angle.cos();
    let elements = (0..n_elements)
        .map(|i| {
            let frac = if n_elements > 1 { i as f64 / (n_elements - 1) as f64 } else { 0.0 };
            let cos_t = 1.0 - span * frac;
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let phi = golden * i as f64;
            let dir = axis * cos_t + (e1 * phi.cos() + e2 * phi.sin()) * sin_t;
            focus + dir * (radius / dir.norm())
        })
        .collect();
    let array = SensorArray { elements, focus, axis, radius, max_frequency: MAX_FREQUENCY, half_angle };
    array.validate()?;
    Ok(array)
}

impl SensorArray {
    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::config("sensor array has no elements"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config(format!("array radius must be positive, got {}", self.radius)));
        }
        if !(self.max_frequency > 0.0 && self.max_frequency.is_finite()) {
            return Err(Error::config("array max frequency must be positive"));
        }
        if !(self.half_angle > 0.0 && self.half_angle <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::config(format!("cap half-angle must lie in (0, 90°], got {} rad", self.half_angle)));
        }
        Ok(())
    }

    /// The same array translated so that its focus is `focus`.
    pub fn refocused(&self, focus: Vec3) -> SensorArray {
        let shift = focus - self.focus;
        SensorArray {
            elements: self.elements.iter().map(|&e| e + shift).collect(),
            focus,
            ..self.clone()
        }
    }

    /// Axis-aligned bounds of the element positions.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = lo * -1.0;
        for e in &self.elements {
            lo = Vec3::new(lo.x.min(e.x), lo.y.min(e.y), lo.z.min(e.z));
            hi = Vec3::new(hi.x.max(e.x), hi.y.max(e.y), hi.z.max(e.z));
        }
        (lo, hi)
    }

    /// CSV of element coordinates (`element,x_m,y_m,z_m`).
    pub fn geometry_csv(&self) -> String {
        let mut s = String::from("element,x_m,y_m,z_m\n");
        for (i, e) in self.elements.iter().enumerate() {
            s.push_str(&format!("{i},{:e},{:e},{:e}\n", e.x, e.y, e.z));
        }
        s
    }
}

/// Pointwise mean of traces sharing sampling frequency, length and start time.
pub fn average_elements(traces: &[SignalTrace]) -> Result<SignalTrace> {
    let first = traces.first().ok_or_else(|| Error::shape("no traces to average"))?;
    if let Some((i, _)) = traces.iter().enumerate().find(|(_, t)| !t.same_layout(first)) {
        return Err(Error::shape(format!(
            "trace {i} differs from trace 0 in sampling frequency, length or start time"
        )));
    }
    let mut sum = vec![0.0; first.len()];
    for t in traces {
        for (s, x) in sum.iter_mut().zip(&t.samples) {
            *s += x;
        }
    }
    let n = traces.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    SignalTrace::new(sum, first.sampling_frequency, first.start_time)
}

/// Zero-phase ideal low-pass: bins above `f_max` are removed.
pub fn apply_bandwidth(trace: &SignalTrace, f_max: f64) -> Result<SignalTrace> {
    let nyquist = trace.sampling_frequency / 2.0;
    if !(f_max > 0.0 && f_max < nyquist) {
        return Err(Error::config(format!(
            "band edge {f_max:e} Hz must lie in (0, Nyquist = {nyquist:e} Hz)"
        )));
    }
    let n = trace.len();
    let mut planner = RealFftPlanner::<f64>::new();
    let r2c = planner.plan_fft_forward(n);
    let c2r = planner.plan_fft_inverse(n);
    let mut input = trace.samples.clone();
    let mut spec = r2c.make_output_vec();
    r2c.process(&mut input, &mut spec).expect("matching lengths");
    let df = trace.sampling_frequency / n as f64;
    for (k, v) in spec.iter_mut().enumerate() {
        if k as f64 * df > f_max {
            *v = Default::default();
        }
    }
    spec[0].im = 0.0;
    if n % 2 == 0 {
        spec[n / 2].im = 0.0;
    }
    let mut out = c2r.make_output_vec();
    c2r.process(&mut spec, &mut out).expect("matching lengths");
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|x| *x *= scale);
    SignalTrace::new(out, trace.sampling_frequency, trace.start_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine(f: f64, fs: f64, n: usize) -> SignalTrace {
        SignalTrace::new((0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect(), fs, 0.0).unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn single_element_sits_on_axis() {
        let focus = Vec3::new(0.1e-3, -0.2e-3, 1.5e-3);
        let a = build_concave_array(focus, -Vec3::Z, 1, ARRAY_RADIUS).unwrap();
        assert_eq!(a.elements.len(), 1);
        let e = a.elements[0];
        assert!((e - (focus - Vec3::Z * ARRAY_RADIUS)).norm() < 1e-15);
    }

    #[test]
    fn default_array_is_confocal() {
        let focus = Vec3::new(0.0, 0.0, 1.5e-3);
        let axis = Vec3::new(0.3, -0.2, -1.0);
        let a = build_concave_array(focus, axis, ELEMENT_COUNT, ARRAY_RADIUS).unwrap();
        assert_eq!(a.elements.len(), 97);
        for e in &a.elements {
            // recompute the distance from raw coordinates
            let d = ((e.x - focus.x).powi(2) + (e.y - focus.y).powi(2) + (e.z - focus.z).powi(2)).sqrt();
            assert!((d - 1.4e-3).abs() <= 1e-9);
            let cos = (*e - focus).dot(axis.normalized().unwrap()) / d;
            assert!(cos >= HALF_ANGLE.cos() - 1e-12);
        }
        // distinct positions
        for i in 0..a.elements.len() {
            for j in 0..i {
                assert!((a.elements[i] - a.elements[j]).norm() > 1e-5);
            }
        }
        let moved = a.refocused(Vec3::new(0.0, 0.0, 1.1e-3));
        for e in &moved.elements {
            assert!(((*e - moved.focus).norm() - 1.4e-3).abs() <= 1e-9);
        }
    }

    #[test]
    fn averaging_examples() {
        let t = sine(1e6, 50e6, 64);
        let same = average_elements(&[t.clone(), t.clone(), t.clone()]).unwrap();
        assert!(same.same_layout(&t));
        for (a, b) in same.samples.iter().zip(&t.samples) {
            assert!((a - b).abs() <= 1e-15);
        }
        let z = average_elements(&[t.clone(), t.scaled(-1.0)]).unwrap();
        assert!(z.samples.iter().all(|&x| x == 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traces: Vec<SignalTrace> = (0..97)
            .map(|_| SignalTrace::new((0..40).map(|_| rng.gen_range(-1.0..1.0)).collect(), 1e7, 0.0).unwrap())
            .collect();
        let avg = average_elements(&traces).unwrap();
        for j in 0..40 {
            let mut s = 0.0;
            for t in &traces {
                s += t.samples[j];
            }
            assert!((avg.samples[j] - s / 97.0).abs() < 1e-15);
        }
        let short = SignalTrace::new(vec![0.0; 39], 1e7, 0.0).unwrap();
        assert!(matches!(average_elements(&[traces[0].clone(), short]), Err(Error::Shape(_))));
        assert!(matches!(average_elements(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn band_limit_examples() {
        // whole number of cycles so both tones sit on bins
        let (fs, n) = (50e6, 1000);
        let pass = sine(1e6, fs, n);
        let out = apply_bandwidth(&pass, 3e6).unwrap();
        let err: Vec<f64> = out.samples.iter().zip(&pass.samples).map(|(a, b)| a - b).collect();
        assert!(rms(&err) < 1e-9 * rms(&pass.samples));
        let stop = sine(5e6, fs, n);
        assert!(rms(&apply_bandwidth(&stop, 3e6).unwrap().samples) < 1e-9 * rms(&stop.samples));
        let zero = SignalTrace::new(vec![0.0; 10], fs, 0.0).unwrap();
        assert!(apply_bandwidth(&zero, 3e6).unwrap().samples.iter().all(|&x| x == 0.0));
        assert!(matches!(apply_bandwidth(&pass, 25e6), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn band_limit_is_idempotent_and_never_adds_energy(
            xs in proptest::collection::vec(-10.0f64..10.0, 2..200),
            fmax in 0.1e6f64..4.9e6,
        ) {
            let t = SignalTrace::new(xs, 10e6, 0.0).unwrap();
            let once = apply_bandwidth(&t, fmax).unwrap();
            let twice = apply_bandwidth(&once, fmax).unwrap();
            let scale = once.energy().sqrt().max(1e-300);
            for (a, b) in once.samples.iter().zip(&twice.samples) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
            prop_assert!(once.energy() <= t.energy() * (1.0 + 1e-12));
            prop_assert_eq!(once.len(), t.len());
        }

        #[test]
        fn averaging_is_linear(
            xs in proptest::collection::vec(-10.0f64..10.0, 12),
            a in -5.0f64..5.0,
        ) {
            let traces: Vec<SignalTrace> = xs.chunks(4).map(|c| SignalTrace::new(c.to_vec(), 1e6, 0.0).unwrap()).collect();
            let scaled: Vec<SignalTrace> = traces.iter().map(|t| t.scaled(a)).collect();
            let lhs = average_elements(&scaled).unwrap();
            let rhs = average_elements(&traces).unwrap().scaled(a);
            for (u, v) in lhs.samples.iter().zip(&rhs.samples) {
                prop_assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }
}
