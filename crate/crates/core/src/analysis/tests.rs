use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Box–Muller deviate.
fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn sine(a: f64, f: f64, fs: f64, n: usize, phase: f64) -> SignalTrace {
    SignalTrace::new((0..n).map(|i| a * (2.0 * PI * f * i as f64 / fs + phase).sin()).collect(), fs, 0.0).unwrap()
}

fn spectrum_from(psd: Vec<f64>, fs: f64) -> Spectrum {
    let nfft = 2 * (psd.len() - 1);
    Spectrum {
        frequencies: (0..psd.len()).map(|k| k as f64 * fs / nfft as f64).collect(),
        psd,
        sampling_frequency: fs,
        segment_length: nfft,
        overlap: 0.5,
        window: WindowKind::Hann,
        nfft,
        segments: 1,
    }
}

#[test]
fn peak_to_peak_examples() {
    let c = SignalTrace::new(vec![3.0; 10], 1e6, 0.0).unwrap();
    assert_eq!(peak_to_peak(&c), 0.0);
    // samples land on the crests: 40 samples per period
    let s = sine(2.5, 1e6, 40e6, 400, 0.0);
    assert!((peak_to_peak(&s) - 5.0).abs() < 1e-12);
}

#[test]
fn welch_sinusoid_parseval_and_peak() {
    let (fs, n) = (50e6, 4000);
    let s = sine(1.0, 1e6, fs, n, 0.3);
    let w = WelchSettings::default();
    let sp = w.estimate(&s).unwrap();
    assert_eq!(sp.segments, 8);
    assert_eq!(*sp.frequencies.last().unwrap(), fs / 2.0);
    let k = (0..sp.psd.len()).max_by(|&a, &b| sp.psd[a].total_cmp(&sp.psd[b])).unwrap();
    assert!((sp.frequencies[k] - 1e6).abs() <= sp.bin_width());
    let total = band_power(&sp, 0.0, fs / 2.0).unwrap();
    assert!((total - 0.5).abs() < 0.05 * 0.5, "{total}");
    assert!(sp.psd.iter().all(|&p| p >= 0.0));
}

#[test]
fn welch_zero_and_short_inputs() {
    let z = SignalTrace::new(vec![0.0; 100], 1e6, 0.0).unwrap();
    let sp = welch_psd(&z, 32, 0.5, WindowKind::Hann).unwrap();
    assert!(sp.psd.iter().all(|&p| p == 0.0));
    assert!(matches!(welch_psd(&z, 101, 0.5, WindowKind::Hann), Err(Error::Shape(_))));
    assert!(welch_psd(&z, 32, 1.0, WindowKind::Hann).is_err());
}

#[test]
fn welch_white_noise_is_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..64 * 33).map(|_| gaussian(&mut rng)).collect();
    let t = SignalTrace::new(x, 1e6, 0.0).unwrap();
    let sp = welch_psd(&t, 64, 0.5, WindowKind::Hann).unwrap();
    assert!(sp.segments >= 32);
    // DC and Nyquist bins carry half the degrees of freedom
    let inner = &sp.psd[1..sp.psd.len() - 1];
    let (lo, hi) = inner.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &p| (l.min(p), h.max(p)));
    assert!(hi / lo < 3.0, "{}", hi / lo);
}

#[test]
fn band_power_examples() {
    let z = spectrum_from(vec![0.0; 33], 1e6);
    assert_eq!(band_power(&z, 0.0, 5e5).unwrap(), 0.0);
    assert!(matches!(band_power(&z, 0.0, 6e5), Err(Error::Domain(_))));
    assert!(matches!(band_power(&z, 3e5, 2e5), Err(Error::Domain(_))));
    let s = sine(3.0, 2e6, 40e6, 2000, 0.0);
    let sp = WelchSettings::default().estimate(&s).unwrap();
    let ms = s.energy() / s.len() as f64;
    let full = band_power(&sp, 0.0, sp.nyquist()).unwrap();
    assert!((full - ms).abs() < 0.05 * ms);
}

#[test]
fn high_band_integral_examples() {
    let fs = 10e6;
    let sp = spectrum_from(vec![2.0; 129], fs);
    let df = sp.bin_width();
    let v = high_band_integral(&sp, 1.5e6, 3e6).unwrap();
    assert!((v - 2.0 * 1.5e6).abs() <= 2.0 * df + 1e-6);
    // trapezoid oracle on a smooth spectrum
    let smooth = spectrum_from((0..129).map(|k| (-(k as f64 - 40.0).powi(2) / 200.0).exp()).collect(), fs);
    let rect = high_band_integral(&smooth, 1.5e6, 3e6).unwrap();
    let (mut trap, mut biggest) = (0.0, 0.0f64);
    for k in 0..128 {
        let (f0, f1) = (smooth.frequencies[k], smooth.frequencies[k + 1]);
        if f0 >= 1.5e6 && f1 <= 3e6 {
            trap += 0.5 * (smooth.psd[k] + smooth.psd[k + 1]) * df;
            biggest = biggest.max(smooth.psd[k].max(smooth.psd[k + 1]) * df);
        }
    }
    assert!((rect - trap).abs() <= biggest);
    assert!(high_band_integral(&smooth, 1.5e6, 6e6).is_err());
}

#[test]
fn two_point_intercepts() {
    assert_eq!(line_intercept(1e6, 4.0, 2e6, 6.0), 2.0);
    assert_eq!(line_intercept(1e6, 7.0, 3e6, 7.0), 7.0);
}

/// Two Gaussian lobes centred on bins `c1`, `c2` with heights `h1`, `h2`.
fn two_lobes(h1: f64, c1: usize, h2: f64, c2: usize) -> Spectrum {
    let psd = (0..257)
        .map(|k| {
            let k = k as f64;
            h1 * (-(k - c1 as f64).powi(2) / 18.0).exp() + h2 * (-(k - c2 as f64).powi(2) / 18.0).exp()
        })
        .collect();
    spectrum_from(psd, 25.6e6)
}

#[test]
fn intercept_of_constructed_spectra() {
    // bins are 50 kHz wide: lobes at 1 and 2 MHz
    let sp = two_lobes(4.0, 20, 6.0, 40);
    let got = spectral_y_intercept(&sp, 0.05).unwrap();
    let want = line_intercept(sp.frequencies[20], sp.psd[20], sp.frequencies[40], sp.psd[40]);
    assert!((got - want).abs() <= 1e-9 * want.abs());
    // lobes are well separated, so the line nearly passes (1 MHz, 4), (2 MHz, 6)
    assert!((got - 2.0).abs() < 1e-3);
    let flat = two_lobes(5.0, 20, 5.0, 60);
    assert!((spectral_y_intercept(&flat, 0.05).unwrap() - 5.0).abs() < 1e-6);
    let single = two_lobes(5.0, 20, 0.0, 60);
    assert!(matches!(spectral_y_intercept(&single, 0.05), Err(Error::FeatureUnavailable(_))));
}

#[test]
fn small_ripples_are_not_peaks() {
    let mut sp = two_lobes(10.0, 20, 6.0, 60);
    // a 1 % bump on the flank must not qualify at 5 % prominence
    for k in 33..36 {
        sp.psd[k] += 0.1;
    }
    let peaks = spectral_peaks(&sp.psd, 0.05);
    assert_eq!(peaks, vec![20, 60]);
}

#[test]
fn size_fit_recovers_reference_coefficients() {
    let (c1, c2, g) = (1.0932e-45, -1.2470e-35, 4.329);
    let pts: Vec<(f64, f64)> = [234.0, 468.0, 702.0, 936.0].iter().map(|&s: &f64| (s, c1 * s.powf(g) + c2)).collect();
    let t0 = std::time::Instant::now();
    let fit = fit_size_response(&pts, (0.0, 8.0)).unwrap();
    assert!(t0.elapsed().as_secs_f64() < 1.0);
    assert!((fit.gamma - g).abs() / g < 0.01, "{fit:?}");
    assert!(fit.gamma > 1.0);

    let pts: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 5.0].iter().map(|&s: &f64| (s, s * s)).collect();
    let fit = fit_size_response(&pts, (0.0, 8.0)).unwrap();
    assert!((fit.gamma - 2.0).abs() < 1e-6 && (fit.c1 - 1.0).abs() < 1e-6 && fit.c2.abs() < 1e-6, "{fit:?}");

    let flat: Vec<(f64, f64)> = [1.0, 2.0, 3.0].iter().map(|&s| (s, 4.0)).collect();
    let fit = fit_size_response(&flat, (0.0, 8.0)).unwrap();
    assert!(fit.c1.abs() < 1e-12 && (fit.c2 - 4.0).abs() < 1e-12);

    assert!(matches!(fit_size_response(&pts[..2], (0.0, 8.0)), Err(Error::UnderDetermined(_))));
    let dup = [(1.0, 1.0), (1.0, 2.0), (2.0, 3.0)];
    assert!(matches!(fit_size_response(&dup, (0.0, 8.0)), Err(Error::UnderDetermined(_))));
}

#[test]
fn arrival_time_examples() {
    let mut x = vec![0.0; 50];
    x[17] = -2.0;
    let t = SignalTrace::new(x.clone(), 1e7, 0.0).unwrap();
    assert_eq!(arrival_time(&t).unwrap(), 17.0 / 1e7);
    x[30] = 2.0;
    let tied = SignalTrace::new(x, 1e7, 0.0).unwrap();
    assert_eq!(arrival_time(&tied).unwrap(), 17.0 / 1e7);
    let z = SignalTrace::new(vec![0.0; 5], 1e7, 0.0).unwrap();
    assert!(matches!(arrival_time(&z), Err(Error::FeatureUnavailable(_))));
}

#[test]
fn point_source_arrives_after_straight_ray_time() {
    use crate::acoustics::{propagate, SolverConfig};
    use crate::geometry::Vec3;
    use crate::grid::Grid;
    use crate::optics::InitialPressureField;
    use crate::phantom::{material_lookup, MaterialProperties, PhantomGrid};

    let (c, dx) = (1500.0, 100e-6);
    let props = MaterialProperties { sound_speed: c, acoustic_attenuation: 0.0, ..material_lookup("water").unwrap() };
    let m = PhantomGrid::homogeneous(Grid::centered([40, 40, 40], dx, Vec3::ZERO).unwrap(), props).unwrap();
    let mut p0 = InitialPressureField::zeros(m.grid);
    for (i, v) in p0.p0.iter_mut().enumerate() {
        *v = (-m.grid.position_of(i).norm().powi(2) / (2.0 * dx * dx)).exp();
    }
    let d = 0.9e-3;
    let cfg = SolverConfig { cfl: 1.0, c_ref: c, t_end: 1e-6, ..SolverConfig::default() };
    let tr = &propagate(&p0, &m, &[Vec3::new(0.0, 0.0, d)], &cfg).unwrap()[0];
    let t = arrival_time(tr).unwrap();
    assert!((t - d / c).abs() <= 2.0 * tr.dt(), "{t:e} vs {:e}", d / c);
}

#[test]
fn extract_features_reports_unavailable_parts() {
    let z = SignalTrace::new(vec![0.0; 256], 20e6, 0.0).unwrap();
    let (f, _) = extract_features(&z, &AnalysisSettings::default()).unwrap();
    assert_eq!(f.ppp, 0.0);
    assert!(f.y_intercept.is_none() && f.arrival_time.is_none());
    assert_eq!(f.notes.len(), 2);
}

proptest! {
    #[test]
    fn ppp_scales_with_abs_factor(xs in proptest::collection::vec(-1e3f64..1e3, 2..64), a in -10.0f64..10.0) {
        let t = SignalTrace::new(xs, 1e6, 0.0).unwrap();
        let p = peak_to_peak(&t);
        prop_assert!(p >= 0.0);
        prop_assert!((peak_to_peak(&t.scaled(a)) - a.abs() * p).abs() <= 1e-9 * (1.0 + p * a.abs()));
    }

    #[test]
    fn band_power_is_additive(
        psd in proptest::collection::vec(0.0f64..10.0, 9..80),
        cuts in proptest::collection::vec(0.0f64..1.0, 3),
    ) {
        let sp = spectrum_from(psd, 2e6);
        let ny = sp.nyquist();
        let mut c: Vec<f64> = cuts.iter().map(|x| x * ny).collect();
        c.sort_by(f64::total_cmp);
        prop_assume!(c[0] < c[1] && c[1] < c[2]);
        // snap the middle cut to a bin boundary
        let df = sp.bin_width();
        let mid = ((c[1] / df - 0.5).round() + 0.5) * df;
        prop_assume!(c[0] < mid && mid < c[2]);
        let whole = band_power(&sp, c[0], c[2]).unwrap();
        let parts = band_power(&sp, c[0], mid).unwrap() + band_power(&sp, mid, c[2]).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1e-300));
        prop_assert!(whole >= 0.0);
    }

    #[test]
    fn psd_ignores_pure_delay(delay in 0usize..200) {
        let (fs, n) = (50e6, 3000);
        let f = 1.25e6;
        let a = sine(1.0, f, fs, n, 0.0);
        let b = SignalTrace::new((0..n).map(|i| (2.0 * PI * f * (i as f64 - delay as f64) / fs).sin()).collect(), fs, 0.0).unwrap();
        let w = WelchSettings::default();
        let (sa, sb) = (w.estimate(&a).unwrap(), w.estimate(&b).unwrap());
        let peak = sa.psd.iter().copied().fold(0.0, f64::max);
        for (x, y) in sa.psd.iter().zip(&sb.psd) {
            if *x > 1e-3 * peak {
                prop_assert!((x - y).abs() <= 0.05 * x);
            }
        }
    }

    #[test]
    fn intercept_scales_with_spectrum(a in 1e-40f64..1e10, h2 in 1.0f64..20.0) {
        let sp = two_lobes(4.0, 20, h2, 40);
        let base = spectral_y_intercept(&sp, 0.05).unwrap();
        let scaled = spectral_y_intercept(&sp.scaled(a), 0.05).unwrap();
        prop_assert!((scaled - a * base).abs() <= 1e-9 * (a * base).abs().max(a * 1e-12));
    }

    #[test]
    fn size_fit_beats_constant_and_is_scale_consistent(
        ys in proptest::collection::vec(-5.0f64..5.0, 4),
        a in 0.1f64..100.0,
    ) {
        let sizes = [234.0, 468.0, 702.0, 936.0];
        let pts: Vec<(f64, f64)> = sizes.iter().copied().zip(ys.iter().copied()).collect();
        let fit = fit_size_response(&pts, (0.0, 8.0)).unwrap();
        let mean = ys.iter().sum::<f64>() / 4.0;
        let const_res = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>().sqrt();
        prop_assert!(fit.residual <= const_res * (1.0 + 1e-9) + 1e-12);
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(s, y)| (s, a * y)).collect();
        let fs = fit_size_response(&scaled, (0.0, 8.0)).unwrap();
        prop_assert!((fs.residual - a * fit.residual).abs() <= 1e-6 * (1.0 + a * fit.residual));
        prop_assert!((fs.gamma - fit.gamma).abs() <= GAMMA_STEP);
    }
}
