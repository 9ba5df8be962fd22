use super::*;
use crate::phantom::{material_lookup, MaterialProperties};

fn lossless(c: f64) -> MaterialProperties {
    MaterialProperties { sound_speed: c, density: 1000.0, acoustic_attenuation: 0.0, ..material_lookup("water").unwrap() }
}

fn medium(dims: [usize; 3], dx: f64, props: MaterialProperties) -> PhantomGrid {
    PhantomGrid::homogeneous(Grid::centered(dims, dx, Vec3::ZERO).unwrap(), props).unwrap()
}

fn field(m: &PhantomGrid, f: impl Fn(Vec3) -> f64) -> InitialPressureField {
    let mut p = InitialPressureField::zeros(m.grid);
    for (i, v) in p.p0.iter_mut().enumerate() {
        *v = f(m.grid.position_of(i));
    }
    p
}

fn config(dim: usize, c_ref: f64, t_end: f64) -> SolverConfig {
    SolverConfig { dimensionality: dim, c_ref, t_end, ..SolverConfig::default() }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[test]
fn stable_dt_examples() {
    let skull = material_lookup("skull").unwrap();
    let m = medium([4, 4, 4], 230e-6, skull);
    // 0.3 · 230 µm / 4180 m/s
    assert!((stable_dt(&m, 0.3) - 16.507_177e-9).abs() < 1e-14);
    let w = medium([4, 4, 4], 100e-6, lossless(1500.0));
    assert!((stable_dt(&w, 1.0) - 100e-6 / 1500.0).abs() < 1e-20);
    let w2 = medium([4, 4, 4], 200e-6, lossless(1500.0));
    assert!((stable_dt(&w2, 0.3) - 2.0 * stable_dt(&w, 0.3)).abs() < 1e-20);
}

#[test]
fn config_checks() {
    let m = medium([1, 1, 64], 50e-6, lossless(1500.0));
    assert!(SolverConfig { pml_thickness: 7, ..config(1, 1500.0, 1e-6) }.validate().is_err());
    assert!(SolverConfig { cfl: 1.5, ..config(1, 1500.0, 1e-6) }.validate().is_err());
    assert!(SolverConfig { absorption_exponent: 1.0, ..config(1, 1500.0, 1e-6) }.validate().is_err());
    let too_big = SolverConfig { dt: Some(1e-7), ..config(1, 1500.0, 1e-6) };
    assert!(matches!(too_big.resolve_dt(&m), Err(Error::Config(_))));
    let p0 = InitialPressureField::zeros(m.grid);
    // wrong dimensionality
    assert!(matches!(propagate(&p0, &m, &[Vec3::ZERO], &config(3, 1500.0, 1e-6)), Err(Error::Config(_))));
    // a point inside the absorbing layer
    let edge = m.grid.position(0, 0, 3);
    assert!(matches!(propagate(&p0, &m, &[edge], &config(1, 1500.0, 1e-6)), Err(Error::Config(_))));
}

#[test]
fn zero_input_gives_zero_traces() {
    let m = medium([1, 40, 40], 100e-6, material_lookup("brain").unwrap());
    let p0 = InitialPressureField::zeros(m.grid);
    let tr = propagate(&p0, &m, &[Vec3::ZERO, Vec3::new(0.0, 3e-4, -2e-4)], &config(2, 1550.0, 2e-6)).unwrap();
    assert_eq!(tr.len(), 2);
    for t in tr {
        assert!(t.samples.iter().all(|&x| x == 0.0));
        assert!(t.len() > 2);
    }
}

#[test]
fn plane_wave_translates_exactly() {
    let (c, dx, sigma) = (1500.0, 50e-6, 4.0 * 50e-6);
    let m = medium([1, 1, 512], dx, lossless(c));
    let g = |z: f64| (-z * z / (2.0 * sigma * sigma)).exp();
    let p0 = field(&m, |p| g(p.z));
    let cfg = config(1, c, 100.0 * dx / c);
    let points: Vec<Vec3> = (0..13).map(|i| m.grid.position(0, 0, 208 + 8 * i)).collect();
    let res = propagate_with_diagnostics(&p0, &m, &points, &cfg).unwrap();
    let (mut got, mut want) = (Vec::new(), Vec::new());
    for (pt, tr) in points.iter().zip(&res.traces) {
        for (n, v) in tr.samples.iter().enumerate() {
            let ct = c * n as f64 * res.dt;
            got.push(*v);
            want.push(0.5 * (g(pt.z - ct) + g(pt.z + ct)));
        }
    }
    let err = rel_l2(&got, &want);
    assert!(err < 1e-6, "plane wave error {err:e}");
}

#[test]
fn linearity_and_superposition() {
    let m = medium([1, 48, 48], 100e-6, material_lookup("brain").unwrap());
    let a = field(&m, |p| (-(p - Vec3::new(0.0, 3e-4, 0.0)).norm().powi(2) / 4e-8).exp());
    let b = field(&m, |p| if (p - Vec3::new(0.0, -4e-4, 5e-4)).norm() < 3e-4 { 2.0 } else { 0.0 });
    let sum = InitialPressureField { p0: a.p0.iter().zip(&b.p0).map(|(x, y)| x + y).collect(), ..a.clone() };
    let scaled = InitialPressureField { p0: a.p0.iter().map(|x| -3.5 * x).collect(), ..a.clone() };
    let pts = [Vec3::new(0.0, 1e-3, 1e-3), Vec3::new(0.0, -1.2e-3, 0.4e-3)];
    let cfg = config(2, 1550.0, 1.5e-6);
    let ta = propagate(&a, &m, &pts, &cfg).unwrap();
    let tb = propagate(&b, &m, &pts, &cfg).unwrap();
    let ts = propagate(&sum, &m, &pts, &cfg).unwrap();
    let tk = propagate(&scaled, &m, &pts, &cfg).unwrap();
    for i in 0..pts.len() {
        let added: Vec<f64> = ta[i].samples.iter().zip(&tb[i].samples).map(|(x, y)| x + y).collect();
        assert!(rel_l2(&ts[i].samples, &added) < 1e-9);
        assert!(rel_l2(&tk[i].samples, &ta[i].scaled(-3.5).samples) < 1e-12);
    }
}

#[test]
fn reciprocity_in_homogeneous_medium() {
    let m = medium([1, 48, 48], 100e-6, lossless(1500.0));
    let (ia, ib) = ([0, 17, 20], [0, 30, 26]);
    let point = |ix: [usize; 3]| m.grid.position(ix[0], ix[1], ix[2]);
    let source = |ix: [usize; 3]| {
        let mut f = InitialPressureField::zeros(m.grid);
        f.p0[m.grid.index(ix[0], ix[1], ix[2])] = 1.0;
        f
    };
    let cfg = config(2, 1500.0, 2e-6);
    let ab = propagate(&source(ia), &m, &[point(ib)], &cfg).unwrap();
    let ba = propagate(&source(ib), &m, &[point(ia)], &cfg).unwrap();
    assert!(rel_l2(&ab[0].samples, &ba[0].samples) < 1e-6);
}

#[test]
fn forced_large_step_is_reported_as_instability() {
    let skull = MaterialProperties { acoustic_attenuation: 0.0, ..material_lookup("skull").unwrap() };
    let m = medium([1, 40, 40], 100e-6, skull);
    let p0 = field(&m, |p| (-p.norm().powi(2) / 1e-7).exp());
    let cfg = SolverConfig { cfl: 1.0, ..config(2, 1550.0, 10e-6) };
    match propagate(&p0, &m, &[Vec3::ZERO], &cfg) {
        Err(Error::Instability { step, .. }) => assert!(step > 0),
        other => panic!("expected instability, got {other:?}"),
    }
}

/// Time from the positive to the negative peak, in samples.
fn peak_separation(tr: &SignalTrace) -> f64 {
    let x = &tr.samples;
    let imax = (0..x.len()).max_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
    let imin = (0..x.len()).min_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap();
    imin as f64 - imax as f64
}

/// |DFT| of a trace at one frequency.
fn tone_amplitude(t: &SignalTrace, f: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, v) in t.samples.iter().enumerate() {
        let w = 2.0 * PI * f * t.time(i);
        re += v * w.cos();
        im += v * w.sin();
    }
    re.hypot(im)
}

#[test]
fn uniform_sphere_gives_n_wave_of_width_2r_over_c() {
    let (c, r, dx) = (1500.0, 500e-6, 100e-6);
    let m = medium([48, 48, 48], dx, lossless(c));
    let p0 = field(&m, |p| if p.norm() <= r { 1.0 } else { 0.0 });
    let d = 1.2e-3;
    let cfg = SolverConfig { cfl: 1.0, ..config(3, c, (d + r) / c + 0.3e-6) };
    let tr = &propagate(&p0, &m, &[Vec3::new(0.0, 0.0, d)], &cfg).unwrap()[0];
    // bipolar: positive lobe first
    let sep = peak_separation(tr);
    assert!(sep > 0.0);
    let want = 2.0 * r / c * tr.sampling_frequency;
    assert!((sep - want).abs() <= 2.0 + 1e-9, "{sep} samples vs {want}");
}

#[test]
fn pml_leakage_is_small() {
    let (c, dx) = (1550.0, 100e-6);
    let m = medium([1, 64, 64], dx, lossless(c));
    let p0 = field(&m, |p| (-p.norm().powi(2) / (2.0 * 150e-6f64.powi(2))).exp());
    let pt = Vec3::new(0.0, 0.0, 5e-4);
    let tr = &propagate(&p0, &m, &[pt], &config(2, c, 12e-6)).unwrap()[0];
    // interior half-width, then main pulse and earliest boundary return
    let half = (32.0 - 10.0) * dx;
    let t_main = (pt.z + 1e-3) / c;
    let t_back = (2.0 * half - pt.z - 1e-3) / c;
    let (mut main, mut late) = (0.0, 0.0);
    for (i, v) in tr.samples.iter().enumerate() {
        let t = tr.time(i);
        if t <= t_main {
            main += v * v;
        } else if t >= t_back {
            late += v * v;
        }
    }
    assert!(late / main < 5e-3, "leakage {:e}", late / main);
}

#[test]
fn skull_attenuation_over_half_a_millimetre() {
    let skull = material_lookup("skull").unwrap();
    let (c, dx) = (skull.sound_speed, 100e-6);
    let m = medium([1, 1, 2048], dx, skull);
    let lambda = c / 1e6;
    let sigma = 3.0 * lambda;
    let p0 = field(&m, |p| (-p.z * p.z / (2.0 * sigma * sigma)).exp() * (2.0 * PI * p.z / lambda).cos());
    let (z1, sep) = (6.0 * sigma, 0.5e-3);
    let pts = [Vec3::new(0.0, 0.0, z1), Vec3::new(0.0, 0.0, z1 + sep)];
    let tr = propagate(&p0, &m, &pts, &config(1, 1550.0, (z1 + sep + 6.0 * sigma) / c)).unwrap();
    let loss_db = 20.0 * (tone_amplitude(&tr[0], 1e6) / tone_amplitude(&tr[1], 1e6)).log10();
    assert!((loss_db - 1.0).abs() <= 0.2, "{loss_db} dB");
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn traces_are_finite_and_scale_linearly(
            amps in proptest::collection::vec(-5.0f64..5.0, 6),
            a in -4.0f64..4.0,
            att in 0.0f64..20.0,
        ) {
            let props = MaterialProperties { acoustic_attenuation: att, ..material_lookup("brain").unwrap() };
            let m = medium([1, 1, 64], 100e-6, props);
            let mut p0 = InitialPressureField::zeros(m.grid);
            for (i, v) in amps.iter().enumerate() {
                p0.p0[26 + 2 * i] = *v;
            }
            let scaled = InitialPressureField { p0: p0.p0.iter().map(|x| a * x).collect(), ..p0.clone() };
            let cfg = config(1, 1550.0, 1e-6);
            let pts = [m.grid.position(0, 0, 20), m.grid.position(0, 0, 40)];
            let t1 = propagate(&p0, &m, &pts, &cfg).unwrap();
            let t2 = propagate(&scaled, &m, &pts, &cfg).unwrap();
            for (x, y) in t1.iter().zip(&t2) {
                prop_assert!(x.samples.iter().all(|v| v.is_finite()));
                for (u, v) in x.samples.iter().zip(&y.samples) {
                    prop_assert!((a * u - v).abs() <= 1e-12 * (1.0 + v.abs()) * 10.0);
                }
            }
        }
    }
}
