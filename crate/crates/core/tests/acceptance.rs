//! Acceptance criteria at their stated tolerances, on the default setup.
//! Prints one PASS/FAIL line per criterion followed by indented details;
//! failures are reported, not raised, so the run always completes.

use std::time::{Duration, Instant};

use arpam::experiments::validation::{
    check_band_power_additivity, check_beer_lambert, check_confinement_times, check_fit_recovery, check_linearity,
    check_mpe, check_n_wave, check_parseval, check_plane_wave, check_pml_leakage, check_rte_vs_mc, check_sinusoid_ppp,
    check_y_intercept,
};
use arpam::experiments::{run_study, CheckRecord, Status, StudyKind, StudyOutcome, StudyReport, StudySpec};
use arpam::phantom::PhantomSpec;

struct Verdict {
    pass: bool,
    details: Vec<String>,
}

impl Verdict {
    fn new() -> Verdict {
        Verdict { pass: true, details: Vec::new() }
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        self.pass &= ok;
        self.details.push(format!("{} {}", if ok { "ok  " } else { "FAIL" }, what.into()));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.details.push(format!("info {}", what.into()));
    }

    fn checks(&mut self, checks: &[CheckRecord]) {
        for c in checks {
            let err = c.error.map_or("n/a".to_string(), |e| format!("{e:.3e}"));
            self.require(c.status == Status::Pass, format!("{}: error {err} (tolerance {:.3e}); {}", c.name, c.tolerance, c.detail));
        }
    }
}

fn report(id: u32, title: &str, v: Verdict) {
    println!("{} criterion {id}: {title}", if v.pass { "PASS" } else { "FAIL" });
    for d in v.details {
        println!("    {d}");
    }
}

fn study(kind: StudyKind, spec: StudySpec) -> (Option<StudyOutcome>, Duration, Option<String>) {
    let t = Instant::now();
    match run_study(&StudySpec { kind, ..spec }) {
        Ok(o) => {
            let err = o.report.error.clone();
            (Some(o), t.elapsed(), err)
        }
        Err(e) => (None, t.elapsed(), Some(e.to_string())),
    }
}

fn column(r: &StudyReport, name: &str) -> Vec<Option<f64>> {
    let c = r.table.columns.iter().position(|n| n == name).expect("feature column");
    r.table.rows.iter().map(|row| row[c]).collect()
}

fn strictly(v: &[Option<f64>], increasing: bool) -> bool {
    v.iter().all(Option::is_some)
        && v.windows(2).all(|w| {
            let (a, b) = (w[0].unwrap(), w[1].unwrap());
            if increasing {
                b > a
            } else {
                b < a
            }
        })
}

fn fmt(v: &[Option<f64>]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.map_or("n/a".into(), |x| format!("{x:.4e}"))).collect();
    format!("[{}]", parts.join(", "))
}

fn size_criteria(spec: &StudySpec) {
    let (outcome, took, err) = study(StudyKind::Size, spec.clone());
    let dims = PhantomSpec::default().auto_dims();
    let mut c1 = Verdict::new();
    let mut c2 = Verdict::new();
    if let Some(e) = &err {
        c1.require(false, format!("study error: {e}"));
    }
    if let Some(o) = &outcome {
        let r = &o.report;
        let ppp = column(r, "ppp_pa");
        c1.require(strictly(&ppp, true), format!("PPP strictly increasing over radii 234/468/702/936 µm: {}", fmt(&ppp)));
        let ratio = match (ppp.first().copied().flatten(), ppp.last().copied().flatten()) {
            (Some(a), Some(b)) if a > 0.0 => b / a,
            _ => f64::NAN,
        };
        c1.require(ratio >= 5.0, format!("PPP(936)/PPP(234) = {ratio:.2} (≥ 5)"));
        c1.require(dims.iter().all(|&n| n <= 96), format!("head grid {dims:?} at 115 µm (≤ 96³)"));
        c1.note(format!("size study took {:.1} s on {} thread(s)", took.as_secs_f64(), rayon::current_num_threads()));
        if took > Duration::from_secs(600) {
            c1.note("runtime target of 10 min exceeded");
        }
        let yi = column(r, "y_intercept_pa2_per_hz");
        c2.require(strictly(&yi, true), format!("y-intercept strictly increasing: {}", fmt(&yi)));
        match &r.fit {
            Some(f) if f.status == Status::Pass || f.gamma.is_some() => {
                let g = f.gamma.unwrap_or(f64::NAN);
                c2.require(g > 1.0, format!("γ on simulated y-intercepts = {g:.4} (> 1)"));
            }
            Some(f) => c2.require(false, format!("γ on simulated data unavailable: {}", f.detail)),
            None => c2.require(false, "no fit in report"),
        }
    } else {
        c2.require(false, "size study did not produce a report");
    }
    let t = Instant::now();
    let rec = check_fit_recovery(spec.gamma_range);
    let took = t.elapsed();
    c2.checks(&[rec]);
    c2.require(took < Duration::from_secs(1), format!("synthetic recovery took {:.3} s (< 1 s)", took.as_secs_f64()));
    report(1, "size trend", c1);
    report(2, "y-intercept monotonicity and size-response fit", c2);
}

fn concentration_criteria(spec: &StudySpec) {
    let (outcome, took, err) = study(StudyKind::Concentration, spec.clone());
    let mut c3 = Verdict::new();
    let mut c4 = Verdict::new();
    if let Some(e) = &err {
        c3.require(false, format!("study error: {e}"));
        c4.require(false, format!("study error: {e}"));
    }
    if let Some(o) = &outcome {
        let r = &o.report;
        match &r.regression {
            Some(reg) => c3.require(
                reg.r_squared >= 0.99 && reg.points == 3,
                format!("R² = {:.6} over {} concentrations ≤ {} g/L (≥ 0.99)", reg.r_squared, reg.points, spec.linear_limit),
            ),
            None => c3.require(false, "no regression in report"),
        }
        if let Some(all) = &r.regression_all {
            c3.note(format!("with 50 g/L included: R² = {:.6} over {} points", all.r_squared, all.points));
        }
        c3.note(format!("PPP per concentration: {}", fmt(&column(r, "ppp_pa"))));
        c3.note(format!("concentration study took {:.1} s", took.as_secs_f64()));
        match &r.pair {
            Some(p) => {
                let off = (p.ppp_ratio / p.expected_ratio - 1.0).abs();
                c4.require(
                    off <= 0.2,
                    format!("equal-molar PPP ratio ICG/Hb = {:.2} vs ε ratio {:.2} ({:.2} % off, ≤ 20 %)", p.ppp_ratio, p.expected_ratio, off * 100.0),
                );
                let bp = p.band_power_ratio;
                c4.require(bp > 1e3, format!("band-power ratio ICG/Hb = {bp:.3e} (> 1e3)"));
            }
            None => c4.require(false, "no Hb/ICG pair in report"),
        }
    }
    report(3, "concentration linearity", c3);
    report(4, "ICG vs Hb contrast", c4);
}

fn depth_trends(r: &StudyReport, v: &mut Verdict) {
    let arrival = column(r, "arrival_time_s");
    v.require(strictly(&arrival, true), format!("arrival time strictly increasing: {}", fmt(&arrival)));
    let ppp = column(r, "ppp_pa");
    v.require(strictly(&ppp, false), format!("PPP strictly decreasing: {}", fmt(&ppp)));
    let hb = column(r, "high_band_integral_pa2");
    v.require(strictly(&hb, false), format!("1.5–3 MHz integral strictly decreasing: {}", fmt(&hb)));
}

fn depth_criteria(spec: &StudySpec) -> Option<StudyOutcome> {
    let (outcome, took, err) = study(StudyKind::Depth, spec.clone());
    let mut c5 = Verdict::new();
    if let Some(e) = &err {
        c5.require(false, format!("study error: {e}"));
    }
    if let Some(o) = &outcome {
        depth_trends(&o.report, &mut c5);
        c5.note(format!("array refocused on each absorber; study took {:.1} s", took.as_secs_f64()));
    }
    // supplementary: the array held at the shallowest focus, clear of the skull
    let mut fixed = spec.clone();
    fixed.pipeline.array.fixed_focus_depth = Some(1.1e-3);
    if let (Some(o), _, None) = study(StudyKind::Depth, fixed) {
        let mut v = Verdict::new();
        depth_trends(&o.report, &mut v);
        c5.note(format!("fixed focus at 1.1 mm: trends {}", if v.pass { "hold" } else { "do not hold" }));
        for d in v.details {
            c5.note(format!("  {d}"));
        }
    }
    report(5, "depth trends", c5);
    outcome
}

fn oracle_criteria(spec: &StudySpec) {
    let t = Instant::now();
    let acoustic = [check_plane_wave(None), check_n_wave(None), check_linearity(None), check_pml_leakage(None)];
    let took = t.elapsed();
    let mut c6 = Verdict::new();
    c6.checks(&acoustic);
    c6.require(took < Duration::from_secs(60), format!("combined runtime {:.2} s (< 60 s)", took.as_secs_f64()));
    report(6, "acoustic solver oracles", c6);

    let t = Instant::now();
    let optics = [check_beer_lambert(), check_rte_vs_mc(&spec.validation, spec.seed)];
    let took = t.elapsed();
    let mut c7 = Verdict::new();
    c7.checks(&optics);
    c7.require(took < Duration::from_secs(120), format!("runtime {:.2} s (< 2 min)", took.as_secs_f64()));
    report(7, "optics oracles", c7);

    let mut c8 = Verdict::new();
    c8.checks(&[check_parseval(), check_sinusoid_ppp(), check_y_intercept(), check_band_power_additivity()]);
    report(8, "analysis oracles", c8);

    let mut c9 = Verdict::new();
    c9.checks(&[check_mpe(), check_confinement_times()]);
    report(9, "safety and confinement formulas", c9);
}

fn reproducibility(spec: &StudySpec, first: Option<StudyOutcome>) {
    let mut c10 = Verdict::new();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().expect("thread pool");
    let again = pool.install(|| run_study(&StudySpec { kind: StudyKind::Depth, ..spec.clone() }));
    match (first, again) {
        (Some(a), Ok(b)) => {
            c10.require(a.report.table.to_csv() == b.report.table.to_csv(), "depth feature table byte-identical across runs");
            c10.require(a.report.to_json() == b.report.to_json(), "depth report.json byte-identical across runs");
            let same_traces = a.artifacts.iter().zip(&b.artifacts).all(|(x, y)| x.trace == y.trace && x.spectrum == y.spectrum);
            c10.require(same_traces, "traces and spectra identical");
            c10.note("second run on a 2-thread pool");
        }
        (None, _) => c10.require(false, "first depth run failed"),
        (_, Err(e)) => c10.require(false, format!("second depth run failed: {e}")),
    }
    report(10, "reproducibility", c10);
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; nothing here takes arguments
    let spec = StudySpec::default();
    let t = Instant::now();
    oracle_criteria(&spec);
    size_criteria(&spec);
    concentration_criteria(&spec);
    let depth = depth_criteria(&spec);
    reproducibility(&spec, depth);
    println!("acceptance run finished in {:.1} s", t.elapsed().as_secs_f64());
}
