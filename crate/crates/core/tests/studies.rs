//! Coarse end-to-end runs: every study must reproduce the stand-alone pipeline
//! run for each of its entries, and its report must be reproducible.

use arpam::experiments::{run_study, Pipeline, RunSpec, Status, StudyKind, StudySpec};
use arpam::optics::directions::DirectionSpec;

fn coarse(kind: StudyKind) -> StudySpec {
    let mut s = StudySpec::with_kind(kind);
    s.pipeline.phantom.grid_spacing = 230e-6;
    s.pipeline.rte.directions = DirectionSpec::Geodesic { level: 1 };
    s.pipeline.solver.t_end = 4e-6;
    s.pipeline.array.elements = 13;
    s.sizes = vec![234e-6, 468e-6];
    s.concentrations = vec![0.5, 5.0];
    s.depths = vec![1.1e-3, 1.5e-3];
    s
}

fn assert_runs_compose(spec: &StudySpec) {
    let outcome = run_study(spec).unwrap();
    let report = &outcome.report;
    assert!(report.error.is_none(), "{:?}", report.error);
    assert_eq!(report.runs.len(), outcome.artifacts.len());
    let pipeline = Pipeline::new(spec.pipeline.clone()).unwrap();
    for (rec, art) in report.runs.iter().zip(&outcome.artifacts) {
        let run = RunSpec {
            material: rec.material,
            concentration: rec.concentration_mol_per_l,
            radius: rec.radius_m,
            depth: rec.depth_m,
            beam_radius: rec.beam_radius_m,
        };
        let alone = pipeline.run(&run).unwrap();
        assert_eq!(alone.features, rec.features, "{}", rec.label);
        assert_eq!(alone.trace, art.trace, "{}", rec.label);
        assert_eq!(rec.trace_file, format!("trace_{}.csv", art.stem));
    }
}

#[test]
fn size_study_composes_pipeline_runs() {
    let spec = coarse(StudyKind::Size);
    assert_runs_compose(&spec);
    let report = run_study(&spec).unwrap().report;
    let ppp = report.assertions.iter().find(|a| a.name == "ppp_increases_with_radius").unwrap();
    assert_eq!(ppp.status, Status::Pass);
    // two sizes cannot determine a three-parameter fit
    assert_eq!(report.fit.as_ref().map(|f| f.status), Some(Status::Unavailable));
}

#[test]
fn concentration_study_composes_pipeline_runs() {
    let spec = coarse(StudyKind::Concentration);
    assert_runs_compose(&spec);
    let report = run_study(&spec).unwrap().report;
    let pair = report.pair.as_ref().unwrap();
    assert!((pair.ppp_ratio / pair.expected_ratio - 1.0).abs() < 0.2);
    let reg = report.regression.as_ref().unwrap();
    assert!(reg.r_squared > 0.99);
}

#[test]
fn depth_study_composes_pipeline_runs() {
    let spec = coarse(StudyKind::Depth);
    assert_runs_compose(&spec);
    let report = run_study(&spec).unwrap().report;
    let arrival = report.assertions.iter().find(|a| a.name == "arrival_time_increases_with_depth").unwrap();
    assert_eq!(arrival.status, Status::Pass);
}

#[test]
fn reports_are_reproducible() {
    let spec = coarse(StudyKind::Depth);
    let a = run_study(&spec).unwrap();
    let b = run_study(&spec).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.table.to_csv(), b.report.table.to_csv());
    assert_eq!(a.report.provenance.config_hash, spec.config_hash());
}

#[test]
fn zero_concentration_is_flagged_not_fatal() {
    let mut spec = coarse(StudyKind::Concentration);
    spec.concentrations = vec![0.0, 0.5, 5.0];
    let report = run_study(&spec).unwrap().report;
    assert!(report.error.is_none());
    assert_eq!(report.runs[0].features.ppp, 0.0);
    assert!(report.runs[0].flag.is_some());
}

#[test]
fn empty_variable_list_is_rejected() {
    let mut spec = coarse(StudyKind::Size);
    spec.sizes.clear();
    assert!(run_study(&spec).is_err());
}

#[test]
fn validation_reports_forced_instability_and_missing_monte_carlo() {
    let mut spec = StudySpec::with_kind(StudyKind::Validation);
    spec.validation.mc_photons = 0;
    spec.validation.solver_dt = Some(1e-6);
    let report = run_study(&spec).unwrap().report;
    let status = |n: &str| report.checks.iter().find(|c| c.name == n).unwrap().status;
    assert_eq!(status("optics.rte_vs_mc"), Status::Unavailable);
    assert_eq!(status("acoustics.plane_wave"), Status::Fail);
    assert_eq!(status("analysis.parseval"), Status::Pass);
    assert_eq!(report.status, Status::Fail);
}
