use std::fs;

use surfflow::analysis;
use surfflow::harness::{self, RunConfig, SolverKind};
use surfflow::phase_field::{self, PFParams, PhaseFieldSolver};
use surfflow::{Domain, SurfaceGraph, Vec2};

fn sharp_config(problem: u32, nodes: usize, out: &std::path::Path) -> RunConfig {
    RunConfig {
        problem,
        solver: SolverKind::Sharp,
        nodes,
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn sharp_runs_are_bitwise_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    harness::run(&sharp_config(4, 128, &a)).unwrap();
    harness::run(&sharp_config(4, 128, &b)).unwrap();
    for file in ["contours.csv", "snapshots.csv", "diagnostics.csv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn self_comparison_is_zero_and_comparison_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("m128");
    let b = dir.path().join("m200");
    harness::run(&sharp_config(2, 128, &a)).unwrap();
    harness::run(&sharp_config(2, 200, &b)).unwrap();

    let same = harness::compare_runs(&a, &a).unwrap();
    assert_eq!(same.samples.len(), harness::SAMPLE_COUNT);
    assert!(same.samples.iter().all(|(_, d)| *d == 0.0));
    assert_eq!(same.l2_norm, 0.0);

    let ab = harness::compare_runs(&a, &b).unwrap();
    let ba = harness::compare_runs(&b, &a).unwrap();
    for (x, y) in ab.samples.iter().zip(&ba.samples) {
        assert!((x.1 - y.1).abs() <= 1e-12);
    }
    // two resolutions of the same flow stay close
    assert!(ab.equil < 5e-3, "{}", ab.equil);
    assert!(ab.l2_norm > 0.0 && ab.l2_norm < 1e-2);
}

#[test]
fn snapshots_follow_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p3");
    harness::run(&sharp_config(3, 96, &out)).unwrap();
    let spec = harness::problem(3).unwrap();
    let text = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    let mut times: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    times.dedup();
    assert_eq!(times, spec.snapshot_times);
}

#[test]
fn missing_run_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let err = harness::compare_runs(&dir.path().join("x"), &dir.path().join("y")).unwrap_err();
    assert!(matches!(err, surfflow::Error::MissingData(_)));
}

#[test]
fn summary_reports_area_conservation_of_sharp_runs() {
    let dir = tempfile::tempdir().unwrap();
    let summary = harness::run(&sharp_config(1, 200, &dir.path().join("p1"))).unwrap();
    let reference = summary.get_f64("reference_area").unwrap();
    let dev = summary.get_f64("max_area_deviation").unwrap();
    assert!(dev / reference < 5e-3, "{dev} of {reference}");
    assert!(summary.get_f64("steps").unwrap() > 0.0);
}

#[test]
fn phase_field_conserves_mass_and_dissipates_energy_on_a_saddle() {
    let spec = harness::problem(4).unwrap();
    let config = RunConfig {
        problem: 4,
        solver: SolverKind::Phase,
        epsilon: 0.1,
        macro_n: 4,
        init_nodes: 1000,
        ..RunConfig::default()
    };
    let (_, state, params) = harness::phase_initial_state(&config).unwrap();
    let mut solver = PhaseFieldSolver::new(&spec.surface, params, state).unwrap();
    let mut energies = vec![solver.energy()];
    let mut vertices = solver.state().mesh.vertex_count();
    for _ in 0..30 {
        let r = solver.advance(f64::INFINITY).unwrap();
        let drift = (r.mean_phi - params.alpha).abs();
        // exact on a fixed mesh; refinement changes the lumped quadrature
        if r.n_vertices == vertices {
            assert!(drift < 1e-12, "{drift}");
        } else {
            assert!(drift < 1e-6, "{drift}");
        }
        energies.push(r.energy);
        vertices = r.n_vertices;
    }
    assert!(energies.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-3)));
    assert!(energies[30] < energies[0]);
    assert!(solver.max_abs_phi() <= 1.05);
    let contour = harness::phase_contour(solver.state()).unwrap();
    assert!(contour.len() > 50);
}

#[test]
fn flat_circle_zero_contour_stays_on_the_circle() {
    let surface = SurfaceGraph::flat(Domain::square(2.0));
    let eps = 0.1;
    let params = PFParams::new(eps);
    let circle: Vec<Vec2> = (0..2000)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / 2000.0;
            Vec2::new(t.cos(), t.sin())
        })
        .collect();
    let coarse = surfflow::mesh::macro_mesh(&surface.domain, 4).unwrap();
    let mesh = phase_field::initial_mesh(&coarse, &circle, &surface, &params).unwrap();
    let (state, alpha) = phase_field::initialize(&circle, &mesh, &surface, eps).unwrap();
    let params = PFParams { alpha, ..params };
    let mut solver = PhaseFieldSolver::new(&surface, params, state).unwrap();
    solver.advance_to(0.2, |_, _| Ok(())).unwrap();
    let contour = harness::phase_contour(solver.state()).unwrap();
    let exact = analysis::Polyline::closed(circle).unwrap();
    let d = analysis::hausdorff(&contour, &exact).unwrap();
    assert!(d < eps / 10.0, "{d}");
}
