//! Benchmark problems, run orchestration and the comparison of the two
//! solvers.
//!
//! A run writes a directory of CSV files plus a flat `key = value` summary:
//!
//! * `contours.csv` (`sample, t, point, x, y`): the interface at 101 uniform
//!   sample times, used by [`compare_runs`].
//! * `snapshots.csv`: the interface at the figure snapshot times.
//! * `diagnostics.csv`: one row per time step.
//! * `phi_<k>.csv` (phase runs): nodal values at snapshot `k`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Polyline};
use crate::error::{Error, Result};
use crate::mesh::{macro_mesh, TriMesh};
use crate::phase_field::{
    self, Constraint, LaplacianMode, Mobility, PFParams, PhaseFieldSolver, PhaseState,
};
use crate::sharp_flow::{self, ClosedCurve, CurvatureExponent, FlowParams};
use crate::surface::{Domain, Shape, SurfaceGraph, Vec2};

/// Number of uniform comparison samples per run, including both end points.
pub const SAMPLE_COUNT: usize = 101;

/// One of the four benchmark problems.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub id: u32,
    pub surface: SurfaceGraph,
    pub snapshot_times: Vec<f64>,
    pub final_time: f64,
}

pub fn problem(id: u32) -> Result<ProblemSpec> {
    let (snapshot_times, final_time) = match id {
        1 => (vec![0.0, 0.05, 0.1, 0.2, 0.4, 1.0], 1.0),
        2 => (vec![0.0, 0.25, 0.5, 1.0, 2.0], 2.0),
        3 => (vec![0.0, 0.5, 1.0, 2.0, 4.0], 4.0),
        4 => (vec![0.0, 0.25, 0.5, 1.0, 2.4], 2.4),
        other => return Err(Error::InvalidProblem(other)),
    };
    Ok(ProblemSpec {
        id,
        surface: SurfaceGraph::builtin(id)?,
        snapshot_times,
        final_time,
    })
}

impl ProblemSpec {
    /// Initial parametrization `X₀(l)`, `l ∈ [0, 1)`.
    pub fn initial_point(&self, l: f64) -> Vec2 {
        let t = std::f64::consts::TAU * l;
        match self.id {
            1 => {
                let r = 1.0 + 0.65 * (10.0 * std::f64::consts::PI * l).cos();
                Vec2::new(0.25 + r * t.cos(), -0.25 + r * t.sin())
            }
            2 => Vec2::new(t.cos(), 0.1 + t.sin()),
            3 => Vec2::new(t.cos(), -0.2 + t.sin()),
            _ => Vec2::new(0.5 * t.cos(), t.sin()),
        }
    }

    pub fn initial_curve(&self, m: usize) -> Result<ClosedCurve> {
        let curve = ClosedCurve::from_parametrization(m, |l| self.initial_point(l))?;
        if let Some(p) = curve.nodes().iter().find(|p| !self.surface.contains(p)) {
            return Err(Error::Domain { x: p.x, y: p.y });
        }
        Ok(curve)
    }

    pub fn curve_formula(&self) -> &'static str {
        match self.id {
            1 => "(1/4 + r(l) cos 2pi l, -1/4 + r(l) sin 2pi l), r(l) = 1 + 0.65 cos 10pi l",
            2 => "(cos 2pi l, 1/10 + sin 2pi l)",
            3 => "(cos 2pi l, -1/5 + sin 2pi l)",
            _ => "(1/2 cos 2pi l, sin 2pi l)",
        }
    }

    pub fn height_formula(&self) -> &'static str {
        match self.id {
            1 => "sqrt(4 - x^2 - y^2)",
            2 => "y^2",
            3 => "sin(pi y)",
            _ => "x^2 - y^4",
        }
    }

    /// Uniform comparison times `k T / 100`.
    pub fn sample_times(&self) -> Vec<f64> {
        (0..SAMPLE_COUNT)
            .map(|k| self.final_time * k as f64 / (SAMPLE_COUNT - 1) as f64)
            .collect()
    }

    /// Sorted union of the sample and snapshot times.
    pub fn output_times(&self) -> Vec<f64> {
        let mut times = self.sample_times();
        for &t in &self.snapshot_times {
            if !times.iter().any(|s| (s - t).abs() < 1e-12) {
                times.push(t);
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times
    }

    /// Coarse structured mesh of the problem domain.
    pub fn macro_mesh(&self, n: usize) -> Result<TriMesh> {
        macro_mesh(&self.surface.domain, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Sharp,
    Phase,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sharp" => Ok(SolverKind::Sharp),
            "phase" => Ok(SolverKind::Phase),
            other => Err(Error::InvalidArgument(format!("unknown solver `{other}`"))),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Sharp => "sharp",
            SolverKind::Phase => "phase",
        })
    }
}

/// Flat run configuration; every key has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: u32,
    pub solver: SolverKind,
    pub epsilon: f64,
    /// Node count of the sharp-interface curve.
    pub nodes: usize,
    pub beta: f64,
    pub sigma: f64,
    pub eta: f64,
    pub penalty_c: f64,
    pub laplacian: LaplacianMode,
    pub mobility: Mobility,
    pub constraint: Constraint,
    /// Subdivisions of the macro mesh.
    pub macro_n: usize,
    pub tau_factor: f64,
    /// Polygon resolution used to initialize the phase field.
    pub init_nodes: usize,
    /// Also write the final mesh as CSV tables.
    pub write_mesh: bool,
    pub out: PathBuf,
    /// Reserved; the solvers are deterministic.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: 1,
            solver: SolverKind::Sharp,
            epsilon: 0.05,
            nodes: 200,
            beta: 1.0,
            sigma: 1.0,
            eta: 0.01,
            penalty_c: 2000.0,
            laplacian: LaplacianMode::default(),
            mobility: Mobility::default(),
            constraint: Constraint::default(),
            macro_n: 8,
            tau_factor: 1.0,
            init_nodes: 4000,
            write_mesh: false,
            out: PathBuf::from("runs/out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        problem(self.problem)?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.nodes < 64 {
            return bad("nodes must be at least 64");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.beta > 0.0 && self.sigma > 0.0) {
            return bad("beta and sigma must be positive");
        }
        if self.macro_n < 1 || self.init_nodes < 64 {
            return bad("macro_n must be positive and init_nodes at least 64");
        }
        Ok(())
    }

    pub fn phase_params(&self) -> Result<PFParams> {
        let (beta_t, sigma_t) = analysis::convert_coefficients(self.beta, self.sigma)?;
        let params = PFParams {
            eta: self.eta,
            beta_t,
            sigma_t,
            penalty_c: self.penalty_c,
            laplacian_mode: self.laplacian,
            mobility: self.mobility,
            constraint: self.constraint,
            tau_factor: self.tau_factor,
            ..PFParams::new(self.epsilon)
        };
        params.validate()?;
        Ok(params)
    }

    pub fn flow_params(&self) -> FlowParams {
        FlowParams {
            beta: self.beta,
            sigma: self.sigma,
            ..FlowParams::default()
        }
    }

    fn context(&self) -> String {
        match self.solver {
            SolverKind::Sharp => format!("problem {} sharp M = {}", self.problem, self.nodes),
            SolverKind::Phase => format!(
                "problem {} phase eps = {} ({})",
                self.problem, self.epsilon, self.laplacian
            ),
        }
    }
}

/// Scalar results of a run, stored as `summary.txt`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub entries: Vec<(String, String)>,
}

impl RunSummary {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.get(key)
            .ok_or_else(|| Error::MissingData(format!("summary key `{key}`")))?
            .parse()
            .map_err(|_| Error::MissingData(format!("summary key `{key}` is not a number")))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|line| line.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        RunSummary { entries }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("summary.txt");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join("summary.txt");
        fs::write(&path, self.render()).map_err(|e| Error::io(&path, e))
    }
}

type CsvOut = csv::Writer<fs::File>;

fn csv_writer(path: &Path, header: &[&str]) -> Result<CsvOut> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn write_contour(w: &mut CsvOut, sample: usize, t: f64, points: &[Vec2]) -> Result<()> {
    for (k, p) in points.iter().enumerate() {
        w.write_record(&[
            sample.to_string(),
            t.to_string(),
            k.to_string(),
            p.x.to_string(),
            p.y.to_string(),
        ])?;
    }
    Ok(())
}

/// Reads a contour table written by a run: `(t, closed polyline)` per sample.
pub fn read_contours(path: &Path) -> Result<Vec<(f64, Polyline)>> {
    if !path.exists() {
        return Err(Error::MissingData(format!("{} not found", path.display())));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut out: Vec<(usize, f64, Vec<Vec2>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let field = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::MissingData(format!("malformed row in {}", path.display())))
        };
        let sample = field(0)? as usize;
        let (t, x, y) = (field(1)?, field(3)?, field(4)?);
        match out.last_mut() {
            Some(last) if last.0 == sample => last.2.push(Vec2::new(x, y)),
            _ => out.push((sample, t, vec![Vec2::new(x, y)])),
        }
    }
    out.into_iter()
        .map(|(_, t, pts)| Ok((t, Polyline::closed(pts)?)))
        .collect()
}

/// Writes the mesh as `vertices.csv` (`id, x, y`) and `triangles.csv`
/// (`id, v0, v1, v2, generation`).
pub fn write_mesh(mesh: &TriMesh, dir: &Path) -> Result<()> {
    let mut w = csv_writer(&dir.join("vertices.csv"), &["id", "x", "y"])?;
    for (i, p) in mesh.vertices.iter().enumerate() {
        w.write_record(&[i.to_string(), p.x.to_string(), p.y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    let mut w = csv_writer(&dir.join("triangles.csv"), &["id", "v0", "v1", "v2", "generation"])?;
    for (i, (t, g)) in mesh.triangles.iter().zip(&mesh.generation).enumerate() {
        w.write_record(&[
            i.to_string(),
            t[0].to_string(),
            t[1].to_string(),
            t[2].to_string(),
            g.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))
}

fn is_sample(t: f64, samples: &[f64]) -> Option<usize> {
    samples.iter().position(|s| (s - t).abs() < 1e-12)
}

fn is_snapshot(t: f64, spec: &ProblemSpec) -> Option<usize> {
    spec.snapshot_times.iter().position(|s| (s - t).abs() < 1e-12)
}

/// Executes one run and writes its artifacts into `config.out`.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let dir = &config.out;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, config.to_toml()).map_err(|e| Error::io(&config_path, e))?;
    let start = Instant::now();
    let result = match config.solver {
        SolverKind::Sharp => run_sharp(config),
        SolverKind::Phase => run_phase(config),
    };
    let mut summary = result.map_err(|e| e.in_run(config.context()))?;
    summary.set("runtime_s", format!("{:.3}", start.elapsed().as_secs_f64()));
    summary.save(dir)?;
    info!("{} finished in {:.1} s", config.context(), start.elapsed().as_secs_f64());
    Ok(summary)
}

/// Enclosed surface area of the exact initial curve.
fn reference_area(spec: &ProblemSpec, nodes: usize) -> Result<f64> {
    let curve = spec.initial_curve(nodes)?;
    sharp_flow::enclosed_surface_area(&curve, &spec.surface)
}

fn area_stats(areas: &[f64], reference: f64) -> (f64, f64) {
    let devs: Vec<f64> = areas.iter().map(|a| (a - reference).abs()).collect();
    (
        devs.iter().copied().fold(0.0, f64::max),
        devs.iter().sum::<f64>() / devs.len().max(1) as f64,
    )
}

fn run_sharp(config: &RunConfig) -> Result<RunSummary> {
    let spec = problem(config.problem)?;
    let surface = &spec.surface;
    let params = config.flow_params();
    let dir = &config.out;
    let samples = spec.sample_times();
    let mut contours = csv_writer(&dir.join("contours.csv"), &["sample", "t", "point", "x", "y"])?;
    let mut snapshots = csv_writer(&dir.join("snapshots.csv"), &["sample", "t", "point", "x", "y"])?;
    let mut diagnostics = csv_writer(
        &dir.join("diagnostics.csv"),
        &["t", "area", "length", "max_speed", "steps"],
    )?;

    let mut curve = sharp_flow::redistribute_smooth(&spec.initial_curve(config.nodes)?);
    let reference = reference_area(&spec, config.init_nodes)?;
    let mut t = 0.0;
    let mut steps = 0;
    let mut areas = Vec::new();
    let mut max_speed = f64::INFINITY;
    for target in spec.output_times() {
        if target > t {
            let (next, n) = sharp_flow::evolve(curve, surface, &params, t, target)?;
            curve = next;
            steps += n;
            t = target;
        }
        let geom = sharp_flow::discrete_geometry(&curve, surface, params.exponent)?;
        max_speed = sharp_flow::normal_velocities(&geom, &params)?
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()));
        let area = sharp_flow::enclosed_surface_area(&curve, surface)?;
        if let Some(k) = is_sample(target, &samples) {
            write_contour(&mut contours, k, target, curve.nodes())?;
            areas.push(area);
            diagnostics.write_record(&[
                target.to_string(),
                area.to_string(),
                curve.length().to_string(),
                max_speed.to_string(),
                steps.to_string(),
            ])?;
        }
        if let Some(k) = is_snapshot(target, &spec) {
            write_contour(&mut snapshots, k, target, curve.nodes())?;
        }
    }
    for w in [&mut contours, &mut snapshots, &mut diagnostics] {
        w.flush().map_err(|e| Error::io(dir, e))?;
    }
    let (max_dev, mean_dev) = area_stats(&areas, reference);
    let mut summary = RunSummary::default();
    summary.set("problem", config.problem);
    summary.set("solver", "sharp");
    summary.set("nodes", config.nodes);
    summary.set("final_time", spec.final_time);
    summary.set("steps", steps);
    summary.set("reference_area", reference);
    summary.set("max_area_deviation", max_dev);
    summary.set("mean_area_deviation", mean_dev);
    summary.set("final_max_speed", max_speed);
    Ok(summary)
}

/// Prepares the initial phase-field state of a problem: adapted mesh, tanh
/// profile and the parameters with α set from the initial condition.
pub fn phase_initial_state(config: &RunConfig) -> Result<(ProblemSpec, PhaseState, PFParams)> {
    let spec = problem(config.problem)?;
    let mut params = config.phase_params()?;
    let polygon = spec.initial_curve(config.init_nodes)?.into_nodes();
    let coarse = spec.macro_mesh(config.macro_n)?;
    let mesh = phase_field::initial_mesh(&coarse, &polygon, &spec.surface, &params)?;
    let (state, alpha) = phase_field::initialize(&polygon, &mesh, &spec.surface, params.epsilon)?;
    params.alpha = alpha;
    Ok((spec, state, params))
}

/// The longest closed zero contour of a state.
pub fn phase_contour(state: &PhaseState) -> Result<Polyline> {
    let contours = analysis::extract_zero_contour(&state.mesh, &state.phi.values);
    if contours.len() > 1 {
        info!(
            "{} zero contours at t = {:.4}; using the longest closed one",
            contours.len(),
            state.time
        );
    }
    analysis::dominant_contour(&contours)
        .cloned()
        .ok_or_else(|| Error::MissingData(format!("no closed zero contour at t = {}", state.time)))
}

fn run_phase(config: &RunConfig) -> Result<RunSummary> {
    let (spec, state, params) = phase_initial_state(config)?;
    let surface = &spec.surface;
    let dir = &config.out;
    let samples = spec.sample_times();
    let reference = reference_area(&spec, config.init_nodes)?;
    let mut contours = csv_writer(&dir.join("contours.csv"), &["sample", "t", "point", "x", "y"])?;
    let mut snapshots = csv_writer(&dir.join("snapshots.csv"), &["sample", "t", "point", "x", "y"])?;
    let mut diagnostics = csv_writer(
        &dir.join("diagnostics.csv"),
        &["t", "mean_phi", "energy", "multiplier", "dt", "n_vertices"],
    )?;

    let mut solver = PhaseFieldSolver::new(surface, params, state)?;
    let alpha = params.alpha;
    let mut energies = vec![solver.energy()];
    let mut max_drift = (solver.mean_phi() - alpha).abs();
    let mut write_error = None;
    let mut areas = Vec::new();
    let mut equilibrium_time: Option<f64> = None;
    let mut interface_lost: Option<f64> = None;
    for target in spec.output_times() {
        solver.advance_to(target, |s, r| {
            energies.push(r.energy);
            max_drift = max_drift.max((r.mean_phi - alpha).abs());
            if let Err(e) = diagnostics.write_record(&[
                r.time.to_string(),
                r.mean_phi.to_string(),
                r.energy.to_string(),
                r.multiplier.to_string(),
                r.dt.to_string(),
                r.n_vertices.to_string(),
            ]) {
                write_error.get_or_insert(e);
            }
            if equilibrium_time.is_none() && s.steps() > 10 && r.rate < EQUILIBRIUM_RATE {
                equilibrium_time = Some(r.time);
            }
            Ok(())
        })?;
        if let Some(e) = write_error.take() {
            return Err(e.into());
        }
        let state = solver.state();
        // the enclosed phase can dissolve, e.g. without the degenerate mobility
        let contour = match phase_contour(state) {
            Ok(c) => Some(c),
            Err(Error::MissingData(_)) => {
                if interface_lost.is_none() {
                    warn!("zero contour vanished at t = {target}");
                    interface_lost = Some(target);
                }
                None
            }
            Err(e) => return Err(e),
        };
        if let Some(k) = is_sample(target, &samples) {
            match &contour {
                Some(c) => {
                    write_contour(&mut contours, k, target, &c.points)?;
                    areas.push(sharp_flow::polygon_surface_area(&c.points, surface)?);
                }
                None => areas.push(0.0),
            }
        }
        if let Some(k) = is_snapshot(target, &spec) {
            if let Some(c) = &contour {
                write_contour(&mut snapshots, k, target, &c.points)?;
            }
            write_phi(state, &dir.join(format!("phi_{k}.csv")))?;
        }
    }
    for w in [&mut contours, &mut snapshots, &mut diagnostics] {
        w.flush().map_err(|e| Error::io(dir, e))?;
    }
    if config.write_mesh {
        write_mesh(&solver.state().mesh, dir)?;
    }
    let (max_dev, mean_dev) = area_stats(&areas, reference);
    let mut summary = RunSummary::default();
    summary.set("problem", config.problem);
    summary.set("solver", "phase");
    summary.set("epsilon", config.epsilon);
    summary.set("laplacian", config.laplacian);
    summary.set("mobility", config.mobility);
    summary.set("final_time", spec.final_time);
    summary.set("steps", solver.steps());
    summary.set("tau", solver.tau());
    summary.set("alpha", alpha);
    summary.set("final_vertices", solver.state().mesh.vertex_count());
    summary.set("reference_area", reference);
    summary.set("max_area_deviation", max_dev);
    summary.set("mean_area_deviation", mean_dev);
    summary.set("max_abs_phi", solver.max_abs_phi());
    summary.set("max_mean_drift", max_drift);
    summary.set("max_energy_rise", max_energy_rise(&energies, 10));
    summary.set("initial_energy", energies[0]);
    summary.set("final_energy", energies[energies.len() - 1]);
    summary.set("final_rate", solver.last_rate());
    summary.set(
        "equilibrium_time",
        equilibrium_time.map_or("none".to_string(), |t| t.to_string()),
    );
    summary.set(
        "interface_lost_time",
        interface_lost.map_or("none".to_string(), |t| t.to_string()),
    );
    Ok(summary)
}

/// Threshold on `max |φⁿ⁺¹ − φⁿ| / τ` declaring equilibrium.
pub const EQUILIBRIUM_RATE: f64 = 1e-4;

/// Largest relative per-step energy increase after the first `skip` steps.
pub fn max_energy_rise(energies: &[f64], skip: usize) -> f64 {
    energies
        .windows(2)
        .skip(skip)
        .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

fn write_phi(state: &PhaseState, path: &Path) -> Result<()> {
    let mut w = csv_writer(path, &["t", "vertex_id", "x", "y", "phi"])?;
    for (i, (p, v)) in state.mesh.vertices.iter().zip(&state.phi.values).enumerate() {
        w.write_record(&[
            state.time.to_string(),
            i.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            v.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Hausdorff distances between two runs at their common sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub samples: Vec<(f64, f64)>,
    pub l2_norm: f64,
    /// Distance at the final time.
    pub equil: f64,
}

pub fn compare_runs(a: &Path, b: &Path) -> Result<Comparison> {
    let ca = read_contours(&a.join("contours.csv"))?;
    let cb = read_contours(&b.join("contours.csv"))?;
    if ca.len() != cb.len() || ca.iter().zip(&cb).any(|(x, y)| (x.0 - y.0).abs() > 1e-9) {
        return Err(Error::MissingData(format!(
            "sample times of {} and {} differ",
            a.display(),
            b.display()
        )));
    }
    let samples = ca
        .iter()
        .zip(&cb)
        .map(|((t, pa), (_, pb))| Ok((*t, analysis::hausdorff(pa, pb)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        l2_norm: analysis::l2_time_norm(&samples)?,
        equil: samples[samples.len() - 1].1,
        samples,
    })
}

/// Directory of the sharp benchmark run of a problem.
pub fn sharp_dir(base: &Path, problem: u32, nodes: usize) -> PathBuf {
    base.join(format!("p{problem}")).join(format!("sharp_m{nodes}"))
}

/// Directory of a phase-field run of a problem.
pub fn phase_dir(base: &Path, problem: u32, epsilon: f64, mode: LaplacianMode) -> PathBuf {
    base.join(format!("p{problem}"))
        .join(format!("phase_eps{epsilon}_{mode}"))
}

/// Runs `config` unless its directory already holds a summary.
pub fn ensure_run(config: &RunConfig) -> Result<RunSummary> {
    match RunSummary::load(&config.out) {
        Ok(summary) if config.out.join("contours.csv").exists() => Ok(summary),
        _ => run(config),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub problem: u32,
    pub epsilon: f64,
    pub l2_norm: f64,
    pub equil: f64,
}

/// Table-style comparison of phase-field runs against the sharp benchmark,
/// triggering missing runs. `template` supplies the remaining run settings.
pub fn compare(
    problem_id: u32,
    epsilons: &[f64],
    nodes: usize,
    base: &Path,
    template: &RunConfig,
) -> Result<Vec<TableRow>> {
    problem(problem_id)?;
    let sharp = RunConfig {
        problem: problem_id,
        solver: SolverKind::Sharp,
        nodes,
        out: sharp_dir(base, problem_id, nodes),
        ..template.clone()
    };
    ensure_run(&sharp)?;
    let mut rows = Vec::new();
    for &epsilon in epsilons {
        let phase = RunConfig {
            problem: problem_id,
            solver: SolverKind::Phase,
            epsilon,
            out: phase_dir(base, problem_id, epsilon, template.laplacian),
            ..template.clone()
        };
        ensure_run(&phase)?;
        let c = compare_runs(&phase.out, &sharp.out)?;
        rows.push(TableRow {
            problem: problem_id,
            epsilon,
            l2_norm: c.l2_norm,
            equil: c.equil,
        });
    }
    Ok(rows)
}

pub fn write_table(rows: &[TableRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv_writer(path, &["problem", "epsilon", "l2_norm", "equil"])?;
    for r in rows {
        w.write_record(&[
            r.problem.to_string(),
            r.epsilon.to_string(),
            r.l2_norm.to_string(),
            r.equil.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One line of the constants report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    /// The value must differ from `expected` by more than `tolerance`
    /// (used to confirm that an oracle discriminates between variants).
    pub must_differ: bool,
}

impl Check {
    pub fn passed(&self) -> bool {
        let close = (self.value - self.expected).abs() <= self.tolerance;
        close != self.must_differ
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsReport {
    pub checks: Vec<Check>,
}

impl ConstantsReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<4} {:<44} value {:<22.15} {} {:<22.15} tol {:e}",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                if c.must_differ { "differs from" } else { "expected" },
                c.expected,
                c.tolerance
            );
        }
        out
    }
}

/// Mean discrete geodesic curvature of a closed curve.
fn mean_geodesic_curvature(
    curve: &ClosedCurve,
    surface: &SurfaceGraph,
    exponent: CurvatureExponent,
) -> Result<f64> {
    let geom = sharp_flow::discrete_geometry(curve, surface, exponent)?;
    Ok(geom.nodes.iter().map(|n| n.geodesic_curvature).sum::<f64>() / geom.nodes.len() as f64)
}

/// Profile constants, coefficient round trips and the geodesic curvature
/// oracles for both exponent variants.
pub fn verify_constants() -> Result<ConstantsReport> {
    let mut checks = Vec::new();
    let c = analysis::profile_constants(4001)?;
    let mut check = |name: &str, value: f64, expected: f64, tolerance: f64, must_differ: bool| {
        checks.push(Check {
            name: name.to_string(),
            value,
            expected,
            tolerance,
            must_differ,
        })
    };
    let mut push = |name: &str, value: f64, expected: f64, tolerance: f64| {
        check(name, value, expected, tolerance, false)
    };
    push("c1 = int G (Phi')^2", c.c1, analysis::ProfileConstants::C1, 1e-8);
    push("c2 = int (Phi')^2", c.c2, analysis::ProfileConstants::C2, 1e-8);
    push("c3 = int G Phi'", c.c3, analysis::ProfileConstants::C3, 1e-8);

    let (bt, st) = analysis::convert_coefficients(1.0, 1.0)?;
    push("beta~ for beta = 1", bt, 5.0 / (4.0 * std::f64::consts::SQRT_2), 1e-14);
    push("sigma~ for sigma = 1", st, 3.0 / (2.0 * std::f64::consts::SQRT_2), 1e-14);
    let (b, s) = analysis::physical_coefficients(bt, st)?;
    push("beta round trip", b, 1.0, 1e-14);
    push("sigma round trip", s, 1.0, 1e-14);

    // latitude r = 1 on the sphere of radius 2: k = cot(theta)/R
    let sphere = SurfaceGraph::builtin(1)?;
    let latitude = ClosedCurve::circle(Vec2::zeros(), 1.0, 512);
    let expected = 3f64.sqrt() / 2.0;
    // circle of radius 1 in the plane z = x/2, projected: k = 1
    let slope = 0.5;
    let plane = SurfaceGraph::new(Shape::Plane { slope: [slope, 0.0] }, Domain::square(3.0));
    let tilted = ClosedCurve::ellipse(Vec2::zeros(), 1.0 / (1.0 + slope * slope as f64).sqrt(), 1.0, 512);
    // the latitude cannot tell the exponents apart; the tilted plane can
    for (label, exponent, rejected) in [
        ("3/2", CurvatureExponent::ThreeHalves, false),
        ("cube root", CurvatureExponent::CubeRoot, true),
    ] {
        let k = mean_geodesic_curvature(&latitude, &sphere, exponent)?;
        check(&format!("sphere latitude k_g ({label})"), k, expected, 1e-3, false);
        let k = mean_geodesic_curvature(&tilted, &plane, exponent)?;
        let tol = if rejected { 0.05 } else { 1e-3 };
        check(&format!("tilted plane k_g ({label})"), k, 1.0, tol, rejected);
    }
    Ok(ConstantsReport { checks })
}

/// Renders the problem table.
pub fn problems_table() -> String {
    let mut out = String::from("id  final_time  snapshots                      X0(l)  |  h(x, y)\n");
    for id in 1..=4 {
        let spec = problem(id).expect("builtin problem");
        let snaps: Vec<String> = spec.snapshot_times.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(
            out,
            "{id:<3} {:<11} {:<30} {}  |  {}",
            spec.final_time,
            snaps.join(", "),
            spec.curve_formula(),
            spec.height_formula()
        );
    }
    out
}

/// Warns when the observed confinement bound is exceeded.
pub fn check_confinement(summary: &RunSummary) -> Result<f64> {
    let m = summary.get_f64("max_abs_phi")?;
    if m > 1.05 {
        warn!("max |phi| = {m} exceeds 1.05");
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_examples() {
        let p2 = problem(2).unwrap();
        assert!((p2.initial_point(0.0) - Vec2::new(1.0, 0.1)).norm() < 1e-15);
        let p4 = problem(4).unwrap();
        assert!((p4.initial_point(0.25) - Vec2::new(0.0, 1.0)).norm() < 1e-15);
        let p1 = problem(1).unwrap();
        assert!((p1.initial_point(0.0) - Vec2::new(1.9, -0.25)).norm() < 1e-15);
        assert!(matches!(problem(5), Err(Error::InvalidProblem(5))));
        assert!(matches!(problem(0), Err(Error::InvalidProblem(0))));
        for id in 1..=4 {
            let p = problem(id).unwrap();
            p.initial_curve(400).unwrap();
            assert!(p.snapshot_times.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(*p.snapshot_times.last().unwrap(), p.final_time);
            let samples = p.sample_times();
            assert_eq!(samples.len(), SAMPLE_COUNT);
            assert_eq!(samples[100], p.final_time);
            let out = p.output_times();
            assert!(out.windows(2).all(|w| w[0] < w[1]));
            assert!(p.snapshot_times.iter().all(|t| out.contains(t)));
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = RunConfig::from_toml("problem = 3\nsolver = \"phase\"\nepsilon = 0.1\nlaplacian = \"metric\"\n").unwrap();
        assert_eq!(c.problem, 3);
        assert_eq!(c.solver, SolverKind::Phase);
        assert_eq!(c.laplacian, LaplacianMode::Metric);
        assert_eq!(c.eta, 0.01);
        assert_eq!(c.penalty_c, 2000.0);
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(matches!(RunConfig::from_toml("problem = 7"), Err(Error::InvalidProblem(7))));
        assert!(matches!(RunConfig::from_toml("nodes = 10"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("unknown_key = 1"), Err(Error::Config(_))));
        let p = c.phase_params().unwrap();
        assert!((p.beta_t - 0.883883476).abs() < 1e-8);
    }

    #[test]
    fn summary_round_trip() {
        let mut s = RunSummary::default();
        s.set("a", 1.5);
        s.set("b", "x");
        s.set("a", 2.5);
        let back = RunSummary::parse(&s.render());
        assert_eq!(back, s);
        assert_eq!(back.get_f64("a").unwrap(), 2.5);
        assert!(back.get_f64("b").is_err());
        assert!(back.get_f64("missing").is_err());
    }

    #[test]
    fn energy_rise_skips_initial_steps() {
        let e = [10.0, 11.0, 9.0, 8.0, 8.004, 7.0];
        assert!((max_energy_rise(&e, 0) - 0.1).abs() < 1e-12);
        assert!((max_energy_rise(&e, 2) - 0.0005).abs() < 1e-12);
        assert_eq!(max_energy_rise(&e, 4), 0.0);
    }

    #[test]
    fn constants_report_passes() {
        let report = verify_constants().unwrap();
        assert!(report.all_passed(), "{}", report.render());
        assert!(report.render().lines().all(|l| l.starts_with("PASS")));
    }
}
