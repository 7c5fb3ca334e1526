//! Semi-implicit solver for the degenerate area-preserving Allen-Cahn
//! equation on a graph surface, with interface-driven mesh adaptation.
//!
//! Each step solves one linear system. The diffusion operator and the
//! linearized double-well term are implicit, the de Gennes factor, the
//! nonlocal multiplier and the area penalty are explicit.

use std::f64::consts::SQRT_2;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, Result};
use crate::fem::{self, CsrMatrix, SolverOptions};
use crate::geometry::{point_in_polygon, SegmentGrid};
use crate::mesh::{NodalField, TriMesh};
use crate::surface::{Mat2, SurfaceGraph, Vec2};

/// Half-width of the `|φ| < 0.99` band of the tanh profile, in units of ε.
pub const BAND_HALF_WIDTH: f64 = 3.742_931_736_450_157;
/// Distance between the `φ = ±0.9` level sets of the tanh profile, in units of ε.
pub const INTERFACE_WIDTH: f64 = 4.164_065_537_917_172;
/// Mesh points required across the projected interface.
pub const POINTS_ACROSS: f64 = 10.0;
/// Maximum number of bisections of any macro triangle.
pub const MAX_DEPTH: u32 = 30;
/// Nodal `|φ|` below which a triangle counts as interface. Wider than the
/// `|φ| < 0.99` band so the interface stays resolved between adaptations.
pub const MARK_THRESHOLD: f64 = 0.995;
/// Steps between mesh adaptations.
pub const ADAPT_INTERVAL: usize = 10;

/// `G_η(φ) = sqrt(9/4 (φ² − 1)² + η² ε²)`.
#[inline]
pub fn de_gennes(phi: f64, eps: f64, eta: f64) -> f64 {
    let w = phi * phi - 1.0;
    (2.25 * w * w + eta * eta * eps * eps).sqrt()
}

#[inline]
pub fn well(phi: f64) -> f64 {
    let w = phi * phi - 1.0;
    0.25 * w * w
}

#[inline]
pub fn well_prime(phi: f64) -> f64 {
    phi * phi * phi - phi
}

#[inline]
pub fn well_double_prime(phi: f64) -> f64 {
    3.0 * phi * phi - 1.0
}

/// Which planar operator stands in for the surface Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianMode {
    /// `∇·(A∇φ)` with planar measure, as printed in the graph formulation.
    Paper,
    /// `(1/√g) ∇·(√g A∇φ)`, the Laplace-Beltrami operator in graph coordinates.
    #[default]
    Metric,
}

impl std::str::FromStr for LaplacianMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(LaplacianMode::Paper),
            "metric" => Ok(LaplacianMode::Metric),
            other => Err(Error::InvalidArgument(format!("unknown laplacian mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for LaplacianMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LaplacianMode::Paper => "paper",
            LaplacianMode::Metric => "metric",
        })
    }
}

/// How the step enforces the area constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Multiplier from `φⁿ` and penalty on the mean of `φⁿ`, as printed in
    /// the semi-discrete scheme.
    Explicit,
    /// Multiplier from `φⁿ` and penalty on the mean of `φⁿ⁺¹`.
    ImplicitPenalty,
    /// Multiplier chosen so that the weighted mean of `φⁿ⁺¹` equals α.
    #[default]
    Exact,
}

/// Mobility factor multiplying the time derivative and the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mobility {
    #[default]
    DeGennes,
    /// `G_η` replaced by the constant 1.
    Unit,
}

impl std::str::FromStr for Mobility {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "de_gennes" => Ok(Mobility::DeGennes),
            "unit" => Ok(Mobility::Unit),
            other => Err(Error::InvalidArgument(format!("unknown mobility `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mobility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mobility::DeGennes => "de_gennes",
            Mobility::Unit => "unit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PFParams {
    pub epsilon: f64,
    pub eta: f64,
    pub beta_t: f64,
    pub sigma_t: f64,
    pub penalty_c: f64,
    pub alpha: f64,
    pub laplacian_mode: LaplacianMode,
    pub mobility: Mobility,
    pub constraint: Constraint,
    /// Time step as a multiple of `k²`, `k` the target interface element size.
    pub tau_factor: f64,
    /// Fixed time step overriding the mesh-based policy.
    pub fixed_tau: Option<f64>,
    pub solver: SolverOptions,
}

impl PFParams {
    /// Defaults for physical `β = σ = 1`.
    pub fn new(epsilon: f64) -> Self {
        let (beta_t, sigma_t) = analysis::convert_coefficients(1.0, 1.0).expect("positive");
        PFParams {
            epsilon,
            eta: 0.01,
            beta_t,
            sigma_t,
            penalty_c: 2000.0,
            alpha: 0.0,
            laplacian_mode: LaplacianMode::default(),
            mobility: Mobility::default(),
            constraint: Constraint::default(),
            tau_factor: 1.0,
            fixed_tau: None,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !(self.beta_t > 0.0 && self.sigma_t > 0.0) {
            return bad("kinetic coefficient and surface tension must be positive");
        }
        if !(self.penalty_c >= 0.0) {
            return bad("penalty must be nonnegative");
        }
        if !(-1.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [-1, 1]");
        }
        if !(self.tau_factor > 0.0) || self.fixed_tau.is_some_and(|t| !(t > 0.0)) {
            return bad("time step must be positive");
        }
        Ok(())
    }

    #[inline]
    pub fn mobility_at(&self, phi: f64) -> f64 {
        match self.mobility {
            Mobility::DeGennes => de_gennes(phi, self.epsilon, self.eta),
            Mobility::Unit => 1.0,
        }
    }

    /// Target element diameter, measured along the surface, inside the interface.
    pub fn target_diameter(&self) -> f64 {
        INTERFACE_WIDTH * self.epsilon / POINTS_ACROSS
    }

    /// `τ = k²` with `k` the target interface element size, unless fixed.
    pub fn time_step(&self) -> f64 {
        self.fixed_tau.unwrap_or_else(|| {
            let k = self.target_diameter();
            self.tau_factor * k * k
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub mesh: TriMesh,
    pub phi: NodalField,
    pub time: f64,
}

impl PhaseState {
    pub fn max_abs(&self) -> f64 {
        self.phi.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Mesh-dependent operators: the stiffness matrix, the lumped weights used by
/// the time derivative (`w`) and the lumped surface-area weights (`s`).
#[derive(Debug, Clone)]
pub struct Operators {
    pub stiffness: CsrMatrix,
    pub weights: Vec<f64>,
    pub surface_weights: Vec<f64>,
    pub surface_area: f64,
}

impl Operators {
    pub fn new(mesh: &TriMesh, surface: &SurfaceGraph, mode: LaplacianMode) -> Result<Self> {
        let tensor = |p: &Vec2| surface.metric(p).map(|m| (m.projection_tensor, m.area_element));
        let check = |p: &Vec2| tensor(p).unwrap_or((Mat2::from_element(f64::NAN), f64::NAN));
        let stiffness = match mode {
            LaplacianMode::Paper => fem::assemble_stiffness(mesh, |p| check(p).0)?,
            LaplacianMode::Metric => fem::assemble_stiffness(mesh, |p| {
                let (a, sg) = check(p);
                a * sg
            })?,
        };
        let surface_weights = fem::lumped_weights(mesh, |p| check(p).1)?;
        let weights = match mode {
            LaplacianMode::Paper => fem::lumped_weights(mesh, |_| 1.0)?,
            LaplacianMode::Metric => surface_weights.clone(),
        };
        let surface_area = surface_weights.iter().sum();
        Ok(Operators {
            stiffness,
            weights,
            surface_weights,
            surface_area,
        })
    }

    /// Surface-weighted mean of a nodal field.
    pub fn weighted_mean(&self, phi: &[f64]) -> f64 {
        self.surface_weights
            .iter()
            .zip(phi)
            .map(|(s, p)| s * p)
            .sum::<f64>()
            / self.surface_area
    }

    /// Nodal values of the discrete diffusion operator applied to `phi`.
    pub fn laplacian(&self, phi: &[f64]) -> Vec<f64> {
        let mut l = self.stiffness.mul_vec(phi);
        for (li, w) in l.iter_mut().zip(&self.weights) {
            *li = -*li / w;
        }
        l
    }
}

/// The nonlocal multiplier without its leading mobility factor:
/// `σ̃ ∫ √g/G (W'/ε − εΔφ) / ∫ √g`.
pub fn lagrange_multiplier(phi: &[f64], ops: &Operators, params: &PFParams) -> f64 {
    let eps = params.epsilon;
    let lap = ops.laplacian(phi);
    let mut acc = 0.0;
    for i in 0..phi.len() {
        let force = well_prime(phi[i]) / eps - eps * lap[i];
        acc += ops.surface_weights[i] * force / params.mobility_at(phi[i]);
    }
    params.sigma_t * acc / ops.surface_area
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub phi: Vec<f64>,
    pub multiplier: f64,
    pub iterations: usize,
    /// Response of the system to the penalty distribution, reusable as the
    /// initial guess of the next step.
    pub penalty_response: Option<Vec<f64>>,
}

/// One semi-implicit step of length `tau` on a fixed mesh. `response_guess`
/// warm-starts the second solve of the implicit penalty.
pub fn step_values(
    phi: &[f64],
    ops: &Operators,
    params: &PFParams,
    tau: f64,
    previous: Option<(&[f64], f64)>,
) -> Result<StepOutcome> {
    let (eps, bt, st) = (params.epsilon, params.beta_t, params.sigma_t);
    let c = params.penalty_c;
    let exact = params.constraint == Constraint::Exact;
    let mut multiplier = if exact {
        0.0
    } else {
        lagrange_multiplier(phi, ops, params)
    };
    let explicit_penalty = match params.constraint {
        Constraint::Explicit => c * (ops.weighted_mean(phi) - params.alpha),
        Constraint::ImplicitPenalty => -c * params.alpha,
        Constraint::Exact => 0.0,
    };
    let n = phi.len();
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut mobility = vec![0.0; n];
    for i in 0..n {
        let p = phi[i];
        let g = params.mobility_at(p);
        let w = ops.weights[i];
        let w2 = well_double_prime(p);
        mobility[i] = w * g;
        diag[i] = w * (eps * bt * g / tau + st * w2 / eps);
        rhs[i] = w
            * (eps * bt * g * p / tau + st * (w2 * p - well_prime(p)) / eps + g * multiplier
                - explicit_penalty);
    }
    let system = ops.stiffness.scaled_plus_diagonal(st * eps, &diag);
    let response_guess = previous.map(|(y, _)| y);
    // with the exact constraint φ - λy is the better start for the first solve
    let start: Vec<f64> = match previous {
        Some((y, lambda)) if exact && y.len() == n => {
            phi.iter().zip(y).map(|(p, yi)| p - lambda * yi).collect()
        }
        _ => phi.to_vec(),
    };
    let (mut next, mut iterations) = fem::solve(&system, &rhs, Some(&start), params.solver)?;
    let mut penalty_response = None;
    let dot_s = |v: &[f64]| -> f64 { ops.surface_weights.iter().zip(v).map(|(a, b)| a * b).sum() };
    match params.constraint {
        Constraint::ImplicitPenalty if c > 0.0 => {
            // (M + (c/S) w sᵀ) φ = rhs, by Sherman-Morrison
            let (y, it) = fem::solve(&system, &ops.weights, response_guess, params.solver)?;
            iterations += it;
            let k = c / ops.surface_area;
            let scale = k * dot_s(&next) / (1.0 + k * dot_s(&y));
            for (v, yi) in next.iter_mut().zip(&y) {
                *v -= scale * yi;
            }
            penalty_response = Some(y);
        }
        Constraint::Exact => {
            // φ = x + λ y with M y = w G, λ fixed by sᵀφ = α S
            let (y, it) = fem::solve(&system, &mobility, response_guess, params.solver)?;
            iterations += it;
            multiplier = (params.alpha * ops.surface_area - dot_s(&next)) / dot_s(&y);
            for (v, yi) in next.iter_mut().zip(&y) {
                *v += multiplier * yi;
            }
            penalty_response = Some(y);
        }
        _ => {}
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Step {
            time: f64::NAN,
            reason: "non-finite update".into(),
        });
    }
    Ok(StepOutcome {
        phi: next,
        multiplier,
        iterations,
        penalty_response,
    })
}

/// One step of a state on its own mesh, assembling the operators afresh.
pub fn step(
    state: &PhaseState,
    surface: &SurfaceGraph,
    params: &PFParams,
    tau: f64,
) -> Result<PhaseState> {
    let ops = Operators::new(&state.mesh, surface, params.laplacian_mode)?;
    let out = step_values(&state.phi.values, &ops, params, tau, None).map_err(|e| at_time(e, state.time))?;
    Ok(PhaseState {
        mesh: state.mesh.clone(),
        phi: NodalField { values: out.phi },
        time: state.time + tau,
    })
}

fn at_time(e: Error, time: f64) -> Error {
    match e {
        Error::Step { reason, .. } => Error::Step { time, reason },
        Error::Solver { .. } => Error::Step {
            time,
            reason: e.to_string(),
        },
        other => other,
    }
}

/// Signed planar distance to a closed polygon, negative inside.
pub struct SignedDistance<'a> {
    polygon: &'a [Vec2],
    grid: SegmentGrid<'a>,
}

impl<'a> SignedDistance<'a> {
    pub fn new(polygon: &'a [Vec2]) -> Self {
        SignedDistance {
            polygon,
            grid: SegmentGrid::polyline(polygon, true),
        }
    }

    pub fn eval(&self, p: &Vec2) -> f64 {
        self.eval_with_foot(p).0
    }

    /// Signed distance together with the closest point on the polygon and
    /// the unit segment normal there.
    pub fn eval_with_foot(&self, p: &Vec2) -> (f64, Vec2, Vec2) {
        let (d, i) = self.grid.nearest(p);
        let a = self.polygon[i];
        let b = self.polygon[(i + 1) % self.polygon.len()];
        let ab = b - a;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let normal = if len2 > 0.0 {
            Vec2::new(ab.y, -ab.x) / len2.sqrt()
        } else {
            Vec2::zeros()
        };
        let d = if point_in_polygon(p, self.polygon) { -d } else { d };
        (d, a + ab * s, normal)
    }

    /// Signed distance stretched to surface length: `d / sqrt(νᵀAν)` with
    /// `ν` the curve normal at the closest point, so that the tanh profile has
    /// its equilibrium width on the surface.
    pub fn eval_surface(&self, p: &Vec2, surface: &SurfaceGraph) -> f64 {
        let (d, foot, nu) = self.eval_with_foot(p);
        let grad_h = surface.gradient_unchecked(&foot);
        let q = grad_h.dot(&nu);
        let factor = (1.0 - q * q / (1.0 + grad_h.norm_squared())).sqrt();
        if factor > 0.0 && factor.is_finite() {
            d / factor
        } else {
            d
        }
    }
}

/// The tanh profile of the surface-stretched signed distance to `polygon`.
pub fn profile_field(
    mesh: &TriMesh,
    polygon: &[Vec2],
    surface: &SurfaceGraph,
    eps: f64,
) -> NodalField {
    let sd = SignedDistance::new(polygon);
    NodalField::from_fn(mesh, |p| (sd.eval_surface(p, surface) / (SQRT_2 * eps)).tanh())
}

/// Surface-weighted mean of `phi` over the mesh.
pub fn weighted_mean(mesh: &TriMesh, phi: &[f64], surface: &SurfaceGraph) -> Result<f64> {
    let s = fem::lumped_weights(mesh, |p| surface.area_element_unchecked(p))?;
    Ok(s.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>() / s.iter().sum::<f64>())
}

/// Nodal tanh profile of the curve on `mesh`, plus the conserved target mean α.
pub fn initialize(
    polygon: &[Vec2],
    mesh: &TriMesh,
    surface: &SurfaceGraph,
    eps: f64,
) -> Result<(PhaseState, f64)> {
    if let Some(p) = polygon.iter().find(|p| !surface.contains(p)) {
        return Err(Error::Domain { x: p.x, y: p.y });
    }
    let phi = profile_field(mesh, polygon, surface, eps);
    let alpha = weighted_mean(mesh, &phi.values, surface)?;
    Ok((
        PhaseState {
            mesh: mesh.clone(),
            phi,
            time: 0.0,
        },
        alpha,
    ))
}

/// `sqrt(νᵀAν)` for the unit direction `ν` of the element gradient of `phi`:
/// the factor by which the projected interface is thinner than on the surface.
fn projection_factor(mesh: &TriMesh, t: usize, phi: &[f64], surface: &SurfaceGraph) -> f64 {
    let corners = mesh.corners(t);
    let (grads, _) = fem::element_gradients(&corners);
    let tri = mesh.triangles[t];
    let g: Vec2 = (0..3).map(|k| grads[k] * phi[tri[k] as usize]).sum();
    let norm = g.norm();
    if !(norm > 0.0) {
        return 1.0;
    }
    let nu = g / norm;
    let c = mesh.centroid(t);
    let grad_h = surface.gradient_unchecked(&c);
    let q = grad_h.dot(&nu);
    // νᵀAν = 1 − (∇h·ν)²/(1 + |∇h|²)
    (1.0 - q * q / (1.0 + grad_h.norm_squared())).max(0.0).sqrt()
}

/// Offset of the bulk values from ±1 balancing the multiplier term,
/// `σ̃ W'(±1 + δ) / ε = G(±1) λ`. Negligible under the de Gennes mobility.
pub fn bulk_shift(params: &PFParams, multiplier: f64) -> f64 {
    let g = 0.5 * (params.mobility_at(1.0) + params.mobility_at(-1.0));
    params.epsilon * multiplier * g / (2.0 * params.sigma_t)
}

fn in_band(tri: &[u32; 3], phi: &[f64], shift: f64) -> bool {
    let v = [phi[tri[0] as usize], phi[tri[1] as usize], phi[tri[2] as usize]];
    let min_abs = v.iter().map(|x| (x - shift).abs()).fold(f64::INFINITY, f64::min);
    let pos = v.iter().any(|x| *x >= 0.0);
    let neg = v.iter().any(|x| *x < 0.0);
    min_abs < MARK_THRESHOLD || (pos && neg)
}

/// Triangles inside the diffuse interface whose diameter exceeds a tenth of
/// the local projected interface width. The band is measured from the bulk
/// values `±1 + shift`.
pub fn marked_triangles(
    mesh: &TriMesh,
    phi: &[f64],
    surface: &SurfaceGraph,
    params: &PFParams,
    shift: f64,
) -> Vec<usize> {
    let target = params.target_diameter();
    (0..mesh.triangle_count())
        .filter(|&t| {
            in_band(&mesh.triangles[t], phi, shift)
                && mesh.diameter(t) > target * projection_factor(mesh, t, phi, surface)
        })
        .collect()
}

/// Refines until every interface triangle meets the resolution target,
/// interpolating `phi` onto the new vertices. Returns `None` when the state
/// is already resolved.
pub fn adapt(
    state: &PhaseState,
    surface: &SurfaceGraph,
    params: &PFParams,
) -> Result<Option<PhaseState>> {
    Ok(adapt_carrying(state, None, surface, params, 0.0)?.map(|(s, _)| s))
}

/// [`adapt`], also interpolating `carried` through every refinement pass.
fn adapt_carrying(
    state: &PhaseState,
    mut carried: Option<NodalField>,
    surface: &SurfaceGraph,
    params: &PFParams,
    shift: f64,
) -> Result<Option<(PhaseState, Option<NodalField>)>> {
    let mut mesh = state.mesh.clone();
    let mut phi = state.phi.clone();
    let mut changed = false;
    loop {
        let marked = marked_triangles(&mesh, &phi.values, surface, params, shift);
        if marked.is_empty() {
            break;
        }
        if marked.iter().any(|&t| mesh.generation[t] >= MAX_DEPTH) {
            return Err(Error::Adaptation(MAX_DEPTH));
        }
        let next = mesh.refine(&marked);
        phi = phi.interpolate(&next)?;
        if let Some(field) = &carried {
            carried = Some(field.interpolate(&next)?);
        }
        mesh = next;
        changed = true;
    }
    Ok(changed.then(|| {
        let state = PhaseState {
            mesh,
            phi,
            time: state.time,
        };
        (state, carried)
    }))
}

/// Refines `mesh` around `polygon` until the exact tanh profile is resolved,
/// re-evaluating the profile at every new vertex.
pub fn initial_mesh(
    mesh: &TriMesh,
    polygon: &[Vec2],
    surface: &SurfaceGraph,
    params: &PFParams,
) -> Result<TriMesh> {
    let sd = SignedDistance::new(polygon);
    let eps = params.epsilon;
    let band = BAND_HALF_WIDTH * eps;
    let mut mesh = mesh.clone();
    loop {
        let dist: Vec<f64> = mesh
            .vertices
            .iter()
            .map(|p| sd.eval_surface(p, surface))
            .collect();
        let phi: Vec<f64> = dist.iter().map(|d| (d / (SQRT_2 * eps)).tanh()).collect();
        let target = params.target_diameter();
        let marked: Vec<usize> = (0..mesh.triangle_count())
            .filter(|&t| {
                let diam = mesh.diameter(t);
                let near = sd.eval(&mesh.centroid(t)).abs() < band + diam;
                (near || in_band(&mesh.triangles[t], &phi, 0.0))
                    && diam > target * projection_factor(&mesh, t, &phi, surface)
            })
            .collect();
        if marked.is_empty() {
            return Ok(mesh);
        }
        if marked.iter().any(|&t| mesh.generation[t] >= MAX_DEPTH) {
            return Err(Error::Adaptation(MAX_DEPTH));
        }
        mesh = mesh.refine(&marked);
    }
}

/// One record of the per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub mean_phi: f64,
    pub energy: f64,
    pub multiplier: f64,
    pub dt: f64,
    pub n_vertices: usize,
    pub max_abs_phi: f64,
    /// `max |φⁿ⁺¹ − φⁿ| / τ`.
    pub rate: f64,
}

/// Time integrator that owns the state, the cached operators and the
/// adaptation policy.
pub struct PhaseFieldSolver<'a> {
    surface: &'a SurfaceGraph,
    params: PFParams,
    state: PhaseState,
    ops: Operators,
    tau: f64,
    steps: usize,
    max_abs_phi: f64,
    last_rate: f64,
    penalty_response: Option<Vec<f64>>,
    last_multiplier: f64,
    last_iterations: usize,
}

impl<'a> PhaseFieldSolver<'a> {
    pub fn new(surface: &'a SurfaceGraph, params: PFParams, state: PhaseState) -> Result<Self> {
        params.validate()?;
        let ops = Operators::new(&state.mesh, surface, params.laplacian_mode)?;
        let max_abs_phi = state.max_abs();
        let mut solver = PhaseFieldSolver {
            surface,
            params,
            state,
            ops,
            tau: 0.0,
            steps: 0,
            max_abs_phi,
            last_rate: f64::INFINITY,
            penalty_response: None,
            last_multiplier: 0.0,
            last_iterations: 0,
        };
        solver.adapt()?;
        Ok(solver)
    }

    pub fn state(&self) -> &PhaseState {
        &self.state
    }

    pub fn params(&self) -> &PFParams {
        &self.params
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn max_abs_phi(&self) -> f64 {
        self.max_abs_phi
    }

    /// Linear solver iterations spent in the last step.
    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    pub fn last_rate(&self) -> f64 {
        self.last_rate
    }

    pub fn mean_phi(&self) -> f64 {
        self.ops.weighted_mean(&self.state.phi.values)
    }

    pub fn energy(&self) -> f64 {
        analysis::energy(&self.state, self.surface, &self.params)
    }

    fn adapt(&mut self) -> Result<()> {
        let carried = self.penalty_response.take().map(|values| NodalField { values });
        let shift = bulk_shift(&self.params, self.last_multiplier);
        match adapt_carrying(&self.state, carried.clone(), self.surface, &self.params, shift)? {
            Some((next, carried)) => {
                debug!(
                    "adapted mesh at t = {:.5}: {} -> {} vertices",
                    self.state.time,
                    self.state.mesh.vertex_count(),
                    next.mesh.vertex_count()
                );
                self.ops = Operators::new(&next.mesh, self.surface, self.params.laplacian_mode)?;
                self.penalty_response = carried.map(|f| f.values);
                self.state = next;
            }
            None => self.penalty_response = carried.map(|f| f.values),
        }
        self.tau = self.params.time_step();
        Ok(())
    }

    /// Advances by one step of at most `max_dt`, halving the step on solver
    /// failure, then adapts the mesh.
    pub fn advance(&mut self, max_dt: f64) -> Result<StepRecord> {
        let time = self.state.time;
        let mut tau = self.tau.min(max_dt);
        let mut attempt = 0;
        let out = loop {
            let guess = self.penalty_response.as_deref().map(|y| (y, self.last_multiplier));
            match step_values(&self.state.phi.values, &self.ops, &self.params, tau, guess) {
                Ok(out) => break out,
                Err(e @ (Error::Solver { .. } | Error::Step { .. })) if attempt < 4 => {
                    warn!("step at t = {time} failed ({e}); retrying with half the time step");
                    tau *= 0.5;
                    attempt += 1;
                }
                Err(e) => return Err(at_time(e, time)),
            }
        };
        let rate = out
            .phi
            .iter()
            .zip(&self.state.phi.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / tau;
        self.state.phi.values = out.phi;
        self.penalty_response = out.penalty_response;
        self.last_multiplier = out.multiplier;
        self.last_iterations = out.iterations;
        // land exactly on the requested time when the step was clipped
        self.state.time = if tau == max_dt { time + max_dt } else { time + tau };
        self.steps += 1;
        self.last_rate = rate;
        let max_abs = self.state.max_abs();
        if max_abs > 1.05 {
            warn!("max |phi| = {max_abs:.4} at t = {:.5}", self.state.time);
        }
        self.max_abs_phi = self.max_abs_phi.max(max_abs);
        if self.steps % ADAPT_INTERVAL == 0 {
            self.adapt()?;
        }
        Ok(StepRecord {
            time: self.state.time,
            mean_phi: self.mean_phi(),
            energy: self.energy(),
            multiplier: out.multiplier,
            dt: tau,
            n_vertices: self.state.mesh.vertex_count(),
            max_abs_phi: max_abs,
            rate,
        })
    }

    /// Advances until exactly `t_end`, calling `observer` after every step.
    pub fn advance_to(
        &mut self,
        t_end: f64,
        mut observer: impl FnMut(&Self, &StepRecord) -> Result<()>,
    ) -> Result<()> {
        while self.state.time < t_end {
            let remaining = t_end - self.state.time;
            // avoid a sliver step at the end
            let max_dt = if remaining < 1.5 * self.tau && remaining > self.tau {
                0.5 * remaining
            } else {
                remaining
            };
            let record = self.advance(max_dt)?;
            if (t_end - self.state.time).abs() < 1e-12 * t_end.max(1.0) {
                self.state.time = t_end;
            }
            observer(self, &record)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::macro_mesh;
    use crate::surface::Domain;

    #[test]
    fn scalar_functions() {
        assert!((de_gennes(1.0, 0.025, 0.01) - 2.5e-4).abs() < 1e-18);
        assert!((de_gennes(-1.0, 0.025, 0.01) - 2.5e-4).abs() < 1e-18);
        assert!((de_gennes(0.0, 0.025, 1e-12) - 1.5).abs() < 1e-12);
        assert_eq!(de_gennes(2.0, 0.1, 0.0), 4.5);
        assert_eq!(well_prime(0.0), 0.0);
        assert_eq!(well_double_prime(0.0), -1.0);
        assert_eq!(well_prime(1.0), 0.0);
        assert_eq!(well_prime(-1.0), 0.0);
        assert_eq!(well_double_prime(1.0), 2.0);
        assert_eq!(well_double_prime(-1.0), 2.0);
        assert_eq!(well_prime(0.5), -0.375);
    }

    #[test]
    fn band_constants_match_profile() {
        assert!((BAND_HALF_WIDTH - SQRT_2 * 0.99f64.atanh()).abs() < 1e-12);
        assert!((INTERFACE_WIDTH - 2.0 * SQRT_2 * 0.9f64.atanh()).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        let p = PFParams::new(0.05);
        p.validate().unwrap();
        assert!(PFParams { epsilon: 0.0, ..p }.validate().is_err());
        assert!(PFParams { eta: 0.0, ..p }.validate().is_err());
        assert!(PFParams { penalty_c: -1.0, ..p }.validate().is_err());
        assert!(PFParams { alpha: 1.5, ..p }.validate().is_err());
        assert_eq!("metric".parse::<LaplacianMode>().unwrap(), LaplacianMode::Metric);
        assert!("other".parse::<LaplacianMode>().is_err());
    }

    fn unit_square_mesh(n: usize, refinements: usize) -> TriMesh {
        let mut mesh = macro_mesh(
            &Domain::Rect {
                min: [0.0, 0.0],
                max: [1.0, 1.0],
            },
            n,
        )
        .unwrap();
        for _ in 0..refinements {
            mesh = mesh.refine(&(0..mesh.triangle_count()).collect::<Vec<_>>());
        }
        mesh
    }

    #[test]
    fn multiplier_examples() {
        let mesh = unit_square_mesh(4, 2);
        let surface = SurfaceGraph::flat(Domain::Rect {
            min: [0.0, 0.0],
            max: [1.0, 1.0],
        });
        let params = PFParams::new(0.1);
        let ops = Operators::new(&mesh, &surface, LaplacianMode::Paper).unwrap();
        let zero = vec![0.0; mesh.vertex_count()];
        assert_eq!(lagrange_multiplier(&zero, &ops, &params), 0.0);

        let half = vec![0.5; mesh.vertex_count()];
        let expected = params.sigma_t * (-3.75) / de_gennes(0.5, 0.1, 0.01);
        let got = lagrange_multiplier(&half, &ops, &params);
        assert!((got - expected).abs() < 1e-12 * expected.abs(), "{got} vs {expected}");
    }

    #[test]
    fn pure_phase_is_stationary() {
        let mesh = unit_square_mesh(4, 0);
        let surface = SurfaceGraph::flat(Domain::Rect {
            min: [0.0, 0.0],
            max: [1.0, 1.0],
        });
        let params = PFParams {
            alpha: 1.0,
            ..PFParams::new(0.1)
        };
        let state = PhaseState {
            phi: NodalField::constant(&mesh, 1.0),
            mesh,
            time: 0.0,
        };
        let next = step(&state, &surface, &params, 1e-3).unwrap();
        assert!(next.phi.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!((next.time - 1e-3).abs() < 1e-18);
        assert!(adapt(&state, &surface, &params).unwrap().is_none());
    }

    #[test]
    fn initialize_examples() {
        let surface = SurfaceGraph::flat(Domain::square(2.0));
        let mesh = macro_mesh(&Domain::square(2.0), 16).unwrap();
        let square = vec![
            Vec2::new(-1.0, -1.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(-1.0, 1.0),
        ];
        let eps = 0.05;
        let (state, _) = initialize(&square, &mesh, &surface, eps).unwrap();
        for (p, v) in state.mesh.vertices.iter().zip(&state.phi.values) {
            let on_curve = (p.x.abs() - 1.0).abs() < 1e-12 && p.y.abs() <= 1.0
                || (p.y.abs() - 1.0).abs() < 1e-12 && p.x.abs() <= 1.0;
            if on_curve {
                assert!(v.abs() < 1e-12);
            }
            if (p.x - 1.5).abs() < 1e-12 && p.y.abs() < 1e-12 {
                // 10 ε outside
                assert!((v - (10.0 / SQRT_2).tanh()).abs() < 1e-12);
                assert!((v - 0.999_998_557_3).abs() < 1e-10);
            }
        }
        let outside = vec![Vec2::new(3.0, 0.0), Vec2::new(3.5, 0.0), Vec2::new(3.0, 1.0)];
        assert!(matches!(
            initialize(&outside, &mesh, &surface, eps),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn initial_alpha_approaches_area_fraction() {
        let domain = Domain::square(2.0);
        let surface = SurfaceGraph::flat(domain);
        let circle: Vec<Vec2> = (0..2000)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 2000.0;
                Vec2::new(t.cos(), t.sin())
            })
            .collect();
        let sharp = 1.0 - 2.0 * std::f64::consts::PI / 16.0;
        for eps in [0.1, 0.05] {
            let params = PFParams::new(eps);
            let mesh = initial_mesh(&macro_mesh(&domain, 8).unwrap(), &circle, &surface, &params).unwrap();
            let (_, alpha) = initialize(&circle, &mesh, &surface, eps).unwrap();
            assert!(
                (alpha - sharp).abs() <= 2.0 * eps * std::f64::consts::TAU / 16.0,
                "eps {eps}: alpha {alpha} vs {sharp}"
            );
        }
    }

    #[test]
    fn shifted_bulk_is_not_marked() {
        let surface = SurfaceGraph::flat(Domain::square(2.0));
        let params = PFParams {
            mobility: Mobility::Unit,
            ..PFParams::new(0.1)
        };
        let circle: Vec<Vec2> = (0..400)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 400.0;
                Vec2::new(t.cos(), t.sin())
            })
            .collect();
        let coarse = macro_mesh(&surface.domain, 4).unwrap();
        let mesh = initial_mesh(&coarse, &circle, &surface, &params).unwrap();
        let (state, _) = initialize(&circle, &mesh, &surface, 0.1).unwrap();
        assert!(marked_triangles(&mesh, &state.phi.values, &surface, &params, 0.0).is_empty());

        let lambda = -0.01 * 2.0 * params.sigma_t / params.epsilon;
        let shift = bulk_shift(&params, lambda);
        assert!((shift + 0.01).abs() < 1e-12);
        let phi: Vec<f64> = state.phi.values.iter().map(|p| p + shift).collect();
        assert!(!marked_triangles(&mesh, &phi, &surface, &params, 0.0).is_empty());
        assert!(marked_triangles(&mesh, &phi, &surface, &params, shift).is_empty());
    }

    #[test]
    fn carried_fields_follow_every_refinement_pass() {
        let surface = SurfaceGraph::flat(Domain::square(2.0));
        let params = PFParams::new(0.1);
        let circle: Vec<Vec2> = (0..400)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 400.0;
                Vec2::new(t.cos(), t.sin())
            })
            .collect();
        let coarse = macro_mesh(&surface.domain, 4).unwrap();
        let (state, _) = initialize(&circle, &coarse, &surface, 0.1).unwrap();
        let linear = |p: &Vec2| p.x + 2.0 * p.y;
        let carried = NodalField {
            values: coarse.vertices.iter().map(linear).collect(),
        };
        let (next, carried) = adapt_carrying(&state, Some(carried), &surface, &params, 0.0)
            .unwrap()
            .expect("refined");
        let carried = carried.unwrap();
        assert_eq!(carried.values.len(), next.mesh.vertex_count());
        for (p, v) in next.mesh.vertices.iter().zip(&carried.values) {
            assert!((v - linear(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptation_resolves_interface() {
        let domain = Domain::square(2.0);
        let surface = SurfaceGraph::flat(domain);
        let eps = 0.1;
        let params = PFParams::new(eps);
        let circle: Vec<Vec2> = (0..1000)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 1000.0;
                Vec2::new(t.cos(), t.sin())
            })
            .collect();
        let coarse = macro_mesh(&domain, 8).unwrap();
        let (state, _) = initialize(&circle, &coarse, &surface, eps).unwrap();
        let adapted = adapt(&state, &surface, &params).unwrap().expect("refined");
        adapted.mesh.check_conforming().unwrap();
        assert!(adapted.mesh.vertex_count() > coarse.vertex_count());
        // resolved states are left alone
        assert!(adapt(&adapted, &surface, &params).unwrap().is_none());

        let mesh = initial_mesh(&coarse, &circle, &surface, &params).unwrap();
        let (state, _) = initialize(&circle, &mesh, &surface, eps).unwrap();
        assert!(adapt(&state, &surface, &params).unwrap().is_none());
        // points across the interface along 64 radial transects
        let width = INTERFACE_WIDTH * eps;
        for k in 0..64 {
            let t = std::f64::consts::TAU * (k as f64 + 0.3) / 64.0;
            let dir = Vec2::new(t.cos(), t.sin());
            let (a, b) = (dir * (1.0 - width / 2.0), dir * (1.0 + width / 2.0));
            let crossings = mesh
                .edge_incidence()
                .keys()
                .filter(|(i, j)| {
                    let (p, q) = (mesh.vertices[*i as usize], mesh.vertices[*j as usize]);
                    crate::geometry::orient(&a, &b, &p) * crate::geometry::orient(&a, &b, &q) < 0.0
                        && crate::geometry::orient(&p, &q, &a) * crate::geometry::orient(&p, &q, &b) < 0.0
                })
                .count();
            // a transect crossing n edges passes through n + 1 triangles
            assert!(crossings + 1 >= 10, "transect {k}: {crossings} edge crossings");
        }
    }
}
