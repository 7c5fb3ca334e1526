//! Measurements on solver output: zero contours, Hausdorff distances, time
//! norms, energies, enclosed areas and the tanh profile constants.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fem;
use crate::geometry::{signed_area, SegmentGrid};
use crate::mesh::{edge_key, Edge, TriMesh};
use crate::phase_field::{well, PFParams, PhaseState};
use crate::sharp_flow::polygon_surface_area;
use crate::surface::{SurfaceGraph, Vec2};

/// Ordered planar points, optionally closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>, closed: bool) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidCurve("polyline needs at least two points".into()));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidCurve("non-finite polyline point".into()));
        }
        Ok(Polyline { points, closed })
    }

    pub fn closed(points: Vec<Vec2>) -> Result<Self> {
        Self::new(points, true)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    pub fn length(&self) -> f64 {
        let n = self.points.len();
        (0..self.segment_count())
            .map(|i| (self.points[(i + 1) % n] - self.points[i]).norm())
            .sum()
    }

    /// Inserts points so that no segment is longer than `max_len`.
    pub fn supersample(&self, max_len: f64) -> Vec<Vec2> {
        let n = self.points.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..self.segment_count() {
            let (a, b) = (self.points[i], self.points[(i + 1) % n]);
            let k = ((b - a).norm() / max_len).ceil().max(1.0) as usize;
            for j in 0..k {
                out.push(a + (b - a) * (j as f64 / k as f64));
            }
        }
        if !self.closed {
            out.push(self.points[n - 1]);
        }
        out
    }

    /// Copy with counterclockwise orientation (closed polylines only).
    pub fn counterclockwise(&self) -> Polyline {
        let mut out = self.clone();
        if self.closed && signed_area(&self.points) < 0.0 {
            out.points.reverse();
        }
        out
    }
}

/// Zero level set of a P1 field. Vertices with `φ ≥ 0` count as positive.
/// Crossings are stitched into polylines; contours that reach the mesh
/// boundary stay open.
pub fn extract_zero_contour(mesh: &TriMesh, phi: &[f64]) -> Vec<Polyline> {
    let negative = |v: u32| phi[v as usize] < 0.0;
    let crossing = |e: Edge| {
        let (a, b) = (phi[e.0 as usize], phi[e.1 as usize]);
        let (p, q) = (mesh.vertices[e.0 as usize], mesh.vertices[e.1 as usize]);
        p + (q - p) * (a / (a - b))
    };
    // links between crossed edges, one per straddling triangle, in triangle order
    let mut links: HashMap<Edge, Vec<Edge>> = HashMap::new();
    let mut order: Vec<Edge> = Vec::new();
    for tri in &mesh.triangles {
        let mut crossed = [(0u32, 0u32); 2];
        let mut k = 0;
        for i in 0..3 {
            let (u, v) = (tri[i], tri[(i + 1) % 3]);
            if negative(u) != negative(v) {
                crossed[k] = edge_key(u, v);
                k += 1;
            }
        }
        if k == 2 {
            for (a, b) in [(crossed[0], crossed[1]), (crossed[1], crossed[0])] {
                let entry = links.entry(a).or_default();
                if entry.is_empty() {
                    order.push(a);
                }
                entry.push(b);
            }
        }
    }
    order.sort_unstable();

    let mut visited: HashMap<Edge, bool> = order.iter().map(|e| (*e, false)).collect();
    let mut out = Vec::new();
    let walk = |start: Edge, visited: &mut HashMap<Edge, bool>| {
        let mut chain = vec![start];
        visited.insert(start, true);
        let mut current = start;
        loop {
            let next = links[&current].iter().find(|e| !visited[*e]).copied();
            match next {
                Some(e) => {
                    visited.insert(e, true);
                    chain.push(e);
                    current = e;
                }
                None => break,
            }
        }
        chain
    };
    // open chains start at boundary crossings (one link)
    for &e in &order {
        if !visited[&e] && links[&e].len() == 1 {
            let chain = walk(e, &mut visited);
            push_chain(&mut out, chain.into_iter().map(crossing).collect(), false);
        }
    }
    for &e in &order {
        if !visited[&e] {
            let chain = walk(e, &mut visited);
            push_chain(&mut out, chain.into_iter().map(crossing).collect(), true);
        }
    }
    out
}

fn push_chain(out: &mut Vec<Polyline>, mut points: Vec<Vec2>, closed: bool) {
    // crossings at zero-valued vertices repeat; drop the duplicates
    points.dedup();
    if closed && points.len() > 1 && points.first() == points.last() {
        points.pop();
    }
    if points.len() >= 2 {
        let line = Polyline { points, closed };
        out.push(if closed { line.counterclockwise() } else { line });
    }
}

/// The longest closed contour, if any.
pub fn dominant_contour(contours: &[Polyline]) -> Option<&Polyline> {
    contours
        .iter()
        .filter(|c| c.closed && c.len() >= 3)
        .max_by(|a, b| a.length().partial_cmp(&b.length()).unwrap())
}

/// Maximum spacing used when supersampling polylines for Hausdorff distances.
pub const HAUSDORFF_SPACING: f64 = 1e-3;

fn directed_hausdorff(from: &[Vec2], to: &Polyline) -> f64 {
    let grid = SegmentGrid::polyline(&to.points, to.closed);
    from.iter().map(|p| grid.nearest(p).0).fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between two polylines as point sets.
pub fn hausdorff(a: &Polyline, b: &Polyline) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidCurve("empty polyline".into()));
    }
    if a == b {
        // supersampled points lie on the segments only up to rounding
        return Ok(0.0);
    }
    let sa = a.supersample(HAUSDORFF_SPACING);
    let sb = b.supersample(HAUSDORFF_SPACING);
    Ok(directed_hausdorff(&sa, b).max(directed_hausdorff(&sb, a)))
}

/// `sqrt(∫ v² dt)` by the trapezoidal rule.
pub fn l2_time_norm(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let mut acc = 0.0;
    for w in samples.windows(2) {
        let ((t0, v0), (t1, v1)) = (w[0], w[1]);
        if !(t1 > t0) {
            return Err(Error::InvalidArgument(format!(
                "sample times not increasing at t = {t1}"
            )));
        }
        acc += 0.5 * (t1 - t0) * (v0 * v0 + v1 * v1);
    }
    Ok(acc.sqrt())
}

/// Degenerate Ginzburg-Landau energy
/// `σ̃ ∫ (1/G) (ε/2 ∇φᵀA∇φ + W(φ)/ε) √g`, mid-edge rule per element.
pub fn energy(state: &PhaseState, surface: &SurfaceGraph, params: &PFParams) -> f64 {
    let mesh = &state.mesh;
    let phi = &state.phi.values;
    let eps = params.epsilon;
    let mut total = 0.0;
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let corners = mesh.corners(e);
        let (grads, area) = fem::element_gradients(&corners);
        let v = [phi[tri[0] as usize], phi[tri[1] as usize], phi[tri[2] as usize]];
        let grad = grads[0] * v[0] + grads[1] * v[1] + grads[2] * v[2];
        let q = fem::midpoints(&corners);
        let vq = [0.5 * (v[0] + v[1]), 0.5 * (v[1] + v[2]), 0.5 * (v[2] + v[0])];
        let mut acc = 0.0;
        for k in 0..3 {
            let gh = surface.gradient_unchecked(&q[k]);
            let g = 1.0 + gh.norm_squared();
            // ∇φᵀA∇φ with A = I − ∇h∇hᵀ/g
            let grad_a = grad.norm_squared() - gh.dot(&grad).powi(2) / g;
            let density = 0.5 * eps * grad_a + well(vq[k]) / eps;
            acc += density / params.mobility_at(vq[k]) * g.sqrt();
        }
        total += area / 3.0 * acc;
    }
    params.sigma_t * total
}

/// The three integrals of the tanh profile `Φ₀(z) = tanh(z/√2)` with
/// `G = (3/2)|Φ₀² − 1|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileConstants {
    /// `∫ G (Φ₀')² dz`
    pub c1: f64,
    /// `∫ (Φ₀')² dz`
    pub c2: f64,
    /// `∫ G Φ₀' dz`
    pub c3: f64,
}

impl ProfileConstants {
    pub const C1: f64 = 4.0 * SQRT_2 / 5.0;
    pub const C2: f64 = 2.0 * SQRT_2 / 3.0;
    pub const C3: f64 = 2.0;
}

/// Trapezoidal quadrature of the profile constants on `[-half_range, half_range]`
/// with `points` nodes. The integrands are analytic and decay exponentially,
/// so the rule converges geometrically.
pub fn profile_constants_on(half_range: f64, points: usize) -> Result<ProfileConstants> {
    if points < 3 || !(half_range > 0.0) {
        return Err(Error::InvalidArgument("quadrature needs a positive range and three points".into()));
    }
    let h = 2.0 * half_range / (points - 1) as f64;
    let (mut c1, mut c2, mut c3) = (0.0, 0.0, 0.0);
    for k in 0..points {
        let z = -half_range + k as f64 * h;
        let w = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
        let p = (z / SQRT_2).tanh();
        let dp = (1.0 - p * p) / SQRT_2;
        let g = 1.5 * (p * p - 1.0).abs();
        c1 += w * g * dp * dp;
        c2 += w * dp * dp;
        c3 += w * g * dp;
    }
    Ok(ProfileConstants {
        c1: c1 * h,
        c2: c2 * h,
        c3: c3 * h,
    })
}

/// Profile constants on `z ∈ [−20, 20]`; `resolution` must be at least 1000.
pub fn profile_constants(resolution: usize) -> Result<ProfileConstants> {
    if resolution < 1000 {
        return Err(Error::InvalidArgument("resolution must be at least 1000".into()));
    }
    profile_constants_on(20.0, resolution)
}

/// Physical `(β, σ)` to phase-field `(β̃, σ̃)`.
pub fn convert_coefficients(beta: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && sigma > 0.0) {
        return Err(Error::InvalidArgument("coefficients must be positive".into()));
    }
    Ok((beta / ProfileConstants::C1, sigma / ProfileConstants::C2))
}

/// Phase-field `(β̃, σ̃)` back to physical `(β, σ)`.
pub fn physical_coefficients(beta_t: f64, sigma_t: f64) -> Result<(f64, f64)> {
    if !(beta_t > 0.0 && sigma_t > 0.0) {
        return Err(Error::InvalidArgument("coefficients must be positive".into()));
    }
    Ok((beta_t * ProfileConstants::C1, sigma_t * ProfileConstants::C2))
}

/// Enclosed surface areas of a sequence of contours and their deviation from
/// the first one.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaSeries {
    pub times: Vec<f64>,
    pub areas: Vec<f64>,
    pub max_deviation: f64,
    pub mean_deviation: f64,
}

pub fn enclosed_area_series(
    contours: &[(f64, Polyline)],
    surface: &SurfaceGraph,
) -> Result<AreaSeries> {
    if contours.is_empty() {
        return Err(Error::MissingData("no contours".into()));
    }
    let mut times = Vec::with_capacity(contours.len());
    let mut areas = Vec::with_capacity(contours.len());
    for (t, c) in contours {
        if !c.closed || c.len() < 3 {
            return Err(Error::MissingData(format!("no closed contour at t = {t}")));
        }
        times.push(*t);
        areas.push(polygon_surface_area(&c.points, surface)?);
    }
    let devs: Vec<f64> = areas.iter().map(|a| (a - areas[0]).abs()).collect();
    Ok(AreaSeries {
        times,
        max_deviation: devs.iter().copied().fold(0.0, f64::max),
        mean_deviation: devs.iter().sum::<f64>() / devs.len() as f64,
        areas,
    })
}

/// Least-squares circle through a point set: `(center, radius)`.
pub fn fit_circle(points: &[Vec2]) -> Result<(Vec2, f64)> {
    // x² + y² = 2ax + 2by + c
    let mut m = Matrix3::zeros();
    let mut r = Vector3::zeros();
    for p in points {
        let row = Vector3::new(2.0 * p.x, 2.0 * p.y, 1.0);
        m += row * row.transpose();
        r += row * p.norm_squared();
    }
    let sol = m
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::InvalidCurve("degenerate point set for circle fit".into()))?;
    let center = Vec2::new(sol[0], sol[1]);
    let radius = (sol[2] + center.norm_squared()).sqrt();
    Ok((center, radius))
}

/// Largest relative deviation `max |r − R| / R` of the points from their
/// least-squares circle.
pub fn radius_variation(points: &[Vec2]) -> Result<f64> {
    let (center, radius) = fit_circle(points)?;
    Ok(points
        .iter()
        .map(|p| ((p - center).norm() - radius).abs())
        .fold(0.0, f64::max)
        / radius)
}

/// Maps a curve on a surface `h(y)` to the plane by `(x, ∫₀^y √(1 + h'²))`.
pub fn unroll(points: &[Vec2], surface: &SurfaceGraph) -> Result<Vec<Vec2>> {
    points
        .iter()
        .map(|p| {
            surface
                .unrolled_y(p.y)
                .map(|y| Vec2::new(p.x, y))
                .ok_or_else(|| Error::InvalidArgument("surface is not a ruled surface in y".into()))
        })
        .collect()
}
