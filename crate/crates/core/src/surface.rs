//! Graph surfaces `z = h(x, y)` over a planar domain.
//!
//! Every surface carries hand-coded first and second derivatives. Both solvers
//! only ever see the surface through [`SurfaceGraph::height`],
//! [`SurfaceGraph::gradient`], [`SurfaceGraph::hessian`] and the derived
//! [`MetricData`].

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Planar region the height function is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Rect { min: [f64; 2], max: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
}

impl Domain {
    pub fn square(half_width: f64) -> Self {
        Domain::Rect {
            min: [-half_width, -half_width],
            max: [half_width, half_width],
        }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        match *self {
            Domain::Rect { min, max } => {
                p.x >= min[0] && p.x <= max[0] && p.y >= min[1] && p.y <= max[1]
            }
            Domain::Disk { center, radius } => {
                let d = p - Vec2::new(center[0], center[1]);
                d.norm() <= radius
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Domain::Rect { min, max } => (max[0] - min[0]) * (max[1] - min[1]),
            Domain::Disk { radius, .. } => PI * radius * radius,
        }
    }
}

/// Closed-form height functions with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// `h = 0`.
    Flat,
    /// `h = slope . (x, y)`; intrinsically flat, used as a curvature oracle.
    Plane { slope: [f64; 2] },
    /// Upper hemisphere `h = sqrt(R^2 - x^2 - y^2)`.
    Hemisphere { radius: f64 },
    /// `h = y^2`.
    ParabolicCylinder,
    /// `h = sin(pi y)`.
    SineCylinder,
    /// `h = x^2 - y^4`.
    Saddle,
}

/// Metric quantities of the graph at one planar point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricData {
    pub grad_h: Vec2,
    /// `sqrt(1 + |grad h|^2)`.
    pub area_element: f64,
    /// `I - grad h grad h^T / (1 + |grad h|^2)`, the inverse metric tensor.
    pub projection_tensor: Mat2,
}

impl MetricData {
    pub fn from_gradient(grad_h: Vec2) -> Self {
        let g = 1.0 + grad_h.norm_squared();
        MetricData {
            grad_h,
            area_element: g.sqrt(),
            projection_tensor: Mat2::identity() - grad_h * grad_h.transpose() / g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGraph {
    pub shape: Shape,
    pub domain: Domain,
}

impl SurfaceGraph {
    pub fn new(shape: Shape, domain: Domain) -> Self {
        SurfaceGraph { shape, domain }
    }

    pub fn flat(domain: Domain) -> Self {
        SurfaceGraph::new(Shape::Flat, domain)
    }

    /// Surfaces of the four benchmark problems.
    pub fn builtin(problem_id: u32) -> Result<Self> {
        let surface = match problem_id {
            1 => SurfaceGraph::new(
                Shape::Hemisphere { radius: 2.0 },
                Domain::Disk {
                    center: [0.0, 0.0],
                    radius: 1.99,
                },
            ),
            2 => SurfaceGraph::new(Shape::ParabolicCylinder, Domain::square(2.0)),
            3 => SurfaceGraph::new(Shape::SineCylinder, Domain::square(2.0)),
            4 => SurfaceGraph::new(Shape::Saddle, Domain::square(2.0)),
            other => return Err(Error::InvalidProblem(other)),
        };
        Ok(surface)
    }

    fn check(&self, p: &Vec2) -> Result<()> {
        let inside = self.domain.contains(p)
            && match self.shape {
                Shape::Hemisphere { radius } => p.norm_squared() < radius * radius,
                _ => true,
            };
        if inside && p.x.is_finite() && p.y.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain { x: p.x, y: p.y })
        }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        self.check(p).is_ok()
    }

    pub fn height(&self, p: &Vec2) -> Result<f64> {
        self.check(p)?;
        Ok(self.height_unchecked(p))
    }

    pub fn gradient(&self, p: &Vec2) -> Result<Vec2> {
        self.check(p)?;
        Ok(self.gradient_unchecked(p))
    }

    pub fn hessian(&self, p: &Vec2) -> Result<Mat2> {
        self.check(p)?;
        Ok(self.hessian_unchecked(p))
    }

    pub fn metric(&self, p: &Vec2) -> Result<MetricData> {
        self.check(p)?;
        Ok(MetricData::from_gradient(self.gradient_unchecked(p)))
    }

    /// `sqrt(1 + |grad h|^2)` without the domain check; callers guarantee `p`
    /// lies in the domain (mesh quadrature points, for instance).
    pub fn area_element_unchecked(&self, p: &Vec2) -> f64 {
        (1.0 + self.gradient_unchecked(p).norm_squared()).sqrt()
    }

    pub fn height_unchecked(&self, p: &Vec2) -> f64 {
        let (x, y) = (p.x, p.y);
        match self.shape {
            Shape::Flat => 0.0,
            Shape::Plane { slope } => slope[0] * x + slope[1] * y,
            Shape::Hemisphere { radius } => (radius * radius - x * x - y * y).sqrt(),
            Shape::ParabolicCylinder => y * y,
            Shape::SineCylinder => (PI * y).sin(),
            Shape::Saddle => x * x - y.powi(4),
        }
    }

    pub fn gradient_unchecked(&self, p: &Vec2) -> Vec2 {
        let (x, y) = (p.x, p.y);
        match self.shape {
            Shape::Flat => Vec2::zeros(),
            Shape::Plane { slope } => Vec2::new(slope[0], slope[1]),
            Shape::Hemisphere { radius } => {
                let h = (radius * radius - x * x - y * y).sqrt();
                Vec2::new(-x / h, -y / h)
            }
            Shape::ParabolicCylinder => Vec2::new(0.0, 2.0 * y),
            Shape::SineCylinder => Vec2::new(0.0, PI * (PI * y).cos()),
            Shape::Saddle => Vec2::new(2.0 * x, -4.0 * y.powi(3)),
        }
    }

    pub fn hessian_unchecked(&self, p: &Vec2) -> Mat2 {
        let (x, y) = (p.x, p.y);
        match self.shape {
            Shape::Flat | Shape::Plane { .. } => Mat2::zeros(),
            Shape::Hemisphere { radius } => {
                // d/dx (-x/h) = -1/h - x^2/h^3, d/dy (-x/h) = -xy/h^3
                let h2 = radius * radius - x * x - y * y;
                let h = h2.sqrt();
                let h3 = h2 * h;
                Mat2::new(
                    -1.0 / h - x * x / h3,
                    -x * y / h3,
                    -x * y / h3,
                    -1.0 / h - y * y / h3,
                )
            }
            Shape::ParabolicCylinder => Mat2::new(0.0, 0.0, 0.0, 2.0),
            Shape::SineCylinder => Mat2::new(0.0, 0.0, 0.0, -PI * PI * (PI * y).sin()),
            Shape::Saddle => Mat2::new(2.0, 0.0, 0.0, -12.0 * y * y),
        }
    }

    /// Arclength of the generator `y -> (y, h(y))` from 0 to `y` for surfaces
    /// that depend on `y` only. Used to unroll ruled surfaces onto the plane.
    pub fn unrolled_y(&self, y: f64) -> Option<f64> {
        let integrand = |s: f64| -> f64 {
            let dh = self.gradient_unchecked(&Vec2::new(0.0, s)).y;
            (1.0 + dh * dh).sqrt()
        };
        match self.shape {
            Shape::Flat => Some(y),
            Shape::ParabolicCylinder | Shape::SineCylinder => {
                // composite Simpson, smooth integrand
                let n = 2 * ((y.abs() / 1e-3).ceil() as usize).max(8);
                let hstep = y / n as f64;
                let mut sum = integrand(0.0) + integrand(y);
                for k in 1..n {
                    let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                    sum += w * integrand(k as f64 * hstep);
                }
                Some(sum * hstep / 3.0)
            }
            _ => None,
        }
    }
}
