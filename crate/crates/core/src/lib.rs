//! Phase-field and sharp-interface solvers for area-preserving geodesic
//! curvature flow of curves on graph surfaces.

pub mod analysis;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod mesh;
pub mod phase_field;
pub mod sharp_flow;
pub mod surface;

pub use error::{Error, Result};
pub use surface::{Domain, Mat2, MetricData, Shape, SurfaceGraph, Vec2};
