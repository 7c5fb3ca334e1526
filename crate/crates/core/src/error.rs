//! Error types shared by the solvers and the harness.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the surface domain")]
    Domain { x: f64, y: f64 },

    #[error("invalid problem id {0} (expected 1..=4)")]
    InvalidProblem(u32),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("degenerate curve geometry at node {node}: {reason}")]
    Geometry { node: usize, reason: String },

    #[error("node {node} left the surface domain at t = {time}")]
    Evolution { node: usize, time: f64 },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("missing parentage for vertex {0}")]
    Parentage(usize),

    #[error("non-finite coefficient in element {element}")]
    Assembly { element: usize },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("phase-field step failed at t = {time}: {reason}")]
    Step { time: f64, reason: String },

    #[error("mesh adaptation exceeded refinement depth {0}")]
    Adaptation(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing run data: {0}")]
    MissingData(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("{context}: {source}")]
    Run {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with run context (problem, solver, epsilon).
    pub fn in_run(self, context: impl Into<String>) -> Self {
        Error::Run {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
