use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("axis {axis}: zones are not contiguous ({prev_end} != {next_start})")]
    NonContiguous { axis: usize, prev_end: f64, next_start: f64 },
    #[error("axis {axis}: invalid zone [{start}, {end}]: {reason}")]
    BadZone { axis: usize, start: f64, end: f64, reason: String },
    #[error("axis {axis}: spacing ratio {ratio:.4} between cells {cell} and {} exceeds {limit}", cell + 1)]
    RatioViolation { axis: usize, cell: usize, ratio: f64, limit: f64 },
    #[error("axis {axis}: {count} cells, at least 3 required")]
    TooFewCells { axis: usize, count: usize },
    #[error("grid must be 2D or 3D, got {0} axes")]
    Dimensionality(usize),
    #[error("cell index {index:?} out of range for dims {dims:?}")]
    IndexOutOfRange { index: Vec<usize>, dims: Vec<usize> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("body intersects the domain boundary: solid cell {cell} lies within {clearance} cells of the boundary")]
    BodyTouchesBoundary { cell: usize, clearance: usize },
    #[error("mirror point {point:?} of ghost cell {ghost} lies outside the domain")]
    MirrorOutsideDomain { ghost: usize, point: [f64; 3] },
    #[error(
        "no fluid cell available to interpolate at {point:?} (grid too coarse near the surface; candidates {candidates:?})"
    )]
    NoFluidStencil { point: [f64; 3], candidates: Vec<usize> },
    #[error("point {0:?} lies outside the domain")]
    PointOutsideDomain([f64; 3]),
    #[error("body dimensionality {body} does not match grid dimensionality {grid}")]
    DimensionMismatch { body: usize, grid: usize },
    #[error("invalid body: {0}")]
    InvalidBody(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearSolverError {
    #[error("{solver} did not converge in {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    NotConverged { solver: &'static str, iterations: usize, residual: f64, target: f64 },
    #[error("{solver} broke down at iteration {iteration}: {reason}")]
    Breakdown { solver: &'static str, iteration: usize, reason: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluxError {
    #[error("nonphysical state in flux evaluation: rho = {rho}, p = {p}")]
    NonPhysical { rho: f64, p: f64 },
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Linear(#[from] LinearSolverError),
    #[error(transparent)]
    Flux(#[from] FluxError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("nonpositive {quantity} = {value:.6e} in cell {cell} (step {step})")]
    Positivity { quantity: &'static str, cell: usize, value: f64, step: u64 },
    #[error("divergence detected at step {step}: max|u| = {max_u:.4e} exceeds {limit:.4e}")]
    Diverged { step: u64, max_u: f64, limit: f64 },
    #[error("time step {dt:.4e} violates CFL limit: Courant number {courant:.4} > {limit}")]
    Cfl { dt: f64, courant: f64, limit: f64 },
    #[error("invalid solver input: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config has {} violation(s):\n  {}", .0.len(), .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("output directory {path} holds artifacts of config {found}, refusing to mix with {expected}")]
    MixedProvenance { path: PathBuf, found: String, expected: String },
}

impl IoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io { path: path.into(), source }
    }
    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        IoError::Format { path: path.into(), reason: reason.into() }
    }
}

/// Top-level error for run orchestration.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("step {step} (t = {time:.6}): {source}")]
    Step { step: u64, time: f64, #[source] source: SolverError, extrema: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("post-processing: {0}")]
    Post(String),
}
