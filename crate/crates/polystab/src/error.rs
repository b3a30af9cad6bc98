//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("polytope document is malformed: {0}")]
    MalformedDocument(String),
    #[error("facet {facet} has a non-primitive normal {normal:?}")]
    NonPrimitiveNormal { facet: usize, normal: Vec<String> },
    #[error("facet {facet} has negative sigma weight")]
    NegativeWeight { facet: usize },
    #[error("polytope is unbounded")]
    UnboundedPolytope,
    #[error("polytope has empty interior")]
    EmptyInterior,
    #[error("dimension {0} is not supported (expected 1 or 2)")]
    UnsupportedDimension(usize),
    #[error("mesh resolution {0} is too small (minimum 2)")]
    ResolutionTooSmall(usize),
    #[error("moment degree {0} is not supported (maximum 2)")]
    DegreeUnsupported(u32),
    #[error("moment matrix is singular")]
    SingularMomentMatrix,
}

#[derive(Debug, Error)]
pub enum ConeError {
    #[error("node set is degenerate: {0}")]
    DegenerateNodeSet(String),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("QP solver exceeded {0} iterations without converging")]
    Diverged(usize),
    #[error("QP subproblem is infeasible: {0}")]
    InfeasibleStart(String),
    #[error("QP solver lost numerical stability: {0}")]
    NumericalBreakdown(String),
    #[error("objective matrix is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("initial potential is not convex (node {0})")]
    NonConvexStart(usize),
    #[error("endpoint {0} has zero sigma weight; the model potential is undefined")]
    ZeroWeightEndpoint(usize),
    #[error("time step {dt} rejected; retry with dt <= {suggested}")]
    StepRejected { dt: f64, suggested: f64 },
    #[error("potential lost convexity at node {0} and the step size floor was reached")]
    ConvexityLoss(usize),
    #[error("flow blew up: max |S| = {0:.3e} exceeds the configured cap")]
    BlowUpDetected(f64),
    #[error("flow requires a one-dimensional polytope")]
    NotOneDimensional,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error("input is not unstable; nothing to decompose")]
    NotUnstable,
    #[error("subgradient clusters do not resolve into creases: {0}")]
    CreaseResolutionFailure(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
