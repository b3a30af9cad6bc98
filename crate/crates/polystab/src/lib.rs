//! Stability analysis for measured moment polytopes.
//!
//! The crate answers three questions about a convex polytope `P` carrying a
//! weighted boundary measure `d\sigma` and Lebesgue interior measure `d\mu`:
//!
//! 1. Which convex function destabilises `(P, d\sigma)` the most?  The
//!    [`destabilizer`] module minimises `L(f) + ||f||^2 / 2` over a discrete
//!    cone of convex grid functions, where
//!    `L(f) = \int_{\partial P} f d\sigma - \hat S \int_P f d\mu`
//!    and `\hat S` is the mean boundary density.  The minimiser `Phi`
//!    classifies the input as stable, strictly semistable or unstable and is
//!    returned with optimality certificates.
//! 2. If the destabiliser is piecewise linear, how does `P` break up?  The
//!    [`decomposition`] module extracts the maximal subpolytopes on which
//!    `Phi` is affine and verifies each piece is semistable for its inherited
//!    measure.
//! 3. Does the Calabi flow see the same obstruction?  The [`calabiflow`]
//!    module integrates the fourth-order flow of symplectic potentials on an
//!    interval and reports the monotone quantities that connect the flow to
//!    the destabiliser.
//!
//! Geometry is exact where it matters: volumes, boundary measures and moments
//! up to degree two are computed in rational arithmetic, and simple crease
//! functions are integrated by exact polytope clipping.  Floating point is
//! used for quadrature-backed functionals, the QP solver and the flow.

pub mod calabiflow;
pub mod convexcone;
pub mod decomposition;
pub mod destabilizer;
pub mod error;
pub mod exec;
pub mod functionals;
pub mod geometry;
pub mod rat;

pub use destabilizer::{
    brute_force_oracle, certificate_check, restart_variants, semistability_test,
    solve_optimal_destabilizer, solve_with_density, Density, DestabilizerResult, SelectionRule,
    SolveOptions, StabilityReport, Verdict,
};
pub use decomposition::{
    decompose, detect_piecewise_linear, extract_pieces, trapezium_reference, verify_piece,
    DecompositionOptions, DecompositionReport, Piece, PieceReport, TrapeziumReference,
};
pub use calabiflow::{
    coercivity_estimate, FlowDiagnostics, FlowModel, FlowSample, FlowState, RunConfig,
};
pub use error::{DecompositionError, FlowError, GeometryError, SolverError};
pub use geometry::{build_quadrature, parse_polytope, Facet, Polytope, Quadrature, ScalarSummary};
