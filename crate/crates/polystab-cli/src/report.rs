//! Serialisable report schema.  Field order is declaration order, so a
//! report is byte-identical across runs with the same inputs; everything
//! that varies run-to-run lives under `timing`.

use polystab::decomposition::DecompositionReport;
use polystab::destabilizer::{Certificates, DestabilizerResult, StabilityReport};
use polystab::geometry::{AffineRat, ScalarSummary};
use serde::Serialize;

#[derive(Serialize)]
pub struct RunReport {
    pub tool: Tool,
    pub input: InputEcho,
    pub scalar_summary: ScalarSummary,
    pub extremal_affine: Option<AffineText>,
    /// Overall classification: stable | semistable | unstable.
    pub verdict: Option<String>,
    pub relative: Option<ProblemSummary>,
    pub mean_problem: Option<ProblemSummary>,
    pub decomposition: Option<DecompositionSummary>,
    pub flow: Option<FlowSummary>,
    pub timing: Timing,
}

#[derive(Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

impl Tool {
    pub fn current() -> Self {
        Tool {
            name: "polystab",
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Serialize, Clone)]
pub struct InputEcho {
    pub source: String,
    pub sha256: String,
    pub dim: usize,
    pub facets: usize,
    pub resolution: usize,
    pub grading: f64,
    pub seed: u64,
}

/// Exact affine function rendered as rational strings.
#[derive(Serialize)]
pub struct AffineText {
    pub gradient: Vec<String>,
    pub constant: String,
}

impl AffineText {
    pub fn from_exact(a: &AffineRat) -> Self {
        AffineText {
            gradient: a.gradient.iter().map(|g| g.to_string()).collect(),
            constant: a.constant.to_string(),
        }
    }
}

#[derive(Serialize)]
pub struct ProblemSummary {
    pub verdict: String,
    pub phi_norm: f64,
    pub l_phi: f64,
    pub w_value: f64,
    pub trusted: bool,
    pub marginal: bool,
    pub iterations: usize,
    pub active_constraints: usize,
    pub certificates: Certificates,
    pub witness: Option<WitnessText>,
    pub kernel_creases: Option<usize>,
    pub artifact_tol: Option<f64>,
}

impl ProblemSummary {
    pub fn from_result(r: &DestabilizerResult) -> Self {
        ProblemSummary {
            verdict: r.verdict.to_string(),
            phi_norm: r.phi_norm,
            l_phi: r.l_phi,
            w_value: r.w_value,
            trusted: r.trusted,
            marginal: r.marginal,
            iterations: r.iterations,
            active_constraints: r.active_constraints,
            certificates: r.certificates,
            witness: None,
            kernel_creases: None,
            artifact_tol: None,
        }
    }

    pub fn from_stability(report: &StabilityReport) -> Self {
        let mut s = Self::from_result(&report.relative);
        s.verdict = report.verdict.to_string();
        s.witness = report.witness.as_ref().map(|w| WitnessText {
            crease: AffineText::from_exact(&w.ell),
            l_value: w.l_value.to_string(),
            deviation: w.deviation.as_ref().map(|d| d.to_string()),
        });
        s.kernel_creases = Some(report.scan.kernel.len());
        s.artifact_tol = Some(report.artifact_tol);
        s
    }
}

/// Crease certificate: the hinge locus `max(ell, 0)` bends along `ell = 0`.
#[derive(Serialize)]
pub struct WitnessText {
    pub crease: AffineText,
    pub l_value: String,
    pub deviation: Option<String>,
}

#[derive(Serialize)]
pub struct DecompositionSummary {
    pub pl_detected: bool,
    pub clusters: usize,
    pub histogram: Vec<usize>,
    pub pieces: usize,
    pub volume_defect: f64,
    pub concavity_ok: bool,
    pub piece_verdicts: Vec<String>,
    pub density_gaps: Vec<f64>,
}

impl DecompositionSummary {
    pub fn from_report(r: &DecompositionReport) -> Self {
        DecompositionSummary {
            pl_detected: r.pl_detected,
            clusters: r.clusters.len(),
            histogram: r.histogram.clone(),
            pieces: r.pieces.len(),
            volume_defect: r.volume_defect,
            concavity_ok: r.concavity_ok,
            piece_verdicts: r
                .reports
                .iter()
                .map(|p| p.stability.verdict.to_string())
                .collect(),
            density_gaps: r.reports.iter().map(|p| p.density_gap).collect(),
        }
    }
}

#[derive(Serialize)]
pub struct FlowSummary {
    pub t_end: f64,
    pub reached_time: f64,
    pub accepted_steps: usize,
    pub initial_calabi_energy: f64,
    pub final_calabi_energy: f64,
    pub final_target_residual: f64,
    pub monotone_energy: bool,
    pub coercivity_lambda: f64,
}

#[derive(Serialize)]
pub struct Timing {
    pub wall_ms: u128,
}
