//! Command-line front end: parse polytope specs, run the stability
//! analyses, and emit machine-readable reports and plot data.
//!
//! Exit codes: 0 stable, 10 strictly semistable, 20 unstable, 1 error.

mod expr;
mod report;
mod svg;
mod sweep;

use clap::{Parser, Subcommand};
use polystab::calabiflow::{coercivity_estimate, FlowDiagnostics, FlowModel, RunConfig};
use polystab::decomposition::{self, DecompositionOptions, DecompositionReport};
use polystab::destabilizer::{
    semistability_test, solve_optimal_destabilizer, DestabilizerResult, StabilityReport, Verdict,
};
use polystab::error::{DecompositionError, FlowError, GeometryError, SolverError};
use polystab::functionals::{extremal_affine, AffineFunction};
use polystab::geometry::{build_quadrature, parse_polytope, MeshSettings, Polytope, Quadrature};
use report::{
    AffineText, DecompositionSummary, FlowSummary, InputEcho, ProblemSummary, RunReport, Timing,
    Tool,
};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::exit;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "polystab",
    version,
    about = "Stability analysis of polarised toric data from the moment polytope"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a polytope spec; writes report.json and phi.csv.
    Analyze {
        spec: PathBuf,
        /// Override the mesh resolution from the spec.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Split an unstable polytope along the minimiser's creases; writes
    /// decomposition.json.
    Decompose {
        spec: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the potential flow on a one-dimensional spec; writes flow.csv
    /// and report.json, plus flow.svg with --plot.
    Flow {
        spec: PathBuf,
        #[arg(long = "t-end", default_value_t = 1.0)]
        t_end: f64,
        /// Initial perturbation of the model potential, e.g. "0.5*x*(1-x)".
        #[arg(long)]
        perturb: Option<String>,
        /// Also write SVG line charts of the diagnostics.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Analyze a named parameter family; writes per-item reports and an
    /// index.json verdict table.
    Sweep {
        /// Family name: trapezium, interval or longthin.
        family: String,
        /// Comma-separated parameter values (decimals or fractions).
        #[arg(long)]
        values: String,
        /// Concurrent items; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::new("geometry", e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::new("solver", e.to_string())
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        CliError::new("flow", e.to_string())
    }
}

impl From<DecompositionError> for CliError {
    fn from(e: DecompositionError) -> Self {
        CliError::new("decomposition", e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter("POLYSTAB_LOG")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => exit(code),
        Err(e) => {
            let obj = serde_json::json!({ "error": { "kind": e.kind, "message": e.message } });
            eprintln!("{obj}");
            exit(1);
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Analyze {
            spec,
            resolution,
            seed,
            out,
        } => cmd_analyze(&spec, resolution, seed, &out),
        Command::Decompose {
            spec,
            resolution,
            seed,
            out,
        } => cmd_decompose(&spec, resolution, seed, &out),
        Command::Flow {
            spec,
            t_end,
            perturb,
            plot,
            resolution,
            seed,
            out,
        } => cmd_flow(&spec, t_end, perturb.as_deref(), plot, resolution, seed, &out),
        Command::Sweep {
            family,
            values,
            jobs,
            resolution,
            seed,
            out,
        } => cmd_sweep(&family, &values, jobs, resolution, seed, &out),
    }
}

// ---------------------------------------------------------------------------
// Shared pipeline

struct Analysis {
    poly: Polytope,
    quad: Quadrature,
    mesh: MeshSettings,
    stability: StabilityReport,
    mean: DestabilizerResult,
    input: InputEcho,
}

fn read_spec(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))
}

fn sha256_hex(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn mesh_for(defaults: MeshSettings, resolution: Option<usize>) -> MeshSettings {
    match resolution {
        Some(r) => MeshSettings {
            resolution: r,
            grading: defaults.grading,
        },
        None => defaults,
    }
}

/// Parse, mesh and run both minimisation problems for a document.
fn analyze_document(
    source: &str,
    text: &str,
    resolution: Option<usize>,
    seed: u64,
) -> CliResult<Analysis> {
    let (poly, defaults) = parse_polytope(text)?;
    let mesh = mesh_for(defaults, resolution);
    let quad = build_quadrature(&poly, &mesh)?;
    let opts = polystab::destabilizer::SolveOptions {
        seed,
        ..Default::default()
    };
    log::info!(
        "analyzing {source}: dim {} with {} nodes at resolution {}",
        poly.dim,
        quad.num_nodes(),
        mesh.resolution
    );
    let stability = semistability_test(&poly, &quad, &opts)?;
    let mean = solve_optimal_destabilizer(&poly, &quad, &opts)?;
    let input = InputEcho {
        source: source.to_string(),
        sha256: sha256_hex(text),
        dim: poly.dim,
        facets: poly.facets.len(),
        resolution: mesh.resolution,
        grading: mesh.grading,
        seed,
    };
    Ok(Analysis {
        poly,
        quad,
        mesh,
        stability,
        mean,
        input,
    })
}

/// Overall classification and exit code.  Strict semistability of the
/// relative problem wins; otherwise stability demands that the mean-boundary
/// minimiser vanish as well (constant extremal density).
fn overall(a: &Analysis) -> (&'static str, i32) {
    if a.stability.verdict == Verdict::SemistableStrict {
        ("semistable", 10)
    } else if a.stability.verdict == Verdict::Stable && a.mean.verdict == Verdict::Stable {
        ("stable", 0)
    } else {
        ("unstable", 20)
    }
}

fn run_report(a: &Analysis, started: Instant) -> RunReport {
    let (verdict, _) = overall(a);
    RunReport {
        tool: Tool::current(),
        input: a.input.clone(),
        scalar_summary: a.poly.scalar_summary(),
        extremal_affine: Some(AffineText::from_exact(&a.stability.extremal)),
        verdict: Some(verdict.to_string()),
        relative: Some(ProblemSummary::from_stability(&a.stability)),
        mean_problem: Some(ProblemSummary::from_result(&a.mean)),
        decomposition: None,
        flow: None,
        timing: Timing {
            wall_ms: started.elapsed().as_millis(),
        },
    }
}

fn phi_csv(quad: &Quadrature, result: &DestabilizerResult) -> String {
    let dim = quad.dim;
    let mut out = String::new();
    out.push_str(if dim == 1 { "x" } else { "x,y" });
    out.push_str(",phi,b_density\n");
    for (i, node) in quad.mesh_nodes.iter().enumerate() {
        for c in node {
            let _ = write!(out, "{c},");
        }
        let _ = writeln!(out, "{},{}", result.phi[i], result.b_density[i]);
    }
    out
}

fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new("io", e.to_string()))?;
    write_atomic(path, &(text + "\n"))
}

// ---------------------------------------------------------------------------
// analyze

fn cmd_analyze(spec: &Path, resolution: Option<usize>, seed: u64, out: &Path) -> CliResult<i32> {
    let started = Instant::now();
    let text = read_spec(spec)?;
    let a = analyze_document(&spec.display().to_string(), &text, resolution, seed)?;
    let report = run_report(&a, started);
    write_json(&out.join("report.json"), &report)?;
    write_atomic(&out.join("phi.csv"), &phi_csv(&a.quad, &a.mean))?;
    let (_, code) = overall(&a);
    Ok(code)
}

// ---------------------------------------------------------------------------
// decompose

#[derive(Serialize)]
struct FacetText {
    normal: Vec<String>,
    offset: String,
    sigma_weight: String,
}

#[derive(Serialize)]
struct PieceText {
    facets: Vec<FacetText>,
    local_density: AffineText,
    nodes: usize,
    verdict: String,
    density_gap: f64,
    phi_norm: f64,
}

#[derive(Serialize)]
struct DecompositionDoc {
    tool: Tool,
    input: InputEcho,
    summary: DecompositionSummary,
    pieces: Vec<PieceText>,
    timing: Timing,
}

fn decomposition_doc(
    a: &Analysis,
    report: &DecompositionReport,
    started: Instant,
) -> DecompositionDoc {
    let pieces = report
        .pieces
        .iter()
        .zip(&report.reports)
        .map(|(piece, pr)| PieceText {
            facets: piece
                .subpolytope
                .facets
                .iter()
                .map(|f| FacetText {
                    normal: f.normal.iter().map(|n| n.to_string()).collect(),
                    offset: f.offset.to_string(),
                    sigma_weight: f.sigma_weight.to_string(),
                })
                .collect(),
            local_density: AffineText::from_exact(&piece.local_exact),
            nodes: piece.node_set.len(),
            verdict: pr.stability.verdict.to_string(),
            density_gap: pr.density_gap,
            phi_norm: pr.stability.relative.phi_norm,
        })
        .collect();
    DecompositionDoc {
        tool: Tool::current(),
        input: a.input.clone(),
        summary: DecompositionSummary::from_report(report),
        pieces,
        timing: Timing {
            wall_ms: started.elapsed().as_millis(),
        },
    }
}

fn cmd_decompose(spec: &Path, resolution: Option<usize>, seed: u64, out: &Path) -> CliResult<i32> {
    let started = Instant::now();
    let text = read_spec(spec)?;
    let a = analyze_document(&spec.display().to_string(), &text, resolution, seed)?;
    let opts = DecompositionOptions {
        settings: a.mesh,
        solve: polystab::destabilizer::SolveOptions {
            seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let report = decomposition::decompose(&a.poly, &a.quad, &a.mean, &opts)?;
    let doc = decomposition_doc(&a, &report, started);
    write_json(&out.join("decomposition.json"), &doc)?;
    if !report.pl_detected {
        return Err(CliError::new(
            "decomposition",
            format!(
                "minimiser is not piecewise linear at this resolution \
                 ({} subgradient clusters, residual above tolerance); \
                 decomposition.json holds the cluster histogram",
                report.clusters.len()
            ),
        ));
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// flow

fn cmd_flow(
    spec: &Path,
    t_end: f64,
    perturb: Option<&str>,
    plot: bool,
    resolution: Option<usize>,
    seed: u64,
    out: &Path,
) -> CliResult<i32> {
    let started = Instant::now();
    let text = read_spec(spec)?;
    let (poly, defaults) = parse_polytope(&text)?;
    let mesh = mesh_for(defaults, resolution);
    let model = FlowModel::new(&poly, &mesh)?;
    let expression = match perturb {
        Some(src) => Some(expr::parse(src).map_err(|m| CliError::new("perturb", m))?),
        None => None,
    };
    let state = model.initial_state(|x| expression.as_ref().map_or(0.0, |e| e.eval(x)))?;

    // The flow target is the extremal affine density; for a constant
    // extremal this is the mean boundary density.
    let extremal = extremal_affine(&poly)?;
    let a_fn = AffineFunction::from_rat(&extremal);
    let target: Vec<f64> = model.nodes().iter().map(|&x| a_fn.eval(&[x])).collect();
    let s0 = model.weak_curvature(&state)?;
    let lambda = coercivity_estimate(&model.poly, &model.quad, s0.as_slice(), 128, seed);
    log::info!(
        "flow on {} nodes to t = {t_end}; coercivity estimate {lambda:.4}",
        model.num_nodes()
    );

    let mut cfg = RunConfig::to_time(t_end);
    cfg.target = Some(target);
    cfg.target_tol = Some(1e-3);
    let (_, diagnostics) = model.run(state, &cfg)?;

    let mut csv = Vec::new();
    diagnostics
        .write_csv(&mut csv)
        .map_err(|e| CliError::new("io", e.to_string()))?;
    write_atomic(
        &out.join("flow.csv"),
        std::str::from_utf8(&csv).expect("csv is ascii"),
    )?;
    if plot {
        write_atomic(&out.join("flow.svg"), &flow_chart(&diagnostics))?;
    }

    let samples = &diagnostics.samples;
    let first = samples.first().expect("run always records the start");
    let last = samples.last().expect("run always records the start");
    let monotone = samples
        .windows(2)
        .all(|p| p[1].calabi_energy <= p[0].calabi_energy + 1e-10);
    let report = RunReport {
        tool: Tool::current(),
        input: InputEcho {
            source: spec.display().to_string(),
            sha256: sha256_hex(&text),
            dim: poly.dim,
            facets: poly.facets.len(),
            resolution: mesh.resolution,
            grading: mesh.grading,
            seed,
        },
        scalar_summary: poly.scalar_summary(),
        extremal_affine: Some(AffineText::from_exact(&extremal)),
        verdict: None,
        relative: None,
        mean_problem: None,
        decomposition: None,
        flow: Some(FlowSummary {
            t_end,
            reached_time: last.time,
            accepted_steps: diagnostics.accepted_steps(),
            initial_calabi_energy: first.calabi_energy,
            final_calabi_energy: last.calabi_energy,
            final_target_residual: last.target_residual,
            monotone_energy: monotone,
            coercivity_lambda: lambda,
        }),
        timing: Timing {
            wall_ms: started.elapsed().as_millis(),
        },
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(0)
}

fn flow_chart(diagnostics: &FlowDiagnostics) -> String {
    // A chart does not need more points than it has horizontal pixels.
    let stride = (diagnostics.samples.len() / 2048).max(1);
    let thin = |f: fn(&polystab::FlowSample) -> f64| -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = diagnostics
            .samples
            .iter()
            .step_by(stride)
            .map(|s| (s.time, f(s)))
            .collect();
        if let Some(last) = diagnostics.samples.last() {
            if pts.last().map(|p| p.0) != Some(last.time) {
                pts.push((last.time, f(last)));
            }
        }
        pts
    };
    let energy = thin(|s| s.calabi_energy);
    let residual = thin(|s| s.target_residual);
    svg::line_chart(
        "Flow diagnostics",
        &[
            svg::Series {
                name: "calabi_energy",
                color: "#1f77b4",
                points: &energy,
            },
            svg::Series {
                name: "target_residual",
                color: "#d62728",
                points: &residual,
            },
        ],
    )
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Serialize)]
struct IndexEntry {
    value: String,
    dir: String,
    verdict: String,
    s_hat: Option<f64>,
    phi_norm: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct IndexDoc {
    tool: Tool,
    family: String,
    seed: u64,
    resolution: Option<usize>,
    items: Vec<IndexEntry>,
    timing: Timing,
}

fn cmd_sweep(
    family: &str,
    values: &str,
    jobs: Option<usize>,
    resolution: Option<usize>,
    seed: u64,
    out: &Path,
) -> CliResult<i32> {
    let started = Instant::now();
    let family: sweep::Family = family
        .parse()
        .map_err(|m: String| CliError::new("usage", m))?;
    let values = sweep::parse_values(values).map_err(|m| CliError::new("usage", m))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::new("usage", e.to_string()))?;

    use rayon::prelude::*;
    let items: Vec<IndexEntry> = pool.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(i, (token, value))| {
                let dir_name = format!("{}_{:02}_{}", family.name(), i, sweep::sanitize(token));
                let item_dir = out.join(&dir_name);
                let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                    sweep_item(family, token, value, resolution, seed, &item_dir)
                }));
                let mut entry = IndexEntry {
                    value: token.clone(),
                    dir: dir_name,
                    verdict: "error".into(),
                    s_hat: None,
                    phi_norm: None,
                    error: None,
                };
                match outcome {
                    Ok(Ok(done)) => {
                        entry.verdict = done.verdict;
                        entry.s_hat = Some(done.s_hat);
                        entry.phi_norm = Some(done.phi_norm);
                    }
                    Ok(Err(e)) => entry.error = Some(format!("{}: {}", e.kind, e.message)),
                    Err(_) => entry.error = Some("panic during analysis".into()),
                }
                entry
            })
            .collect()
    });

    let doc = IndexDoc {
        tool: Tool::current(),
        family: family.name().to_string(),
        seed,
        resolution,
        items,
        timing: Timing {
            wall_ms: started.elapsed().as_millis(),
        },
    };
    write_json(&out.join("index.json"), &doc)?;
    Ok(0)
}

struct ItemDone {
    verdict: String,
    s_hat: f64,
    phi_norm: f64,
}

fn sweep_item(
    family: sweep::Family,
    token: &str,
    value: &polystab::rat::Rat,
    resolution: Option<usize>,
    seed: u64,
    dir: &Path,
) -> CliResult<ItemDone> {
    let started = Instant::now();
    let text = family
        .spec_json(value)
        .map_err(|m| CliError::new("family", m))?;
    let source = format!("{}:{}", family.name(), token);
    let a = analyze_document(&source, &text, resolution, seed)?;
    write_atomic(&dir.join("spec.json"), &(text + "\n"))?;
    let report = run_report(&a, started);
    write_json(&dir.join("report.json"), &report)?;
    write_atomic(&dir.join("phi.csv"), &phi_csv(&a.quad, &a.mean))?;
    let (verdict, _) = overall(&a);
    Ok(ItemDone {
        verdict: verdict.to_string(),
        s_hat: a.poly.scalar_summary().s_hat,
        phi_norm: a.mean.phi_norm,
    })
}
