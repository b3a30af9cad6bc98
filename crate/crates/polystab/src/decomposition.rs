//! Piecewise-linear structure of a destabilising minimiser.
//!
//! When the optimal convex destabiliser is piecewise linear, its linearity
//! regions cut the polytope into weighted subpolytopes on which the glued
//! density restricts to an affine function, and each piece can be re-tested
//! for semistability on its own.  This module detects that structure from the
//! mesh solution (a diagnostic, never a proof), extracts the pieces with
//! exact rational cuts, and runs the per-piece verification.

use crate::destabilizer::{
    self, Density, DestabilizerResult, SolveOptions, StabilityReport, Verdict,
};
use crate::error::{DecompositionError, GeometryError, SolverError};
use crate::exec;
use crate::functionals::{self, AffineFunction};
use crate::geometry::{build_quadrature, AffineRat, Facet, MeshSettings, Polytope, Quadrature};
use crate::rat::{self, rat_int, snap_f64, Rat};
use nalgebra::{DMatrix, DVector};
use num::{One, Signed, Zero};

/// Denominator cap when snapping fitted crease coefficients to rationals.
const SNAP_DENOM: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct DecompositionOptions {
    /// Clustering and fit tolerance factor; `None` derives `10 * sqrt(h)`
    /// from the mesh spacing.
    pub cluster_tol: Option<f64>,
    /// Largest cluster count still reported as piecewise linear.
    pub max_pieces: usize,
    /// Mesh settings for per-piece verification; keep them equal to the
    /// settings the minimiser was computed with.
    pub settings: MeshSettings,
    /// Solver options for per-piece verification.
    pub solve: SolveOptions,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        DecompositionOptions {
            cluster_tol: None,
            max_pieces: 12,
            settings: MeshSettings::default(),
            solve: SolveOptions::default(),
        }
    }
}

/// Nodes sharing one supporting plane of the minimiser.
#[derive(Debug, Clone)]
pub struct SubgradientCluster {
    /// Mesh node indices assigned to this plane.
    pub nodes: Vec<usize>,
    /// Affine fit of the minimiser over the cluster.
    pub affine: AffineFunction,
    /// Mass-weighted fit residual over the cluster.
    pub residual: f64,
}

/// Outcome of the piecewise-linear probe.
#[derive(Debug, Clone)]
pub struct PlDetection {
    /// Set when the cluster count stays under the cap and the affine fits
    /// reproduce the minimiser within tolerance.
    pub pl_detected: bool,
    pub clusters: Vec<SubgradientCluster>,
    /// Cluster sizes, largest first; the diagnostic that remains meaningful
    /// when `pl_detected` is false.
    pub histogram: Vec<usize>,
    /// Total mass-weighted fit residual across clusters.
    pub fit_residual: f64,
    /// Tolerance factor the verdict was taken at.
    pub tol: f64,
}

/// One linearity region of the glued density.
#[derive(Debug, Clone)]
pub struct Piece {
    /// The region with its boundary measure: original facets keep their
    /// weights, cut facets carry weight zero.
    pub subpolytope: Polytope,
    /// Restriction of the glued density to the region.
    pub local_density: AffineFunction,
    /// The same restriction with exact coefficients, as used for the cuts.
    pub local_exact: AffineRat,
    /// Mesh nodes of the parent quadrature lying in the region; crease nodes
    /// appear in every region containing them.
    pub node_set: Vec<usize>,
}

/// Per-piece verification outcome.
#[derive(Debug)]
pub struct PieceReport {
    pub stability: StabilityReport,
    /// Largest deviation over the piece vertices between the piece's own
    /// extremal affine density and the restriction of the glued density.
    pub density_gap: f64,
}

#[derive(Debug)]
pub struct DecompositionReport {
    pub pl_detected: bool,
    pub clusters: Vec<SubgradientCluster>,
    pub histogram: Vec<usize>,
    /// Empty when `pl_detected` is false.
    pub pieces: Vec<Piece>,
    pub reports: Vec<PieceReport>,
    /// Piece densities glue into a concave piecewise-affine function: each
    /// piece's density is minimal among all piece densities on its own nodes.
    pub concavity_ok: bool,
    /// Relative defect of the exact piece volumes against the polytope
    /// volume; zero for a genuine partition.
    pub volume_defect: f64,
}

/// Clusters mesh subgradients into candidate supporting planes and tests
/// whether affine fits over the clusters reproduce the minimiser.  Crease
/// nodes carry intermediate subgradients and seed spurious thin clusters;
/// the value-based reassignment pass empties those before the verdict.
pub fn detect_piecewise_linear(
    poly: &Polytope,
    quad: &Quadrature,
    phi: &[f64],
    subgradients: &[Vec<f64>],
    opts: &DecompositionOptions,
) -> PlDetection {
    let n = quad.num_nodes();
    assert_eq!(phi.len(), n);
    assert_eq!(subgradients.len(), n);
    let masses = quad.interior_vector();
    let phi_norm = {
        let v = DVector::from_column_slice(phi);
        (quad.mass() * &v).dot(&v).max(0.0).sqrt()
    };
    let h = mesh_spacing(quad);
    let tol = opts.cluster_tol.unwrap_or_else(|| 0.5 * h.sqrt());

    // A vanishing minimiser has the zero plane as its single region.
    if phi_norm <= 1e-7 * quad.vol_sigma {
        let cluster = SubgradientCluster {
            nodes: (0..n).collect(),
            affine: AffineFunction::constant_fn(quad.dim, 0.0),
            residual: 0.0,
        };
        return PlDetection {
            pl_detected: true,
            histogram: vec![n],
            clusters: vec![cluster],
            fit_residual: 0.0,
            tol,
        };
    }

    let amp = phi_norm / quad.vol_mu.sqrt();
    let grad_tol = tol * amp / poly.diameter().max(1e-300);
    // Planes closer than the gradient noise over one cell are one plane.
    let val_tol = grad_tol * h;

    // Leader pass over the subgradients, in node order for determinism.
    let mut assign = vec![usize::MAX; n];
    let mut leaders: Vec<&Vec<f64>> = Vec::new();
    for i in 0..n {
        let s = &subgradients[i];
        let hit = leaders
            .iter()
            .position(|l| dist(l, s) <= grad_tol)
            .unwrap_or_else(|| {
                leaders.push(s);
                leaders.len() - 1
            });
        assign[i] = hit;
    }

    // Alternate affine refits with value-based reassignment: on a genuinely
    // piecewise-linear minimiser the value gap to the correct plane is zero
    // while the subgradient of a crease node is ambiguous.  Ties collapse to
    // the lowest cluster index, which empties the spurious thin clusters
    // seeded by crease and corner nodes.
    let tie = 1e-12 * (1.0 + amp);
    let mut affines = Vec::new();
    for _ in 0..3 {
        affines = fit_clusters(quad, phi, &assign, leaders.len(), masses);
        for i in 0..n {
            let x = &quad.mesh_nodes[i];
            let mut best = 0;
            let mut best_gap = gap(&affines[0], x, phi[i]);
            for (j, a) in affines.iter().enumerate().skip(1) {
                let g = gap(a, x, phi[i]);
                if g < best_gap - tie {
                    best = j;
                    best_gap = g;
                }
            }
            assign[i] = best;
        }
    }

    // Merge clusters whose planes agree across the whole mesh, drop emptied
    // ones, and renumber in first-node order.
    let mut canon: Vec<usize> = (0..affines.len()).collect();
    for j in 0..affines.len() {
        for k in j + 1..affines.len() {
            if canon[k] != k {
                continue;
            }
            let sep = quad
                .mesh_nodes
                .iter()
                .map(|x| (affines[j].eval(x) - affines[k].eval(x)).abs())
                .fold(0.0_f64, f64::max);
            if sep <= val_tol && canon[j] == j {
                canon[k] = j;
            }
        }
    }
    for a in assign.iter_mut() {
        *a = canon[*a];
    }
    let mut order: Vec<usize> = Vec::new();
    for &a in &assign {
        if !order.contains(&a) {
            order.push(a);
        }
    }
    let relabel: Vec<usize> = assign
        .iter()
        .map(|a| order.iter().position(|o| o == a).unwrap())
        .collect();
    let affines = fit_clusters(quad, phi, &relabel, order.len(), masses);

    let mut clusters: Vec<SubgradientCluster> = affines
        .into_iter()
        .map(|affine| SubgradientCluster {
            nodes: Vec::new(),
            affine,
            residual: 0.0,
        })
        .collect();
    let mut fit_sq = 0.0;
    for i in 0..n {
        let c = &mut clusters[relabel[i]];
        let g = gap(&c.affine, &quad.mesh_nodes[i], phi[i]);
        c.nodes.push(i);
        c.residual += masses[i] * g * g;
        fit_sq += masses[i] * g * g;
    }
    for c in clusters.iter_mut() {
        c.residual = c.residual.sqrt();
    }
    let fit_residual = fit_sq.sqrt();
    let mut histogram: Vec<usize> = clusters.iter().map(|c| c.nodes.len()).collect();
    histogram.sort_unstable_by(|a, b| b.cmp(a));
    let pl_detected = clusters.len() <= opts.max_pieces && fit_residual <= tol * phi_norm;
    PlDetection {
        pl_detected,
        clusters,
        histogram,
        fit_residual,
        tol,
    }
}

/// Cuts the polytope into the regions where each cluster's plane dominates.
/// Cut facets carry weight zero in the boundary measure; the cuts themselves
/// are exact, from rational snaps of the fitted coefficients.
pub fn extract_pieces(
    poly: &Polytope,
    quad: &Quadrature,
    density: &Density,
    detection: &PlDetection,
) -> Result<Vec<Piece>, DecompositionError> {
    let planes: Vec<AffineRat> = detection
        .clusters
        .iter()
        .map(|c| snap_affine(&c.affine))
        .collect();
    let density_exact = match density {
        Density::MeanBoundary => {
            let (_, _, s_hat) = poly.scalar_summary_exact();
            AffineRat::new(vec![Rat::zero(); poly.dim], s_hat)
        }
        Density::Affine(a) => snap_affine(a),
    };

    let mut pieces = Vec::with_capacity(planes.len());
    for (j, pj) in planes.iter().enumerate() {
        let mut region = poly.clone();
        for (k, pk) in planes.iter().enumerate() {
            if k == j {
                continue;
            }
            // The region of plane j: p_j >= p_k for every k.
            let a: Vec<Rat> = pj
                .gradient
                .iter()
                .zip(&pk.gradient)
                .map(|(gj, gk)| gj - gk)
                .collect();
            let c = &pk.constant - &pj.constant;
            if a.iter().all(Rat::is_zero) {
                return Err(DecompositionError::CreaseResolutionFailure(format!(
                    "clusters {k} and {j} fit parallel planes; the mesh does not separate them"
                )));
            }
            region = region.intersect_halfplane(&a, &c, Rat::zero()).map_err(
                |e: GeometryError| {
                    DecompositionError::CreaseResolutionFailure(format!(
                        "region of cluster {j} degenerates under the cut against cluster {k}: {e}"
                    ))
                },
            )?;
        }
        let local_exact = AffineRat::new(
            density_exact
                .gradient
                .iter()
                .zip(&pj.gradient)
                .map(|(d, g)| d - g)
                .collect(),
            &density_exact.constant - &pj.constant,
        );
        let node_set: Vec<usize> = quad
            .mesh_nodes_exact
            .iter()
            .enumerate()
            .filter(|(_, x)| region.contains(x))
            .map(|(i, _)| i)
            .collect();
        pieces.push(Piece {
            subpolytope: region,
            local_density: AffineFunction::from_rat(&local_exact),
            local_exact,
            node_set,
        });
    }
    Ok(pieces)
}

/// Re-meshes the piece at the configured resolution and classifies it
/// relative to its own extremal affine density, reporting how far that
/// density sits from the restriction of the glued one.
pub fn verify_piece(piece: &Piece, opts: &DecompositionOptions) -> Result<PieceReport, SolverError> {
    let quad = build_quadrature(&piece.subpolytope, &opts.settings)?;
    let stability = destabilizer::semistability_test(&piece.subpolytope, &quad, &opts.solve)?;
    let density_gap = piece
        .subpolytope
        .vertices_f64()
        .iter()
        .map(|v| (stability.extremal.eval_f64(v) - piece.local_density.eval(v)).abs())
        .fold(0.0_f64, f64::max);
    Ok(PieceReport {
        stability,
        density_gap,
    })
}

/// Full pipeline: probe the minimiser for piecewise-linear structure, cut
/// out the pieces, verify each, and check the global invariants (exact
/// coverage, concave glue).  Refuses anything but an unstable minimiser.
pub fn decompose(
    poly: &Polytope,
    quad: &Quadrature,
    result: &DestabilizerResult,
    opts: &DecompositionOptions,
) -> Result<DecompositionReport, DecompositionError> {
    if result.verdict != Verdict::Unstable {
        return Err(DecompositionError::NotUnstable);
    }
    let detection = detect_piecewise_linear(poly, quad, &result.phi, &result.subgradients, opts);
    if !detection.pl_detected {
        return Ok(DecompositionReport {
            pl_detected: false,
            histogram: detection.histogram,
            clusters: detection.clusters,
            pieces: Vec::new(),
            reports: Vec::new(),
            concavity_ok: false,
            volume_defect: 0.0,
        });
    }
    let pieces = extract_pieces(poly, quad, &result.density, &detection)?;

    // Max-plane regions meet only in their shared crease, so the exact piece
    // volumes must add up to the polytope volume on the nose.
    let vol = poly.interior_moments().c;
    let covered: Rat = pieces
        .iter()
        .map(|p| p.subpolytope.interior_moments().c)
        .sum();
    let volume_defect = rat::to_f64(&((&covered - &vol) / &vol)).abs();
    if volume_defect > 1e-10 {
        return Err(DecompositionError::CreaseResolutionFailure(format!(
            "piece volumes miss the polytope volume by a relative {volume_defect:.3e}"
        )));
    }

    // Concave glue: on its own nodes every piece's density is the smallest.
    // Exact arithmetic, no tolerance; crease nodes tie.
    let concavity_ok = pieces.iter().all(|p| {
        p.node_set.iter().all(|&i| {
            let x = &quad.mesh_nodes_exact[i];
            let own = p.local_exact.eval(x);
            pieces.iter().all(|q| own <= q.local_exact.eval(x))
        })
    });

    let outcomes = exec::map_collect(opts.solve.mode, &pieces, |p| verify_piece(p, opts));
    let mut reports = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        reports.push(o.map_err(|e| {
            DecompositionError::CreaseResolutionFailure(format!("piece verification failed: {e}"))
        })?);
    }

    Ok(DecompositionReport {
        pl_detected: true,
        histogram: detection.histogram,
        clusters: detection.clusters,
        pieces,
        reports,
        concavity_ok,
        volume_defect,
    })
}

// ---------------------------------------------------------------------------
// Trapezium reference family

/// Closed-form reference data for the trapezium family
/// `0 <= x <= 1`, `0 <= y <= 1 + (l - 1) x` with unit weights on the two
/// vertical sides and weightless horizontals.  Exact throughout; serves as an
/// independent oracle for the moment solve and the crease functional.
#[derive(Debug, Clone)]
pub struct TrapeziumReference {
    pub l: Rat,
    /// The extremal affine density `A(x) = (12 (l^2-1) x - 6 (l^2-2l-1)) / (l^2+4l+1)`.
    pub affine: AffineRat,
    /// Mean boundary density; equals 2 for every `l`.
    pub s_hat: Rat,
}

pub fn trapezium_reference(l: &Rat) -> TrapeziumReference {
    assert!(l.is_positive(), "the slant parameter must be positive");
    let one = Rat::one();
    let l2 = l * l;
    let denom = &l2 + l * rat_int(4) + &one;
    let gx = (&l2 - &one) * rat_int(12) / &denom;
    let c = -(&l2 - l * rat_int(2) - &one) * rat_int(6) / &denom;
    TrapeziumReference {
        l: l.clone(),
        affine: AffineRat::new(vec![gx, Rat::zero()], c),
        s_hat: rat_int(2),
    }
}

impl TrapeziumReference {
    /// Builds the moment polytope with its weighted boundary measure.
    pub fn polytope(&self) -> Result<Polytope, GeometryError> {
        let p = self.l.numer().clone();
        let q = self.l.denom().clone();
        // y <= 1 + (l-1)x scaled by the denominator of l to a primitive
        // integer normal: (p - q) x - q y >= -q.
        let slant = Facet {
            normal: vec![&p - &q, -q.clone()],
            offset: Rat::from_integer(-q),
            sigma_weight: Rat::zero(),
        };
        Polytope::from_facets(
            2,
            vec![
                Facet::new(vec![1, 0], rat_int(0), rat_int(1)),
                Facet::new(vec![0, 1], rat_int(0), rat_int(0)),
                Facet::new(vec![-1, 0], rat_int(-1), rat_int(1)),
                slant,
            ],
        )
    }

    /// `L_A` of the crease function `max(y - u (1 + (l-1) x), 0)` whose
    /// crease joins `(0, u)` to `(1, u l)`; exactly zero for `u` in `(0, 1)`.
    pub fn crease_value(&self, u: &Rat) -> Result<Rat, GeometryError> {
        let poly = self.polytope()?;
        let ell = AffineRat::new(
            vec![-(&self.l - Rat::one()) * u, Rat::one()],
            -u.clone(),
        );
        Ok(functionals::crease_l_exact(&poly, &self.affine, &ell))
    }

    /// Slack of the one-dimensional kernel inequality at `g = max(0, x - t)`:
    /// `g(0) + l g(1) - int_0^1 (1 + (l-1)x) A(x) g(x) dx`.  Nonnegative on
    /// `[0, 1]`, vanishing exactly at the endpoints.
    pub fn kernel_slack(&self, t: &Rat) -> Rat {
        assert!(!t.is_negative() && t <= &Rat::one());
        let one = Rat::one();
        // (1 + (l-1)x) * (gx x + c) * (x - t) as exact coefficients.
        let weight = vec![one.clone(), &self.l - &one];
        let a_poly = vec![self.affine.constant.clone(), self.affine.gradient[0].clone()];
        let shift = vec![-t.clone(), one.clone()];
        let integrand = poly_mul(&poly_mul(&weight, &a_poly), &shift);
        &self.l * (&one - t) - poly_integral(&integrand, t, &one)
    }
}

// ---------------------------------------------------------------------------
// Helpers

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn gap(a: &AffineFunction, x: &[f64], value: f64) -> f64 {
    (a.eval(x) - value).abs()
}

/// Mass-weighted least-squares affine fit per cluster; rank-deficient
/// clusters (too few nodes, nodes on a line) take the minimum-norm fit.
fn fit_clusters(
    quad: &Quadrature,
    phi: &[f64],
    assign: &[usize],
    count: usize,
    masses: &[f64],
) -> Vec<AffineFunction> {
    let dim = quad.dim;
    let mut fits = Vec::with_capacity(count);
    for j in 0..count {
        let mut gram = DMatrix::zeros(dim + 1, dim + 1);
        let mut rhs = DVector::zeros(dim + 1);
        for i in assign.iter().enumerate().filter(|(_, &a)| a == j).map(|(i, _)| i) {
            let m = masses[i].max(1e-300);
            let mut basis = vec![1.0];
            basis.extend_from_slice(&quad.mesh_nodes[i]);
            for r in 0..=dim {
                for s in 0..=dim {
                    gram[(r, s)] += m * basis[r] * basis[s];
                }
                rhs[r] += m * basis[r] * phi[i];
            }
        }
        let svd = gram.svd(true, true);
        let sol = svd
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(dim + 1));
        fits.push(AffineFunction::new(sol.as_slice()[1..].to_vec(), sol[0]));
    }
    fits
}

fn snap_affine(a: &AffineFunction) -> AffineRat {
    AffineRat::new(
        a.gradient.iter().map(|&g| snap_f64(g, SNAP_DENOM)).collect(),
        snap_f64(a.constant, SNAP_DENOM),
    )
}

fn mesh_spacing(quad: &Quadrature) -> f64 {
    let mut h: f64 = 0.0;
    for cell in &quad.cells {
        for a in 0..cell.len() {
            for b in a + 1..cell.len() {
                let pa = &quad.mesh_nodes[cell[a]];
                let pb = &quad.mesh_nodes[cell[b]];
                let d2: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum();
                h = h.max(d2.sqrt());
            }
        }
    }
    h
}

fn poly_mul(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    let mut out = vec![Rat::zero(); a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_integral(p: &[Rat], lo: &Rat, hi: &Rat) -> Rat {
    let mut acc = Rat::zero();
    let mut lo_pow = Rat::one();
    let mut hi_pow = Rat::one();
    for (k, c) in p.iter().enumerate() {
        lo_pow *= lo;
        hi_pow *= hi;
        acc += c * (&hi_pow - &lo_pow) / rat_int(k as i64 + 1);
    }
    acc
}
