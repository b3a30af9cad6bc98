//! Dual active-set solver for the cone-constrained quadratic programs.
//!
//! The programs have the form
//!
//! ```text
//!   minimise  1/2 z^T G z + a^T z   subject to   c_r^T z >= 0,
//! ```
//!
//! where `z` stacks node values and node subgradients, `G` is block diagonal
//! (P1 mass matrix on the value block, a small ridge on the subgradient
//! block) and every constraint row is sparse: one supporting-plane condition
//! couples two node values and one subgradient.
//!
//! The method is the classical dual active-set scheme of Goldfarb and
//! Idnani: start at the unconstrained minimiser, which is dual feasible, and
//! add violated constraints one at a time, maintaining the factorisation of
//! the active normals through Givens rotations.  Dropping a blocking
//! constraint keeps the dual iterate feasible, the objective grows strictly,
//! and the method cannot cycle.  All constraints here are homogeneous, so
//! `z = 0` is feasible and primal infeasibility cannot occur.

use nalgebra::{DMatrix, DVector};

use crate::error::SolverError;

/// Sparse constraint row: (variable index, coefficient) pairs.
pub(crate) type Row = Vec<(usize, f64)>;

/// Rule for choosing the next violated constraint.  Any choice reaches the
/// same optimum; varying the rule between restarts drives genuinely
/// different active-set paths, which is what the agreement checks exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Most violated after scaling by the constraint row norm.
    NormalizedViolation,
    /// Most violated in raw units.
    RawViolation,
    /// First constraint at least half as violated as the worst, scanning
    /// cyclically from a fixed offset (usually derived from a seed).
    Rotated(usize),
}

pub(crate) struct QpInput<'a> {
    /// Mass matrix on the leading value block; must be positive definite.
    pub mass: &'a DMatrix<f64>,
    /// Diagonal of `G` on the trailing subgradient block.
    pub ridge: f64,
    /// Linear term, length = total variable count.
    pub lin: DVector<f64>,
    pub rows: &'a [Row],
    pub rule: SelectionRule,
    pub feas_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug)]
pub(crate) struct QpSolution {
    pub z: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

pub(crate) fn solve_cone_qp(input: QpInput<'_>) -> Result<QpSolution, SolverError> {
    let nf = input.mass.nrows();
    let dim = input.lin.len();
    assert!(dim >= nf, "linear term shorter than the mass block");
    if dim > nf && input.ridge <= 0.0 {
        return Err(SolverError::NotPositiveDefinite);
    }
    let chol = nalgebra::linalg::Cholesky::new(input.mass.clone())
        .ok_or(SolverError::NotPositiveDefinite)?;

    // J starts as G^{-T/2}: inverse transposed Cholesky factor on the value
    // block, 1/sqrt(ridge) on the subgradient block.  Throughout the run the
    // first q columns span the active normals (via R) and the rest span the
    // free directions.
    let lt_inv = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or(SolverError::NotPositiveDefinite)?;
    let mut jmat = DMatrix::<f64>::zeros(dim, dim);
    jmat.view_mut((0, 0), (nf, nf)).copy_from(&lt_inv);
    if dim > nf {
        let inv_sqrt = 1.0 / input.ridge.sqrt();
        for k in nf..dim {
            jmat[(k, k)] = inv_sqrt;
        }
    }

    // Unconstrained minimiser -G^{-1} a.
    let mut z = DVector::<f64>::zeros(dim);
    {
        let af = -input.lin.rows(0, nf).clone_owned();
        z.rows_mut(0, nf).copy_from(&chol.solve(&af));
        for k in nf..dim {
            z[k] = -input.lin[k] / input.ridge;
        }
    }

    // The cone is invariant under positive row scaling, so normalise every
    // row.  This keeps the triangular factor's pivots, the dual variables
    // and the feasibility tolerances on one common scale.
    let mut in_active = vec![false; input.rows.len()];
    let rows: Vec<Row> = input
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let n = row.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter().map(|&(i, v)| (i, v / n)).collect()
            } else {
                // A zero row constrains nothing; park it as permanently active.
                in_active[r] = true;
                row.clone()
            }
        })
        .collect();
    let norms: Vec<f64> = vec![1.0; rows.len()];
    let base = jmat.clone();
    let dual_cap = 1e12 * (1.0 + input.lin.norm());
    let mut repairs = 32usize;
    let mut active: Vec<usize> = Vec::new();
    let mut dual: Vec<f64> = Vec::new();
    let mut rmat = DMatrix::<f64>::zeros(dim, dim);
    let mut iterations = 0usize;

    'outer: loop {
        iterations += 1;
        if iterations > input.max_iter {
            return Err(SolverError::Diverged(input.max_iter));
        }
        let p = match pick_violated(&rows, &norms, &in_active, &z, input.rule, input.feas_tol) {
            Some(p) => p,
            None => break 'outer,
        };
        let mut dual_new = 0.0_f64;
        loop {
            iterations += 1;
            if iterations > input.max_iter {
                return Err(SolverError::Diverged(input.max_iter));
            }
            let q = active.len();
            // d = J^T n_p; its tail spans the step direction.
            let mut d = jt_row(&jmat, &rows[p]);
            let mut zdir = DVector::<f64>::zeros(dim);
            for k in q..dim {
                if d[k] != 0.0 {
                    zdir.axpy(d[k], &jmat.column(k), 1.0);
                }
            }
            let d2: f64 = (q..dim).map(|k| d[k] * d[k]).sum();
            // Dependence must be judged relative to the whole transformed
            // row: accepting a nearly dependent row plants a tiny pivot in
            // the triangular factor and every later dual solve divides by it.
            let full_ok = d2 > 1e-20 * d.norm_squared();
            // Dual direction r = R^{-1} d_1.
            let mut r = vec![0.0_f64; q];
            for i in (0..q).rev() {
                let mut acc = d[i];
                for k in i + 1..q {
                    acc -= rmat[(i, k)] * r[k];
                }
                r[i] = acc / rmat[(i, i)];
            }
            let mut t1 = f64::INFINITY;
            let mut blocking = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 1e-13 {
                    let t = dual[k] / rk;
                    if t < t1 {
                        t1 = t;
                        blocking = Some(k);
                    }
                }
            }
            let viol = sparse_dot(&rows[p], &z);
            if viol >= 0.0 {
                // A previous partial step already rounded p into feasibility.
                continue 'outer;
            }
            let t2 = if full_ok { -viol / d2 } else { f64::INFINITY };
            let t = t1.min(t2);
            if !t.is_finite() {
                // The rows are homogeneous, so the problem cannot actually
                // be infeasible; a dead end here means the factorisation has
                // decayed.  Rebuild it from the recorded active set.
                if repairs == 0 {
                    return Err(SolverError::NumericalBreakdown(format!(
                        "no admissible step for constraint {p} after repeated \
                         refactorisations (violation {viol:.3e}, {iterations} iterations)"
                    )));
                }
                repairs -= 1;
                refresh_active_set(
                    &base,
                    &rows,
                    &input.lin,
                    &mut active,
                    &mut in_active,
                    &mut jmat,
                    &mut rmat,
                    &mut z,
                    &mut dual,
                );
                continue 'outer;
            }
            if full_ok && t > 0.0 {
                z.axpy(t, &zdir, 1.0);
            }
            for (uk, &rk) in dual.iter_mut().zip(&r) {
                *uk -= t * rk;
            }
            dual_new += t;
            if dual_new.abs() > dual_cap || dual.iter().any(|u| u.abs() > dual_cap) {
                // Dual magnitudes this far above the data scale only arise
                // from degenerate cycling; rebuild before they turn into
                // overflow.
                if repairs == 0 {
                    return Err(SolverError::NumericalBreakdown(format!(
                        "dual variables exceeded {dual_cap:.3e} after repeated \
                         refactorisations ({iterations} iterations)"
                    )));
                }
                repairs -= 1;
                refresh_active_set(
                    &base,
                    &rows,
                    &input.lin,
                    &mut active,
                    &mut in_active,
                    &mut jmat,
                    &mut rmat,
                    &mut z,
                    &mut dual,
                );
                continue 'outer;
            }
            if full_ok && t2 <= t1 {
                // Full step: p joins the active set.
                qr_insert(&mut jmat, &mut rmat, &mut d, q);
                active.push(p);
                dual.push(dual_new);
                in_active[p] = true;
                continue 'outer;
            }
            // Partial step: drop the blocking constraint, stay on p.
            let k = blocking.expect("partial step without a blocking constraint");
            in_active[active[k]] = false;
            qr_delete(&mut jmat, &mut rmat, q, k);
            active.remove(k);
            dual.remove(k);
        }
    }

    Ok(QpSolution {
        z,
        active,
        iterations,
    })
}

fn sparse_dot(row: &Row, z: &DVector<f64>) -> f64 {
    row.iter().map(|&(i, v)| v * z[i]).sum()
}

fn jt_row(jmat: &DMatrix<f64>, row: &Row) -> DVector<f64> {
    let dim = jmat.nrows();
    let mut d = DVector::<f64>::zeros(dim);
    for k in 0..dim {
        let mut acc = 0.0;
        for &(i, v) in row {
            acc += jmat[(i, k)] * v;
        }
        d[k] = acc;
    }
    d
}

/// Rebuilds the factorisation from the recorded active set after numerical
/// decay: re-inserts the active rows into a fresh `J`/`R` pair (pruning rows
/// that have become dependent), recomputes the iterate as the exact
/// equality-constrained minimiser, and recovers the duals from the
/// stationarity condition, dropping rows whose recovered dual is negative.
/// The result is a valid solver state built from scratch, free of the
/// rounding the incremental updates accumulated.
#[allow(clippy::too_many_arguments)]
fn refresh_active_set(
    base: &DMatrix<f64>,
    rows: &[Row],
    lin: &DVector<f64>,
    active: &mut Vec<usize>,
    in_active: &mut [bool],
    jmat: &mut DMatrix<f64>,
    rmat: &mut DMatrix<f64>,
    z: &mut DVector<f64>,
    dual: &mut Vec<f64>,
) {
    let dim = lin.len();
    loop {
        jmat.copy_from(base);
        rmat.fill(0.0);
        let mut kept: Vec<usize> = Vec::with_capacity(active.len());
        for &p in active.iter() {
            let q = kept.len();
            let mut d = jt_row(jmat, &rows[p]);
            let tail: f64 = (q..dim).map(|k| d[k] * d[k]).sum();
            if !(tail > 1e-20 * d.norm_squared()) {
                in_active[p] = false;
                continue;
            }
            qr_insert(jmat, rmat, &mut d, q);
            kept.push(p);
        }
        *active = kept;
        let q = active.len();

        // In J-coordinates the constrained minimiser zeroes the leading q
        // components of J^T a and flips the sign of the tail; the duals then
        // come from one triangular solve against the leading block.
        let ya = jmat.transpose() * lin;
        z.fill(0.0);
        for k in q..dim {
            if ya[k] != 0.0 {
                z.axpy(-ya[k], &jmat.column(k), 1.0);
            }
        }
        let mut u = vec![0.0_f64; q];
        for i in (0..q).rev() {
            let mut acc = ya[i];
            for k in i + 1..q {
                acc -= rmat[(i, k)] * u[k];
            }
            u[i] = acc / rmat[(i, i)];
        }

        let mut kept2: Vec<usize> = Vec::with_capacity(q);
        let mut u2: Vec<f64> = Vec::with_capacity(q);
        let mut dropped = false;
        for (k, &p) in active.iter().enumerate() {
            if u[k] < 0.0 || !u[k].is_finite() {
                in_active[p] = false;
                dropped = true;
            } else {
                kept2.push(p);
                u2.push(u[k]);
            }
        }
        *active = kept2;
        if !dropped {
            *dual = u2;
            return;
        }
    }
}

fn pick_violated(
    rows: &[Row],
    norms: &[f64],
    in_active: &[bool],
    z: &DVector<f64>,
    rule: SelectionRule,
    feas_tol: f64,
) -> Option<usize> {
    let zscale = 1.0 + z.amax();
    let mut worst = 0.0_f64;
    let mut worst_idx = None;
    let mut worst_raw = 0.0_f64;
    let mut worst_raw_idx = None;
    for (r, row) in rows.iter().enumerate() {
        if in_active[r] {
            continue;
        }
        let v = sparse_dot(row, z);
        if v < -feas_tol * zscale * norms[r] {
            let nv = v / norms[r];
            if nv < worst {
                worst = nv;
                worst_idx = Some(r);
            }
            if v < worst_raw {
                worst_raw = v;
                worst_raw_idx = Some(r);
            }
        }
    }
    match rule {
        SelectionRule::NormalizedViolation => worst_idx,
        SelectionRule::RawViolation => worst_raw_idx,
        SelectionRule::Rotated(offset) => {
            worst_idx?;
            let target = worst * 0.5;
            let m = rows.len();
            for step in 0..m {
                let r = (offset + step) % m;
                if in_active[r] {
                    continue;
                }
                let v = sparse_dot(&rows[r], z);
                if v < -feas_tol * zscale * norms[r] && v / norms[r] <= target {
                    return Some(r);
                }
            }
            worst_idx
        }
    }
}

/// Rotate the tail of `d` into position `q`, accumulating the rotations into
/// the columns of `J`, then store the new column of `R`.
fn qr_insert(jmat: &mut DMatrix<f64>, rmat: &mut DMatrix<f64>, d: &mut DVector<f64>, q: usize) {
    let dim = d.len();
    for i in (q + 1..dim).rev() {
        let (a, b) = (d[i - 1], d[i]);
        if b == 0.0 {
            continue;
        }
        let rr = a.hypot(b);
        let (c, s) = (a / rr, b / rr);
        d[i - 1] = rr;
        d[i] = 0.0;
        rotate_columns(jmat, i - 1, i, c, s);
    }
    for i in 0..=q {
        rmat[(i, q)] = d[i];
    }
}

/// Remove active column `k` (of `q`) and re-triangularise `R`, mirroring the
/// row rotations as column rotations on `J`.
fn qr_delete(jmat: &mut DMatrix<f64>, rmat: &mut DMatrix<f64>, q: usize, k: usize) {
    for col in k..q - 1 {
        for row in 0..=col + 1 {
            rmat[(row, col)] = rmat[(row, col + 1)];
        }
    }
    for row in 0..q {
        rmat[(row, q - 1)] = 0.0;
    }
    for j in k..q - 1 {
        let (a, b) = (rmat[(j, j)], rmat[(j + 1, j)]);
        if b == 0.0 {
            continue;
        }
        let rr = a.hypot(b);
        let (c, s) = (a / rr, b / rr);
        for col in j..q - 1 {
            let x = rmat[(j, col)];
            let y = rmat[(j + 1, col)];
            rmat[(j, col)] = c * x + s * y;
            rmat[(j + 1, col)] = -s * x + c * y;
        }
        rotate_columns(jmat, j, j + 1, c, s);
    }
}

fn rotate_columns(jmat: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for row in 0..jmat.nrows() {
        let a = jmat[(row, i)];
        let b = jmat[(row, j)];
        jmat[(row, i)] = c * a + s * b;
        jmat[(row, j)] = -s * a + c * b;
    }
}
