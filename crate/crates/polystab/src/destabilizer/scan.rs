//! Exact crease scan separating stable from strictly semistable inputs.
//!
//! Mesh minimisation cannot tell a true zero minimum from an O(h^2)
//! interpolation artifact, so the stable / strictly-semistable distinction
//! rests on exact arithmetic instead: simple creases `max(ell, 0)` spanned
//! by pairs of boundary grid points are integrated rationally against the
//! boundary and interior measures, and the sign pattern of `L_A` over that
//! family yields the verdict together with a checkable witness.

use std::collections::BTreeSet;

use num::{Signed, Zero};

use crate::functionals::{crease_deviation_exact, crease_l_exact};
use crate::geometry::{AffineRat, Polytope};
use crate::rat::{rat, rat_int, Rat};

/// Crease `max(ell, 0)` together with its exact integrals.
#[derive(Debug, Clone)]
pub struct CreaseSample {
    pub ell: AffineRat,
    /// Exact value of `L_A` on the crease.
    pub l_value: Rat,
    /// Exact squared distance of the crease from its affine projection;
    /// positive means the crease genuinely bends inside `P`.  Only computed
    /// for kernel creases.
    pub deviation: Option<Rat>,
}

/// Outcome of scanning the crease family induced by a boundary grid.
#[derive(Debug)]
pub struct ScanReport {
    pub samples_total: usize,
    /// Sample attaining the smallest `L_A` value.
    pub minimum: Option<CreaseSample>,
    /// Creases with `L_A` exactly zero and positive deviation.
    pub kernel: Vec<CreaseSample>,
}

impl ScanReport {
    pub fn has_negative(&self) -> bool {
        self.minimum
            .as_ref()
            .map_or(false, |s| s.l_value.is_negative())
    }
}

/// Evaluates `L_A` exactly on every crease spanned by the grid of density
/// `k` and classifies the signs.
pub fn crease_scan(poly: &Polytope, a: &AffineRat, k: usize) -> ScanReport {
    let family = crease_family(poly, k);
    let mut minimum: Option<CreaseSample> = None;
    let mut kernel = Vec::new();
    let samples_total = family.len();
    for ell in family {
        let l_value = crease_l_exact(poly, a, &ell);
        if l_value.is_zero() {
            let deviation = crease_deviation_exact(poly, &ell).unwrap_or_else(|_| Rat::zero());
            if deviation.is_positive() {
                kernel.push(CreaseSample {
                    ell: ell.clone(),
                    l_value: l_value.clone(),
                    deviation: Some(deviation),
                });
            }
        }
        let better = match &minimum {
            None => true,
            Some(m) => l_value < m.l_value,
        };
        if better {
            minimum = Some(CreaseSample {
                ell,
                l_value,
                deviation: None,
            });
        }
    }
    ScanReport {
        samples_total,
        minimum,
        kernel,
    }
}

/// Creases spanned by boundary grid points at fractions `j/k` of each edge
/// (2-D) or by interior grid points (1-D), in both orientations, with
/// duplicates and creases that fail to cut the interior removed.
pub fn crease_family(poly: &Polytope, k: usize) -> Vec<AffineRat> {
    assert!(k >= 2, "crease grid needs at least two segments per edge");
    match poly.dim {
        1 => family_1d(poly, k),
        _ => family_2d(poly, k),
    }
}

fn family_1d(poly: &Polytope, k: usize) -> Vec<AffineRat> {
    let lo = poly.vertices[0][0].clone();
    let hi = poly.vertices[1][0].clone();
    let len = &hi - &lo;
    let mut out = Vec::new();
    for j in 1..k {
        let t = &lo + &len * rat(j as i64, k as i64);
        out.push(AffineRat::new(vec![rat_int(1)], -t.clone()));
        out.push(AffineRat::new(vec![rat_int(-1)], t));
    }
    out
}

fn family_2d(poly: &Polytope, k: usize) -> Vec<AffineRat> {
    let mut points: BTreeSet<Vec<Rat>> = BTreeSet::new();
    for fv in &poly.facet_vertices {
        for w in fv.windows(2) {
            let a = &poly.vertices[w[0]];
            let b = &poly.vertices[w[1]];
            for j in 0..=k {
                let t = rat(j as i64, k as i64);
                let p: Vec<Rat> = a
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| x + (y - x) * &t)
                    .collect();
                points.insert(p);
            }
        }
    }
    let pts: Vec<Vec<Rat>> = points.into_iter().collect();
    let mut seen: BTreeSet<(Vec<Rat>, Rat)> = BTreeSet::new();
    let mut out = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dx = &pts[j][0] - &pts[i][0];
            let dy = &pts[j][1] - &pts[i][1];
            let gradient = vec![dy, -dx];
            let constant = -(&gradient[0] * &pts[i][0]) - &gradient[1] * &pts[i][1];
            for flip in [false, true] {
                let (g, c) = if flip {
                    (
                        vec![-gradient[0].clone(), -gradient[1].clone()],
                        -constant.clone(),
                    )
                } else {
                    (gradient.clone(), constant.clone())
                };
                if let Some((g, c)) = normalized(g, c) {
                    if seen.insert((g.clone(), c.clone())) {
                        let ell = AffineRat::new(g, c);
                        if cuts_interior(poly, &ell) {
                            out.push(ell);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Scales so the largest gradient component has absolute value one, making
/// `L_A` values comparable across the family; `None` for constant `ell`.
fn normalized(mut gradient: Vec<Rat>, constant: Rat) -> Option<(Vec<Rat>, Rat)> {
    let mut scale = Rat::zero();
    for g in &gradient {
        let a = g.abs();
        if a > scale {
            scale = a;
        }
    }
    if scale.is_zero() {
        return None;
    }
    for g in &mut gradient {
        *g = &*g / &scale;
    }
    Some((gradient, constant / scale))
}

/// True when `ell` changes sign over the vertices, i.e. the crease line
/// passes through the interior and `max(ell, 0)` is neither zero nor affine.
fn cuts_interior(poly: &Polytope, ell: &AffineRat) -> bool {
    let mut pos = false;
    let mut neg = false;
    for v in &poly.vertices {
        let val = ell.eval(v);
        if val.is_positive() {
            pos = true;
        } else if val.is_negative() {
            neg = true;
        }
    }
    pos && neg
}
