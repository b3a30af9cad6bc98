//! Polytopes with weighted boundary measures, in exact rational arithmetic.
//!
//! A polytope is given by facet inequalities `normal . x >= offset` with
//! primitive integer inward normals.  Each facet carries a nonnegative
//! `sigma_weight` multiplying the canonical boundary measure, the unique
//! facet measure whose density against euclidean surface measure is
//! `1 / |normal|_2`.  With that normalisation the measure of a facet equals
//! its lattice length, a rational number, so volumes, boundary measures and
//! moments up to degree two are all exact.
//!
//! Supported dimensions are 1 and 2; vertex enumeration, fan triangulation
//! and polygon clipping are all exact.

mod mesh;

pub use mesh::{build_quadrature, BoundaryNode, MeshSettings, QuadNode, Quadrature};

use crate::error::GeometryError;
use crate::rat::{self, Rat};
use num::bigint::BigInt;
use num::{Signed, Zero};
use serde::Deserialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Primitive integer inward normal; the polytope satisfies `normal . x >= offset`.
    pub normal: Vec<BigInt>,
    pub offset: Rat,
    pub sigma_weight: Rat,
}

impl Facet {
    pub fn new(normal: Vec<i64>, offset: Rat, sigma_weight: Rat) -> Self {
        Facet {
            normal: normal.into_iter().map(BigInt::from).collect(),
            offset,
            sigma_weight,
        }
    }

    fn eval(&self, x: &[Rat]) -> Rat {
        let mut acc = -self.offset.clone();
        for (n, xi) in self.normal.iter().zip(x) {
            acc += Rat::from_integer(n.clone()) * xi;
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct Polytope {
    pub dim: usize,
    pub facets: Vec<Facet>,
    /// 1-D: `[lo, hi]`.  2-D: counterclockwise, starting at the
    /// lexicographically smallest vertex.
    pub vertices: Vec<Vec<Rat>>,
    /// Fan triangulation from the first vertex (2-D); the whole interval (1-D).
    pub simplices: Vec<Vec<usize>>,
    /// Vertex indices lying on each facet, ordered along the boundary cycle.
    /// Fewer than `dim` entries marks a facet that carries no measure.
    pub facet_vertices: Vec<Vec<usize>>,
    /// Barycentre of the interior measure.
    pub centroid: Vec<Rat>,
}

/// Degree <= 2 monomial integrals: `c` for 1, `x[i]` for coordinates,
/// `xx[i][j]` for quadratic monomials.
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub dim: usize,
    pub c: Rat,
    pub x: Vec<Rat>,
    pub xx: Vec<Vec<Rat>>,
}

impl MomentTable {
    fn zero(dim: usize) -> Self {
        MomentTable {
            dim,
            c: Rat::zero(),
            x: vec![Rat::zero(); dim],
            xx: vec![vec![Rat::zero(); dim]; dim],
        }
    }

    fn add(&mut self, other: &MomentTable) {
        self.c += &other.c;
        for i in 0..self.dim {
            self.x[i] += &other.x[i];
            for j in 0..self.dim {
                self.xx[i][j] += &other.xx[i][j];
            }
        }
    }

    fn scale(&mut self, k: &Rat) {
        self.c *= k;
        for i in 0..self.dim {
            self.x[i] *= k;
            for j in 0..self.dim {
                self.xx[i][j] *= k;
            }
        }
    }

    /// Exact integral of the product of two affine functions against this table.
    pub fn integrate_affine_product(&self, a: &AffineRat, b: &AffineRat) -> Rat {
        let mut acc = &a.constant * &b.constant * &self.c;
        for i in 0..self.dim {
            acc += (&a.constant * &b.gradient[i] + &b.constant * &a.gradient[i]) * &self.x[i];
            for j in 0..self.dim {
                acc += &a.gradient[i] * &b.gradient[j] * &self.xx[i][j];
            }
        }
        acc
    }

    /// Exact integral of one affine function.
    pub fn integrate_affine(&self, a: &AffineRat) -> Rat {
        let mut acc = &a.constant * &self.c;
        for i in 0..self.dim {
            acc += &a.gradient[i] * &self.x[i];
        }
        acc
    }
}

/// Affine function with exact rational coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRat {
    pub gradient: Vec<Rat>,
    pub constant: Rat,
}

impl AffineRat {
    pub fn new(gradient: Vec<Rat>, constant: Rat) -> Self {
        AffineRat { gradient, constant }
    }

    pub fn eval(&self, x: &[Rat]) -> Rat {
        let mut acc = self.constant.clone();
        for (g, xi) in self.gradient.iter().zip(x) {
            acc += g * xi;
        }
        acc
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        let mut acc = rat::to_f64(&self.constant);
        for (g, xi) in self.gradient.iter().zip(x) {
            acc += rat::to_f64(g) * xi;
        }
        acc
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ScalarSummary {
    pub vol_mu: f64,
    pub vol_sigma: f64,
    pub s_hat: f64,
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Deserialize)]
struct PolytopeDoc {
    dim: usize,
    facets: Vec<FacetDoc>,
    #[serde(default)]
    mesh: Option<MeshDoc>,
}

#[derive(Deserialize)]
struct FacetDoc {
    normal: Vec<i64>,
    offset: serde_json::Value,
    #[serde(default)]
    sigma_weight: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct MeshDoc {
    #[serde(default)]
    resolution: Option<usize>,
    #[serde(default)]
    grading: Option<serde_json::Value>,
}

/// Accepts `"3/4"`, `"0.25"`, `7`, `0.25`: strings and JSON numbers, read
/// digit-for-digit so decimal inputs stay exact.
fn value_to_rat(v: &serde_json::Value) -> Option<Rat> {
    match v {
        serde_json::Value::String(s) => rat::parse_rational(s),
        serde_json::Value::Number(n) => rat::parse_rational(&n.to_string()),
        _ => None,
    }
}

/// Parses a polytope document and the mesh defaults it carries.
pub fn parse_polytope(json: &str) -> Result<(Polytope, MeshSettings), GeometryError> {
    let doc: PolytopeDoc = serde_json::from_str(json)
        .map_err(|e| GeometryError::MalformedDocument(e.to_string()))?;
    let dim = doc.dim;
    if doc.facets.is_empty() {
        return Err(GeometryError::MalformedDocument("no facets given".into()));
    }
    let mut facets = Vec::with_capacity(doc.facets.len());
    for (k, f) in doc.facets.iter().enumerate() {
        if f.normal.len() != dim {
            return Err(GeometryError::MalformedDocument(format!(
                "facet {k}: normal has {} entries, expected {dim}",
                f.normal.len()
            )));
        }
        let offset = value_to_rat(&f.offset).ok_or_else(|| {
            GeometryError::MalformedDocument(format!("facet {k}: unreadable offset"))
        })?;
        let weight = match &f.sigma_weight {
            Some(w) => value_to_rat(w).ok_or_else(|| {
                GeometryError::MalformedDocument(format!("facet {k}: unreadable sigma_weight"))
            })?,
            None => Rat::from_integer(1.into()),
        };
        facets.push(Facet::new(f.normal.clone(), offset, weight));
    }
    let mesh = match doc.mesh {
        Some(m) => {
            let grading = match m.grading {
                Some(g) => rat::to_f64(&value_to_rat(&g).ok_or_else(|| {
                    GeometryError::MalformedDocument("unreadable mesh grading".into())
                })?),
                None => 1.0,
            };
            MeshSettings {
                resolution: m.resolution.unwrap_or(MeshSettings::DEFAULT_RESOLUTION),
                grading,
            }
        }
        None => MeshSettings::default(),
    };
    let poly = Polytope::from_facets(dim, facets)?;
    Ok((poly, mesh))
}

// ---------------------------------------------------------------------------
// Construction

impl Polytope {
    pub fn from_facets(dim: usize, facets: Vec<Facet>) -> Result<Self, GeometryError> {
        if dim == 0 || dim > 2 {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        for (k, f) in facets.iter().enumerate() {
            if f.normal.len() != dim {
                return Err(GeometryError::MalformedDocument(format!(
                    "facet {k}: normal has {} entries, expected {dim}",
                    f.normal.len()
                )));
            }
            if f.normal.iter().all(|n| n.is_zero()) || !rat::is_primitive(&f.normal) {
                return Err(GeometryError::NonPrimitiveNormal {
                    facet: k,
                    normal: f.normal.iter().map(|n| n.to_string()).collect(),
                });
            }
            if f.sigma_weight.is_negative() {
                return Err(GeometryError::NegativeWeight { facet: k });
            }
        }
        for i in 0..facets.len() {
            for j in i + 1..facets.len() {
                if facets[i].normal == facets[j].normal && facets[i].offset == facets[j].offset {
                    return Err(GeometryError::MalformedDocument(format!(
                        "facets {i} and {j} are identical"
                    )));
                }
            }
        }
        match dim {
            1 => Self::build_1d(facets),
            2 => Self::build_2d(facets),
            _ => unreachable!(),
        }
    }

    fn build_1d(facets: Vec<Facet>) -> Result<Self, GeometryError> {
        let mut lo: Option<Rat> = None;
        let mut hi: Option<Rat> = None;
        for f in &facets {
            let n = &f.normal[0];
            if n.is_positive() {
                let bound = &f.offset / Rat::from_integer(n.clone());
                lo = Some(match lo {
                    Some(v) if v >= bound => v,
                    _ => bound,
                });
            } else {
                let bound = &f.offset / Rat::from_integer(n.clone());
                hi = Some(match hi {
                    Some(v) if v <= bound => v,
                    _ => bound,
                });
            }
        }
        let (lo, hi) = match (lo, hi) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => return Err(GeometryError::UnboundedPolytope),
        };
        if lo >= hi {
            return Err(GeometryError::EmptyInterior);
        }
        let vertices = vec![vec![lo.clone()], vec![hi.clone()]];
        let facet_vertices = facets
            .iter()
            .map(|f| {
                let v = if f.normal[0].is_positive() { &lo } else { &hi };
                if f.eval(std::slice::from_ref(v)).is_zero() {
                    vec![if f.normal[0].is_positive() { 0 } else { 1 }]
                } else {
                    vec![]
                }
            })
            .collect();
        let centroid = vec![(&lo + &hi) / rat::rat_int(2)];
        Ok(Polytope {
            dim: 1,
            facets,
            vertices,
            simplices: vec![vec![0, 1]],
            facet_vertices,
            centroid,
        })
    }

    fn build_2d(facets: Vec<Facet>) -> Result<Self, GeometryError> {
        // Recession cone: a nonzero direction d with normal . d >= 0 for all
        // facets certifies unboundedness; in the plane any such cone contains
        // a rotated facet normal.
        for f in &facets {
            for sign in [1i64, -1] {
                let d = [
                    -Rat::from_integer(&f.normal[1] * sign),
                    Rat::from_integer(&f.normal[0] * sign),
                ];
                if d.iter().all(|x| x.is_zero()) {
                    continue;
                }
                let recedes = facets.iter().all(|g| {
                    let dot = Rat::from_integer(g.normal[0].clone()) * &d[0]
                        + Rat::from_integer(g.normal[1].clone()) * &d[1];
                    !dot.is_negative()
                });
                if recedes {
                    return Err(GeometryError::UnboundedPolytope);
                }
            }
        }

        // Candidate vertices from facet pairs, kept if feasible for all facets.
        let mut seen: BTreeMap<Vec<Rat>, usize> = BTreeMap::new();
        let mut verts: Vec<Vec<Rat>> = Vec::new();
        for i in 0..facets.len() {
            for j in i + 1..facets.len() {
                let a = &facets[i];
                let b = &facets[j];
                let det = Rat::from_integer(&a.normal[0] * &b.normal[1] - &a.normal[1] * &b.normal[0]);
                if det.is_zero() {
                    continue;
                }
                let x = (&a.offset * Rat::from_integer(b.normal[1].clone())
                    - &b.offset * Rat::from_integer(a.normal[1].clone()))
                    / &det;
                let y = (&b.offset * Rat::from_integer(a.normal[0].clone())
                    - &a.offset * Rat::from_integer(b.normal[0].clone()))
                    / &det;
                let v = vec![x, y];
                if facets.iter().all(|f| !f.eval(&v).is_negative()) && !seen.contains_key(&v) {
                    seen.insert(v.clone(), verts.len());
                    verts.push(v);
                }
            }
        }
        if verts.len() < 3 {
            return Err(GeometryError::EmptyInterior);
        }

        // Counterclockwise order around the vertex average, starting at the
        // lexicographic minimum.
        let m = verts.len();
        let inv_m = Rat::new(1.into(), BigInt::from(m as i64));
        let mut center = vec![Rat::zero(), Rat::zero()];
        for v in &verts {
            center[0] += &v[0] * &inv_m;
            center[1] += &v[1] * &inv_m;
        }
        let mut order: Vec<usize> = (0..m).collect();
        let class = |p: &[Rat]| -> u8 {
            if p[1].is_positive() || (p[1].is_zero() && p[0].is_positive()) {
                0
            } else {
                1
            }
        };
        order.sort_by(|&i, &j| {
            let pi = [&verts[i][0] - &center[0], &verts[i][1] - &center[1]];
            let pj = [&verts[j][0] - &center[0], &verts[j][1] - &center[1]];
            let (ci, cj) = (class(&pi), class(&pj));
            if ci != cj {
                return ci.cmp(&cj);
            }
            let cross = &pi[0] * &pj[1] - &pi[1] * &pj[0];
            if cross.is_positive() {
                std::cmp::Ordering::Less
            } else if cross.is_negative() {
                std::cmp::Ordering::Greater
            } else {
                i.cmp(&j)
            }
        });
        let start = (0..m)
            .min_by(|&a, &b| verts[order[a]].cmp(&verts[order[b]]))
            .unwrap();
        let vertices: Vec<Vec<Rat>> = (0..m)
            .map(|k| verts[order[(start + k) % m]].clone())
            .collect();

        let area2: Rat = (0..m)
            .map(|k| {
                let a = &vertices[k];
                let b = &vertices[(k + 1) % m];
                &a[0] * &b[1] - &a[1] * &b[0]
            })
            .sum();
        if !area2.is_positive() {
            return Err(GeometryError::EmptyInterior);
        }

        let simplices: Vec<Vec<usize>> = (1..m - 1).map(|i| vec![0, i, i + 1]).collect();

        // Facet incidence, ordered along the boundary cycle.
        let facet_vertices: Vec<Vec<usize>> = facets
            .iter()
            .map(|f| {
                let mut on: Vec<usize> = (0..m)
                    .filter(|&k| f.eval(&vertices[k]).is_zero())
                    .collect();
                if on.len() == 2 {
                    // Consecutive in the cycle; order so the pair follows it.
                    let (a, b) = (on[0], on[1]);
                    if (a + 1) % m == b {
                        on = vec![a, b];
                    } else if (b + 1) % m == a {
                        on = vec![b, a];
                    } else {
                        // Vertices on the facet line but not an edge: facet
                        // carries no measure.
                        on = vec![];
                    }
                }
                if on.len() > 2 {
                    on = vec![];
                }
                on
            })
            .collect();

        let mut poly = Polytope {
            dim: 2,
            facets,
            vertices,
            simplices,
            facet_vertices,
            centroid: vec![Rat::zero(), Rat::zero()],
        };
        let interior = poly.interior_moments();
        poly.centroid = vec![&interior.x[0] / &interior.c, &interior.x[1] / &interior.c];
        Ok(poly)
    }

    /// Exact membership test.
    pub fn contains(&self, x: &[Rat]) -> bool {
        self.facets.iter().all(|f| !f.eval(x).is_negative())
    }

    /// Intersects with the half-plane `a . x >= c`.  The cut facet (scaled to
    /// a primitive integer normal) carries `cut_weight` in the boundary
    /// measure; all original facets keep their weights.
    pub fn intersect_halfplane(
        &self,
        a: &[Rat],
        c: &Rat,
        cut_weight: Rat,
    ) -> Result<Polytope, GeometryError> {
        let (normal, offset) = primitive_from_rational(a, c)
            .ok_or_else(|| GeometryError::MalformedDocument("zero cut normal".into()))?;
        let mut facets = self.facets.clone();
        if !facets
            .iter()
            .any(|f| f.normal == normal && f.offset == offset)
        {
            facets.push(Facet {
                normal,
                offset,
                sigma_weight: cut_weight,
            });
        }
        Polytope::from_facets(self.dim, facets)
    }

    // -----------------------------------------------------------------------
    // Exact moments

    /// Interior monomial integrals up to degree two.
    pub fn interior_moments(&self) -> MomentTable {
        let mut total = MomentTable::zero(self.dim);
        for s in &self.simplices {
            let vs: Vec<&Vec<Rat>> = s.iter().map(|&i| &self.vertices[i]).collect();
            total.add(&simplex_moments(self.dim, &vs));
        }
        total
    }

    /// Boundary monomial integrals up to degree two against the weighted
    /// canonical measure.
    pub fn boundary_moments(&self) -> MomentTable {
        let mut total = MomentTable::zero(self.dim);
        for (f, on) in self.facets.iter().zip(&self.facet_vertices) {
            if f.sigma_weight.is_zero() {
                continue;
            }
            match self.dim {
                1 => {
                    if on.len() == 1 {
                        let v = &self.vertices[on[0]];
                        let mut t = MomentTable::zero(1);
                        t.c = Rat::from_integer(1.into());
                        t.x[0] = v[0].clone();
                        t.xx[0][0] = &v[0] * &v[0];
                        t.scale(&f.sigma_weight);
                        total.add(&t);
                    }
                }
                2 => {
                    if on.len() == 2 {
                        let a = &self.vertices[on[0]];
                        let b = &self.vertices[on[1]];
                        let mut t = edge_moments(a, b, &lattice_length(a, b, &f.normal));
                        t.scale(&f.sigma_weight);
                        total.add(&t);
                    }
                }
                _ => unreachable!(),
            }
        }
        total
    }

    /// Monomial integrals up to `degree` (interior, boundary).
    pub fn moments(&self, degree: u32) -> Result<(MomentTable, MomentTable), GeometryError> {
        if degree > 2 {
            return Err(GeometryError::DegreeUnsupported(degree));
        }
        Ok((self.interior_moments(), self.boundary_moments()))
    }

    /// Interior moments restricted to `a . x >= c`, exact.
    pub fn interior_moments_in_halfplane(&self, a: &[Rat], c: &Rat) -> MomentTable {
        match self.dim {
            1 => {
                let mut t = MomentTable::zero(1);
                if let Some((lo, hi)) =
                    clip_interval(&self.vertices[0][0], &self.vertices[1][0], &a[0], c)
                {
                    t.c = &hi - &lo;
                    t.x[0] = (&hi * &hi - &lo * &lo) / rat::rat_int(2);
                    t.xx[0][0] = (&hi * &hi * &hi - &lo * &lo * &lo) / rat::rat_int(3);
                }
                t
            }
            2 => polygon_moments(&clip_polygon(&self.vertices, a, c)),
            _ => unreachable!(),
        }
    }

    /// Weighted boundary moments restricted to `a . x >= c`, exact.
    pub fn boundary_moments_in_halfplane(&self, a: &[Rat], c: &Rat) -> MomentTable {
        let side = |x: &[Rat]| -> Rat {
            let mut acc = -c.clone();
            for (ai, xi) in a.iter().zip(x) {
                acc += ai * xi;
            }
            acc
        };
        let mut total = MomentTable::zero(self.dim);
        for (f, on) in self.facets.iter().zip(&self.facet_vertices) {
            if f.sigma_weight.is_zero() {
                continue;
            }
            match self.dim {
                1 => {
                    if on.len() == 1 {
                        let v = &self.vertices[on[0]];
                        if !side(v).is_negative() {
                            let mut t = MomentTable::zero(1);
                            t.c = Rat::from_integer(1.into());
                            t.x[0] = v[0].clone();
                            t.xx[0][0] = &v[0] * &v[0];
                            t.scale(&f.sigma_weight);
                            total.add(&t);
                        }
                    }
                }
                2 => {
                    if on.len() == 2 {
                        let va = &self.vertices[on[0]];
                        let vb = &self.vertices[on[1]];
                        // The side function is affine along the edge; clip its
                        // parameter range to [0, 1] exactly.
                        let s0 = side(va);
                        let s1 = side(vb);
                        let (t0, t1) = if !s0.is_negative() && !s1.is_negative() {
                            (Rat::zero(), Rat::from_integer(1.into()))
                        } else if s0.is_negative() && s1.is_negative() {
                            continue;
                        } else {
                            let cross = &s0 / (&s0 - &s1);
                            if s0.is_negative() {
                                (cross, Rat::from_integer(1.into()))
                            } else {
                                (Rat::zero(), cross)
                            }
                        };
                        if t0 >= t1 {
                            continue;
                        }
                        let point_at = |t: &Rat| -> Vec<Rat> {
                            vec![
                                &va[0] + (&vb[0] - &va[0]) * t,
                                &va[1] + (&vb[1] - &va[1]) * t,
                            ]
                        };
                        let e0 = point_at(&t0);
                        let e1 = point_at(&t1);
                        let len = lattice_length(va, vb, &f.normal) * (&t1 - &t0);
                        let mut t = edge_moments(&e0, &e1, &len);
                        t.scale(&f.sigma_weight);
                        total.add(&t);
                    }
                }
                _ => unreachable!(),
            }
        }
        total
    }

    pub fn scalar_summary(&self) -> ScalarSummary {
        let (vol_mu, vol_sigma, s_hat) = self.scalar_summary_exact();
        ScalarSummary {
            vol_mu: rat::to_f64(&vol_mu),
            vol_sigma: rat::to_f64(&vol_sigma),
            s_hat: rat::to_f64(&s_hat),
        }
    }

    pub fn scalar_summary_exact(&self) -> (Rat, Rat, Rat) {
        let vol_mu = self.interior_moments().c;
        let vol_sigma = self.boundary_moments().c;
        let s_hat = &vol_sigma / &vol_mu;
        (vol_mu, vol_sigma, s_hat)
    }

    /// Bounding-box diagonal, a convenient length scale.
    pub fn diameter(&self) -> f64 {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for v in &self.vertices {
            for (i, x) in v.iter().enumerate() {
                let xf = rat::to_f64(x);
                lo[i] = lo[i].min(xf);
                hi[i] = hi[i].max(xf);
            }
        }
        lo.iter()
            .zip(&hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    pub fn vertices_f64(&self) -> Vec<Vec<f64>> {
        self.vertices
            .iter()
            .map(|v| v.iter().map(rat::to_f64).collect())
            .collect()
    }

    pub fn centroid_f64(&self) -> Vec<f64> {
        self.centroid.iter().map(rat::to_f64).collect()
    }
}

/// Density of the canonical facet measure against euclidean surface measure.
pub fn canonical_facet_density(facet: &Facet) -> f64 {
    let norm2: f64 = facet
        .normal
        .iter()
        .map(|n| {
            let nf = rat::to_f64(&Rat::from_integer(n.clone()));
            nf * nf
        })
        .sum();
    1.0 / norm2.sqrt()
}

/// Scales a rational half-plane `a . x >= c` to a primitive integer normal.
pub fn primitive_from_rational(a: &[Rat], c: &Rat) -> Option<(Vec<BigInt>, Rat)> {
    if a.iter().all(|x| x.is_zero()) {
        return None;
    }
    let mut denom_lcm = BigInt::from(1);
    for x in a {
        denom_lcm = num::Integer::lcm(&denom_lcm, x.denom());
    }
    let scaled: Vec<BigInt> = a
        .iter()
        .map(|x| x.numer() * (&denom_lcm / x.denom()))
        .collect();
    let mut g = BigInt::zero();
    for x in &scaled {
        g = rat::gcd_big(&g, x);
    }
    let g = g.abs();
    let normal: Vec<BigInt> = scaled.iter().map(|x| x / &g).collect();
    let offset = c * Rat::new(denom_lcm, g);
    Some((normal, offset))
}

/// Lattice length of the segment `[a, b]` on a facet with primitive normal
/// `nu`: the factor `t >= 0` with `b - a = t * rot90(nu)` up to sign.
pub(crate) fn lattice_length(a: &[Rat], b: &[Rat], nu: &[BigInt]) -> Rat {
    let dx = &b[0] - &a[0];
    let dy = &b[1] - &a[1];
    let tau = [-Rat::from_integer(nu[1].clone()), Rat::from_integer(nu[0].clone())];
    let t = if !tau[0].is_zero() { dx / &tau[0] } else { dy / &tau[1] };
    t.abs()
}

/// Moments of a simplex from its vertices (exact, degree <= 2).
fn simplex_moments(dim: usize, vs: &[&Vec<Rat>]) -> MomentTable {
    assert_eq!(vs.len(), dim + 1);
    let vol = match dim {
        1 => (&vs[1][0] - &vs[0][0]).abs(),
        2 => {
            let ux = &vs[1][0] - &vs[0][0];
            let uy = &vs[1][1] - &vs[0][1];
            let wx = &vs[2][0] - &vs[0][0];
            let wy = &vs[2][1] - &vs[0][1];
            (ux * wy - uy * wx).abs() / rat::rat_int(2)
        }
        _ => unreachable!(),
    };
    let np1 = rat::rat_int(dim as i64 + 1);
    let np1np2 = rat::rat_int((dim as i64 + 1) * (dim as i64 + 2));
    let mut table = MomentTable::zero(dim);
    table.c = vol.clone();
    let sums: Vec<Rat> = (0..dim)
        .map(|i| vs.iter().map(|v| v[i].clone()).sum::<Rat>())
        .collect();
    for i in 0..dim {
        table.x[i] = &vol * &sums[i] / &np1;
        for j in 0..dim {
            let cross: Rat = vs.iter().map(|v| &v[i] * &v[j]).sum();
            table.xx[i][j] = &vol * (&sums[i] * &sums[j] + cross) / &np1np2;
        }
    }
    table
}

/// Moments of a boundary segment of canonical measure `len`, parametrised
/// affinely from `a` to `b`.
fn edge_moments(a: &[Rat], b: &[Rat], len: &Rat) -> MomentTable {
    let d = [&b[0] - &a[0], &b[1] - &a[1]];
    let half = rat::rat(1, 2);
    let third = rat::rat(1, 3);
    let mut t = MomentTable::zero(2);
    t.c = len.clone();
    for i in 0..2 {
        t.x[i] = len * (&a[i] + &d[i] * &half);
        for j in 0..2 {
            t.xx[i][j] = len
                * (&a[i] * &a[j]
                    + (&a[i] * &d[j] + &a[j] * &d[i]) * &half
                    + &d[i] * &d[j] * &third);
        }
    }
    t
}

/// Moments of a convex polygon given in counterclockwise order (possibly
/// degenerate, in which case the table is zero).
pub fn polygon_moments(vertices: &[Vec<Rat>]) -> MomentTable {
    let mut total = MomentTable::zero(2);
    if vertices.len() < 3 {
        return total;
    }
    for i in 1..vertices.len() - 1 {
        let vs = [&vertices[0], &vertices[i], &vertices[i + 1]];
        total.add(&simplex_moments(2, &vs));
    }
    total
}

/// Clips a counterclockwise convex polygon by `a . x >= c`, exactly.
pub fn clip_polygon(vertices: &[Vec<Rat>], a: &[Rat], c: &Rat) -> Vec<Vec<Rat>> {
    let mut out: Vec<Vec<Rat>> = Vec::new();
    let m = vertices.len();
    if m == 0 {
        return out;
    }
    let side = |v: &[Rat]| -> Rat { &a[0] * &v[0] + &a[1] * &v[1] - c };
    for k in 0..m {
        let cur = &vertices[k];
        let nxt = &vertices[(k + 1) % m];
        let sc = side(cur);
        let sn = side(nxt);
        if !sc.is_negative() {
            out.push(cur.clone());
        }
        if (sc.is_negative() && sn.is_positive()) || (sc.is_positive() && sn.is_negative()) {
            let t = &sc / (&sc - &sn);
            out.push(vec![
                &cur[0] + (&nxt[0] - &cur[0]) * &t,
                &cur[1] + (&nxt[1] - &cur[1]) * &t,
            ]);
        }
    }
    // Exact duplicates can appear when a vertex lies on the cut line.
    let mut dedup: Vec<Vec<Rat>> = Vec::with_capacity(out.len());
    for v in out {
        if dedup.last() != Some(&v) && (dedup.is_empty() || dedup[0] != v) {
            dedup.push(v);
        }
    }
    dedup
}

/// Clips the 1-D interval `[lo, hi]` by `a x >= c` (a != 0), exactly.
pub fn clip_interval(lo: &Rat, hi: &Rat, a: &Rat, c: &Rat) -> Option<(Rat, Rat)> {
    let bound = c / a;
    let (new_lo, new_hi) = if a.is_positive() {
        (if &bound > lo { bound } else { lo.clone() }, hi.clone())
    } else {
        (lo.clone(), if &bound < hi { bound } else { hi.clone() })
    };
    if new_lo <= new_hi {
        Some((new_lo, new_hi))
    } else {
        None
    }
}

#[cfg(test)]
mod tests;
