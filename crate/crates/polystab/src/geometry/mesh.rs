//! Piecewise-linear meshes with quadrature that is exact on quadratics.
//!
//! Mesh nodes have exact rational coordinates and quadrature weights are
//! accumulated exactly, so integrating a product of two affine functions
//! through the mesh reproduces the polytope's moment tables to the last bit
//! of the final rounding.  Interior cells use the degree-two three-point
//! triangle rule (1-D: two-point Gauss, degree three); all interior rule
//! points are strictly inside their cells.
//!
//! 1-D meshes honour a power grading that clusters nodes at both endpoints;
//! 2-D meshes refine the fan triangulation uniformly and ignore grading.

use super::{lattice_length, Polytope};
use crate::error::GeometryError;
use crate::rat::{self, snap_f64, Rat};
use nalgebra::DMatrix;
use num::{BigInt, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSettings {
    /// Subdivisions per edge of the fan triangulation (2-D) or per interval (1-D).
    pub resolution: usize,
    /// Power grading toward the endpoints; 1 is uniform.  1-D only.
    pub grading: f64,
}

impl MeshSettings {
    pub const DEFAULT_RESOLUTION: usize = 16;

    pub fn uniform(resolution: usize) -> Self {
        MeshSettings {
            resolution,
            grading: 1.0,
        }
    }
}

impl Default for MeshSettings {
    fn default() -> Self {
        MeshSettings::uniform(Self::DEFAULT_RESOLUTION)
    }
}

/// Interior quadrature node with its piecewise-linear interpolation stencil:
/// a function given by mesh-node values is evaluated here as
/// `sum of coeff * value[node]` over `support`.
#[derive(Debug, Clone)]
pub struct QuadNode {
    pub point: Vec<f64>,
    pub weight: f64,
    pub support: Vec<(usize, f64)>,
}

/// Boundary quadrature node; `facet` indexes the polytope facet it sits on.
#[derive(Debug, Clone)]
pub struct BoundaryNode {
    pub point: Vec<f64>,
    pub weight: f64,
    pub facet: usize,
    pub support: Vec<(usize, f64)>,
}

#[derive(Debug)]
pub struct Quadrature {
    pub dim: usize,
    /// Mesh node coordinates; in 1-D these are strictly increasing.
    pub mesh_nodes: Vec<Vec<f64>>,
    pub mesh_nodes_exact: Vec<Vec<Rat>>,
    pub interior: Vec<QuadNode>,
    pub boundary: Vec<BoundaryNode>,
    /// Cells as mesh-node index lists (1-D segments, 2-D triangles, counterclockwise).
    pub cells: Vec<Vec<usize>>,
    /// Unique mesh edges (i < j).
    pub edges: Vec<(usize, usize)>,
    /// Marks mesh nodes lying on the polytope boundary.
    pub on_boundary: Vec<bool>,
    /// Interior mesh node closest to the centroid (any node if none is interior).
    pub base_node: usize,
    /// Polynomial degree integrated exactly by the interior rule.
    pub exactness_degree: u32,
    pub vol_mu: f64,
    pub vol_sigma: f64,
    pub s_hat: f64,
    mass: OnceLock<DMatrix<f64>>,
    interior_vec: OnceLock<Vec<f64>>,
    boundary_vec: OnceLock<Vec<f64>>,
}

impl Quadrature {
    pub fn num_nodes(&self) -> usize {
        self.mesh_nodes.len()
    }

    /// P1 mass matrix: `M[i][j] = integral of basis_i * basis_j` over the polytope.
    pub fn mass(&self) -> &DMatrix<f64> {
        self.mass.get_or_init(|| {
            let n = self.num_nodes();
            let mut m = DMatrix::zeros(n, n);
            for q in &self.interior {
                for &(i, ci) in &q.support {
                    for &(j, cj) in &q.support {
                        m[(i, j)] += q.weight * ci * cj;
                    }
                }
            }
            m
        })
    }

    /// `a[i] = integral of basis_i` over the interior.
    pub fn interior_vector(&self) -> &[f64] {
        self.interior_vec.get_or_init(|| {
            let mut a = vec![0.0; self.num_nodes()];
            for q in &self.interior {
                for &(i, ci) in &q.support {
                    a[i] += q.weight * ci;
                }
            }
            a
        })
    }

    /// `b[i] = integral of basis_i` over the weighted boundary.
    pub fn boundary_vector(&self) -> &[f64] {
        self.boundary_vec.get_or_init(|| {
            let mut b = vec![0.0; self.num_nodes()];
            for q in &self.boundary {
                for &(i, ci) in &q.support {
                    b[i] += q.weight * ci;
                }
            }
            b
        })
    }

    /// `v[i] = integral of density * basis_i` over the interior.
    pub fn density_vector(&self, density: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; self.num_nodes()];
        for q in &self.interior {
            let d = density(&q.point);
            for &(i, ci) in &q.support {
                v[i] += q.weight * d * ci;
            }
        }
        v
    }

    pub fn eval_at(support: &[(usize, f64)], values: &[f64]) -> f64 {
        support.iter().map(|&(i, c)| c * values[i]).sum()
    }

    /// Interior integral of the piecewise-linear interpolant of `values`.
    pub fn integral_interior(&self, values: &[f64]) -> f64 {
        self.interior
            .iter()
            .map(|q| q.weight * Self::eval_at(&q.support, values))
            .sum()
    }

    /// Weighted boundary integral of the interpolant of `values`.
    pub fn integral_boundary(&self, values: &[f64]) -> f64 {
        self.boundary
            .iter()
            .map(|q| q.weight * Self::eval_at(&q.support, values))
            .sum()
    }

    /// L2 inner product of two interpolants.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.interior
            .iter()
            .map(|q| q.weight * Self::eval_at(&q.support, u) * Self::eval_at(&q.support, v))
            .sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// Evaluates a closure on every mesh node.
    pub fn node_values(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.mesh_nodes.iter().map(|p| f(p)).collect()
    }
}

/// Builds the mesh and quadrature for a polytope.
pub fn build_quadrature(
    poly: &Polytope,
    settings: &MeshSettings,
) -> Result<Quadrature, GeometryError> {
    if settings.resolution < 2 {
        return Err(GeometryError::ResolutionTooSmall(settings.resolution));
    }
    if !(settings.grading.is_finite() && settings.grading > 0.0) {
        return Err(GeometryError::MalformedDocument(format!(
            "mesh grading must be positive, got {}",
            settings.grading
        )));
    }
    match poly.dim {
        1 => build_1d(poly, settings),
        2 => build_2d(poly, settings),
        d => Err(GeometryError::UnsupportedDimension(d)),
    }
}

/// Two-sided power grading of `[0, 1]`: identity for `g = 1`, node spacing
/// `O(step^g)` at both endpoints otherwise.
fn graded_param(t: &Rat, g: f64) -> Rat {
    let half = rat::rat(1, 2);
    if (g - 1.0).abs() < 1e-14 {
        return t.clone();
    }
    let g_int = g.round();
    let exact_power = (g - g_int).abs() < 1e-14 && (1.0..=16.0).contains(&g_int);
    let one_sided = |u: &Rat| -> Rat {
        // (2u)^g / 2 for u in [0, 1/2]
        let two_u = u * rat::rat_int(2);
        if exact_power {
            let mut p = Rat::from_integer(1.into());
            for _ in 0..g_int as usize {
                p *= &two_u;
            }
            p * &half
        } else {
            let v = rat::to_f64(&two_u).powf(g) / 2.0;
            snap_f64(v, 1u64 << 40)
        }
    };
    if t <= &half {
        one_sided(t)
    } else {
        let u = Rat::from_integer(1.into()) - t;
        Rat::from_integer(1.into()) - one_sided(&u)
    }
}

fn build_1d(poly: &Polytope, settings: &MeshSettings) -> Result<Quadrature, GeometryError> {
    let n = settings.resolution;
    let lo = poly.vertices[0][0].clone();
    let hi = poly.vertices[1][0].clone();
    let span = &hi - &lo;

    let mut nodes_exact: Vec<Vec<Rat>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = Rat::new(BigInt::from(k as i64), BigInt::from(n as i64));
        let s = graded_param(&t, settings.grading);
        nodes_exact.push(vec![&lo + &span * s]);
    }
    for k in 0..n {
        if nodes_exact[k][0] >= nodes_exact[k + 1][0] {
            return Err(GeometryError::MalformedDocument(
                "mesh grading too steep for this resolution".into(),
            ));
        }
    }

    let gauss_offset = 0.5 / 3.0_f64.sqrt();
    let mut interior = Vec::with_capacity(2 * n);
    let mut cells = Vec::with_capacity(n);
    let mut edges = Vec::with_capacity(n);
    let mut w_sum = Rat::zero();
    for k in 0..n {
        let a = &nodes_exact[k][0];
        let b = &nodes_exact[k + 1][0];
        let h = b - a;
        let half_h = &h * rat::rat(1, 2);
        let (af, hf) = (rat::to_f64(a), rat::to_f64(&h));
        for xi in [0.5 - gauss_offset, 0.5 + gauss_offset] {
            interior.push(QuadNode {
                point: vec![af + xi * hf],
                weight: rat::to_f64(&half_h),
                support: vec![(k, 1.0 - xi), (k + 1, xi)],
            });
        }
        w_sum += &h;
        cells.push(vec![k, k + 1]);
        edges.push((k, k + 1));
    }
    assert_eq!(w_sum, poly.interior_moments().c, "interior weights must tile the interval");

    let mut boundary = Vec::new();
    let mut bw_sum = Rat::zero();
    for (fi, (facet, on)) in poly.facets.iter().zip(&poly.facet_vertices).enumerate() {
        if on.len() != 1 || facet.sigma_weight.is_zero() {
            continue;
        }
        let node = if on[0] == 0 { 0 } else { n };
        boundary.push(BoundaryNode {
            point: vec![rat::to_f64(&nodes_exact[node][0])],
            weight: rat::to_f64(&facet.sigma_weight),
            facet: fi,
            support: vec![(node, 1.0)],
        });
        bw_sum += &facet.sigma_weight;
    }
    assert_eq!(bw_sum, poly.boundary_moments().c, "boundary weights must match the measure");

    finish(poly, nodes_exact, interior, boundary, cells, edges, 3)
}

fn build_2d(poly: &Polytope, settings: &MeshSettings) -> Result<Quadrature, GeometryError> {
    let r = settings.resolution;
    let r_big = BigInt::from(r as i64);
    let mut index: BTreeMap<Vec<Rat>, usize> = BTreeMap::new();
    let mut nodes_exact: Vec<Vec<Rat>> = Vec::new();
    let intern = |p: Vec<Rat>, nodes: &mut Vec<Vec<Rat>>, index: &mut BTreeMap<Vec<Rat>, usize>| -> usize {
        if let Some(&id) = index.get(&p) {
            return id;
        }
        let id = nodes.len();
        index.insert(p.clone(), id);
        nodes.push(p);
        id
    };

    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut interior: Vec<QuadNode> = Vec::new();
    let mut w_sum = Rat::zero();

    for simplex in &poly.simplices {
        let v0 = &poly.vertices[simplex[0]];
        let v1 = &poly.vertices[simplex[1]];
        let v2 = &poly.vertices[simplex[2]];
        let lattice_point = |i: usize, j: usize| -> Vec<Rat> {
            let ti = Rat::new(BigInt::from(i as i64), r_big.clone());
            let tj = Rat::new(BigInt::from(j as i64), r_big.clone());
            vec![
                &v0[0] + (&v1[0] - &v0[0]) * &ti + (&v2[0] - &v0[0]) * &tj,
                &v0[1] + (&v1[1] - &v0[1]) * &ti + (&v2[1] - &v0[1]) * &tj,
            ]
        };
        // Cache ids for this simplex's lattice.
        let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for i in 0..=r {
            for j in 0..=(r - i) {
                let id = intern(lattice_point(i, j), &mut nodes_exact, &mut index);
                ids.insert((i, j), id);
            }
        }
        let ux = &v1[0] - &v0[0];
        let uy = &v1[1] - &v0[1];
        let wx = &v2[0] - &v0[0];
        let wy = &v2[1] - &v0[1];
        let sub_area =
            (&ux * &wy - &uy * &wx).abs() / (rat::rat_int(2) * Rat::from_integer(&r_big * &r_big));
        let w_each = &sub_area * rat::rat(1, 3);
        let w_each_f = rat::to_f64(&w_each);
        let mut emit = |tri: [usize; 3]| {
            let pts: Vec<&Vec<Rat>> = tri.iter().map(|&id| &nodes_exact[id]).collect();
            // Cyclic degree-two rule: one point toward each corner.
            for k in 0..3 {
                let (c0, c1, c2) = (rat::rat(2, 3), rat::rat(1, 6), rat::rat(1, 6));
                let p = [
                    &pts[k][0] * &c0 + &pts[(k + 1) % 3][0] * &c1 + &pts[(k + 2) % 3][0] * &c2,
                    &pts[k][1] * &c0 + &pts[(k + 1) % 3][1] * &c1 + &pts[(k + 2) % 3][1] * &c2,
                ];
                interior.push(QuadNode {
                    point: vec![rat::to_f64(&p[0]), rat::to_f64(&p[1])],
                    weight: w_each_f,
                    support: vec![
                        (tri[k], 2.0 / 3.0),
                        (tri[(k + 1) % 3], 1.0 / 6.0),
                        (tri[(k + 2) % 3], 1.0 / 6.0),
                    ],
                });
            }
            cells.push(tri.to_vec());
        };
        for i in 0..r {
            for j in 0..(r - i) {
                emit([ids[&(i, j)], ids[&(i + 1, j)], ids[&(i, j + 1)]]);
                w_sum += &sub_area;
                if i + j + 2 <= r {
                    emit([ids[&(i + 1, j)], ids[&(i + 1, j + 1)], ids[&(i, j + 1)]]);
                    w_sum += &sub_area;
                }
            }
        }
    }
    assert_eq!(w_sum, poly.interior_moments().c, "interior weights must tile the polygon");

    let gauss_offset = 0.5 / 3.0_f64.sqrt();
    let mut boundary: Vec<BoundaryNode> = Vec::new();
    let mut bw_sum = Rat::zero();
    for (fi, (facet, on)) in poly.facets.iter().zip(&poly.facet_vertices).enumerate() {
        if on.len() != 2 || facet.sigma_weight.is_zero() {
            continue;
        }
        let va = &poly.vertices[on[0]];
        let vb = &poly.vertices[on[1]];
        let edge_measure = &facet.sigma_weight * lattice_length(va, vb, &facet.normal);
        let seg_measure = &edge_measure / Rat::from_integer(r_big.clone());
        let half_seg = &seg_measure * rat::rat(1, 2);
        let half_seg_f = rat::to_f64(&half_seg);
        for k in 0..r {
            let tk = Rat::new(BigInt::from(k as i64), r_big.clone());
            let tk1 = Rat::new(BigInt::from(k as i64 + 1), r_big.clone());
            let e0 = vec![
                &va[0] + (&vb[0] - &va[0]) * &tk,
                &va[1] + (&vb[1] - &va[1]) * &tk,
            ];
            let e1 = vec![
                &va[0] + (&vb[0] - &va[0]) * &tk1,
                &va[1] + (&vb[1] - &va[1]) * &tk1,
            ];
            let id0 = *index
                .get(&e0)
                .expect("facet subdivision must hit mesh lattice nodes");
            let id1 = *index
                .get(&e1)
                .expect("facet subdivision must hit mesh lattice nodes");
            let e0f = [rat::to_f64(&e0[0]), rat::to_f64(&e0[1])];
            let e1f = [rat::to_f64(&e1[0]), rat::to_f64(&e1[1])];
            for xi in [0.5 - gauss_offset, 0.5 + gauss_offset] {
                boundary.push(BoundaryNode {
                    point: vec![
                        e0f[0] + xi * (e1f[0] - e0f[0]),
                        e0f[1] + xi * (e1f[1] - e0f[1]),
                    ],
                    weight: half_seg_f,
                    facet: fi,
                    support: vec![(id0, 1.0 - xi), (id1, xi)],
                });
            }
            bw_sum += &seg_measure;
        }
    }
    assert_eq!(bw_sum, poly.boundary_moments().c, "boundary weights must match the measure");

    let mut edge_set: BTreeSet<(usize, usize)> = BTreeSet::new();
    for cell in &cells {
        for k in 0..3 {
            let (a, b) = (cell[k], cell[(k + 1) % 3]);
            edge_set.insert((a.min(b), a.max(b)));
        }
    }
    let edges: Vec<(usize, usize)> = edge_set.into_iter().collect();

    finish(poly, nodes_exact, interior, boundary, cells, edges, 2)
}

fn finish(
    poly: &Polytope,
    nodes_exact: Vec<Vec<Rat>>,
    interior: Vec<QuadNode>,
    boundary: Vec<BoundaryNode>,
    cells: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    exactness_degree: u32,
) -> Result<Quadrature, GeometryError> {
    let on_boundary: Vec<bool> = nodes_exact
        .iter()
        .map(|p| poly.facets.iter().any(|f| f.eval(p).is_zero()))
        .collect();
    let pick = |candidates: &mut dyn Iterator<Item = usize>| -> Option<usize> {
        candidates.min_by(|&a, &b| {
            let dist = |k: usize| -> Rat {
                nodes_exact[k]
                    .iter()
                    .zip(&poly.centroid)
                    .map(|(x, c)| {
                        let d = x - c;
                        &d * &d
                    })
                    .sum()
            };
            dist(a).cmp(&dist(b)).then(a.cmp(&b))
        })
    };
    let base_node = pick(&mut (0..nodes_exact.len()).filter(|&k| !on_boundary[k]))
        .or_else(|| pick(&mut (0..nodes_exact.len())))
        .expect("mesh has at least one node");

    let summary = poly.scalar_summary();
    let mesh_nodes: Vec<Vec<f64>> = nodes_exact
        .iter()
        .map(|p| p.iter().map(rat::to_f64).collect())
        .collect();
    Ok(Quadrature {
        dim: poly.dim,
        mesh_nodes,
        mesh_nodes_exact: nodes_exact,
        interior,
        boundary,
        cells,
        edges,
        on_boundary,
        base_node,
        exactness_degree,
        vol_mu: summary.vol_mu,
        vol_sigma: summary.vol_sigma,
        s_hat: summary.s_hat,
        mass: OnceLock::new(),
        interior_vec: OnceLock::new(),
        boundary_vec: OnceLock::new(),
    })
}
