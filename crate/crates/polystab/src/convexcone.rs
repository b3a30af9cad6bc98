//! The discrete cone of convex-extendable grid functions.
//!
//! Node values `f` on a point set are convex-extendable when some convex
//! function on the hull interpolates them, which holds exactly when every
//! node `j` admits a subgradient `s_j` with
//!
//! ```text
//! f_i >= f_j + s_j . (x_i - x_j)    for all i
//! ```
//!
//! Each node's feasible subgradient set is an intersection of halfplanes
//! (halflines in 1-D); it is tracked here by exact region clipping inside a
//! generous bounding box, so membership comes with either a subgradient per
//! node or a witness pair of nodes that no subgradient can reconcile.

use crate::geometry::{Polytope, Quadrature};
use rand::Rng;

/// Result of a cone membership test.
#[derive(Debug, Clone)]
pub struct ConeCheck {
    pub convex: bool,
    /// `(j, i)`: no subgradient at node `j` satisfies the constraint from
    /// node `i` together with the earlier constraints at `j`.
    pub witness: Option<(usize, usize)>,
    /// One valid subgradient per node when the test passes.
    pub subgradients: Option<Vec<Vec<f64>>>,
}

fn spread(f: &[f64]) -> f64 {
    let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

fn min_spacing(points: &[Vec<f64>]) -> f64 {
    let mut h = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d > 0.0 {
                h = h.min(d);
            }
        }
    }
    h
}

/// Feasible-subgradient region at one node, clipped inside `[-bound, bound]^dim`.
/// Returns the minimum-norm point of the region — a choice determined by the
/// region as a set, so normalizing twice shifts by zero the second time — or
/// the first constraint index that empties the region.
fn node_region(
    points: &[Vec<f64>],
    f: &[f64],
    j: usize,
    bound: f64,
    tol: f64,
) -> Result<Vec<f64>, usize> {
    let dim = points[j].len();
    match dim {
        1 => {
            let (mut lo, mut hi) = (-bound, bound);
            for i in 0..points.len() {
                if i == j {
                    continue;
                }
                let dx = points[i][0] - points[j][0];
                let df = f[i] - f[j] + tol;
                // s * dx <= df
                if dx > 0.0 {
                    hi = hi.min(df / dx);
                } else if dx < 0.0 {
                    lo = lo.max(df / dx);
                } else if df < 0.0 {
                    return Err(i);
                }
                if lo > hi {
                    return Err(i);
                }
            }
            Ok(vec![0.0f64.clamp(lo, hi)])
        }
        2 => {
            let mut region = vec![
                vec![-bound, -bound],
                vec![bound, -bound],
                vec![bound, bound],
                vec![-bound, bound],
            ];
            for i in 0..points.len() {
                if i == j {
                    continue;
                }
                let a = [points[i][0] - points[j][0], points[i][1] - points[j][1]];
                let b = f[i] - f[j] + tol;
                if a[0] == 0.0 && a[1] == 0.0 {
                    if b < 0.0 {
                        return Err(i);
                    }
                    continue;
                }
                region = clip_f64(&region, &a, b);
                if region.len() < 3 {
                    return Err(i);
                }
            }
            Ok(min_norm_point(&region))
        }
        d => panic!("unsupported subgradient dimension {d}"),
    }
}

/// Projection of the origin onto a convex polygon given counterclockwise.
fn min_norm_point(region: &[Vec<f64>]) -> Vec<f64> {
    let m = region.len();
    let inside = (0..m).all(|k| {
        let p = &region[k];
        let q = &region[(k + 1) % m];
        (q[0] - p[0]) * (-p[1]) - (q[1] - p[1]) * (-p[0]) >= 0.0
    });
    if inside {
        return vec![0.0, 0.0];
    }
    let mut best = region[0].clone();
    let mut best_d = best[0] * best[0] + best[1] * best[1];
    for k in 0..m {
        let p = &region[k];
        let q = &region[(k + 1) % m];
        let e = [q[0] - p[0], q[1] - p[1]];
        let ee = e[0] * e[0] + e[1] * e[1];
        let t = if ee > 0.0 {
            ((-p[0]) * e[0] + (-p[1]) * e[1]) / ee
        } else {
            0.0
        }
        .clamp(0.0, 1.0);
        let c = [p[0] + t * e[0], p[1] + t * e[1]];
        let d = c[0] * c[0] + c[1] * c[1];
        if d < best_d {
            best_d = d;
            best = c.to_vec();
        }
    }
    best
}

/// Clips a convex polygon by `a . s <= b` (note the direction).
fn clip_f64(region: &[Vec<f64>], a: &[f64; 2], b: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(region.len() + 1);
    let m = region.len();
    for k in 0..m {
        let cur = &region[k];
        let nxt = &region[(k + 1) % m];
        let sc = a[0] * cur[0] + a[1] * cur[1] - b;
        let sn = a[0] * nxt[0] + a[1] * nxt[1] - b;
        if sc <= 0.0 {
            out.push(cur.clone());
        }
        if (sc < 0.0 && sn > 0.0) || (sc > 0.0 && sn < 0.0) {
            let t = sc / (sc - sn);
            out.push(vec![
                cur[0] + t * (nxt[0] - cur[0]),
                cur[1] + t * (nxt[1] - cur[1]),
            ]);
        }
    }
    out
}

/// Tests cone membership, producing per-node subgradients or a witness pair.
pub fn is_convex_extendable(points: &[Vec<f64>], f: &[f64], tol: f64) -> ConeCheck {
    assert_eq!(points.len(), f.len(), "one value per node");
    let h = min_spacing(points);
    let bound = 1.0 + 4.0 * spread(f) / h;
    let mut subgradients = Vec::with_capacity(points.len());
    for j in 0..points.len() {
        match node_region(points, f, j, bound, tol) {
            Ok(s) => subgradients.push(s),
            Err(i) => {
                return ConeCheck {
                    convex: false,
                    witness: Some((j, i)),
                    subgradients: None,
                }
            }
        }
    }
    ConeCheck {
        convex: true,
        witness: None,
        subgradients: Some(subgradients),
    }
}

/// Subtracts the supporting affine function at `base`, leaving a
/// convex-extendable function that vanishes at `base` and is nonnegative.
/// Returns `None` when `f` is not convex-extendable within `tol`.
pub fn normalize(points: &[Vec<f64>], f: &[f64], base: usize, tol: f64) -> Option<Vec<f64>> {
    let h = min_spacing(points);
    let bound = 1.0 + 4.0 * spread(f) / h;
    let s = node_region(points, f, base, bound, tol).ok()?;
    let out: Vec<f64> = (0..points.len())
        .map(|i| {
            let shift: f64 = s
                .iter()
                .zip(points[i].iter().zip(&points[base]))
                .map(|(sk, (xi, xb))| sk * (xi - xb))
                .sum();
            f[i] - f[base] - shift
        })
        .collect();
    Some(out)
}

/// Draws normalized cone elements: creases, maxima of a few affine
/// functions, squared pinches and their nonnegative mixtures, each shifted to
/// vanish at the mesh base node and scaled to unit boundary integral.
pub fn sample_cone(
    rng: &mut impl Rng,
    poly: &Polytope,
    quad: &Quadrature,
    count: usize,
) -> Vec<Vec<f64>> {
    let dim = poly.dim;
    let verts = poly.vertices_f64();
    let centroid = poly.centroid_f64();
    let scale = poly.diameter();
    let mut out = Vec::with_capacity(count);
    let mut guard = 0usize;
    while out.len() < count && guard < 50 * count + 100 {
        guard += 1;
        let kind = rng.gen_range(0..4u32);
        let f: Vec<f64> = match kind {
            0 => {
                // Crease through a random point between the centroid and a vertex.
                let v = &verts[rng.gen_range(0..verts.len())];
                let t: f64 = rng.gen_range(0.05..0.95);
                let p: Vec<f64> = centroid
                    .iter()
                    .zip(v)
                    .map(|(c, vi)| c + t * (vi - c))
                    .collect();
                let dir = random_direction(rng, dim);
                quad.node_values(|x| {
                    let d: f64 = dir.iter().zip(x.iter().zip(&p)).map(|(g, (xi, pi))| g * (xi - pi)).sum();
                    d.max(0.0)
                })
            }
            1 => {
                // Max of a few affine functions.
                let k = rng.gen_range(2..=5usize);
                let planes: Vec<(Vec<f64>, f64)> = (0..k)
                    .map(|_| {
                        let g: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                        let c: f64 = rng.gen_range(-0.5..0.5) * scale;
                        (g, c)
                    })
                    .collect();
                quad.node_values(|x| {
                    planes
                        .iter()
                        .map(|(g, c)| c + g.iter().zip(x).map(|(gi, xi)| gi * xi).sum::<f64>())
                        .fold(f64::NEG_INFINITY, f64::max)
                })
            }
            2 => {
                // Squared pinch along a random direction.
                let dir = random_direction(rng, dim);
                let c: f64 = rng.gen_range(-0.4..0.4) * scale;
                quad.node_values(|x| {
                    let d: f64 = dir.iter().zip(x).map(|(g, xi)| g * xi).sum::<f64>() - c;
                    d * d
                })
            }
            _ => {
                // Nonnegative mixture of two creases.
                let mk = |rng: &mut dyn rand::RngCore| -> (Vec<f64>, Vec<f64>) {
                    let dir = random_direction(rng, dim);
                    let v: Vec<f64> = centroid
                        .iter()
                        .zip(&verts[0])
                        .map(|(c, vi)| c + 0.5 * (vi - c))
                        .collect();
                    (dir, v)
                };
                let (d1, p1) = mk(rng);
                let (d2, p2) = mk(rng);
                let (w1, w2): (f64, f64) = (rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0));
                quad.node_values(|x| {
                    let a: f64 = d1.iter().zip(x.iter().zip(&p1)).map(|(g, (xi, pi))| g * (xi - pi)).sum();
                    let b: f64 = d2.iter().zip(x.iter().zip(&p2)).map(|(g, (xi, pi))| g * (xi - pi)).sum();
                    w1 * a.max(0.0) + w2 * b.max(0.0)
                })
            }
        };
        let tol = 1e-9 * (1.0 + spread(&f));
        let Some(normalized) = normalize(&quad.mesh_nodes, &f, quad.base_node, tol) else {
            continue;
        };
        let mass = quad.integral_boundary(&normalized);
        if mass > 1e-9 * scale {
            out.push(normalized.iter().map(|v| v / mass).collect());
        }
    }
    out
}

fn random_direction(rng: &mut (impl Rng + ?Sized), dim: usize) -> Vec<f64> {
    match dim {
        1 => vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }],
        _ => {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            vec![theta.cos(), theta.sin()]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_quadrature, Facet, MeshSettings};
    use crate::rat::{rat_int, Rat};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_interval() -> Polytope {
        Polytope::from_facets(
            1,
            vec![
                Facet::new(vec![1], rat_int(0), rat_int(1)),
                Facet::new(vec![-1], rat_int(-1), rat_int(1)),
            ],
        )
        .unwrap()
    }

    fn unit_square() -> Polytope {
        Polytope::from_facets(
            2,
            vec![
                Facet::new(vec![1, 0], rat_int(0), rat_int(1)),
                Facet::new(vec![0, 1], rat_int(0), rat_int(1)),
                Facet::new(vec![-1, 0], rat_int(-1), rat_int(1)),
                Facet::new(vec![0, -1], rat_int(-1), rat_int(1)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn vee_is_convex_and_dip_is_not() {
        let p = unit_interval();
        let q = build_quadrature(&p, &MeshSettings::uniform(8)).unwrap();
        let vee = q.node_values(|x| (x[0] - 0.5).abs());
        let check = is_convex_extendable(&q.mesh_nodes, &vee, 1e-12);
        assert!(check.convex);
        let subs = check.subgradients.unwrap();
        for (j, s) in subs.iter().enumerate() {
            for i in 0..vee.len() {
                let gap = vee[i]
                    - vee[j]
                    - s[0] * (q.mesh_nodes[i][0] - q.mesh_nodes[j][0]);
                assert!(gap >= -1e-9, "subgradient at {j} fails against {i}");
            }
        }

        let mut dip = vee.clone();
        dip[4] -= 0.2;
        let check = is_convex_extendable(&q.mesh_nodes, &dip, 1e-12);
        assert!(!check.convex);
        let (j, i) = check.witness.unwrap();
        assert!(j < dip.len() && i < dip.len() && i != j);
    }

    #[test]
    fn planar_crease_is_convex_and_bump_is_not() {
        let p = unit_square();
        let q = build_quadrature(&p, &MeshSettings::uniform(4)).unwrap();
        let crease = q.node_values(|x| (x[0] + x[1] - 1.0).max(0.0));
        assert!(is_convex_extendable(&q.mesh_nodes, &crease, 1e-12).convex);

        let mut bump = crease.clone();
        bump[q.base_node] += 0.3;
        let check = is_convex_extendable(&q.mesh_nodes, &bump, 1e-12);
        assert!(!check.convex);
        assert!(check.witness.is_some());
    }

    #[test]
    fn affine_functions_sit_on_the_cone_boundary() {
        let p = unit_square();
        let q = build_quadrature(&p, &MeshSettings::uniform(3)).unwrap();
        let f = q.node_values(|x| 2.0 * x[0] - x[1] + 0.3);
        assert!(is_convex_extendable(&q.mesh_nodes, &f, 1e-12).convex);
        let n = normalize(&q.mesh_nodes, &f, q.base_node, 1e-12).unwrap();
        assert!(n.iter().all(|v| v.abs() < 1e-9), "affine normalizes to zero");
    }

    #[test]
    fn normalize_vanishes_at_base_and_is_nonnegative_and_idempotent() {
        let p = unit_square();
        let q = build_quadrature(&p, &MeshSettings::uniform(4)).unwrap();
        let f = q.node_values(|x| (x[0] - 0.3) * (x[0] - 0.3) + 0.7 * x[1]);
        let n1 = normalize(&q.mesh_nodes, &f, q.base_node, 1e-12).unwrap();
        assert!(n1[q.base_node].abs() < 1e-12);
        assert!(n1.iter().all(|v| *v >= -1e-9));
        let n2 = normalize(&q.mesh_nodes, &n1, q.base_node, 1e-12).unwrap();
        for (a, b) in n1.iter().zip(&n2) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn samples_are_normalized_cone_members() {
        let p = unit_square();
        let q = build_quadrature(&p, &MeshSettings::uniform(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples = sample_cone(&mut rng, &p, &q, 24);
        assert_eq!(samples.len(), 24);
        for f in &samples {
            assert!(is_convex_extendable(&q.mesh_nodes, f, 1e-7).convex);
            let mass = q.integral_boundary(f);
            assert!((mass - 1.0).abs() < 1e-9, "boundary mass {mass}");
            assert!(f[q.base_node].abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_deterministic_for_a_fixed_seed() {
        let p = unit_interval();
        let q = build_quadrature(&p, &MeshSettings::uniform(6)).unwrap();
        let a = sample_cone(&mut ChaCha8Rng::seed_from_u64(7), &p, &q, 8);
        let b = sample_cone(&mut ChaCha8Rng::seed_from_u64(7), &p, &q, 8);
        assert_eq!(a, b);
    }

    #[test]
    fn steep_boundary_creases_stay_inside_the_subgradient_box() {
        // A crease hugging the boundary needs a large one-sided slope; the
        // bounding box must not clip it away.
        let p = unit_interval();
        let q = build_quadrature(&p, &MeshSettings::uniform(16)).unwrap();
        let f = q.node_values(|x| (x[0] - 0.9375).max(0.0) * 50.0);
        assert!(is_convex_extendable(&q.mesh_nodes, &f, 1e-12).convex);
    }

    #[test]
    fn rational_node_coordinates_survive_roundtrip() {
        // Guards the exact node bookkeeping the cone test relies on.
        let p = unit_square();
        let q = build_quadrature(&p, &MeshSettings::uniform(4)).unwrap();
        for (exact, float) in q.mesh_nodes_exact.iter().zip(&q.mesh_nodes) {
            for (e, f) in exact.iter().zip(float) {
                assert!((crate::rat::to_f64(e) - f).abs() == 0.0);
            }
        }
        let _: &Rat = &q.mesh_nodes_exact[0][0];
    }
}
