//! The stability functional and its affine calculus.
//!
//! For an affine weight `A` the functional is
//!
//! ```text
//! L_A(f) = integral of f over the weighted boundary
//!        - integral of A * f over the interior
//! ```
//!
//! The extremal affine function is the unique `A` with `L_A(g) = 0` for every
//! affine `g`; it is found by solving the exact degree-two moment system.
//! Affine projections, crease evaluations and affine-against-affine values of
//! `L_A` are all computed in rational arithmetic, so tests can pin them
//! exactly; mesh-based evaluation of `L_A` on piecewise-linear functions
//! agrees with the exact values because the quadrature is exact on
//! quadratics.

use crate::error::GeometryError;
use crate::geometry::{AffineRat, MomentTable, Polytope, Quadrature};
use crate::rat::{self, Rat};
use num::Zero;

/// Affine function in floating point, the working type for mesh evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFunction {
    pub gradient: Vec<f64>,
    pub constant: f64,
}

impl AffineFunction {
    pub fn new(gradient: Vec<f64>, constant: f64) -> Self {
        AffineFunction { gradient, constant }
    }

    pub fn constant_fn(dim: usize, value: f64) -> Self {
        AffineFunction {
            gradient: vec![0.0; dim],
            constant: value,
        }
    }

    pub fn from_rat(a: &AffineRat) -> Self {
        AffineFunction {
            gradient: a.gradient.iter().map(rat::to_f64).collect(),
            constant: rat::to_f64(&a.constant),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .gradient
                .iter()
                .zip(x)
                .map(|(g, xi)| g * xi)
                .sum::<f64>()
    }
}

/// Gram matrix of the affine basis `1, x_1, .., x_n` in `L^2` of the interior
/// measure, exact.
pub fn affine_gram(poly: &Polytope) -> Vec<Vec<Rat>> {
    let m = poly.interior_moments();
    gram_from_moments(&m)
}

fn gram_from_moments(m: &MomentTable) -> Vec<Vec<Rat>> {
    let n = m.dim;
    let mut g = vec![vec![Rat::zero(); n + 1]; n + 1];
    g[0][0] = m.c.clone();
    for i in 0..n {
        g[0][i + 1] = m.x[i].clone();
        g[i + 1][0] = m.x[i].clone();
        for j in 0..n {
            g[i + 1][j + 1] = m.xx[i][j].clone();
        }
    }
    g
}

/// The unique affine `A` with `L_A(g) = 0` for all affine `g`, exact.
pub fn extremal_affine(poly: &Polytope) -> Result<AffineRat, GeometryError> {
    let boundary = poly.boundary_moments();
    let mut rhs = vec![boundary.c.clone()];
    rhs.extend(boundary.x.iter().cloned());
    let coeffs = rat::solve_dense(affine_gram(poly), rhs)
        .ok_or(GeometryError::SingularMomentMatrix)?;
    Ok(AffineRat::new(
        coeffs[1..].to_vec(),
        coeffs[0].clone(),
    ))
}

/// `L^2`-orthogonal projection onto affines, from the exact moments
/// `(integral of f, integral of f * x_i)`.
pub fn project_affine_moments(
    poly: &Polytope,
    f_moment: &Rat,
    fx_moments: &[Rat],
) -> Result<AffineRat, GeometryError> {
    let mut rhs = vec![f_moment.clone()];
    rhs.extend(fx_moments.iter().cloned());
    let coeffs = rat::solve_dense(affine_gram(poly), rhs)
        .ok_or(GeometryError::SingularMomentMatrix)?;
    Ok(AffineRat::new(coeffs[1..].to_vec(), coeffs[0].clone()))
}

/// `L^2`-orthogonal projection of a piecewise-linear function onto affines.
pub fn project_affine(
    poly: &Polytope,
    quad: &Quadrature,
    f: &[f64],
) -> Result<AffineFunction, GeometryError> {
    let n = quad.dim;
    let gram = affine_gram(poly);
    let mut g = nalgebra::DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            g[(i, j)] = rat::to_f64(&gram[i][j]);
        }
    }
    let mut rhs = nalgebra::DVector::zeros(n + 1);
    rhs[0] = quad.integral_interior(f);
    for i in 0..n {
        let xi = quad.node_values(|x| x[i]);
        rhs[i + 1] = quad.inner(f, &xi);
    }
    let sol = g
        .lu()
        .solve(&rhs)
        .ok_or(GeometryError::SingularMomentMatrix)?;
    Ok(AffineFunction::new(
        sol.as_slice()[1..].to_vec(),
        sol[0],
    ))
}

/// Mesh coefficients of `L_A`: the value on a piecewise-linear function with
/// node values `f` is the dot product with this vector.
pub fn l_vector(quad: &Quadrature, a: &AffineFunction) -> Vec<f64> {
    let mut l = quad.boundary_vector().to_vec();
    let interior = quad.density_vector(|x| a.eval(x));
    for (li, di) in l.iter_mut().zip(&interior) {
        *li -= di;
    }
    l
}

/// `L_A` of the piecewise-linear function with node values `f`.
pub fn eval_l(quad: &Quadrature, a: &AffineFunction, f: &[f64]) -> f64 {
    let boundary = quad.integral_boundary(f);
    let interior: f64 = quad
        .interior
        .iter()
        .map(|q| q.weight * a.eval(&q.point) * Quadrature::eval_at(&q.support, f))
        .sum();
    boundary - interior
}

/// `L_A(g)` for affine `g`, exact.
pub fn eval_l_affine_exact(poly: &Polytope, a: &AffineRat, g: &AffineRat) -> Rat {
    let boundary = poly.boundary_moments();
    let interior = poly.interior_moments();
    boundary.integrate_affine(g) - interior.integrate_affine_product(a, g)
}

/// `L_A` of the crease function `max(ell, 0)`, exact.
pub fn crease_l_exact(poly: &Polytope, a: &AffineRat, ell: &AffineRat) -> Rat {
    let region_boundary = poly.boundary_moments_in_halfplane(&ell.gradient, &-ell.constant.clone());
    let region_interior = poly.interior_moments_in_halfplane(&ell.gradient, &-ell.constant.clone());
    region_boundary.integrate_affine(ell) - region_interior.integrate_affine_product(a, ell)
}

/// Exact moments of the crease `max(ell, 0)` against `1` and the coordinates,
/// plus its squared `L^2` norm: `(integral f, integral f x_i, integral f^2)`.
pub fn crease_moments_exact(poly: &Polytope, ell: &AffineRat) -> (Rat, Vec<Rat>, Rat) {
    let region = poly.interior_moments_in_halfplane(&ell.gradient, &-ell.constant.clone());
    let f0 = region.integrate_affine(ell);
    let fx: Vec<Rat> = (0..poly.dim)
        .map(|i| {
            let mut xi = AffineRat::new(vec![Rat::zero(); poly.dim], Rat::zero());
            xi.gradient[i] = Rat::from_integer(1.into());
            region.integrate_affine_product(ell, &xi)
        })
        .collect();
    let f2 = region.integrate_affine_product(ell, ell);
    (f0, fx, f2)
}

/// Squared `L^2` distance of the crease `max(ell, 0)` from the affines, exact.
pub fn crease_deviation_exact(poly: &Polytope, ell: &AffineRat) -> Result<Rat, GeometryError> {
    let (f0, fx, f2) = crease_moments_exact(poly, ell);
    let pi = project_affine_moments(poly, &f0, &fx)?;
    let mut dot = &pi.constant * &f0;
    for (g, m) in pi.gradient.iter().zip(&fx) {
        dot += g * m;
    }
    Ok(f2 - dot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Facet;
    use crate::geometry::{build_quadrature, MeshSettings};
    use crate::rat::{rat, rat_int};
    use approx::assert_relative_eq;
    use num::Signed;

    fn weighted_interval(w_lo: Rat, w_hi: Rat) -> Polytope {
        Polytope::from_facets(
            1,
            vec![
                Facet::new(vec![1], rat_int(0), w_lo),
                Facet::new(vec![-1], rat_int(-1), w_hi),
            ],
        )
        .unwrap()
    }

    fn trapezium_l2() -> Polytope {
        Polytope::from_facets(
            2,
            vec![
                Facet::new(vec![1, 0], rat_int(0), rat_int(1)),
                Facet::new(vec![0, 1], rat_int(0), rat_int(0)),
                Facet::new(vec![-1, 0], rat_int(-1), rat_int(1)),
                Facet::new(vec![1, -1], rat_int(-1), rat_int(0)),
            ],
        )
        .unwrap()
    }

    fn standard_triangle() -> Polytope {
        Polytope::from_facets(
            2,
            vec![
                Facet::new(vec![1, 0], rat_int(0), rat_int(1)),
                Facet::new(vec![0, 1], rat_int(0), rat_int(1)),
                Facet::new(vec![-1, -1], rat_int(-1), rat_int(1)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn extremal_affine_of_weighted_interval() {
        // Weights (a, b) at the endpoints give 6(b-a)x + 4a - 2b.
        let p = weighted_interval(rat_int(0), rat_int(1));
        let a = extremal_affine(&p).unwrap();
        assert_eq!(a.gradient, vec![rat_int(6)]);
        assert_eq!(a.constant, rat_int(-2));

        let p = weighted_interval(rat(1, 2), rat_int(1));
        let a = extremal_affine(&p).unwrap();
        assert_eq!(a.gradient, vec![rat_int(3)]);
        assert_eq!(a.constant, rat_int(0));
    }

    #[test]
    fn extremal_affine_of_trapezium() {
        let a = extremal_affine(&trapezium_l2()).unwrap();
        assert_eq!(a.constant, rat(6, 13));
        assert_eq!(a.gradient, vec![rat(36, 13), rat_int(0)]);
    }

    #[test]
    fn extremal_affine_is_constant_on_symmetric_polytopes() {
        let a = extremal_affine(&standard_triangle()).unwrap();
        assert_eq!(a.constant, rat_int(6));
        assert!(a.gradient.iter().all(|g| g.is_zero()));
    }

    #[test]
    fn l_of_affine_functions_vanishes_for_extremal_weight() {
        let p = trapezium_l2();
        let a = extremal_affine(&p).unwrap();
        for g in [
            AffineRat::new(vec![rat_int(1), rat_int(0)], rat_int(0)),
            AffineRat::new(vec![rat_int(0), rat_int(1)], rat_int(0)),
            AffineRat::new(vec![rat(2, 3), rat(-1, 5)], rat(7, 2)),
        ] {
            assert!(eval_l_affine_exact(&p, &a, &g).is_zero());
        }
    }

    #[test]
    fn mesh_l_matches_exact_value_on_creases() {
        // On the (0,1)-weighted interval, L_A(max(x - t, 0)) = t^2 (1 - t).
        let p = weighted_interval(rat_int(0), rat_int(1));
        let a = extremal_affine(&p).unwrap();
        let ell = AffineRat::new(vec![rat_int(1)], rat(-1, 2));
        let exact = crease_l_exact(&p, &a, &ell);
        assert_eq!(exact, rat(1, 8));

        // The mesh value agrees because x = 1/2 is a mesh node.
        let quad = build_quadrature(&p, &MeshSettings::uniform(8)).unwrap();
        let af = AffineFunction::from_rat(&a);
        let f = quad.node_values(|x| (x[0] - 0.5).max(0.0));
        assert_relative_eq!(eval_l(&quad, &af, &f), 0.125, max_relative = 1e-13);
        let lv = l_vector(&quad, &af);
        let dot: f64 = lv.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert_relative_eq!(dot, 0.125, max_relative = 1e-13);
    }

    #[test]
    fn trapezium_crease_values_split_by_direction() {
        let p = trapezium_l2();
        let a = extremal_affine(&p).unwrap();
        // Vertical creases have positive value: L_A(max(x - 1/2, 0)) = 75/208.
        let vertical = AffineRat::new(vec![rat_int(1), rat_int(0)], rat(-1, 2));
        assert_eq!(crease_l_exact(&p, &a, &vertical), rat(75, 208));
        // Chords through (0, u) and (1, 2u) are exact kernel directions:
        // L_A(max(y - u(1 + x), 0)) = 0, here at u = 1/2.
        let chord = AffineRat::new(vec![rat(-1, 2), rat_int(1)], rat(-1, 2));
        assert!(crease_l_exact(&p, &a, &chord).is_zero());
    }

    #[test]
    fn affine_projection_recovers_affine_inputs() {
        let p = trapezium_l2();
        let quad = build_quadrature(&p, &MeshSettings::uniform(4)).unwrap();
        let f = quad.node_values(|x| 2.0 * x[0] - 3.0 * x[1] + 0.25);
        let proj = project_affine(&p, &quad, &f).unwrap();
        assert_relative_eq!(proj.constant, 0.25, max_relative = 1e-11);
        assert_relative_eq!(proj.gradient[0], 2.0, max_relative = 1e-11);
        assert_relative_eq!(proj.gradient[1], -3.0, max_relative = 1e-11);
    }

    #[test]
    fn affine_projection_of_square_function_on_interval() {
        // Projection of x^2 onto affines on [0, 1] is x - 1/6.
        let p = weighted_interval(rat_int(1), rat_int(1));
        let pi = project_affine_moments(&p, &rat(1, 3), &[rat(1, 4)]).unwrap();
        assert_eq!(pi.gradient, vec![rat_int(1)]);
        assert_eq!(pi.constant, rat(-1, 6));
    }

    #[test]
    fn crease_deviation_is_positive_and_exact() {
        // f = max(x - 1/2, 0) on [0, 1]: ||f - proj f||^2 = 1/3840... compute:
        // moments: f0 = 1/8, fx = 1/12 - 1/16 = ..., pin by evaluation.
        let p = weighted_interval(rat_int(1), rat_int(1));
        let ell = AffineRat::new(vec![rat_int(1)], rat(-1, 2));
        let dev = crease_deviation_exact(&p, &ell).unwrap();
        assert!(dev.is_positive());
        let (f0, fx, f2) = crease_moments_exact(&p, &ell);
        assert_eq!(f0, rat(1, 8));
        assert_eq!(fx, vec![rat(5, 48)]);
        assert_eq!(f2, rat(1, 24));
    }

    #[test]
    fn constant_weight_l_measures_stability_defect() {
        // On the triangle, L with constant weight S-hat applied to the corner
        // crease max(1 - t - x - y, 0) is positive for t in (0, 1).
        let p = standard_triangle();
        let shat = AffineRat::new(vec![rat_int(0), rat_int(0)], rat_int(6));
        let ell = AffineRat::new(vec![rat_int(-1), rat_int(-1)], rat(1, 2));
        let v = crease_l_exact(&p, &shat, &ell);
        assert!(v.is_positive());
    }
}
