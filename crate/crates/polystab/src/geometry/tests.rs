use super::*;
use crate::rat::{rat, rat_int};
use approx::assert_relative_eq;

fn unit_interval(w_lo: Rat, w_hi: Rat) -> Polytope {
    Polytope::from_facets(
        1,
        vec![
            Facet::new(vec![1], rat_int(0), w_lo),
            Facet::new(vec![-1], rat_int(-1), w_hi),
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

/// Vertices (0,0), (1,0), (1,2), (0,1); boundary measure on the two vertical
/// edges only.
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

#[test]
fn square_vertices_are_counterclockwise_from_lex_min() {
    let p = unit_square();
    let expect: Vec<Vec<Rat>> = vec![
        vec![rat_int(0), rat_int(0)],
        vec![rat_int(1), rat_int(0)],
        vec![rat_int(1), rat_int(1)],
        vec![rat_int(0), rat_int(1)],
    ];
    assert_eq!(p.vertices, expect);
}

#[test]
fn trapezium_interior_moments_match_closed_forms() {
    let p = trapezium_l2();
    let m = p.interior_moments();
    assert_eq!(m.c, rat(3, 2));
    assert_eq!(m.x[0], rat(5, 6));
    assert_eq!(m.x[1], rat(7, 6));
    assert_eq!(m.xx[0][0], rat(7, 12));
    assert_eq!(m.xx[0][1], rat(17, 24));
    assert_eq!(m.xx[1][0], rat(17, 24));
    assert_eq!(m.xx[1][1], rat(5, 4));
}

#[test]
fn trapezium_boundary_moments_match_closed_forms() {
    let p = trapezium_l2();
    let m = p.boundary_moments();
    assert_eq!(m.c, rat_int(3));
    assert_eq!(m.x[0], rat_int(2));
    assert_eq!(m.x[1], rat(5, 2));
    assert_eq!(m.xx[0][0], rat_int(2));
    assert_eq!(m.xx[0][1], rat_int(2));
    assert_eq!(m.xx[1][1], rat_int(3));
}

#[test]
fn trapezium_centroid_is_moment_barycentre() {
    let p = trapezium_l2();
    assert_eq!(p.centroid, vec![rat(5, 9), rat(7, 9)]);
}

#[test]
fn scalar_summaries_of_reference_polytopes() {
    let tri = standard_triangle().scalar_summary_exact();
    assert_eq!(tri, (rat(1, 2), rat_int(3), rat_int(6)));
    let sq = unit_square().scalar_summary_exact();
    assert_eq!(sq, (rat_int(1), rat_int(4), rat_int(4)));
    let seg = unit_interval(rat_int(1), rat_int(1)).scalar_summary_exact();
    assert_eq!(seg, (rat_int(1), rat_int(2), rat_int(2)));
    let trap = trapezium_l2().scalar_summary_exact();
    assert_eq!(trap, (rat(3, 2), rat_int(3), rat_int(2)));
}

#[test]
fn slanted_edge_uses_lattice_normalisation() {
    // Hypotenuse of the standard triangle has euclidean length sqrt(2) but
    // lattice length 1.
    let p = standard_triangle();
    let hyp = &p.facets[2];
    assert_relative_eq!(canonical_facet_density(hyp), 1.0 / 2.0f64.sqrt());
    let m = p.boundary_moments();
    assert_eq!(m.c, rat_int(3));
}

#[test]
fn weighted_interval_boundary_masses() {
    let p = unit_interval(rat(1, 2), rat_int(1));
    let m = p.boundary_moments();
    assert_eq!(m.c, rat(3, 2));
    assert_eq!(m.x[0], rat_int(1));
    assert_eq!(m.xx[0][0], rat_int(1));
}

#[test]
fn rejects_unbounded_and_empty_and_bad_facets() {
    let quadrant = Polytope::from_facets(
        2,
        vec![
            Facet::new(vec![1, 0], rat_int(0), rat_int(1)),
            Facet::new(vec![0, 1], rat_int(0), rat_int(1)),
        ],
    );
    assert!(matches!(quadrant, Err(GeometryError::UnboundedPolytope)));

    let empty = Polytope::from_facets(
        2,
        vec![
            Facet::new(vec![1, 0], rat_int(1), rat_int(1)),
            Facet::new(vec![0, 1], rat_int(0), rat_int(1)),
            Facet::new(vec![-1, 0], rat_int(0), rat_int(1)),
            Facet::new(vec![0, -1], rat_int(-1), rat_int(1)),
        ],
    );
    assert!(matches!(empty, Err(GeometryError::EmptyInterior)));

    let scaled = Polytope::from_facets(
        2,
        vec![
            Facet::new(vec![2, 0], rat_int(0), rat_int(1)),
            Facet::new(vec![0, 1], rat_int(0), rat_int(1)),
            Facet::new(vec![-1, -1], rat_int(-1), rat_int(1)),
        ],
    );
    assert!(matches!(
        scaled,
        Err(GeometryError::NonPrimitiveNormal { facet: 0, .. })
    ));

    let negative = Polytope::from_facets(
        1,
        vec![
            Facet::new(vec![1], rat_int(0), rat_int(-1)),
            Facet::new(vec![-1], rat_int(-1), rat_int(1)),
        ],
    );
    assert!(matches!(
        negative,
        Err(GeometryError::NegativeWeight { facet: 0 })
    ));

    let threed = Polytope::from_facets(3, vec![Facet::new(vec![1, 0, 0], rat_int(0), rat_int(1))]);
    assert!(matches!(
        threed,
        Err(GeometryError::UnsupportedDimension(3))
    ));
}

#[test]
fn rejects_duplicate_facets() {
    let dup = Polytope::from_facets(
        2,
        vec![
            Facet::new(vec![1, 0], rat_int(0), rat_int(1)),
            Facet::new(vec![1, 0], rat_int(0), rat_int(2)),
            Facet::new(vec![0, 1], rat_int(0), rat_int(1)),
            Facet::new(vec![-1, -1], rat_int(-1), rat_int(1)),
        ],
    );
    assert!(matches!(dup, Err(GeometryError::MalformedDocument(_))));
}

#[test]
fn redundant_facet_carries_no_measure() {
    // x >= -1 never binds on the unit square.
    let p = Polytope::from_facets(
        2,
        vec![
            Facet::new(vec![1, 0], rat_int(0), rat_int(1)),
            Facet::new(vec![0, 1], rat_int(0), rat_int(1)),
            Facet::new(vec![-1, 0], rat_int(-1), rat_int(1)),
            Facet::new(vec![0, -1], rat_int(-1), rat_int(1)),
            Facet::new(vec![1, 0], rat_int(-1), rat_int(7)),
        ],
    )
    .unwrap();
    assert!(p.facet_vertices[4].is_empty());
    assert_eq!(p.boundary_moments().c, rat_int(4));
    assert_eq!(p.interior_moments().c, rat_int(1));
}

#[test]
fn parse_reads_exact_rationals_and_mesh_block() {
    let doc = r#"{
        "dim": 2,
        "facets": [
            {"normal": [1, 0], "offset": 0, "sigma_weight": "1/2"},
            {"normal": [0, 1], "offset": 0.25, "sigma_weight": 1},
            {"normal": [-1, 0], "offset": -1},
            {"normal": [0, -1], "offset": "-3/2", "sigma_weight": "0.1"}
        ],
        "mesh": {"resolution": 12, "grading": "3/2"}
    }"#;
    let (p, mesh) = parse_polytope(doc).unwrap();
    assert_eq!(p.facets[0].sigma_weight, rat(1, 2));
    assert_eq!(p.facets[1].offset, rat(1, 4));
    assert_eq!(p.facets[2].sigma_weight, rat_int(1));
    assert_eq!(p.facets[3].sigma_weight, rat(1, 10));
    assert_eq!(mesh.resolution, 12);
    assert_relative_eq!(mesh.grading, 1.5);
    assert_eq!(p.interior_moments().c, rat(5, 4));
}

#[test]
fn parse_rejects_malformed_documents() {
    assert!(matches!(
        parse_polytope("{\"dim\": 2}"),
        Err(GeometryError::MalformedDocument(_))
    ));
    assert!(matches!(
        parse_polytope("{\"dim\": 2, \"facets\": []}"),
        Err(GeometryError::MalformedDocument(_))
    ));
    let wrong_len = r#"{"dim": 2, "facets": [{"normal": [1], "offset": 0}]}"#;
    assert!(matches!(
        parse_polytope(wrong_len),
        Err(GeometryError::MalformedDocument(_))
    ));
}

#[test]
fn clip_square_by_diagonal_keeps_half_area() {
    let p = unit_square();
    let clipped = clip_polygon(&p.vertices, &[rat_int(1), rat_int(1)], &rat_int(1));
    let m = polygon_moments(&clipped);
    assert_eq!(m.c, rat(1, 2));
    let away = clip_polygon(&p.vertices, &[rat_int(1), rat_int(1)], &rat_int(3));
    assert!(polygon_moments(&away).c.is_zero());
}

#[test]
fn clip_interval_handles_both_orientations() {
    let (lo, hi) = clip_interval(&rat_int(0), &rat_int(1), &rat_int(2), &rat_int(1)).unwrap();
    assert_eq!((lo, hi), (rat(1, 2), rat_int(1)));
    let (lo, hi) = clip_interval(&rat_int(0), &rat_int(1), &rat_int(-1), &rat(-1, 4)).unwrap();
    assert_eq!((lo, hi), (rat_int(0), rat(1, 4)));
    assert!(clip_interval(&rat_int(0), &rat_int(1), &rat_int(1), &rat_int(2)).is_none());
}

#[test]
fn halfplane_cut_inherits_weights_and_keeps_exact_measure() {
    let p = unit_square();
    let piece = p
        .intersect_halfplane(&[rat_int(-1), rat_int(0)], &rat(-1, 2), rat_int(0))
        .unwrap();
    assert_eq!(piece.interior_moments().c, rat(1, 2));
    // Left edge keeps weight 1, top and bottom halve, right edge drops out,
    // cut contributes nothing.
    assert_eq!(piece.boundary_moments().c, rat_int(2));
    let with_weight = p
        .intersect_halfplane(&[rat_int(-1), rat_int(0)], &rat(-1, 2), rat_int(3))
        .unwrap();
    assert_eq!(with_weight.boundary_moments().c, rat_int(5));
}

#[test]
fn halfplane_cut_scales_rational_normals_to_primitive() {
    let p = unit_square();
    let piece = p
        .intersect_halfplane(&[rat(2, 3), rat(1, 3)], &rat(1, 3), rat_int(0))
        .unwrap();
    let cut = piece.facets.last().unwrap();
    assert_eq!(cut.normal, vec![BigInt::from(2), BigInt::from(1)]);
    assert_eq!(cut.offset, rat_int(1));
}

#[test]
fn quadrature_integrates_affine_functions_exactly() {
    let p = trapezium_l2();
    let q = build_quadrature(&p, &MeshSettings::uniform(4)).unwrap();
    let f = q.node_values(|x| x[0] + 2.0 * x[1]);
    // interior: 5/6 + 2 * 7/6 = 19/6; boundary: 2 + 2 * 5/2 = 7
    assert_relative_eq!(q.integral_interior(&f), 19.0 / 6.0, max_relative = 1e-13);
    assert_relative_eq!(q.integral_boundary(&f), 7.0, max_relative = 1e-13);
}

#[test]
fn mass_matrix_reproduces_quadratic_moments() {
    let p = trapezium_l2();
    let q = build_quadrature(&p, &MeshSettings::uniform(3)).unwrap();
    let xs = q.node_values(|x| x[0]);
    let ys = q.node_values(|x| x[1]);
    let xv = nalgebra::DVector::from_vec(xs.clone());
    let yv = nalgebra::DVector::from_vec(ys.clone());
    let my = q.mass() * &yv;
    assert_relative_eq!(xv.dot(&my), 17.0 / 24.0, max_relative = 1e-12);
    assert_relative_eq!(q.inner(&xs, &ys), 17.0 / 24.0, max_relative = 1e-12);
    assert_relative_eq!(q.inner(&xs, &xs), 7.0 / 12.0, max_relative = 1e-12);
    let ones = vec![1.0; q.num_nodes()];
    assert_relative_eq!(q.inner(&ones, &ones), 1.5, max_relative = 1e-13);
}

#[test]
fn interior_and_boundary_vectors_sum_to_volumes() {
    let p = standard_triangle();
    let q = build_quadrature(&p, &MeshSettings::uniform(5)).unwrap();
    let a: f64 = q.interior_vector().iter().sum();
    let b: f64 = q.boundary_vector().iter().sum();
    assert_relative_eq!(a, 0.5, max_relative = 1e-13);
    assert_relative_eq!(b, 3.0, max_relative = 1e-13);
}

#[test]
fn graded_interval_mesh_clusters_nodes_at_endpoints() {
    let p = unit_interval(rat_int(1), rat_int(1));
    let q = build_quadrature(
        &p,
        &MeshSettings {
            resolution: 8,
            grading: 2.0,
        },
    )
    .unwrap();
    assert_eq!(q.mesh_nodes_exact[1][0], rat(1, 32));
    assert_eq!(q.mesh_nodes_exact[4][0], rat(1, 2));
    assert_eq!(q.mesh_nodes_exact[7][0], rat(31, 32));
    for k in 0..8 {
        assert!(q.mesh_nodes[k][0] < q.mesh_nodes[k + 1][0]);
    }
}

#[test]
fn base_node_is_interior_and_near_centroid() {
    let p = unit_square();
    let q = build_quadrature(&p, &MeshSettings::uniform(4)).unwrap();
    assert!(!q.on_boundary[q.base_node]);
    let b = &q.mesh_nodes_exact[q.base_node];
    assert_eq!(b, &vec![rat(1, 2), rat(1, 2)]);
}

#[test]
fn boundary_nodes_carry_facet_indices() {
    let p = unit_interval(rat(1, 2), rat_int(1));
    let q = build_quadrature(&p, &MeshSettings::uniform(4)).unwrap();
    assert_eq!(q.boundary.len(), 2);
    assert_eq!(q.boundary[0].facet, 0);
    assert_relative_eq!(q.boundary[0].weight, 0.5);
    assert_eq!(q.boundary[1].facet, 1);
    assert_relative_eq!(q.boundary[1].weight, 1.0);
}

#[test]
fn rejects_tiny_resolution() {
    let p = unit_square();
    assert!(matches!(
        build_quadrature(&p, &MeshSettings::uniform(1)),
        Err(GeometryError::ResolutionTooSmall(1))
    ));
}
