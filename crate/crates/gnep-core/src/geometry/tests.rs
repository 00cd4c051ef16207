use approx::assert_abs_diff_eq;

use super::*;
use crate::expr::parse;
use crate::sampling::{rng_for, Window};
use rand::Rng;

fn opts() -> ProjectOpts {
    ProjectOpts::default()
}

fn triangle() -> ConvexSet {
    // x >= 0, 2 x1 + x2 <= 1
    ConvexSet::polyhedron(
        vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![2.0, 1.0]],
        vec![0.0, 0.0, 1.0],
    )
    .unwrap()
}

fn diamond() -> ConvexSet {
    ConvexSet::hull(vec![
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, -1.0],
    ])
    .unwrap()
}

fn hull3d_set() -> ConvexSet {
    // x >= 0, 0 <= z <= 1, x^2 + y^2 <= 2 y (1 - z)
    let g = parse("x1^2 + x2^2 - 2*x2*(1 - x3)", 3).unwrap();
    ConvexSet::intersection(vec![
        ConvexSet::bbox(
            vec![0.0, 0.0, 0.0],
            vec![f64::INFINITY, 2.0, 1.0],
        )
        .unwrap(),
        ConvexSet::sublevel(g, 0.0, vec![0.1, 0.9, 0.05]).unwrap(),
    ])
    .unwrap()
}

fn hyperbola_set() -> ConvexSet {
    let g = parse("1/x1 - x2", 2).unwrap();
    ConvexSet::intersection(vec![
        ConvexSet::bbox(
            vec![1e-9, f64::NEG_INFINITY],
            vec![f64::INFINITY, f64::INFINITY],
        )
        .unwrap(),
        ConvexSet::sublevel(g, 0.0, vec![1.0, 2.0]).unwrap(),
    ])
    .unwrap()
}

#[test]
fn box_projection_clamps() {
    let b = ConvexSet::bbox(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
    let p = b.project(&[2.0, -3.0], &opts()).unwrap();
    assert_eq!(p, vec![1.0, -1.0]);
    assert!(b.contains(&p, MEMBER_TOL));
}

#[test]
fn triangle_projection_matches_hand_value() {
    let p = triangle().project(&[2.0, 2.0], &opts()).unwrap();
    assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-7);
    assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-7);
}

#[test]
fn l1_ball_projection_soft_thresholds() {
    let b = ConvexSet::ball(vec![0.0, 0.0], 1.0, NormKind::L1).unwrap();
    let p = b.project(&[3.0, 1.0], &opts()).unwrap();
    assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
    // interior point unchanged
    let q = b.project(&[0.2, -0.3], &opts()).unwrap();
    assert_eq!(q, vec![0.2, -0.3]);
}

#[test]
fn l2_and_linf_ball_projections() {
    let b2 = ConvexSet::ball(vec![1.0, 1.0], 2.0, NormKind::L2).unwrap();
    let p = b2.project(&[5.0, 1.0], &opts()).unwrap();
    assert_abs_diff_eq!(p[0], 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-12);
    let bi = ConvexSet::ball(vec![0.0, 0.0], 1.0, NormKind::Linf).unwrap();
    let q = bi.project(&[3.0, -0.5], &opts()).unwrap();
    assert_eq!(q, vec![1.0, -0.5]);
}

#[test]
fn diamond_hull_projection() {
    let p = diamond().project(&[1.0, 1.0], &opts()).unwrap();
    assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-9);
    assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-9);
    assert!(diamond().contains(&[0.3, -0.2], 1e-9));
    assert!(!diamond().contains(&[0.8, 0.4], 1e-6));
}

#[test]
fn hull_distance_square() {
    let pts = vec![
        vec![1.0, 1.0],
        vec![1.0, -1.0],
        vec![-1.0, 1.0],
        vec![-1.0, -1.0],
    ];
    assert_abs_diff_eq!(project::hull_distance(&pts, &[2.0, 0.0]), 1.0, epsilon = 1e-9);
    assert_abs_diff_eq!(
        project::hull_distance(&pts, &[2.0, 2.0]),
        std::f64::consts::SQRT_2,
        epsilon = 1e-9
    );
    assert_abs_diff_eq!(project::hull_distance(&pts, &[0.2, -0.7]), 0.0, epsilon = 1e-9);
}

#[test]
fn hull_projection_satisfies_variational_inequality() {
    let mut rng = rng_for(7, "hull-vi");
    for _ in 0..25 {
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let set = ConvexSet::hull(pts.clone()).unwrap();
        let p = set.project(&x, &opts()).unwrap();
        assert!(project::hull_distance(&pts, &p) <= 1e-7);
        // optimality against every vertex certifies it against the hull
        let gap: Vec<f64> = sub(&x, &p);
        for v in &pts {
            assert!(dot(&gap, &sub(v, &p)) <= 1e-7);
        }
    }
}

#[test]
fn sublevel_projection_disk_and_ellipse() {
    let disk = ConvexSet::sublevel(parse("x1^2 + x2^2", 2).unwrap(), 1.0, vec![0.0, 0.0]).unwrap();
    let p = disk.project(&[2.0, 0.0], &opts()).unwrap();
    assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-6);
    let q = disk.project(&[2.0, 2.0], &opts()).unwrap();
    let c = 0.5_f64.sqrt();
    assert_abs_diff_eq!(q[0], c, epsilon = 1e-6);
    assert_abs_diff_eq!(q[1], c, epsilon = 1e-6);

    let ell =
        ConvexSet::sublevel(parse("x1^2 + 4*x2^2", 2).unwrap(), 4.0, vec![0.0, 0.0]).unwrap();
    let r = ell.project(&[0.0, 3.0], &opts()).unwrap();
    assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-6);
    assert_abs_diff_eq!(r[1], 1.0, epsilon = 1e-6);
}

#[test]
fn intersection_projection_quarter_disk() {
    let set = ConvexSet::intersection(vec![
        ConvexSet::bbox(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap(),
        ConvexSet::ball(vec![0.0, 0.0], 1.0, NormKind::L2).unwrap(),
    ])
    .unwrap();
    let x = [2.0, 0.5];
    let p = set.project(&x, &opts()).unwrap();
    let n = (2.0_f64 * 2.0 + 0.5 * 0.5).sqrt();
    assert_abs_diff_eq!(p[0], 2.0 / n, epsilon = 1e-6);
    assert_abs_diff_eq!(p[1], 0.5 / n, epsilon = 1e-6);
}

#[test]
fn wedge_rectangle_min_norm() {
    // x2 >= x1 >= 0, evaluated at (2, 2): rectangle [0,2] x [2,inf)
    let set =
        ConvexSet::polyhedron(vec![vec![1.0, -1.0], vec![-1.0, 0.0]], vec![0.0, 0.0]).unwrap();
    let blocks = BlockStructure::new(vec![1, 1]);
    let (m, norm) = block_rectangle_min_norm(&set, &blocks, &[2.0, 2.0], &opts()).unwrap();
    assert_abs_diff_eq!(m[0], 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(m[1], 2.0, epsilon = 1e-9);
    assert_abs_diff_eq!(norm, 2.0, epsilon = 1e-9);
}

#[test]
fn wedge_slice_intervals_are_exact() {
    let set =
        ConvexSet::polyhedron(vec![vec![1.0, -1.0], vec![-1.0, 0.0]], vec![0.0, 0.0]).unwrap();
    let blocks = BlockStructure::new(vec![1, 1]);
    let s1 = set.slice(&blocks, 0, &[2.0, 2.0]);
    let (lo, hi) = s1.interval().unwrap().unwrap();
    assert_eq!((lo, hi), (0.0, 2.0));
    let s2 = set.slice(&blocks, 1, &[2.0, 2.0]);
    let (lo, hi) = s2.interval().unwrap().unwrap();
    assert_eq!(lo, 2.0);
    assert!(hi.is_infinite());
}

#[test]
fn hyperbola_block_min_norm_is_fixed_point() {
    let set = hyperbola_set();
    let blocks = BlockStructure::new(vec![1, 1]);
    let a = 2.0 * std::f64::consts::SQRT_2;
    let b = std::f64::consts::SQRT_2 / 4.0;
    let (m, norm) = block_rectangle_min_norm(&set, &blocks, &[a, b], &opts()).unwrap();
    assert_abs_diff_eq!(m[0], a, epsilon = 1e-6);
    assert_abs_diff_eq!(m[1], b, epsilon = 1e-6);
    assert_abs_diff_eq!(norm, 8.125_f64.sqrt(), epsilon = 1e-6);
}

#[test]
fn hull3d_z_slice_degenerates_on_the_rim() {
    let set = hull3d_set();
    let blocks = BlockStructure::new(vec![2, 1]);
    // at (x, y) = (0, 0) the z slice is the full [0, 1]
    let s = set.slice(&blocks, 1, &[0.0, 0.0, 0.5]);
    let (lo, hi) = s.interval().unwrap().unwrap();
    assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-6);
    assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-6);
    // on the rim x^2 + y^2 = 2y the slice collapses to {0}
    let s = set.slice(&blocks, 1, &[1.0, 1.0, 0.5]);
    let (lo, hi) = s.interval().unwrap().unwrap();
    assert_abs_diff_eq!(lo, 0.0, epsilon = 1e-5);
    assert_abs_diff_eq!(hi, 0.0, epsilon = 1e-5);
    let d = s.distance(&[1.0], &opts()).unwrap();
    assert_abs_diff_eq!(d, 1.0, epsilon = 1e-5);
}

#[test]
fn hull3d_closed_form_matches_vertex_hull() {
    // the algebraic description coincides with the hull of the generators
    // (0,0,0), (0,2,0), (0,0,1), (0,1,1) plus the curved rim; spot-check
    // membership agreement on a grid against the three-point cross sections
    let set = hull3d_set();
    for &(x, y, z, inside) in &[
        (0.0, 1.0, 0.0, true),
        (0.9, 1.0, 0.0, true),
        (1.1, 1.0, 0.0, false),
        (0.0, 0.5, 1.0, false),
        (0.0, 0.0, 0.7, true),
        (0.5, 1.0, 0.25, true),
        (0.8, 1.0, 0.5, false),
    ] {
        assert_eq!(set.contains(&[x, y, z], 1e-9), inside, "at ({x}, {y}, {z})");
    }
}

#[test]
fn slice_of_l2_ball_reduces_radius() {
    let set = ConvexSet::ball(vec![0.0, 0.0], 1.0, NormKind::L2).unwrap();
    let blocks = BlockStructure::new(vec![1, 1]);
    let s = set.slice(&blocks, 0, &[0.0, 0.6]);
    let p = s.project(&[3.0], &opts()).unwrap();
    assert_abs_diff_eq!(p[0], 0.8, epsilon = 1e-12);
    let empty = set.slice(&blocks, 0, &[0.0, 5.0]);
    assert!(matches!(
        empty.project(&[0.0], &opts()),
        Err(GeometryError::EmptySlice { player: 0 })
    ));
}

#[test]
fn polyhedron_slice_detects_emptiness_from_frozen_rows() {
    // x2 <= 1 has no x1 support; freezing x2 = 3 empties player 1's slice
    let set = ConvexSet::polyhedron(vec![vec![0.0, 1.0]], vec![1.0]).unwrap();
    let blocks = BlockStructure::new(vec![1, 1]);
    let s = set.slice(&blocks, 0, &[0.0, 3.0]);
    assert!(matches!(
        s.project(&[0.0], &opts()),
        Err(GeometryError::EmptySlice { player: 0 })
    ));
}

#[test]
fn box_slice_projection_is_a_clamp() {
    let set = ConvexSet::bbox(vec![-12.0, -12.0, -12.0], vec![12.0, 12.0, 12.0]).unwrap();
    let blocks = BlockStructure::new(vec![2, 1]);
    let s = set.slice(&blocks, 0, &[0.0, 0.0, 3.0]);
    let p = s.project(&[20.0, -20.0], &opts()).unwrap();
    assert_eq!(p, vec![12.0, -12.0]);
}

#[test]
fn cross_membership_prefers_lowest_player() {
    let set = triangle();
    let blocks = BlockStructure::new(vec![1, 1]);
    let x_hat = [0.25, 0.5];
    assert_eq!(cross_membership(&set, &blocks, &x_hat, &[0.1, 0.5], 1e-9), Some(0));
    assert_eq!(cross_membership(&set, &blocks, &x_hat, &[0.25, 0.3], 1e-9), Some(1));
    assert_eq!(cross_membership(&set, &blocks, &x_hat, &x_hat, 1e-9), Some(0));
    assert_eq!(cross_membership(&set, &blocks, &x_hat, &[0.1, 0.4], 1e-9), None);
    // unilateral but infeasible
    assert_eq!(cross_membership(&set, &blocks, &x_hat, &[0.9, 0.5], 1e-9), None);
}

#[test]
fn lsc_probe_refutes_hull3d_z_player() {
    let set = hull3d_set();
    let blocks = BlockStructure::new(vec![2, 1]);
    // along the rim x^2 + y^2 = 2y the x coordinate decays like sqrt(2y)
    let path: Vec<Vec<f64>> = (1..=16)
        .map(|k| {
            let y = 2.0_f64.powi(-k);
            vec![(2.0 * y - y * y).sqrt(), y]
        })
        .collect();
    let verdict =
        lsc_probe(&set, &blocks, 1, &[0.0, 0.0], &[1.0], &path, 0.02, &opts()).unwrap();
    match verdict {
        LscVerdict::LscRefuted { distances, delta, witness_gap } => {
            assert!(witness_gap > 0.99, "gap = {witness_gap}");
            assert!(delta >= 0.4);
            assert!(distances.iter().all(|d| *d > 0.9));
        }
        other => panic!("expected refutation, got {other:?}"),
    }
}

#[test]
fn lsc_probe_consistent_for_hull3d_xy_player() {
    let set = hull3d_set();
    let blocks = BlockStructure::new(vec![2, 1]);
    let path: Vec<Vec<f64>> = (1..=14).map(|k| vec![2.0_f64.powi(-k)]).collect();
    let verdict =
        lsc_probe(&set, &blocks, 0, &[0.0], &[0.5, 1.0], &path, 2e-4, &opts()).unwrap();
    match verdict {
        LscVerdict::ConsistentWithLsc { distances } => {
            assert!(distances.last().unwrap() < &1e-4);
        }
        other => panic!("expected consistency, got {other:?}"),
    }
}

#[test]
fn lsc_probe_validates_inputs() {
    let set = triangle();
    let blocks = BlockStructure::new(vec![1, 1]);
    // z0 outside the limit slice
    let err = lsc_probe(&set, &blocks, 0, &[0.5], &[0.9], &[vec![0.5]], 1e-6, &opts());
    assert!(matches!(err, Err(GeometryError::Invalid(_))));
    // path that stops far from the limit
    let err = lsc_probe(&set, &blocks, 0, &[0.5], &[0.1], &[vec![0.9]], 1e-6, &opts());
    assert!(matches!(err, Err(GeometryError::Invalid(_))));
}

#[test]
fn spot_check_accepts_convex_and_flags_nonconvex() {
    let window = Window::new(vec![0.0, 0.0], vec![6.0, 6.0]);
    assert!(spot_check_convexity(&hyperbola_set(), &window, 40, 42).is_ok());

    // complement of a disk dressed up as a sublevel set
    let g = parse("-(x1^2 + x2^2)", 2).unwrap();
    let outside = ConvexSet::sublevel(g, -1.0, vec![2.0, 0.0]).unwrap();
    let window = Window::new(vec![-3.0, -3.0], vec![3.0, 3.0]);
    assert!(matches!(
        spot_check_convexity(&outside, &window, 40, 42),
        Err(GeometryError::NotConvex { .. })
    ));
}

#[test]
fn projections_satisfy_variational_inequality_on_mixed_sets() {
    let sets = vec![
        triangle(),
        diamond(),
        ConvexSet::ball(vec![0.3, -0.2], 1.5, NormKind::L1).unwrap(),
        ConvexSet::intersection(vec![
            ConvexSet::bbox(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
            ConvexSet::ball(vec![0.5, 0.0], 1.0, NormKind::L2).unwrap(),
        ])
        .unwrap(),
    ];
    let mut rng = rng_for(11, "geometry-vi");
    for set in &sets {
        let window = Window::new(vec![-2.0; set.dim()], vec![2.0; set.dim()]);
        for _ in 0..20 {
            let x: Vec<f64> = (0..set.dim()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = set.project(&x, &opts()).unwrap();
            assert!(set.contains(&p, 1e-6));
            let gap = sub(&x, &p);
            for q in window.halton_points(60, 5).iter().filter(|q| set.contains(q, 1e-9)) {
                assert!(
                    dot(&gap, &sub(q, &p)) <= 1e-6,
                    "vi violated for {set:?} at {x:?}"
                );
            }
        }
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let set = triangle();
    assert!(matches!(
        set.project(&[1.0, 2.0, 3.0], &opts()),
        Err(GeometryError::Dim { got: 3, need: 2 })
    ));
    assert!(!set.contains(&[1.0], 1e-9));
}
