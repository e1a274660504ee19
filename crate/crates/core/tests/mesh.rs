use fracsplit::mesh::{
    graded_refine, msh_string, parse_msh, red_refine, segment_fitted_grid, structured_square,
    GradingSpec, TriMesh,
};
use fracsplit::Error;
use proptest::prelude::*;

fn assert_valid(mesh: &TriMesh) {
    mesh.check_conformity().unwrap();
    for t in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.corners(t);
        let o = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        assert!(o > 0.0, "triangle {t} is not counter-clockwise");
    }
    assert!((mesh.total_area() - 1.0).abs() < 1e-12);
    let on_boundary = |p: [f64; 2]| {
        p[0].abs() < 1e-14 || p[1].abs() < 1e-14 || (p[0] - 1.0).abs() < 1e-14 || (p[1] - 1.0).abs() < 1e-14
    };
    for e in &mesh.boundary_edges {
        assert!(on_boundary(mesh.vertices[e.a]) && on_boundary(mesh.vertices[e.b]));
    }
}

#[test]
fn structured_square_counts() {
    for n in [1, 2, 4, 7] {
        let m = structured_square(n);
        assert_eq!(m.n_triangles(), 2 * n * n);
        assert_eq!(m.n_vertices(), (n + 1) * (n + 1));
        assert_eq!(m.boundary_edges.len(), 4 * n);
        assert_valid(&m);
        assert!((m.h_max() - 2f64.sqrt() / n as f64).abs() < 1e-15);
    }
}

#[test]
fn red_refinement_counts_and_sizes() {
    let mut m = structured_square(1);
    for level in 1..=5 {
        let v = m.n_vertices();
        let e = m.edges().len();
        let t = m.n_triangles();
        let h = m.h_max();
        let next = red_refine(&m);
        assert_eq!(next.n_triangles(), 4 * t);
        assert_eq!(next.n_vertices(), v + e);
        assert_eq!(next.h_max(), h / 2.0);
        assert_eq!(next.level, level);
        assert!(next.is_descendant_of(&m));
        assert!(!m.is_descendant_of(&next));
        assert_valid(&next);
        m = next;
    }
}

#[test]
fn red_refinement_keeps_angles() {
    let m = segment_fitted_grid(4, 4, [0.25, 0.75], [0.75, 0.5]);
    let a = m.min_angle_deg();
    let r = red_refine(&red_refine(&m));
    assert!((r.min_angle_deg() - a).abs() < 1e-9);
}

#[test]
fn segment_fitted_grid_contains_segment_as_edges() {
    let (p, q) = ([0.25, 0.75], [0.75, 0.5]);
    let m = segment_fitted_grid(4, 8, p, q);
    assert_valid(&m);
    let on_segment = |x: [f64; 2]| {
        let c = (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]);
        let s = ((x[0] - p[0]) * (q[0] - p[0]) + (x[1] - p[1]) * (q[1] - p[1])) / 0.3125;
        c.abs() < 1e-14 && (-1e-14..=1.0 + 1e-14).contains(&s)
    };
    let length: f64 = m
        .edges()
        .iter()
        .filter(|(a, b)| on_segment(m.vertices[*a]) && on_segment(m.vertices[*b]))
        .map(|(a, b)| {
            let (x, y) = (m.vertices[*a], m.vertices[*b]);
            (x[0] - y[0]).hypot(x[1] - y[1])
        })
        .sum();
    assert!((length - 0.3125f64.sqrt()).abs() < 1e-14);
}

fn graded_spec(h: f64, gamma: f64) -> GradingSpec {
    GradingSpec::new(vec![[0.5 + 1e-4, 0.5 + 1e-4]], gamma, h)
}

#[test]
fn graded_refinement_is_conforming_and_idempotent() {
    let base = structured_square(4);
    let spec = graded_spec(1.0 / 8.0, 0.4);
    let g = graded_refine(&base, &spec).unwrap();
    assert_valid(&g);
    assert!(g.min_angle_deg() >= 10.0);
    assert!(g.n_triangles() > base.n_triangles());
    let again = graded_refine(&g, &spec).unwrap();
    assert_eq!(again.n_triangles(), g.n_triangles());
    assert_eq!(again.vertices, g.vertices);
    assert!(g.is_descendant_of(&base));
}

#[test]
fn graded_refinement_reaches_floor_size() {
    let h = 1.0 / 16.0;
    let spec = graded_spec(h, 1.0 / 3.0);
    let g = graded_refine(&structured_square(4), &spec).unwrap();
    assert_valid(&g);
    assert!(g.min_angle_deg() >= 10.0);
    assert!(g.h_min() <= 2.0 * h.powi(3));
    for t in 0..g.n_triangles() {
        let [a, b, c] = g.corners(t);
        let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
        let d = (centroid[0] - spec.centers[0][0]).hypot(centroid[1] - spec.centers[0][1]);
        assert!(g.diameter(t) <= spec.target(d) * (1.0 + 1e-12));
    }
}

#[test]
fn grading_exponent_one_is_quasi_uniform() {
    let h = 1.0 / 8.0;
    let g = graded_refine(&structured_square(2), &graded_spec(h, 1.0)).unwrap();
    assert!(g.h_max() <= h);
    assert!(g.h_min() >= h / 4.0);
}

#[test]
fn graded_ladder_grows_like_uniform_refinement() {
    let gamma = 0.8 / 3.0;
    let mut h = 1.0 / 8.0;
    let base = structured_square(8);
    let mut g = graded_refine(&base, &graded_spec(h, gamma)).unwrap();
    let mut counts = vec![g.n_triangles()];
    for _ in 0..3 {
        h /= 2.0;
        g = graded_refine(&red_refine(&g), &graded_spec(h, gamma)).unwrap();
        assert_valid(&g);
        counts.push(g.n_triangles());
    }
    for w in counts.windows(2) {
        let ratio = w[1] as f64 / w[0] as f64;
        assert!((3.5..=4.6).contains(&ratio), "counts {counts:?}");
    }
}

#[test]
fn grading_budget_is_enforced() {
    let mut spec = graded_spec(1.0 / 64.0, 0.2);
    spec.budget = 5000;
    assert!(matches!(graded_refine(&structured_square(4), &spec), Err(Error::BudgetExceeded(5000))));
}

#[test]
fn point_location() {
    let m = red_refine(&structured_square(3));
    for p in [[0.1, 0.1], [0.5, 0.5], [1.0, 1.0], [0.0, 0.3], [0.77, 0.123]] {
        let (t, lam) = m.locate(p).unwrap();
        assert!(lam.iter().all(|&l| l >= -1e-12));
        let [a, b, c] = m.corners(t);
        for i in 0..2 {
            let x = lam[0] * a[i] + lam[1] * b[i] + lam[2] * c[i];
            assert!((x - p[i]).abs() < 1e-14);
        }
    }
    assert!(m.locate([1.2, 0.5]).is_none());
    assert!(m.locate([-1e-3, 0.5]).is_none());
}

const UNIT_SQUARE_MSH: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 1 1 1 2
2 1 2 2 2 2 3
3 1 2 3 3 3 4
4 1 2 4 4 4 1
5 2 2 0 0 1 2 3
6 2 2 0 0 1 3 4
$EndElements
";

#[test]
fn msh_fixture_matches_structured_square() {
    let m = parse_msh(UNIT_SQUARE_MSH).unwrap();
    let s = structured_square(1);
    // Same triangles as coordinate sets, up to vertex numbering.
    let shapes = |mesh: &TriMesh| {
        let mut out: Vec<Vec<[u64; 2]>> = (0..mesh.n_triangles())
            .map(|t| {
                let mut c: Vec<[u64; 2]> =
                    mesh.corners(t).iter().map(|p| [p[0].to_bits(), p[1].to_bits()]).collect();
                c.sort();
                c
            })
            .collect();
        out.sort();
        out
    };
    assert_eq!(shapes(&m), shapes(&s));
    let mut markers: Vec<i32> = m.boundary_edges.iter().map(|e| e.marker).collect();
    markers.sort();
    assert_eq!(markers, vec![1, 2, 3, 4]);
}

#[test]
fn msh_round_trip() {
    let m = red_refine(&segment_fitted_grid(3, 3, [0.2, 0.2], [0.8, 0.8]));
    let back = parse_msh(&msh_string(&m)).unwrap();
    assert_eq!(back.vertices, m.vertices);
    assert_eq!(back.triangles, m.triangles);
    assert_valid(&back);
}

#[test]
fn msh_errors() {
    let truncated = &UNIT_SQUARE_MSH[..UNIT_SQUARE_MSH.find("5 2 2").unwrap()];
    assert!(matches!(parse_msh(truncated), Err(Error::ParseError { .. })));
    let bad_number = UNIT_SQUARE_MSH.replace("3 1 1 0", "3 1 x 0");
    match parse_msh(&bad_number) {
        Err(Error::ParseError { line, .. }) => assert_eq!(line, 8),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let lifted = UNIT_SQUARE_MSH.replace("3 1 1 0", "3 1 1 0.5");
    assert!(matches!(parse_msh(&lifted), Err(Error::NonPlanar(_))));
    // Vertex 5 at the midpoint of the bottom edge hangs on triangle 1-2-3.
    let hanging = "$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
5
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
5 0.5 0 0
$EndNodes
$Elements
3
1 2 2 0 0 1 2 3
2 2 2 0 0 1 3 4
3 2 2 0 0 1 5 4
$EndElements
";
    assert!(matches!(parse_msh(hanging), Err(Error::NonConforming(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn refinements_stay_conforming(
        n in 1usize..6,
        cx in 0.05f64..0.95,
        cy in 0.05f64..0.95,
        gamma in 0.2f64..0.9,
        red_first in any::<bool>(),
    ) {
        let mut m = structured_square(n);
        if red_first {
            m = red_refine(&m);
        }
        let spec = GradingSpec::new(vec![[cx, cy]], gamma, 0.5 / n as f64);
        let g = graded_refine(&m, &spec).unwrap();
        assert_valid(&g);
        prop_assert!(g.min_angle_deg() >= 10.0);
        let r = red_refine(&g);
        assert_valid(&r);
    }
}
