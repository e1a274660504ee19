use fracsplit::fem::{
    assemble_load, build_space, difference_norms, discrete_neg_power, error_norms, export_csv,
    export_vtk, interpolate, l2_project, ritz_project, Density, FeFunction, Field, LoadSpec,
};
use fracsplit::mesh::{red_refine, segment_fitted_grid, structured_square, Point};
use fracsplit::Error;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn mode(p: Point) -> f64 {
    (PI * p[0]).sin() * (PI * p[1]).sin()
}

fn mode_grad(p: Point) -> [f64; 2] {
    [PI * (PI * p[0]).cos() * (PI * p[1]).sin(), PI * (PI * p[0]).sin() * (PI * p[1]).cos()]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn single_interior_dof_stencil() {
    let space = build_space(Arc::new(structured_square(2)), 1).unwrap();
    assert_eq!(space.n_free(), 1);
    assert!((space.stiffness.get(0, 0) - 4.0).abs() < 1e-14);
}

#[test]
fn degree_out_of_range_is_rejected() {
    assert!(matches!(build_space(Arc::new(structured_square(2)), 0), Err(Error::UnsupportedDegree(0))));
    assert!(matches!(build_space(Arc::new(structured_square(2)), 9), Err(Error::UnsupportedDegree(9))));
}

#[test]
fn dof_counts_and_mass_total() {
    for r in 1..=4 {
        let n = 3;
        let space = build_space(Arc::new(structured_square(n)), r).unwrap();
        assert_eq!(space.n_dofs, (r * n + 1) * (r * n + 1));
        assert_eq!(space.n_free(), (r * n - 1) * (r * n - 1));
        // Basis functions sum to one, so the full mass matrix sums to the area.
        assert!((space.full_mass().sum() - 1.0).abs() < 1e-13);
        assert!(space.mass.is_symmetric(1e-15));
        assert!(space.stiffness.is_symmetric(1e-13));
    }
}

#[test]
fn basis_is_nodal() {
    let space = build_space(Arc::new(structured_square(2)), 3).unwrap();
    let n = space.n_free();
    for i in 0..n {
        let mut c = vec![0.0; n];
        c[i] = 1.0;
        let f = FeFunction::new(space.clone(), c);
        for (j, &g) in space.free_dofs.iter().enumerate() {
            let v = f.value_at(space.dof_coords[g as usize]).unwrap();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-13, "dof {i} at node {j}: {v}");
        }
    }
}

#[test]
fn ritz_projection_is_galerkin_orthogonal() {
    for r in 1..=3 {
        let space = build_space(Arc::new(structured_square(6)), r).unwrap();
        let uh = ritz_project(&space, &mode_grad).unwrap();
        let err = error_norms(&Field::from(uh.clone()), &mode, Some(&mode_grad));
        // |u|^2 = |u_h|^2 + |u - u_h|^2 in the energy seminorm.
        let pyth = PI * PI / 2.0 - uh.h1_seminorm().powi(2) - err.h1.powi(2);
        assert!(pyth.abs() < 1e-10, "r {r}: {pyth:e}");
    }
}

fn rates(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

#[test]
fn approximation_rates_match_degree() {
    for r in 1..=3 {
        let (mut interp, mut proj, mut grad) = (Vec::new(), Vec::new(), Vec::new());
        let mut mesh = structured_square(4);
        for _ in 0..3 {
            let space = build_space(Arc::new(mesh.clone()), r).unwrap();
            let i = Field::from(interpolate(&space, &mode));
            let e = error_norms(&i, &mode, Some(&mode_grad));
            interp.push(e.l2);
            grad.push(e.h1);
            let p = Field::from(l2_project(&space, &Density::Mode { k: 1, l: 1, amp: 0.5 }).unwrap());
            proj.push(error_norms(&p, &mode, None).l2);
            mesh = red_refine(&mesh);
        }
        let full = 2f64.powi(r as i32 + 1);
        for q in rates(&interp).into_iter().chain(rates(&proj)) {
            assert!((q / full - 1.0).abs() < 0.25, "r {r}: ratio {q}, want {full}");
        }
        for q in rates(&grad) {
            assert!((q / 2f64.powi(r as i32) - 1.0).abs() < 0.25, "r {r}: gradient ratio {q}");
        }
    }
}

#[test]
fn load_totals() {
    let space = build_space(Arc::new(segment_fitted_grid(4, 4, [0.25, 0.75], [0.75, 0.5])), 2).unwrap();
    let dirac = assemble_load(&space, &LoadSpec::Dirac([0.5 + 1e-4, 0.5 + 1e-4])).unwrap();
    assert!((dirac.full.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    let line = assemble_load(&space, &LoadSpec::Line([0.25, 0.75], [0.75, 0.5])).unwrap();
    let total: f64 = line.full.iter().sum();
    assert!((total - 0.3125f64.sqrt()).abs() < 1e-13, "{total} vs {}", 0.3125f64.sqrt());
    let c = assemble_load(&space, &LoadSpec::Density(Density::Constant(2.5))).unwrap();
    assert!((c.full.iter().sum::<f64>() - 2.5).abs() < 1e-13);
    let rect = Density::Rect { x0: 0.25, x1: 0.75, y0: 0.25, y1: 0.75, value: 1.0 };
    let rl = assemble_load(&space, &LoadSpec::Density(rect)).unwrap();
    assert!((rl.full.iter().sum::<f64>() - 0.25).abs() < 1e-13);
    assert_eq!(dirac.free, space.restrict(&dirac.full));
}

#[test]
fn loads_outside_the_domain_fail() {
    let space = build_space(Arc::new(structured_square(2)), 1).unwrap();
    assert!(matches!(assemble_load(&space, &LoadSpec::Dirac([1.5, 0.5])), Err(Error::PointOutsideDomain(..))));
    assert!(matches!(
        assemble_load(&space, &LoadSpec::Line([0.5, 0.5], [1.5, 0.5])),
        Err(Error::SegmentOutsideDomain)
    ));
}

#[test]
fn line_load_integrates_along_segment() {
    // The integral of u_h along the segment, for u_h the interpolant of a cubic.
    let space = build_space(Arc::new(structured_square(5)), 3).unwrap();
    let f = |p: Point| p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]);
    let uh = interpolate(&space, &f);
    let (p, q) = ([0.1, 0.2], [0.9, 0.6]);
    let b = assemble_load(&space, &LoadSpec::Line(p, q)).unwrap();
    let len = (0.8f64).hypot(0.4);
    let mut want = 0.0;
    let n = 2000;
    for i in 0..n {
        let s = (i as f64 + 0.5) / n as f64;
        want += uh.value_at([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]).unwrap();
    }
    want *= len / n as f64;
    assert!((dot(&b.free, &uh.coeffs) - want).abs() < 1e-7);
}

#[test]
fn discrete_negative_powers() {
    let space = build_space(Arc::new(structured_square(12)), 2).unwrap();
    let b = assemble_load(&space, &LoadSpec::Density(Density::Mode { k: 1, l: 1, amp: 0.5 })).unwrap();
    let x1 = discrete_neg_power(&space, &b.free, 1).unwrap();
    assert_eq!(x1.coeffs, space.solve_stiffness(&b.free).unwrap());
    let x2 = discrete_neg_power(&space, &b.free, 2).unwrap();
    let lhs = space.stiffness.apply(&x2.coeffs);
    let rhs = space.mass.apply(&x1.coeffs);
    for (p, q) in lhs.iter().zip(&rhs) {
        assert!((p - q).abs() < 1e-14);
    }
    // A^{-2} of an eigenmode is the mode over (2 pi^2)^2.
    let lam = 2.0 * PI * PI;
    let e = error_norms(&Field::from(x2), &|p| mode(p) / (lam * lam), None);
    assert!(e.l2 / (0.5 / (lam * lam)) < 1e-3);
}

#[test]
fn nested_differences() {
    let coarse = build_space(Arc::new(structured_square(4)), 2).unwrap();
    let fine = build_space(Arc::new(red_refine(&coarse.mesh)), 2).unwrap();
    let a = Field::from(interpolate(&coarse, &mode));
    let b = Field::from(interpolate(&fine, &mode));
    let d1 = difference_norms(&a, &b).unwrap();
    let d2 = difference_norms(&b, &a).unwrap();
    assert_eq!(d1, d2);
    assert!(d1.l2 > 0.0);
    let ea = error_norms(&a, &mode, None).l2;
    let eb = error_norms(&b, &mode, None).l2;
    assert!(d1.l2 <= ea + eb + 1e-15);
    assert!(difference_norms(&a, &a).unwrap().l2 < 1e-15);
    let other = build_space(Arc::new(structured_square(4)), 2).unwrap();
    let c = Field::from(interpolate(&other, &mode));
    assert!(matches!(difference_norms(&a, &c), Err(Error::NonNestedMeshes)));
}

#[test]
fn export_formats() {
    let space = build_space(Arc::new(structured_square(3)), 2).unwrap();
    let u = Field::from(interpolate(&space, &mode));
    let dir = std::env::temp_dir().join(format!("fracsplit-fem-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("u.csv");
    export_csv(&u, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,value"));
    assert_eq!(text.lines().count(), 1 + space.mesh.n_vertices());
    let vtk = dir.join("u.vtk");
    export_vtk(&u, &vtk).unwrap();
    let text = std::fs::read_to_string(&vtk).unwrap();
    assert!(text.starts_with("# vtk DataFile Version 3.0"));
    assert!(text.contains(&format!("POINTS {} double", space.mesh.n_vertices())));
    assert!(text.contains(&format!("CELLS {} {}", space.mesh.n_triangles(), 4 * space.mesh.n_triangles())));
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn dirac_load_evaluates_discrete_functions(
        x in 0.01f64..0.99,
        y in 0.01f64..0.99,
        r in 1usize..=4,
        seed in 0u64..1000,
    ) {
        let space = build_space(Arc::new(structured_square(3)), r).unwrap();
        let coeffs: Vec<f64> = (0..space.n_free())
            .map(|i| ((((i as u64 + 3) * (seed + 11) * 40503) % 997) as f64) / 997.0 - 0.5)
            .collect();
        let u = FeFunction::new(space.clone(), coeffs);
        let b = assemble_load(&space, &LoadSpec::Dirac([x, y])).unwrap();
        let v = u.value_at([x, y]).unwrap();
        prop_assert!((dot(&b.free, &u.coeffs) - v).abs() < 1e-13);
    }

    #[test]
    fn mass_matrix_is_positive(r in 1usize..=3, seed in 0u64..1000) {
        let space = build_space(Arc::new(structured_square(2)), r).unwrap();
        let v: Vec<f64> = (0..space.n_free()).map(|i| ((i as u64 * 7 + seed) % 5) as f64 - 2.0).collect();
        prop_assume!(v.iter().any(|x| *x != 0.0));
        prop_assert!(dot(&v, &space.mass.apply(&v)) > 0.0);
        prop_assert!(dot(&v, &space.stiffness.apply(&v)) > 0.0);
    }
}
