use fracsplit::fem::build_space;
use fracsplit::linalg::{
    cg_solve, complex_shift_solve, rcm_ordering, ComplexShift, EnvelopeLdl, Pattern, SolverKind,
    SparseSym, SpdSolver,
};
use fracsplit::mesh::{red_refine, structured_square};
use fracsplit::Error;
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::Arc;

fn dense(n: usize, entries: &[(usize, usize, f64)]) -> SparseSym {
    let mut rows = vec![Vec::new(); n];
    for &(i, j, _) in entries {
        rows[i].push(j as u32);
        rows[j].push(i as u32);
    }
    for (i, r) in rows.iter_mut().enumerate() {
        r.push(i as u32);
    }
    let mut a = SparseSym::zeros(Arc::new(Pattern::from_rows(rows)));
    for &(i, j, v) in entries {
        a.add(i, j, v);
        if i != j {
            a.add(j, i, v);
        }
    }
    a
}

fn identity(n: usize) -> Arc<Vec<usize>> {
    Arc::new((0..n).collect())
}

fn residual(a: &SparseSym, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    r / b.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn cg_small_fixtures() {
    let eye = dense(5, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0), (4, 4, 1.0)]);
    let b = vec![1.0, -2.0, 3.0, 0.5, 7.0];
    let (x, rep) = cg_solve(&eye, &b, None, 1e-12, 10).unwrap();
    assert!(rep.iterations <= 1);
    assert_eq!(x, b);
    let d = dense(2, &[(0, 0, 1.0), (1, 1, 4.0)]);
    let (x, _) = cg_solve(&d, &[1.0, 4.0], None, 1e-14, 10).unwrap();
    assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    let (z, rep) = cg_solve(&d, &[0.0, 0.0], None, 1e-14, 10).unwrap();
    assert_eq!(z, vec![0.0, 0.0]);
    assert_eq!(rep.iterations, 0);
}

#[test]
fn cg_reports_non_convergence() {
    let space = build_space(Arc::new(structured_square(16)), 2).unwrap();
    let b = vec![1.0; space.n_free()];
    match cg_solve(&space.stiffness, &b, None, 1e-12, 3) {
        Err(Error::NotConverged { iterations, residual }) => {
            assert_eq!(iterations, 3);
            assert!(residual > 1e-12);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}

#[test]
fn cg_manufactured_stiffness_solve_and_energy_decay() {
    let space = build_space(Arc::new(structured_square(8)), 1).unwrap();
    let k = &space.stiffness;
    assert!(k.is_symmetric(1e-14));
    let want: Vec<f64> = (0..space.n_free()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let b = k.apply(&want);
    let (x, rep) = cg_solve(k, &b, None, 1e-12, 1000).unwrap();
    assert!(rep.residual <= 1e-12);
    assert!(residual(k, &x, &b) <= 1e-12);
    for w in rep.energy.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
    }
    let err = x.iter().zip(&want).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(err < 1e-9);
}

#[test]
fn direct_and_cg_agree() {
    let space = build_space(Arc::new(red_refine(&structured_square(4))), 3).unwrap();
    let b: Vec<f64> = (0..space.n_free()).map(|i| (i as f64 * 0.37).sin()).collect();
    let perm = space.ordering();
    let direct = SpdSolver::new(&space.stiffness, SolverKind::Direct, perm.clone()).unwrap();
    let cg = SpdSolver::new(&space.stiffness, SolverKind::Cg { tol: 1e-13, max_iter: 5000 }, perm).unwrap();
    let (xd, itd) = direct.solve(&b, None).unwrap();
    let (xc, itc) = cg.solve(&b, None).unwrap();
    assert_eq!(itd, 0);
    assert!(itc > 0);
    assert!(residual(&space.stiffness, &xd, &b) < 1e-13);
    let scale = xd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (p, q) in xd.iter().zip(&xc) {
        assert!((p - q).abs() <= 1e-10 * scale);
    }
}

#[test]
fn rcm_is_a_permutation_that_shrinks_the_envelope() {
    let space = build_space(Arc::new(structured_square(12)), 2).unwrap();
    let p = rcm_ordering(&space.stiffness.pattern);
    let mut seen = vec![false; p.len()];
    for &i in &p {
        assert!(!seen[i]);
        seen[i] = true;
    }
    let rcm = EnvelopeLdl::factor_spd(&space.stiffness, Arc::new(p)).unwrap();
    let natural = EnvelopeLdl::factor_spd(&space.stiffness, identity(space.n_free())).unwrap();
    assert!(rcm.envelope_size() <= natural.envelope_size());
}

#[test]
fn factorization_rejects_indefinite_matrices() {
    let a = dense(2, &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0)]);
    assert!(matches!(EnvelopeLdl::factor_spd(&a, identity(2)), Err(Error::NotPositiveDefinite(_))));
}

#[test]
fn complex_shift_scalar_and_real_cases() {
    let m = dense(1, &[(0, 0, 2.0)]);
    let k = dense(1, &[(0, 0, 3.0)]);
    let sigma = Complex64::new(0.5, 1.5);
    let b = vec![Complex64::new(1.0, -1.0)];
    let x = complex_shift_solve(sigma, &m, &k, &b, identity(1)).unwrap();
    let want = b[0] / (sigma * 2.0 + 3.0);
    assert!((x[0] - want).norm() < 1e-15);
    let zero = complex_shift_solve(sigma, &m, &k, &[Complex64::new(0.0, 0.0)], identity(1)).unwrap();
    assert_eq!(zero[0], Complex64::new(0.0, 0.0));

    let space = build_space(Arc::new(structured_square(6)), 2).unwrap();
    let n = space.n_free();
    let br: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
    let shifted = space.mass.combine(2.5, &space.stiffness, 1.0);
    let (xr, _) = cg_solve(&shifted, &br, None, 1e-14, 5000).unwrap();
    let bc: Vec<Complex64> = br.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let xc = complex_shift_solve(Complex64::new(2.5, 0.0), &space.mass, &space.stiffness, &bc, space.ordering())
        .unwrap();
    for (p, q) in xr.iter().zip(&xc) {
        assert!((q.re - p).abs() < 1e-11 * p.abs().max(1e-3));
        assert!(q.im.abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn conjugate_shift_gives_conjugate_solution(re in -50.0f64..200.0, im in 0.1f64..300.0) {
        let space = build_space(Arc::new(structured_square(5)), 2).unwrap();
        let n = space.n_free();
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64).cos(), 0.0)).collect();
        let s = Complex64::new(re, im);
        let x = ComplexShift::new(s, &space.mass, &space.stiffness, space.ordering()).unwrap().solve(&b).unwrap();
        let y = ComplexShift::new(s.conj(), &space.mass, &space.stiffness, space.ordering()).unwrap().solve(&b).unwrap();
        let scale = x.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p.conj() - q).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn direct_solves_random_spd_systems(n in 2usize..30, seed in 0u64..1000) {
        // Diagonally dominant tridiagonal plus a long-range coupling.
        let mut entries = Vec::new();
        let v = |i: usize| (((i as u64 + 1) * (seed + 7) * 2654435761) % 1000) as f64 / 1000.0;
        for i in 0..n {
            entries.push((i, i, 4.0 + v(i)));
            if i + 1 < n {
                entries.push((i, i + 1, -1.0 + 0.5 * v(i + n)));
            }
        }
        entries.push((0, n - 1, 0.3));
        let a = dense(n, &entries);
        let b: Vec<f64> = (0..n).map(|i| v(i + 2 * n) - 0.5).collect();
        prop_assume!(b.iter().any(|x| *x != 0.0));
        let f = EnvelopeLdl::factor_spd(&a, Arc::new(rcm_ordering(&a.pattern))).unwrap();
        let x = f.solve(&b);
        prop_assert!(residual(&a, &x, &b) < 1e-14);
    }
}
