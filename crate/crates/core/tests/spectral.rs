use fracsplit::fem::{Density, LoadSpec};
use fracsplit::mesh::structured_square;
use fracsplit::special::mittag_leffler;
use fracsplit::spectral::{
    constant_forcing_response, duhamel, neg_power_point, neg_power_unit, reference_spectral,
    scalar_split, sine_coefficients,
};
use fracsplit::splitting::{homogeneous_coefficient, FracProblem, TimeProfile};
use fracsplit::Error;
use std::f64::consts::PI;
use std::sync::Arc;

const X0: [f64; 2] = [0.5 + 1e-4, 0.5 + 1e-4];

fn laplacian(f: &dyn Fn([f64; 2]) -> f64, p: [f64; 2], h: f64) -> f64 {
    let c = f(p);
    (f([p[0] + h, p[1]]) + f([p[0] - h, p[1]]) + f([p[0], p[1] + h]) + f([p[0], p[1] - h]) - 4.0 * c) / (h * h)
}

#[test]
fn single_mode_reference_is_exact() {
    let mesh = structured_square(2);
    for alpha in [0.6, 1.0] {
        let p = FracProblem::new(alpha, 1.0, 1, 1, 0.5)
            .unwrap()
            .with_initial(LoadSpec::Density(Density::Mode { k: 1, l: 1, amp: 0.5 }));
        let r = reference_spectral(&mesh, &p, 4).unwrap();
        for t in [0.05f64, 0.5, 1.0] {
            let x = [0.3, 0.6];
            let e = mittag_leffler(alpha, 1.0, -2.0 * PI * PI * t.powf(alpha)).unwrap();
            let want = e * (PI * x[0]).sin() * (PI * x[1]).sin();
            assert!((r.value(x, t).unwrap() - want).abs() < 1e-15);
            if alpha == 1.0 {
                assert!((e - (-2.0 * PI * PI * t).exp()).abs() < 1e-15);
            }
        }
        assert!(matches!(r.value([0.5, 0.5], 0.0), Err(Error::SingularAtZero)));
    }
}

#[test]
fn non_square_domains_are_rejected() {
    let mut mesh = structured_square(2);
    for v in mesh.vertices.iter_mut() {
        v[0] *= 2.0;
    }
    let p = FracProblem::new(0.5, 1.0, 1, 1, 0.5).unwrap().with_initial(LoadSpec::Dirac([0.5, 0.5]));
    assert!(matches!(reference_spectral(&mesh, &p, 8), Err(Error::UnsupportedDomain)));
}

#[test]
fn point_reference_self_converges() {
    let mesh = structured_square(2);
    let p = FracProblem::new(0.6, 1.0, 1, 1, 0.1).unwrap().with_initial(LoadSpec::Dirac(X0));
    let coarse = reference_spectral(&mesh, &p, 200).unwrap().snapshot(0.1).unwrap();
    let fine = reference_spectral(&mesh, &p, 400).unwrap().snapshot(0.1).unwrap();
    for x in [[0.2, 0.3], [0.7, 0.7], [0.5, 0.9], [0.45, 0.52], [0.9, 0.1]] {
        let (a, b) = (coarse.value(x).unwrap(), fine.value(x).unwrap());
        assert!((a - b).abs() <= 1e-8, "{x:?}: {a} vs {b}");
    }
}

#[test]
fn sine_coefficients_agree_with_quadrature() {
    let p = 6;
    let loads = [
        Density::Constant(1.5),
        Density::Rect { x0: 0.25, x1: 0.75, y0: 0.1, y1: 0.6, value: 2.0 },
    ];
    for d in loads {
        let exact = sine_coefficients(&LoadSpec::Density(d.clone()), p);
        let dd = d.clone();
        // Midpoint sums on a fine grid.
        let n = 1200;
        for k in 1..=p {
            for l in 1..=p {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                        s += dd.value(x) * 2.0 * (k as f64 * PI * x[0]).sin() * (l as f64 * PI * x[1]).sin();
                    }
                }
                s /= (n * n) as f64;
                assert!((s - exact[(k - 1) * p + l - 1]).abs() < 5e-3, "{d:?} k {k} l {l}");
            }
        }
    }
    let custom = Density::Custom(Arc::new(|x| x[0] * (1.0 - x[0]) * x[1]));
    let c = sine_coefficients(&LoadSpec::Density(custom), 3);
    // int_0^1 x(1-x) sin(pi x) = 4 / pi^3; int_0^1 y sin(pi y) = 1 / pi.
    assert!((c[0] - 2.0 * 4.0 / PI.powi(3) / PI).abs() < 1e-14);
    let m = sine_coefficients(&LoadSpec::Density(Density::Mode { k: 2, l: 3, amp: 0.7 }), 4);
    assert_eq!(m.iter().filter(|v| **v != 0.0).count(), 1);
    assert_eq!(m[4 + 2], 0.7);
}

#[test]
fn line_coefficients_match_arc_length_quadrature() {
    let (a, b) = ([0.25, 0.75], [0.75, 0.5]);
    let p = 5;
    let c = sine_coefficients(&LoadSpec::Line(a, b), p);
    let len = (0.5f64).hypot(0.25);
    let n = 20000;
    for k in 1..=p {
        for l in 1..=p {
            let mut s = 0.0;
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                s += 2.0 * (k as f64 * PI * x[0]).sin() * (l as f64 * PI * x[1]).sin();
            }
            s *= len / n as f64;
            assert!((s - c[(k - 1) * p + l - 1]).abs() < 1e-7, "k {k} l {l}");
        }
    }
    let d = sine_coefficients(&LoadSpec::Dirac([0.3, 0.4]), 2);
    assert!((d[1] - 2.0 * (0.3 * PI).sin() * (0.8 * PI).sin()).abs() < 1e-15);
}

#[test]
fn negative_powers_of_the_unit_function() {
    let f1 = |x: [f64; 2]| neg_power_unit(1, x).unwrap();
    let f2 = |x: [f64; 2]| neg_power_unit(2, x).unwrap();
    for x in [[0.5, 0.5], [0.2, 0.7], [0.9, 0.35]] {
        assert!((laplacian(&f1, x, 1e-3) + 1.0).abs() < 1e-5, "{x:?}");
        assert!((laplacian(&f2, x, 1e-3) + f1(x)).abs() < 1e-6, "{x:?}");
    }
    for x in [[0.0, 0.3], [1.0, 0.6], [0.4, 0.0], [0.7, 1.0]] {
        assert!(f1(x).abs() < 1e-12 && f2(x).abs() < 1e-12, "{x:?}");
    }
    // Known center value of the torsion function of the unit square.
    assert!((f1([0.5, 0.5]) - 0.07367135328207264).abs() < 1e-12);
    assert!(matches!(neg_power_unit(3, [0.5, 0.5]), Err(Error::DomainError(_))));
}

#[test]
fn negative_powers_of_a_point_mass() {
    let g1 = |x: [f64; 2]| neg_power_point(X0, 1, x).unwrap();
    let g2 = |x: [f64; 2]| neg_power_point(X0, 2, x).unwrap();
    for x in [[0.2, 0.2], [0.8, 0.3], [0.35, 0.9]] {
        assert!(laplacian(&g1, x, 1e-3).abs() < 1e-5, "{x:?}");
        assert!((laplacian(&g2, x, 1e-3) + g1(x)).abs() < 1e-6, "{x:?}");
    }
    // Symmetry of the Green's function.
    let (p, q) = ([0.3, 0.6], [0.7, 0.25]);
    assert!((neg_power_point(p, 1, q).unwrap() - neg_power_point(q, 1, p).unwrap()).abs() < 1e-12);
    assert!(g1([0.0, 0.5]).abs() < 1e-12);
    // Logarithmic singularity with the free-space coefficient.
    let r = 1e-3;
    let near = g1([X0[0] + r, X0[1]]);
    let nearer = g1([X0[0] + r / 10.0, X0[1]]);
    assert!(((nearer - near) - 10f64.ln() / (2.0 * PI)).abs() < 1e-5);
    assert!(matches!(neg_power_point(X0, 1, X0), Err(Error::DomainError(_))));
    assert!(g2(X0).is_finite());
}

#[test]
fn duhamel_closed_forms() {
    let (alpha, lam) = (0.6, 2.0 * PI * PI);
    for t in [0.1f64, 0.5, 1.0] {
        let c = duhamel(alpha, lam, &TimeProfile::constant(1.0), t).unwrap();
        assert!((c - constant_forcing_response(alpha, lam, t).unwrap()).abs() < 1e-14);
        // g(t) = t responds with t^{alpha+1} E_{alpha,alpha+2}(-lam t^alpha).
        let l = duhamel(alpha, lam, &TimeProfile::Polynomial(vec![0.0, 1.0]), t).unwrap();
        let want = t.powf(alpha + 1.0) * mittag_leffler(alpha, alpha + 2.0, -lam * t.powf(alpha)).unwrap();
        assert!((l - want).abs() < 1e-10 * want.abs(), "t {t}: {l} vs {want}");
    }
}

#[test]
fn scalar_split_parts() {
    let (alpha, lam, t) = (0.6, 3.0, 0.8);
    let (full, sing) = scalar_split(alpha, lam, t, 2).unwrap();
    let want = homogeneous_coefficient(alpha, 1, t) / lam + homogeneous_coefficient(alpha, 2, t) / (lam * lam);
    assert!((sing - want).abs() < 1e-15);
    assert_eq!(full, mittag_leffler(alpha, 1.0, -lam * t.powf(alpha)).unwrap());
    assert_eq!(scalar_split(alpha, lam, t, 0).unwrap().1, 0.0);
}
