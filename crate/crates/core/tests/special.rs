use fracsplit::special::{
    gamma, ln_gamma, mittag_leffler, mittag_leffler_branch, mittag_leffler_tail, rgamma, MlRegime,
};
use fracsplit::Error;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn gamma_known_values() {
    assert_eq!(gamma(1.0).unwrap(), 1.0);
    assert!(rel(gamma(0.5).unwrap(), 1.7724538509055159) < 1e-15);
    // 50-digit reflection oracle.
    assert!(rel(gamma(-0.2).unwrap(), -5.8211485686265168681816046913422934657) < 1e-14);
    assert!(rel(gamma(10.0).unwrap(), 362880.0) < 1e-14);
    assert!(rel(gamma(171.5).unwrap(), 9.483367566824795e307) < 1e-12);
}

#[test]
fn gamma_poles_and_overflow() {
    for x in [0.0, -1.0, -7.0] {
        assert!(matches!(gamma(x), Err(Error::PoleArgument(_))));
        assert_eq!(rgamma(x), 0.0);
    }
    assert!(matches!(gamma(172.0), Err(Error::Overflow(_))));
    assert_eq!(rgamma(200.0), 0.0);
}

#[test]
fn reciprocal_gamma_matches_on_negative_axis() {
    for x in [-0.2, -1.5, -3.7, -10.25] {
        assert!(rel(rgamma(x), 1.0 / gamma(x).unwrap()) < 1e-13);
    }
    assert!(rel(ln_gamma(50.0), 144.56574394634488) < 1e-14);
}

proptest! {
    #[test]
    fn gamma_recurrence(x in -20.0f64..150.0) {
        prop_assume!((x - x.round()).abs() > 1e-3);
        let g1 = gamma(x + 1.0).unwrap();
        let g0 = gamma(x).unwrap();
        prop_assert!(rel(g1, x * g0) < 1e-13);
    }

    #[test]
    fn ml_bounded_between_zero_and_one(alpha in 0.05f64..=1.0, x in -1e6f64..=0.0) {
        let e = mittag_leffler(alpha, 1.0, x).unwrap();
        prop_assert!(e > 0.0 || (alpha > 0.9 && e >= 0.0));
        prop_assert!(e <= 1.0);
    }

    #[test]
    fn ml_beta_shift_identity(alpha in 0.1f64..1.0, beta in 0.2f64..2.0, x in -40.0f64..-0.1) {
        // E_{a,b}(x) = 1/Gamma(b) + x E_{a,a+b}(x)
        let lhs = mittag_leffler(alpha, beta, x).unwrap();
        let rhs = rgamma(beta) + x * mittag_leffler(alpha, alpha + beta, x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
    }
}

#[test]
fn ml_closed_forms() {
    assert!(rel(mittag_leffler(1.0, 1.0, -1.0).unwrap(), 0.36787944117144233) < 1e-15);
    assert_eq!(mittag_leffler(0.6, 1.0, 0.0).unwrap(), 1.0);
    // E_{1/2,1}(-1) = e erfc(1)
    assert!(rel(mittag_leffler(0.5, 1.0, -1.0).unwrap(), 0.42758357615580700441) < 1e-13);
    // E_{1/2,1}(-x) = exp(x^2) erfc(x) for a mid-range argument
    assert!(rel(mittag_leffler(0.5, 1.0, -5.0).unwrap(), 0.11070463773306862) < 1e-12);
    assert_eq!(mittag_leffler(0.4, 1.0, f64::NEG_INFINITY).unwrap(), 0.0);
}

#[test]
fn ml_rejects_positive_axis_and_bad_parameters() {
    assert!(matches!(mittag_leffler(0.5, 1.0, 0.1), Err(Error::DomainError(_))));
    assert!(matches!(mittag_leffler(1.5, 1.0, -1.0), Err(Error::DomainError(_))));
    assert!(matches!(mittag_leffler(0.5, 0.0, -1.0), Err(Error::DomainError(_))));
    assert!(matches!(mittag_leffler(0.5, 1.0, f64::NAN), Err(Error::DomainError(_))));
}

#[test]
fn ml_regimes_agree_on_overlap_bands() {
    let alphas = [0.1, 0.3, 0.5, 0.6, 0.75, 0.9, 0.99];
    let betas = [0.5, 1.0, 1.7];
    for &a in &alphas {
        for &b in &betas {
            // Below alpha = 1/2 the power series at |x| = 2 has terms far
            // above its sum, so double precision caps the band at |x| = 1.
            let top = if a >= 0.5 { 2.0 } else { 1.0 };
            for i in 0..=15 {
                let x = -(0.5 + (top - 0.5) * i as f64 / 15.0);
                let s = mittag_leffler_branch(a, b, x, MlRegime::Series).unwrap();
                let q = mittag_leffler_branch(a, b, x, MlRegime::Integral).unwrap();
                assert!((s - q).abs() <= 1e-10 * s.abs().max(1e-3), "a {a} b {b} x {x}: {s} vs {q}");
            }
            for i in 0..=14 {
                let x = -(30.0 + 70.0 * i as f64 / 14.0);
                let q = mittag_leffler_branch(a, b, x, MlRegime::Integral).unwrap();
                let s = mittag_leffler_branch(a, b, x, MlRegime::Asymptotic).unwrap();
                assert!((s - q).abs() <= 1e-10 * q.abs(), "a {a} b {b} x {x}: {s} vs {q}");
            }
        }
    }
}

#[test]
fn ml_monotone_in_x() {
    for a in [0.2, 0.5, 0.8, 1.0] {
        let mut prev = 0.0;
        for i in 0..100 {
            let x = -1000.0 * (1.0 - i as f64 / 99.0).powi(3);
            let e = mittag_leffler(a, 1.0, x).unwrap();
            assert!(e >= prev, "alpha {a} x {x}");
            if i > 0 && e > 1e-300 {
                assert!(e > prev, "alpha {a} x {x}");
            }
            prev = e;
        }
    }
}

#[test]
fn ml_tail_subtracts_algebraic_terms() {
    let (a, b) = (0.6, 1.0);
    for x in [-3.0, -20.0, -80.0, -1e4] {
        let full = mittag_leffler(a, b, x).unwrap();
        let mut expect = full;
        for n in 1..=2 {
            expect += x.powi(-n) * rgamma(b - a * n as f64);
        }
        let tail = mittag_leffler_tail(a, b, x, 2).unwrap();
        assert!((tail - expect).abs() <= 1e-12 * full.abs().max(1e-30) + 1e-15 * expect.abs());
    }
}

/// Rows of (alpha, beta, x, value) from a 40-digit contour-integral oracle.
fn reference_rows() -> Vec<(f64, f64, f64, f64)> {
    let text = include_str!("data/ml_reference.csv");
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|s| s.trim().parse().unwrap()).collect();
            (f[0], f[1], f[2], f[3])
        })
        .collect()
}

#[test]
fn ml_matches_high_precision_table() {
    let rows = reference_rows();
    assert!(rows.len() >= 200);
    for (a, b, x, want) in rows {
        let got = mittag_leffler(a, b, x).unwrap();
        let err = (got - want).abs();
        assert!(
            err <= 1e-12 * want.abs() || err <= 1e-300,
            "E_{{{a},{b}}}({x}) = {got}, want {want}, rel {:e}",
            err / want.abs()
        );
    }
}
