//! Gamma function and the two-parameter Mittag–Leffler function on the
//! non-positive real axis.

use crate::error::{Error, Result};
use crate::quadrature;
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// sin(pi x) with exact zeros at the integers.
pub fn sinpi(x: f64) -> f64 {
    if x.fract() == 0.0 {
        return 0.0;
    }
    let r = x.rem_euclid(2.0);
    if r < 0.25 {
        (PI * r).sin()
    } else if r < 0.75 {
        (PI * (r - 0.5)).cos()
    } else if r < 1.25 {
        -(PI * (r - 1.0)).sin()
    } else if r < 1.75 {
        -(PI * (r - 1.5)).cos()
    } else {
        (PI * (r - 2.0)).sin()
    }
}

fn lanczos_sum(x: f64) -> f64 {
    let z = x - 1.0;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    a
}

/// Gamma for x >= 0.5, split to avoid premature overflow of t^(x-1/2).
fn gamma_right(x: f64) -> f64 {
    let t = x - 0.5 + LANCZOS_G;
    let p = t.powf(0.5 * (x - 0.5));
    (2.0 * PI).sqrt() * p * (p * (-t).exp()) * lanczos_sum(x)
}

/// ln Gamma(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / sinpi(x)).ln() - ln_gamma(1.0 - x);
    }
    let t = x - 0.5 + LANCZOS_G;
    0.5 * (2.0 * PI).ln() + (x - 0.5) * t.ln() - t + lanczos_sum(x).ln()
}

/// Gamma(x) for real x. Non-positive integers are poles.
pub fn gamma(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::DomainError("gamma of NaN".into()));
    }
    if x <= 0.0 && x.fract() == 0.0 {
        return Err(Error::PoleArgument(x));
    }
    if x > 171.61 {
        return Err(Error::Overflow(x));
    }
    if x >= 0.5 {
        if x.fract() == 0.0 && x <= 23.0 {
            let mut f = 1.0;
            for k in 2..(x as u64) {
                f *= k as f64;
            }
            return Ok(f);
        }
        return Ok(gamma_right(x));
    }
    let s = sinpi(x);
    let y = 1.0 - x;
    if y <= 171.0 {
        Ok(PI / (s * gamma_right(y)))
    } else {
        Ok(s.signum() * (PI.ln() - s.abs().ln() - ln_gamma(y)).exp())
    }
}

/// 1 / Gamma(x); zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        return 0.0;
    }
    if x > 171.61 {
        return 0.0;
    }
    if x >= 0.5 {
        return 1.0 / gamma(x).unwrap();
    }
    let s = sinpi(x);
    let y = 1.0 - x;
    if y <= 171.0 {
        s * gamma_right(y) / PI
    } else {
        s.signum() * (s.abs().ln() + ln_gamma(y) - PI.ln()).exp()
    }
}

/// Parameters of E_{alpha,beta}: 0 < alpha <= 1, beta > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MlParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::DomainError(format!("alpha = {alpha} not in (0, 1]")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::DomainError(format!("beta = {beta} must be positive")));
        }
        Ok(MlParams { alpha, beta })
    }
}

/// Which evaluation branch handles |x|.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlRegime {
    Series,
    Integral,
    Asymptotic,
}

pub const SERIES_LIMIT: f64 = 1.0;
pub const ASYMPTOTIC_LIMIT: f64 = 50.0;

pub fn ml_regime(x: f64) -> MlRegime {
    let a = x.abs();
    if a <= SERIES_LIMIT {
        MlRegime::Series
    } else if a >= ASYMPTOTIC_LIMIT {
        MlRegime::Asymptotic
    } else {
        MlRegime::Integral
    }
}

/// E_{alpha,beta}(x) for x <= 0.
pub fn mittag_leffler(alpha: f64, beta: f64, x: f64) -> Result<f64> {
    let p = MlParams::new(alpha, beta)?;
    if x.is_nan() || x > 0.0 {
        return Err(Error::DomainError(format!("x = {x} must be non-positive")));
    }
    if x == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if p.alpha == 1.0 && p.beta == 1.0 {
        return Ok(x.exp());
    }
    Ok(match ml_regime(x) {
        MlRegime::Series => ml_series(p, x),
        MlRegime::Asymptotic => ml_asymptotic(p, x, 0),
        MlRegime::Integral => ml_integral(p, x),
    })
}

/// Evaluate a specific branch regardless of |x|, for cross-checks.
pub fn mittag_leffler_branch(alpha: f64, beta: f64, x: f64, regime: MlRegime) -> Result<f64> {
    let p = MlParams::new(alpha, beta)?;
    if x.is_nan() || x > 0.0 {
        return Err(Error::DomainError(format!("x = {x} must be non-positive")));
    }
    Ok(match regime {
        MlRegime::Series => ml_series(p, x),
        MlRegime::Asymptotic => ml_asymptotic(p, x, 0),
        MlRegime::Integral => ml_integral(p, x),
    })
}

/// E_{alpha,beta}(x) minus the first `skip` terms of its algebraic expansion
/// -sum_{n>=1} x^{-n} / Gamma(beta - alpha n). Exact subtraction in the
/// asymptotic regime avoids cancellation.
pub fn mittag_leffler_tail(alpha: f64, beta: f64, x: f64, skip: usize) -> Result<f64> {
    let p = MlParams::new(alpha, beta)?;
    if x.is_nan() || x >= 0.0 {
        return Err(Error::DomainError(format!("x = {x} must be negative")));
    }
    if ml_regime(x) == MlRegime::Asymptotic && !(p.alpha == 1.0 && p.beta == 1.0) {
        return Ok(ml_asymptotic(p, x, skip));
    }
    let mut v = mittag_leffler(alpha, beta, x)?;
    for n in 1..=skip {
        v += x.powi(-(n as i32)) * rgamma(beta - alpha * n as f64);
    }
    Ok(v)
}

fn ml_series(p: MlParams, x: f64) -> f64 {
    if x == 0.0 {
        return rgamma(p.beta);
    }
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut xn = 1.0;
    for n in 0..5000 {
        let t = xn * rgamma(p.alpha * n as f64 + p.beta);
        let y = t - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        if p.alpha * n as f64 + p.beta > 3.0 && t.abs() <= 1e-18 * sum.abs() {
            break;
        }
        xn *= x;
        if xn == 0.0 {
            break;
        }
    }
    sum
}

fn ml_asymptotic(p: MlParams, x: f64, skip: usize) -> f64 {
    if p.alpha == 1.0 && p.beta.fract() == 0.0 {
        // Finitely many algebraic terms; add the exponential contribution.
        let b = p.beta as i32;
        let mut s = 0.0;
        for n in (skip + 1)..(b as usize) {
            s -= x.powi(-(n as i32)) * rgamma(p.beta - n as f64);
        }
        let e = x.exp() * x.powi(1 - b);
        return s + e;
    }
    let ax = x.abs();
    let lx = ax.ln();
    let mut s = 0.0;
    let mut prev_env = f64::INFINITY;
    for n in 1..1000usize {
        let y = p.beta - p.alpha * n as f64;
        // Envelope for |x^{-n} / Gamma(y)|.
        let env = if y < 0.5 {
            (-(n as f64) * lx + ln_gamma(1.0 - y) - PI.ln()).exp()
        } else {
            (-(n as f64) * lx).exp() * rgamma(y).abs()
        };
        if n > skip {
            s -= x.powi(-(n as i32)) * rgamma(y);
        }
        if n > skip + 1 && (env <= 1e-18 * s.abs() || env > prev_env) {
            break;
        }
        prev_env = env;
    }
    s
}

fn ml_integral(p: MlParams, x: f64) -> f64 {
    if p.alpha == 1.0 {
        return ml_kummer(p.beta, x);
    }
    if p.beta > 1.0 {
        // E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z
        let lower = MlParams { alpha: p.alpha, beta: p.beta - p.alpha };
        return (ml_integral(lower, x) - rgamma(lower.beta)) / x;
    }
    let (a, b) = (p.alpha, p.beta);
    let xx = -x;
    let s1 = sinpi(b);
    let s2 = sinpi(b - a);
    let c = (PI * a).cos();
    let expo = (1.0 - b) / a;
    let f = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let d = u * u + 2.0 * xx * u * c + xx * xx;
        (-u.powf(1.0 / a)).exp() * u.powf(expo) * (u * s1 + xx * s2) / d
    };
    let umax = 60f64.powf(a);
    let mut breaks = vec![0.0];
    if c < 0.0 {
        let up = -xx * c;
        let w = xx * (PI * a).sin();
        for k in [-8.0, -1.0, 0.0, 1.0, 8.0] {
            let t = up + k * w;
            if t > 0.0 && t < umax {
                breaks.push(t);
            }
        }
    }
    breaks.push(umax);
    breaks.sort_by(|p, q| p.partial_cmp(q).unwrap());
    breaks.dedup();
    let mut total = 0.0;
    let mut scale = None;
    for w in breaks.windows(2) {
        let v = match quadrature::integrate(f, w[0], w[1], 0.0, 1e-15, 4000) {
            Ok((v, _)) => v,
            Err(_) => {
                // A panel whose contribution is negligible next to the whole
                // integral cannot reach a relative tolerance on its own.
                let s = *scale.get_or_insert_with(|| {
                    breaks
                        .windows(2)
                        .map(|q| {
                            quadrature::integrate(|u| f(u).abs(), q[0], q[1], 0.0, 1e-6, 4000)
                                .map(|r| r.0)
                                .unwrap_or(f64::NAN)
                        })
                        .sum::<f64>()
                });
                quadrature::integrate(f, w[0], w[1], 1e-17 * s, 1e-12, 40000)
                    .map(|r| r.0)
                    .unwrap_or(f64::NAN)
            }
        };
        total += v;
    }
    total / (a * PI)
}

/// E_{1,beta}(x), x < 0, via Kummer's transformation of 1F1(1; beta; x).
fn ml_kummer(beta: f64, x: f64) -> f64 {
    let xx = -x;
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..2000 {
        term *= xx / n as f64;
        let t = term / (n as f64 + beta - 1.0);
        sum += t;
        if n as f64 > xx && t <= 1e-18 * sum {
            break;
        }
    }
    (-xx).exp() * (1.0 + (beta - 1.0) * sum) * rgamma(beta)
}
