//! BDF-k generating functions and convolution quadrature weights.
//!
//! The weights of order k and power beta are the Taylor coefficients of
//! delta(zeta)^beta, delta(zeta) = sum_{j=1}^k (1 - zeta)^j / j.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Polynomial coefficients of the BDF-k generating function.
#[derive(Debug, Clone, PartialEq)]
pub struct BdfGen {
    pub k: usize,
    /// delta(zeta) = sum_i coeffs[i] zeta^i, degree k.
    pub coeffs: Vec<f64>,
}

pub fn bdf_gen(k: usize) -> Result<BdfGen> {
    if !(1..=6).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    let mut coeffs = vec![0.0; k + 1];
    for j in 1..=k {
        let mut binom = 1.0;
        for (i, c) in coeffs.iter_mut().enumerate().take(j + 1) {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            *c += sign * binom / j as f64;
            binom = binom * (j - i) as f64 / (i + 1) as f64;
        }
    }
    Ok(BdfGen { k, coeffs })
}

impl BdfGen {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    /// delta(zeta)^beta on the principal branch; fails on the cut.
    pub fn eval_pow(&self, z: Complex64, beta: f64) -> Result<Complex64> {
        let d = self.eval(z);
        if d.norm() == 0.0 {
            if beta > 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            return Err(Error::BranchCutViolation);
        }
        if beta.fract() != 0.0 && d.arg().abs() > PI - 1e-12 {
            return Err(Error::BranchCutViolation);
        }
        Ok(d.powf(beta))
    }
}

/// omega_0..=omega_n for delta^beta.
pub fn cq_weights(k: usize, beta: f64, n: usize) -> Result<Vec<f64>> {
    let g = bdf_gen(k)?;
    if !beta.is_finite() {
        return Err(Error::DomainError(format!("beta = {beta}")));
    }
    if beta >= 0.0 && beta.fract() == 0.0 && beta <= 64.0 {
        return Ok(integer_power(&g.coeffs, beta as usize, n));
    }
    let c = &g.coeffs;
    let mut w = vec![0.0; n + 1];
    w[0] = c[0].powf(beta);
    for m in 1..=n {
        let mut s = 0.0;
        for j in 1..=m.min(k) {
            s += ((beta + 1.0) * j as f64 - m as f64) * c[j] * w[m - j];
        }
        w[m] = s / (m as f64 * c[0]);
    }
    Ok(w)
}

fn integer_power(c: &[f64], p: usize, n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n + 1];
    acc[0] = 1.0;
    for _ in 0..p {
        let mut next = vec![0.0; n + 1];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &cj) in c.iter().enumerate() {
                if i + j > n {
                    break;
                }
                next[i + j] += a * cj;
            }
        }
        acc = next;
    }
    acc
}

/// Scalar CQ evolution: tau^-alpha sum_j omega_j U^{n-j} + lambda U^n = forcing[n].
pub fn cq_scalar_evolve(
    alpha: f64,
    k: usize,
    tau: f64,
    lambda: f64,
    forcing: &[f64],
) -> Result<Vec<f64>> {
    let n = forcing.len().saturating_sub(1);
    let w = cq_weights(k, alpha, n)?;
    let ta = tau.powf(-alpha);
    let mut u = Vec::with_capacity(n + 1);
    for step in 0..=n {
        let mut hist = 0.0;
        for j in 1..=step {
            hist += w[j] * u[step - j];
        }
        u.push((forcing[step] - ta * hist) / (ta * w[0] + lambda));
    }
    Ok(u)
}

/// Forcing sequence of the regular-part scheme for one mode, as multiples of
/// A^{-m} u0: (-1)^m tau^{-(1+m) alpha} omega_n^{((1+m) alpha - 1)}.
pub fn regular_forcing(alpha: f64, m: usize, k: usize, tau: f64, n: usize) -> Result<Vec<f64>> {
    let beta = (1 + m) as f64 * alpha - 1.0;
    let w = cq_weights(k, beta, n)?;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let scale = sign * tau.powf(-((1 + m) as f64) * alpha);
    Ok(w.into_iter().map(|v| v * scale).collect())
}

/// Regular-part trajectory U^0..=U^n for the scalar model with eigenvalue
/// `lambda` and initial value `v0`.
pub fn scalar_regular_step(
    alpha: f64,
    m: usize,
    k: usize,
    tau: f64,
    lambda: f64,
    v0: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let scale = v0 * lambda.powi(-(m as i32));
    let forcing: Vec<f64> = regular_forcing(alpha, m, k, tau, n)?
        .into_iter()
        .map(|f| f * scale)
        .collect();
    cq_scalar_evolve(alpha, k, tau, lambda, &forcing)
}

/// Default contour radius and node count that balance aliasing against
/// amplification of rounding by rho^{-n}.
pub fn default_contour(n: usize) -> (f64, usize) {
    let q = (32 * (n + 1)).max(64);
    let rho = (1e-15f64.ln() / q as f64).exp();
    (rho, q)
}

/// U^n of the scalar regular-part scheme by the trapezoid rule for the Cauchy
/// integral on |zeta| = rho with q nodes.
#[allow(clippy::too_many_arguments)]
pub fn cauchy_integral_scalar(
    alpha: f64,
    m: usize,
    k: usize,
    tau: f64,
    lambda: f64,
    v0: f64,
    n: usize,
    rho: f64,
    q: usize,
) -> Result<f64> {
    let g = bdf_gen(k)?;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let scale = sign * v0 * lambda.powi(-(m as i32)) / tau;
    let beta = (1 + m) as f64 * alpha - 1.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..q {
        let theta = 2.0 * PI * i as f64 / q as f64;
        let z = Complex64::from_polar(rho, theta);
        let d = g.eval(z) / tau;
        if d.arg().abs() > PI - 1e-12 {
            return Err(Error::BranchCutViolation);
        }
        let hat = d.powf(beta) / (d.powf(alpha) + lambda) * scale;
        acc += hat * Complex64::from_polar(1.0, -(n as f64) * theta);
    }
    Ok(acc.re * rho.powi(-(n as i32)) / q as f64)
}
