//! Eigenfunction-series reference solutions on the unit square.
//!
//! Eigenpairs: lambda_{kl} = pi^2 (k^2 + l^2), phi_{kl} = 2 sin(k pi x) sin(l pi y).
//! Point-mass data converges slowly in the double series; the two leading
//! terms of the Mittag–Leffler expansion are summed instead through
//! one-dimensional Green's functions, leaving a tail decaying like lambda^{-3}.

use crate::error::{Error, Result};
use crate::fem::{Density, LoadSpec};
use crate::mesh::{Point, TriMesh};
use crate::quadrature::{gauss_jacobi, gauss_legendre, gauss_legendre_interval};
use crate::special::{mittag_leffler, mittag_leffler_tail, rgamma};
use crate::splitting::{homogeneous_coefficient, FracProblem, TimeProfile};
use std::f64::consts::PI;

/// Truncated series u(x, t) = sum_{k,l <= P} c_{kl}(t) phi_{kl}(x).
#[derive(Debug, Clone)]
pub struct SpectralReference {
    pub alpha: f64,
    pub truncation: usize,
    /// (u0, phi_{kl}) at index (k - 1) P + (l - 1).
    initial: Vec<f64>,
    /// Point-mass location when the leading terms are summed separately.
    point: Option<Point>,
    source: Option<(TimeProfile, Vec<f64>)>,
}

/// Mode weights at a fixed time, ready for pointwise evaluation.
#[derive(Debug, Clone)]
pub struct SpectralSnapshot {
    pub truncation: usize,
    pub weights: Vec<f64>,
    /// (x0, c1, c2): adds c1 A^{-1} delta + c2 A^{-2} delta.
    pub point: Option<(Point, f64, f64)>,
}

fn is_unit_square(mesh: &TriMesh) -> bool {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &mesh.vertices {
        for d in 0..2 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    let tol = 1e-12;
    lo.iter().all(|&v| v.abs() < tol)
        && hi.iter().all(|&v| (v - 1.0).abs() < tol)
        && (mesh.total_area() - 1.0).abs() < 1e-10
}

/// (v, phi_{kl}) for the supported data, P x P table.
pub fn sine_coefficients(load: &LoadSpec, p: usize) -> Vec<f64> {
    let mut c = vec![0.0; p * p];
    let kp = |k: usize| k as f64 * PI;
    match load {
        LoadSpec::Dirac(x0) => {
            for k in 1..=p {
                let sx = (kp(k) * x0[0]).sin();
                for l in 1..=p {
                    c[(k - 1) * p + l - 1] = 2.0 * sx * (kp(l) * x0[1]).sin();
                }
            }
        }
        LoadSpec::Line(a, b) => {
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            // phi = cos(kx - ly) - cos(kx + ly) in scaled variables.
            let seg = |a0: f64, a1: f64| {
                let h = 0.5 * a1;
                let sinc = if h.abs() < 1e-8 { 1.0 - h * h / 6.0 } else { h.sin() / h };
                (a0 + h).cos() * sinc
            };
            for k in 1..=p {
                for l in 1..=p {
                    let (kk, ll) = (kp(k), kp(l));
                    let m0 = kk * a[0] - ll * a[1];
                    let m1 = kk * (b[0] - a[0]) - ll * (b[1] - a[1]);
                    let p0 = kk * a[0] + ll * a[1];
                    let p1 = kk * (b[0] - a[0]) + ll * (b[1] - a[1]);
                    c[(k - 1) * p + l - 1] = len * (seg(m0, m1) - seg(p0, p1));
                }
            }
        }
        LoadSpec::Density(d) => match d {
            Density::Mode { k, l, amp } => {
                if *k >= 1 && *l >= 1 && *k <= p && *l <= p {
                    c[(k - 1) * p + l - 1] = *amp;
                }
            }
            Density::Constant(v) => {
                let i = |k: usize| (1.0 - if k % 2 == 0 { 1.0 } else { -1.0 }) / kp(k);
                for k in 1..=p {
                    for l in 1..=p {
                        c[(k - 1) * p + l - 1] = 2.0 * v * i(k) * i(l);
                    }
                }
            }
            Density::Rect { x0, x1, y0, y1, value } => {
                let j = |k: usize, a: f64, b: f64| ((kp(k) * a).cos() - (kp(k) * b).cos()) / kp(k);
                for k in 1..=p {
                    for l in 1..=p {
                        c[(k - 1) * p + l - 1] = 2.0 * value * j(k, *x0, *x1) * j(l, *y0, *y1);
                    }
                }
            }
            Density::Custom(f) => {
                let n = 2 * p + 32;
                let (x, w) = gauss_legendre_interval(n, 0.0, 1.0);
                let s: Vec<f64> = (1..=p)
                    .flat_map(|k| x.iter().map(move |&xi| (kp(k) * xi).sin()))
                    .collect();
                // F[i][j] = w_i w_j f(x_i, x_j); C = 2 S F S^T.
                let mut sf = vec![0.0; p * n];
                for j in 0..n {
                    let col: Vec<f64> = (0..n).map(|i| w[i] * w[j] * f([x[i], x[j]])).collect();
                    for k in 0..p {
                        sf[k * n + j] = (0..n).map(|i| s[k * n + i] * col[i]).sum();
                    }
                }
                for k in 0..p {
                    for l in 0..p {
                        c[k * p + l] = 2.0 * (0..n).map(|j| sf[k * n + j] * s[l * n + j]).sum::<f64>();
                    }
                }
            }
        },
    }
    c
}

/// Reference solution of `problem` on the unit square with P x P modes.
pub fn reference_spectral(mesh: &TriMesh, problem: &FracProblem, truncation: usize) -> Result<SpectralReference> {
    if !is_unit_square(mesh) {
        return Err(Error::UnsupportedDomain);
    }
    let p = truncation;
    let (initial, point) = match &problem.initial {
        Some(load) => {
            let point = match load {
                LoadSpec::Dirac(x0) => Some(*x0),
                _ => None,
            };
            (sine_coefficients(load, p), point)
        }
        None => (vec![0.0; p * p], None),
    };
    let source = problem.source.as_ref().map(|s| (s.g.clone(), sine_coefficients(&s.f, p)));
    Ok(SpectralReference { alpha: problem.alpha, truncation: p, initial, point, source })
}

impl SpectralReference {
    /// Mode weights at time t > 0.
    pub fn snapshot(&self, t: f64) -> Result<SpectralSnapshot> {
        if !(t > 0.0) {
            return Err(Error::SingularAtZero);
        }
        let p = self.truncation;
        let a = self.alpha;
        let ta = t.powf(a);
        let mut weights = vec![0.0; p * p];
        for k in 1..=p {
            for l in 1..=p {
                let i = (k - 1) * p + l - 1;
                let lam = PI * PI * (k * k + l * l) as f64;
                let c0 = self.initial[i];
                if c0 != 0.0 {
                    let e = if self.point.is_some() {
                        mittag_leffler_tail(a, 1.0, -lam * ta, 2)?
                    } else {
                        mittag_leffler(a, 1.0, -lam * ta)?
                    };
                    weights[i] += c0 * e;
                }
                if let Some((g, f)) = &self.source {
                    if f[i] != 0.0 {
                        weights[i] += f[i] * duhamel(a, lam, g, t)?;
                    }
                }
            }
        }
        let point = self
            .point
            .map(|x0| (x0, homogeneous_coefficient(a, 1, t), homogeneous_coefficient(a, 2, t)));
        Ok(SpectralSnapshot { truncation: p, weights, point })
    }

    pub fn value(&self, x: Point, t: f64) -> Result<f64> {
        self.snapshot(t)?.value(x)
    }
}

impl SpectralSnapshot {
    pub fn value(&self, x: Point) -> Result<f64> {
        let p = self.truncation;
        let sx = sines(x[0], p);
        let sy = sines(x[1], p);
        let mut s = 0.0;
        for k in 0..p {
            let row = &self.weights[k * p..(k + 1) * p];
            let inner: f64 = row.iter().zip(&sy).map(|(w, v)| w * v).sum();
            s += sx[k] * inner;
        }
        let mut v = 2.0 * s;
        if let Some((x0, c1, c2)) = self.point {
            if c1 != 0.0 {
                v += c1 * neg_power_point(x0, 1, x)?;
            }
            if c2 != 0.0 {
                v += c2 * neg_power_point(x0, 2, x)?;
            }
        }
        Ok(v)
    }
}

/// sin(k pi x) for k = 1..=p by the Chebyshev recurrence.
fn sines(x: f64, p: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(p);
    let (s1, c1) = (PI * x).sin_cos();
    let (mut prev, mut cur) = (0.0, s1);
    for _ in 0..p {
        out.push(cur);
        let next = 2.0 * c1 * cur - prev;
        prev = cur;
        cur = next;
    }
    out
}

/// int_0^t w^{alpha-1} E_{alpha,alpha}(-lam w^alpha) g(t - w) dw.
pub fn duhamel(alpha: f64, lam: f64, g: &TimeProfile, t: f64) -> Result<f64> {
    let gt = g.value(t);
    let mut total = gt * (1.0 - mittag_leffler(alpha, 1.0, -lam * t.powf(alpha))?) / lam;
    // Geometric panels toward w = 0 resolve the layer of width lam^{-1/alpha}.
    let layer = lam.powf(-1.0 / alpha);
    let mut levels = 0;
    while t * 0.5f64.powi(levels) > 0.01 * layer && levels < 60 {
        levels += 1;
    }
    let kernel = |w: f64| -> Result<f64> {
        Ok(mittag_leffler(alpha, alpha, -lam * w.powf(alpha))? * (g.value(t - w) - gt))
    };
    let first = t * 0.5f64.powi(levels);
    let (xj, wj) = gauss_jacobi(16, 0.0, alpha - 1.0);
    let scale = (0.5 * first).powf(alpha);
    for (x, w) in xj.iter().zip(&wj) {
        total += scale * w * kernel(0.5 * first * (1.0 + x))?;
    }
    let (xl, wl) = gauss_legendre(16);
    for i in 0..levels {
        let b = t * 0.5f64.powi(i);
        let a = 0.5 * b;
        for (x, w) in xl.iter().zip(&wl) {
            let s = a + 0.5 * (b - a) * (1.0 + x);
            total += 0.5 * (b - a) * w * s.powf(alpha - 1.0) * kernel(s)?;
        }
    }
    Ok(total)
}

fn x_coth(x: f64, mu: f64) -> f64 {
    if x == 0.0 {
        1.0 / mu
    } else {
        x / (mu * x).tanh()
    }
}

/// Dirichlet Green's function of -d^2/dy^2 + mu^2 on [0, 1] and its square,
/// (G, G2) at (y, y0).
fn green_1d(mu: f64, y: f64, y0: f64) -> (f64, f64) {
    let a = y.min(y0);
    let b = 1.0 - y.max(y0);
    let e = |s: f64| -(-2.0 * mu * s).exp_m1();
    let g = (-mu * (y - y0).abs()).exp() * e(a) * e(b) / (2.0 * mu * e(1.0));
    // G2 = -(1 / 2 mu) dG/dmu.
    let dlog = x_coth(a, mu) + x_coth(b, mu) - 1.0 / mu - 1.0 / mu.tanh();
    (g, -g * dlog / (2.0 * mu))
}

/// A^{-j} delta_{x0} at x for j in {1, 2}, by a sine series in the direction
/// of larger separation with exact Green's functions in the other.
pub fn neg_power_point(x0: Point, j: usize, x: Point) -> Result<f64> {
    if !(j == 1 || j == 2) {
        return Err(Error::DomainError(format!("power {j} not in {{1, 2}}")));
    }
    let (dx, dy) = ((x[0] - x0[0]).abs(), (x[1] - x0[1]).abs());
    // Series over the coordinate with the smaller separation.
    let (u, u0, v, v0, sep) = if dy >= dx { (x[0], x0[0], x[1], x0[1], dy) } else { (x[1], x0[1], x[0], x0[0], dx) };
    if sep == 0.0 {
        if j == 1 {
            return Err(Error::DomainError("evaluation at the point mass".into()));
        }
        // A^{-2} delta is continuous; fall back to the nearest off-axis value.
        return neg_power_point(x0, 2, [x[0], x[1] + 1e-9]);
    }
    let kmax = ((40.0 / (PI * sep)).ceil() as usize + 16).min(400_000);
    let mut s = 0.0;
    for k in 1..=kmax {
        let mu = k as f64 * PI;
        let (g, g2) = green_1d(mu, v, v0);
        let w = if j == 1 { g } else { g2 };
        s += 2.0 * (mu * u).sin() * (mu * u0).sin() * w;
    }
    Ok(s)
}

/// A^{-j} 1 at x for j in {1, 2}: the one-dimensional solutions in x minus
/// sine-series corrections that decay exponentially away from y = 0, 1.
pub fn neg_power_unit(j: usize, x: Point) -> Result<f64> {
    let (px, y) = (x[0], x[1]);
    let s = y - 0.5;
    let d = 0.5 - s.abs();
    let base = match j {
        1 => 0.5 * px * (1.0 - px),
        2 => (px.powi(4) - 2.0 * px.powi(3) + px) / 24.0,
        _ => return Err(Error::DomainError(format!("power {j} not in {{1, 2}}"))),
    };
    let mut sum = 0.0;
    let mut k = 1;
    loop {
        let mu = k as f64 * PI;
        // C = cosh(mu s) / cosh(mu / 2), computed without overflow.
        let c = (-mu * d).exp() * (1.0 + (-2.0 * mu * s.abs()).exp()) / (1.0 + (-mu).exp());
        let coef = 4.0 / mu * (mu * px).sin();
        let term = if j == 1 {
            -c / (mu * mu)
        } else {
            let dc = c * (s * (mu * s).tanh() - 0.5 * (0.5 * mu).tanh());
            -c / mu.powi(4) + dc / (2.0 * mu.powi(3))
        };
        sum += coef * term;
        if (c / mu.powi(3)).abs() < 1e-18 || k > 2_000_001 {
            break;
        }
        k += 2;
    }
    Ok(base + sum)
}

/// Scalar closed form (1 - E_{alpha,1}(-lam t^alpha)) / lam of constant forcing.
pub fn constant_forcing_response(alpha: f64, lam: f64, t: f64) -> Result<f64> {
    Ok((1.0 - mittag_leffler(alpha, 1.0, -lam * t.powf(alpha))?) / lam)
}

/// Scalar reference E_{alpha,1}(-lam t^alpha) and its split
/// sum_{j<=m} (-1)^{j+1} t^{-j alpha} / (Gamma(1 - j alpha) lam^j).
pub fn scalar_split(alpha: f64, lam: f64, t: f64, m: usize) -> Result<(f64, f64)> {
    let full = mittag_leffler(alpha, 1.0, -lam * t.powf(alpha))?;
    let mut sing = 0.0;
    for j in 1..=m {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        sing += sign * t.powf(-(j as f64) * alpha) * rgamma(1.0 - j as f64 * alpha) / lam.powi(j as i32);
    }
    Ok((full, sing))
}
