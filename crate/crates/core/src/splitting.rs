//! Splitting of the solution into time-independent singular parts and a
//! regular part advanced by BDF convolution quadrature.
//!
//! For initial data u0 and depth m,
//!   u(t) = sum_{j=1}^m (-1)^{j+1} t^{-j alpha} / Gamma(1 - j alpha) A^{-j} u0 + u_r(t),
//! where u_r solves a CQ scheme driven by A^{-m} u0. A separable source
//! g(t) f contributes sum_{j<m} (-1)^j G_j(t) A^{-(j+1)} f, with G_j the
//! Riemann–Liouville derivative of order j alpha of g, plus its own regular part.

use crate::cq::{bdf_gen, cq_weights, regular_forcing};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_load, discrete_neg_power, ClosedForm, Density, FeFunction, FeSpace, Field, LoadSpec,
};
use crate::linalg::{ComplexShift, SolverKind, SpdSolver};
use crate::mesh::{Point, TriMesh};
use crate::quadrature::integrate;
use crate::special::rgamma;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

/// Time profile g of a separable source g(t) f(x), with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeProfile {
    /// sum_i c[i] t^i.
    Polynomial(Vec<f64>),
    /// amp * exp(rate * t).
    Exp { amp: f64, rate: f64 },
    /// amp * sin(freq * t + phase).
    Sin { amp: f64, freq: f64, phase: f64 },
}

impl TimeProfile {
    pub fn constant(c: f64) -> Self {
        TimeProfile::Polynomial(vec![c])
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }

    /// The l-th derivative at t.
    pub fn derivative(&self, l: usize, t: f64) -> f64 {
        match self {
            TimeProfile::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(l)
                .map(|(i, &ci)| {
                    let f: f64 = (0..l).map(|q| (i - q) as f64).product();
                    ci * f * t.powi((i - l) as i32)
                })
                .sum(),
            TimeProfile::Exp { amp, rate } => amp * rate.powi(l as i32) * (rate * t).exp(),
            TimeProfile::Sin { amp, freq, phase } => {
                amp * freq.powi(l as i32) * (freq * t + phase + 0.5 * PI * l as f64).sin()
            }
        }
    }

    /// True when every derivative beyond order `depth` vanishes identically.
    pub fn is_polynomial_of_degree(&self, depth: usize) -> bool {
        match self {
            TimeProfile::Polynomial(c) => c.iter().skip(depth + 1).all(|&v| v == 0.0),
            _ => false,
        }
    }
}

/// Source term g(t) f(x); `depth` overrides the Taylor depth K.
#[derive(Debug, Clone)]
pub struct Source {
    pub g: TimeProfile,
    pub f: LoadSpec,
    pub depth: Option<usize>,
}

/// The subdiffusion problem d_t^alpha u - Lap u = g f, u(0) = u0, on one
/// spatial discretization, with splitting depth m and BDF order k.
#[derive(Debug, Clone)]
pub struct FracProblem {
    pub alpha: f64,
    pub t_final: f64,
    pub m: usize,
    pub k: usize,
    pub tau: f64,
    pub initial: Option<LoadSpec>,
    pub source: Option<Source>,
    pub solver: SolverKind,
}

impl FracProblem {
    pub fn new(alpha: f64, t_final: f64, m: usize, k: usize, tau: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::DomainError(format!("alpha = {alpha} outside (0, 1]")));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::DomainError(format!("T = {t_final} must be positive")));
        }
        bdf_gen(k)?;
        if !(tau > 0.0) {
            return Err(Error::DomainError(format!("tau = {tau} must be positive")));
        }
        let n = (t_final / tau).round();
        if n < 1.0 || (n * tau - t_final).abs() > 1e-9 * t_final {
            return Err(Error::DomainError(format!("T / tau = {} is not an integer", t_final / tau)));
        }
        Ok(FracProblem {
            alpha,
            t_final,
            m,
            k,
            tau,
            initial: None,
            source: None,
            solver: SolverKind::Direct,
        })
    }

    pub fn with_initial(mut self, u0: LoadSpec) -> Self {
        self.initial = Some(u0);
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = Some(source);
        self
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }

    /// Taylor depth K = floor((m - 1) alpha) + k unless overridden.
    pub fn taylor_depth(&self) -> usize {
        if let Some(Source { depth: Some(d), .. }) = &self.source {
            return *d;
        }
        let base = ((self.m as f64 - 1.0) * self.alpha).floor() as i64 + self.k as i64;
        base.max(0) as usize
    }
}

/// Radial cutoff chi: 0 for rho <= r0, 1 for rho >= r1, a polynomial
/// smoothstep in between with `order` continuous derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    pub r0: f64,
    pub r1: f64,
    pub order: usize,
    poly: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Cutoff {
    pub fn new(r0: f64, r1: f64, order: usize) -> Result<Self> {
        if !(r0 > 0.0 && r1 > r0) {
            return Err(Error::DomainError(format!("cutoff radii {r0}, {r1}")));
        }
        let p = order;
        let mut poly = vec![0.0; 2 * p + 2];
        for n in 0..=p {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            poly[p + 1 + n] = sign * binomial(p + n, n) * binomial(2 * p + 1, p - n);
        }
        Ok(Cutoff { r0, r1, order, poly })
    }

    /// chi, chi', chi'' at radius rho.
    pub fn eval(&self, rho: f64) -> [f64; 3] {
        if rho <= self.r0 {
            return [0.0, 0.0, 0.0];
        }
        if rho >= self.r1 {
            return [1.0, 0.0, 0.0];
        }
        let w = self.r1 - self.r0;
        let x = (rho - self.r0) / w;
        // S(x) + S(1 - x) = 1; evaluating near the flat end at 0 keeps the
        // alternating coefficients from cancelling near x = 1.
        let [s, d1, d2] = if x <= 0.5 {
            self.smoothstep(x)
        } else {
            let [s, d1, d2] = self.smoothstep(1.0 - x);
            [1.0 - s, d1, -d2]
        };
        [s, d1 / w, d2 / (w * w)]
    }

    fn smoothstep(&self, x: f64) -> [f64; 3] {
        let (mut s, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for (i, &c) in self.poly.iter().enumerate().rev() {
            let fi = i as f64;
            s = s * x + c;
            if i >= 1 {
                d1 = d1 * x + c * fi;
            }
            if i >= 2 {
                d2 = d2 * x + c * fi * (fi - 1.0);
            }
        }
        [s, d1, d2]
    }
}

/// Radial function rho^q (a ln rho + b).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPower {
    pub q: u32,
    pub a: f64,
    pub b: f64,
}

impl LogPower {
    /// Value and first two radial derivatives.
    pub fn eval(&self, rho: f64) -> [f64; 3] {
        let q = self.q as f64;
        let l = rho.ln();
        let base = self.a * l + self.b;
        let v = rho.powi(self.q as i32) * base;
        let d1 = rho.powi(self.q as i32 - 1) * (q * base + self.a);
        let d2 = rho.powi(self.q as i32 - 2) * (q * (q - 1.0) * base + (2.0 * q - 1.0) * self.a);
        [v, d1, d2]
    }
}

/// The fundamental solution q1 = -ln(rho) / (2 pi) of -Lap and the chain
/// -Lap q_{j+1} = q_j, with q_j = rho^{2(j-1)} (a_j ln rho + b_j).
pub fn qhat_chain(depth: usize) -> Vec<LogPower> {
    let mut out = Vec::with_capacity(depth);
    if depth == 0 {
        return out;
    }
    let mut cur = LogPower { q: 0, a: -1.0 / (2.0 * PI), b: 0.0 };
    out.push(cur);
    for _ in 1..depth {
        let q = (cur.q + 2) as f64;
        let a = -cur.a / (q * q);
        let b = -(cur.b + 2.0 * q * a) / (q * q);
        cur = LogPower { q: cur.q + 2, a, b };
        out.push(cur);
    }
    out
}

/// (1 - chi) q_j, carried in closed form.
#[derive(Debug, Clone)]
pub struct NearField {
    pub x0: Point,
    pub cutoff: Cutoff,
    pub q: LogPower,
}

impl NearField {
    fn radial(&self, rho: f64) -> (f64, f64) {
        let rho = rho.max(1e-300);
        let [c, c1, _] = self.cutoff.eval(rho);
        let [v, d1, _] = self.q.eval(rho);
        ((1.0 - c) * v, (1.0 - c) * d1 - c1 * v)
    }
}

impl ClosedForm for NearField {
    fn value(&self, p: Point) -> f64 {
        let rho = (p[0] - self.x0[0]).hypot(p[1] - self.x0[1]);
        if rho >= self.cutoff.r1 {
            return 0.0;
        }
        self.radial(rho).0
    }

    fn gradient(&self, p: Point) -> [f64; 2] {
        let dx = p[0] - self.x0[0];
        let dy = p[1] - self.x0[1];
        let rho = dx.hypot(dy);
        if rho >= self.cutoff.r1 || rho == 0.0 {
            return [0.0, 0.0];
        }
        let d = self.radial(rho).1;
        [d * dx / rho, d * dy / rho]
    }
}

/// Singularity removal for point-mass data: A^{-j} delta_{x0} =
/// (1 - chi) q_j + v_j, where v_j solves -Lap v_j = v_{j-1} + h_j with the
/// smooth annulus source h_j = -2 chi' q_j' - q_j (chi'' + chi' / rho).
#[derive(Debug, Clone)]
pub struct DiracCorrection {
    pub x0: Point,
    pub cutoff: Cutoff,
    pub chain: Vec<LogPower>,
    near: Vec<Arc<dyn ClosedForm>>,
}

impl DiracCorrection {
    pub fn new(x0: Point, depth: usize, cutoff: Cutoff) -> Result<Self> {
        let chain = qhat_chain(depth);
        let near = chain
            .iter()
            .map(|&q| Arc::new(NearField { x0, cutoff: cutoff.clone(), q }) as Arc<dyn ClosedForm>)
            .collect();
        Ok(DiracCorrection { x0, cutoff, chain, near })
    }

    /// Radii scaled to the distance d from x0 to the boundary of `mesh`:
    /// r0 = d / 10, r1 = 9 d / 10, smoothness order 2 depth + 3.
    pub fn for_mesh(mesh: &TriMesh, x0: Point, depth: usize) -> Result<Self> {
        if mesh.locate(x0).is_none() {
            return Err(Error::PointOutsideDomain(x0[0], x0[1]));
        }
        let d = boundary_distance(mesh, x0);
        if d <= 0.0 {
            return Err(Error::PointOutsideDomain(x0[0], x0[1]));
        }
        let cutoff = Cutoff::new(0.1 * d, 0.9 * d, 2 * depth + 3)?;
        Self::new(x0, depth, cutoff)
    }

    pub fn depth(&self) -> usize {
        self.chain.len()
    }

    /// The closed-form part (1 - chi) q_j, j >= 1.
    pub fn near_field(&self, j: usize) -> Arc<dyn ClosedForm> {
        self.near[j - 1].clone()
    }

    /// h_j at p; zero outside the annulus r0 < rho < r1.
    pub fn annulus_source(&self, j: usize, p: Point) -> f64 {
        let rho = (p[0] - self.x0[0]).hypot(p[1] - self.x0[1]);
        if rho <= self.cutoff.r0 || rho >= self.cutoff.r1 {
            return 0.0;
        }
        let [_, c1, c2] = self.cutoff.eval(rho);
        let [v, d1, _] = self.chain[j - 1].eval(rho);
        -2.0 * c1 * d1 - v * (c2 + c1 / rho)
    }
}

fn boundary_distance(mesh: &TriMesh, p: Point) -> f64 {
    let mut best = f64::INFINITY;
    for e in &mesh.boundary_edges {
        let a = mesh.vertices[e.a];
        let b = mesh.vertices[e.b];
        let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = ux * ux + uy * uy;
        let s = (((p[0] - a[0]) * ux + (p[1] - a[1]) * uy) / len2).clamp(0.0, 1.0);
        let d = (p[0] - a[0] - s * ux).hypot(p[1] - a[1] - s * uy);
        best = best.min(d);
    }
    best
}

/// How the singular coefficients A^{-j} u0 are approximated.
#[derive(Debug, Clone)]
pub enum Strategy {
    /// A_h^{-j} P_h u0 on the working space.
    Plain,
    /// Closed-form near field plus a discrete smooth remainder; point data.
    DiracCorrected(Arc<DiracCorrection>),
    /// A_h^{-j} P_h u0 on a separate (graded) space, interpolated onto the
    /// working space; line data.
    GradedPlain(Arc<FeSpace>),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Plain => "plain",
            Strategy::DiracCorrected(_) => "dirac_corrected",
            Strategy::GradedPlain(_) => "graded_plain",
        }
    }

    fn accepts(&self, load: &LoadSpec) -> bool {
        match (self, load) {
            (Strategy::Plain, _) => true,
            (Strategy::DiracCorrected(c), LoadSpec::Dirac(p)) => *p == c.x0,
            (Strategy::GradedPlain(_), LoadSpec::Line(..)) => true,
            _ => false,
        }
    }
}

/// A_h^{-j} P_h of a load for j = 1..=m.
pub fn plain_parts(space: &Arc<FeSpace>, load: &LoadSpec, m: usize) -> Result<Vec<FeFunction>> {
    let mut out = Vec::with_capacity(m);
    if m == 0 {
        return Ok(out);
    }
    let b = assemble_load(space, load)?;
    out.push(discrete_neg_power(space, &b.free, 1)?);
    for _ in 1..m {
        let mx = space.mass.apply(&out.last().unwrap().coeffs);
        out.push(FeFunction::new(space.clone(), space.solve_stiffness(&mx)?));
    }
    Ok(out)
}

/// Nodal interpolation of a field from another mesh of the same domain.
pub fn transfer(u: &Field, space: &Arc<FeSpace>) -> Result<FeFunction> {
    let mut coeffs = Vec::with_capacity(space.n_free());
    for &g in &space.free_dofs {
        let p = space.dof_coords[g as usize];
        coeffs.push(u.value_at(p).ok_or(Error::PointOutsideDomain(p[0], p[1]))?);
    }
    Ok(FeFunction::new(space.clone(), coeffs))
}

/// phi_{j,h} ~ A^{-j} u0 for j = 1..=m on `space`.
pub fn singular_parts(
    space: &Arc<FeSpace>,
    load: &LoadSpec,
    m: usize,
    strategy: &Strategy,
) -> Result<Vec<Field>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if !strategy.accepts(load) {
        return Err(Error::StrategyMismatch(format!(
            "{} cannot handle {:?}",
            strategy.name(),
            load
        )));
    }
    match strategy {
        Strategy::Plain => Ok(plain_parts(space, load, m)?.into_iter().map(Field::from).collect()),
        Strategy::GradedPlain(graded) => plain_parts(graded, load, m)?
            .into_iter()
            .map(|u| transfer(&Field::from(u), space).map(Field::from))
            .collect(),
        Strategy::DiracCorrected(corr) => {
            if m > corr.depth() {
                return Err(Error::StrategyMismatch(format!(
                    "correction depth {} below m = {m}",
                    corr.depth()
                )));
            }
            let mut out = Vec::with_capacity(m);
            let mut prev = vec![0.0; space.n_free()];
            for j in 1..=m {
                let c = corr.clone();
                let density = Density::Custom(Arc::new(move |p| c.annulus_source(j, p)));
                let mut rhs = assemble_load(space, &LoadSpec::Density(density))?.free;
                let mv = space.mass.apply(&prev);
                for (r, v) in rhs.iter_mut().zip(&mv) {
                    *r += v;
                }
                let v = space.solve_stiffness(&rhs)?;
                prev = v.clone();
                out.push(Field {
                    fe: FeFunction::new(space.clone(), v),
                    closed: vec![(1.0, corr.near_field(j))],
                });
            }
            Ok(out)
        }
    }
}

/// M A_h^{-m} P_h of a load, the spatial factor driving the regular part.
pub fn regular_seed_vector(space: &Arc<FeSpace>, load: &LoadSpec, m: usize) -> Result<Vec<f64>> {
    let b = assemble_load(space, load)?.free;
    if m == 0 {
        return Ok(b);
    }
    let p = discrete_neg_power(space, &b, m)?;
    Ok(space.mass.apply(&p.coeffs))
}

/// A_h^{-m} P_h u0 as a function.
pub fn regular_seed(space: &Arc<FeSpace>, load: &LoadSpec, m: usize) -> Result<FeFunction> {
    let b = assemble_load(space, load)?.free;
    if m == 0 {
        return Ok(FeFunction::new(space.clone(), space.solve_mass(&b)?));
    }
    discrete_neg_power(space, &b, m)
}

/// Trajectory U^0..=U^N with the total linear-solver iteration count.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<FeFunction>,
    pub iterations: usize,
}

/// Advances tau^{-alpha} sum_j w_j M U^{n-j} + K U^n = sum_i c_i[n] b_i for
/// n = 0..=N, where each term pairs a scalar sequence with a vector.
pub fn evolve(
    space: &Arc<FeSpace>,
    problem: &FracProblem,
    terms: &[(Vec<f64>, Vec<f64>)],
) -> Result<Trajectory> {
    let n_steps = problem.n_steps();
    let nf = space.n_free();
    if nf == 0 {
        let states = (0..=n_steps).map(|_| FeFunction::zero(space.clone())).collect();
        return Ok(Trajectory { states, iterations: 0 });
    }
    let w = cq_weights(problem.k, problem.alpha, n_steps)?;
    let ta = problem.tau.powf(-problem.alpha);
    let a = space.mass.combine(ta * w[0], &space.stiffness, 1.0);
    let solver = SpdSolver::new(&a, problem.solver, space.ordering())?;
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
    let mut iterations = 0;
    let mut hist = vec![0.0; nf];
    for n in 0..=n_steps {
        hist.iter_mut().for_each(|h| *h = 0.0);
        for j in 1..=n {
            let wj = w[j];
            for (h, u) in hist.iter_mut().zip(&states[n - j]) {
                *h += wj * u;
            }
        }
        let mh = space.mass.apply(&hist);
        let mut rhs: Vec<f64> = mh.iter().map(|v| -ta * v).collect();
        for (seq, vec) in terms {
            let c = seq[n];
            if c != 0.0 {
                for (r, v) in rhs.iter_mut().zip(vec) {
                    *r += c * v;
                }
            }
        }
        let guess = states.last().map(|s| s.as_slice());
        let (u, it) = solver.solve(&rhs, guess)?;
        iterations += it;
        states.push(u);
    }
    let states = states.into_iter().map(|c| FeFunction::new(space.clone(), c)).collect();
    Ok(Trajectory { states, iterations })
}

/// The regular-part scheme driven by a seed p = A_h^{-m} P_h u0.
pub fn step_regular(space: &Arc<FeSpace>, problem: &FracProblem, seed: &FeFunction) -> Result<Trajectory> {
    let forcing = regular_forcing(problem.alpha, problem.m, problem.k, problem.tau, problem.n_steps())?;
    evolve(space, problem, &[(forcing, space.mass.apply(&seed.coeffs))])
}

/// U^n of the regular-part scheme from the generating function on the
/// circle |zeta| = rho with q nodes: one complex shifted solve per node.
pub fn cauchy_integral_regular(
    space: &Arc<FeSpace>,
    problem: &FracProblem,
    seed: &FeFunction,
    n: usize,
    rho: f64,
    q: usize,
) -> Result<FeFunction> {
    let g = bdf_gen(problem.k)?;
    let alpha = problem.alpha;
    let beta = (1 + problem.m) as f64 * alpha - 1.0;
    let sign = if problem.m % 2 == 0 { 1.0 } else { -1.0 };
    let mp: Vec<f64> = space.mass.apply(&seed.coeffs);
    let mut acc = vec![Complex64::new(0.0, 0.0); space.n_free()];
    // Conjugate symmetry: nodes i and q - i contribute complex conjugates.
    for i in 0..=q / 2 {
        let theta = 2.0 * PI * i as f64 / q as f64;
        let z = Complex64::from_polar(rho, theta);
        let d = g.eval(z) / problem.tau;
        if d.arg().abs() > PI - 1e-12 {
            return Err(Error::BranchCutViolation);
        }
        let scale = d.powf(beta) * (sign / problem.tau);
        let b: Vec<Complex64> = mp.iter().map(|&v| scale * v).collect();
        let shift = ComplexShift::new(d.powf(alpha), &space.mass, &space.stiffness, space.ordering())?;
        let x = shift.solve(&b)?;
        let rot = Complex64::from_polar(1.0, -(n as f64) * theta);
        let weight = if i == 0 || (q % 2 == 0 && i == q / 2) { 1.0 } else { 2.0 };
        for (a, xi) in acc.iter_mut().zip(&x) {
            *a += weight * (*xi * rot).re;
        }
    }
    let f = rho.powi(-(n as i32)) / q as f64;
    Ok(FeFunction::new(space.clone(), acc.iter().map(|a| a.re * f).collect()))
}

/// Remainder R_K(t) = int_0^t (t - s)^K / K! g^{(K+1)}(s) ds.
pub fn taylor_remainder(g: &TimeProfile, depth: usize, t: f64) -> Result<f64> {
    if t == 0.0 || g.is_polynomial_of_degree(depth) {
        return Ok(0.0);
    }
    let fact: f64 = (1..=depth).map(|i| i as f64).product();
    let (v, _) = integrate(
        |s| (t - s).powi(depth as i32) / fact * g.derivative(depth + 1, s),
        0.0,
        t,
        1e-13,
        1e-13,
        20_000,
    )?;
    Ok(v)
}

/// Scalar forcing sequence of the source-driven regular part, as multiples
/// of M A_h^{-m} P_h f.
pub fn source_forcing(problem: &FracProblem, g: &TimeProfile) -> Result<Vec<f64>> {
    let n_steps = problem.n_steps();
    let (alpha, m, k, tau) = (problem.alpha, problem.m as f64, problem.k, problem.tau);
    let depth = problem.taylor_depth();
    let mut s = vec![0.0; n_steps + 1];
    for l in 0..=depth {
        let d = g.derivative(l, 0.0);
        if d == 0.0 {
            continue;
        }
        let mu = m * alpha - l as f64 - 1.0;
        let w = cq_weights(k, mu, n_steps)?;
        let c = d * tau.powf(l as f64 - m * alpha);
        for (sn, wn) in s.iter_mut().zip(&w) {
            *sn += c * wn;
        }
    }
    let rem = remainder_table(problem, g)?;
    let conv = cq_apply(k, m * alpha, tau, &rem)?;
    for (sn, cn) in s.iter_mut().zip(&conv) {
        *sn += cn;
    }
    if problem.m % 2 == 1 {
        s.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(s)
}

fn remainder_table(problem: &FracProblem, g: &TimeProfile) -> Result<Vec<f64>> {
    let depth = problem.taylor_depth();
    (0..=problem.n_steps())
        .map(|n| taylor_remainder(g, depth, n as f64 * problem.tau))
        .collect()
}

/// tau^{-beta} sum_j w_j^{(beta)} x_{n-j}: the CQ approximation of the
/// Riemann–Liouville derivative of order beta.
fn cq_apply(k: usize, beta: f64, tau: f64, x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; x.len()]);
    }
    let w = cq_weights(k, beta, x.len().saturating_sub(1))?;
    let scale = tau.powf(-beta);
    Ok((0..x.len())
        .map(|n| scale * (0..=n).map(|j| w[j] * x[n - j]).sum::<f64>())
        .collect())
}

/// G_j(t_n), the derivative of order j alpha of g, from exact Taylor terms
/// and the CQ of the remainder. NaN at t = 0 where singular.
pub fn source_coefficients(problem: &FracProblem, g: &TimeProfile, j: usize) -> Result<Vec<f64>> {
    let n_steps = problem.n_steps();
    let tau = problem.tau;
    if j == 0 {
        return Ok((0..=n_steps).map(|n| g.value(n as f64 * tau)).collect());
    }
    let beta = j as f64 * problem.alpha;
    let depth = problem.taylor_depth();
    let rem = remainder_table(problem, g)?;
    let mut out = cq_apply(problem.k, beta, tau, &rem)?;
    for (n, o) in out.iter_mut().enumerate() {
        let t = n as f64 * tau;
        for l in 0..=depth {
            let d = g.derivative(l, 0.0);
            if d == 0.0 {
                continue;
            }
            let e = l as f64 - beta;
            let rg = rgamma(e + 1.0);
            if rg == 0.0 {
                continue;
            }
            *o += if t == 0.0 {
                if e > 0.0 {
                    0.0
                } else {
                    f64::NAN
                }
            } else {
                d * t.powf(e) * rg
            };
        }
    }
    Ok(out)
}

/// Singular fields with per-step coefficients plus the regular trajectory.
#[derive(Debug, Clone)]
pub struct SplitSolution {
    pub singular: Vec<Field>,
    /// coefficients[n][i] multiplies singular[i] at t_n.
    pub coefficients: Vec<Vec<f64>>,
    pub regular: Vec<FeFunction>,
    pub alpha: f64,
    pub tau: f64,
    pub m: usize,
    pub iterations: usize,
}

impl SplitSolution {
    pub fn n_steps(&self) -> usize {
        self.regular.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }

    fn check_step(&self, n: usize) -> Result<()> {
        if n > self.n_steps() {
            return Err(Error::DomainError(format!("step {n} beyond N = {}", self.n_steps())));
        }
        if n == 0 && !self.singular.is_empty() {
            return Err(Error::SingularAtZero);
        }
        Ok(())
    }

    /// sum_i coefficients[n][i] singular[i].
    pub fn singular_sum(&self, n: usize) -> Result<Field> {
        self.check_step(n)?;
        let space = self.regular[n].space.clone();
        let mut out = Field::from(FeFunction::zero(space));
        for (c, f) in self.coefficients[n].iter().zip(&self.singular) {
            out.add_scaled(*c, f);
        }
        Ok(out)
    }

    /// U^n = singular sum + regular part.
    pub fn recombine(&self, n: usize) -> Result<Field> {
        let mut out = self.singular_sum(n)?;
        out.fe.axpy(1.0, &self.regular[n]);
        Ok(out)
    }

    pub fn final_state(&self) -> Result<Field> {
        self.recombine(self.n_steps())
    }
}

/// (-1)^{j+1} t^{-j alpha} / Gamma(1 - j alpha).
pub fn homogeneous_coefficient(alpha: f64, j: usize, t: f64) -> f64 {
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    sign * t.powf(-(j as f64) * alpha) * rgamma(1.0 - j as f64 * alpha)
}

/// Solves the problem with the given strategy for the singular parts. The
/// strategy must accept the initial data when present, otherwise the source
/// load; the other load falls back to the plain strategy if incompatible.
pub fn solve(space: &Arc<FeSpace>, problem: &FracProblem, strategy: &Strategy) -> Result<SplitSolution> {
    let m = problem.m;
    if m > 0 && space.degree() < 2 * m + 1 {
        log::warn!(
            "degree {} is below 2m + 1 = {}; the regular part converges at a reduced rate",
            space.degree(),
            2 * m + 1
        );
    }
    let n_steps = problem.n_steps();
    let mut singular = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut terms = Vec::new();
    let primary = problem.initial.as_ref().or(problem.source.as_ref().map(|s| &s.f));
    if let Some(load) = primary {
        if m > 0 && !strategy.accepts(load) {
            return Err(Error::StrategyMismatch(format!(
                "{} cannot handle {:?}",
                strategy.name(),
                load
            )));
        }
    }
    let pick = |load: &LoadSpec| if strategy.accepts(load) { strategy.clone() } else { Strategy::Plain };
    if let Some(u0) = &problem.initial {
        let parts = singular_parts(space, u0, m, &pick(u0))?;
        for (i, f) in parts.into_iter().enumerate() {
            let j = i + 1;
            singular.push(f);
            columns.push(
                (0..=n_steps)
                    .map(|n| {
                        if n == 0 {
                            f64::NAN
                        } else {
                            homogeneous_coefficient(problem.alpha, j, n as f64 * problem.tau)
                        }
                    })
                    .collect(),
            );
        }
        let forcing = regular_forcing(problem.alpha, m, problem.k, problem.tau, n_steps)?;
        terms.push((forcing, regular_seed_vector(space, u0, m)?));
    }
    if let Some(src) = &problem.source {
        let parts = singular_parts(space, &src.f, m, &pick(&src.f))?;
        for (j, f) in parts.into_iter().enumerate() {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            singular.push(f);
            columns.push(source_coefficients(problem, &src.g, j)?.into_iter().map(|v| sign * v).collect());
        }
        terms.push((source_forcing(problem, &src.g)?, regular_seed_vector(space, &src.f, m)?));
    }
    let traj = evolve(space, problem, &terms)?;
    let coefficients = (0..=n_steps).map(|n| columns.iter().map(|c| c[n]).collect()).collect();
    Ok(SplitSolution {
        singular,
        coefficients,
        regular: traj.states,
        alpha: problem.alpha,
        tau: problem.tau,
        m,
        iterations: traj.iterations,
    })
}

/// Solves with only the source term (zero initial data).
pub fn source_solve(space: &Arc<FeSpace>, problem: &FracProblem, strategy: &Strategy) -> Result<SplitSolution> {
    let mut p = problem.clone();
    p.initial = None;
    solve(space, &p, strategy)
}
