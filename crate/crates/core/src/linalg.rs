//! Sparse symmetric matrices, preconditioned conjugate gradients, and an
//! envelope LDL^T factorization (real SPD or complex symmetric) under a
//! reverse Cuthill–McKee ordering.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::collections::VecDeque;
use std::ops::{Add, Div, Mul, Sub};
use std::sync::Arc;

/// Compressed row pattern with sorted column indices, both triangles stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<u32>,
}

impl Pattern {
    /// Builds a pattern from per-row column lists (duplicates allowed).
    pub fn from_rows(mut rows: Vec<Vec<u32>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col.extend_from_slice(r);
            row_ptr.push(col.len());
        }
        Pattern { n, row_ptr, col }
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let s = &self.col[self.row_ptr[i]..self.row_ptr[i + 1]];
        s.binary_search(&(j as u32)).ok().map(|k| self.row_ptr[i] + k)
    }
}

/// Symmetric sparse matrix in CSR form.
#[derive(Debug, Clone)]
pub struct SparseSym {
    pub pattern: Arc<Pattern>,
    pub val: Vec<f64>,
}

impl SparseSym {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let nnz = pattern.nnz();
        SparseSym { pattern, val: vec![0.0; nnz] }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.pattern.find(i, j).expect("entry outside the sparsity pattern");
        self.val[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.val[k])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &*self.pattern;
        for i in 0..p.n {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.val[k] * x[p.col[k] as usize];
            }
            y[i] = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn sum(&self) -> f64 {
        self.val.iter().sum()
    }

    /// a * self + b * other on a shared pattern.
    pub fn combine(&self, a: f64, other: &SparseSym, b: f64) -> SparseSym {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern);
        SparseSym {
            pattern: self.pattern.clone(),
            val: self.val.iter().zip(&other.val).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let p = &*self.pattern;
        let scale = self.val.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col[k] as usize;
                if (self.val[k] - self.get(j, i)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    /// Energy functional x^T A x / 2 - b^T x after each iteration; it equals
    /// half the squared A-norm error up to a constant, so it must decrease.
    pub energy: Vec<f64>,
}

/// Jacobi-preconditioned conjugate gradients. Stops when the relative
/// residual drops below `tol`.
pub fn cg_solve(
    a: &SparseSym,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.n();
    let bn = norm(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let mut report = SolveReport::default();
    if bn == 0.0 {
        return Ok((vec![0.0; n], report));
    }
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut ax = a.apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / bn;
    let mut ap = vec![0.0; n];
    while res > tol {
        if report.iterations >= max_iter {
            report.residual = res;
            return Err(Error::NotConverged { iterations: report.iterations, residual: res });
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite(report.iterations));
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
            ax[i] += step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        report.iterations += 1;
        report.energy.push(0.5 * dot(&x, &ax) - dot(b, &x));
        res = norm(&r) / bn;
    }
    report.residual = res;
    Ok((x, report))
}

/// Reverse Cuthill–McKee ordering; `perm[new] = old`.
pub fn rcm_ordering(p: &Pattern) -> Vec<usize> {
    let n = p.n;
    let degree: Vec<usize> = (0..n).map(|i| p.row_ptr[i + 1] - p.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let neighbours = |i: usize| p.col[p.row_ptr[i]..p.row_ptr[i + 1]].iter().map(|&j| j as usize);
    let bfs_levels = |start: usize, mark: &mut Vec<u32>, stamp: u32| -> (usize, usize) {
        let mut q = VecDeque::new();
        q.push_back((start, 0usize));
        mark[start] = stamp;
        let mut last = (start, 0);
        while let Some((v, d)) = q.pop_front() {
            if d > last.1 || (d == last.1 && degree[v] < degree[last.0]) {
                last = (v, d);
            }
            for w in neighbours(v) {
                if mark[w] != stamp {
                    mark[w] = stamp;
                    q.push_back((w, d + 1));
                }
            }
        }
        last
    };
    let mut mark = vec![0u32; n];
    let mut stamp = 0u32;
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start within this component.
        let mut start = seed;
        let mut ecc = 0;
        for _ in 0..8 {
            stamp += 1;
            let (far, d) = bfs_levels(start, &mut mark, stamp);
            if d <= ecc && start != seed {
                break;
            }
            ecc = d;
            start = far;
        }
        let mut q = VecDeque::new();
        q.push_back(start);
        visited[start] = true;
        while let Some(v) = q.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = neighbours(v).filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Field operations needed by the envelope factorization.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Send
    + Sync
    + std::fmt::Debug
{
    fn zero() -> Self;
    fn from_f64(v: f64) -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// LDL^T factor in envelope storage, rows of the permuted matrix.
#[derive(Debug, Clone)]
pub struct EnvelopeLdl<T: Scalar> {
    perm: Arc<Vec<usize>>,
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> EnvelopeLdl<T> {
    /// Factors the symmetric matrix with values `val` on `pattern`.
    /// `spd` demands positive real pivots.
    pub fn factor(pattern: &Pattern, val: &[T], perm: Arc<Vec<usize>>, spd: bool) -> Result<Self> {
        let n = pattern.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for k in pattern.row_ptr[old]..pattern.row_ptr[old + 1] {
                let j = inv[pattern.col[k] as usize];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            let s = start[i] + (i - first[i]);
            start.push(s);
        }
        let mut l = vec![T::zero(); start[n]];
        let mut d = vec![T::zero(); n];
        for old in 0..n {
            let i = inv[old];
            for k in pattern.row_ptr[old]..pattern.row_ptr[old + 1] {
                let j = inv[pattern.col[k] as usize];
                if j < i {
                    l[start[i] + (j - first[i])] = val[k];
                } else if j == i {
                    d[i] = val[k];
                }
            }
        }
        let mut u = vec![T::zero(); n];
        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let k0 = fi.max(fj);
                let mut s = l[si + (j - fi)];
                for k in k0..j {
                    s = s - u[k] * l[sj + (k - fj)];
                }
                u[j] = s;
                l[si + (j - fi)] = s / d[j];
            }
            let mut di = d[i];
            for j in fi..i {
                di = di - u[j] * l[si + (j - fi)];
            }
            let bad = !(di.modulus() > 0.0 && di.modulus().is_finite())
                || (spd && di.modulus() < 1e-300);
            if bad {
                return Err(Error::NotPositiveDefinite(i));
            }
            d[i] = di;
        }
        Ok(EnvelopeLdl { perm, first, start, l, d })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn envelope_size(&self) -> usize {
        self.l.len()
    }

    pub fn pivots(&self) -> &[T] {
        &self.d
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n();
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let mut s = y[i];
            for j in fi..i {
                s = s - self.l[si + (j - fi)] * y[j];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] = y[i] / self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let yi = y[i];
            for j in fi..i {
                y[j] = y[j] - self.l[si + (j - fi)] * yi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

impl EnvelopeLdl<f64> {
    /// Factors a real symmetric positive definite matrix.
    pub fn factor_spd(a: &SparseSym, perm: Arc<Vec<usize>>) -> Result<Self> {
        let f = EnvelopeLdl::factor(&a.pattern, &a.val, perm, true)?;
        if let Some(i) = f.d.iter().position(|&d| d <= 0.0) {
            return Err(Error::NotPositiveDefinite(i));
        }
        Ok(f)
    }
}

/// How symmetric positive definite systems are solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Envelope Cholesky-type factorization, reused across right-hand sides.
    Direct,
    /// Jacobi-preconditioned CG with relative tolerance and iteration cap.
    Cg { tol: f64, max_iter: usize },
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Direct
    }
}

/// A matrix prepared for repeated solves.
#[derive(Debug, Clone)]
pub enum SpdSolver {
    Direct(Arc<EnvelopeLdl<f64>>),
    Cg { matrix: SparseSym, tol: f64, max_iter: usize },
}

impl SpdSolver {
    pub fn new(a: &SparseSym, kind: SolverKind, perm: Arc<Vec<usize>>) -> Result<Self> {
        Ok(match kind {
            SolverKind::Direct => SpdSolver::Direct(Arc::new(EnvelopeLdl::factor_spd(a, perm)?)),
            SolverKind::Cg { tol, max_iter } => SpdSolver::Cg { matrix: a.clone(), tol, max_iter },
        })
    }

    /// Solves A x = b; returns x and the iteration count (0 for direct).
    pub fn solve(&self, b: &[f64], guess: Option<&[f64]>) -> Result<(Vec<f64>, usize)> {
        match self {
            SpdSolver::Direct(f) => Ok((f.solve(b), 0)),
            SpdSolver::Cg { matrix, tol, max_iter } => {
                let (x, r) = cg_solve(matrix, b, guess, *tol, *max_iter)?;
                Ok((x, r.iterations))
            }
        }
    }
}

/// Solves (sigma M + K) x = b for complex sigma off the negative real axis by
/// a complex-symmetric LDL^T with iterative refinement; fails with
/// NotConverged if the relative residual stays above 1e-10.
pub fn complex_shift_solve(
    sigma: Complex64,
    m: &SparseSym,
    k: &SparseSym,
    b: &[Complex64],
    perm: Arc<Vec<usize>>,
) -> Result<Vec<Complex64>> {
    let vals: Vec<Complex64> = m.val.iter().zip(&k.val).map(|(&mv, &kv)| sigma * mv + kv).collect();
    let f = EnvelopeLdl::factor(&m.pattern, &vals, perm, false)?;
    ComplexShift { vals, pattern: m.pattern.clone(), factor: f }.solve(b)
}

/// A factored complex shifted matrix for repeated solves.
#[derive(Debug, Clone)]
pub struct ComplexShift {
    vals: Vec<Complex64>,
    pattern: Arc<Pattern>,
    factor: EnvelopeLdl<Complex64>,
}

impl ComplexShift {
    pub fn new(sigma: Complex64, m: &SparseSym, k: &SparseSym, perm: Arc<Vec<usize>>) -> Result<Self> {
        let vals: Vec<Complex64> = m.val.iter().zip(&k.val).map(|(&mv, &kv)| sigma * mv + kv).collect();
        let factor = EnvelopeLdl::factor(&m.pattern, &vals, perm, false)?;
        Ok(ComplexShift { vals, pattern: m.pattern.clone(), factor })
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = &*self.pattern;
        (0..p.n)
            .map(|i| {
                let mut s = Complex64::new(0.0, 0.0);
                for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                    s += self.vals[k] * x[p.col[k] as usize];
                }
                s
            })
            .collect()
    }

    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        let bn = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if bn == 0.0 {
            return Ok(vec![Complex64::new(0.0, 0.0); b.len()]);
        }
        let mut x = self.factor.solve(b);
        let mut res = f64::INFINITY;
        for it in 0..4 {
            let ax = self.apply(&x);
            let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            res = r.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() / bn;
            if res <= 1e-14 || it == 3 {
                break;
            }
            let dx = self.factor.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        if res > 1e-10 {
            return Err(Error::NotConverged { iterations: 3, residual: res });
        }
        Ok(x)
    }
}
