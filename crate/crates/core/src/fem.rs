//! Continuous Lagrange finite elements of degree 1..=5 with homogeneous
//! Dirichlet conditions: spaces, loads, projections, norms and export.

use crate::error::{Error, Result};
use crate::linalg::{rcm_ordering, Pattern, SolverKind, SparseSym, SpdSolver};
use crate::mesh::{Point, TriMesh};
use crate::quadrature::{gauss_legendre_interval, TriangleRule};
use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

/// Lagrange basis on the reference triangle with equispaced nodes.
///
/// Local order: the three vertices, then r-1 nodes per edge (edge e runs from
/// vertex e to vertex e+1), then interior nodes.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    pub degree: usize,
    /// Barycentric multi-indices (i0, i1, i2) summing to the degree.
    pub nodes: Vec<[usize; 3]>,
}

impl LagrangeBasis {
    pub fn new(r: usize) -> Result<Self> {
        if !(1..=5).contains(&r) {
            return Err(Error::UnsupportedDegree(r));
        }
        let mut nodes = vec![[r, 0, 0], [0, r, 0], [0, 0, r]];
        for t in 1..r {
            nodes.push([r - t, t, 0]);
        }
        for t in 1..r {
            nodes.push([0, r - t, t]);
        }
        for t in 1..r {
            nodes.push([t, 0, r - t]);
        }
        for i0 in 1..r {
            for i1 in 1..r {
                if i0 + i1 < r {
                    nodes.push([i0, i1, r - i0 - i1]);
                }
            }
        }
        Ok(LagrangeBasis { degree: r, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_interior(&self) -> usize {
        let r = self.degree;
        (r - 1) * (r.saturating_sub(2)) / 2
    }

    fn factor(&self, i: usize, lam: f64) -> (f64, f64) {
        let r = self.degree as f64;
        let (mut p, mut dp) = (1.0, 0.0);
        for a in 0..i {
            let f = (r * lam - a as f64) / (a + 1) as f64;
            dp = dp * f + p * r / (a + 1) as f64;
            p *= f;
        }
        (p, dp)
    }

    /// Basis values at barycentric point `lam`.
    pub fn values(&self, lam: [f64; 3], out: &mut [f64]) {
        for (a, idx) in self.nodes.iter().enumerate() {
            out[a] = self.factor(idx[0], lam[0]).0
                * self.factor(idx[1], lam[1]).0
                * self.factor(idx[2], lam[2]).0;
        }
    }

    /// Derivatives with respect to the three barycentric coordinates.
    pub fn bary_derivatives(&self, lam: [f64; 3], out: &mut [[f64; 3]]) {
        for (a, idx) in self.nodes.iter().enumerate() {
            let f0 = self.factor(idx[0], lam[0]);
            let f1 = self.factor(idx[1], lam[1]);
            let f2 = self.factor(idx[2], lam[2]);
            out[a] = [f0.1 * f1.0 * f2.0, f0.0 * f1.1 * f2.0, f0.0 * f1.0 * f2.1];
        }
    }
}

/// Gradients of the barycentric coordinates of a triangle, and its area.
pub fn bary_gradients(c: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[1][1] - c[0][1]) * (c[2][0] - c[0][0]);
    let g = [
        [(c[1][1] - c[2][1]) / det, (c[2][0] - c[1][0]) / det],
        [(c[2][1] - c[0][1]) / det, (c[0][0] - c[2][0]) / det],
        [(c[0][1] - c[1][1]) / det, (c[1][0] - c[0][0]) / det],
    ];
    (g, 0.5 * det)
}

pub fn to_physical(c: [Point; 3], lam: [f64; 3]) -> Point {
    [
        lam[0] * c[0][0] + lam[1] * c[1][0] + lam[2] * c[2][0],
        lam[0] * c[0][1] + lam[1] * c[1][1] + lam[2] * c[2][1],
    ]
}

/// Basis tabulated at the points of a triangle rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: TriangleRule,
    pub lam: Vec<[f64; 3]>,
    /// values[q * nloc + a]
    pub values: Vec<f64>,
    pub dlam: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn new(basis: &LagrangeBasis, degree: usize) -> Self {
        let rule = TriangleRule::with_degree(degree);
        let nloc = basis.len();
        let mut values = vec![0.0; rule.len() * nloc];
        let mut dlam = vec![[0.0; 3]; rule.len() * nloc];
        let mut lam = Vec::with_capacity(rule.len());
        for (q, p) in rule.points.iter().enumerate() {
            let l = [1.0 - p[0] - p[1], p[0], p[1]];
            lam.push(l);
            basis.values(l, &mut values[q * nloc..(q + 1) * nloc]);
            basis.bary_derivatives(l, &mut dlam[q * nloc..(q + 1) * nloc]);
        }
        Tabulation { rule, lam, values, dlam }
    }
}

/// Finite element space on a mesh with the boundary degrees of freedom
/// eliminated. Mass and stiffness matrices act on free DOFs only.
pub struct FeSpace {
    pub mesh: Arc<TriMesh>,
    pub basis: LagrangeBasis,
    pub n_dofs: usize,
    /// elem_dofs[t * nloc + a]: global DOF of local node a in triangle t.
    pub elem_dofs: Vec<u32>,
    pub dof_coords: Vec<Point>,
    /// Global DOF to free index, u32::MAX on the boundary.
    pub free_of: Vec<u32>,
    pub free_dofs: Vec<u32>,
    pub mass: SparseSym,
    pub stiffness: SparseSym,
    perm: OnceLock<Arc<Vec<usize>>>,
    stiffness_solver: OnceLock<SpdSolver>,
    mass_solver: OnceLock<SpdSolver>,
    tab_cache: Mutex<HashMap<usize, Arc<Tabulation>>>,
}

impl fmt::Debug for FeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeSpace")
            .field("degree", &self.basis.degree)
            .field("n_dofs", &self.n_dofs)
            .field("n_free", &self.n_free())
            .field("n_triangles", &self.mesh.n_triangles())
            .finish()
    }
}

impl FeSpace {
    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn nloc(&self) -> usize {
        self.basis.len()
    }

    pub fn local_dofs(&self, t: usize) -> &[u32] {
        let n = self.nloc();
        &self.elem_dofs[t * n..(t + 1) * n]
    }

    /// Reverse Cuthill–McKee ordering of the free DOFs.
    pub fn ordering(&self) -> Arc<Vec<usize>> {
        self.perm
            .get_or_init(|| Arc::new(rcm_ordering(&self.stiffness.pattern)))
            .clone()
    }

    /// Cached direct solver for the stiffness matrix.
    pub fn stiffness_solver(&self) -> Result<&SpdSolver> {
        if let Some(s) = self.stiffness_solver.get() {
            return Ok(s);
        }
        let s = SpdSolver::new(&self.stiffness, SolverKind::Direct, self.ordering())?;
        Ok(self.stiffness_solver.get_or_init(|| s))
    }

    /// Cached direct solver for the mass matrix.
    pub fn mass_solver(&self) -> Result<&SpdSolver> {
        if let Some(s) = self.mass_solver.get() {
            return Ok(s);
        }
        let s = SpdSolver::new(&self.mass, SolverKind::Direct, self.ordering())?;
        Ok(self.mass_solver.get_or_init(|| s))
    }

    /// Solves K x = b on free DOFs.
    pub fn solve_stiffness(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.stiffness_solver()?.solve(b, None)?.0)
    }

    pub fn solve_mass(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.mass_solver()?.solve(b, None)?.0)
    }

    /// Basis tabulated for a rule exact to `degree`, cached per space.
    pub fn tabulation(&self, degree: usize) -> Arc<Tabulation> {
        let mut cache = self.tab_cache.lock().unwrap();
        cache
            .entry(degree)
            .or_insert_with(|| Arc::new(Tabulation::new(&self.basis, degree)))
            .clone()
    }

    /// Mass matrix over all DOFs, boundary included.
    pub fn full_mass(&self) -> SparseSym {
        let all: Vec<u32> = (0..self.n_dofs as u32).collect();
        assemble_matrices(&self.mesh, &self.basis, &self.elem_dofs, &all, self.n_dofs).0
    }

    /// Restricts a vector over all DOFs to the free ones.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&g| full[g as usize]).collect()
    }

    /// Extends free coefficients by zero on the boundary.
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs];
        for (i, &g) in self.free_dofs.iter().enumerate() {
            full[g as usize] = free[i];
        }
        full
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Builds the degree-r space on `mesh`.
pub fn build_space(mesh: Arc<TriMesh>, r: usize) -> Result<Arc<FeSpace>> {
    let basis = LagrangeBasis::new(r)?;
    let nloc = basis.len();
    let nv = mesh.n_vertices();
    let edges = mesh.edges();
    let edge_id: HashMap<(usize, usize), usize> =
        edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let nint = basis.n_interior();
    let n_dofs = nv + edges.len() * (r - 1) + mesh.n_triangles() * nint;
    let mut elem_dofs = vec![0u32; mesh.n_triangles() * nloc];
    let mut dof_coords = vec![[0.0; 2]; n_dofs];
    let rf = r as f64;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let c = mesh.corners(t);
        let ld = &mut elem_dofs[t * nloc..(t + 1) * nloc];
        for v in 0..3 {
            ld[v] = tri[v] as u32;
        }
        for e in 0..3 {
            let (la, lb) = (tri[e], tri[(e + 1) % 3]);
            let off = nv + edge_id[&edge_key(la, lb)] * (r - 1);
            for s in 1..r {
                let pos = if la < lb { s } else { r - s };
                ld[3 + e * (r - 1) + (s - 1)] = (off + pos - 1) as u32;
            }
        }
        let ioff = nv + edges.len() * (r - 1) + t * nint;
        for i in 0..nint {
            ld[3 + 3 * (r - 1) + i] = (ioff + i) as u32;
        }
        for (a, idx) in basis.nodes.iter().enumerate() {
            let lam = [idx[0] as f64 / rf, idx[1] as f64 / rf, idx[2] as f64 / rf];
            dof_coords[ld[a] as usize] = to_physical(c, lam);
        }
    }
    let mut on_boundary = vec![false; n_dofs];
    let bset: HashSet<(usize, usize)> = mesh
        .boundary_edges
        .iter()
        .map(|e| edge_key(e.a, e.b))
        .collect();
    for e in &mesh.boundary_edges {
        on_boundary[e.a] = true;
        on_boundary[e.b] = true;
    }
    for (k, &e) in edges.iter().enumerate() {
        if bset.contains(&e) {
            for s in 0..r - 1 {
                on_boundary[nv + k * (r - 1) + s] = true;
            }
        }
    }
    let mut free_of = vec![u32::MAX; n_dofs];
    let mut free_dofs = Vec::new();
    for g in 0..n_dofs {
        if !on_boundary[g] {
            free_of[g] = free_dofs.len() as u32;
            free_dofs.push(g as u32);
        }
    }
    let (mass, stiffness) = assemble_matrices(&mesh, &basis, &elem_dofs, &free_of, free_dofs.len());
    Ok(Arc::new(FeSpace {
        mesh,
        basis,
        n_dofs,
        elem_dofs,
        dof_coords,
        free_of,
        free_dofs,
        mass,
        stiffness,
        perm: OnceLock::new(),
        stiffness_solver: OnceLock::new(),
        mass_solver: OnceLock::new(),
        tab_cache: Mutex::new(HashMap::new()),
    }))
}

/// Mass and stiffness over the DOFs with `index[g] != u32::MAX`.
fn assemble_matrices(
    mesh: &TriMesh,
    basis: &LagrangeBasis,
    elem_dofs: &[u32],
    index: &[u32],
    n: usize,
) -> (SparseSym, SparseSym) {
    let nloc = basis.len();
    let r = basis.degree;
    let tab = Tabulation::new(basis, 2 * r);
    let nq = tab.rule.len();
    // Reference integrals: mref[a][b] = 2 sum w phi_a phi_b,
    // sref[a][b][c][d] = 2 sum w dphi_a/dlam_c dphi_b/dlam_d.
    let mut mref = vec![0.0; nloc * nloc];
    let mut sref = vec![[[0.0; 3]; 3]; nloc * nloc];
    for q in 0..nq {
        let w = 2.0 * tab.rule.weights[q];
        for a in 0..nloc {
            let va = tab.values[q * nloc + a];
            let da = tab.dlam[q * nloc + a];
            for b in 0..nloc {
                mref[a * nloc + b] += w * va * tab.values[q * nloc + b];
                let db = tab.dlam[q * nloc + b];
                let s = &mut sref[a * nloc + b];
                for c in 0..3 {
                    for d in 0..3 {
                        s[c][d] += w * da[c] * db[d];
                    }
                }
            }
        }
    }
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for t in 0..mesh.n_triangles() {
        let ld = &elem_dofs[t * nloc..(t + 1) * nloc];
        for &ga in ld {
            let ia = index[ga as usize];
            if ia == u32::MAX {
                continue;
            }
            for &gb in ld {
                let ib = index[gb as usize];
                if ib != u32::MAX {
                    rows[ia as usize].push(ib);
                }
            }
        }
    }
    let pattern = Arc::new(Pattern::from_rows(rows));
    let mut mass = SparseSym::zeros(pattern.clone());
    let mut stiff = SparseSym::zeros(pattern);
    for t in 0..mesh.n_triangles() {
        let (g, area) = bary_gradients(mesh.corners(t));
        let mut gg = [[0.0; 3]; 3];
        for c in 0..3 {
            for d in 0..3 {
                gg[c][d] = g[c][0] * g[d][0] + g[c][1] * g[d][1];
            }
        }
        let ld = &elem_dofs[t * nloc..(t + 1) * nloc];
        for a in 0..nloc {
            let ia = index[ld[a] as usize];
            if ia == u32::MAX {
                continue;
            }
            for b in 0..nloc {
                let ib = index[ld[b] as usize];
                if ib == u32::MAX {
                    continue;
                }
                let s = &sref[a * nloc + b];
                let mut kab = 0.0;
                for c in 0..3 {
                    for d in 0..3 {
                        kab += s[c][d] * gg[c][d];
                    }
                }
                let k = mass.pattern.find(ia as usize, ib as usize).unwrap();
                mass.val[k] += area * mref[a * nloc + b];
                stiff.val[k] += area * kab;
            }
        }
    }
    (mass, stiff)
}

/// Initial data and sources given by a density.
#[derive(Clone)]
pub enum Density {
    Constant(f64),
    /// amp * 2 sin(k pi x) sin(l pi y), an L2-normalized Dirichlet eigenmode.
    Mode { k: usize, l: usize, amp: f64 },
    /// value on [x0, x1] x [y0, y1], zero elsewhere.
    Rect { x0: f64, x1: f64, y0: f64, y1: f64, value: f64 },
    Custom(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Constant(c) => write!(f, "Constant({c})"),
            Density::Mode { k, l, amp } => write!(f, "Mode({k}, {l}, {amp})"),
            Density::Rect { x0, x1, y0, y1, value } => {
                write!(f, "Rect([{x0}, {x1}] x [{y0}, {y1}] = {value})")
            }
            Density::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Density {
    pub fn value(&self, p: Point) -> f64 {
        use std::f64::consts::PI;
        match self {
            Density::Constant(c) => *c,
            Density::Mode { k, l, amp } => {
                amp * 2.0 * (*k as f64 * PI * p[0]).sin() * (*l as f64 * PI * p[1]).sin()
            }
            Density::Rect { x0, x1, y0, y1, value } => {
                if p[0] >= *x0 && p[0] <= *x1 && p[1] >= *y0 && p[1] <= *y1 {
                    *value
                } else {
                    0.0
                }
            }
            Density::Custom(f) => f(p),
        }
    }
}

/// Right-hand side functionals b_i = <f, phi_i>.
#[derive(Debug, Clone)]
pub enum LoadSpec {
    Density(Density),
    /// Point evaluation at a location.
    Dirac(Point),
    /// Arc-length integral along the straight segment [p, q].
    Line(Point, Point),
}

impl LoadSpec {
    /// Regularity index s with the data in H^s: a point mass is in
    /// H^{-1-eps}, a line mass in H^{-1/2-eps}.
    pub fn sobolev_index(&self) -> f64 {
        match self {
            LoadSpec::Density(Density::Rect { .. }) => 0.5,
            LoadSpec::Density(Density::Constant(_)) => 0.5,
            LoadSpec::Density(_) => 2.0,
            LoadSpec::Dirac(_) => -1.0,
            LoadSpec::Line(..) => -0.5,
        }
    }
}

/// A load vector over all DOFs and its free restriction.
#[derive(Debug, Clone)]
pub struct Load {
    pub full: Vec<f64>,
    pub free: Vec<f64>,
}

pub fn assemble_load(space: &FeSpace, load: &LoadSpec) -> Result<Load> {
    let full = match load {
        LoadSpec::Density(d) => density_load(space, d),
        LoadSpec::Dirac(p) => dirac_load(space, *p)?,
        LoadSpec::Line(p, q) => line_load(space, *p, *q)?,
    };
    let free = space.restrict(&full);
    Ok(Load { full, free })
}

fn density_load(space: &FeSpace, d: &Density) -> Vec<f64> {
    let mesh = &space.mesh;
    let tab = space.tabulation(2 * space.degree() + 2);
    let nloc = space.nloc();
    let mut b = vec![0.0; space.n_dofs];
    for t in 0..mesh.n_triangles() {
        let c = mesh.corners(t);
        let area = mesh.area(t);
        let ld = space.local_dofs(t);
        for (q, lam) in tab.lam.iter().enumerate() {
            let f = d.value(to_physical(c, *lam)) * 2.0 * area * tab.rule.weights[q];
            if f == 0.0 {
                continue;
            }
            for a in 0..nloc {
                b[ld[a] as usize] += f * tab.values[q * nloc + a];
            }
        }
    }
    b
}

fn dirac_load(space: &FeSpace, p: Point) -> Result<Vec<f64>> {
    let (t, lam) = space.mesh.locate(p).ok_or(Error::PointOutsideDomain(p[0], p[1]))?;
    let mut vals = vec![0.0; space.nloc()];
    space.basis.values(lam, &mut vals);
    let mut b = vec![0.0; space.n_dofs];
    for (a, &g) in space.local_dofs(t).iter().enumerate() {
        b[g as usize] += vals[a];
    }
    Ok(b)
}

/// Clips the segment p + s (q - p), s in [0, 1], to a closed triangle.
fn clip_segment(c: [Point; 3], p: Point, q: Point) -> Option<(f64, f64)> {
    let (mut s0, mut s1) = (0.0f64, 1.0f64);
    let d = [q[0] - p[0], q[1] - p[1]];
    let scale = (d[0] * d[0] + d[1] * d[1]).sqrt();
    for i in 0..3 {
        let a = c[i];
        let b = c[(i + 1) % 3];
        // Inward normal of edge a-b for a counter-clockwise triangle.
        let n = [-(b[1] - a[1]), b[0] - a[0]];
        let nl = n[0].hypot(n[1]);
        let num = (n[0] * (p[0] - a[0]) + n[1] * (p[1] - a[1])) / nl;
        let den = (n[0] * d[0] + n[1] * d[1]) / nl;
        let tol = 1e-12 * scale.max(1.0);
        if den.abs() <= 1e-14 * scale {
            if num < -tol {
                return None;
            }
        } else {
            // Exact crossings; pieces from neighbours meet up to rounding.
            let s = -num / den;
            if den > 0.0 {
                s0 = s0.max(s);
            } else {
                s1 = s1.min(s);
            }
        }
    }
    let s0 = s0.max(0.0);
    let s1 = s1.min(1.0);
    if s1 - s0 > 1e-12 {
        Some((s0, s1))
    } else {
        None
    }
}

fn line_load(space: &FeSpace, p: Point, q: Point) -> Result<Vec<f64>> {
    let mesh = &space.mesh;
    let len = (q[0] - p[0]).hypot(q[1] - p[1]);
    let r = space.degree();
    let (gx, gw) = gauss_legendre_interval(r + 1, 0.0, 1.0);
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in &mesh.triangles {
        for i in 0..3 {
            *edge_count.entry(edge_key(tri[i], tri[(i + 1) % 3])).or_default() += 1;
        }
    }
    let bb = [p[0].min(q[0]), p[0].max(q[0]), p[1].min(q[1]), p[1].max(q[1])];
    let mut b = vec![0.0; space.n_dofs];
    let mut vals = vec![0.0; space.nloc()];
    let mut covered: Vec<(f64, f64)> = Vec::new();
    for t in 0..mesh.n_triangles() {
        let c = mesh.corners(t);
        let (xmin, xmax) = (c[0][0].min(c[1][0]).min(c[2][0]), c[0][0].max(c[1][0]).max(c[2][0]));
        let (ymin, ymax) = (c[0][1].min(c[1][1]).min(c[2][1]), c[0][1].max(c[1][1]).max(c[2][1]));
        if xmax < bb[0] - 1e-12 || xmin > bb[1] + 1e-12 || ymax < bb[2] - 1e-12 || ymin > bb[3] + 1e-12
        {
            continue;
        }
        let Some((s0, s1)) = clip_segment(c, p, q) else { continue };
        let at = |s: f64| [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
        // A piece lying on an element edge is shared by the triangles on that edge.
        let l0 = mesh.barycentric(t, at(s0));
        let l1 = mesh.barycentric(t, at(s1));
        let mut share = 1.0;
        for v in 0..3 {
            if l0[v].abs() < 1e-10 && l1[v].abs() < 1e-10 {
                let tri = mesh.triangles[t];
                let e = edge_key(tri[(v + 1) % 3], tri[(v + 2) % 3]);
                share = 1.0 / edge_count[&e] as f64;
            }
        }
        covered.push((s0, s1));
        let ld = space.local_dofs(t);
        for (x, w) in gx.iter().zip(&gw) {
            let s = s0 + (s1 - s0) * x;
            let lam = mesh.barycentric(t, at(s));
            space.basis.values(lam, &mut vals);
            let f = share * w * (s1 - s0) * len;
            for a in 0..vals.len() {
                b[ld[a] as usize] += f * vals[a];
            }
        }
    }
    covered.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut reach = 0.0f64;
    for (a, bnd) in covered {
        if a > reach + 1e-9 {
            return Err(Error::SegmentOutsideDomain);
        }
        reach = reach.max(bnd);
    }
    if reach < 1.0 - 1e-9 {
        return Err(Error::SegmentOutsideDomain);
    }
    Ok(b)
}

/// Coefficients on the free DOFs of a space; boundary values are zero.
#[derive(Clone)]
pub struct FeFunction {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl fmt::Debug for FeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeFunction(n = {})", self.coeffs.len())
    }
}

impl FeFunction {
    pub fn zero(space: Arc<FeSpace>) -> Self {
        let n = space.n_free();
        FeFunction { space, coeffs: vec![0.0; n] }
    }

    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.n_free());
        FeFunction { space, coeffs }
    }

    fn local_coeffs(&self, t: usize, out: &mut [f64]) {
        for (a, &g) in self.space.local_dofs(t).iter().enumerate() {
            let i = self.space.free_of[g as usize];
            out[a] = if i == u32::MAX { 0.0 } else { self.coeffs[i as usize] };
        }
    }

    /// Value in triangle t at barycentric coordinates lam.
    pub fn value_in(&self, t: usize, lam: [f64; 3]) -> f64 {
        let n = self.space.nloc();
        let mut c = vec![0.0; n];
        let mut v = vec![0.0; n];
        self.local_coeffs(t, &mut c);
        self.space.basis.values(lam, &mut v);
        c.iter().zip(&v).map(|(a, b)| a * b).sum()
    }

    pub fn gradient_in(&self, t: usize, lam: [f64; 3]) -> [f64; 2] {
        let n = self.space.nloc();
        let mut c = vec![0.0; n];
        let mut d = vec![[0.0; 3]; n];
        self.local_coeffs(t, &mut c);
        self.space.basis.bary_derivatives(lam, &mut d);
        let (g, _) = bary_gradients(self.space.mesh.corners(t));
        let mut out = [0.0; 2];
        for a in 0..n {
            for k in 0..3 {
                out[0] += c[a] * d[a][k] * g[k][0];
                out[1] += c[a] * d[a][k] * g[k][1];
            }
        }
        out
    }

    /// Point value; None outside the mesh.
    pub fn value_at(&self, p: Point) -> Option<f64> {
        self.space.mesh.locate(p).map(|(t, lam)| self.value_in(t, lam))
    }

    pub fn scaled(&self, a: f64) -> FeFunction {
        FeFunction {
            space: self.space.clone(),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    /// self + a * other on the same space.
    pub fn axpy(&mut self, a: f64, other: &FeFunction) {
        assert!(Arc::ptr_eq(&self.space, &other.space));
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let m = self.space.mass.apply(&self.coeffs);
        m.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }

    pub fn h1_seminorm(&self) -> f64 {
        let k = self.space.stiffness.apply(&self.coeffs);
        k.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt()
    }
}

/// L2 projection of a density.
pub fn l2_project(space: &Arc<FeSpace>, f: &Density) -> Result<FeFunction> {
    let b = assemble_load(space, &LoadSpec::Density(f.clone()))?;
    Ok(FeFunction::new(space.clone(), space.solve_mass(&b.free)?))
}

/// Ritz projection from the gradient of a function vanishing on the boundary.
pub fn ritz_project(
    space: &Arc<FeSpace>,
    grad: &dyn Fn(Point) -> [f64; 2],
) -> Result<FeFunction> {
    let mesh = &space.mesh;
    let tab = space.tabulation(2 * space.degree() + 2);
    let nloc = space.nloc();
    let mut b = vec![0.0; space.n_dofs];
    for t in 0..mesh.n_triangles() {
        let c = mesh.corners(t);
        let (g, area) = bary_gradients(c);
        let ld = space.local_dofs(t);
        for (q, lam) in tab.lam.iter().enumerate() {
            let gv = grad(to_physical(c, *lam));
            let w = 2.0 * area * tab.rule.weights[q];
            for a in 0..nloc {
                let d = tab.dlam[q * nloc + a];
                let gx = d[0] * g[0][0] + d[1] * g[1][0] + d[2] * g[2][0];
                let gy = d[0] * g[0][1] + d[1] * g[1][1] + d[2] * g[2][1];
                b[ld[a] as usize] += w * (gx * gv[0] + gy * gv[1]);
            }
        }
    }
    let free = space.restrict(&b);
    Ok(FeFunction::new(space.clone(), space.solve_stiffness(&free)?))
}

/// Nodal interpolation at the free DOFs.
pub fn interpolate(space: &Arc<FeSpace>, f: &dyn Fn(Point) -> f64) -> FeFunction {
    let coeffs = space
        .free_dofs
        .iter()
        .map(|&g| f(space.dof_coords[g as usize]))
        .collect();
    FeFunction::new(space.clone(), coeffs)
}

/// A_h^{-j} applied to a load: solve K x1 = b, then K x_i = M x_{i-1}.
pub fn discrete_neg_power(space: &Arc<FeSpace>, load: &[f64], j: usize) -> Result<FeFunction> {
    assert!(j >= 1);
    let mut x = space.solve_stiffness(load)?;
    for _ in 1..j {
        let mx = space.mass.apply(&x);
        x = space.solve_stiffness(&mx)?;
    }
    Ok(FeFunction::new(space.clone(), x))
}

/// A function known in closed form, carried exactly alongside a discrete part.
pub trait ClosedForm: Send + Sync + fmt::Debug {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> [f64; 2];
}

/// Discrete function plus a combination of closed-form terms.
#[derive(Clone, Debug)]
pub struct Field {
    pub fe: FeFunction,
    pub closed: Vec<(f64, Arc<dyn ClosedForm>)>,
}

impl From<FeFunction> for Field {
    fn from(fe: FeFunction) -> Self {
        Field { fe, closed: Vec::new() }
    }
}

impl Field {
    pub fn space(&self) -> &Arc<FeSpace> {
        &self.fe.space
    }

    pub fn value_in(&self, t: usize, lam: [f64; 3], p: Point) -> f64 {
        let mut v = self.fe.value_in(t, lam);
        for (c, f) in &self.closed {
            v += c * f.value(p);
        }
        v
    }

    pub fn value_at(&self, p: Point) -> Option<f64> {
        let (t, lam) = self.fe.space.mesh.locate(p)?;
        Some(self.value_in(t, lam, p))
    }

    /// self + a * other; both discrete parts must share a space.
    pub fn add_scaled(&mut self, a: f64, other: &Field) {
        self.fe.axpy(a, &other.fe);
        'outer: for (c, f) in &other.closed {
            for (c0, f0) in self.closed.iter_mut() {
                if Arc::ptr_eq(f0, f) {
                    *c0 += a * c;
                    continue 'outer;
                }
            }
            self.closed.push((a * c, f.clone()));
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            fe: self.fe.scaled(a),
            closed: self.closed.iter().map(|(c, f)| (a * c, f.clone())).collect(),
        }
    }
}

/// Norms of a - b for fields on nested meshes, integrated on the finer mesh
/// with a rule exact to degree 2r + 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPair {
    pub l2: f64,
    pub h1: f64,
}

pub fn difference_norms(a: &Field, b: &Field) -> Result<NormPair> {
    let (fine, coarse) = if a.fe.space.mesh.is_descendant_of(&b.fe.space.mesh) {
        (a, b)
    } else if b.fe.space.mesh.is_descendant_of(&a.fe.space.mesh) {
        (b, a)
    } else {
        return Err(Error::NonNestedMeshes);
    };
    let fmesh = &fine.fe.space.mesh;
    let cmesh = &coarse.fe.space.mesh;
    let map = fmesh.map_to_ancestor(cmesh.id()).ok_or(Error::NonNestedMeshes)?;
    // Closed-form terms present in both with equal weights cancel exactly.
    let mut closed: Vec<(f64, Arc<dyn ClosedForm>)> = fine.closed.clone();
    for (c, f) in &coarse.closed {
        if let Some(e) = closed.iter_mut().find(|(_, g)| Arc::ptr_eq(g, f)) {
            e.0 -= c;
        } else {
            closed.push((-c, f.clone()));
        }
    }
    closed.retain(|(c, _)| *c != 0.0);
    let r = fine.fe.space.degree().max(coarse.fe.space.degree());
    let tab = fine.fe.space.tabulation(2 * r + 2);
    let nloc = fine.fe.space.nloc();
    let same = Arc::ptr_eq(&fine.fe.space, &coarse.fe.space);
    let mut cf = vec![0.0; nloc];
    let cn = coarse.fe.space.nloc();
    let mut cc = vec![0.0; cn];
    let mut cv = vec![0.0; cn];
    let mut cd = vec![[0.0; 3]; cn];
    let (mut l2, mut h1) = (0.0, 0.0);
    for t in 0..fmesh.n_triangles() {
        let c = fmesh.corners(t);
        let (g, area) = bary_gradients(c);
        fine.fe.local_coeffs(t, &mut cf);
        let tc = map[t] as usize;
        let (gc, _) = bary_gradients(cmesh.corners(tc));
        coarse.fe.local_coeffs(tc, &mut cc);
        for (q, lam) in tab.lam.iter().enumerate() {
            let p = to_physical(c, *lam);
            let w = 2.0 * area * tab.rule.weights[q];
            let mut v = 0.0;
            let mut gr = [0.0; 2];
            for a in 0..nloc {
                v += cf[a] * tab.values[q * nloc + a];
                let d = tab.dlam[q * nloc + a];
                for k in 0..3 {
                    gr[0] += cf[a] * d[k] * g[k][0];
                    gr[1] += cf[a] * d[k] * g[k][1];
                }
            }
            let lc = if same { *lam } else { cmesh.barycentric(tc, p) };
            coarse.fe.space.basis.values(lc, &mut cv);
            coarse.fe.space.basis.bary_derivatives(lc, &mut cd);
            for a in 0..cn {
                v -= cc[a] * cv[a];
                for k in 0..3 {
                    gr[0] -= cc[a] * cd[a][k] * gc[k][0];
                    gr[1] -= cc[a] * cd[a][k] * gc[k][1];
                }
            }
            for (cw, f) in &closed {
                v += cw * f.value(p);
                let fg = f.gradient(p);
                gr[0] += cw * fg[0];
                gr[1] += cw * fg[1];
            }
            l2 += w * v * v;
            h1 += w * (gr[0] * gr[0] + gr[1] * gr[1]);
        }
    }
    Ok(NormPair { l2: l2.sqrt(), h1: h1.sqrt() })
}

/// L2 and H1-seminorm distance between a field and an exact function.
pub fn error_norms(
    u: &Field,
    exact: &dyn Fn(Point) -> f64,
    exact_grad: Option<&dyn Fn(Point) -> [f64; 2]>,
) -> NormPair {
    let space = &u.fe.space;
    let mesh = &space.mesh;
    let tab = space.tabulation(2 * space.degree() + 2);
    let (mut l2, mut h1) = (0.0, 0.0);
    for t in 0..mesh.n_triangles() {
        let c = mesh.corners(t);
        let area = mesh.area(t);
        for (q, lam) in tab.lam.iter().enumerate() {
            let p = to_physical(c, *lam);
            let w = 2.0 * area * tab.rule.weights[q];
            let d = u.value_in(t, *lam, p) - exact(p);
            l2 += w * d * d;
            if let Some(eg) = exact_grad {
                let mut g = u.fe.gradient_in(t, *lam);
                for (cw, f) in &u.closed {
                    let fg = f.gradient(p);
                    g[0] += cw * fg[0];
                    g[1] += cw * fg[1];
                }
                let e = eg(p);
                h1 += w * ((g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2));
            }
        }
    }
    NormPair { l2: l2.sqrt(), h1: h1.sqrt() }
}

/// Field values at the mesh vertices.
pub fn vertex_values(u: &Field) -> Vec<f64> {
    let mesh = &u.fe.space.mesh;
    let mut out = vec![0.0; mesh.n_vertices()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for (k, &v) in tri.iter().enumerate() {
            let mut lam = [0.0; 3];
            lam[k] = 1.0;
            out[v] = u.value_in(t, lam, mesh.vertices[v]);
        }
    }
    out
}

/// CSV with columns x, y, value at the mesh vertices.
pub fn export_csv(u: &Field, path: &Path) -> Result<()> {
    let vals = vertex_values(u);
    let mut s = String::from("x,y,value\n");
    for (p, v) in u.fe.space.mesh.vertices.iter().zip(&vals) {
        let _ = writeln!(s, "{},{},{}", p[0], p[1], v);
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Legacy VTK unstructured grid with vertex values.
pub fn export_vtk(u: &Field, path: &Path) -> Result<()> {
    let mesh = &u.fe.space.mesh;
    let vals = vertex_values(u);
    let mut s = String::from("# vtk DataFile Version 3.0\nfracsplit\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.n_triangles(), 4 * mesh.n_triangles());
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_triangles());
    for _ in 0..mesh.n_triangles() {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {}\nSCALARS u double 1\nLOOKUP_TABLE default", mesh.n_vertices());
    for v in vals {
        let _ = writeln!(s, "{v}");
    }
    std::fs::write(path, s)?;
    Ok(())
}
