//! Conforming triangulations: structured generators, red and graded
//! refinement, MSH 2.2 input and output, and point location.
//!
//! Every mesh carries a unique id and the triangle maps to all of its
//! ancestors, so that functions on nested meshes can be compared exactly.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

pub type Point = [f64; 2];

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub marker: i32,
}

/// Triangle map from this mesh to one ancestor.
#[derive(Debug, Clone)]
pub struct LineageLink {
    pub ancestor: u64,
    pub map: Arc<Vec<u32>>,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub level: u32,
    id: u64,
    lineage: Vec<LineageLink>,
    locator: OnceLock<Arc<Locator>>,
}

/// Parameters of a mesh graded toward a finite set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GradingSpec {
    pub centers: Vec<Point>,
    pub gamma: f64,
    pub h: f64,
    pub h_star: f64,
    pub d0: f64,
    pub budget: usize,
}

impl GradingSpec {
    /// Defaults: h_* = h^{1/gamma}; d0 is half the distance from the nearest
    /// center to the boundary of the unit square, capped at 0.25.
    pub fn new(centers: Vec<Point>, gamma: f64, h: f64) -> Self {
        let mut d0: f64 = 0.25;
        for c in &centers {
            let dist = c[0].min(1.0 - c[0]).min(c[1]).min(1.0 - c[1]);
            d0 = d0.min(0.5 * dist);
        }
        if d0 <= 0.0 {
            d0 = 0.25;
        }
        GradingSpec {
            centers,
            gamma,
            h,
            h_star: h.powf(1.0 / gamma),
            d0,
            budget: 2_000_000,
        }
    }

    /// Target diameter for a triangle at distance `dist` from the centers.
    pub fn target(&self, dist: f64) -> f64 {
        let s = (dist / self.d0).min(1.0).powf(1.0 - self.gamma);
        (self.h * s).max(self.h_star)
    }
}

fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh, orienting triangles counter-clockwise and checking
    /// conformity. With no boundary edges given they are inferred (marker 0).
    pub fn new(
        vertices: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        for (i, t) in triangles.iter_mut().enumerate() {
            for &v in t.iter() {
                if v >= vertices.len() {
                    return Err(Error::NonConforming(format!(
                        "triangle {i} references missing vertex {v}"
                    )));
                }
            }
            let o = orient(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if o == 0.0 {
                return Err(Error::NonConforming(format!("triangle {i} is degenerate")));
            }
            if o < 0.0 {
                t.swap(1, 2);
            }
        }
        let mut mesh = TriMesh {
            vertices,
            triangles,
            boundary_edges: Vec::new(),
            level: 0,
            id: fresh_id(),
            lineage: Vec::new(),
            locator: OnceLock::new(),
        };
        let topo = mesh.check_conformity()?;
        let declared: HashMap<(usize, usize), i32> = boundary_edges
            .iter()
            .map(|e| (edge_key(e.a, e.b), e.marker))
            .collect();
        mesh.boundary_edges = topo
            .into_iter()
            .map(|(a, b)| BoundaryEdge {
                a,
                b,
                marker: *declared.get(&edge_key(a, b)).unwrap_or(&0),
            })
            .collect();
        Ok(mesh)
    }

    fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        level: u32,
        lineage: Vec<LineageLink>,
    ) -> Self {
        TriMesh {
            vertices,
            triangles,
            boundary_edges,
            level,
            id: fresh_id(),
            lineage,
            locator: OnceLock::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * orient(a, b, c)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| self.diameter(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut best = 180.0f64;
        for t in 0..self.n_triangles() {
            let p = self.corners(t);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cosang = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                best = best.min(cosang.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        best
    }

    /// Unique edges as sorted vertex pairs, in first-seen order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for t in &self.triangles {
            for i in 0..3 {
                let k = edge_key(t[i], t[(i + 1) % 3]);
                if seen.insert(k, ()).is_none() {
                    out.push(k);
                }
            }
        }
        out
    }

    /// Verifies that every edge has one or two triangles, that the boundary
    /// is a union of closed vertex-manifold loops and that no vertex hangs on
    /// a boundary edge. Returns the boundary edges oriented counter-clockwise.
    pub fn check_conformity(&self) -> Result<Vec<(usize, usize)>> {
        let mut count: HashMap<(usize, usize), (usize, (usize, usize))> = HashMap::new();
        for t in &self.triangles {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                let e = count.entry(edge_key(a, b)).or_insert((0, (a, b)));
                e.0 += 1;
                e.1 = (a, b);
            }
        }
        let mut boundary = Vec::new();
        for (k, (c, dir)) in &count {
            if *c > 2 {
                return Err(Error::NonConforming(format!(
                    "edge ({}, {}) shared by {c} triangles",
                    k.0, k.1
                )));
            }
            if *c == 1 {
                boundary.push(*dir);
            }
        }
        boundary.sort();
        let mut degree: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in &boundary {
            *degree.entry(a).or_default() += 1;
            *degree.entry(b).or_default() += 1;
        }
        if let Some((v, d)) = degree.iter().find(|(_, d)| **d != 2) {
            return Err(Error::NonConforming(format!(
                "boundary vertex {v} has {d} boundary edges"
            )));
        }
        let bverts: Vec<usize> = {
            let mut v: Vec<usize> = degree.keys().copied().collect();
            v.sort();
            v
        };
        for &(a, b) in &boundary {
            let pa = self.vertices[a];
            let pb = self.vertices[b];
            let len = dist(pa, pb);
            for &v in &bverts {
                if v == a || v == b {
                    continue;
                }
                let p = self.vertices[v];
                if orient(pa, pb, p).abs() <= 1e-12 * len * len {
                    let s = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1]))
                        / (len * len);
                    if s > 1e-12 && s < 1.0 - 1e-12 {
                        return Err(Error::NonConforming(format!(
                            "vertex {v} hangs on edge ({a}, {b})"
                        )));
                    }
                }
            }
        }
        Ok(boundary)
    }

    /// Triangle map into the ancestor mesh with the given id.
    pub fn map_to_ancestor(&self, ancestor: u64) -> Option<Arc<Vec<u32>>> {
        if ancestor == self.id {
            return Some(Arc::new((0..self.n_triangles() as u32).collect()));
        }
        self.lineage
            .iter()
            .find(|l| l.ancestor == ancestor)
            .map(|l| l.map.clone())
    }

    pub fn is_descendant_of(&self, other: &TriMesh) -> bool {
        other.id == self.id || self.lineage.iter().any(|l| l.ancestor == other.id)
    }

    fn child_lineage(&self, parent_of: &[u32]) -> Vec<LineageLink> {
        let mut out = vec![LineageLink {
            ancestor: self.id,
            map: Arc::new(parent_of.to_vec()),
        }];
        for link in &self.lineage {
            let map: Vec<u32> = parent_of.iter().map(|&p| link.map[p as usize]).collect();
            out.push(LineageLink {
                ancestor: link.ancestor,
                map: Arc::new(map),
            });
        }
        out
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let det = orient(a, b, c);
        let l1 = orient(p, b, c) / det;
        let l2 = orient(a, p, c) / det;
        [l1, l2, 1.0 - l1 - l2]
    }

    fn locator(&self) -> Arc<Locator> {
        self.locator.get_or_init(|| Arc::new(Locator::build(self))).clone()
    }

    /// Lowest-index triangle containing `p` (closed), with barycentrics.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        self.locator().locate(self, p)
    }
}

#[derive(Debug)]
struct Locator {
    origin: Point,
    cell: [f64; 2],
    n: [usize; 2],
    buckets: Vec<Vec<u32>>,
}

impl Locator {
    fn build(mesh: &TriMesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let side = ((mesh.n_triangles() as f64).sqrt().ceil() as usize).clamp(1, 1024);
        let n = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(1e-300),
            ((hi[1] - lo[1]) / side as f64).max(1e-300),
        ];
        let mut buckets = vec![Vec::new(); side * side];
        for t in 0..mesh.n_triangles() {
            let c = mesh.corners(t);
            let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
            for p in c {
                let i = (((p[0] - lo[0]) / cell[0]).floor().max(0.0) as usize).min(side - 1);
                let j = (((p[1] - lo[1]) / cell[1]).floor().max(0.0) as usize).min(side - 1);
                i0 = i0.min(i);
                i1 = i1.max(i);
                j0 = j0.min(j);
                j1 = j1.max(j);
            }
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * side + i].push(t as u32);
                }
            }
        }
        Locator { origin: lo, cell, n, buckets }
    }

    fn locate(&self, mesh: &TriMesh, p: Point) -> Option<(usize, [f64; 3])> {
        let fi = (p[0] - self.origin[0]) / self.cell[0];
        let fj = (p[1] - self.origin[1]) / self.cell[1];
        let tol = 1e-12;
        let mut best: Option<(usize, [f64; 3])> = None;
        let ii = fi.floor() as i64;
        let jj = fj.floor() as i64;
        for dj in -1..=1i64 {
            for di in -1..=1i64 {
                let (i, j) = (ii + di, jj + dj);
                if i < 0 || j < 0 || i >= self.n[0] as i64 || j >= self.n[1] as i64 {
                    continue;
                }
                // Neighbour cells only matter when p sits on a cell boundary.
                if di != 0 && (fi - (ii as f64 + if di > 0 { 1.0 } else { 0.0 })).abs() > tol {
                    continue;
                }
                if dj != 0 && (fj - (jj as f64 + if dj > 0 { 1.0 } else { 0.0 })).abs() > tol {
                    continue;
                }
                for &t in &self.buckets[j as usize * self.n[0] + i as usize] {
                    let t = t as usize;
                    if best.is_some_and(|b| b.0 <= t) {
                        continue;
                    }
                    let l = mesh.barycentric(t, p);
                    if l.iter().all(|&x| x >= -tol) {
                        best = Some((t, l));
                    }
                }
            }
        }
        best
    }
}

/// Diagonal used to split a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagonal {
    /// From the lower-left to the upper-right corner.
    Main,
    /// From the upper-left to the lower-right corner.
    Anti,
}

/// nx by ny grid on the unit square. Boundary markers: 1 bottom, 2 right,
/// 3 top, 4 left.
pub fn structured_grid(
    nx: usize,
    ny: usize,
    diagonal: impl Fn(usize, usize) -> Diagonal,
) -> TriMesh {
    assert!(nx > 0 && ny > 0);
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 / nx as f64, j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            match diagonal(i, j) {
                Diagonal::Main => {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
                Diagonal::Anti => {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
    }
    let mut boundary_edges = Vec::new();
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge { a: idx(i, 0), b: idx(i + 1, 0), marker: 1 });
        boundary_edges.push(BoundaryEdge { a: idx(i + 1, ny), b: idx(i, ny), marker: 3 });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge { a: idx(nx, j), b: idx(nx, j + 1), marker: 2 });
        boundary_edges.push(BoundaryEdge { a: idx(0, j + 1), b: idx(0, j), marker: 4 });
    }
    TriMesh::from_parts(vertices, triangles, boundary_edges, 0, Vec::new())
}

/// Uniform n x n triangulation of the unit square, every cell split along the
/// same diagonal.
pub fn structured_square(n: usize) -> TriMesh {
    structured_grid(n, n, |_, _| Diagonal::Main)
}

/// Grid whose cell anti-diagonals contain the segment [p, q], so that the
/// segment is a union of mesh edges. Cells away from the segment use the
/// main diagonal.
pub fn segment_fitted_grid(nx: usize, ny: usize, p: Point, q: Point) -> TriMesh {
    let len = dist(p, q);
    structured_grid(nx, ny, |i, j| {
        let c = [(i as f64 + 0.5) / nx as f64, (j as f64 + 0.5) / ny as f64];
        let off = orient(p, q, c).abs() / len;
        let s = ((c[0] - p[0]) * (q[0] - p[0]) + (c[1] - p[1]) * (q[1] - p[1])) / (len * len);
        if off < 1e-12 && s > 0.0 && s < 1.0 {
            Diagonal::Anti
        } else {
            Diagonal::Main
        }
    })
}

fn midpoint(v: &[Point], a: usize, b: usize) -> Point {
    [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])]
}

/// Splits every triangle into four congruent children.
pub fn red_refine(mesh: &TriMesh) -> TriMesh {
    let mut vertices = mesh.vertices.clone();
    let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        *mids.entry(edge_key(a, b)).or_insert_with(|| {
            vertices.push(midpoint(vertices, a, b));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut parent = Vec::with_capacity(4 * mesh.n_triangles());
    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        parent.extend_from_slice(&[t as u32; 4]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let m = mid(e.a, e.b, &mut vertices);
        boundary_edges.push(BoundaryEdge { a: e.a, b: m, marker: e.marker });
        boundary_edges.push(BoundaryEdge { a: m, b: e.b, marker: e.marker });
    }
    TriMesh::from_parts(
        vertices,
        triangles,
        boundary_edges,
        mesh.level + 1,
        mesh.child_lineage(&parent),
    )
}

fn point_triangle_distance(c: [Point; 3], p: Point) -> f64 {
    let o0 = orient(c[0], c[1], p);
    let o1 = orient(c[1], c[2], p);
    let o2 = orient(c[2], c[0], p);
    if o0 >= 0.0 && o1 >= 0.0 && o2 >= 0.0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..3 {
        let a = c[i];
        let b = c[(i + 1) % 3];
        let d = [b[0] - a[0], b[1] - a[1]];
        let s = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1]))
            .clamp(0.0, 1.0);
        best = best.min(dist(p, [a[0] + s * d[0], a[1] + s * d[1]]));
    }
    best
}

/// Longest edge of triangle t as a position 0..3 (edge i joins local
/// vertices i and i+1). Ties go to the smallest sorted vertex pair.
fn longest_edge(mesh_v: &[Point], t: &[usize; 3]) -> usize {
    let mut best = 0;
    let mut best_len = -1.0;
    let mut best_key = (usize::MAX, usize::MAX);
    for i in 0..3 {
        let (a, b) = (t[i], t[(i + 1) % 3]);
        let len = dist(mesh_v[a], mesh_v[b]);
        let key = edge_key(a, b);
        let tie = (len - best_len).abs() <= 1e-12 * len;
        if (!tie && len > best_len) || (tie && key < best_key) {
            best = i;
            best_len = len;
            best_key = key;
        }
    }
    best
}

/// Longest-edge bisection with conforming closure of the marked triangles.
fn bisect_marked(mesh: &TriMesh, marked: &[bool]) -> TriMesh {
    let v = &mesh.vertices;
    let longest: Vec<usize> = mesh.triangles.iter().map(|t| longest_edge(v, t)).collect();
    let mut split: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if marked[t] {
            let i = longest[t];
            split.insert(edge_key(tri[i], tri[(i + 1) % 3]), usize::MAX);
        }
    }
    let mut edge_tris: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for i in 0..3 {
            edge_tris.entry(edge_key(tri[i], tri[(i + 1) % 3])).or_default().push(t);
        }
    }
    let mut work: Vec<(usize, usize)> = split.keys().copied().collect();
    while let Some(e) = work.pop() {
        for &t in &edge_tris[&e] {
            let tri = mesh.triangles[t];
            let i = longest[t];
            let le = edge_key(tri[i], tri[(i + 1) % 3]);
            if let std::collections::hash_map::Entry::Vacant(slot) = split.entry(le) {
                slot.insert(usize::MAX);
                work.push(le);
            }
        }
    }
    let mut vertices = mesh.vertices.clone();
    let mut keys: Vec<(usize, usize)> = split.keys().copied().collect();
    keys.sort();
    for k in keys {
        vertices.push(midpoint(&mesh.vertices, k.0, k.1));
        split.insert(k, vertices.len() - 1);
    }
    let mid = |a: usize, b: usize| split.get(&edge_key(a, b)).copied();
    let mut triangles = Vec::with_capacity(mesh.n_triangles() + 3 * split.len());
    let mut parent = Vec::with_capacity(triangles.capacity());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let i = longest[t];
        let (v0, v1, v2) = (tri[i], tri[(i + 1) % 3], tri[(i + 2) % 3]);
        let Some(m) = mid(v0, v1) else {
            triangles.push(*tri);
            parent.push(t as u32);
            continue;
        };
        match mid(v2, v0) {
            Some(p) => {
                triangles.push([v0, m, p]);
                triangles.push([m, v2, p]);
            }
            None => triangles.push([v0, m, v2]),
        }
        match mid(v1, v2) {
            Some(q) => {
                triangles.push([m, v1, q]);
                triangles.push([m, q, v2]);
            }
            None => triangles.push([m, v1, v2]),
        }
        while parent.len() < triangles.len() {
            parent.push(t as u32);
        }
    }
    let mut boundary_edges = Vec::with_capacity(mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        match mid(e.a, e.b) {
            Some(m) => {
                boundary_edges.push(BoundaryEdge { a: e.a, b: m, marker: e.marker });
                boundary_edges.push(BoundaryEdge { a: m, b: e.b, marker: e.marker });
            }
            None => boundary_edges.push(*e),
        }
    }
    TriMesh::from_parts(
        vertices,
        triangles,
        boundary_edges,
        mesh.level,
        mesh.child_lineage(&parent),
    )
}

/// Refines until diam(K) <= spec.target(dist(K, centers)) for every triangle.
/// Returns the input unchanged (same id) when it already satisfies the rule.
pub fn graded_refine(mesh: &TriMesh, spec: &GradingSpec) -> Result<TriMesh> {
    if !(spec.gamma > 0.0 && spec.gamma <= 1.0) || spec.h <= 0.0 || spec.h_star <= 0.0 {
        return Err(Error::DomainError(format!(
            "grading needs 0 < gamma <= 1 and positive sizes, got {spec:?}"
        )));
    }
    let mut current: Option<TriMesh> = None;
    loop {
        let m = current.as_ref().unwrap_or(mesh);
        let marked: Vec<bool> = (0..m.n_triangles())
            .map(|t| {
                let c = m.corners(t);
                let d = spec
                    .centers
                    .iter()
                    .map(|&x| point_triangle_distance(c, x))
                    .fold(f64::INFINITY, f64::min);
                m.diameter(t) > spec.target(d) * (1.0 + 1e-12)
            })
            .collect();
        let count = marked.iter().filter(|&&b| b).count();
        if count == 0 {
            break;
        }
        if m.n_triangles() + 3 * count > spec.budget {
            return Err(Error::BudgetExceeded(spec.budget));
        }
        let next = bisect_marked(m, &marked);
        if next.n_triangles() > spec.budget {
            return Err(Error::BudgetExceeded(spec.budget));
        }
        current = Some(next);
    }
    Ok(match current {
        None => mesh.clone(),
        Some(mut m) => {
            m.level = mesh.level + 1;
            m
        }
    })
}

/// Writes MSH 2.2 ASCII with 1-based tags; boundary edges become line
/// elements carrying their marker as the physical tag.
pub fn write_msh(mesh: &TriMesh, path: &Path) -> Result<()> {
    std::fs::write(path, msh_string(mesh))?;
    Ok(())
}

pub fn msh_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.n_vertices());
    for (i, v) in mesh.vertices.iter().enumerate() {
        let _ = writeln!(s, "{} {:e} {:e} 0", i + 1, v[0], v[1]);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(s, "{}", mesh.boundary_edges.len() + mesh.n_triangles());
    let mut id = 1;
    for e in &mesh.boundary_edges {
        let _ = writeln!(s, "{id} 1 2 {} {} {} {}", e.marker, e.marker, e.a + 1, e.b + 1);
        id += 1;
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "{id} 2 2 0 0 {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

pub fn read_msh(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text)
}

/// Parses MSH 2.2 ASCII. Triangles (type 2) form the mesh, lines (type 1)
/// supply boundary markers; other element types are skipped.
pub fn parse_msh(text: &str) -> Result<TriMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut last_line = 0;
    let mut next = |what: &str| -> Result<(usize, &str)> {
        loop {
            match lines.next() {
                Some((n, l)) if l.is_empty() => last_line = n,
                Some((n, l)) => {
                    last_line = n;
                    return Ok((n, l));
                }
                None => {
                    return Err(Error::ParseError {
                        line: last_line + 1,
                        msg: format!("unexpected end of file, expected {what}"),
                    })
                }
            }
        }
    };
    let perr = |line: usize, msg: String| Error::ParseError { line, msg };
    let (n, l) = next("$MeshFormat")?;
    if l != "$MeshFormat" {
        return Err(perr(n, format!("expected $MeshFormat, found '{l}'")));
    }
    let (n, l) = next("format line")?;
    let parts: Vec<&str> = l.split_whitespace().collect();
    if parts.len() < 2 || !parts[0].starts_with("2.") || parts[1] != "0" {
        return Err(perr(n, format!("unsupported format line '{l}'")));
    }
    let (n, l) = next("$EndMeshFormat")?;
    if l != "$EndMeshFormat" {
        return Err(perr(n, format!("expected $EndMeshFormat, found '{l}'")));
    }
    let mut node_index: HashMap<usize, usize> = HashMap::new();
    let mut vertices: Vec<Point> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut lines_el: Vec<(usize, usize, i32, usize)> = Vec::new();
    let mut have_nodes = false;
    loop {
        let (n, l) = match next("section") {
            Ok(x) => x,
            Err(e) => {
                if have_nodes && !triangles.is_empty() {
                    break;
                }
                return Err(e);
            }
        };
        match l {
            "$Nodes" => {
                let (n, l) = next("node count")?;
                let count: usize = l
                    .parse()
                    .map_err(|_| perr(n, format!("bad node count '{l}'")))?;
                for _ in 0..count {
                    let (n, l) = next("node")?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(perr(n, format!("node line needs 4 fields: '{l}'")));
                    }
                    let id: usize = f[0].parse().map_err(|_| perr(n, "bad node id".into()))?;
                    let mut xyz = [0.0f64; 3];
                    for d in 0..3 {
                        xyz[d] = f[d + 1]
                            .parse()
                            .map_err(|_| perr(n, format!("bad coordinate '{}'", f[d + 1])))?;
                    }
                    if xyz[2].abs() > 1e-12 {
                        return Err(Error::NonPlanar(format!("node {id} has z = {}", xyz[2])));
                    }
                    if node_index.insert(id, vertices.len()).is_some() {
                        return Err(perr(n, format!("duplicate node id {id}")));
                    }
                    vertices.push([xyz[0], xyz[1]]);
                }
                let (n, l) = next("$EndNodes")?;
                if l != "$EndNodes" {
                    return Err(perr(n, format!("expected $EndNodes, found '{l}'")));
                }
                have_nodes = true;
            }
            "$Elements" => {
                let (n, l) = next("element count")?;
                let count: usize = l
                    .parse()
                    .map_err(|_| perr(n, format!("bad element count '{l}'")))?;
                for _ in 0..count {
                    let (n, l) = next("element")?;
                    let f: Vec<i64> = l
                        .split_whitespace()
                        .map(|x| x.parse::<i64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| perr(n, format!("bad element line '{l}'")))?;
                    if f.len() < 3 {
                        return Err(perr(n, "element line too short".into()));
                    }
                    let ty = f[1];
                    let ntags = f[2] as usize;
                    let nodes = &f[(3 + ntags).min(f.len())..];
                    let want = match ty {
                        1 => 2,
                        2 => 3,
                        15 => 1,
                        _ => nodes.len(),
                    };
                    if nodes.len() != want {
                        return Err(perr(n, format!("element type {ty} needs {want} nodes")));
                    }
                    let mut idx = Vec::with_capacity(want);
                    for &nd in nodes {
                        let k = node_index
                            .get(&(nd as usize))
                            .ok_or_else(|| perr(n, format!("unknown node {nd}")))?;
                        idx.push(*k);
                    }
                    let tag = if ntags > 0 { f[3] as i32 } else { 0 };
                    match ty {
                        2 => triangles.push([idx[0], idx[1], idx[2]]),
                        1 => lines_el.push((idx[0], idx[1], tag, n)),
                        _ => {}
                    }
                }
                let (n, l) = next("$EndElements")?;
                if l != "$EndElements" {
                    return Err(perr(n, format!("expected $EndElements, found '{l}'")));
                }
                if have_nodes {
                    break;
                }
            }
            other if other.starts_with("$") => {
                let end = format!("$End{}", &other[1..]);
                loop {
                    let (_, l) = next(&end)?;
                    if l == end {
                        break;
                    }
                }
            }
            _ => return Err(perr(n, format!("unexpected content '{l}'"))),
        }
    }
    if triangles.is_empty() {
        return Err(perr(last_line, "no triangles".into()));
    }
    let mut used = vec![false; vertices.len()];
    for t in &triangles {
        for &v in t {
            used[v] = true;
        }
    }
    // Drop nodes not referenced by any triangle.
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        if used[i] {
            remap[i] = kept.len();
            kept.push(*v);
        }
    }
    let triangles: Vec<[usize; 3]> = triangles
        .iter()
        .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
        .collect();
    let bedges: Vec<BoundaryEdge> = lines_el
        .iter()
        .filter(|l| remap[l.0] != usize::MAX && remap[l.1] != usize::MAX)
        .map(|l| BoundaryEdge { a: remap[l.0], b: remap[l.1], marker: l.2 })
        .collect();
    TriMesh::new(kept, triangles, bedges)
}
