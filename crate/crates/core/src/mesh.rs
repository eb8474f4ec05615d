//! Triangulated planar domains with P1 finite-element structure.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

pub type Point = [f64; 2];

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Closed segments `ab` and `cd` intersect (including touching).
fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(sub(b, a), sub(c, a));
    let d2 = cross(sub(b, a), sub(d, a));
    let d3 = cross(sub(d, c), sub(a, c));
    let d4 = cross(sub(d, c), sub(b, c));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_seg = |p: Point, q: Point, r: Point| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on_seg(a, b, c))
        || (d2 == 0.0 && on_seg(a, b, d))
        || (d3 == 0.0 && on_seg(c, d, a))
        || (d4 == 0.0 && on_seg(c, d, b))
}

/// A simple polygon, stored counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = Error;

    fn try_from(vertices: Vec<Point>) -> Result<Self> {
        Polygon::new(vertices)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidDomain(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDomain("non-finite polygon coordinate".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if a == b {
                return Err(Error::InvalidDomain(format!("repeated vertex at position {i}")));
            }
            for j in i + 1..n {
                // adjacent edges share an endpoint and are allowed to touch there
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(Error::InvalidDomain(format!(
                        "polygon is not simple: edge {i} intersects edge {j}"
                    )));
                }
            }
        }
        let poly = Polygon { vertices: vertices.clone() };
        let signed = poly.signed_area();
        if signed.abs() <= f64::EPSILON * poly.diameter().powi(2) {
            return Err(Error::InvalidDomain("polygon has zero area".into()));
        }
        if signed < 0.0 {
            vertices.reverse();
        }
        Ok(Polygon { vertices })
    }

    pub fn unit_square() -> Self {
        Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] }
    }

    /// Equilateral triangle of side 1 with base on the x-axis.
    pub fn unit_triangle() -> Self {
        Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]] }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * compensated_sum((0..n).map(|i| cross(self.vertices[i], self.vertices[(i + 1) % n])))
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(dist(*a, *b));
            }
        }
        d
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len() as f64;
        let s = self.vertices.iter().fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
        [s[0] / n, s[1] / n]
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            cross(sub(b, a), sub(c, b)) >= 0.0
        })
    }

    /// Distance from `x` to the polygon boundary.
    pub fn boundary_distance(&self, x: Point) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| point_segment_distance(x, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed containment test by winding number, with a boundary tolerance.
    pub fn contains(&self, x: Point, tol: f64) -> bool {
        if self.boundary_distance(x) <= tol {
            return true;
        }
        let n = self.vertices.len();
        let mut winding = 0i32;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if a[1] <= x[1] {
                if b[1] > x[1] && cross(sub(b, a), sub(x, a)) > 0.0 {
                    winding += 1;
                }
            } else if b[1] <= x[1] && cross(sub(b, a), sub(x, a)) < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }
}

fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((x[0] - a[0]) * ab[0] + (x[1] - a[1]) * ab[1]) / len2 } else { 0.0 };
    let t = t.clamp(0.0, 1.0);
    dist(x, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// Convex hull by the monotone chain; `None` when the points are collinear.
pub fn convex_hull(points: &[Point]) -> Option<Polygon> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return None;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() + 1);
    for pass in 0..2 {
        let start = hull.len();
        for i in 0..pts.len() {
            let pt = if pass == 0 { pts[i] } else { pts[pts.len() - 1 - i] };
            while hull.len() >= start + 2
                && cross(sub(hull[hull.len() - 1], hull[hull.len() - 2]), sub(pt, hull[hull.len() - 2])) <= 0.0
            {
                hull.pop();
            }
            hull.push(pt);
        }
        hull.pop();
    }
    Polygon::new(hull).ok()
}

/// Built-in or user-supplied polygonal domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    UnitSquare,
    UnitTriangle,
    Polygon(Polygon),
}

impl Domain {
    pub fn polygon(&self) -> Polygon {
        match self {
            Domain::UnitSquare => Polygon::unit_square(),
            Domain::UnitTriangle => Polygon::unit_triangle(),
            Domain::Polygon(p) => p.clone(),
        }
    }
}

/// Conforming triangulation with P1 basis data.
#[derive(Debug, Clone)]
pub struct Mesh {
    id: u64,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    areas: Vec<f64>,
    grad_basis: Vec<[Point; 3]>,
    dof_of_vertex: Vec<Option<usize>>,
    interior: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity. Clockwise triangles are reoriented;
    /// degenerate ones are rejected.
    pub fn from_parts(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>, boundary: Vec<bool>) -> Result<Self> {
        if boundary.len() != vertices.len() {
            return Err(Error::DimensionMismatch { expected: vertices.len(), got: boundary.len() });
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        let mut areas = Vec::with_capacity(triangles.len());
        let mut grad_basis = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let [p0, p1, p2] = tri.map(|i| vertices[i]);
            let mut area2 = cross(sub(p1, p0), sub(p2, p0));
            if area2 < 0.0 {
                tri.swap(1, 2);
                area2 = -area2;
            }
            let scale = dist(p0, p1).max(dist(p1, p2)).max(dist(p0, p2));
            if !(area2 > 1e-14 * scale * scale) {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area")));
            }
            let [p0, p1, p2] = tri.map(|i| vertices[i]);
            areas.push(0.5 * area2);
            grad_basis.push([
                [(p1[1] - p2[1]) / area2, (p2[0] - p1[0]) / area2],
                [(p2[1] - p0[1]) / area2, (p0[0] - p2[0]) / area2],
                [(p0[1] - p1[1]) / area2, (p1[0] - p0[0]) / area2],
            ]);
        }
        let mut dof_of_vertex = vec![None; vertices.len()];
        let mut interior = Vec::new();
        for (v, &b) in boundary.iter().enumerate() {
            if !b {
                dof_of_vertex[v] = Some(interior.len());
                interior.push(v);
            }
        }
        Ok(Mesh {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            vertices,
            triangles,
            boundary,
            areas,
            grad_basis,
            dof_of_vertex,
            interior,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn element_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn grad_basis(&self) -> &[[Point; 3]] {
        &self.grad_basis
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Interior vertex indices in increasing order; position = unknown index.
    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior
    }

    pub fn dof_of_vertex(&self) -> &[Option<usize>] {
        &self.dof_of_vertex
    }

    pub fn total_area(&self) -> f64 {
        compensated_sum(self.areas.iter().copied())
    }

    /// Longest edge length.
    pub fn h(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                dist(a, b).max(dist(b, c)).max(dist(a, c))
            })
            .fold(0.0, f64::max)
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Barycentric coordinates of `x` in triangle `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [p0, p1, p2] = self.triangles[t].map(|i| self.vertices[i]);
        let area2 = 2.0 * self.areas[t];
        let l1 = cross(sub(x, p0), sub(p2, p0)) / area2;
        let l2 = cross(sub(p1, p0), sub(x, p0)) / area2;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Plain-text format: `vertices N triangles M`, N lines `x y b`, M lines `i j k`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {} triangles {}", self.vertices.len(), self.triangles.len());
        for (v, b) in self.vertices.iter().zip(&self.boundary) {
            let _ = writeln!(s, "{:?} {:?} {}", v[0], v[1], u8::from(*b));
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 0, msg: "empty mesh file".into() })?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::Parse { line: hl, msg: "expected `vertices N triangles M`".into() };
        if tok.len() != 4 || tok[0] != "vertices" || tok[2] != "triangles" {
            return Err(bad_header());
        }
        let nv: usize = tok[1].parse().map_err(|_| bad_header())?;
        let nt: usize = tok[3].parse().map_err(|_| bad_header())?;
        let mut vertices = Vec::with_capacity(nv);
        let mut boundary = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or(Error::Parse { line: hl, msg: "missing vertex lines".into() })?;
            let f: Vec<&str> = l.split_whitespace().collect();
            let perr = |m: &str| Error::Parse { line: ln, msg: m.to_string() };
            if f.len() != 3 {
                return Err(perr("expected `x y b`"));
            }
            let x: f64 = f[0].parse().map_err(|_| perr("bad x"))?;
            let y: f64 = f[1].parse().map_err(|_| perr("bad y"))?;
            let b = match f[2] {
                "0" => false,
                "1" => true,
                _ => return Err(perr("boundary flag must be 0 or 1")),
            };
            vertices.push([x, y]);
            boundary.push(b);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or(Error::Parse { line: hl, msg: "missing triangle lines".into() })?;
            let idx: std::result::Result<Vec<usize>, _> = l.split_whitespace().map(str::parse).collect();
            match idx {
                Ok(v) if v.len() == 3 => triangles.push([v[0], v[1], v[2]]),
                _ => return Err(Error::Parse { line: ln, msg: "expected `i j k`".into() }),
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse { line: ln, msg: "trailing content".into() });
        }
        Mesh::from_parts(vertices, triangles, boundary)
    }
}

/// Structured triangulation of a built-in or affine-image domain.
///
/// Triangles (any three vertices) are split into the `resolution²` sub-triangles
/// of the uniform lattice; parallelograms into a `resolution × resolution`
/// grid with each cell cut along its shorter diagonal.
pub fn build_uniform_mesh(domain: &Domain, resolution: usize) -> Result<Mesh> {
    if resolution < 2 {
        return Err(Error::InvalidDomain(format!("resolution must be at least 2, got {resolution}")));
    }
    let poly = match domain {
        Domain::Polygon(p) => Polygon::new(p.vertices.clone())?,
        other => other.polygon(),
    };
    let vs = poly.vertices();
    let n = resolution;
    let nf = n as f64;
    let (vertices, triangles) = match vs.len() {
        3 => {
            let (a, e1, e2) = (vs[0], sub(vs[1], vs[0]), sub(vs[2], vs[0]));
            let mut index = vec![vec![0usize; n + 1]; n + 1];
            let mut vertices = Vec::with_capacity((n + 1) * (n + 2) / 2);
            for j in 0..=n {
                for i in 0..=(n - j) {
                    index[j][i] = vertices.len();
                    let (s, t) = (i as f64 / nf, j as f64 / nf);
                    vertices.push([a[0] + s * e1[0] + t * e2[0], a[1] + s * e1[1] + t * e2[1]]);
                }
            }
            let mut triangles = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..(n - j) {
                    triangles.push([index[j][i], index[j][i + 1], index[j + 1][i]]);
                    if i + j + 2 <= n {
                        triangles.push([index[j][i + 1], index[j + 1][i + 1], index[j + 1][i]]);
                    }
                }
            }
            (vertices, triangles)
        }
        4 if {
            let s = [vs[0][0] + vs[2][0] - vs[1][0] - vs[3][0], vs[0][1] + vs[2][1] - vs[1][1] - vs[3][1]];
            s[0].hypot(s[1]) <= 1e-12 * poly.diameter()
        } =>
        {
            let (a, e1, e2) = (vs[0], sub(vs[1], vs[0]), sub(vs[3], vs[0]));
            let main = (e1[0] + e2[0]).hypot(e1[1] + e2[1]);
            let anti = (e1[0] - e2[0]).hypot(e1[1] - e2[1]);
            let idx = |i: usize, j: usize| j * (n + 1) + i;
            let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
            for j in 0..=n {
                for i in 0..=n {
                    let (s, t) = (i as f64 / nf, j as f64 / nf);
                    vertices.push([a[0] + s * e1[0] + t * e2[0], a[1] + s * e1[1] + t * e2[1]]);
                }
            }
            let mut triangles = Vec::with_capacity(2 * n * n);
            for j in 0..n {
                for i in 0..n {
                    let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                    if main <= anti {
                        triangles.push([v00, v10, v11]);
                        triangles.push([v00, v11, v01]);
                    } else {
                        triangles.push([v00, v10, v01]);
                        triangles.push([v10, v11, v01]);
                    }
                }
            }
            (vertices, triangles)
        }
        k => {
            return Err(Error::InvalidDomain(format!(
                "structured meshing supports triangles and parallelograms, got a {k}-gon; use the mesh file format"
            )))
        }
    };
    let tol = 1e-12 * poly.diameter();
    let boundary = vertices.iter().map(|&v| poly.boundary_distance(v) <= tol).collect();
    Mesh::from_parts(vertices, triangles, boundary)
}

/// Per-vertex coefficients of a P1 function on a specific mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    pub coeffs: Vec<f64>,
    mesh_id: u64,
}

impl FeFunction {
    pub fn new(mesh: &Mesh, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), got: coeffs.len() });
        }
        Ok(FeFunction { coeffs, mesh_id: mesh.id() })
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        FeFunction { coeffs: vec![0.0; mesh.num_vertices()], mesh_id: mesh.id() }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        FeFunction { coeffs: mesh.vertices().iter().map(|&v| f(v)).collect(), mesh_id: mesh.id() }
    }

    /// Rebuilds a function from interior unknowns, zero on the boundary.
    pub fn from_interior(mesh: &Mesh, dofs: &[f64]) -> Self {
        let mut coeffs = vec![0.0; mesh.num_vertices()];
        for (&v, &x) in mesh.interior_vertices().iter().zip(dofs) {
            coeffs[v] = x;
        }
        FeFunction { coeffs, mesh_id: mesh.id() }
    }

    pub fn interior_values(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.interior_vertices().iter().map(|&v| self.coeffs[v]).collect()
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.coeffs.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), got: self.coeffs.len() });
        }
        if self.mesh_id != mesh.id() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        FeFunction { coeffs: self.coeffs.iter().map(|x| c * x).collect(), mesh_id: self.mesh_id }
    }

    /// True when every boundary coefficient is zero.
    pub fn vanishes_on_boundary(&self, mesh: &Mesh) -> bool {
        self.coeffs.iter().zip(mesh.boundary_mask()).all(|(x, &b)| !b || *x == 0.0)
    }
}

pub(crate) fn element_gradient(mesh: &Mesh, t: usize, coeffs: &[f64]) -> Point {
    let g = &mesh.grad_basis[t];
    let tri = &mesh.triangles[t];
    let mut out = [0.0; 2];
    for k in 0..3 {
        let c = coeffs[tri[k]];
        out[0] += c * g[k][0];
        out[1] += c * g[k][1];
    }
    out
}

/// Constant gradient of the P1 function on each triangle.
pub fn gradient(mesh: &Mesh, u: &FeFunction) -> Result<Vec<Point>> {
    u.check(mesh)?;
    Ok((0..mesh.num_triangles()).map(|t| element_gradient(mesh, t, &u.coeffs)).collect())
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParams(format!("p must satisfy 1 < p <= 2, got {p}")));
    }
    Ok(())
}

/// `Σ_T area(T) |∇u|_T|^p`.
pub fn dirichlet_energy(mesh: &Mesh, u: &FeFunction, p: f64) -> Result<f64> {
    check_p(p)?;
    u.check(mesh)?;
    Ok(compensated_sum((0..mesh.num_triangles()).map(|t| {
        let g = element_gradient(mesh, t, &u.coeffs);
        mesh.areas[t] * g[0].hypot(g[1]).powf(p)
    })))
}

/// Bucket grid over triangle bounding boxes for point location.
#[derive(Debug, Clone)]
pub struct PointLocator {
    lo: Point,
    cell: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let side = ((mesh.num_triangles() as f64).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (side, side);
        let cell = [((hi[0] - lo[0]) / nx as f64).max(f64::MIN_POSITIVE), ((hi[1] - lo[1]) / ny as f64).max(f64::MIN_POSITIVE)];
        let mut buckets = vec![Vec::new(); nx * ny];
        let clamp = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let pts = tri.map(|i| mesh.vertices[i]);
            let (mut tlo, mut thi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for q in pts {
                for k in 0..2 {
                    tlo[k] = tlo[k].min(q[k]);
                    thi[k] = thi[k].max(q[k]);
                }
            }
            let (i0, i1) = (clamp((tlo[0] - lo[0]) / cell[0], nx), clamp((thi[0] - lo[0]) / cell[0], nx));
            let (j0, j1) = (clamp((tlo[1] - lo[1]) / cell[1], ny), clamp((thi[1] - lo[1]) / cell[1], ny));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        PointLocator { lo, cell, nx, ny, buckets }
    }

    /// Triangle containing `x` (closed, with slack `1e-10` in barycentric units)
    /// and the barycentric coordinates of `x` in it.
    pub fn locate(&self, mesh: &Mesh, x: Point) -> Option<(usize, [f64; 3])> {
        let fi = (x[0] - self.lo[0]) / self.cell[0];
        let fj = (x[1] - self.lo[1]) / self.cell[1];
        let slack = 1e-9;
        if fi < -slack || fj < -slack || fi > self.nx as f64 + slack || fj > self.ny as f64 + slack {
            return None;
        }
        let i = (fi.max(0.0) as usize).min(self.nx - 1);
        let j = (fj.max(0.0) as usize).min(self.ny - 1);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let b = mesh.barycentric(t, x);
            let m = b[0].min(b[1]).min(b[2]);
            if best.as_ref().is_none_or(|(_, _, bm)| m > *bm) {
                best = Some((t, b, m));
            }
        }
        match best {
            Some((t, b, m)) if m >= -1e-10 => {
                let b = b.map(|v| v.max(0.0));
                let s = b[0] + b[1] + b[2];
                Some((t, b.map(|v| v / s)))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_grid() {
        let pts: Vec<Point> = (0..5).flat_map(|i| (0..4).map(move |j| [i as f64, j as f64])).collect();
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.vertices().len(), 4);
        assert!((h.area() - 12.0).abs() < 1e-12);
        assert!(convex_hull(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_none());
    }

    #[test]
    fn square_res2_counts() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 2).unwrap();
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.num_triangles(), 8);
        assert!((m.h() - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(m.interior_vertices(), &[4]);
    }

    #[test]
    fn square_counts_and_area() {
        for n in [3usize, 7, 16] {
            let m = build_uniform_mesh(&Domain::UnitSquare, n).unwrap();
            assert_eq!(m.num_vertices(), (n + 1) * (n + 1));
            assert_eq!(m.num_triangles(), 2 * n * n);
            assert_eq!(m.boundary_mask().iter().filter(|b| **b).count(), 4 * n);
        }
        let m = build_uniform_mesh(&Domain::UnitSquare, 64).unwrap();
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_mesh_area_and_h() {
        let m = build_uniform_mesh(&Domain::UnitTriangle, 10).unwrap();
        assert_eq!(m.num_triangles(), 100);
        assert_eq!(m.num_vertices(), 66);
        assert!((m.total_area() - 3f64.sqrt() / 4.0).abs() < 1e-12);
        assert!(m.h() <= 1.0 / 10.0 + 1e-15);
        assert_eq!(m.boundary_mask().iter().filter(|b| **b).count(), 30);
    }

    #[test]
    fn parallelogram_uses_short_diagonal() {
        let p = Polygon::new(vec![[0.0, 0.0], [2.0, 0.0], [3.0, 1.0], [1.0, 1.0]]).unwrap();
        let d = Domain::Polygon(p.clone());
        let m = build_uniform_mesh(&d, 8).unwrap();
        assert!((m.total_area() - 2.0).abs() < 1e-12);
        assert!(m.h() <= p.diameter() / 8.0 + 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_uniform_mesh(&Domain::UnitSquare, 1).is_err());
        let bowtie = Polygon::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(bowtie, Err(Error::InvalidDomain(_))));
        let pent = Polygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.5, 0.8], [0.5, 1.4], [-0.5, 0.8]]).unwrap();
        assert!(build_uniform_mesh(&Domain::Polygon(pent), 4).is_err());
    }

    #[test]
    fn grad_basis_rows_sum_to_zero() {
        let m = build_uniform_mesh(&Domain::UnitTriangle, 7).unwrap();
        for g in m.grad_basis() {
            assert!((g[0][0] + g[1][0] + g[2][0]).abs() < 1e-12);
            assert!((g[0][1] + g[1][1] + g[2][1]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_affine_functions() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 6).unwrap();
        let one = FeFunction::interpolate(&m, |_| 1.0);
        assert!(gradient(&m, &one).unwrap().iter().all(|g| g[0].abs() < 1e-12 && g[1].abs() < 1e-12));
        let x = FeFunction::interpolate(&m, |p| p[0]);
        assert!(gradient(&m, &x).unwrap().iter().all(|g| (g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12));
        let l = FeFunction::interpolate(&m, |p| 3.0 * p[0] + 2.0 * p[1]);
        assert!(gradient(&m, &l).unwrap().iter().all(|g| (g[0] - 3.0).abs() < 1e-12 && (g[1] - 2.0).abs() < 1e-12));
    }

    #[test]
    fn gradient_length_mismatch() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 4).unwrap();
        let other = build_uniform_mesh(&Domain::UnitSquare, 4).unwrap();
        let u = FeFunction::zeros(&other);
        assert!(matches!(gradient(&m, &u), Err(Error::MeshMismatch)));
        assert!(FeFunction::new(&m, vec![0.0; 3]).is_err());
    }

    #[test]
    fn energy_examples() {
        let m = build_uniform_mesh(&Domain::UnitSquare, 8).unwrap();
        assert_eq!(dirichlet_energy(&m, &FeFunction::zeros(&m), 1.7).unwrap(), 0.0);
        let x = FeFunction::interpolate(&m, |p| p[0]);
        assert!((dirichlet_energy(&m, &x, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((dirichlet_energy(&m, &x, 1.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(dirichlet_energy(&m, &x, 2.5).is_err());
        assert!(dirichlet_energy(&m, &x, 1.0).is_err());
    }

    #[test]
    fn mesh_text_roundtrip() {
        let m = build_uniform_mesh(&Domain::UnitTriangle, 5).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.boundary_mask(), m.boundary_mask());
        assert!(Mesh::from_text("vertices 1 triangles 0\n0 0 2\n").is_err());
    }

    #[test]
    fn locator_finds_points() {
        let m = build_uniform_mesh(&Domain::UnitTriangle, 9).unwrap();
        let loc = PointLocator::new(&m);
        for t in 0..m.num_triangles() {
            let c = m.barycenter(t);
            let (found, b) = loc.locate(&m, c).unwrap();
            assert_eq!(found, t);
            assert!(b.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-9));
        }
        assert!(loc.locate(&m, [0.0, 0.9]).is_none());
        assert!(loc.locate(&m, [0.5, 3f64.sqrt() / 2.0]).is_some());
    }
}
