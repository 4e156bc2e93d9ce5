//! Conforming triangulations of planar domains.
//!
//! The computational domain is always the polygon spanned by the mesh; for
//! the ellipse generator that polygon is inscribed in the ellipse.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::fmt::Write as _;

use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation as _};
use thiserror::Error;

pub type Point = [f64; 2];

/// Smallest interior angle tolerated by [`build_ellipse_mesh`], in degrees.
pub const MIN_ANGLE_DEGREES: f64 = 20.0;

// Lattice spacing and boundary clearance relative to the target edge; these
// keep the generated meshes within 1.5 target edges and above 20 degrees.
const LATTICE_SCALE: f64 = 0.85;
const BOUNDARY_CLEARANCE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid ellipse dimensions: {0}")]
    InvalidDimensions(String),
    #[error("face {face} is degenerate (zero area)")]
    DegenerateFace { face: usize },
    #[error("face {face} references vertex {vertex} out of range")]
    VertexOutOfRange { face: usize, vertex: usize },
    #[error("face {face} repeats a vertex")]
    RepeatedVertex { face: usize },
    #[error("edge ({0}, {1}) is shared by more than two faces")]
    NonManifoldEdge(usize, usize),
    #[error("vertex {0} belongs to no face")]
    IsolatedVertex(usize),
    #[error("mesh is not connected")]
    Disconnected,
    #[error("vertex index {index} out of range for {count} vertices")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("mesh generation failed: {0}")]
    Generation(String),
    #[error("mesh file parse error: {0}")]
    Parse(String),
}

/// A conforming planar triangulation with counterclockwise faces.
#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<Point>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_faces: Vec<Vec<usize>>,
    face_edges: Vec<[usize; 3]>,
    is_boundary: Vec<bool>,
    boundary_vertices: Vec<usize>,
    interior_vertices: Vec<usize>,
    unknown_index: Vec<Option<usize>>,
    face_areas: Vec<f64>,
    vertex_adjacency: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    face_adjacency: Vec<Vec<usize>>,
    boundary_segments: Vec<[usize; 2]>,
}

/// Geometric summary of a mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    pub vertex_count: usize,
    pub edge_count: usize,
    pub face_count: usize,
    pub min_angle_degrees: f64,
    pub max_edge: f64,
    pub mean_edge: f64,
}

impl MeshQuality {
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edge_count as i64 + self.face_count as i64
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Euclidean distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

fn face_angles(p: [Point; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, angle) in out.iter_mut().enumerate() {
        let a = p[k];
        let b = p[(k + 1) % 3];
        let c = p[(k + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        *angle = cross.abs().atan2(dot);
    }
    out
}

impl Triangulation {
    /// Builds the connectivity of a mesh from raw vertices and faces.
    ///
    /// Clockwise faces are flipped to counterclockwise order; zero-area faces,
    /// non-manifold edges, isolated vertices and disconnected meshes are
    /// rejected.
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let mut faces = faces;
        let mut face_areas = Vec::with_capacity(faces.len());
        for (f, face) in faces.iter_mut().enumerate() {
            for &v in face.iter() {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange { face: f, vertex: v });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::RepeatedVertex { face: f });
            }
            let mut area = signed_area(vertices[face[0]], vertices[face[1]], vertices[face[2]]);
            if !(area.abs() > 0.0) {
                return Err(MeshError::DegenerateFace { face: f });
            }
            if area < 0.0 {
                face.swap(1, 2);
                area = -area;
            }
            face_areas.push(area);
        }

        let mut edge_lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_faces: Vec<Vec<usize>> = Vec::new();
        let mut face_edges = Vec::with_capacity(faces.len());
        for (f, face) in faces.iter().enumerate() {
            let mut fe = [0; 3];
            for k in 0..3 {
                let a = face[(k + 1) % 3];
                let b = face[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                let e = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_faces.push(Vec::new());
                    edges.len() - 1
                });
                edge_faces[e].push(f);
                if edge_faces[e].len() > 2 {
                    return Err(MeshError::NonManifoldEdge(key.0, key.1));
                }
                // edge k is opposite local vertex k
                fe[k] = e;
            }
            face_edges.push(fe);
        }

        let mut vertex_faces = vec![Vec::new(); nv];
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                vertex_faces[v].push(f);
            }
        }
        if let Some(v) = vertex_faces.iter().position(Vec::is_empty) {
            return Err(MeshError::IsolatedVertex(v));
        }

        let mut vertex_adjacency = vec![Vec::new(); nv];
        for e in &edges {
            vertex_adjacency[e[0]].push(e[1]);
            vertex_adjacency[e[1]].push(e[0]);
        }
        for adj in &mut vertex_adjacency {
            adj.sort_unstable();
        }

        let mut face_adjacency = vec![Vec::new(); faces.len()];
        for ef in &edge_faces {
            if let [f, g] = ef[..] {
                face_adjacency[f].push(g);
                face_adjacency[g].push(f);
            }
        }
        for adj in &mut face_adjacency {
            adj.sort_unstable();
        }

        let mut is_boundary = vec![false; nv];
        let mut boundary_segments = Vec::new();
        for (f, face) in faces.iter().enumerate() {
            for k in 0..3 {
                let e = face_edges[f][k];
                if edge_faces[e].len() == 1 {
                    let a = face[(k + 1) % 3];
                    let b = face[(k + 2) % 3];
                    is_boundary[a] = true;
                    is_boundary[b] = true;
                    boundary_segments.push([a, b]);
                }
            }
        }

        let mut seen = vec![false; faces.len()];
        let mut queue = VecDeque::from([0]);
        if !faces.is_empty() {
            seen[0] = true;
        }
        while let Some(f) = queue.pop_front() {
            for &g in &face_adjacency[f] {
                if !seen[g] {
                    seen[g] = true;
                    queue.push_back(g);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(MeshError::Disconnected);
        }

        let boundary_vertices: Vec<usize> = (0..nv).filter(|&v| is_boundary[v]).collect();
        let interior_vertices: Vec<usize> = (0..nv).filter(|&v| !is_boundary[v]).collect();
        let mut unknown_index = vec![None; nv];
        for (k, &v) in interior_vertices.iter().enumerate() {
            unknown_index[v] = Some(k);
        }

        Ok(Triangulation {
            vertices,
            faces,
            edges,
            edge_faces,
            face_edges,
            is_boundary,
            boundary_vertices,
            interior_vertices,
            unknown_index,
            face_areas,
            vertex_adjacency,
            vertex_faces,
            face_adjacency,
            boundary_segments,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Faces incident to each edge (one for boundary edges, two otherwise).
    pub fn edge_faces(&self, edge: usize) -> &[usize] {
        &self.edge_faces[edge]
    }

    /// Edge indices of a face; entry `k` is the edge opposite local vertex `k`.
    pub fn face_edges(&self, face: usize) -> [usize; 3] {
        self.face_edges[face]
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.is_boundary[v]
    }

    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn interior_vertices(&self) -> &[usize] {
        &self.interior_vertices
    }

    /// Number of unknowns (interior vertices).
    pub fn unknown_count(&self) -> usize {
        self.interior_vertices.len()
    }

    /// Position of vertex `v` in the unknown vector, `None` on the boundary.
    pub fn unknown_index(&self, v: usize) -> Option<usize> {
        self.unknown_index[v]
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    pub fn vertex_neighbors(&self, v: usize) -> &[usize] {
        &self.vertex_adjacency[v]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn face_neighbors(&self, f: usize) -> &[usize] {
        &self.face_adjacency[f]
    }

    /// Boundary edges oriented so the domain lies on their left.
    pub fn boundary_segments(&self) -> &[[usize; 2]] {
        &self.boundary_segments
    }

    pub fn face_points(&self, f: usize) -> [Point; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_centroid(&self, f: usize) -> Point {
        let p = self.face_points(f);
        [
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    /// Area enclosed by the boundary loops, by the shoelace formula.
    pub fn shoelace_area(&self) -> f64 {
        self.boundary_segments
            .iter()
            .map(|&[a, b]| {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                0.5 * (p[0] * q[1] - q[0] * p[1])
            })
            .sum()
    }

    /// Expands a vector of unknowns to a full per-vertex vector with zero
    /// Dirichlet values.
    pub fn expand(&self, unknowns: &[f64]) -> Vec<f64> {
        self.unknown_index
            .iter()
            .map(|idx| idx.map_or(0.0, |k| unknowns[k]))
            .collect()
    }

    /// Restricts a per-vertex vector to the interior unknowns.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.interior_vertices.iter().map(|&v| values[v]).collect()
    }

    pub fn quality(&self) -> MeshQuality {
        let mut min_angle = f64::INFINITY;
        for f in 0..self.faces.len() {
            for a in face_angles(self.face_points(f)) {
                min_angle = min_angle.min(a);
            }
        }
        let lengths: Vec<f64> = (0..self.edges.len()).map(|e| self.edge_length(e)).collect();
        MeshQuality {
            vertex_count: self.vertices.len(),
            edge_count: self.edges.len(),
            face_count: self.faces.len(),
            min_angle_degrees: min_angle.to_degrees(),
            max_edge: lengths.iter().copied().fold(0.0, f64::max),
            mean_edge: lengths.iter().sum::<f64>() / lengths.len().max(1) as f64,
        }
    }

    /// Re-checks every structural invariant from scratch.
    pub fn audit(&self) -> Result<(), MeshError> {
        for (f, face) in self.faces.iter().enumerate() {
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::RepeatedVertex { face: f });
            }
            if signed_area(self.vertices[face[0]], self.vertices[face[1]], self.vertices[face[2]]) <= 0.0 {
                return Err(MeshError::DegenerateFace { face: f });
            }
        }
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for face in &self.faces {
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut on_boundary = vec![false; self.vertices.len()];
        for (&(a, b), &c) in &counts {
            match c {
                1 => {
                    on_boundary[a] = true;
                    on_boundary[b] = true;
                }
                2 => {}
                _ => return Err(MeshError::NonManifoldEdge(a, b)),
            }
        }
        if on_boundary != self.is_boundary {
            return Err(MeshError::Generation("boundary markers out of date".into()));
        }
        if self.interior_vertices.len() + self.boundary_vertices.len() != self.vertices.len() {
            return Err(MeshError::Generation("interior/boundary split is not a partition".into()));
        }
        if let Some(v) = self.vertex_faces.iter().position(Vec::is_empty) {
            return Err(MeshError::IsolatedVertex(v));
        }
        Ok(())
    }

    /// Plain-text node/element listing: a `V F B` header, `V` coordinate
    /// lines, `F` face triples, then `B` boundary vertex indices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.vertices.len(),
            self.faces.len(),
            self.boundary_vertices.len()
        );
        for p in &self.vertices {
            let _ = writeln!(out, "{:.16e} {:.16e}", p[0], p[1]);
        }
        for f in &self.faces {
            let _ = writeln!(out, "{} {} {}", f[0], f[1], f[2]);
        }
        for v in &self.boundary_vertices {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |m: &str| MeshError::Parse(m.to_string());
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| parse_err("missing header"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err("bad header")))
            .collect::<Result<_, _>>()?;
        let [nv, nf, nb] = header[..] else {
            return Err(parse_err("header must be `V F B`"));
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| parse_err("truncated vertex list"))?;
            let c: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err("bad coordinate")))
                .collect::<Result<_, _>>()?;
            let [x, y] = c[..] else {
                return Err(parse_err("vertex lines need two coordinates"));
            };
            vertices.push([x, y]);
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let l = lines.next().ok_or_else(|| parse_err("truncated face list"))?;
            let c: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err("bad face index")))
                .collect::<Result<_, _>>()?;
            let [a, b, d] = c[..] else {
                return Err(parse_err("face lines need three indices"));
            };
            faces.push([a, b, d]);
        }
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let l = lines.next().ok_or_else(|| parse_err("truncated boundary list"))?;
            boundary.push(l.parse::<usize>().map_err(|_| parse_err("bad boundary index"))?);
        }
        let tri = Triangulation::new(vertices, faces)?;
        if tri.boundary_vertices != boundary {
            return Err(parse_err("boundary list disagrees with mesh topology"));
        }
        Ok(tri)
    }
}

/// Exact distance from vertex `vertex_index` to the polygonal boundary.
pub fn boundary_distance(tri: &Triangulation, vertex_index: usize) -> Result<f64, MeshError> {
    let p = *tri.vertices.get(vertex_index).ok_or(MeshError::IndexOutOfRange {
        index: vertex_index,
        count: tri.vertices.len(),
    })?;
    if tri.is_boundary[vertex_index] {
        return Ok(0.0);
    }
    Ok(distance_to_boundary(tri, p))
}

fn distance_to_boundary(tri: &Triangulation, p: Point) -> f64 {
    tri.boundary_segments
        .iter()
        .map(|&[a, b]| point_segment_distance(p, tri.vertices[a], tri.vertices[b]))
        .fold(f64::INFINITY, f64::min)
}

/// Boundary distance of every vertex.
pub fn boundary_distances(tri: &Triangulation) -> Vec<f64> {
    (0..tri.vertex_count())
        .map(|v| {
            if tri.is_boundary[v] {
                0.0
            } else {
                distance_to_boundary(tri, tri.vertices[v])
            }
        })
        .collect()
}

/// Constant gradients of the three P1 hat functions on one face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGradients {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

pub fn hat_gradients(p: [Point; 3]) -> Result<FaceGradients, MeshError> {
    let area = signed_area(p[0], p[1], p[2]);
    if area.abs() <= 0.0 || !area.is_finite() {
        return Err(MeshError::DegenerateFace { face: 0 });
    }
    let inv = 1.0 / (2.0 * area);
    let mut grads = [[0.0; 2]; 3];
    for (k, g) in grads.iter_mut().enumerate() {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        *g = [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv];
    }
    Ok(FaceGradients { area: area.abs(), grads })
}

/// Hat-function gradients for every face of the mesh.
pub fn face_gradient_geometry(tri: &Triangulation) -> Result<Vec<FaceGradients>, MeshError> {
    (0..tri.face_count())
        .map(|f| hat_gradients(tri.face_points(f)).map_err(|_| MeshError::DegenerateFace { face: f }))
        .collect()
}

#[derive(Clone, Copy)]
struct IndexedPoint {
    position: Point2<f64>,
    index: usize,
}

impl HasPosition for IndexedPoint {
    type Scalar = f64;
    fn position(&self) -> Point2<f64> {
        self.position
    }
}

fn delaunay_faces(points: &[Point]) -> Result<Vec<[usize; 3]>, MeshError> {
    let mut dt: DelaunayTriangulation<IndexedPoint> = DelaunayTriangulation::new();
    for (index, p) in points.iter().enumerate() {
        dt.insert(IndexedPoint {
            position: Point2::new(p[0], p[1]),
            index,
        })
        .map_err(|e| MeshError::Generation(format!("{e:?}")))?;
    }
    if dt.num_vertices() != points.len() {
        return Err(MeshError::Generation("duplicate mesh points".into()));
    }
    Ok(dt
        .inner_faces()
        .map(|f| f.vertices().map(|v| v.data().index))
        .collect())
}

/// Points spaced uniformly in arc length along the ellipse, counterclockwise
/// from the positive x axis.
fn ellipse_boundary_points(a: f64, b: f64, spacing: f64) -> Vec<Point> {
    const SAMPLES: usize = 1 << 16;
    let mut cumulative = Vec::with_capacity(SAMPLES + 1);
    cumulative.push(0.0);
    let at = |t: f64| [a * t.cos(), b * t.sin()];
    let mut prev = at(0.0);
    for k in 1..=SAMPLES {
        let p = at(2.0 * PI * k as f64 / SAMPLES as f64);
        let last = *cumulative.last().unwrap();
        cumulative.push(last + dist(prev, p));
        prev = p;
    }
    let perimeter = cumulative[SAMPLES];
    let count = ((perimeter / spacing).ceil() as usize).max(8);
    let step = perimeter / count as f64;
    let mut points = Vec::with_capacity(count);
    let mut k = 0;
    for i in 0..count {
        let target = i as f64 * step;
        while cumulative[k + 1] < target {
            k += 1;
        }
        let frac = (target - cumulative[k]) / (cumulative[k + 1] - cumulative[k]);
        let t = 2.0 * PI * (k as f64 + frac) / SAMPLES as f64;
        points.push(at(t));
    }
    points
}

/// Triangulates the polygon inscribed in the ellipse
/// `(x/semi_major)^2 + (y/semi_minor)^2 = 1`.
///
/// Boundary vertices sit on the ellipse at uniform arc-length spacing below
/// `target_edge`; the interior is a hexagonal lattice slightly finer than
/// `target_edge`, kept away from the boundary, and the two are joined by a
/// Delaunay triangulation. Lattice points adjacent to sliver triangles are
/// removed until every angle is at least [`MIN_ANGLE_DEGREES`].
pub fn build_ellipse_mesh(
    semi_major: f64,
    semi_minor: f64,
    target_edge: f64,
) -> Result<Triangulation, MeshError> {
    if !(semi_major.is_finite() && semi_minor.is_finite() && target_edge.is_finite()) {
        return Err(MeshError::InvalidDimensions("non-finite input".into()));
    }
    if !(semi_minor > 0.0 && semi_major >= semi_minor) {
        return Err(MeshError::InvalidDimensions(format!(
            "need semi_major >= semi_minor > 0, got {semi_major} and {semi_minor}"
        )));
    }
    if !(target_edge > 0.0 && target_edge < semi_minor) {
        return Err(MeshError::InvalidDimensions(format!(
            "need 0 < target_edge < semi_minor, got {target_edge}"
        )));
    }

    let h = LATTICE_SCALE * target_edge;
    let boundary = ellipse_boundary_points(semi_major, semi_minor, h);
    let nb = boundary.len();
    let segments: Vec<[Point; 2]> = (0..nb).map(|i| [boundary[i], boundary[(i + 1) % nb]]).collect();
    let inside = |p: Point| {
        segments
            .iter()
            .all(|[a, b]| signed_area(*a, *b, p) > 0.0)
    };
    let clearance = |p: Point| {
        segments
            .iter()
            .map(|[a, b]| point_segment_distance(p, *a, *b))
            .fold(f64::INFINITY, f64::min)
    };

    let row_height = h * 3f64.sqrt() / 2.0;
    let rows = (semi_minor / row_height).ceil() as i64 + 1;
    let cols = (semi_major / h).ceil() as i64 + 1;
    let margin = BOUNDARY_CLEARANCE * h;
    let mut interior = Vec::new();
    for j in -rows..=rows {
        let y = j as f64 * row_height;
        let offset = if j.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
        for i in -cols..=cols {
            let p = [i as f64 * h + offset, y];
            let f = (p[0] / semi_major).powi(2) + (p[1] / semi_minor).powi(2);
            if f < 1.0 && inside(p) && clearance(p) >= margin {
                interior.push(p);
            }
        }
    }

    let mut removed = vec![false; interior.len()];
    for _round in 0..64 {
        let points: Vec<Point> = boundary
            .iter()
            .copied()
            .chain(interior.iter().enumerate().filter(|(k, _)| !removed[*k]).map(|(_, p)| *p))
            .collect();
        let live: Vec<usize> = (0..interior.len()).filter(|&k| !removed[k]).collect();
        let faces = delaunay_faces(&points)?;

        let mut bad = false;
        for face in &faces {
            let p = [points[face[0]], points[face[1]], points[face[2]]];
            let min_angle = face_angles(p).into_iter().fold(f64::INFINITY, f64::min);
            if min_angle.to_degrees() < MIN_ANGLE_DEGREES {
                // drop the lattice vertex of this face closest to the boundary
                let victim = face
                    .iter()
                    .filter(|&&v| v >= nb)
                    .min_by(|&&u, &&v| clearance(points[u]).total_cmp(&clearance(points[v])));
                match victim {
                    Some(&v) => {
                        removed[live[v - nb]] = true;
                        bad = true;
                    }
                    None => {
                        return Err(MeshError::Generation(
                            "sliver triangle with only boundary vertices".into(),
                        ))
                    }
                }
            }
        }
        if !bad {
            let tri = Triangulation::new(points, faces)?;
            if tri.boundary_vertices().len() != nb {
                return Err(MeshError::Generation("boundary vertices not on the hull".into()));
            }
            return Ok(tri);
        }
    }
    Err(MeshError::Generation("sliver removal did not converge".into()))
}

/// Uniform-grid point locator over the faces of a mesh.
#[derive(Debug, Clone)]
pub struct FaceLocator {
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl FaceLocator {
    pub fn new(tri: &Triangulation) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in tri.vertices() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let cell = tri.quality().mean_edge.max(1e-12);
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1);
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for f in 0..tri.face_count() {
            let p = tri.face_points(f);
            let cx = |x: f64| (((x - lo[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
            let cy = |y: f64| (((y - lo[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
            let (x0, x1) = (
                cx(p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min)),
                cx(p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max)),
            );
            let (y0, y1) = (
                cy(p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min)),
                cy(p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max)),
            );
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    buckets[iy * nx + ix].push(f);
                }
            }
        }
        FaceLocator {
            origin: lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    /// Face containing `p` and the barycentric coordinates of `p` in it.
    pub fn locate(&self, tri: &Triangulation, p: Point) -> Option<(usize, [f64; 3])> {
        let fx = (p[0] - self.origin[0]) / self.cell;
        let fy = (p[1] - self.origin[1]) / self.cell;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        if ix >= self.nx || iy >= self.ny {
            return None;
        }
        const EPS: f64 = -1e-12;
        for &f in &self.buckets[iy * self.nx + ix] {
            let q = tri.face_points(f);
            let area = signed_area(q[0], q[1], q[2]);
            let l0 = signed_area(p, q[1], q[2]) / area;
            let l1 = signed_area(q[0], p, q[2]) / area;
            let l2 = 1.0 - l0 - l1;
            if l0 >= EPS && l1 >= EPS && l2 >= EPS {
                return Some((f, [l0, l1, l2]));
            }
        }
        None
    }
}
