//! Topology of a phase field: the singular band where `sin theta` vanishes,
//! the strips between singular leaves, their induced orientations, the
//! orientation defect, gauge-equivalent reorientation, and disclinations.
//!
//! Every function here takes the phase as a full per-vertex vector, boundary
//! vertices included (see [`Triangulation::expand`]).

use std::collections::VecDeque;
use std::f64::consts::PI;

use thiserror::Error;

use crate::mesh::{face_gradient_geometry, hat_gradients, FaceLocator, MeshError, Point, Triangulation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaugeError {
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("strip {strip} has no determinate orientation")]
    UndeterminedOrientation { strip: usize },
    #[error("orientation map entries must be +1 or -1, strip {strip} has {value}")]
    InvalidSign { strip: usize, value: i8 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Default half-width, in `|sin theta|`, of the discrete singular band.
pub const DEFAULT_BAND_TOLERANCE: f64 = 0.3;

/// Share of contour votes a sign needs before a strip counts as oriented.
pub const ORIENTATION_SUPERMAJORITY: f64 = 0.9;

fn check_vertices(tri: &Triangulation, values: &[f64]) -> Result<(), GaugeError> {
    if values.len() != tri.vertex_count() {
        return Err(GaugeError::DimensionMismatch {
            expected: tri.vertex_count(),
            found: values.len(),
        });
    }
    Ok(())
}

/// Nearest multiple of pi.
pub fn snap_to_pi(x: f64) -> f64 {
    PI * (x / PI).round()
}

/// Per-face gradient of a per-vertex field.
pub fn vertex_field_gradients(tri: &Triangulation, values: &[f64]) -> Result<Vec<[f64; 2]>, GaugeError> {
    check_vertices(tri, values)?;
    let geometry = face_gradient_geometry(tri)?;
    Ok(tri
        .faces()
        .iter()
        .zip(&geometry)
        .map(|(face, g)| {
            let mut out = [0.0; 2];
            for k in 0..3 {
                out[0] += values[face[k]] * g.grads[k][0];
                out[1] += values[face[k]] * g.grads[k][1];
            }
            out
        })
        .collect())
}

/// Faces forming the thickened zero set of `sin theta`.
///
/// A face is in the band when one of its vertices has `|sin theta| < tol`,
/// or when `theta` passes through a multiple of pi inside the face.
pub fn singular_band(tri: &Triangulation, theta: &[f64], tol: f64) -> Result<Vec<bool>, GaugeError> {
    check_vertices(tri, theta)?;
    Ok(tri
        .faces()
        .iter()
        .map(|face| {
            if tol >= 1.0 {
                return true;
            }
            let vals = face.map(|v| theta[v]);
            let near = vals.iter().any(|t| t.sin().abs() < tol);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            near || (lo / PI).floor() != (hi / PI).floor() || (lo / PI).fract() == 0.0
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strip {
    pub face_count: usize,
    /// Lower singular value, a multiple of pi.
    pub theta_minus: f64,
    /// `theta_minus + pi`.
    pub theta_plus: f64,
    /// Induced orientation, 0 when the mid-level contour is open or the vote
    /// is inconclusive.
    pub orientation: i8,
    /// Longest closed loop of the mid-level contour, counterclockwise.
    pub contour: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripDecomposition {
    /// Strip index per face, -1 on the singular band.
    pub labels: Vec<i64>,
    pub strips: Vec<Strip>,
}

impl StripDecomposition {
    pub fn strip_count(&self) -> usize {
        self.strips.len()
    }

    pub fn orientations(&self) -> Vec<i8> {
        self.strips.iter().map(|s| s.orientation).collect()
    }

    pub fn faces_of(&self, strip: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == strip as i64)
            .map(|(f, _)| f)
    }
}

/// Edge-connected components of the faces outside the singular band.
pub fn decompose_strips(tri: &Triangulation, theta: &[f64], tol: f64) -> Result<StripDecomposition, GaugeError> {
    let band = singular_band(tri, theta, tol)?;
    let nf = tri.face_count();
    let mut labels = vec![-1i64; nf];
    let mut strips = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..nf {
        if band[seed] || labels[seed] >= 0 {
            continue;
        }
        let id = strips.len() as i64;
        labels[seed] = id;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(f) = queue.pop_front() {
            members.push(f);
            for &g in tri.face_neighbors(f) {
                if !band[g] && labels[g] < 0 {
                    labels[g] = id;
                    queue.push_back(g);
                }
            }
        }
        // every strip face lies between the same pair of singular values, the
        // majority guards against round-off at the edges of the range
        let mut counts: Vec<(i64, usize)> = Vec::new();
        for &f in &members {
            let c = tri.faces()[f].iter().map(|&v| theta[v]).sum::<f64>() / 3.0;
            let j = (c / PI).floor() as i64;
            match counts.iter_mut().find(|(k, _)| *k == j) {
                Some(entry) => entry.1 += 1,
                None => counts.push((j, 1)),
            }
        }
        let j = counts.iter().max_by_key(|(k, n)| (*n, -*k)).map(|(k, _)| *k).unwrap_or(0);
        strips.push(Strip {
            face_count: members.len(),
            theta_minus: j as f64 * PI,
            theta_plus: (j + 1) as f64 * PI,
            orientation: 0,
            contour: Vec::new(),
        });
    }
    let mut out = StripDecomposition { labels, strips };
    let traced = trace_contours(tri, theta, &out)?;
    let grads = vertex_field_gradients(tri, theta)?;
    for (strip, contour) in out.strips.iter_mut().zip(traced) {
        strip.orientation = vote(&contour, &grads);
        strip.contour = contour
            .loops
            .iter()
            .max_by(|a, b| loop_length(a).total_cmp(&loop_length(b)))
            .map(|l| {
                let mut pts: Vec<Point> = l.iter().map(|s| s.1).collect();
                if let Some(first) = l.first() {
                    pts.insert(0, first.0);
                }
                pts
            })
            .unwrap_or_default();
    }
    Ok(out)
}

/// A mid-level segment `(start, end, face)`.
type Segment = (Point, Point, usize);

#[derive(Debug, Default)]
struct StripContour {
    loops: Vec<Vec<Segment>>,
    open: bool,
}

fn loop_length(l: &[Segment]) -> f64 {
    l.iter().map(|(a, b, _)| (b[0] - a[0]).hypot(b[1] - a[1])).sum()
}

fn trace_contours(
    tri: &Triangulation,
    theta: &[f64],
    strips: &StripDecomposition,
) -> Result<Vec<StripContour>, GaugeError> {
    let nf = tri.face_count();
    let verts = tri.vertices();
    let mut out: Vec<StripContour> = (0..strips.strip_count()).map(|_| StripContour::default()).collect();

    // crossing edges of each strip face at its strip's mid level
    let mut face_cut: Vec<Option<[usize; 2]>> = vec![None; nf];
    let level_of = |f: usize| -> Option<f64> {
        let l = strips.labels[f];
        (l >= 0).then(|| strips.strips[l as usize].theta_minus + PI / 2.0)
    };
    for f in 0..nf {
        let Some(level) = level_of(f) else { continue };
        let cut: Vec<usize> = tri
            .face_edges(f)
            .into_iter()
            .filter(|&e| {
                let [a, b] = tri.edges()[e];
                (theta[a] >= level) != (theta[b] >= level)
            })
            .collect();
        if cut.len() == 2 {
            face_cut[f] = Some([cut[0], cut[1]]);
        }
    }
    let crossing = |e: usize, level: f64| -> Point {
        let [a, b] = tri.edges()[e];
        let t = (level - theta[a]) / (theta[b] - theta[a]);
        let (p, q) = (verts[a], verts[b]);
        [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
    };

    let mut visited = vec![false; nf];
    for start in 0..nf {
        let Some([e_first, e_second]) = face_cut[start] else { continue };
        if visited[start] {
            continue;
        }
        let label = strips.labels[start];
        let level = level_of(start).unwrap_or(0.0);
        let mut segments: Vec<Segment> = Vec::new();
        let mut face = start;
        let mut entry = e_first;
        let mut exit = e_second;
        let closed = loop {
            visited[face] = true;
            segments.push((crossing(entry, level), crossing(exit, level), face));
            let next = tri
                .edge_faces(exit)
                .iter()
                .copied()
                .find(|&g| g != face && strips.labels[g] == label && face_cut[g].is_some());
            let Some(next) = next else { break false };
            if next == start {
                break true;
            }
            if visited[next] {
                break false;
            }
            let [c0, c1] = face_cut[next].unwrap_or([exit, exit]);
            entry = exit;
            exit = if c0 == entry { c1 } else { c0 };
            face = next;
        };
        let slot = &mut out[label as usize];
        if closed {
            let area: f64 = segments
                .iter()
                .map(|(a, b, _)| a[0] * b[1] - b[0] * a[1])
                .sum();
            if area < 0.0 {
                segments.reverse();
                for s in segments.iter_mut() {
                    std::mem::swap(&mut s.0, &mut s.1);
                }
            }
            slot.loops.push(segments);
        } else {
            slot.open = true;
        }
    }
    Ok(out)
}

fn vote(contour: &StripContour, grads: &[[f64; 2]]) -> i8 {
    if contour.open || contour.loops.is_empty() {
        return 0;
    }
    let (mut plus, mut minus) = (0usize, 0usize);
    for (a, b, f) in contour.loops.iter().flatten() {
        // left normal of a counterclockwise tangent points inside
        let n = [a[1] - b[1], b[0] - a[0]];
        let s = n[0] * grads[*f][0] + n[1] * grads[*f][1];
        if s > 0.0 {
            plus += 1;
        } else if s < 0.0 {
            minus += 1;
        }
    }
    let total = (plus + minus) as f64;
    if total == 0.0 {
        0
    } else if plus as f64 >= ORIENTATION_SUPERMAJORITY * total {
        1
    } else if minus as f64 >= ORIENTATION_SUPERMAJORITY * total {
        -1
    } else {
        0
    }
}

/// Induced orientation of every strip, recomputed from `theta`.
pub fn strip_orientation(
    tri: &Triangulation,
    theta: &[f64],
    strips: &StripDecomposition,
) -> Result<Vec<i8>, GaugeError> {
    check_vertices(tri, theta)?;
    let grads = vertex_field_gradients(tri, theta)?;
    Ok(trace_contours(tri, theta, strips)?
        .iter()
        .map(|c| vote(c, &grads))
        .collect())
}

/// Extends strip orientations into the band by breadth-first search from the
/// oriented faces, nearest strip first.
pub fn extended_orientation(tri: &Triangulation, strips: &StripDecomposition) -> Vec<i8> {
    let nf = tri.face_count();
    let mut field = vec![0i8; nf];
    let mut queue = VecDeque::new();
    for f in 0..nf {
        let l = strips.labels[f];
        if l >= 0 && strips.strips[l as usize].orientation != 0 {
            field[f] = strips.strips[l as usize].orientation;
            queue.push_back(f);
        }
    }
    while let Some(f) = queue.pop_front() {
        for &g in tri.face_neighbors(f) {
            if field[g] == 0 && strips.labels[g] < 0 {
                field[g] = field[f];
                queue.push_back(g);
            }
        }
    }
    field
}

/// Discrete orientation defect, half the total variation of the orientation
/// field.
///
/// The extended face orientations are averaged onto vertices and the total
/// variation of the piecewise-linear interpolant is taken. By the coarea
/// formula this is an average of level-curve lengths, which cut across face
/// corners instead of following the mesh-edge staircase.
pub fn orientation_defect(strips: &StripDecomposition, tri: &Triangulation) -> f64 {
    let field = extended_orientation(tri, strips);
    let mut sum = vec![0.0; tri.vertex_count()];
    let mut count = vec![0usize; tri.vertex_count()];
    for (f, face) in tri.faces().iter().enumerate() {
        if field[f] != 0 {
            for &v in face {
                sum[v] += f64::from(field[f]);
                count[v] += 1;
            }
        }
    }
    let o: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let tv: f64 = tri
        .faces()
        .iter()
        .enumerate()
        .filter(|(_, face)| !(o[face[0]] == o[face[1]] && o[face[1]] == o[face[2]]))
        .filter_map(|(f, face)| {
            let g = hat_gradients(tri.face_points(f)).ok()?;
            let d = (0..3).fold([0.0, 0.0], |acc, k| {
                [acc[0] + o[face[k]] * g.grads[k][0], acc[1] + o[face[k]] * g.grads[k][1]]
            });
            Some(g.area * d[0].hypot(d[1]))
        })
        .fold(0.0, |acc, x| acc + x);
    0.5 * tv
}

/// `arccos(cos theta)` componentwise.
pub fn canonical_representative(theta: &[f64]) -> Vec<f64> {
    theta.iter().map(|t| t.cos().clamp(-1.0, 1.0).acos()).collect()
}

/// Gauge-equivalent phase whose strip `i` carries orientation `eps_map[i]`.
///
/// Each strip contributes a potential equal to `theta` on its own vertices and
/// to the singular value of the matching side elsewhere; the potentials are
/// summed with signs `eps(i) gamma(i)` and shifted by a multiple of pi so the
/// result matches `+-theta` on the boundary.
pub fn reorient(
    tri: &Triangulation,
    theta: &[f64],
    strips: &StripDecomposition,
    eps_map: &[i8],
) -> Result<Vec<f64>, GaugeError> {
    check_vertices(tri, theta)?;
    if eps_map.len() != strips.strip_count() {
        return Err(GaugeError::DimensionMismatch {
            expected: strips.strip_count(),
            found: eps_map.len(),
        });
    }
    for (i, s) in strips.strips.iter().enumerate() {
        if s.orientation == 0 {
            return Err(GaugeError::UndeterminedOrientation { strip: i });
        }
        if eps_map[i].abs() != 1 {
            return Err(GaugeError::InvalidSign { strip: i, value: eps_map[i] });
        }
    }
    let nv = tri.vertex_count();
    let sign: Vec<f64> = strips
        .strips
        .iter()
        .zip(eps_map)
        .map(|(s, &e)| (e * s.orientation) as f64)
        .collect();

    // vertex ownership, ties to the strip whose range holds theta most centrally
    let mut owner: Vec<Option<usize>> = vec![None; nv];
    for (f, face) in tri.faces().iter().enumerate() {
        let l = strips.labels[f];
        if l < 0 {
            continue;
        }
        let l = l as usize;
        for &v in face {
            let depth = |s: usize| {
                let st = &strips.strips[s];
                (theta[v] - st.theta_minus).min(st.theta_plus - theta[v])
            };
            owner[v] = match owner[v] {
                Some(o) if o != l && depth(o) >= depth(l) => Some(o),
                _ => Some(l),
            };
        }
    }

    let mut raw = vec![0.0; nv];
    let mut component = vec![usize::MAX; nv];
    let mut stack = Vec::new();
    for (i, strip) in strips.strips.iter().enumerate() {
        component.iter_mut().for_each(|c| *c = usize::MAX);
        let mut side_values = Vec::new();
        for seed in 0..nv {
            if owner[seed] == Some(i) || component[seed] != usize::MAX {
                continue;
            }
            let id = side_values.len();
            component[seed] = id;
            stack.push(seed);
            let (mut sum, mut count) = (0.0, 0usize);
            while let Some(v) = stack.pop() {
                let mut touches = false;
                for &w in tri.vertex_neighbors(v) {
                    if owner[w] == Some(i) {
                        touches = true;
                    } else if component[w] == usize::MAX {
                        component[w] = id;
                        stack.push(w);
                    }
                }
                if touches {
                    sum += theta[v];
                    count += 1;
                }
            }
            let mean = if count > 0 { sum / count as f64 } else { strip.theta_minus };
            let value = if (mean - strip.theta_plus).abs() < (mean - strip.theta_minus).abs() {
                strip.theta_plus
            } else {
                strip.theta_minus
            };
            side_values.push(value);
        }
        for v in 0..nv {
            raw[v] += sign[i]
                * if owner[v] == Some(i) {
                    theta[v]
                } else {
                    side_values[component[v]]
                };
        }
    }

    // band-only vertices follow the sign of the nearest owned vertex
    let mut local_sign: Vec<f64> = owner.iter().map(|o| o.map_or(0.0, |i| sign[i])).collect();
    let mut queue: VecDeque<usize> = (0..nv).filter(|&v| owner[v].is_some()).collect();
    while let Some(v) = queue.pop_front() {
        for &w in tri.vertex_neighbors(v) {
            if local_sign[w] == 0.0 {
                local_sign[w] = local_sign[v];
                queue.push_back(w);
            }
        }
    }
    for v in 0..nv {
        if local_sign[v] == 0.0 {
            local_sign[v] = 1.0;
        }
        if owner[v].is_none() {
            raw[v] += local_sign[v] * (theta[v] - snap_to_pi(theta[v]));
        }
    }

    let boundary = tri.boundary_vertices();
    let offset = if boundary.is_empty() {
        0.0
    } else {
        boundary
            .iter()
            .map(|&v| raw[v] - local_sign[v] * theta[v])
            .sum::<f64>()
            / boundary.len() as f64
    };
    let c0 = snap_to_pi(offset);
    Ok(raw.into_iter().map(|r| r - c0).collect())
}

/// Net rotation of the line field spanned by `grads` along a circle, with
/// increments taken modulo pi.
///
/// Samples where `|grad| < min_gradient` carry no direction and are skipped.
/// `None` when the circle leaves the mesh, fewer than half of the samples
/// survive, or two consecutive directions differ by nearly a right angle.
pub fn line_field_winding(
    tri: &Triangulation,
    locator: &FaceLocator,
    grads: &[[f64; 2]],
    center: Point,
    radius: f64,
    samples: usize,
    min_gradient: f64,
) -> Option<f64> {
    let mut angles = Vec::with_capacity(samples);
    for k in 0..samples {
        let phi = 2.0 * PI * k as f64 / samples as f64;
        let p = [center[0] + radius * phi.cos(), center[1] + radius * phi.sin()];
        let (f, _) = locator.locate(tri, p)?;
        let g = grads[f];
        if g[0].hypot(g[1]) >= min_gradient.max(1e-12) {
            angles.push(g[1].atan2(g[0]));
        }
    }
    if angles.len() < 3 || 2 * angles.len() < samples {
        return None;
    }
    let mut total = 0.0;
    for k in 0..angles.len() {
        let mut d = angles[(k + 1) % angles.len()] - angles[k];
        d -= PI * (d / PI).round();
        if d <= -PI / 2.0 {
            d += PI;
        }
        if d.abs() > 0.4 * PI {
            return None;
        }
        total += d;
    }
    Some(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisclinationKind {
    /// Degree +1/2.
    Convex,
    /// Degree -1/2.
    Concave,
}

impl DisclinationKind {
    pub fn token(self) -> &'static str {
        match self {
            DisclinationKind::Convex => "convex",
            DisclinationKind::Concave => "concave",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Disclination {
    pub position: Point,
    pub kind: DisclinationKind,
    pub cluster_size: usize,
    /// Line-field rotation around the centroid.
    pub winding: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisclinationParams {
    pub mu_threshold: f64,
    pub probe_radius: f64,
    pub samples: usize,
    /// Gradient magnitude below which a probe sample is ignored.
    pub min_gradient: f64,
    /// Accepted distance of the winding from +-pi.
    pub winding_tolerance: f64,
}

impl Default for DisclinationParams {
    fn default() -> Self {
        DisclinationParams {
            mu_threshold: 1e-3,
            probe_radius: PI,
            samples: 64,
            min_gradient: 0.5,
            winding_tolerance: PI / 4.0,
        }
    }
}

/// Clusters of jump-carrying vertices around which the line field turns by
/// half a revolution.
pub fn detect_disclinations(
    tri: &Triangulation,
    theta: &[f64],
    mu: &[f64],
    params: &DisclinationParams,
) -> Result<Vec<Disclination>, GaugeError> {
    check_vertices(tri, theta)?;
    check_vertices(tri, mu)?;
    let grads = vertex_field_gradients(tri, theta)?;
    let locator = FaceLocator::new(tri);
    let half = |w: f64| (w.abs() - PI).abs() <= params.winding_tolerance;
    let winding_at = |p: Point| line_field_winding(tri, &locator, &grads, p, params.probe_radius, params.samples, params.min_gradient);

    let nv = tri.vertex_count();
    let mut kept: Vec<Option<f64>> = vec![None; nv];
    for v in 0..nv {
        if mu[v].abs() > params.mu_threshold {
            if let Some(w) = winding_at(tri.vertices()[v]) {
                if half(w) {
                    kept[v] = Some(w);
                }
            }
        }
    }

    let mut seen = vec![false; nv];
    let mut out = Vec::new();
    for seed in 0..nv {
        if kept[seed].is_none() || seen[seed] {
            continue;
        }
        seen[seed] = true;
        let mut members = vec![seed];
        let mut k = 0;
        while k < members.len() {
            let v = members[k];
            k += 1;
            for &w in tri.vertex_neighbors(v) {
                if kept[w].is_some() && !seen[w] {
                    seen[w] = true;
                    members.push(w);
                }
            }
        }
        let n = members.len() as f64;
        let position = members.iter().fold([0.0, 0.0], |acc, &v| {
            let p = tri.vertices()[v];
            [acc[0] + p[0] / n, acc[1] + p[1] / n]
        });
        let member_sum: f64 = members.iter().filter_map(|&v| kept[v]).sum();
        let winding = match winding_at(position) {
            Some(w) if half(w) => w,
            _ => member_sum / n,
        };
        out.push(Disclination {
            position,
            kind: if winding > 0.0 {
                DisclinationKind::Convex
            } else {
                DisclinationKind::Concave
            },
            cluster_size: members.len(),
            winding,
        });
    }
    Ok(out)
}
