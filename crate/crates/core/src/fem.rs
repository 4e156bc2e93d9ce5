//! P1 finite element operators on the interior unknowns of a triangulation.
//!
//! Boundary vertices carry the Dirichlet value zero and are eliminated, so
//! every vector handled here has one entry per interior vertex.

use thiserror::Error;

use crate::mesh::{face_gradient_geometry, FaceGradients, MeshError, Triangulation};
use crate::sparse::{SparseError, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Element mass matrix `(area / 12) [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let mut m = [[area / 12.0; 3]; 3];
    for (k, row) in m.iter_mut().enumerate() {
        row[k] = area / 6.0;
    }
    m
}

/// Element stiffness matrix `area * grad(phi_i) . grad(phi_j)`.
pub fn local_stiffness(geom: &FaceGradients) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (gi, gj) = (geom.grads[i], geom.grads[j]);
            k[i][j] = geom.area * (gi[0] * gj[0] + gi[1] * gj[1]);
        }
    }
    k
}

/// Discrete operators of the mesh.
///
/// `dx`, `dy` map interior coefficients to per-face gradient components,
/// `mass` and `stiffness` are the Gram matrices of the interior hat
/// functions and of their gradients.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub dx: SparseMatrix,
    pub dy: SparseMatrix,
    pub dx_t: SparseMatrix,
    pub dy_t: SparseMatrix,
    pub face_areas: Vec<f64>,
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub geometry: Vec<FaceGradients>,
    faces: Vec<[Option<usize>; 3]>,
}

impl OperatorSet {
    pub fn unknown_count(&self) -> usize {
        self.mass.rows()
    }

    pub fn face_count(&self) -> usize {
        self.face_areas.len()
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas.iter().sum()
    }

    /// The diagonal face-area matrix.
    pub fn area_matrix(&self) -> SparseMatrix {
        SparseMatrix::from_diagonal(&self.face_areas)
    }

    /// Interior-unknown index of each face corner (`None` on the boundary).
    pub fn face_unknowns(&self) -> &[[Option<usize>; 3]] {
        &self.faces
    }

    pub(crate) fn check_len(&self, v: &[f64]) -> Result<(), FemError> {
        if v.len() == self.unknown_count() {
            Ok(())
        } else {
            Err(FemError::DimensionMismatch {
                expected: self.unknown_count(),
                found: v.len(),
            })
        }
    }
}

pub fn assemble_operators(tri: &Triangulation) -> Result<OperatorSet, FemError> {
    let geometry = face_gradient_geometry(tri)?;
    let n = tri.unknown_count();
    let nf = tri.face_count();

    let faces: Vec<[Option<usize>; 3]> = tri
        .faces()
        .iter()
        .map(|f| f.map(|v| tri.unknown_index(v)))
        .collect();

    let mut dx = Vec::with_capacity(3 * nf);
    let mut dy = Vec::with_capacity(3 * nf);
    let mut mass = Vec::with_capacity(9 * nf);
    let mut stiff = Vec::with_capacity(9 * nf);
    for (f, (geom, idx)) in geometry.iter().zip(&faces).enumerate() {
        let lm = local_mass(geom.area);
        let lk = local_stiffness(geom);
        for i in 0..3 {
            let Some(gi) = idx[i] else { continue };
            dx.push((f, gi, geom.grads[i][0]));
            dy.push((f, gi, geom.grads[i][1]));
            for j in 0..3 {
                let Some(gj) = idx[j] else { continue };
                mass.push((gi, gj, lm[i][j]));
                stiff.push((gi, gj, lk[i][j]));
            }
        }
    }

    let dx = SparseMatrix::from_triplets(nf, n, dx)?;
    let dy = SparseMatrix::from_triplets(nf, n, dy)?;
    Ok(OperatorSet {
        dx_t: dx.transpose(),
        dy_t: dy.transpose(),
        dx,
        dy,
        face_areas: geometry.iter().map(|g| g.area).collect(),
        mass: SparseMatrix::from_triplets(n, n, mass)?,
        stiffness: SparseMatrix::from_triplets(n, n, stiff)?,
        geometry,
        faces,
    })
}

/// Mass matrix over all vertices, before boundary elimination.
pub fn full_mass_matrix(tri: &Triangulation) -> Result<SparseMatrix, FemError> {
    let geometry = face_gradient_geometry(tri)?;
    let triplets = tri.faces().iter().zip(&geometry).flat_map(|(face, geom)| {
        let lm = local_mass(geom.area);
        (0..9).map(move |k| (face[k / 3], face[k % 3], lm[k / 3][k % 3]))
    });
    Ok(SparseMatrix::from_triplets(
        tri.vertex_count(),
        tri.vertex_count(),
        triplets,
    )?)
}

/// Stiffness matrix over all vertices, before boundary elimination.
pub fn full_stiffness_matrix(tri: &Triangulation) -> Result<SparseMatrix, FemError> {
    let geometry = face_gradient_geometry(tri)?;
    let triplets = tri.faces().iter().zip(&geometry).flat_map(|(face, geom)| {
        let lk = local_stiffness(geom);
        (0..9).map(move |k| (face[k / 3], face[k % 3], lk[k / 3][k % 3]))
    });
    Ok(SparseMatrix::from_triplets(
        tri.vertex_count(),
        tri.vertex_count(),
        triplets,
    )?)
}

/// Per-face gradient `((Dx theta)_f, (Dy theta)_f)`.
pub fn gradient_field(ops: &OperatorSet, theta: &[f64]) -> Result<Vec<[f64; 2]>, FemError> {
    ops.check_len(theta)?;
    let gx = ops.dx.matvec(theta)?;
    let gy = ops.dy.matvec(theta)?;
    Ok(gx.into_iter().zip(gy).map(|(x, y)| [x, y]).collect())
}

/// Squared gradient norm on each face.
pub fn gradient_norms_squared(ops: &OperatorSet, theta: &[f64]) -> Result<Vec<f64>, FemError> {
    Ok(gradient_field(ops, theta)?
        .into_iter()
        .map(|[x, y]| x * x + y * y)
        .collect())
}

/// `L = Dx^T B Dx + Dy^T B Dy` with `B = diag(area_f |grad theta|_f^2)`.
pub fn assemble_weighted_stiffness(
    ops: &OperatorSet,
    theta: &[f64],
) -> Result<SparseMatrix, FemError> {
    let weights = gradient_norms_squared(ops, theta)?;
    let n = ops.unknown_count();
    let mut triplets = Vec::with_capacity(9 * ops.face_count());
    for ((geom, idx), w) in ops.geometry.iter().zip(&ops.faces).zip(&weights) {
        let lk = local_stiffness(geom);
        for i in 0..3 {
            let Some(gi) = idx[i] else { continue };
            for j in 0..3 {
                let Some(gj) = idx[j] else { continue };
                triplets.push((gi, gj, w * lk[i][j]));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(n, n, triplets)?)
}

/// `L(theta) x` without forming `L`.
pub fn weighted_stiffness_apply(
    ops: &OperatorSet,
    theta: &[f64],
    x: &[f64],
) -> Result<Vec<f64>, FemError> {
    ops.check_len(x)?;
    let weights = gradient_norms_squared(ops, theta)?;
    let mut gx = ops.dx.matvec(x)?;
    let mut gy = ops.dy.matvec(x)?;
    for (f, w) in weights.iter().enumerate() {
        let b = ops.face_areas[f] * w;
        gx[f] *= b;
        gy[f] *= b;
    }
    let mut out = ops.dx_t.matvec(&gx)?;
    for (o, v) in out.iter_mut().zip(ops.dy_t.matvec(&gy)?) {
        *o += v;
    }
    Ok(out)
}
