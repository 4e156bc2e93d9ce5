//! Compressed-row sparse matrices and the two inexact solvers used inside the
//! Bregman loop: a fixed number of conjugate gradient steps and forward
//! Gauss-Seidel sweeps.

use std::fmt::Write as _;

use thiserror::Error;

/// Entries with magnitude below this are dropped when a matrix is finalized.
pub const PRUNE_TOLERANCE: f64 = 1e-14;

/// Residual norm below which conjugate gradient stops early.
pub const CG_RESIDUAL_FLOOR: f64 = 1e-13;

/// Search directions with curvature at or below this end conjugate gradient.
pub const CG_CURVATURE_FLOOR: f64 = 1e-16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("triplet ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
}

/// Real matrix in compressed row storage.
///
/// Column indices are strictly increasing inside each row and no stored entry
/// is smaller than [`PRUNE_TOLERANCE`] in magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let triplets = diag.iter().enumerate().map(|(i, &v)| (i, i, v));
        Self::from_triplets(diag.len(), diag.len(), triplets)
            .expect("diagonal indices are always in range")
    }

    /// Assembles a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed, then near-zero entries are pruned.
    pub fn from_triplets<I>(rows: usize, cols: usize, triplets: I) -> Result<Self, SparseError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(SparseError::IndexOutOfRange {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite { what: "triplet value" });
            }
            per_row[r].push((c, v));
        }

        let mut row_offsets = Vec::with_capacity(rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut entries in per_row {
            // stable sort keeps the summation order of duplicates deterministic
            entries.sort_by_key(|&(c, _)| c);
            let mut iter = entries.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v.abs() >= PRUNE_TOLERANCE {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }

        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Self {
        let rows = dense.len();
        let cols = dense.first().map_or(0, Vec::len);
        let triplets = dense
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v)));
        Self::from_triplets(rows, cols, triplets).expect("dense indices are in range")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored `(col, value)` pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.cols]; self.rows];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut y = vec![0.0; self.rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<(), SparseError> {
        check_len(self.cols, x.len())?;
        check_len(self.rows, y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
        Ok(())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let triplets = (0..self.rows).flat_map(|i| self.row(i).map(move |(j, v)| (j, i, v)));
        Self::from_triplets(self.cols, self.rows, triplets).expect("transpose indices in range")
    }

    /// Sparse product `self * rhs`.
    pub fn matmul(&self, rhs: &SparseMatrix) -> Result<SparseMatrix, SparseError> {
        check_len(self.cols, rhs.rows)?;
        let mut triplets = Vec::new();
        let mut accum = vec![0.0; rhs.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut seen = vec![false; rhs.cols];
        for i in 0..self.rows {
            for (k, a) in self.row(i) {
                for (j, b) in rhs.row(k) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j);
                    }
                    accum[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                triplets.push((i, j, accum[j]));
                accum[j] = 0.0;
                seen[j] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.rows, rhs.cols, triplets)
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(
        &self,
        alpha: f64,
        other: &SparseMatrix,
        beta: f64,
    ) -> Result<SparseMatrix, SparseError> {
        check_len(self.rows, other.rows)?;
        check_len(self.cols, other.cols)?;
        let lhs = (0..self.rows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, alpha * v)));
        let rhs = (0..other.rows).flat_map(|i| other.row(i).map(move |(j, v)| (i, j, beta * v)));
        Self::from_triplets(self.rows, self.cols, lhs.chain(rhs))
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let triplets = (0..self.rows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, alpha * v)));
        Self::from_triplets(self.rows, self.cols, triplets).expect("indices in range")
    }

    /// Largest `|A_ij - A_ji|` over all stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_defect() <= tol
    }

    /// Symmetry audit on a fixed sample of rows, cheap enough to run per solve.
    fn audit_symmetry(&self, tol: f64) -> Result<(), SparseError> {
        if self.rows != self.cols {
            return Err(SparseError::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        const SAMPLES: usize = 32;
        let stride = (self.rows / SAMPLES).max(1);
        for i in (0..self.rows).step_by(stride) {
            for (j, v) in self.row(i) {
                if (v - self.get(j, i)).abs() > tol {
                    return Err(SparseError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    /// Coordinate-format text dump, one `row col value` line per entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.rows, self.cols, self.nnz());
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                let _ = writeln!(out, "{i} {j} {v:.16e}");
            }
        }
        out
    }
}

fn check_len(expected: usize, found: usize) -> Result<(), SparseError> {
    if expected == found {
        Ok(())
    } else {
        Err(SparseError::DimensionMismatch { expected, found })
    }
}

fn check_finite(v: &[f64], what: &'static str) -> Result<(), SparseError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SparseError::NonFinite { what })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Runs exactly `sweeps` unpreconditioned conjugate gradient steps on the
/// symmetric positive semi-definite system `a x = rhs`, starting from `x0`.
///
/// Stops early only when the residual norm drops below
/// [`CG_RESIDUAL_FLOOR`] or a search direction has non-positive curvature.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    rhs: &[f64],
    x0: &[f64],
    sweeps: usize,
) -> Result<Vec<f64>, SparseError> {
    check_len(a.rows(), rhs.len())?;
    check_len(a.cols(), x0.len())?;
    check_finite(rhs, "conjugate gradient right-hand side")?;
    check_finite(x0, "conjugate gradient initial guess")?;
    check_finite(a.values(), "conjugate gradient matrix")?;
    a.audit_symmetry(1e-12)?;

    let n = x0.len();
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    a.matvec_into(&x, &mut ax)?;
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];

    for _ in 0..sweeps {
        if rr.sqrt() < CG_RESIDUAL_FLOOR {
            break;
        }
        a.matvec_into(&p, &mut ap)?;
        let curvature = dot(&p, &ap);
        if curvature <= CG_CURVATURE_FLOOR {
            break;
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    Ok(x)
}

/// Forward Gauss-Seidel: `sweeps` passes over the rows in ascending order.
pub fn gauss_seidel(
    a: &SparseMatrix,
    rhs: &[f64],
    x0: &[f64],
    sweeps: usize,
) -> Result<Vec<f64>, SparseError> {
    check_len(a.rows(), rhs.len())?;
    check_len(a.cols(), x0.len())?;
    check_len(a.rows(), a.cols())?;
    check_finite(rhs, "Gauss-Seidel right-hand side")?;
    check_finite(x0, "Gauss-Seidel initial guess")?;

    let diag = a.diagonal();
    if let Some(row) = diag.iter().position(|&d| d == 0.0) {
        return Err(SparseError::ZeroDiagonal { row });
    }

    let mut x = x0.to_vec();
    for _ in 0..sweeps {
        for i in 0..a.rows() {
            let off: f64 = a.row(i).filter(|&(j, _)| j != i).map(|(j, v)| v * x[j]).sum();
            x[i] = (rhs[i] - off) / diag[i];
        }
    }
    Ok(x)
}
