//! Discrete energies of a phase state.
//!
//! The relaxed energy is evaluated on the decoupled variables: a bending term
//! `rho^T M rho`, the well `sum_f area_f (|grad theta|_f^2 - 1)^2` and the jump
//! penalty `sigma sum_i |mu_i| |sin theta_i|`.

use crate::fem::{gradient_norms_squared, FemError, OperatorSet};
use crate::sparse::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub bending: f64,
    pub well: f64,
    pub jump: f64,
    pub total: f64,
    /// Euclidean norm of `M rho + K theta + mu`.
    pub constraint_residual: f64,
}

fn check_finite(values: &[f64]) -> Result<(), FemError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FemError::Sparse(crate::sparse::SparseError::NonFinite {
            what: "energy input",
        }))
    }
}

/// `sum_f area_f (|grad theta|_f^2 - 1)^2`.
pub fn well_energy(ops: &OperatorSet, theta: &[f64]) -> Result<f64, FemError> {
    let g2 = gradient_norms_squared(ops, theta)?;
    Ok(g2
        .iter()
        .zip(&ops.face_areas)
        .map(|(g, a)| a * (g - 1.0).powi(2))
        .sum())
}

/// `sigma sum_i |mu_i| |sin theta_i|`.
pub fn jump_energy(theta: &[f64], mu: &[f64], sigma: f64) -> f64 {
    sigma
        * theta
            .iter()
            .zip(mu)
            .map(|(t, m)| m.abs() * t.sin().abs())
            .sum::<f64>()
}

/// `M rho + K theta + mu`, the residual of the weak splitting constraint.
pub fn constraint_residual(
    ops: &OperatorSet,
    theta: &[f64],
    rho: &[f64],
    mu: &[f64],
) -> Result<Vec<f64>, FemError> {
    ops.check_len(theta)?;
    ops.check_len(rho)?;
    ops.check_len(mu)?;
    let mut r = ops.mass.matvec(rho)?;
    for ((ri, k), m) in r.iter_mut().zip(ops.stiffness.matvec(theta)?).zip(mu) {
        *ri += k + m;
    }
    Ok(r)
}

pub fn evaluate(
    ops: &OperatorSet,
    theta: &[f64],
    rho: &[f64],
    mu: &[f64],
    sigma: f64,
) -> Result<EnergyBreakdown, FemError> {
    check_finite(theta)?;
    check_finite(rho)?;
    check_finite(mu)?;
    let residual = constraint_residual(ops, theta, rho, mu)?;
    let bending = dot(rho, &ops.mass.matvec(rho)?).max(0.0);
    let well = well_energy(ops, theta)?;
    let jump = jump_energy(theta, mu, sigma.max(0.0));
    Ok(EnergyBreakdown {
        bending,
        well,
        jump,
        total: bending + well + jump,
        constraint_residual: norm(&residual),
    })
}

/// Convex/concave decomposition of the well energy for split parameter `a`:
/// `well = constant + convex + concave`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellSplit {
    /// `a sum_f area_f |grad theta|^2`.
    pub convex: f64,
    /// `-sum_f area_f [(a + 2) |grad theta|^2 - |grad theta|^4]`.
    pub concave: f64,
    /// Mesh area.
    pub constant: f64,
    pub max_gradient: f64,
    /// Set when `max |grad theta| >= (a + 2) / 6`, where the concave piece is
    /// no longer guaranteed concave.
    pub concavity_bound_violated: bool,
}

pub fn split_well_pieces(ops: &OperatorSet, theta: &[f64], a: f64) -> Result<WellSplit, FemError> {
    let g2 = gradient_norms_squared(ops, theta)?;
    let mut convex = 0.0;
    let mut concave = 0.0;
    let mut max_g2: f64 = 0.0;
    for (g, area) in g2.iter().zip(&ops.face_areas) {
        convex += a * area * g;
        concave -= area * ((a + 2.0) * g - g * g);
        max_g2 = max_g2.max(*g);
    }
    let max_gradient = max_g2.sqrt();
    Ok(WellSplit {
        convex,
        concave,
        constant: ops.total_area(),
        max_gradient,
        concavity_bound_violated: max_gradient >= (a + 2.0) / 6.0,
    })
}

/// Aviles-Giga diagnostic `eps rho^T M rho + eps^-1 sum_f area_f (1 - |grad theta|^2)^2`,
/// with the Laplacian density `rho` standing in for the Hessian.
pub fn aviles_giga_energy(
    ops: &OperatorSet,
    theta: &[f64],
    rho: &[f64],
    eps: f64,
) -> Result<f64, FemError> {
    ops.check_len(rho)?;
    let bending = dot(rho, &ops.mass.matvec(rho)?);
    Ok(eps * bending + well_energy(ops, theta)? / eps)
}
