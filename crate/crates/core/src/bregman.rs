//! Split-Bregman iteration with convexity splitting.
//!
//! One outer step updates, in order, the Laplacian density `rho`, the jump
//! coefficients `mu` (soft threshold), an implicit-explicit phase predictor
//! `zeta`, the phase `theta` (proximal step of the jump penalty), and the
//! Bregman variable `b`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::energy::{evaluate, EnergyBreakdown};
use crate::fem::{assemble_operators, weighted_stiffness_apply, FemError, OperatorSet};
use crate::mesh::{boundary_distances, Triangulation};
use crate::sparse::{conjugate_gradient, dot, gauss_seidel, SparseError, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BregmanError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("non-finite state after iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

impl From<SparseError> for BregmanError {
    fn from(e: SparseError) -> Self {
        BregmanError::Fem(FemError::Sparse(e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    pub b: Vec<f64>,
    pub iteration: usize,
}

impl PhaseState {
    pub fn zeros(n: usize) -> Self {
        PhaseState {
            theta: vec![0.0; n],
            rho: vec![0.0; n],
            mu: vec![0.0; n],
            b: vec![0.0; n],
            iteration: 0,
        }
    }

    /// `theta = dist(x, boundary)`, everything else zero.
    pub fn initial(tri: &Triangulation) -> Self {
        let theta = tri.restrict(&boundary_distances(tri));
        let n = theta.len();
        PhaseState {
            theta,
            ..PhaseState::zeros(n)
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        [&self.theta, &self.rho, &self.mu, &self.b]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn check(&self, n: usize) -> Result<(), BregmanError> {
        for (name, v) in [("theta", &self.theta), ("rho", &self.rho), ("mu", &self.mu), ("b", &self.b)] {
            if v.len() != n {
                return Err(FemError::DimensionMismatch { expected: n, found: v.len() }.into());
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(SparseError::NonFinite { what: name_static(name) }.into());
            }
        }
        Ok(())
    }

    /// Plain text: the iteration on the first line, then one row each for
    /// theta, rho, mu and b.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("{}\n", self.iteration);
        for v in [&self.theta, &self.rho, &self.mu, &self.b] {
            let row: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, BregmanError> {
        let mut lines = text.lines();
        let bad = |m: &str| BregmanError::Checkpoint(m.to_string());
        let iteration = lines
            .next()
            .ok_or_else(|| bad("empty file"))?
            .trim()
            .parse::<usize>()
            .map_err(|e| bad(&format!("iteration: {e}")))?;
        let mut rows = Vec::with_capacity(4);
        for name in ["theta", "rho", "mu", "b"] {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name} row")))?;
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(&format!("{name}: {e}")))?;
            rows.push(row);
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing data"));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(bad("rows differ in length"));
        }
        let mut it = rows.into_iter();
        let state = PhaseState {
            theta: it.next().unwrap(),
            rho: it.next().unwrap(),
            mu: it.next().unwrap(),
            b: it.next().unwrap(),
            iteration,
        };
        if !state.is_finite() {
            return Err(bad("non-finite entry"));
        }
        Ok(state)
    }
}

fn name_static(name: &str) -> &'static str {
    match name {
        "theta" => "theta",
        "rho" => "rho",
        "mu" => "mu",
        _ => "b",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub sigma: f64,
    pub tau: f64,
    pub a: f64,
    pub cg_sweeps: usize,
    pub gs_sweeps: usize,
    pub outer_iterations: usize,
    /// Keep `mu = 0` throughout (the restricted problem).
    pub mu_frozen: bool,
    /// Half-width in `|sin theta|` of the discrete singular band.
    pub gamma_tolerance: f64,
    pub log_stride: usize,
    /// Keep every `snapshot_stride`-th state in the trajectory; 0 keeps none.
    pub snapshot_stride: usize,
    /// Stop once the relative change of the total energy over 100 iterations
    /// falls below this value. `None` always runs `outer_iterations` steps.
    pub early_stop: Option<f64>,
    pub theta_rule: ThetaRule,
}

/// How the proximal step of the jump penalty moves the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaRule {
    /// Fixed-length step `sigma tau |cos zeta|` toward the nearest multiple of
    /// pi at every vertex.
    Unweighted,
    /// Step scaled by the local jump coefficient, `sigma tau |mu_i| |cos zeta|`,
    /// so vertices without jump mass keep `theta = zeta`.
    JumpWeighted,
}

impl ThetaRule {
    pub fn token(self) -> &'static str {
        match self {
            ThetaRule::Unweighted => "unweighted",
            ThetaRule::JumpWeighted => "jump-weighted",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "unweighted" => Some(ThetaRule::Unweighted),
            "jump-weighted" => Some(ThetaRule::JumpWeighted),
            _ => None,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.5,
            sigma: 1.0,
            tau: 0.1,
            a: 6.0,
            cg_sweeps: 5,
            gs_sweeps: 5,
            outer_iterations: 2000,
            mu_frozen: false,
            gamma_tolerance: 0.3,
            log_stride: 10,
            snapshot_stride: 0,
            early_stop: None,
            theta_rule: ThetaRule::JumpWeighted,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), BregmanError> {
        let fail = |m: &str| Err(BregmanError::InvalidConfig(m.to_string()));
        let finite = [self.lambda, self.sigma, self.tau, self.a, self.gamma_tolerance];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("parameters must be finite");
        }
        if self.lambda <= 0.0 {
            return fail("lambda must be positive");
        }
        if self.sigma < 0.0 {
            return fail("sigma must be non-negative");
        }
        if self.tau <= 0.0 {
            return fail("tau must be positive");
        }
        if self.a < 0.0 {
            return fail("a must be non-negative");
        }
        if self.gamma_tolerance <= 0.0 {
            return fail("gamma_tolerance must be positive");
        }
        if self.log_stride == 0 {
            return fail("log_stride must be at least 1");
        }
        if let Some(tol) = self.early_stop {
            if !(tol > 0.0 && tol.is_finite()) {
                return fail("early_stop must be a positive tolerance");
            }
        }
        Ok(())
    }
}

/// Soft threshold `sign(nu) max(|nu| - t, 0)`, with `sign(0) = 0`.
pub fn shrink(nu: f64, threshold: f64) -> f64 {
    if nu == 0.0 {
        return 0.0;
    }
    nu.signum() * (nu.abs() - threshold).max(0.0)
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Nearest multiple of pi, ties rounding up.
pub fn well_bottom(zeta: f64) -> f64 {
    std::f64::consts::PI * (zeta / std::f64::consts::PI + 0.5).floor()
}

/// Forward Euler step of `d theta/dt = -sigma sign(sin theta) cos theta`
/// from `zeta`, clamped at the nearest multiple of pi.
pub fn update_theta(zeta: &[f64], config: &SolverConfig) -> Vec<f64> {
    let step = config.sigma * config.tau;
    zeta.iter().map(|&z| clamped_step(z, step)).collect()
}

/// As [`update_theta`] with the step at vertex `i` scaled by `|mu_i|`.
pub fn update_theta_weighted(zeta: &[f64], mu: &[f64], config: &SolverConfig) -> Vec<f64> {
    let step = config.sigma * config.tau;
    zeta.iter()
        .zip(mu)
        .map(|(&z, m)| clamped_step(z, step * m.abs()))
        .collect()
}

fn clamped_step(z: f64, step: f64) -> f64 {
    let beta = well_bottom(z);
    z - sign0((2.0 * z).sin()) * (step * z.cos().abs()).min((beta - z).abs())
}

/// Solver bound to one operator set, with the two constant system matrices
/// cached.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    ops: &'a OperatorSet,
    config: SolverConfig,
    rho_matrix: SparseMatrix,
    zeta_matrix: SparseMatrix,
}

impl<'a> Solver<'a> {
    pub fn new(ops: &'a OperatorSet, config: SolverConfig) -> Result<Self, BregmanError> {
        config.validate()?;
        let n = ops.unknown_count();
        let m = &ops.mass;
        let k = &ops.stiffness;
        let mm = m.matmul(m)?;
        let rho_matrix = m.linear_combination(2.0, &mm, config.lambda)?;
        let kk = k.matmul(k)?;
        let zeta_matrix = SparseMatrix::identity(n)
            .linear_combination(1.0 / config.tau, k, 2.0 * config.a)?
            .linear_combination(1.0, &kk, config.lambda)?;
        Ok(Solver {
            ops,
            config,
            rho_matrix,
            zeta_matrix,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn ops(&self) -> &OperatorSet {
        self.ops
    }

    /// `2M + lambda M^2`.
    pub fn rho_matrix(&self) -> &SparseMatrix {
        &self.rho_matrix
    }

    /// `I / tau + 2a K + lambda K^2`.
    pub fn zeta_matrix(&self) -> &SparseMatrix {
        &self.zeta_matrix
    }

    pub fn update_rho(&self, state: &PhaseState) -> Result<Vec<f64>, BregmanError> {
        let mut forcing = self.ops.stiffness.matvec(&state.theta)?;
        for ((f, m), b) in forcing.iter_mut().zip(&state.mu).zip(&state.b) {
            *f += m + b;
        }
        let rhs: Vec<f64> = self
            .ops
            .mass
            .matvec(&forcing)?
            .into_iter()
            .map(|v| -self.config.lambda * v)
            .collect();
        Ok(conjugate_gradient(&self.rho_matrix, &rhs, &state.rho, self.config.cg_sweeps)?)
    }

    /// Soft threshold of `nu = -M rho_new - K theta - b`.
    pub fn update_mu(&self, state: &PhaseState, rho_new: &[f64]) -> Result<Vec<f64>, BregmanError> {
        let n = state.len();
        if self.config.mu_frozen {
            return Ok(vec![0.0; n]);
        }
        let m_rho = self.ops.mass.matvec(rho_new)?;
        let k_theta = self.ops.stiffness.matvec(&state.theta)?;
        let scale = self.config.sigma / self.config.lambda;
        Ok((0..n)
            .map(|i| {
                let nu = -m_rho[i] - k_theta[i] - state.b[i];
                shrink(nu, scale * state.theta[i].sin().abs())
            })
            .collect())
    }

    pub fn zeta_rhs(
        &self,
        state: &PhaseState,
        rho_new: &[f64],
        mu_new: &[f64],
    ) -> Result<Vec<f64>, BregmanError> {
        let c = &self.config;
        let k_theta = self.ops.stiffness.matvec(&state.theta)?;
        let l_theta = weighted_stiffness_apply(self.ops, &state.theta, &state.theta)?;
        let mut coupling = self.ops.mass.matvec(rho_new)?;
        for ((v, m), b) in coupling.iter_mut().zip(mu_new).zip(&state.b) {
            *v += m + b;
        }
        let k_coupling = self.ops.stiffness.matvec(&coupling)?;
        Ok((0..state.len())
            .map(|i| {
                state.theta[i] / c.tau + 2.0 * (c.a + 2.0) * k_theta[i]
                    - 4.0 * l_theta[i]
                    - c.lambda * k_coupling[i]
            })
            .collect())
    }

    pub fn update_zeta(
        &self,
        state: &PhaseState,
        rho_new: &[f64],
        mu_new: &[f64],
    ) -> Result<Vec<f64>, BregmanError> {
        let rhs = self.zeta_rhs(state, rho_new, mu_new)?;
        Ok(gauss_seidel(&self.zeta_matrix, &rhs, &state.theta, self.config.gs_sweeps)?)
    }

    /// `b + M rho + K theta + mu`.
    pub fn bregman_refresh(
        &self,
        b: &[f64],
        rho_new: &[f64],
        theta_new: &[f64],
        mu_new: &[f64],
    ) -> Result<Vec<f64>, BregmanError> {
        self.ops.check_len(b)?;
        let mut out = self.ops.mass.matvec(rho_new)?;
        let k_theta = self.ops.stiffness.matvec(theta_new)?;
        for i in 0..out.len() {
            out[i] += b[i] + k_theta[i] + mu_new[i];
        }
        Ok(out)
    }

    pub fn step(&self, state: &PhaseState) -> Result<PhaseState, BregmanError> {
        state.check(self.ops.unknown_count())?;
        let rho = self.update_rho(state)?;
        let mu = self.update_mu(state, &rho)?;
        let zeta = self.update_zeta(state, &rho, &mu)?;
        let theta = match self.config.theta_rule {
            ThetaRule::Unweighted => update_theta(&zeta, &self.config),
            ThetaRule::JumpWeighted => update_theta_weighted(&zeta, &mu, &self.config),
        };
        let b = self.bregman_refresh(&state.b, &rho, &theta, &mu)?;
        let next = PhaseState {
            theta,
            rho,
            mu,
            b,
            iteration: state.iteration + 1,
        };
        if !next.is_finite() {
            return Err(BregmanError::NonFinite { iteration: next.iteration });
        }
        Ok(next)
    }

    pub fn energy(&self, state: &PhaseState) -> Result<EnergyBreakdown, BregmanError> {
        Ok(evaluate(self.ops, &state.theta, &state.rho, &state.mu, self.config.sigma)?)
    }

    /// Steps `outer_iterations` times from `start`.
    pub fn run_from(&self, start: PhaseState) -> Result<Trajectory, BregmanError> {
        let c = &self.config;
        let initial = self.energy(&start)?;
        let mut log = Vec::new();
        let mut snapshots = Vec::new();
        let mut history: Vec<f64> = Vec::with_capacity(c.outer_iterations + 1);
        history.push(initial.total);
        let mut state = start;
        for k in 1..=c.outer_iterations {
            state = self.step(&state)?;
            let last = k == c.outer_iterations;
            let needs_energy = last || k % c.log_stride == 0 || c.early_stop.is_some();
            let mut stop = false;
            if needs_energy {
                let e = self.energy(&state)?;
                if let Some(tol) = c.early_stop {
                    history.push(e.total);
                    if history.len() > 100 {
                        let old = history[history.len() - 101];
                        stop = (e.total - old).abs() <= tol * old.abs().max(f64::MIN_POSITIVE);
                    }
                }
                if last || stop || k % c.log_stride == 0 {
                    log.push((state.iteration, e));
                }
            }
            if c.snapshot_stride > 0 && k % c.snapshot_stride == 0 {
                snapshots.push(state.clone());
            }
            if stop {
                break;
            }
        }
        Ok(Trajectory {
            initial,
            log,
            final_state: state,
            snapshots,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: EnergyBreakdown,
    /// `(iteration, energy)` every `log_stride` steps and at the last step.
    pub log: Vec<(usize, EnergyBreakdown)>,
    pub final_state: PhaseState,
    pub snapshots: Vec<PhaseState>,
}

impl Trajectory {
    pub fn energy_at(&self, iteration: usize) -> Option<&EnergyBreakdown> {
        if iteration == 0 {
            return Some(&self.initial);
        }
        self.log.iter().find(|(k, _)| *k == iteration).map(|(_, e)| e)
    }

    /// Tab-separated energy log including the initial state as iteration 0.
    pub fn energy_log_text(&self) -> String {
        let mut out = String::from("iteration\tbending\twell\tjump\ttotal\tconstraint_residual\n");
        let rows = std::iter::once((0usize, &self.initial)).chain(self.log.iter().map(|(k, e)| (*k, e)));
        for (k, e) in rows {
            let _ = writeln!(
                out,
                "{k}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}",
                e.bending, e.well, e.jump, e.total, e.constraint_residual
            );
        }
        out
    }
}

/// Builds the operators, starts from the distance function and runs.
pub fn run(config: &SolverConfig, tri: &Triangulation) -> Result<Trajectory, BregmanError> {
    let ops = assemble_operators(tri)?;
    let solver = Solver::new(&ops, config.clone())?;
    solver.run_from(PhaseState::initial(tri))
}

/// Quadratic objective of the rho-update, for diagnostics and tests.
pub fn rho_objective(ops: &OperatorSet, state: &PhaseState, rho: &[f64], lambda: f64) -> Result<f64, BregmanError> {
    let m_rho = ops.mass.matvec(rho)?;
    let k_theta = ops.stiffness.matvec(&state.theta)?;
    let r: Vec<f64> = (0..rho.len())
        .map(|i| m_rho[i] + k_theta[i] + state.mu[i] + state.b[i])
        .collect();
    Ok(dot(rho, &m_rho) + 0.5 * lambda * dot(&r, &r))
}

/// Quadratic objective of the zeta-update.
pub fn zeta_objective(
    ops: &OperatorSet,
    config: &SolverConfig,
    state: &PhaseState,
    rho_new: &[f64],
    mu_new: &[f64],
    zeta: &[f64],
) -> Result<f64, BregmanError> {
    let n = zeta.len();
    let k_zeta = ops.stiffness.matvec(zeta)?;
    let k_theta = ops.stiffness.matvec(&state.theta)?;
    let l_theta = weighted_stiffness_apply(ops, &state.theta, &state.theta)?;
    let m_rho = ops.mass.matvec(rho_new)?;
    let prox: f64 = (0..n).map(|i| (zeta[i] - state.theta[i]).powi(2)).sum::<f64>() / (2.0 * config.tau);
    let linear: f64 = (0..n)
        .map(|i| zeta[i] * (2.0 * (config.a + 2.0) * k_theta[i] - 4.0 * l_theta[i]))
        .sum();
    let r: Vec<f64> = (0..n).map(|i| m_rho[i] + k_zeta[i] + mu_new[i] + state.b[i]).collect();
    Ok(prox + config.a * dot(zeta, &k_zeta) - linear + 0.5 * config.lambda * dot(&r, &r))
}
