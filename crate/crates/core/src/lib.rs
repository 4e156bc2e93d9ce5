//! Variational solver for stripe patterns with point defects.
//!
//! Phase fields are continuous piecewise-linear functions on a planar
//! triangulation with zero Dirichlet data. The relaxed SBV Cross-Newell
//! energy is minimized by a split-Bregman iteration with convexity
//! splitting, and the [`gauge`] module provides the topological
//! post-processing of the resulting phase.

pub mod bregman;
pub mod energy;
pub mod experiment;
pub mod fem;
pub mod gauge;
pub mod mesh;
pub mod render;
pub mod sparse;

pub use bregman::{PhaseState, Solver, SolverConfig, ThetaRule, Trajectory};
pub use energy::EnergyBreakdown;
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, Mode};
pub use fem::{assemble_operators, OperatorSet};
pub use gauge::{Disclination, DisclinationKind, Strip, StripDecomposition};
pub use mesh::{build_ellipse_mesh, Point, Triangulation};
pub use sparse::SparseMatrix;
