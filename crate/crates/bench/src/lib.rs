//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use stripes_core::bregman::{Solver, SolverConfig};
use stripes_core::{assemble_operators, build_ellipse_mesh, OperatorSet, PhaseState, Triangulation};

/// Ellipse with the experiment's aspect ratio, scaled by `scale`, at the
/// experiment's mesh resolution.
pub fn ellipse(scale: f64) -> Triangulation {
    build_ellipse_mesh(32.0 * PI * scale, 20.0 * PI * scale, PI / 4.0).expect("valid ellipse")
}

pub struct Fixture {
    pub tri: Triangulation,
    pub ops: OperatorSet,
    /// A state a few dozen iterations into an unrestricted run, so `mu` is
    /// not identically zero.
    pub state: PhaseState,
}

impl Fixture {
    pub fn new(scale: f64) -> Self {
        let tri = ellipse(scale);
        let ops = assemble_operators(&tri).expect("assembly");
        let solver = Solver::new(&ops, SolverConfig::default()).expect("default config");
        let mut state = PhaseState::initial(&tri);
        for _ in 0..30 {
            state = solver.step(&state).expect("warm-up step");
        }
        Fixture { tri, ops, state }
    }

    pub fn solver(&self) -> Solver<'_> {
        Solver::new(&self.ops, SolverConfig::default()).expect("default config")
    }
}
