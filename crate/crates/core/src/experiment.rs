//! Experiment configuration, the restricted and unrestricted runs on an
//! elliptical domain, and the files they leave behind.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bregman::{BregmanError, PhaseState, Solver, SolverConfig, ThetaRule, Trajectory};
use crate::fem::{assemble_operators, gradient_norms_squared, FemError, OperatorSet};
use crate::gauge::{
    decompose_strips, detect_disclinations, orientation_defect, Disclination, DisclinationParams,
    GaugeError, StripDecomposition,
};
use crate::mesh::{build_ellipse_mesh, MeshError, Triangulation};
use crate::render::{render_heatmap, Field, RenderError, DEFAULT_LONG_AXIS};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    /// 1-based, 0 for errors not tied to a line.
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line, message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] BregmanError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl From<FemError> for ExperimentError {
    fn from(e: FemError) -> Self {
        ExperimentError::Solver(e.into())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Restricted,
    Unrestricted,
    Both,
}

impl Mode {
    pub fn token(self) -> &'static str {
        match self {
            Mode::Restricted => "restricted",
            Mode::Unrestricted => "unrestricted",
            Mode::Both => "both",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "restricted" => Some(Mode::Restricted),
            "unrestricted" => Some(Mode::Unrestricted),
            "both" => Some(Mode::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub semi_major: f64,
    pub semi_minor: f64,
    pub target_edge: f64,
    /// `mu_frozen` is overridden per mode.
    pub solver: SolverConfig,
    pub mode: Mode,
    pub output_dir: PathBuf,
    /// Unused, the pipeline is deterministic. Kept so configs can carry one.
    pub seed: u64,
    pub mu_threshold: f64,
    pub probe_radius: f64,
    pub image_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            semi_major: 32.0 * PI,
            semi_minor: 20.0 * PI,
            target_edge: PI / 4.0,
            solver: SolverConfig::default(),
            mode: Mode::Both,
            output_dir: PathBuf::from("out"),
            seed: 0,
            mu_threshold: 1e-2,
            probe_radius: PI / 2.0,
            image_size: DEFAULT_LONG_AXIS,
        }
    }
}

/// Every recognised key with its documentation, in echo order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("semi_major", "semi-axis along x"),
    ("semi_minor", "semi-axis along y"),
    ("target_edge", "target mesh edge length"),
    ("lambda", "Bregman penalty weight"),
    ("sigma", "jump penalty weight"),
    ("tau", "time step"),
    ("a", "convexity split parameter"),
    ("cg_sweeps", "conjugate gradient steps per rho-update"),
    ("gs_sweeps", "Gauss-Seidel sweeps per zeta-update"),
    ("outer_iterations", "solver iterations"),
    ("gamma_tolerance", "singular band half-width in |sin theta|"),
    ("theta_rule", "jump-weighted | unweighted"),
    ("early_stop", "relative energy change over 100 iterations that ends a run, 0 disables"),
    ("mode", "restricted | unrestricted | both"),
    ("output_dir", "directory receiving all artifacts"),
    ("log_stride", "iterations between energy log rows"),
    ("snapshot_stride", "iterations between state snapshots, 0 disables"),
    ("seed", "reserved"),
    ("mu_threshold", "|mu| above which a vertex is a disclination candidate"),
    ("probe_radius", "radius of the winding probe circle"),
    ("image_size", "heatmap pixels along the long axis"),
];

/// Reads a float, optionally written as a multiple or fraction of pi
/// (`pi`, `32pi`, `32*pi`, `pi/4`, `0.5*pi/3`).
pub fn parse_scalar(text: &str) -> Option<f64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(idx) = s.find("pi") else {
        return s.parse().ok();
    };
    let coef = s[..idx].trim_end_matches('*');
    let coef = match coef {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => c.parse().ok()?,
    };
    let rest = &s[idx + 2..];
    let div = if rest.is_empty() {
        1.0
    } else {
        rest.strip_prefix('/')?.parse::<f64>().ok()?
    };
    Some(coef * PI / div)
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |what: &str| ConfigError::new(0, format!("{key}: expected {what}, got '{value}'"));
        let float = || parse_scalar(value).ok_or_else(|| bad("a number"));
        let count = || value.trim().parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let s = &mut self.solver;
        match key {
            "semi_major" => self.semi_major = float()?,
            "semi_minor" => self.semi_minor = float()?,
            "target_edge" => self.target_edge = float()?,
            "lambda" => s.lambda = float()?,
            "sigma" => s.sigma = float()?,
            "tau" => s.tau = float()?,
            "a" => s.a = float()?,
            "cg_sweeps" => s.cg_sweeps = count()?,
            "gs_sweeps" => s.gs_sweeps = count()?,
            "outer_iterations" => s.outer_iterations = count()?,
            "gamma_tolerance" => s.gamma_tolerance = float()?,
            "theta_rule" => s.theta_rule = ThetaRule::parse(value.trim()).ok_or_else(|| bad("jump-weighted or unweighted"))?,
            "early_stop" => {
                let v = float()?;
                s.early_stop = (v > 0.0).then_some(v);
            }
            "mode" => self.mode = Mode::parse(value.trim()).ok_or_else(|| bad("restricted, unrestricted or both"))?,
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "log_stride" => s.log_stride = count()?,
            "snapshot_stride" => s.snapshot_stride = count()?,
            "seed" => self.seed = value.trim().parse().map_err(|_| bad("an integer"))?,
            "mu_threshold" => self.mu_threshold = float()?,
            "probe_radius" => self.probe_radius = float()?,
            "image_size" => self.image_size = count()?,
            _ => return Err(ConfigError::new(0, format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(n + 1, format!("expected 'key = value', got '{line}'")))?;
            self.set(key.trim(), value.trim()).map_err(|e| ConfigError::new(n + 1, e.message))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::new(0, m));
        for (name, v) in [
            ("semi_major", self.semi_major),
            ("semi_minor", self.semi_minor),
            ("target_edge", self.target_edge),
            ("probe_radius", self.probe_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(&format!("{name} must be positive"));
            }
        }
        if !(self.mu_threshold >= 0.0 && self.mu_threshold.is_finite()) {
            return fail("mu_threshold must be non-negative");
        }
        if self.image_size == 0 {
            return fail("image_size must be positive");
        }
        if self.solver.outer_iterations == 0 {
            return fail("outer_iterations must be at least 1");
        }
        self.solver.validate().map_err(|e| ConfigError::new(0, e.to_string()))
    }

    /// Every effective parameter as `key = value`, readable by [`Self::from_text`].
    pub fn to_echo(&self) -> String {
        let s = &self.solver;
        let f = |v: f64| format!("{v:?}");
        let mut out = String::from("# effective configuration\n");
        for (key, _) in CONFIG_KEYS {
            let value = match *key {
                "semi_major" => f(self.semi_major),
                "semi_minor" => f(self.semi_minor),
                "target_edge" => f(self.target_edge),
                "lambda" => f(s.lambda),
                "sigma" => f(s.sigma),
                "tau" => f(s.tau),
                "a" => f(s.a),
                "cg_sweeps" => s.cg_sweeps.to_string(),
                "gs_sweeps" => s.gs_sweeps.to_string(),
                "outer_iterations" => s.outer_iterations.to_string(),
                "gamma_tolerance" => f(s.gamma_tolerance),
                "theta_rule" => s.theta_rule.token().to_string(),
                "early_stop" => f(s.early_stop.unwrap_or(0.0)),
                "mode" => self.mode.token().to_string(),
                "output_dir" => self.output_dir.display().to_string(),
                "log_stride" => s.log_stride.to_string(),
                "snapshot_stride" => s.snapshot_stride.to_string(),
                "seed" => self.seed.to_string(),
                "mu_threshold" => f(self.mu_threshold),
                "probe_radius" => f(self.probe_radius),
                "image_size" => self.image_size.to_string(),
                _ => unreachable!("key table and echo out of sync"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn disclination_params(&self) -> DisclinationParams {
        DisclinationParams {
            mu_threshold: self.mu_threshold,
            probe_radius: self.probe_radius,
            ..DisclinationParams::default()
        }
    }
}

/// Gauge post-processing of one state.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub strips: StripDecomposition,
    pub orientation_defect: f64,
    pub disclinations: Vec<Disclination>,
}

pub fn analyze_state(
    tri: &Triangulation,
    state: &PhaseState,
    band_tolerance: f64,
    params: &DisclinationParams,
) -> Result<Analysis, ExperimentError> {
    if state.len() != tri.unknown_count() {
        return Err(FemError::DimensionMismatch {
            expected: tri.unknown_count(),
            found: state.len(),
        }
        .into());
    }
    let theta = tri.expand(&state.theta);
    let mu = tri.expand(&state.mu);
    let strips = decompose_strips(tri, &theta, band_tolerance)?;
    let eta = orientation_defect(&strips, tri);
    let disclinations = detect_disclinations(tri, &theta, &mu, params)?;
    Ok(Analysis {
        strips,
        orientation_defect: eta,
        disclinations,
    })
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn theta_csv(tri: &Triangulation, state: &PhaseState) -> String {
    let theta = tri.expand(&state.theta);
    let mut out = String::from("x,y,theta,h\n");
    for (p, t) in tri.vertices().iter().zip(&theta) {
        let _ = writeln!(out, "{},{},{},{}", num(p[0]), num(p[1]), num(*t), num(t.cos()));
    }
    out
}

pub fn fields_csv(tri: &Triangulation, ops: &OperatorSet, state: &PhaseState, strips: &StripDecomposition) -> Result<String, ExperimentError> {
    let g2 = gradient_norms_squared(ops, &state.theta)?;
    let mut out = String::from("x_c,y_c,grad_norm,strip\n");
    for f in 0..tri.face_count() {
        let c = tri.face_centroid(f);
        let _ = writeln!(out, "{},{},{},{}", num(c[0]), num(c[1]), num(g2[f].sqrt()), strips.labels[f]);
    }
    Ok(out)
}

pub fn mu_csv(tri: &Triangulation, state: &PhaseState) -> String {
    let mu = tri.expand(&state.mu);
    let mut out = String::from("x,y,mu\n");
    for (p, m) in tri.vertices().iter().zip(&mu) {
        let _ = writeln!(out, "{},{},{}", num(p[0]), num(p[1]), num(*m));
    }
    out
}

pub fn disclinations_csv(list: &[Disclination]) -> String {
    let mut out = String::from("x,y,classification,cluster_size\n");
    for d in list {
        let _ = writeln!(out, "{},{},{},{}", num(d.position[0]), num(d.position[1]), d.kind.token(), d.cluster_size);
    }
    out
}

pub fn strips_csv(strips: &StripDecomposition) -> String {
    let mut out = String::from("strip,theta_minus,theta_plus,orientation,face_count\n");
    for (i, s) in strips.strips.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{}", num(s.theta_minus), num(s.theta_plus), s.orientation, s.face_count);
    }
    out
}

/// Writes the analysis files and both heatmaps for `state` into `dir`.
pub fn write_state_artifacts(
    dir: &Path,
    tri: &Triangulation,
    ops: &OperatorSet,
    state: &PhaseState,
    analysis: &Analysis,
    image_size: usize,
) -> Result<(), ExperimentError> {
    write_file(&dir.join("theta.csv"), &theta_csv(tri, state))?;
    write_file(&dir.join("fields.csv"), &fields_csv(tri, ops, state, &analysis.strips)?)?;
    write_file(&dir.join("mu.csv"), &mu_csv(tri, state))?;
    write_file(&dir.join("disclinations.csv"), &disclinations_csv(&analysis.disclinations))?;
    write_file(&dir.join("strips.csv"), &strips_csv(&analysis.strips))?;
    write_file(&dir.join("checkpoint.txt"), &state.to_checkpoint())?;

    let theta = tri.expand(&state.theta);
    let h: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
    let image = render_heatmap(tri, Field::Vertex(&h), (-1.0, 1.0), image_size)?;
    write_file(&dir.join("h.ppm"), &image.to_ppm())?;
    let grad: Vec<f64> = gradient_norms_squared(ops, &state.theta)?.iter().map(|g| g.sqrt()).collect();
    let image = render_heatmap(tri, Field::Face(&grad), (0.0, 1.5), image_size)?;
    write_file(&dir.join("grad.ppm"), &image.to_ppm())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ModeReport {
    pub mode: Mode,
    pub dir: PathBuf,
    pub trajectory: Trajectory,
    pub analysis: Analysis,
}

impl ModeReport {
    pub fn final_state(&self) -> &PhaseState {
        &self.trajectory.final_state
    }

    pub fn summary(&self) -> String {
        let e = self.trajectory.log.last().map(|(_, e)| *e).unwrap_or(self.trajectory.initial);
        let sum_mu: f64 = self.final_state().mu.iter().map(|m| m.abs()).sum();
        let mut out = String::new();
        let _ = writeln!(out, "mode = {}", self.mode.token());
        let _ = writeln!(out, "iterations = {}", self.final_state().iteration);
        let _ = writeln!(out, "bending = {}", num(e.bending));
        let _ = writeln!(out, "well = {}", num(e.well));
        let _ = writeln!(out, "jump = {}", num(e.jump));
        let _ = writeln!(out, "total = {}", num(e.total));
        let _ = writeln!(out, "constraint_residual = {}", num(e.constraint_residual));
        let _ = writeln!(out, "sum_abs_mu = {}", num(sum_mu));
        let _ = writeln!(out, "strips = {}", self.analysis.strips.strip_count());
        let _ = writeln!(out, "orientation_defect = {}", num(self.analysis.orientation_defect));
        let _ = writeln!(out, "disclinations = {}", self.analysis.disclinations.len());
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub mesh: Triangulation,
    pub restricted: Option<ModeReport>,
    pub unrestricted: Option<ModeReport>,
}

fn run_mode(
    cfg: &ExperimentConfig,
    tri: &Triangulation,
    ops: &OperatorSet,
    mode: Mode,
) -> Result<ModeReport, ExperimentError> {
    let dir = cfg.output_dir.join(mode.token());
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_file(&dir.join("config.echo"), &cfg.to_echo())?;
    let solver_cfg = SolverConfig {
        mu_frozen: mode == Mode::Restricted,
        ..cfg.solver.clone()
    };
    let solver = Solver::new(ops, solver_cfg)?;
    let trajectory = solver.run_from(PhaseState::initial(tri))?;
    write_file(&dir.join("energy.log"), &trajectory.energy_log_text())?;
    for snap in &trajectory.snapshots {
        write_file(&dir.join(format!("snapshot_{:06}.txt", snap.iteration)), &snap.to_checkpoint())?;
    }
    let analysis = analyze_state(tri, &trajectory.final_state, cfg.solver.gamma_tolerance, &cfg.disclination_params())?;
    write_state_artifacts(&dir, tri, ops, &trajectory.final_state, &analysis, cfg.image_size)?;
    let report = ModeReport {
        mode,
        dir: dir.clone(),
        trajectory,
        analysis,
    };
    write_file(&dir.join("summary.txt"), &report.summary())?;
    Ok(report)
}

/// Meshes the ellipse and runs the configured modes; under [`Mode::Both`] the
/// two solvers run on separate threads over shared operators.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let root = &cfg.output_dir;
    std::fs::create_dir_all(root).map_err(io_err(root))?;
    write_file(&root.join("config.echo"), &cfg.to_echo())?;
    let tri = build_ellipse_mesh(cfg.semi_major, cfg.semi_minor, cfg.target_edge)?;
    write_file(&root.join("mesh.txt"), &tri.to_text())?;
    let ops = assemble_operators(&tri)?;

    let (restricted, unrestricted) = match cfg.mode {
        Mode::Restricted => (Some(run_mode(cfg, &tri, &ops, Mode::Restricted)?), None),
        Mode::Unrestricted => (None, Some(run_mode(cfg, &tri, &ops, Mode::Unrestricted)?)),
        Mode::Both => {
            let (r, u) = std::thread::scope(|scope| {
                let r = scope.spawn(|| run_mode(cfg, &tri, &ops, Mode::Restricted));
                let u = run_mode(cfg, &tri, &ops, Mode::Unrestricted);
                (r.join().expect("restricted run panicked"), u)
            });
            (Some(r?), Some(u?))
        }
    };
    Ok(ExperimentReport {
        mesh: tri,
        restricted,
        unrestricted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_forms() {
        assert_eq!(parse_scalar("0.5"), Some(0.5));
        assert_eq!(parse_scalar("pi"), Some(PI));
        assert_eq!(parse_scalar("32pi"), Some(32.0 * PI));
        assert_eq!(parse_scalar("32 * pi"), Some(32.0 * PI));
        assert_eq!(parse_scalar("pi/4"), Some(PI / 4.0));
        assert_eq!(parse_scalar("-pi"), Some(-PI));
        assert_eq!(parse_scalar("pie"), None);
        assert_eq!(parse_scalar("two"), None);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text("mode = restricted\ntau = 0.05 # smaller\nearly_stop = 1e-9\ntheta_rule = unweighted\n").unwrap();
        let back = ExperimentConfig::from_text(&cfg.to_echo()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.solver.early_stop, Some(1e-9));
        assert_eq!(ExperimentConfig::from_text(&ExperimentConfig::default().to_echo()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn config_errors_name_the_line() {
        let e = ExperimentConfig::from_text("# header\nlambda = 0.5\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, 3);
        let e = ExperimentConfig::from_text("mode = sideways").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(ExperimentConfig::from_text("lambda 0.5").is_err());
        let cfg = ExperimentConfig::from_text("lambda = -1").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn every_key_is_settable() {
        for (key, _) in CONFIG_KEYS {
            let value = match *key {
                "theta_rule" => "unweighted",
                "mode" => "restricted",
                "output_dir" => "elsewhere",
                _ => "3",
            };
            let mut cfg = ExperimentConfig::default();
            cfg.set(key, value).unwrap();
            assert_ne!(cfg, ExperimentConfig::default(), "{key}");
        }
    }

    #[test]
    fn small_restricted_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            semi_major: 2.0 * PI,
            semi_minor: 2.0 * PI,
            target_edge: 0.5,
            mode: Mode::Restricted,
            output_dir: dir.path().to_path_buf(),
            image_size: 40,
            solver: SolverConfig { outer_iterations: 20, snapshot_stride: 10, ..Default::default() },
            ..Default::default()
        };
        let report = run_experiment(&cfg).unwrap();
        assert!(report.unrestricted.is_none());
        let r = report.restricted.unwrap();
        assert!(r.analysis.disclinations.is_empty());
        for name in [
            "config.echo", "energy.log", "theta.csv", "fields.csv", "mu.csv", "disclinations.csv",
            "strips.csv", "checkpoint.txt", "h.ppm", "grad.ppm", "summary.txt", "snapshot_000010.txt",
        ] {
            assert!(r.dir.join(name).is_file(), "{name}");
        }
        let disc = std::fs::read_to_string(r.dir.join("disclinations.csv")).unwrap();
        assert_eq!(disc.lines().count(), 1);
        let log = std::fs::read_to_string(r.dir.join("energy.log")).unwrap();
        assert_eq!(log.lines().count(), 1 + 1 + 2);
        assert!(dir.path().join("mesh.txt").is_file());
    }
}
