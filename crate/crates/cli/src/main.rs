use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stripes_core::bregman::PhaseState;
use stripes_core::experiment::{
    analyze_state, disclinations_csv, fields_csv, strips_csv, ExperimentConfig, ExperimentError, CONFIG_KEYS,
};
use stripes_core::fem::{assemble_operators, gradient_norms_squared};
use stripes_core::render::{render_heatmap, Field};
use stripes_core::{build_ellipse_mesh, Triangulation};

/// Failures, split by the exit status they map to.
enum Failure {
    /// Bad configuration, unreadable input or an I/O error.
    Usage(String),
    Solver(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Solver(_) => Failure::Solver(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn key_help(key: &str) -> &'static str {
    CONFIG_KEYS.iter().find(|(k, _)| *k == key).map_or("", |(_, doc)| doc)
}

macro_rules! key_flags {
    ($($field:ident),* $(,)?) => {
        /// Overrides for individual config keys; these win over `--config`.
        #[derive(Args, Debug, Default)]
        struct KeyFlags {
            $(
                #[arg(long, value_name = "VALUE", allow_hyphen_values = true, help = key_help(stringify!($field)))]
                $field: Option<String>,
            )*
        }

        impl KeyFlags {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.as_str()));
                    }
                )*
                out
            }
        }
    };
}

key_flags!(
    semi_major,
    semi_minor,
    target_edge,
    lambda,
    sigma,
    tau,
    a,
    cg_sweeps,
    gs_sweeps,
    outer_iterations,
    gamma_tolerance,
    theta_rule,
    early_stop,
    mode,
    output_dir,
    log_stride,
    snapshot_stride,
    seed,
    mu_threshold,
    probe_radius,
    image_size,
);

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(flatten)]
    keys: KeyFlags,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = read(path)?;
            cfg.apply_text(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        }
        for (key, value) in self.keys.pairs() {
            cfg.set(key, value).map_err(|e| Failure::Usage(format!("--{key}: {}", e.message)))?;
        }
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct StateArgs {
    /// Mesh written by `stripes mesh` or `stripes run`.
    #[arg(long, value_name = "PATH")]
    mesh: PathBuf,
    /// Checkpoint written by `stripes run`.
    #[arg(long, value_name = "PATH")]
    checkpoint: PathBuf,
}

impl StateArgs {
    fn load(&self) -> Result<(Triangulation, PhaseState), Failure> {
        let tri = Triangulation::from_text(&read(&self.mesh)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", self.mesh.display())))?;
        let state = PhaseState::from_checkpoint(&read(&self.checkpoint)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", self.checkpoint.display())))?;
        if state.len() != tri.unknown_count() {
            return Err(Failure::Usage(format!(
                "checkpoint has {} unknowns but the mesh has {}",
                state.len(),
                tri.unknown_count()
            )));
        }
        Ok((tri, state))
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RenderField {
    /// cos theta at vertices
    H,
    /// theta at vertices
    Theta,
    /// |grad theta| per face
    Grad,
    /// mu at vertices
    Mu,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mesh the configured ellipse and write it as text.
    Mesh {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Defaults to `<output_dir>/mesh.txt`.
        #[arg(long, value_name = "PATH")]
        output: Option<PathBuf>,
    },
    /// Run the restricted and/or unrestricted experiment.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Strip decomposition, orientations and disclinations of a checkpoint.
    Analyze {
        #[command(flatten)]
        state: StateArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Heatmap of one field of a checkpoint as a PPM image.
    Render {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, value_enum, default_value = "h")]
        field: RenderField,
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
        /// Color range; defaults depend on the field.
        #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        /// Pixels along the long axis.
        #[arg(long, default_value_t = 800)]
        size: usize,
    },
}

#[derive(Parser, Debug)]
#[command(name = "stripes", version, about = "Stripe patterns with defects on elliptical domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::Usage(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn mesh(cfg: &ConfigArgs, output: Option<&Path>) -> Result<(), Failure> {
    let cfg = cfg.load()?;
    let tri = build_ellipse_mesh(cfg.semi_major, cfg.semi_minor, cfg.target_edge)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let path = output.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("mesh.txt"));
    write(&path, &tri.to_text())?;
    let q = tri.quality();
    println!("{}", path.display());
    println!("vertices = {} ({} interior)", q.vertex_count, tri.unknown_count());
    println!("edges = {}", q.edge_count);
    println!("faces = {}", q.face_count);
    println!("min_angle = {:.2} deg", q.min_angle_degrees);
    println!("max_edge = {:.4}", q.max_edge);
    Ok(())
}

fn run(cfg: &ConfigArgs) -> Result<(), Failure> {
    let cfg = cfg.load()?;
    let report = stripes_core::run_experiment(&cfg)?;
    for m in [&report.restricted, &report.unrestricted].into_iter().flatten() {
        println!("[{}]", m.dir.display());
        print!("{}", m.summary());
    }
    Ok(())
}

fn analyze(state: &StateArgs, cfg: &ConfigArgs) -> Result<(), Failure> {
    let cfg = cfg.load()?;
    let (tri, state) = state.load()?;
    let ops = assemble_operators(&tri).map_err(|e| Failure::Usage(e.to_string()))?;
    let analysis = analyze_state(&tri, &state, cfg.solver.gamma_tolerance, &cfg.disclination_params())?;
    let dir = &cfg.output_dir;
    write(&dir.join("strips.csv"), &strips_csv(&analysis.strips))?;
    write(&dir.join("disclinations.csv"), &disclinations_csv(&analysis.disclinations))?;
    write(&dir.join("fields.csv"), &fields_csv(&tri, &ops, &state, &analysis.strips)?)?;
    println!("strips = {}", analysis.strips.strip_count());
    let orientations: Vec<String> = analysis.strips.orientations().iter().map(i8::to_string).collect();
    println!("orientations = {}", orientations.join(" "));
    println!("orientation_defect = {:.16e}", analysis.orientation_defect);
    println!("disclinations = {}", analysis.disclinations.len());
    for d in &analysis.disclinations {
        println!("  {} at ({:.4}, {:.4}), {} vertices", d.kind.token(), d.position[0], d.position[1], d.cluster_size);
    }
    Ok(())
}

fn render(state: &StateArgs, field: RenderField, output: &Path, range: Option<&[f64]>, size: usize) -> Result<(), Failure> {
    let (tri, state) = state.load()?;
    let usage = |e: &dyn std::fmt::Display| Failure::Usage(e.to_string());
    let extent = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let values: Vec<f64>;
    let (data, default_range) = match field {
        RenderField::H => {
            values = tri.expand(&state.theta).iter().map(|t| t.cos()).collect();
            (Field::Vertex(&values), (-1.0, 1.0))
        }
        RenderField::Theta => {
            values = tri.expand(&state.theta);
            let (lo, hi) = extent(&values);
            (Field::Vertex(&values), (lo, if hi > lo { hi } else { lo + 1.0 }))
        }
        RenderField::Grad => {
            let ops = assemble_operators(&tri).map_err(|e| usage(&e))?;
            values = gradient_norms_squared(&ops, &state.theta).map_err(|e| usage(&e))?.iter().map(|g| g.sqrt()).collect();
            (Field::Face(&values), (0.0, 1.5))
        }
        RenderField::Mu => {
            values = tri.expand(&state.mu);
            let m = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let m = if m > 0.0 { m } else { 1.0 };
            (Field::Vertex(&values), (-m, m))
        }
    };
    let range = range.map(|r| (r[0], r[1])).unwrap_or(default_range);
    let image = render_heatmap(&tri, data, range, size).map_err(|e| usage(&e))?;
    write(output, &image.to_ppm())?;
    println!("{}: {}x{}", output.display(), image.width, image.height);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Mesh { cfg, output } => mesh(cfg, output.as_deref()),
        Command::Run { cfg } => run(cfg),
        Command::Analyze { state, cfg } => analyze(state, cfg),
        Command::Render { state, field, output, range, size } => render(state, *field, output, range.as_deref(), *size),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver aborted: {msg}");
            ExitCode::from(2)
        }
    }
}
