use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use calabi_core::flow::{constant_target, fit_decay, make_delaunay_in, non_delaunay_edges, run_flow, FlowConfig, FlowError};
use calabi_core::geometry::{curvature, delaunay_margin, gauss_bonnet_residual, total_area};
use calabi_core::io::{self, IoError};

#[derive(Parser)]
#[command(name = "calabi", version, about = "Discrete conformal metrics by combinatorial Calabi flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a metric file and print its combinatorics.
    Validate { metric: PathBuf },
    /// Print the curvature at every vertex.
    Curvature { metric: PathBuf },
    /// List non-Delaunay edges, optionally flipping them away.
    Delaunay {
        metric: PathBuf,
        #[arg(long, requires = "out")]
        fix: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flow to a target curvature.
    Flow(FlowArgs),
    /// Fit the decay rate of the energy column of a trace.
    Decay { trace: PathBuf },
    /// Convert a triangle OBJ mesh into a Euclidean metric file.
    ImportObj { obj: PathBuf, out: PathBuf },
}

#[derive(Args)]
struct FlowArgs {
    metric: PathBuf,
    /// File of `k <vertex> <value>` lines; unlisted vertices get 0.
    #[arg(long, conflicts_with = "constant", required_unless_present = "constant")]
    target: Option<PathBuf>,
    /// Uniform target: 2πχ/n (Euclidean) or 0 (hyperbolic, needs χ < 0).
    #[arg(long)]
    constant: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Initial step size.
    #[arg(long, default_value_t = 1e-2)]
    dt: f64,
    #[arg(long, default_value_t = 1e3)]
    t_max: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: usize,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Final metric; the conformal factor goes next to it with a `.u` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Io(IoError),
    Flow(FlowError),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e)
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        Failure::Flow(e)
    }
}

impl Failure {
    fn report(&self) {
        let (code, msg) = match self {
            Failure::Io(e) => (e.code(), e.to_string()),
            Failure::Flow(e) => (e.code(), e.to_string()),
        };
        eprintln!("error: {code}: {msg}");
    }
}

fn flow_err<E: Into<FlowError>>(e: E) -> Failure {
    Failure::Flow(e.into())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".u");
    PathBuf::from(s)
}

fn validate(path: &Path) -> Result<ExitCode, Failure> {
    let (t, m) = io::read_metric(path)?;
    let residual = gauss_bonnet_residual(&t, &m).map_err(flow_err)?;
    println!("geometry {}", m.kind().name());
    println!("chi {}", t.euler_characteristic());
    println!("vertices {}", t.n_vertices());
    println!("edges {}", t.n_edges());
    println!("faces {}", t.n_faces());
    println!("area {:.16e}", total_area(&t, &m).map_err(flow_err)?);
    println!("gauss_bonnet_residual {residual:.3e}");
    Ok(ExitCode::SUCCESS)
}

fn print_curvature(path: &Path) -> Result<ExitCode, Failure> {
    let (t, m) = io::read_metric(path)?;
    let k = curvature(&t, &m).map_err(flow_err)?;
    for (i, x) in k.iter().enumerate() {
        println!("v{i} {x:.16e}");
    }
    println!("sum {:.16e}", k.iter().sum::<f64>());
    Ok(ExitCode::SUCCESS)
}

fn delaunay(path: &Path, fix: bool, out: Option<&Path>) -> Result<ExitCode, Failure> {
    let (mut t, mut m) = io::read_metric(path)?;
    let cfg = FlowConfig::default();
    let bad = non_delaunay_edges(&t, &m, cfg.eps_del).map_err(flow_err)?;
    for &e in &bad {
        let margin = delaunay_margin(&t, &m, e).map_err(flow_err)?;
        println!("non_delaunay {e} margin {margin:.6e}");
    }
    if bad.is_empty() {
        println!("delaunay");
    }
    if fix {
        let flips = make_delaunay_in(&mut t, &mut m, &cfg, None)?;
        println!("flips {flips}");
        if let Some(out) = out {
            io::write_metric(out, &t, &m)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn flow(a: &FlowArgs) -> Result<ExitCode, Failure> {
    let (t, m) = io::read_metric(&a.metric)?;
    let target = match &a.target {
        Some(p) => io::read_target(p, t.n_vertices(), 0.0)?,
        None => constant_target(m.kind(), &t)?,
    };
    let cfg = FlowConfig {
        tol_curv: a.tol,
        dt_init: a.dt,
        dt_max: FlowConfig::default().dt_max.max(a.dt),
        t_max: a.t_max,
        max_steps: a.max_steps,
        ..FlowConfig::default()
    };
    let (run, code) = match run_flow(t, m, &target, &cfg) {
        Ok(run) => (run, ExitCode::SUCCESS),
        Err(FlowError::NotConverged(run)) => (*run, ExitCode::from(2)),
        Err(e) => return Err(e.into()),
    };
    if let Some(p) = &a.trace {
        io::write_trace(p, &run.trace)?;
    }
    if let Some(p) = &a.out {
        let s = &run.state;
        io::write_metric(p, s.triangulation(), s.metric())?;
        io::write_conformal_factor(&sidecar(p), s.u())?;
    }
    let s = &run.state;
    println!("converged {}", run.final_error < cfg.tol_curv);
    println!("t {:.6e}", s.t());
    println!("steps {}", run.steps);
    println!("flips {}", s.cumulative_flips());
    println!("max_abs_curv_err {:.3e}", run.final_error);
    println!("calabi_energy {:.3e}", s.calabi_energy());
    if code != ExitCode::SUCCESS {
        eprintln!("error: not_converged: t_max or step limit reached");
    }
    Ok(code)
}

fn decay(path: &Path) -> Result<ExitCode, Failure> {
    let trace = io::read_trace(path)?;
    let fit = fit_decay(&trace)?;
    println!("slope {:.6e}", fit.slope);
    println!("r_squared {:.6}", fit.r_squared);
    println!("points {}", fit.points);
    Ok(ExitCode::SUCCESS)
}

fn import_obj(obj: &Path, out: &Path) -> Result<ExitCode, Failure> {
    let (t, m) = io::import_obj(obj)?;
    io::write_metric(out, &t, &m)?;
    println!("vertices {} edges {} faces {} chi {}", t.n_vertices(), t.n_edges(), t.n_faces(), t.euler_characteristic());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Exit status 2 is reserved for runs that did not converge.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Validate { metric } => validate(metric),
        Command::Curvature { metric } => print_curvature(metric),
        Command::Delaunay { metric, fix, out } => delaunay(metric, *fix, out.as_deref()),
        Command::Flow(a) => flow(a),
        Command::Decay { trace } => decay(trace),
        Command::ImportObj { obj, out } => import_obj(obj, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            f.report();
            ExitCode::from(1)
        }
    }
}
