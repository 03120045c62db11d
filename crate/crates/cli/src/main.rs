//! Command-line driver: run a flow, emit a Wulff shape, re-check a
//! diagnostics file, or run a self-convergence study.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wulff_flow::config::{parse_config, ConfigError};
use wulff_flow::diagnostics::{dissipation_report, gauss_bonnet_spread, iteration_bound_check, DiagnosticsRecord};
use wulff_flow::flow::{run_flow, self_convergence_study, FlowError};
use wulff_flow::io::{load_diagnostics_csv, save_curve_csv, save_diagnostics_csv, save_trajectory_jsonl, IoError};
use wulff_flow::svg::render_svg;

const EXIT_VIOLATION: u8 = 1;
const EXIT_RUN_FAILED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

/// Relative Gauss-Bonnet drift tolerated by `diagnose`.
const GB_TOL: f64 = 1e-3;
/// Area drift tolerated by `diagnose`.
const AREA_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "wulff-flow", version, about = "Volume-preserving anisotropic curvature flow of planar curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow and write trajectory.jsonl, diagnostics.csv and final.svg.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write the area-1 Wulff shape of the configured anisotropy as a curve CSV.
    Wulff {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Node count (defaults to the configured n_nodes).
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Re-check the dissipation, area, Gauss-Bonnet and iteration-bound reports of a diagnostics CSV.
    Diagnose {
        csv: PathBuf,
        /// Flag steps with ||d xi_k||^2 / ||d xi_{k-1}||^2 > 1 + C h.
        #[arg(long)]
        growth_bound: Option<f64>,
    },
    /// Self-convergence study over a decreasing list of time steps.
    Convergence {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long = "h", value_delimiter = ',', required = true)]
        h: Vec<f64>,
        /// Also write the table as CSV.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl ToString) -> Self {
        Failure { code: EXIT_USAGE, msg: msg.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = if matches!(e, ConfigError::Io { .. }) { EXIT_IO } else { EXIT_USAGE };
        Failure { code, msg: e.to_string() }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = if matches!(e, IoError::Io { .. }) { EXIT_IO } else { EXIT_USAGE };
        Failure { code, msg: e.to_string() }
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Io(io) => io.into(),
            FlowError::Step { .. } => Failure { code: EXIT_RUN_FAILED, msg: e.to_string() },
            other => Failure::usage(other),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure { code: EXIT_IO, msg: format!("{}: {e}", path.display()) }
}

fn run(config: &Path, out: &Path) -> Result<u8, Failure> {
    let cfg = parse_config(config)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let traj = run_flow(&cfg)?;
    save_trajectory_jsonl(&out.join("trajectory.jsonl"), &traj)?;
    save_diagnostics_csv(&out.join("diagnostics.csv"), traj.diagnostics())?;
    let target = if cfg.output.show_target {
        let w = cfg.anisotropy.wulff_shape(1.0, cfg.n_nodes.max(64)).map_err(Failure::usage)?;
        w.with_area(1.0).and_then(|w| w.translated(traj.last().centroid() - w.centroid())).ok()
    } else {
        None
    };
    render_svg(&traj, cfg.output.svg_every, &out.join("final.svg"), target.as_ref())?;

    let last = traj.diagnostics().last().expect("initial record");
    println!("terminated: {}", traj.terminated_reason());
    println!("steps: {}", traj.steps());
    println!("t: {}", last.t);
    println!("perimeter_phi: {}", last.perimeter_phi);
    println!("area: {}", last.area);
    if let Some((step, err)) = traj.failure() {
        eprintln!("step {step}: {err}");
    }
    Ok(if traj.terminated_reason().is_success() { 0 } else { EXIT_RUN_FAILED })
}

fn wulff(config: &Path, out: &Path, nodes: Option<usize>) -> Result<u8, Failure> {
    let cfg = parse_config(config)?;
    let w = cfg.anisotropy.wulff_shape(1.0, nodes.unwrap_or(cfg.n_nodes)).map_err(Failure::usage)?;
    let w = w.with_area(1.0).map_err(Failure::usage)?;
    save_curve_csv(out, w.nodes())?;
    println!("wrote {} nodes, area {}", w.len(), w.enclosed_area());
    Ok(0)
}

/// Time step recovered from the `t` and `step` columns.
fn infer_h(records: &[DiagnosticsRecord]) -> Option<f64> {
    records.iter().find(|r| r.step > 0).map(|r| r.t / r.step as f64)
}

fn diagnose(csv: &Path, growth_bound: Option<f64>) -> Result<u8, Failure> {
    let records = load_diagnostics_csv(csv)?;
    if records.is_empty() {
        return Err(Failure::usage("diagnostics file has no records"));
    }
    let h = infer_h(&records).ok_or_else(|| Failure::usage("need at least one step to infer h"))?;
    let mut violations = 0;

    match dissipation_report(&records, records[0].perimeter_phi, h) {
        Ok(rep) => {
            let min = rep.margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
            println!(
                "dissipation: ok, {} steps, min margin {min:e}, total {:e}, telescoped slack {:e}",
                rep.margins.len(),
                rep.total_dissipation,
                rep.telescoped_slack
            );
        }
        Err(e) => {
            violations += 1;
            println!("dissipation: VIOLATED ({e})");
        }
    }

    let area = records.iter().map(|r| (r.area - 1.0).abs()).fold(0.0, f64::max);
    if area <= AREA_TOL {
        println!("area: ok, max |area - 1| = {area:e}");
    } else {
        violations += 1;
        println!("area: VIOLATED, max |area - 1| = {area:e}");
    }

    let gb = gauss_bonnet_spread(&records);
    if gb <= GB_TOL {
        println!("gauss_bonnet: ok, relative spread {gb:e}");
    } else {
        violations += 1;
        println!("gauss_bonnet: VIOLATED, relative spread {gb:e}");
    }

    match iteration_bound_check(&records, h, growth_bound.unwrap_or(f64::INFINITY)) {
        Ok(rep) if rep.flagged.is_empty() => println!("iteration_bound: ok, max (r_k - 1)/h = {:e} over {} ratios", rep.max_growth, rep.ratios.len()),
        Ok(rep) => {
            violations += 1;
            println!("iteration_bound: VIOLATED at steps {:?}, max (r_k - 1)/h = {:e}", rep.flagged, rep.max_growth);
        }
        Err(e) => println!("iteration_bound: skipped ({e})"),
    }

    if records.iter().any(|r| !r.is_finite()) {
        violations += 1;
        println!("finite: VIOLATED");
    }
    Ok(if violations == 0 { 0 } else { EXIT_VIOLATION })
}

fn convergence(config: &Path, h: &[f64], out: Option<&Path>) -> Result<u8, Failure> {
    let cfg = parse_config(config)?;
    let table = self_convergence_study(&cfg, h)?;
    let csv = table.to_csv();
    print!("{csv}");
    if let Some(p) = table.observed_order() {
        println!("observed order: {p}");
    }
    if let Some(path) = out {
        fs::write(path, &csv).map_err(io_err(path))?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Wulff { config, out, nodes } => wulff(config, out, *nodes),
        Command::Diagnose { csv, growth_bound } => diagnose(csv, *growth_bound),
        Command::Convergence { config, h, out } => convergence(config, h, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
