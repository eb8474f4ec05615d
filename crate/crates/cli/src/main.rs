use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::{Command, Forcing, Manifest, MeasureConfig, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(name = "pmulap", version, about = "Finite-element experiments for the (p, μ)-Laplacian")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve -Δ_p u = f μ with zero boundary values.
    Poisson(Flags),
    /// Minimize the Rayleigh quotient ‖∇u‖_p^p / ‖u‖_{p,μ}^p.
    Eigen(Flags),
    /// Fit the ball-growth exponent of the measure.
    MeasureReport(Flags),
    /// Eigenfunction regularity diagnostics.
    Analyze(Flags),
    /// Borderline p = 2 experiment with the log-Cantor measure.
    Counterexample(Flags),
}

#[derive(Args)]
struct Flags {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Repeatable; three or more seeds enable the simplicity check.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// lebesgue | sierpinski:DEPTH | ifs:PATH:DEPTH | log-cantor:Q:LEVEL
    #[arg(long)]
    measure: Option<String>,
    /// unit-square | unit-triangle | polygon:x,y;x,y;...
    #[arg(long)]
    domain: Option<String>,
    /// Mesh in text format, replacing --domain and --resolution.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// one | sine | const:C
    #[arg(long)]
    forcing: Option<String>,
    #[arg(long)]
    grad_reg: Option<f64>,
    #[arg(long)]
    tol_energy: Option<f64>,
    #[arg(long)]
    tol_residual: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    level: Option<usize>,
    /// Comma-separated mesh resolutions for the counterexample.
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    #[arg(long)]
    pair_budget: Option<usize>,
    #[arg(long)]
    sup_radius: Option<f64>,
}

fn parse_domain(spec: &str) -> Result<pmulap::Domain, CliError> {
    match spec {
        "unit-square" => Ok(pmulap::Domain::UnitSquare),
        "unit-triangle" => Ok(pmulap::Domain::UnitTriangle),
        _ => {
            let body = spec
                .strip_prefix("polygon:")
                .ok_or_else(|| CliError::Validation(format!("unrecognized domain '{spec}'")))?;
            let bad = || CliError::Validation(format!("bad polygon vertex list '{body}'"));
            let vertices = body
                .split(';')
                .map(|v| {
                    let (x, y) = v.split_once(',').ok_or_else(bad)?;
                    Ok([x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?])
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(pmulap::Domain::Polygon(pmulap::Polygon::new(vertices)?))
        }
    }
}

fn resolve(command: Command, f: Flags) -> Result<RunConfig, CliError> {
    let mut cfg = match &f.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::new(command),
    };
    cfg.command = command;
    if let Some(v) = f.out {
        cfg.output_dir = v;
    }
    let params = &mut cfg.params;
    if let Some(v) = f.p {
        params.p = v;
    }
    if let Some(v) = f.q {
        params.q = v;
    }
    if let Some(v) = f.grad_reg {
        params.grad_reg = v;
    }
    if let Some(v) = f.tol_energy {
        params.tol_energy = v;
    }
    if let Some(v) = f.tol_residual {
        params.tol_residual = v;
    }
    if let Some(v) = f.max_iter {
        params.max_iter = v;
    }
    if let Some(v) = f.resolution {
        cfg.resolution = v;
    }
    if !f.seeds.is_empty() {
        cfg.seeds = f.seeds;
    }
    if let Some(v) = f.measure {
        cfg.measure = MeasureConfig::parse(&v)?;
    }
    if let Some(v) = f.domain {
        cfg.domain = parse_domain(&v)?;
    }
    if let Some(v) = f.mesh {
        cfg.mesh_file = Some(v);
    }
    if let Some(v) = f.forcing {
        cfg.forcing = Forcing::parse(&v)?;
    }
    if let Some(v) = f.level {
        cfg.counterexample.level = v;
    }
    if let Some(v) = f.resolutions {
        cfg.counterexample.resolutions = v;
    }
    if let Some(v) = f.pair_budget {
        cfg.analysis.pair_budget = v;
        cfg.counterexample.pair_budget = v;
    }
    if let Some(v) = f.sup_radius {
        cfg.analysis.sup_radius = Some(v);
    }
    if cfg.seeds.is_empty() {
        cfg.seeds = cfg.seeds();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    std::fs::write(&tmp, contents).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, &dest).map_err(|e| CliError::Io(format!("{}: {e}", dest.display())))
}

fn execute(command: Command, flags: Flags) -> Result<bool, CliError> {
    let cfg = resolve(command, flags)?;
    let start = Instant::now();
    let mut out = commands::run(&cfg)?;
    let mut seen = std::collections::HashSet::new();
    out.notes.retain(|n| seen.insert(n.clone()));
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, contents) in &out.artifacts {
        write_atomic(dir, name, contents)?;
    }
    let mut artifacts: Vec<String> = out.artifacts.iter().map(|(n, _)| n.clone()).collect();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        tool: "pmulap".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        seeds: cfg.seeds(),
        config: cfg.clone(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        converged: out.converged,
        artifacts,
        notes: out.notes.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Numerical(e.to_string()))?;
    write_atomic(dir, "manifest.json", &text)?;
    for note in &out.notes {
        eprintln!("note: {note}");
    }
    Ok(out.converged)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Sub::Poisson(f) => (Command::Poisson, f),
        Sub::Eigen(f) => (Command::Eigen, f),
        Sub::MeasureReport(f) => (Command::MeasureReport, f),
        Sub::Analyze(f) => (Command::Analyze, f),
        Sub::Counterexample(f) => (Command::Counterexample, f),
    };
    match execute(command, flags) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("{}", CliError::Numerical("solver did not converge; artifacts are flagged".into()).to_json());
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
