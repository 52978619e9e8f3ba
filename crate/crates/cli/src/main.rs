use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noisecontrol::experiment::{model_summary, pulse_for, sweep, verify_bounds, write_rows_csv, ExperimentConfig};
use noisecontrol::lindblad::{first_passage_time, propagate_lindblad, PropagationOptions};
use noisecontrol::states::DensityMatrix;
use noisecontrol::Error;
use serde::Serialize;

const EXIT_CONFIG: u8 = 2;
const EXIT_UNCONVERGED: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(name = "noisecontrol", version, about = "Noisy quantum control experiments: simulation, pulse synthesis and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dimensions, control norms, Lie closure rank and drift spectrum.
    Model(Common),
    /// Synthesize (or load) a pulse and write the full noisy trajectory.
    Propagate(Common),
    /// Synthesize a pulse for the first configured transfer.
    Synthesize(Common),
    /// Check the time and purity bounds at a single point.
    VerifyBounds(Common),
    /// Run the full grid and fit log-log slopes against N.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (file outputs) or file (JSON-only commands).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    /// Record every k-th trajectory sample.
    #[arg(long)]
    stride: Option<usize>,
    /// System sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Noise strengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Pulse CSV to use instead of synthesizing.
    #[arg(long)]
    pulse: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Json(_) => Failure::Config(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        if let Some(s) = self.stride {
            cfg.stride = s;
        }
        if let Some(n) = &self.n {
            cfg.n_values = n.clone();
        }
        if let Some(eta) = &self.eta {
            cfg.eta_values = eta.clone();
        }
        if let Some(eps) = self.epsilon {
            cfg.epsilon = eps;
        }
        if let Some(p) = &self.pulse {
            cfg.pulse_csv = Some(p.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("results"));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Print JSON to stdout and, if `--out` was given, also to that file.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value)?);
    if let Some(path) = out {
        write_json(value, path)?;
    }
    Ok(())
}

fn cmd_model(args: &Common) -> Result<u8, Failure> {
    let cfg = args.load()?;
    let summaries = cfg.n_values.iter().map(|&n| model_summary(&cfg, n)).collect::<Result<Vec<_>, _>>()?;
    emit(&summaries, args.out.as_deref())?;
    Ok(0)
}

fn first_point(cfg: &ExperimentConfig) -> (usize, f64, u64) {
    (cfg.n_values[0], cfg.eta_values[0], cfg.seeds[0])
}

fn cmd_synthesize(args: &Common) -> Result<u8, Failure> {
    let mut cfg = args.load()?;
    cfg.pulse_csv = None;
    let (n, _, seed) = first_point(&cfg);
    let model = cfg.model(n)?;
    let spec = cfg.transformation(&model, seed)?;
    let res = noisecontrol::grape::synthesize(&model, spec.psi_i(), spec.psi_f(), &cfg.synthesis_config(&model, seed))?;
    let dir = args.out_dir()?;
    res.pulse.write_csv(BufWriter::new(File::create(dir.join("pulse.csv"))?))?;
    fs::write(dir.join("synthesis.json"), res.to_json()? + "\n")?;
    eprintln!("fidelity {:.6} after {} iterations", res.fidelity, res.iterations);
    Ok(if res.converged { 0 } else { EXIT_UNCONVERGED })
}

fn cmd_propagate(args: &Common) -> Result<u8, Failure> {
    let cfg = args.load()?;
    let (n, eta, seed) = first_point(&cfg);
    let model = cfg.model(n)?;
    let spec = cfg.transformation(&model, seed)?;
    let (pulse, synthesis) = pulse_for(&cfg, &model, &spec, seed)?;
    if synthesis.as_ref().is_some_and(|s| !s.converged) {
        eprintln!("synthesis did not converge");
        return Ok(EXIT_UNCONVERGED);
    }
    let pulse = pulse.with_eta(eta)?;
    let rho0 = DensityMatrix::pure(&spec.psi_i().to_vector(&model)?)?;
    let opts = PropagationOptions { keep_states: false, ..cfg.propagation_options() };
    let mut traj = propagate_lindblad(&model, &pulse, &rho0, &opts)?;
    traj.first_passage = first_passage_time(&traj, &spec)?;
    let dir = args.out_dir()?;
    traj.write_csv(BufWriter::new(File::create(dir.join("trajectory.csv"))?))?;
    pulse.write_csv(BufWriter::new(File::create(dir.join("pulse.csv"))?))?;
    write_json(&traj.summary(&pulse), &dir.join("trajectory.json"))?;
    Ok(0)
}

fn cmd_verify(args: &Common) -> Result<u8, Failure> {
    let cfg = args.load()?;
    let report = verify_bounds(&cfg)?;
    emit(&report, args.out.as_deref())?;
    Ok(if !report.row.is_valid() {
        eprintln!("synthesis did not converge or the target distance was not reached");
        EXIT_UNCONVERGED
    } else if report.row.bound_violated {
        eprintln!("bound violated");
        EXIT_VIOLATION
    } else {
        0
    })
}

fn cmd_sweep(args: &Common) -> Result<u8, Failure> {
    let cfg = args.load()?;
    let out = sweep(&cfg)?;
    let dir = args.out_dir()?;
    write_rows_csv(&out.rows, BufWriter::new(File::create(dir.join("sweep.csv"))?))?;
    write_json(&out.summary, &dir.join("summary.json"))?;
    for fit in &out.summary.fits {
        eprintln!("eta {:e}: slope of {} vs N = {:.3} ({} points)", fit.eta, fit.quantity, fit.slope, fit.points);
    }
    if !out.summary.excluded_rows.is_empty() {
        eprintln!("{} unconverged rows excluded", out.summary.excluded_rows.len());
    }
    Ok(if out.summary.bound_violations > 0 { EXIT_VIOLATION } else { 0 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Model(a) => cmd_model(a),
        Command::Propagate(a) => cmd_propagate(a),
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::VerifyBounds(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
