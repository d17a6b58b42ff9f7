//! `polystab` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use polystab::{
    adversarial_signal, certify, estimate_ues, lift_memoryless, load_system, parse_signal, simulate, value_iteration,
    Certificate, CertifyConfig, LiftedController, MemoryController, MemorylessController, ModeDependentController,
    SimulationSpec, SwitchedSystem, SynthesisConfig, SynthesisStatus,
};
use serde_json::json;

// Keeps the disturbance stream apart from the random signal stream when both
// are derived from `--seed`.
const DISTURBANCE_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Parser)]
#[command(name = "polystab", version, about = "Polyhedral Lyapunov norms and feedback for switched linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run value iteration and write the certificate.
    Synthesize(SynthesizeArgs),
    /// Re-validate a certificate against its system.
    Certify(CertifyArgs),
    /// Simulate the closed loop of a certificate's feedback.
    Simulate(SimulateArgs),
    /// Run mode-independent and mode-dependent synthesis side by side.
    Compare(CompareArgs),
    /// Write the unit ball of a planar certificate as a closed polygon.
    Ball(BallArgs),
}

#[derive(Args)]
struct SynthesisFlags {
    /// Grid directions on the full circle or sphere.
    #[arg(long, default_value_t = 360)]
    directions: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long = "max-iters", default_value_t = 500)]
    max_iters: usize,
    /// Divergence threshold on Bellman values.
    #[arg(long, default_value_t = 1e6)]
    vmax: f64,
}

impl SynthesisFlags {
    fn config(&self, mode_dependent: bool) -> SynthesisConfig {
        SynthesisConfig {
            directions: self.directions,
            tol: self.tol,
            max_iters: self.max_iters,
            v_max: self.vmax,
            mode_dependent,
        }
    }
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Feedback sees the state only (default).
    #[arg(long = "mode-independent", conflicts_with = "mode_dependent")]
    mode_independent: bool,
    /// Feedback sees the state and the current mode.
    #[arg(long = "mode-dependent")]
    mode_dependent: bool,
    #[command(flatten)]
    synthesis: SynthesisFlags,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    cert: PathBuf,
    /// Report JSON destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Residual test grid size; defaults to twice the synthesis directions.
    #[arg(long)]
    grid: Option<usize>,
    /// Maximum accepted relative Bellman residual.
    #[arg(long, default_value_t = 5e-3)]
    tol: f64,
    /// Seed of the norm-axiom samples.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    cert: PathBuf,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// random, adversarial, periodic:<i,j,...> or explicit:<i,...>.
    #[arg(long, default_value = "random")]
    signal: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Radius of the disturbance ball.
    #[arg(long, default_value_t = 0.0)]
    disturbance: f64,
    /// Trajectory CSV destination; standard output when absent.
    #[arg(long, alias = "out")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    system: PathBuf,
    /// Comparison report JSON destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    synthesis: SynthesisFlags,
}

#[derive(Args)]
struct BallArgs {
    #[arg(long)]
    cert: PathBuf,
    /// Polygon CSV destination; standard output when absent.
    #[arg(long, alias = "out")]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Synthesize(args) => cmd_synthesize(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Ball(args) => cmd_ball(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_system(path: &Path) -> anyhow::Result<SwitchedSystem> {
    load_system(&read(path)?).with_context(|| format!("loading system {}", path.display()))
}

fn read_cert(path: &Path) -> anyhow::Result<Certificate> {
    Certificate::from_json(&read(path)?).with_context(|| format!("loading certificate {}", path.display()))
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(path: Option<&Path>, contents: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn status_code(status: SynthesisStatus) -> u8 {
    match status {
        SynthesisStatus::Converged => 0,
        SynthesisStatus::Diverged => 2,
        SynthesisStatus::MaxItersReached => 3,
    }
}

fn cmd_synthesize(args: SynthesizeArgs) -> anyhow::Result<u8> {
    let system = read_system(&args.system)?;
    let cert = value_iteration(&system, &args.synthesis.config(args.mode_dependent))?;
    if let Some(out) = &args.out {
        write_atomic(out, &cert.to_json())?;
    }
    println!(
        "status={} iters={} rho={} c2={}",
        cert.status,
        cert.iterations,
        opt(cert.rho),
        opt(cert.c2)
    );
    Ok(status_code(cert.status))
}

fn cmd_certify(args: CertifyArgs) -> anyhow::Result<u8> {
    let system = read_system(&args.system)?;
    let cert = read_cert(&args.cert)?;
    cert.check_system(&system)?;
    if let Err(e) = cert.require_converged() {
        println!("pass=false reason=\"{e}\"");
        return Ok(2);
    }
    let config = CertifyConfig {
        residual_tol: args.tol,
        test_directions: args.grid,
        seed: args.seed,
        ..CertifyConfig::default()
    };
    let report = certify(&cert, &system, &config)?;
    if let Some(out) = &args.out {
        write_atomic(out, &report.to_json())?;
    }
    let sector = report
        .sector_certificate
        .as_ref()
        .map_or_else(|| "none".to_string(), |s| s.worst_sector_ratio.to_string());
    println!(
        "pass={} axioms={} residual={} rho={} rho_recomputed={} gamma_bound={} sector_ratio={}",
        report.pass,
        report.norm_axioms_pass,
        report.bellman_residual_max,
        report.rho,
        report.rho_recomputed,
        report.gamma_bound_check,
        sector
    );
    Ok(if report.pass { 0 } else { 2 })
}

fn parse_x0(text: &str, n: usize) -> anyhow::Result<DVector<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad x0 entry {t:?}")))
        .collect::<anyhow::Result<_>>()?;
    if values.len() != n {
        bail!("x0 has {} entries, the system has n = {n}", values.len());
    }
    Ok(DVector::from_vec(values))
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<u8> {
    let system = read_system(&args.system)?;
    let cert = read_cert(&args.cert)?;
    cert.check_system(&system)?;
    let x0 = parse_x0(&args.x0, system.n())?;
    let mut controller: LiftedController = if cert.mode_dependent {
        lift_memoryless(ModeDependentController::new(&cert, &system)?)
    } else {
        lift_memoryless(MemorylessController::online(&cert, &system)?)
    };
    let signal = match parse_signal(&args.signal, args.seed)? {
        Some(s) => s,
        None => adversarial_signal(&cert, controller.kind())?,
    };
    let spec = SimulationSpec {
        x0,
        horizon: args.steps,
        signal,
        disturbance: args.disturbance,
        disturbance_seed: args.seed ^ DISTURBANCE_SEED_MIX,
    };
    let traj = simulate(&system, &mut controller, &spec, Some(&cert.norm))?;
    emit(args.csv.as_deref(), &traj.to_csv())?;
    let v = traj.v_values.as_deref().unwrap_or(&[]);
    let gamma_hat = v
        .windows(2)
        .filter(|w| w[0] >= polystab::simulate::RATIO_FLOOR)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let violations = if spec.disturbance > 0.0 {
        "na".to_string()
    } else {
        estimate_ues(std::slice::from_ref(&traj), &cert)?.bound_violations.to_string()
    };
    let summary = format!("gamma_hat={gamma_hat} violations={violations}");
    if args.csv.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(0)
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<u8> {
    let system = read_system(&args.system)?;
    let ifs = value_iteration(&system, &args.synthesis.config(false))?;
    let dfs = value_iteration(&system, &args.synthesis.config(true))?;
    let entry = |c: &Certificate| {
        json!({
            "status": c.status.to_string(),
            "iterations": c.iterations,
            "rho": c.rho,
            "c2": c.c2,
        })
    };
    let report = json!({ "ifs": entry(&ifs), "dfs": entry(&dfs) });
    if let Some(out) = &args.out {
        write_atomic(out, &serde_json::to_string_pretty(&report)?)?;
    }
    println!("ifs status={} rho={}", ifs.status, opt(ifs.rho));
    println!("dfs status={} rho={}", dfs.status, opt(dfs.rho));
    Ok(if ifs.is_converged() || dfs.is_converged() { 0 } else { 2 })
}

fn cmd_ball(args: BallArgs) -> anyhow::Result<u8> {
    let cert = read_cert(&args.cert)?;
    if cert.dim() != 2 {
        bail!("ball needs a planar certificate, this one has n = {}", cert.dim());
    }
    let poly = cert.norm.full_polygon()?;
    let mut csv = String::from("x,y\n");
    for p in poly.iter().chain(poly.first()) {
        csv.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    emit(args.csv.as_deref(), &csv)?;
    Ok(0)
}
