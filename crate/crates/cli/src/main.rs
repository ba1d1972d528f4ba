//! Command-line front end: synthesize certificates, verify them numerically,
//! simulate the closed loop, and emit contour data for figures.
//!
//! Exit codes: 0 success, 1 parse/usage error, 2 infeasible initialization,
//! 3 solver failure, 4 certificate/problem hash mismatch, 5 verification
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use soscert::alternate::AlternateError;
use soscert::pipeline::{self, PipelineError, SynthOverrides};
use soscert::poly::Point;
use soscert::probfile;

const BUILTIN_PROBLEMS: &[(&str, &str)] = &[
    ("powerconverter", include_str!("../problems/powerconverter.prob")),
    ("toy1d", include_str!("../problems/toy1d.prob")),
];

#[derive(Parser)]
#[command(
    name = "soscert",
    about = "Compatible control Lyapunov / barrier certificate synthesis via sum-of-squares programming",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize certificates and write a certificate file.
    Synth(SynthArgs),
    /// Check a certificate against its problem: witness identities, sampled
    /// residuals, Monte-Carlo safety, and closed-loop trajectories.
    Verify(VerifyArgs),
    /// Simulate closed-loop trajectories and print CSV.
    Simulate(SimulateArgs),
    /// Emit contour-slice CSV for the allowable set and barrier level sets.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Problem file path, or a builtin name (`powerconverter`, `toy1d`).
    problem: String,
    /// Certificate output path.
    #[arg(long, default_value = "certificate.cert")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Write `iter<k>_step<1|2>.cert` checkpoints into this directory.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Dump the compiled step-1 SDP (initial controller) in sparse text form.
    #[arg(long)]
    dump_sdp: Option<PathBuf>,
    /// Print per-iteration solver progress.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct VerifyArgs {
    problem: String,
    certificate: PathBuf,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Number of closed-loop trajectories from the safe set.
    #[arg(long, default_value_t = 100)]
    trajectories: usize,
    #[arg(long, default_value_t = 5.0)]
    t_final: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
}

#[derive(Args)]
struct SimulateArgs {
    problem: String,
    certificate: PathBuf,
    /// Initial state as comma-separated coordinates; repeatable.
    #[arg(long = "x0")]
    x0: Vec<String>,
    /// Sample this many start points from the safe set when no --x0 given.
    #[arg(long, default_value_t = 10)]
    sample: usize,
    #[arg(long, default_value_t = 5.0)]
    t_final: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotDataArgs {
    problem: String,
    /// One or more certificate or checkpoint files.
    certificates: Vec<PathBuf>,
    /// Slice plane as two variable names, e.g. `x1,x2`.
    #[arg(long, default_value = "x1,x2")]
    plane: String,
    /// Grid resolution per axis.
    #[arg(long, default_value_t = 401)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_problem(name_or_path: &str) -> Result<String, (u8, String)> {
    let path = Path::new(name_or_path);
    if path.exists() {
        return std::fs::read_to_string(path)
            .map_err(|e| (1, format!("cannot read {}: {e}", path.display())));
    }
    for (name, text) in BUILTIN_PROBLEMS {
        if *name == name_or_path {
            return Ok(text.to_string());
        }
    }
    Err((1, format!("problem `{name_or_path}` is neither a file nor a builtin (builtins: powerconverter, toy1d)")))
}

fn exit_for(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Problem(_) | PipelineError::Certificate(_) | PipelineError::InvalidArgument(_) => 1,
        PipelineError::Certs(_) | PipelineError::Poly(_) => 1,
        PipelineError::Alternate(AlternateError::InitInfeasible { .. }) => 2,
        PipelineError::Alternate(_) => 3,
        PipelineError::HashMismatch { .. } => 4,
        PipelineError::Verify(_) => 5,
    }
}

fn run_synth(args: SynthArgs) -> Result<(), (u8, String)> {
    let problem = load_problem(&args.problem)?;
    if let Some(dump) = &args.dump_sdp {
        let dump_text = dump_step1(&problem).map_err(|e| (exit_for(&e), e.to_string()))?;
        std::fs::write(dump, dump_text).map_err(|e| (1, format!("cannot write dump: {e}")))?;
    }
    let overrides = SynthOverrides {
        max_outer: args.max_outer,
        threshold: args.threshold,
        seed: args.seed,
        checkpoint_dir: args.checkpoint_dir.clone(),
        verbose: args.verbose,
    };
    let outcome = pipeline::synth(&problem, &overrides).map_err(|e| (exit_for(&e), e.to_string()))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!("iter  cost           eps                          inner(s1,s2)  time(s1,s2)");
    for r in &outcome.history {
        println!(
            "{:4}  {:13.6e}  {:27}  {:3},{:3}       {:.2?},{:.2?}",
            r.k,
            r.cost,
            format!("{:?}", r.eps),
            r.step1_iters,
            r.step2_iters,
            r.step1_time,
            r.step2_time
        );
    }
    if let Some(last) = outcome.history.last() {
        println!(
            "sdp size: step1 {} vars x {} psd entries, step2 {} vars x {} psd entries",
            last.step1_stats.poly_dof,
            last.step1_stats.psd_entries,
            last.step2_stats.poly_dof,
            last.step2_stats.psd_entries
        );
    }
    std::fs::write(&args.out, &outcome.cert_text)
        .map_err(|e| (1, format!("cannot write {}: {e}", args.out.display())))?;
    println!("certificate written to {}", args.out.display());
    Ok(())
}

fn dump_step1(problem_text: &str) -> Result<String, PipelineError> {
    let spec = probfile::parse_problem(problem_text)?;
    let step1 = soscert::certs::build_step1_program(&spec, &spec.initial_controller())?;
    let prob = step1.prog.compile().map_err(soscert::certs::CertsError::from)?;
    Ok(prob.dump_text())
}

fn run_verify(args: VerifyArgs) -> Result<(), (u8, String)> {
    let problem = load_problem(&args.problem)?;
    let cert = std::fs::read_to_string(&args.certificate)
        .map_err(|e| (1, format!("cannot read {}: {e}", args.certificate.display())))?;
    let outcome = pipeline::verify_certificate(
        &problem,
        &cert,
        args.samples,
        args.trajectories,
        args.t_final,
        args.dt,
    )
    .map_err(|e| (exit_for(&e), e.to_string()))?;
    print!("{}", outcome.report);
    if outcome.pass {
        Ok(())
    } else {
        Err((5, "verification failed".into()))
    }
}

fn parse_x0(list: &[String], n: usize) -> Result<Vec<Point>, (u8, String)> {
    list.iter()
        .map(|s| {
            let coords: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
            match coords {
                Ok(c) if c.len() == n => Ok(Point::new(c)),
                Ok(c) => Err((1, format!("--x0 has {} coordinates, expected {n}", c.len()))),
                Err(e) => Err((1, format!("bad --x0 `{s}`: {e}"))),
            }
        })
        .collect()
}

fn run_simulate(args: SimulateArgs) -> Result<(), (u8, String)> {
    let problem = load_problem(&args.problem)?;
    let cert_text = std::fs::read_to_string(&args.certificate)
        .map_err(|e| (1, format!("cannot read {}: {e}", args.certificate.display())))?;
    let spec = probfile::parse_problem(&problem).map_err(|e| (1, e.to_string()))?;
    let starts = if args.x0.is_empty() {
        let parsed = soscert::certfile::parse_certificate(&cert_text).map_err(|e| (1, e.to_string()))?;
        pipeline::sample_safe_starts(&spec, &parsed.cert, args.sample, spec.algo.seed ^ 0x51)
    } else {
        parse_x0(&args.x0, spec.nvars())?
    };
    let (csv, trajectories) =
        pipeline::simulate_csv(&problem, &cert_text, &starts, args.t_final, args.dt)
            .map_err(|e| (exit_for(&e), e.to_string()))?;
    for (i, traj) in trajectories.iter().enumerate() {
        for event in &traj.events {
            eprintln!("trajectory {i}: {event:?}");
        }
    }
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| (1, format!("cannot write: {e}")))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_plotdata(args: PlotDataArgs) -> Result<(), (u8, String)> {
    let problem = load_problem(&args.problem)?;
    if args.certificates.is_empty() {
        return Err((1, "at least one certificate file is required".into()));
    }
    let spec = probfile::parse_problem(&problem).map_err(|e| (1, e.to_string()))?;
    let axes: Vec<&str> = args.plane.split(',').map(str::trim).collect();
    if axes.len() != 2 {
        return Err((1, "--plane must name two variables, e.g. x1,x2".into()));
    }
    let axis_of = |name: &str| {
        spec.varnames
            .iter()
            .position(|v| v == name)
            .ok_or((1u8, format!("unknown plane variable `{name}`")))
    };
    let ax = axis_of(axes[0])?;
    let ay = axis_of(axes[1])?;
    let mut certs = Vec::new();
    for path in &args.certificates {
        let text = std::fs::read_to_string(path)
            .map_err(|e| (1, format!("cannot read {}: {e}", path.display())))?;
        let tag = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        certs.push((tag, text));
    }
    let csv = pipeline::plotdata_csv(&problem, &certs, ax, ay, args.grid)
        .map_err(|e| (exit_for(&e), e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, csv).map_err(|e| (1, format!("cannot write: {e}")))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Verify(args) => run_verify(args),
        Command::Simulate(args) => run_simulate(args),
        Command::PlotData(args) => run_plotdata(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
