use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rgl_core::experiments::{run_experiment, ExperimentConfig, ExperimentMode, ExperimentOutput};
use rgl_core::instance::ProblemInstance;
use rgl_core::solver::{solve, Program, SolverOptions};

#[derive(Parser)]
#[command(name = "rgl", version, about = "Robust group lasso recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recovery phase-transition sweep (or theorem-regime sweep if the config says so).
    Phase(RunArgs),
    /// Golfing-certificate study.
    Cert(RunArgs),
    /// Robust program against the l2,1 equality program and group lasso.
    Compare(RunArgs),
    /// Solve one saved instance bundle and write a JSON report.
    Solve(SolveArgs),
    /// Generate instance bundles for every grid cell and trial.
    Gen(GenArgs),
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.threads`.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Save every failed trial as an instance bundle under `<out>/failures`.
    #[arg(long)]
    dump_failures: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProgramArg {
    Rgl,
    L21,
    GroupLasso,
}

#[derive(Args)]
struct SolveArgs {
    /// Directory written by `gen` or `--dump-failures`.
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_enum, default_value = "rgl")]
    program: ProgramArg,
    /// Penalty on S; defaults to the value stored in the bundle.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1e4)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    rel_tol: f64,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long, default_value = "bundles")]
    out: PathBuf,
    /// Trials per cell; defaults to `run.trials`.
    #[arg(long)]
    trials: Option<usize>,
}

fn load_config(args: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.run.base_seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.run.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, mode: ExperimentMode) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    match (mode, cfg.mode) {
        (ExperimentMode::PhaseTransition, ExperimentMode::TheoremRegime) => {}
        (ExperimentMode::PhaseTransition, ExperimentMode::CertificateStudy | ExperimentMode::BaselineCompare) => {
            bail!("config mode {} does not match the phase subcommand", cfg.mode.name())
        }
        _ => cfg.mode = mode,
    }
    let out = run_experiment(&cfg, &args.out, args.dump_failures)?;
    summarize(&out);
    Ok(())
}

fn summarize(out: &ExperimentOutput) {
    if let Some(sweep) = &out.recovery {
        for c in &sweep.cells {
            println!(
                "{:<32} k_t={:<4} k_max={:<4} lambda={:.4} success={}/{} solver_failures={}",
                c.mode, c.k_t, c.k_max, c.lambda, c.successes, c.trials, c.solver_failures
            );
        }
        for s in &sweep.skipped {
            println!("skipped k_t={} k_per_column={} lambda={:.4}", s.k_t, s.k_per_column, s.lambda);
        }
    }
    if let Some(cells) = &out.certificate {
        for c in cells {
            println!(
                "certificate k_t={:<4} k_max={:<4} all_pass={}/{} inexact={}/{} infeasible={}",
                c.k_t, c.k_max, c.all_pass, c.trials, c.inexact_pass, c.trials, c.infeasible
            );
        }
    }
    if !out.dumped.is_empty() {
        println!("dumped {} failed trials", out.dumped.len());
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
}

fn solve_bundle(args: &SolveArgs) -> Result<()> {
    let inst = ProblemInstance::load_bundle(&args.bundle)
        .with_context(|| format!("loading bundle {}", args.bundle.display()))?;
    let program = match args.program {
        ProgramArg::Rgl => Program::Rgl { lambda: args.lambda.unwrap_or(inst.lambda) },
        ProgramArg::L21 => Program::L21Equality,
        ProgramArg::GroupLasso => Program::GroupLasso { gamma: args.gamma },
    };
    let report = solve(&inst.ensemble, program, &inst.m, &SolverOptions::default())?;
    let check = report.check_recovery(&inst.y_true, &inst.s_true, args.rel_tol)?;
    let json = serde_json::json!({ "report": report, "recovery": check });
    write(&args.out, &serde_json::to_string_pretty(&json)?)?;
    println!(
        "{} iterations={} converged={} success={} rel_err_y={:.3e} rel_err_s={:.3e}",
        report.program.name(),
        report.iterations,
        report.converged,
        check.success,
        check.rel_err_y,
        check.rel_err_s
    );
    Ok(())
}

fn generate(args: &GenArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let trials = args.trials.unwrap_or(cfg.run.trials);
    let mut written = 0;
    for cell in cfg.cells() {
        for t in 0..trials {
            let seed = cfg.trial_seed(t);
            let inst = match cfg.instance(&cell, seed) {
                Ok(inst) => inst,
                Err(rgl_core::Error::BudgetViolation(msg)) => {
                    println!("skipped k_t={} k_per_column={}: {msg}", cell.k_t, cell.k_per_column);
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            let dir = args
                .out
                .join(format!("kt{}_k{}_lam{:.4}", cell.k_t, cell.k_per_column, cell.lambda))
                .join(format!("trial{t:04}_seed{seed}"));
            inst.save_bundle(&dir)?;
            written += 1;
        }
    }
    println!("wrote {written} bundles under {}", args.out.display());
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Phase(a) => run(&a, ExperimentMode::PhaseTransition),
        Command::Cert(a) => run(&a, ExperimentMode::CertificateStudy),
        Command::Compare(a) => run(&a, ExperimentMode::BaselineCompare),
        Command::Solve(a) => solve_bundle(&a),
        Command::Gen(a) => generate(&a),
    }
}
