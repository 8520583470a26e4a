//! `vchr` — energy-stable VCH-HR simulator.
//!
//! Exit codes: 0 success with all run invariants held, 2 invariant
//! violation, 1 any other error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use vchr_cli::config::RunConfig;
use vchr_cli::convergence::{fitted_order, ConvergenceStudy};
use vchr_cli::experiment::run_experiment;
use vchr_cli::snapshot::snapshot_read;

#[derive(Parser)]
#[command(name = "vchr", version, about = "Viscous Cahn-Hilliard with hyperbolic relaxation: linear, second-order, unconditionally energy-stable IEQ schemes")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation from a TOML config, writing energy CSV and snapshots.
    Run { config: PathBuf },
    /// Temporal refinement study: dt0/2^k for k = 0..kmax.
    Converge {
        config: PathBuf,
        #[arg(long)]
        kmax: u32,
    },
    /// Cross-product sweep over relaxation/viscosity coefficients.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
    },
    /// Print header and field statistics of a snapshot file.
    Inspect { snapshot: PathBuf },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config } => cmd_run(&config),
        Cmd::Converge { config, kmax } => cmd_converge(&config, kmax),
        Cmd::Sweep {
            config,
            alpha,
            beta,
        } => cmd_sweep(&config, &alpha, &beta),
        Cmd::Inspect { snapshot } => cmd_inspect(&snapshot),
    }
}

fn cmd_run(path: &PathBuf) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    let outcome = run_experiment(&cfg)?;
    let last = outcome.records.last().expect("at least one step");
    println!(
        "completed {} steps: E_discrete {:.6e} -> {:.6e}, max identity residual {:.3e}",
        outcome.records.len(),
        outcome.records[0].e_discrete,
        last.e_discrete,
        outcome
            .records
            .iter()
            .map(|r| r.identity_residual)
            .fold(0.0, f64::max),
    );
    println!("energy log: {}", outcome.csv_path.display());
    report_violations(&outcome.violations)
}

fn cmd_converge(path: &PathBuf, kmax: u32) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig::load(path)?;
    let mut study = ConvergenceStudy::new(&cfg)?;
    let rows = study.table(kmax)?;
    println!("{:>3} {:>12} {:>14} {:>14}", "k", "dt", "err_phi", "err_U");
    for r in &rows {
        println!(
            "{:>3} {:>12.6e} {:>14.6e} {:>14.6e}",
            r.k, r.dt, r.err_phi, r.err_aux
        );
    }
    let phi_errs: Vec<f64> = rows.iter().map(|r| r.err_phi).collect();
    let aux_errs: Vec<f64> = rows.iter().map(|r| r.err_aux).collect();
    match (fitted_order(&phi_errs), fitted_order(&aux_errs)) {
        (Some(p), Some(u)) => println!("fitted temporal order: phi {p:.3}, U {u:.3}"),
        _ => println!("fitted temporal order: undefined (errors at rounding level)"),
    }

    std::fs::create_dir_all(&cfg.output.dir)?;
    let table_path = cfg.output.dir.join("convergence.csv");
    let mut text = String::from("k,dt,err_phi,err_U\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            r.k, r.dt, r.err_phi, r.err_aux
        ));
    }
    std::fs::write(&table_path, text)?;
    println!("table: {}", table_path.display());

    let monotone = rows.windows(2).all(|w| w[1].err_phi <= w[0].err_phi);
    if !monotone {
        eprintln!("invariant violation: Cauchy errors are not monotonically decreasing");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(path: &PathBuf, alphas: &[f64], betas: &[f64]) -> anyhow::Result<ExitCode> {
    let base = RunConfig::load(path)?;
    let mut all_violations = Vec::new();
    for &alpha in alphas {
        for &beta in betas {
            let mut cfg = base.clone();
            cfg.model.alpha = alpha;
            cfg.model.beta = beta;
            cfg.output.dir = base.output.dir.join(format!("alpha{alpha}_beta{beta}"));
            let outcome = run_experiment(&cfg)
                .with_context(|| format!("sweep case alpha={alpha} beta={beta}"))?;
            let last = outcome.records.last().expect("steps");
            println!(
                "alpha={alpha} beta={beta}: E_discrete(t={:.4}) = {:.8e} ({} violations)",
                last.t,
                last.e_discrete,
                outcome.violations.len()
            );
            for v in &outcome.violations {
                all_violations.push(format!("alpha={alpha} beta={beta}: {v}"));
            }
        }
    }
    report_violations(&all_violations)
}

fn cmd_inspect(path: &PathBuf) -> anyhow::Result<ExitCode> {
    let field = snapshot_read(path)?;
    let grid = field.grid();
    let (lo, hi) = field.min_max();
    println!("snapshot: {}", path.display());
    println!("  dim:     {}", grid.dim());
    println!("  shape:   {:?}", grid.shape());
    println!("  length:  {:?}", grid.length());
    println!("  bc:      {}", grid.bc().name());
    println!("  min/max: {lo:.6e} / {hi:.6e}");
    println!("  mean:    {:.16e}", field.mean());
    println!("  l2 norm: {:.16e}", field.norm_l2());
    Ok(ExitCode::SUCCESS)
}

fn report_violations(violations: &[String]) -> anyhow::Result<ExitCode> {
    if violations.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!("invariant violations:");
    for v in violations {
        eprintln!("  {v}");
    }
    Ok(ExitCode::from(2))
}
