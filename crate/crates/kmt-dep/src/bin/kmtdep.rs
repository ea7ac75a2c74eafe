//! Command-line front end: config-driven simulation, dependence measurement,
//! condition checks, coupling-rate experiments, and consolidated reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kmt_dep::harness::{
    build_process, config::parse_n_grid, run_conditions, run_depmeasure, run_report, run_simulate,
    run_sip, ExperimentConfig,
};
use kmt_dep::pipeline::pow3;

#[derive(Parser)]
#[command(name = "kmtdep", about = "Strong approximation experiments for dependent sequences")]
struct Cli {
    /// Experiment config file (`key = value` with `[section]` headers).
    /// Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (falls back to KMT_DEP_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Path-length grid override, e.g. `3^6..3^9` or `729,2187,6561`.
    #[arg(long, global = true)]
    n_grid: Option<String>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one path at the largest n and write the block decomposition.
    Simulate,
    /// Estimate the dependence profile and write it as CSV.
    Depmeasure,
    /// Check the summability conditions; exit 2 when any fails.
    CheckConditions,
    /// Couple blocks to Gaussian increments across the n grid and fit a rate.
    SipExperiment,
    /// Everything above plus CLT cross-checks, consolidated into report.txt.
    Report,
}

fn load_config(cli: &Cli) -> kmt_dep::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::parse("")?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(g) = &cli.n_grid {
        cfg.n_grid = parse_n_grid(g)?;
    }
    for &n in &cfg.n_grid {
        let h = (n as f64).log(3.0).round() as u32;
        if pow3(h) != n {
            eprintln!(
                "warning: n = {n} is not a power of 3; the top scale carries a partial segment"
            );
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> kmt_dep::Result<u8> {
    let workers = cli
        .workers
        .or_else(|| std::env::var("KMT_DEP_WORKERS").ok().and_then(|v| v.parse().ok()));
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| kmt_dep::KmtError::InvalidParameter(e.to_string()))?;
    }
    let cfg = load_config(cli)?;
    match cli.cmd {
        Cmd::Simulate => {
            run_simulate(&cfg)?;
            println!("wrote paths.csv and blocks.csv to {}", cfg.out.display());
        }
        Cmd::Depmeasure => {
            let profile = run_depmeasure(&cfg)?;
            println!(
                "wrote profile.csv to {} ({} lags)",
                cfg.out.display(),
                profile.l_max() + 1
            );
        }
        Cmd::CheckConditions => {
            let (_, report) = run_conditions(&cfg)?;
            let mut stdout = std::io::stdout();
            report.write_text(&mut stdout)?;
            if !report.all_pass() {
                return Ok(2);
            }
        }
        Cmd::SipExperiment => {
            std::fs::create_dir_all(&cfg.out)?;
            let bundle = build_process(&cfg.process)?;
            let out = run_sip(&bundle, &cfg, Some(&cfg.out))?;
            for p in &out.points {
                println!("n = {:>8}  median D = {:.6e}", p.n, p.median_d);
            }
            if let Some(fit) = &out.fit {
                println!("fitted slope {:.4} (r2 {:.3})", fit.slope, fit.r2);
            }
        }
        Cmd::Report => {
            let outcome = run_report(&cfg)?;
            println!("wrote report.txt to {}", cfg.out.display());
            if !outcome.conditions_pass {
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version requests are success, everything else is usage error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
