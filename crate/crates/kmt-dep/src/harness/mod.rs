//! Experiment harness: config-driven runs that tie the dependence profile,
//! condition checks, block coupling, and distributional cross-checks into
//! reproducible CSV and text reports.

pub mod clt;
pub mod config;
pub mod rate;
pub mod registry;
pub mod truncmoment;

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::depmeasure::{check_profile_conditions, theta_tail, ConditionReport, DependenceProfile};
use crate::error::Result;
use crate::innovations::Seed;
use crate::pipeline::{decompose, layout};
use crate::processes::draw_panel;

pub use clt::{clt_check, CltResult};
pub use config::{BlockCdfKind, ExperimentConfig, ProcessConfig};
pub use rate::{fit_rate, run_sip, RateFit, SipOutcome, SipPoint};
pub use registry::{build_process, zoo, ProcessBundle};
pub use truncmoment::{truncated_moment_check, TruncMomentReport};

const SIM_TAG: u64 = 0x7369_6d30;
const DEP_TAG: u64 = 0x6465_7030;

#[derive(Debug, Clone)]
pub struct ReportOutcome {
    pub conditions_pass: bool,
}

fn ensure_out(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.echo.toml"), cfg.render())?;
    Ok(())
}

/// Simulate one path at the largest configured n and write the decomposition:
/// `paths.csv` with the four cumulative paths and `blocks.csv` per block.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<()> {
    ensure_out(cfg)?;
    let bundle = build_process(&cfg.process)?;
    let n = *cfg.n_grid.last().unwrap();
    let l = layout(n, &cfg.schedule)?;
    let seed = Seed::new(cfg.seed).child(SIM_TAG);
    let panel = draw_panel(bundle.proc.as_ref(), seed, n, bundle.lag);
    let d = decompose(
        bundle.proc.as_ref(),
        &panel,
        &l,
        cfg.p,
        bundle.lag,
        cfg.r_inner,
        20_000,
        seed,
    )?;
    d.write_paths_csv(&cfg.out.join("paths.csv"))?;
    d.write_blocks_csv(&cfg.out.join("blocks.csv"))?;
    Ok(())
}

/// Estimate the dependence profile and write `profile.csv`.
pub fn run_depmeasure(cfg: &ExperimentConfig) -> Result<DependenceProfile> {
    ensure_out(cfg)?;
    let bundle = build_process(&cfg.process)?;
    let profile = crate::depmeasure::estimate_profile(
        bundle.proc.as_ref(),
        cfg.p,
        cfg.delta_lmax,
        cfg.delta_reps,
        bundle.lag,
        Seed::new(cfg.seed).child(DEP_TAG),
    )?;
    profile.write_csv(&cfg.out.join("profile.csv"))?;
    Ok(profile)
}

/// Profile plus condition report; writes `conditions.txt` and `summands.csv`.
pub fn run_conditions(cfg: &ExperimentConfig) -> Result<(DependenceProfile, ConditionReport)> {
    let profile = run_depmeasure(cfg)?;
    let report = check_profile_conditions(&profile, cfg.alpha, &cfg.schedule, cfg.horizon)?;
    let mut f = fs::File::create(cfg.out.join("conditions.txt"))?;
    report.write_text(&mut f)?;
    report.write_summands_csv(&cfg.out.join("summands.csv"))?;
    Ok((profile, report))
}

/// Normalized partial sums for the standard zoo; writes `clt.csv`.
pub fn run_clt(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<CltResult>> {
    let seed = Seed::new(cfg.seed);
    let results: Result<Vec<CltResult>> = zoo()
        .iter()
        .enumerate()
        .map(|(i, b)| clt_check(b, cfg.clt_n, cfg.clt_reps, seed.with_stream(i as u64)))
        .collect();
    let results = results?;
    if let Some(dir) = out_dir {
        let mut w = csv::Writer::from_path(dir.join("clt.csv"))?;
        w.write_record(["process", "n", "reps", "sigma2", "sigma2_estimated", "ks", "critical", "pass"])?;
        for r in &results {
            w.write_record([
                r.name.clone(),
                r.n.to_string(),
                r.reps.to_string(),
                format!("{:.17e}", r.sigma2),
                r.sigma2_estimated.to_string(),
                format!("{:.17e}", r.ks),
                format!("{:.17e}", r.critical),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(results)
}

/// Full report: profile, conditions, truncated moments, coupling-rate sweep,
/// and the CLT cross-check, consolidated into `report.txt` next to the CSVs.
pub fn run_report(cfg: &ExperimentConfig) -> Result<ReportOutcome> {
    let (profile, conditions) = run_conditions(cfg)?;
    let bundle = build_process(&cfg.process)?;
    let trunc = truncated_moment_check(
        bundle.proc.law(),
        cfg.p,
        cfg.alpha,
        cfg.horizon.min(40),
    )?;
    let sip = run_sip(&bundle, cfg, Some(&cfg.out))?;
    let clt = run_clt(cfg, Some(&cfg.out))?;

    let mut f = fs::File::create(cfg.out.join("report.txt"))?;
    writeln!(f, "experiment `{}`: process {}, p = {}, alpha = {}", cfg.name, bundle.name, cfg.p, cfg.alpha)?;
    writeln!(f, "schedule {}; seed {}", cfg.schedule.describe(), cfg.seed)?;
    writeln!(f)?;
    writeln!(
        f,
        "dependence profile: delta_0 = {:.4e}, Theta_0 = {:.4e}, fit {:?}",
        profile.delta_at(0),
        theta_tail(&profile, 0),
        profile.fit
    )?;
    writeln!(f)?;
    conditions.write_text(&mut f)?;
    writeln!(f)?;
    f.write_all(trunc.render().as_bytes())?;
    writeln!(f)?;
    writeln!(f, "long-run variance sigma2 = {:.6e}", sip.sigma2)?;
    writeln!(f, "coupling sup error by n (median [q25, q75]):")?;
    for pt in &sip.points {
        writeln!(
            f,
            "  n = {:>8}: D = {:.4e} [{:.4e}, {:.4e}], D' = {:.4e}",
            pt.n, pt.median_d, pt.q25, pt.q75, pt.median_d_prime
        )?;
    }
    if let Some(fit) = &sip.fit {
        writeln!(
            f,
            "fitted log-log slope {:.4} (r2 {:.3}){}",
            fit.slope,
            fit.r2,
            fit.note.as_deref().map(|n| format!(" [{n}]")).unwrap_or_default()
        )?;
    }
    writeln!(f)?;
    writeln!(f, "CLT cross-check at n = {}, {} reps:", cfg.clt_n, cfg.clt_reps)?;
    for r in &clt {
        writeln!(
            f,
            "  {:<24} ks {:.4e} vs {:.4e}: {}",
            r.name,
            r.ks,
            r.critical,
            if r.pass { "pass" } else { "FAIL" }
        )?;
    }
    Ok(ReportOutcome { conditions_pass: conditions.all_pass() })
}
