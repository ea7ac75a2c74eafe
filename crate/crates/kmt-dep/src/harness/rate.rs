//! Coupling-rate experiments: run the block decomposition and quantile
//! coupling across a grid of path lengths, summarize the sup errors, and fit
//! the growth exponent.

use std::path::Path;

use rayon::prelude::*;

use crate::coupling::{
    block_variance, couple_blocks, empirical_block_cdf, estimate_gamma_tilde, gamma_tilde_linear,
    sigma2_kernel, variance_model, BlockCdf, VarianceModel,
};
use crate::error::{KmtError, Result};
use crate::innovations::{InnovationLaw, Seed};
use crate::numeric::{ols, quantile};
use crate::pipeline::{decompose, layout, TriadicLayout};
use crate::processes::draw_panel;

use super::config::{BlockCdfKind, ExperimentConfig};
use super::registry::ProcessBundle;

const SIP_TAG: u64 = 0x7369_7030;
const GAMMA_LEN: u64 = 100_000;

#[derive(Debug, Clone)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub note: Option<String>,
}

/// Least squares of log median error on log n. Exact couplings produce zero
/// medians; those fits report a -inf slope sentinel instead of failing.
pub fn fit_rate(points: &[(u64, f64)]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(KmtError::InvalidParameter(format!(
            "rate fit needs >= 4 grid points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(_, d)| *d <= 0.0) {
        return Ok(RateFit {
            slope: f64::NEG_INFINITY,
            intercept: f64::NEG_INFINITY,
            r2: 1.0,
            note: Some("nonpositive medians: coupling exact at this resolution".into()),
        });
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, d)| d.ln()).collect();
    let (slope, intercept, r2) = ols(&xs, &ys);
    Ok(RateFit { slope, intercept, r2, note: None })
}

#[derive(Debug, Clone)]
pub struct SipPoint {
    pub n: u64,
    pub median_d: f64,
    pub q25: f64,
    pub q75: f64,
    pub median_d_prime: f64,
}

#[derive(Debug, Clone)]
pub struct SipOutcome {
    pub points: Vec<SipPoint>,
    /// Present when the grid has >= 4 points.
    pub fit: Option<RateFit>,
    pub sigma2: f64,
}

/// Variance model and per-scale block CDFs for one layout.
pub fn model_for(
    bundle: &ProcessBundle,
    cfg: &ExperimentConfig,
    l: &TriadicLayout,
    seed: Seed,
) -> Result<(VarianceModel, Vec<BlockCdf>, f64)> {
    let proc = bundle.proc.as_ref();
    let sigma2 = match bundle.sigma2 {
        Some(v) => v,
        None => sigma2_kernel(proc, bundle.lag, 20_000, 40, 16, seed.child(1)).value,
    };
    let gammas: Vec<Vec<f64>> = match &bundle.coeffs {
        Some(c) => (1..=l.h_n)
            .map(|k| gamma_tilde_linear(c, bundle.var_eps(), l.m_at(k)))
            .collect(),
        None => (1..=l.h_n)
            .map(|k| {
                estimate_gamma_tilde(
                    proc,
                    cfg.p,
                    k,
                    l.m_at(k),
                    bundle.lag,
                    GAMMA_LEN,
                    cfg.r_inner,
                    seed.child(2).child(k as u64),
                )
            })
            .collect(),
    };
    // True block sd per scale: the quantile target for Gaussian block laws.
    let block_sd: Vec<f64> =
        (1..=l.h_n).map(|k| block_variance(&gammas[k as usize - 1], l.m_at(k)).max(0.0).sqrt()).collect();
    let model = variance_model(l, gammas, sigma2)?;
    let gaussian_blocks = match cfg.block_cdf {
        BlockCdfKind::Gaussian => true,
        BlockCdfKind::Empirical => false,
        BlockCdfKind::Auto => {
            bundle.coeffs.is_some() && proc.law() == InnovationLaw::StandardNormal
        }
    };
    let cdfs: Result<Vec<BlockCdf>> = (l.k0..=l.h_n)
        .map(|k| {
            if gaussian_blocks {
                Ok(BlockCdf::Gaussian { sd: block_sd[k as usize - 1] })
            } else {
                empirical_block_cdf(
                    proc,
                    cfg.p,
                    k,
                    l.m_at(k),
                    bundle.lag,
                    cfg.block_cdf_reps,
                    cfg.r_inner,
                    seed.child(3).child(k as u64),
                )
            }
        })
        .collect();
    Ok((model, cdfs?, sigma2))
}

/// Run the coupling experiment over the configured n grid. When `out_dir` is
/// given, writes `rate.csv` plus a `coupled.csv` sample path at the largest n.
pub fn run_sip(
    bundle: &ProcessBundle,
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<SipOutcome> {
    let seed = Seed::new(cfg.seed).child(SIP_TAG);
    let proc = bundle.proc.as_ref();
    let mut points = Vec::new();
    let mut sigma2 = 0.0;
    for &n in &cfg.n_grid {
        let l = layout(n, &cfg.schedule)?;
        if l.n0 >= n {
            return Err(KmtError::InvalidParameter(format!(
                "n = {n} is too small for the schedule: no usable blocks"
            )));
        }
        let (model, cdfs, s2) = model_for(bundle, cfg, &l, seed)?;
        sigma2 = s2;
        let errs: Vec<(f64, f64)> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| {
                let s = seed.with_replication(r);
                let panel = draw_panel(proc, s, n, bundle.lag);
                let d = decompose(proc, &panel, &l, cfg.p, bundle.lag, cfg.r_inner, 20_000, s)
                    .expect("validated layout");
                let paths = couple_blocks(&d, &model, &cdfs).expect("validated model");
                (paths.d_n, paths.d_prime_n)
            })
            .collect();
        let ds: Vec<f64> = errs.iter().map(|e| e.0).collect();
        let dps: Vec<f64> = errs.iter().map(|e| e.1).collect();
        points.push(SipPoint {
            n,
            median_d: quantile(&ds, 0.5),
            q25: quantile(&ds, 0.25),
            q75: quantile(&ds, 0.75),
            median_d_prime: quantile(&dps, 0.5),
        });
        if let (Some(dir), true) = (out_dir, n == *cfg.n_grid.last().unwrap()) {
            let s = seed.with_replication(0);
            let panel = draw_panel(proc, s, n, bundle.lag);
            let d = decompose(proc, &panel, &l, cfg.p, bundle.lag, cfg.r_inner, 20_000, s)?;
            let paths = couple_blocks(&d, &model, &cdfs)?;
            paths.write_csv(&d, &model, s, &dir.join("coupled.csv"))?;
        }
    }
    let fit = if points.len() >= 4 {
        Some(fit_rate(&points.iter().map(|p| (p.n, p.median_d)).collect::<Vec<_>>())?)
    } else {
        None
    };
    if let Some(dir) = out_dir {
        write_rate_csv(&points, fit.as_ref(), &dir.join("rate.csv"))?;
    }
    Ok(SipOutcome { points, fit, sigma2 })
}

fn write_rate_csv(points: &[SipPoint], fit: Option<&RateFit>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "median_D", "q25", "q75", "fitted_slope"])?;
    let slope = fit.map(|f| f.slope).unwrap_or(f64::NAN);
    for p in points {
        w.write_record([
            p.n.to_string(),
            format!("{:.17e}", p.median_d),
            format!("{:.17e}", p.q25),
            format!("{:.17e}", p.q75),
            format!("{:.6}", slope),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::registry::zoo;

    #[test]
    fn fit_rate_recovers_power_laws() {
        let pts: Vec<(u64, f64)> =
            [64u64, 256, 1024, 4096].iter().map(|&n| (n, (n as f64).powf(0.2))).collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope - 0.2).abs() < 1e-9, "{}", f.slope);

        let flat: Vec<(u64, f64)> = [64u64, 256, 1024, 4096].iter().map(|&n| (n, 2.5)).collect();
        let f = fit_rate(&flat).unwrap();
        assert!(f.slope.abs() < 1e-9);

        let exact: Vec<(u64, f64)> = [64u64, 256, 1024, 4096].iter().map(|&n| (n, 0.0)).collect();
        let f = fit_rate(&exact).unwrap();
        assert_eq!(f.slope, f64::NEG_INFINITY);
        assert!(f.note.is_some());
    }

    #[test]
    fn fit_rate_tolerates_small_noise() {
        let pts: Vec<(u64, f64)> = [729u64, 2187, 6561, 19683, 59049]
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let noise = 1.0 + 0.01 * if i % 2 == 0 { 1.0 } else { -1.0 };
                (n, (n as f64).powf(1.0 / 3.0) * noise)
            })
            .collect();
        let f = fit_rate(&pts).unwrap();
        assert!((f.slope - 1.0 / 3.0).abs() < 0.02, "{}", f.slope);
    }

    #[test]
    fn sip_runs_on_small_ar1_grid() {
        let cfg = ExperimentConfig::parse(
            "[experiment]\nn_grid = 3^5,3^6\nreplications = 8\nseed = 5\n\
             [process]\nkind = ar1\nrho = 0.5\n[schedule]\ncase = constant\nm = 2\n",
        )
        .unwrap();
        let z = zoo();
        let ar1 = z.iter().find(|b| b.name.starts_with("ar1")).unwrap();
        let out = run_sip(ar1, &cfg, None).unwrap();
        assert_eq!(out.points.len(), 2);
        assert!(out.points.iter().all(|p| p.median_d.is_finite() && p.median_d >= 0.0));
        assert!((out.sigma2 - 4.0).abs() < 1e-9);
        assert!(out.fit.is_none());
    }
}
