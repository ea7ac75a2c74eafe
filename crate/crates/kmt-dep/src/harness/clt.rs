//! Normalized partial sums against the limiting normal law.

use rayon::prelude::*;

use crate::coupling::sigma2_kernel;
use crate::error::Result;
use crate::innovations::Seed;
use crate::numeric::{ks_critical_1pct, ks_statistic, mean, normal_cdf, pairwise_sum};
use crate::processes::draw_panel;

use super::registry::ProcessBundle;

const CLT_TAG: u64 = 0x636c_7430;

#[derive(Debug, Clone)]
pub struct CltResult {
    pub name: String,
    pub n: u64,
    pub reps: u64,
    pub sigma2: f64,
    pub sigma2_estimated: bool,
    pub ks: f64,
    pub critical: f64,
    pub pass: bool,
}

/// KS distance of S_n / sqrt(n sigma2) from N(0, 1) across replications.
/// Processes without a zero mean are centered by the grand empirical mean;
/// processes without a variance oracle get a kernel estimate.
pub fn clt_check(bundle: &ProcessBundle, n: u64, reps: u64, seed: Seed) -> Result<CltResult> {
    let s = seed.child(CLT_TAG);
    let proc = bundle.proc.as_ref();
    let lag = bundle.lag;
    let sums: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let panel = draw_panel(proc, s.with_replication(r), n, lag);
            pairwise_sum(&proc.eval_path(&panel, n, lag))
        })
        .collect();
    let mu = if bundle.mean_zero { 0.0 } else { mean(&sums) / n as f64 };
    let (sigma2, estimated) = match bundle.sigma2 {
        Some(v) => (v, false),
        None => {
            let e = sigma2_kernel(proc, lag, 20_000, 40, 16, s.child(1));
            (e.value, true)
        }
    };
    let sd = (n as f64 * sigma2).sqrt();
    let z: Vec<f64> = sums.iter().map(|v| (v - n as f64 * mu) / sd).collect();
    let ks = ks_statistic(&z, normal_cdf);
    let critical = ks_critical_1pct(z.len());
    Ok(CltResult {
        name: bundle.name.clone(),
        n,
        reps,
        sigma2,
        sigma2_estimated: estimated,
        ks,
        critical,
        pass: ks < critical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::registry::zoo;

    #[test]
    fn iid_normal_passes_small_clt() {
        let z = zoo();
        let b = z.iter().find(|b| b.name == "iid_normal").unwrap();
        let r = clt_check(b, 243, 400, Seed::new(130)).unwrap();
        assert!(r.pass, "ks {} critical {}", r.ks, r.critical);
    }

    #[test]
    fn threshold_ar_centering_keeps_ks_finite() {
        let z = zoo();
        let b = z.iter().find(|b| b.name.starts_with("threshold")).unwrap();
        let r = clt_check(b, 243, 300, Seed::new(131)).unwrap();
        // positive-mean process: without centering the KS would be ~1
        assert!(r.ks < 0.2, "ks {}", r.ks);
        assert!(r.sigma2_estimated && r.sigma2 > 0.0);
    }
}
