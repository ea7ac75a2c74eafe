//! Iterated random functions X_t = G(X_{t-1}, eps_t) with an L^p contraction
//! certificate. Paths are produced by one streaming recursion; per-index
//! evaluation restarts the recursion from zero at the window edge, which the
//! tail bound covers.

use super::{law_is_symmetric, require_centered_law, CausalProcess};
use crate::error::Result;
use crate::innovations::{InnovationLaw, InnovationWindow, Seed};
use crate::numeric;
use std::sync::Arc;

type Map = Arc<dyn Fn(f64, f64) -> f64 + Sync + Send>;

#[derive(Clone)]
pub struct IrfProcess {
    map: Map,
    law: InnovationLaw,
    /// Uniform L^p contraction coefficient of x -> G(x, eps).
    contraction: f64,
    /// Upper bound on ||X||_2 under the stationary law.
    sd_bound: f64,
    burn_in: usize,
    /// Set when the process is AR(1) with this coefficient; unlocks the
    /// closed-form delta / gamma / sigma^2 oracles.
    ar1_rho: Option<f64>,
    symmetric: bool,
    name: String,
}

impl IrfProcess {
    pub fn new(
        map: impl Fn(f64, f64) -> f64 + Sync + Send + 'static,
        law: InnovationLaw,
        contraction: f64,
        sd_bound: f64,
        name: &str,
    ) -> Result<Self> {
        require_centered_law(law)?;
        if !(0.0..1.0).contains(&contraction) {
            return Err(crate::error::KmtError::InvalidParameter(format!(
                "contraction coefficient must lie in [0, 1), got {contraction}"
            )));
        }
        let burn_in = if contraction == 0.0 {
            1
        } else {
            (60.0 / contraction.ln().abs()).ceil() as usize
        };
        Ok(IrfProcess {
            map: Arc::new(map),
            law,
            contraction,
            sd_bound,
            burn_in,
            ar1_rho: None,
            symmetric: false,
            name: name.into(),
        })
    }

    /// AR(1): X_t = rho X_{t-1} + eps_t with standard normal innovations.
    pub fn ar1(rho: f64) -> Self {
        assert!(rho.abs() < 1.0, "ar1 requires |rho| < 1");
        let sd = (1.0 / (1.0 - rho * rho)).sqrt();
        let mut p = IrfProcess::new(
            move |x, e| rho * x + e,
            InnovationLaw::StandardNormal,
            rho.abs(),
            sd,
            "ar1",
        )
        .unwrap();
        p.ar1_rho = Some(rho);
        p.symmetric = true;
        p
    }

    /// Threshold AR: X_t = a |X_{t-1}| + eps_t, contraction a in (0, 1).
    pub fn threshold_ar(a: f64) -> Self {
        assert!((0.0..1.0).contains(&a), "threshold_ar requires a in (0, 1)");
        let sd = 1.0 / (1.0 - a);
        IrfProcess::new(
            move |x, e| a * x.abs() + e,
            InnovationLaw::StandardNormal,
            a,
            sd,
            "threshold_ar",
        )
        .unwrap()
    }

    pub fn contraction(&self) -> f64 {
        self.contraction
    }
}

impl CausalProcess for IrfProcess {
    fn name(&self) -> &str {
        &self.name
    }

    fn law(&self) -> InnovationLaw {
        self.law
    }

    fn min_lag(&self) -> usize {
        self.burn_in
    }

    fn tail_bound(&self, lag: usize) -> f64 {
        self.contraction.powi(lag as i32 + 1) * self.sd_bound
    }

    fn eval(&self, window: &InnovationWindow, t: i64, lag: usize) -> f64 {
        let mut x = 0.0;
        for s in (t - lag as i64)..=t {
            x = (self.map)(x, window.value(s));
        }
        x
    }

    fn eval_path(&self, panel: &InnovationWindow, n: u64, lag: usize) -> Vec<f64> {
        let _ = lag;
        let mut x = 0.0;
        let mut out = Vec::with_capacity(n as usize);
        for t in panel.first_time()..=n as i64 {
            x = (self.map)(x, panel.value(t));
            if t >= 1 {
                out.push(x);
            }
        }
        out
    }

    fn delta_oracle(&self, j: usize, p: f64) -> Option<f64> {
        let rho = self.ar1_rho?;
        self.law.diff_norm(p).map(|d| rho.powi(j as i32).abs() * d)
    }

    fn gamma_oracle(&self, i: usize) -> Option<f64> {
        let rho = self.ar1_rho?;
        Some(rho.powi(i as i32) * self.law.variance() / (1.0 - rho * rho))
    }

    fn sigma2_oracle(&self) -> Option<f64> {
        let rho = self.ar1_rho?;
        Some(self.law.variance() / ((1.0 - rho) * (1.0 - rho)))
    }

    fn lp_contraction(&self, _p: f64) -> Option<f64> {
        Some(self.contraction)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric && law_is_symmetric(self.law)
    }

    fn cond_mean_split(&self, window: &InnovationWindow, t: i64, m: usize) -> Option<(f64, f64)> {
        let rho = self.ar1_rho?;
        if self.law != InnovationLaw::StandardNormal {
            return None;
        }
        let s: f64 = (0..=m).map(|j| rho.powi(j as i32) * window.value(t - j as i64)).sum();
        let r = rho.powi(m as i32 + 1);
        Some((s, r * r / (1.0 - rho * rho)))
    }
}

/// Spot-check the contraction certificate: the largest empirical ratio
/// ||G(x, eps) - G(x', eps)||_p / |x - x'| over random start pairs.
pub fn estimate_contraction(
    proc: &IrfProcess,
    p: f64,
    pairs: usize,
    reps: usize,
    seed: Seed,
    range: f64,
) -> f64 {
    let pair_seed = seed.child(101);
    let eps_seed = seed.child(102);
    let mut worst: f64 = 0.0;
    for k in 0..pairs {
        let x = (crate::innovations::uniform01(pair_seed, k as i64, 0) - 0.5) * 2.0 * range;
        let y = (crate::innovations::uniform01(pair_seed, k as i64, 1) - 0.5) * 2.0 * range;
        if (x - y).abs() < 1e-9 {
            continue;
        }
        let diffs: Vec<f64> = (0..reps)
            .map(|r| {
                let e = proc.law.sample(eps_seed.with_replication(k as u64), r as i64);
                ((proc.map)(x, e) - (proc.map)(y, e)).abs().powf(p)
            })
            .collect();
        let ratio = numeric::mean(&diffs).powf(1.0 / p) / (x - y).abs();
        worst = worst.max(ratio);
    }
    worst
}
