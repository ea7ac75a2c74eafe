//! Finite linear (moving-average) processes X_t = sum_j a_j eps_{t-j}.

use super::{law_is_symmetric, require_centered_law, CausalProcess};
use crate::error::Result;
use crate::innovations::{InnovationLaw, InnovationWindow};
use crate::numeric::pairwise_sum;

#[derive(Debug, Clone)]
pub struct LinearProcess {
    coeffs: Vec<f64>,
    law: InnovationLaw,
    min_lag: usize,
    name: String,
}

impl LinearProcess {
    pub fn new(coeffs: Vec<f64>, law: InnovationLaw) -> Result<Self> {
        require_centered_law(law)?;
        if coeffs.is_empty() {
            return Err(crate::error::KmtError::InvalidParameter(
                "linear process needs at least one coefficient".into(),
            ));
        }
        let min_lag = coeffs.len() - 1;
        Ok(LinearProcess { coeffs, law, min_lag, name: "linear".into() })
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// MA(1): X_t = eps_t + theta eps_{t-1}.
    pub fn ma1(theta: f64, law: InnovationLaw) -> Self {
        LinearProcess::new(vec![1.0, theta], law).unwrap().with_name("ma1")
    }

    /// AR(1) with standard normal innovations, truncated to a_j = rho^j for
    /// j <= max_lag. The truncation error is absorbed into the tail bound.
    pub fn ar1_truncated(rho: f64, max_lag: usize) -> Self {
        assert!(rho.abs() < 1.0, "ar1 requires |rho| < 1");
        let coeffs = (0..=max_lag).map(|j| rho.powi(j as i32)).collect();
        LinearProcess::new(coeffs, InnovationLaw::StandardNormal)
            .unwrap()
            .with_name("ar1_linear")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

impl CausalProcess for LinearProcess {
    fn name(&self) -> &str {
        &self.name
    }

    fn law(&self) -> InnovationLaw {
        self.law
    }

    fn min_lag(&self) -> usize {
        self.min_lag
    }

    fn tail_bound(&self, lag: usize) -> f64 {
        let v = self.law.variance();
        let s2: f64 = self.coeffs.iter().skip(lag + 1).map(|a| a * a).sum();
        (v * s2).sqrt()
    }

    fn eval(&self, window: &InnovationWindow, t: i64, lag: usize) -> f64 {
        let jmax = lag.min(self.coeffs.len() - 1);
        let terms: Vec<f64> =
            (0..=jmax).map(|j| self.coeffs[j] * window.value(t - j as i64)).collect();
        pairwise_sum(&terms)
    }

    /// Streaming FIR evaluation, O(n * J) but cache-friendly on the panel.
    fn eval_path(&self, panel: &InnovationWindow, n: u64, lag: usize) -> Vec<f64> {
        let jmax = lag.min(self.coeffs.len() - 1);
        let first = panel.first_time();
        let vals = panel.values();
        (1..=n as i64)
            .map(|t| {
                let base = (t - first) as usize;
                let terms: Vec<f64> =
                    (0..=jmax).map(|j| self.coeffs[j] * vals[base - j]).collect();
                pairwise_sum(&terms)
            })
            .collect()
    }

    fn delta_oracle(&self, j: usize, p: f64) -> Option<f64> {
        if j >= self.coeffs.len() {
            return Some(0.0);
        }
        self.law.diff_norm(p).map(|d| self.coeffs[j].abs() * d)
    }

    fn gamma_oracle(&self, i: usize) -> Option<f64> {
        let v = self.law.variance();
        if i >= self.coeffs.len() {
            return Some(0.0);
        }
        let s: f64 = self.coeffs.iter().zip(self.coeffs.iter().skip(i)).map(|(a, b)| a * b).sum();
        Some(v * s)
    }

    fn sigma2_oracle(&self) -> Option<f64> {
        let s: f64 = self.coeffs.iter().sum();
        Some(self.law.variance() * s * s)
    }

    fn is_symmetric(&self) -> bool {
        law_is_symmetric(self.law)
    }

    fn dependence_support(&self) -> Option<usize> {
        Some(self.coeffs.len() - 1)
    }

    fn cond_mean_split(&self, window: &InnovationWindow, t: i64, m: usize) -> Option<(f64, f64)> {
        if self.law != InnovationLaw::StandardNormal {
            return None;
        }
        let jmax = self.coeffs.len() - 1;
        let head = jmax.min(m);
        let s: f64 = (0..=head).map(|j| self.coeffs[j] * window.value(t - j as i64)).sum();
        let v: f64 = self.coeffs.iter().skip(m + 1).map(|a| a * a).sum();
        Some((s, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovations::{draw_window, Seed};
    use crate::numeric;
    use crate::processes::evaluate_path;

    #[test]
    fn ma1_autocovariances_match_closed_form() {
        let proc = LinearProcess::ma1(0.5, InnovationLaw::StandardNormal);
        // gamma_0 = 1 + theta^2, gamma_1 = theta, gamma_2 = 0
        assert!((proc.gamma_oracle(0).unwrap() - 1.25).abs() < 1e-12);
        assert!((proc.gamma_oracle(1).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(proc.gamma_oracle(2).unwrap(), 0.0);
        // sigma^2 = (1 + theta)^2
        assert!((proc.sigma2_oracle().unwrap() - 2.25).abs() < 1e-12);

        let xs = evaluate_path(&proc, Seed::new(2), 400_000, 1).unwrap();
        let g0 = numeric::variance(&xs);
        assert!((g0 - 1.25).abs() < 0.02, "g0 {g0}");
    }

    #[test]
    fn ar1_truncated_sigma2() {
        let proc = LinearProcess::ar1_truncated(0.5, 256);
        // sigma^2 = 1/(1-rho)^2 = 4 up to truncation error
        assert!((proc.sigma2_oracle().unwrap() - 4.0).abs() < 1e-10);
        assert!((proc.gamma_oracle(0).unwrap() - 4.0 / 3.0).abs() < 1e-10);
        assert!(proc.tail_bound(60) < 1e-17);
    }

    #[test]
    fn delta_oracle_matches_coupling_estimate() {
        let proc = LinearProcess::ma1(0.5, InnovationLaw::StandardNormal);
        // delta_{1,2} = |theta| * sqrt(2)
        let oracle = proc.delta_oracle(1, 2.0).unwrap();
        let mut sq = Vec::new();
        for r in 0..200_000u64 {
            let seed = Seed::new(9).with_replication(r);
            let w = draw_window(seed, proc.law(), 1, 2);
            let w2 =
                crate::innovations::couple_at(&w, proc.law(), 0, seed.child(7)).unwrap();
            let d = proc.eval(&w, 1, 1) - proc.eval(&w2, 1, 1);
            sq.push(d * d);
        }
        let est = numeric::mean(&sq).sqrt();
        assert!((est - oracle).abs() < 0.01, "est {est} oracle {oracle}");
    }

    #[test]
    fn cond_mean_split_reconstructs_variance() {
        let proc = LinearProcess::ar1_truncated(0.5, 64);
        let w = draw_window(Seed::new(4), proc.law(), 0, 64);
        let (s, v) = proc.cond_mean_split(&w, 0, 5).unwrap();
        // full variance splits as head + tail
        let head: f64 = (0..=5).map(|j| 0.5f64.powi(2 * j)).sum();
        assert!((s.abs() < 20.0) && v > 0.0);
        assert!((head + v - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_uncentered_law() {
        assert!(LinearProcess::new(vec![1.0], InnovationLaw::Uniform01).is_err());
    }
}
