//! Volterra processes: finite polynomial-in-innovations expansions
//! X_t = sum_k sum_{j_1 < ... < j_k} g_k(j_1,...,j_k) eps_{t-j_1} ... eps_{t-j_k}.

use super::{require_centered_law, CausalProcess};
use crate::error::{KmtError, Result};
use crate::innovations::{InnovationLaw, InnovationWindow};
use crate::numeric::pairwise_sum;

/// One kernel order: support tuples (strictly increasing lags) with values.
#[derive(Debug, Clone)]
pub struct VolterraKernel {
    pub order: usize,
    pub terms: Vec<(Vec<usize>, f64)>,
}

#[derive(Debug, Clone)]
pub struct VolterraProcess {
    kernels: Vec<VolterraKernel>,
    law: InnovationLaw,
    max_lag: usize,
    name: String,
}

impl VolterraProcess {
    pub fn new(kernels: Vec<VolterraKernel>, law: InnovationLaw) -> Result<Self> {
        require_centered_law(law)?;
        let mut max_lag = 0;
        for k in &kernels {
            if k.order == 0 {
                return Err(KmtError::InvalidParameter("kernel order must be >= 1".into()));
            }
            for (tuple, _) in &k.terms {
                if tuple.len() != k.order {
                    return Err(KmtError::InvalidParameter(format!(
                        "tuple {tuple:?} does not match kernel order {}",
                        k.order
                    )));
                }
                if !tuple.windows(2).all(|w| w[0] < w[1]) {
                    return Err(KmtError::InvalidParameter(format!(
                        "kernel support must be strictly increasing, got {tuple:?}"
                    )));
                }
                max_lag = max_lag.max(*tuple.last().unwrap());
            }
        }
        Ok(VolterraProcess { kernels, law, max_lag, name: "volterra".into() })
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// X_t = eps_t + b eps_{t-1} eps_{t-2}: the second-order test process.
    pub fn quadratic(b: f64, law: InnovationLaw) -> Self {
        VolterraProcess::new(
            vec![
                VolterraKernel { order: 1, terms: vec![(vec![0], 1.0)] },
                VolterraKernel { order: 2, terms: vec![(vec![1, 2], b)] },
            ],
            law,
        )
        .unwrap()
        .with_name("volterra_quadratic")
    }

    pub fn kernels(&self) -> &[VolterraKernel] {
        &self.kernels
    }

    fn only_orders_le2(&self) -> bool {
        self.kernels.iter().all(|k| k.order <= 2)
    }
}

impl CausalProcess for VolterraProcess {
    fn name(&self) -> &str {
        &self.name
    }

    fn law(&self) -> InnovationLaw {
        self.law
    }

    fn min_lag(&self) -> usize {
        self.max_lag
    }

    fn tail_bound(&self, lag: usize) -> f64 {
        if lag >= self.max_lag {
            return 0.0;
        }
        // truncating below max_lag drops whole terms; bound by their L2 mass
        let v = self.law.variance();
        let mut s2 = 0.0;
        for k in &self.kernels {
            for (tuple, g) in &k.terms {
                if *tuple.last().unwrap() > lag {
                    s2 += g * g * v.powi(k.order as i32);
                }
            }
        }
        s2.sqrt()
    }

    fn eval(&self, window: &InnovationWindow, t: i64, lag: usize) -> f64 {
        let terms: Vec<f64> = self
            .kernels
            .iter()
            .flat_map(|k| k.terms.iter())
            .filter(|(tuple, _)| *tuple.last().unwrap() <= lag)
            .map(|(tuple, g)| {
                g * tuple.iter().map(|j| window.value(t - *j as i64)).product::<f64>()
            })
            .collect();
        pairwise_sum(&terms)
    }

    fn delta_oracle(&self, j: usize, p: f64) -> Option<f64> {
        if j > self.max_lag {
            return Some(0.0);
        }
        // exact only in the purely linear case
        if self.kernels.iter().all(|k| k.order == 1) {
            let a: f64 = self
                .kernels
                .iter()
                .flat_map(|k| k.terms.iter())
                .filter(|(tuple, _)| tuple[0] == j)
                .map(|(_, g)| g)
                .sum();
            return self.law.diff_norm(p).map(|d| a.abs() * d);
        }
        None
    }

    fn gamma_oracle(&self, i: usize) -> Option<f64> {
        if !self.only_orders_le2() {
            return None;
        }
        let v = self.law.variance();
        let mut s = 0.0;
        // order-1 x order-1: matching single lags shifted by i
        for ka in self.kernels.iter().filter(|k| k.order == 1) {
            for kb in self.kernels.iter().filter(|k| k.order == 1) {
                for (ta, ga) in &ka.terms {
                    for (tb, gb) in &kb.terms {
                        if ta[0] == tb[0] + i {
                            s += v * ga * gb;
                        }
                    }
                }
            }
        }
        // order-2 x order-2: matching lag pairs; within-term lags are distinct
        // so no fourth-moment term arises
        for ka in self.kernels.iter().filter(|k| k.order == 2) {
            for kb in self.kernels.iter().filter(|k| k.order == 2) {
                for (ta, ga) in &ka.terms {
                    for (tb, gb) in &kb.terms {
                        if ta[0] == tb[0] + i && ta[1] == tb[1] + i {
                            s += v * v * ga * gb;
                        }
                    }
                }
            }
        }
        // order-1 x order-2 cross terms always contain a lone innovation
        // factor with mean zero
        Some(s)
    }

    fn sigma2_oracle(&self) -> Option<f64> {
        if !self.only_orders_le2() {
            return None;
        }
        let mut s = self.gamma_oracle(0)?;
        for i in 1..=self.max_lag {
            s += 2.0 * self.gamma_oracle(i)?;
        }
        Some(s)
    }

    fn dependence_support(&self) -> Option<usize> {
        Some(self.max_lag)
    }
}

/// Q_{n,k}: sum of g_k^2 over support tuples containing lag n.
pub fn volterra_qnk(spec: &VolterraProcess, n: usize, k: usize) -> Result<f64> {
    let kernel = spec
        .kernels
        .iter()
        .find(|kk| kk.order == k)
        .ok_or_else(|| KmtError::InvalidParameter(format!("no kernel of order {k}")))?;
    Ok(kernel
        .terms
        .iter()
        .filter(|(tuple, _)| tuple.contains(&n))
        .map(|(_, g)| g * g)
        .sum())
}

/// Bound on delta_{n,p}^2: c_p sum_k ||eps||_p^{2k} Q_{n,k}. Even p only.
pub fn volterra_delta_bound(spec: &VolterraProcess, n: usize, p: u32, c_p: f64) -> Result<f64> {
    if p % 2 != 0 || p == 0 {
        return Err(KmtError::InvalidParameter(format!(
            "volterra delta bound requires even p, got {p}"
        )));
    }
    let norm_p = spec.law.abs_moment(p as f64).powf(1.0 / p as f64);
    if !norm_p.is_finite() {
        return Err(KmtError::InvalidParameter(format!(
            "||eps||_{p} is infinite for this innovation law"
        )));
    }
    let mut s = 0.0;
    for kernel in &spec.kernels {
        let q = volterra_qnk(spec, n, kernel.order)?;
        s += norm_p.powi(2 * kernel.order as i32) * q;
    }
    Ok(c_p * s)
}

/// Default constant in the delta bound, c_p = 2^p p!.
pub fn default_cp(p: u32) -> f64 {
    let fact: f64 = (1..=p as u64).map(|i| i as f64).product();
    2f64.powi(p as i32) * fact
}
