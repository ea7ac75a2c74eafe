//! Named process constructors for configs and the standard zoo used by the
//! cross-checks.

use std::collections::BTreeMap;

use crate::error::{KmtError, Result};
use crate::innovations::InnovationLaw;
use crate::processes::{
    CausalProcess, DoublingMapProcess, IrfProcess, LinearProcess, VolterraProcess,
};

use super::config::ProcessConfig;

/// A constructed process plus the side information the harness needs: a lag
/// budget, linear coefficients when a closed-form variance path exists, the
/// long-run variance when known, and whether the mean is exactly zero.
pub struct ProcessBundle {
    pub name: String,
    pub proc: Box<dyn CausalProcess>,
    pub lag: usize,
    pub coeffs: Option<Vec<f64>>,
    pub sigma2: Option<f64>,
    pub mean_zero: bool,
}

impl ProcessBundle {
    pub fn var_eps(&self) -> f64 {
        self.proc.law().variance()
    }
}

fn param(pc: &ProcessConfig, key: &str, default: f64) -> f64 {
    pc.params.get(key).copied().unwrap_or(default)
}

/// Build a process from its config stanza. Unknown keys are rejected so a
/// typo cannot silently fall back to a default.
pub fn build_process(pc: &ProcessConfig) -> Result<ProcessBundle> {
    let known: &[&str] = match pc.kind.as_str() {
        "iid_normal" | "iid_rademacher" | "doubling_haar" => &[],
        "iid_pareto" => &["tail_index"],
        "ar1" | "ar1_irf" => &["rho"],
        "ma1" => &["theta"],
        "volterra_quadratic" => &["b"],
        "threshold_ar" => &["a"],
        other => {
            return Err(KmtError::Config {
                key: "process.kind".into(),
                reason: format!("unknown process `{other}`"),
            });
        }
    };
    for k in pc.params.keys() {
        if !known.contains(&k.as_str()) {
            return Err(KmtError::Config {
                key: format!("process.{k}"),
                reason: format!("not a parameter of `{}`", pc.kind),
            });
        }
    }
    let mut b = match pc.kind.as_str() {
        "iid_normal" => iid(InnovationLaw::StandardNormal, "iid_normal")?,
        "iid_rademacher" => iid(InnovationLaw::Rademacher, "iid_rademacher")?,
        "iid_pareto" => {
            let ti = param(pc, "tail_index", 2.5);
            iid(InnovationLaw::CenteredPareto { tail_index: ti }, "iid_pareto")?
        }
        "ar1" => {
            let rho = param(pc, "rho", 0.5);
            let lag = pc.lag.unwrap_or(64);
            let proc = LinearProcess::ar1_truncated(rho, lag);
            let coeffs = proc.coeffs().to_vec();
            let s2 = proc.sigma2_oracle();
            ProcessBundle {
                name: format!("ar1_rho{rho}"),
                proc: Box::new(proc),
                lag,
                coeffs: Some(coeffs),
                sigma2: s2,
                mean_zero: true,
            }
        }
        "ar1_irf" => {
            let rho = param(pc, "rho", 0.5);
            let proc = IrfProcess::ar1(rho);
            let lag = proc.min_lag();
            let s2 = proc.sigma2_oracle();
            ProcessBundle {
                name: format!("ar1_irf_rho{rho}"),
                proc: Box::new(proc),
                lag,
                coeffs: None,
                sigma2: s2,
                mean_zero: true,
            }
        }
        "ma1" => {
            let theta = param(pc, "theta", 0.5);
            let proc = LinearProcess::ma1(theta, InnovationLaw::StandardNormal);
            let coeffs = proc.coeffs().to_vec();
            let s2 = proc.sigma2_oracle();
            ProcessBundle {
                name: format!("ma1_theta{theta}"),
                proc: Box::new(proc),
                lag: 8,
                coeffs: Some(coeffs),
                sigma2: s2,
                mean_zero: true,
            }
        }
        "volterra_quadratic" => {
            let bpar = param(pc, "b", 0.5);
            let proc = VolterraProcess::quadratic(bpar, InnovationLaw::StandardNormal);
            let lag = proc.min_lag().max(4);
            let s2 = proc.sigma2_oracle();
            ProcessBundle {
                name: format!("volterra_b{bpar}"),
                proc: Box::new(proc),
                lag,
                coeffs: None,
                sigma2: s2,
                mean_zero: true,
            }
        }
        "doubling_haar" => {
            let proc = DoublingMapProcess::haar_mother();
            let lag = proc.min_lag();
            ProcessBundle {
                name: "doubling_haar".into(),
                proc: Box::new(proc),
                lag,
                // the leading-bit Haar value is an i.i.d. sign sequence
                coeffs: None,
                sigma2: Some(1.0),
                mean_zero: true,
            }
        }
        "threshold_ar" => {
            let a = param(pc, "a", 0.3);
            let proc = IrfProcess::threshold_ar(a);
            let lag = proc.min_lag();
            ProcessBundle {
                name: format!("threshold_ar_a{a}"),
                proc: Box::new(proc),
                lag,
                coeffs: None,
                sigma2: None,
                mean_zero: false,
            }
        }
        _ => unreachable!("kind validated above"),
    };
    if let Some(l) = pc.lag {
        if l < b.proc.min_lag() {
            return Err(KmtError::Config {
                key: "process.lag".into(),
                reason: format!("lag {l} below process minimum {}", b.proc.min_lag()),
            });
        }
        b.lag = l;
    }
    Ok(b)
}

fn iid(law: InnovationLaw, name: &str) -> Result<ProcessBundle> {
    let proc = LinearProcess::new(vec![1.0], law)?;
    let coeffs = proc.coeffs().to_vec();
    let s2 = proc.sigma2_oracle();
    Ok(ProcessBundle {
        name: name.into(),
        proc: Box::new(proc),
        lag: 4,
        coeffs: Some(coeffs),
        sigma2: s2,
        mean_zero: true,
    })
}

/// The standard zoo exercised by the CLT cross-check and the reports.
pub fn zoo() -> Vec<ProcessBundle> {
    let mk = |kind: &str, params: &[(&str, f64)]| {
        let pc = ProcessConfig {
            kind: kind.into(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
            lag: None,
        };
        build_process(&pc).expect("zoo entries are valid")
    };
    vec![
        mk("iid_normal", &[]),
        mk("ar1", &[("rho", 0.5)]),
        mk("ma1", &[("theta", 0.5)]),
        mk("volterra_quadratic", &[("b", 0.5)]),
        mk("doubling_haar", &[]),
        mk("threshold_ar", &[("a", 0.3)]),
    ]
}
