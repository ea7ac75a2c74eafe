//! The process zoo: Bernoulli-shift functionals with evaluation rules,
//! tail-error bounds, and analytic oracles where they exist.

mod doubling;
mod irf;
mod linear;
mod volterra;

pub use doubling::{
    doubling_delta_formula, doubling_delta_printed, haar_delta_bound, DoublingMapProcess, GFunc,
};
pub use irf::{estimate_contraction, IrfProcess};
pub use linear::LinearProcess;
pub use volterra::{
    default_cp, volterra_delta_bound, volterra_qnk, VolterraKernel, VolterraProcess,
};

use crate::error::{KmtError, Result};
use crate::innovations::{draw_window, InnovationLaw, InnovationWindow, Seed};

/// A stationary causal process X_i = G(.., eps_{i-1}, eps_i).
///
/// Implementations evaluate X_i from a finite window of innovations; the
/// infinite past is truncated at a caller-supplied lag budget with an honest
/// `tail_bound`. Evaluation depends only on relative lags (stationarity).
pub trait CausalProcess: Sync + Send {
    fn name(&self) -> &str;

    fn law(&self) -> InnovationLaw;

    /// Minimum admissible lag budget.
    fn min_lag(&self) -> usize {
        0
    }

    /// Upper bound on ||X_i - X_i^{(L)}||_2 where X^{(L)} uses only lags <= L.
    fn tail_bound(&self, lag: usize) -> f64;

    /// X_t from the innovations at times t-lag ..= t (all inside `window`).
    fn eval(&self, window: &InnovationWindow, t: i64, lag: usize) -> f64;

    /// Path X_1..X_n over a shared panel covering times [1-lag, n].
    ///
    /// The default calls `eval` per index; implementations override when a
    /// streaming recursion is cheaper.
    fn eval_path(&self, panel: &InnovationWindow, n: u64, lag: usize) -> Vec<f64> {
        (1..=n as i64).map(|t| self.eval(panel, t, lag)).collect()
    }

    /// Closed-form delta_{j,p} when known.
    fn delta_oracle(&self, _j: usize, _p: f64) -> Option<f64> {
        None
    }

    /// Closed-form autocovariance gamma_i when known.
    fn gamma_oracle(&self, _i: usize) -> Option<f64> {
        None
    }

    /// Closed-form long-run variance when known.
    fn sigma2_oracle(&self) -> Option<f64> {
        None
    }

    /// L^p contraction coefficient for iterated random functions.
    fn lp_contraction(&self, _p: f64) -> Option<f64> {
        None
    }

    /// Whether X is symmetric in distribution (so E T_a(X) = 0 exactly).
    fn is_symmetric(&self) -> bool {
        false
    }

    /// Largest lag j with delta_{j,p} != 0, when finite.
    fn dependence_support(&self) -> Option<usize> {
        None
    }

    /// Gaussian split of X_t given the recent window: X_t = s + Z with
    /// s a function of eps_{t-m..t} and Z ~ N(0, v) independent of them.
    /// Available for finite linear processes with normal innovations.
    fn cond_mean_split(&self, _window: &InnovationWindow, _t: i64, _m: usize) -> Option<(f64, f64)> {
        None
    }
}

/// Draw the shared innovation panel for a path of length n at lag budget `lag`.
pub fn draw_panel(proc: &dyn CausalProcess, seed: Seed, n: u64, lag: usize) -> InnovationWindow {
    draw_window(seed, proc.law(), n as i64, n as usize - 1 + lag)
}

/// Evaluate the stationary path X_1..X_n from one shared innovation panel.
pub fn evaluate_path(
    proc: &dyn CausalProcess,
    seed: Seed,
    n: u64,
    lag: usize,
) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(KmtError::InvalidParameter("n must be >= 1".into()));
    }
    if lag < proc.min_lag() {
        return Err(KmtError::LagBudgetTooSmall {
            lag,
            min: proc.min_lag(),
            bound: proc.tail_bound(lag),
        });
    }
    let panel = draw_panel(proc, seed, n, lag);
    Ok(proc.eval_path(&panel, n, lag))
}

pub(crate) fn require_centered_law(law: InnovationLaw) -> Result<()> {
    law.validate()?;
    match law {
        InnovationLaw::Uniform01 | InnovationLaw::BernoulliHalf => {
            Err(KmtError::InvalidParameter(
                "uniform01/bernoulli_half are reserved for the doubling-map construction".into(),
            ))
        }
        _ => Ok(()),
    }
}

pub(crate) fn law_is_symmetric(law: InnovationLaw) -> bool {
    matches!(
        law,
        InnovationLaw::StandardNormal | InnovationLaw::Rademacher | InnovationLaw::StudentT { .. }
    )
}
