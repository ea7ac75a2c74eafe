//! Monte Carlo estimation of the functional dependence measure by
//! coordinate-replacement coupling, tail extrapolation, the m_k block
//! schedules, and numeric verification of the strong-approximation conditions.

use crate::error::{KmtError, Result};
use crate::innovations::{couple_at, draw_window, Seed};
use crate::numeric::{lstsq, mean, pairwise_sum, ternary_min, variance};
use crate::processes::CausalProcess;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

const COUPLE_TAG: u64 = 0xc0_de;

#[derive(Debug, Clone, Copy)]
pub struct DeltaEstimate {
    pub j: u64,
    pub delta_hat: f64,
    pub se: f64,
    pub n_reps: u64,
}

/// delta_hat_{j,p} over N coupled replications sharing every innovation
/// except the one at lag j, with a delta-method standard error.
pub fn estimate_delta(
    proc: &dyn CausalProcess,
    j: u64,
    p: f64,
    n_reps: u64,
    lag: usize,
    seed: Seed,
) -> Result<DeltaEstimate> {
    if p > proc.law().p_max() {
        return Err(KmtError::InvalidParameter(format!(
            "p = {p} exceeds the innovation law's moment range (p_max = {})",
            proc.law().p_max()
        )));
    }
    if j as usize > lag {
        return Err(KmtError::LagBeyondBudget { j: j as usize, lag });
    }
    let law = proc.law();
    // X lives at time j; the replaced coordinate is at time 0, lag j behind
    let powers: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let s = seed.with_replication(r);
            let w = draw_window(s, law, j as i64, lag);
            let w2 = couple_at(&w, law, 0, s.child(COUPLE_TAG)).expect("0 is inside the window");
            let d = proc.eval(&w, j as i64, lag) - proc.eval(&w2, j as i64, lag);
            d.abs().powf(p)
        })
        .collect();
    let m = mean(&powers);
    let se_m = (variance(&powers) / n_reps as f64).sqrt();
    let (delta_hat, se) = if m <= 0.0 {
        (0.0, 0.0)
    } else {
        let d = m.powf(1.0 / p);
        (d, d / (p * m) * se_m)
    };
    Ok(DeltaEstimate { j, delta_hat, se, n_reps })
}

/// Parametric model for delta_{j,p} beyond the measured lag range.
#[derive(Debug, Clone, Copy)]
pub enum TailModel {
    /// Finite dependence support: exactly zero beyond the budget.
    Zero,
    /// delta_j ~ c * rate^j.
    Geometric { c: f64, rate: f64 },
    /// delta_j ~ c * j^{-beta} (log j)^{-a}.
    PowerLog { c: f64, beta: f64, a: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub model: TailModel,
    pub aicc_geometric: f64,
    pub aicc_power_log: f64,
}

#[derive(Debug, Clone)]
pub struct DependenceProfile {
    pub p: f64,
    pub delta: Vec<DeltaEstimate>,
    pub tail: TailModel,
    pub fit: Option<DecayFit>,
    /// Set when the fitted tail makes Theta_{0,p} diverge.
    pub long_range: bool,
}

fn tail_value(model: &TailModel, j: u64) -> f64 {
    match model {
        TailModel::Zero => 0.0,
        TailModel::Geometric { c, rate } => c * rate.powf(j as f64),
        TailModel::PowerLog { c, beta, a } => {
            let x = (j.max(2)) as f64;
            c * x.powf(-beta) * x.ln().powf(-a)
        }
    }
}

fn tail_mass(model: &TailModel, from: u64) -> f64 {
    match model {
        TailModel::Zero => 0.0,
        TailModel::Geometric { c, rate } => {
            if *rate >= 1.0 {
                return f64::INFINITY;
            }
            c * rate.powf(from as f64) / (1.0 - rate)
        }
        TailModel::PowerLog { beta, a, .. } => {
            if *beta <= 1.0 {
                return f64::INFINITY;
            }
            // partial sum plus an integral-test remainder
            let cap = from + 100_000;
            let mut s = 0.0;
            for j in from..=cap {
                s += tail_value(model, j);
            }
            let x = (cap + 1) as f64;
            s + tail_value(model, cap + 1) * x / (beta - 1.0) * {
                let _ = a;
                1.0
            }
        }
    }
}

fn aicc(rss: f64, n: usize, k: usize) -> f64 {
    let n_f = n as f64;
    let k_f = k as f64;
    if n <= k + 1 {
        return f64::INFINITY;
    }
    n_f * (rss / n_f).max(1e-300).ln() + 2.0 * k_f + 2.0 * k_f * (k_f + 1.0) / (n_f - k_f - 1.0)
}

/// Fit log delta_j against a geometric and a power-log decay law; choose by
/// AICc. Only lags with a clearly positive estimate enter the regression.
pub fn fit_decay(delta: &[DeltaEstimate]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = delta
        .iter()
        .filter(|d| d.j >= 2 && d.delta_hat > 1e-12)
        .map(|d| (d.j as f64, d.delta_hat.ln()))
        .collect();
    if pts.len() < 5 {
        return None;
    }
    let n = pts.len();
    let ones = vec![1.0; n];
    let y: Vec<f64> = pts.iter().map(|(_, ly)| *ly).collect();

    let xg: Vec<f64> = pts.iter().map(|(j, _)| *j).collect();
    let bg = lstsq(&[ones.clone(), xg.clone()], &y);
    let rss_g: f64 =
        pts.iter().map(|(j, ly)| (ly - bg[0] - bg[1] * j).powi(2)).sum();

    let xl: Vec<f64> = pts.iter().map(|(j, _)| j.ln()).collect();
    let xll: Vec<f64> = pts.iter().map(|(j, _)| j.ln().ln()).collect();
    let bp = lstsq(&[ones, xl.clone(), xll.clone()], &y);
    let rss_p: f64 = pts
        .iter()
        .zip(xl.iter().zip(&xll))
        .map(|((_, ly), (l, ll))| (ly - bp[0] - bp[1] * l - bp[2] * ll).powi(2))
        .sum();

    let aicc_g = aicc(rss_g, n, 2);
    let aicc_p = aicc(rss_p, n, 3);
    let model = if aicc_g <= aicc_p {
        TailModel::Geometric { c: bg[0].exp(), rate: bg[1].exp().min(2.0) }
    } else {
        TailModel::PowerLog { c: bp[0].exp(), beta: -bp[1], a: -bp[2] }
    };
    Some(DecayFit { model, aicc_geometric: aicc_g, aicc_power_log: aicc_p })
}

/// Estimate delta at every lag 0..=l_max and assemble the profile with a
/// fitted (or exactly-zero) tail beyond l_max.
pub fn estimate_profile(
    proc: &dyn CausalProcess,
    p: f64,
    l_max: u64,
    n_reps: u64,
    lag: usize,
    seed: Seed,
) -> Result<DependenceProfile> {
    let mut delta = Vec::with_capacity(l_max as usize + 1);
    for j in 0..=l_max {
        delta.push(estimate_delta(proc, j, p, n_reps, lag, seed.child(j))?);
    }
    let (tail, fit) = match proc.dependence_support() {
        Some(s) if s as u64 <= l_max => (TailModel::Zero, None),
        _ => {
            let fit = fit_decay(&delta);
            (fit.map(|f| f.model).unwrap_or(TailModel::Zero), fit)
        }
    };
    let long_range = !tail_mass(&tail, l_max + 1).is_finite();
    Ok(DependenceProfile { p, delta, tail, fit, long_range })
}

impl DependenceProfile {
    pub fn l_max(&self) -> u64 {
        self.delta.last().map(|d| d.j).unwrap_or(0)
    }

    /// delta_{j,p}: measured inside the budget, extrapolated beyond it.
    pub fn delta_at(&self, j: u64) -> f64 {
        match self.delta.iter().find(|d| d.j == j) {
            Some(d) => d.delta_hat,
            None => tail_value(&self.tail, j),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["j", "delta_hat", "se", "n_reps"])?;
        for d in &self.delta {
            w.write_record([
                d.j.to_string(),
                format!("{:.17e}", d.delta_hat),
                format!("{:.17e}", d.se),
                d.n_reps.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Theta_{m,p} = sum_{j >= m} delta_{j,p}: measured part plus the tail model
/// mass beyond the budget. Infinite (long-range flag) when the tail diverges.
pub fn theta_tail(profile: &DependenceProfile, m: u64) -> f64 {
    let measured: Vec<f64> = profile
        .delta
        .iter()
        .filter(|d| d.j >= m)
        .map(|d| d.delta_hat)
        .collect();
    let from = (profile.l_max() + 1).max(m);
    pairwise_sum(&measured) + tail_mass(&profile.tail, from)
}

/// Xi_{alpha,p} = sum_j |j|^{1/2 - 1/alpha} delta_{j,p}^{p/alpha}; +inf when
/// the fitted tail decays too slowly for the series to converge.
pub fn xi_alpha_p(profile: &DependenceProfile, alpha: f64) -> Result<f64> {
    if alpha <= profile.p {
        return Err(KmtError::InvalidParameter(format!(
            "xi requires alpha > p, got alpha = {alpha}, p = {}",
            profile.p
        )));
    }
    let e0 = 0.5 - 1.0 / alpha;
    let q = profile.p / alpha;
    let measured: Vec<f64> = profile
        .delta
        .iter()
        .filter(|d| d.j >= 1)
        .map(|d| (d.j as f64).powf(e0) * d.delta_hat.powf(q))
        .collect();
    let head = pairwise_sum(&measured);
    let from = profile.l_max() + 1;
    let tail = match profile.tail {
        TailModel::Zero => 0.0,
        TailModel::Geometric { .. } => {
            let mut s = 0.0;
            let mut j = from;
            loop {
                let t = (j as f64).powf(e0) * tail_value(&profile.tail, j).powf(q);
                s += t;
                j += 1;
                if (t <= 1e-16 * (head + s).max(1e-300) && j > from + 64) || j > from + 10_000_000 {
                    break;
                }
            }
            s
        }
        TailModel::PowerLog { beta, .. } => {
            // net polynomial exponent from the integral test
            let net = e0 - beta * q;
            if net >= -1.0 {
                return Ok(f64::INFINITY);
            }
            let mut s = 0.0;
            let cap = from + 100_000;
            for j in from..=cap {
                s += (j as f64).powf(e0) * tail_value(&profile.tail, j).powf(q);
            }
            let x = (cap + 1) as f64;
            s + x.powf(e0) * tail_value(&profile.tail, cap + 1).powf(q) * x / (-net - 1.0)
        }
    };
    Ok(head + tail)
}

/// tau_p from the closed form; checked against its defining relation.
pub fn tau_p(p: f64) -> Result<f64> {
    if p < 2.0 {
        return Err(KmtError::InvalidParameter(format!("tau_p requires p >= 2, got {p}")));
    }
    let tau = (p * p - 4.0 + (p - 2.0) * (p * p + 20.0 * p + 4.0).sqrt()) / (8.0 * p);
    if p > 2.0 {
        let r = tau_p_residual(p, tau);
        debug_assert!(r < 1e-10, "tau_p defining relation residual {r}");
    }
    Ok(tau)
}

/// |LHS - RHS| of the defining relation: the two exponent expressions whose
/// equality pins tau down, (tau - (1/2 - 1/p)) / (tau/p - 1/4 + 1/(2p)) =
/// (2/3)(1 + p + p tau).
pub fn tau_p_residual(p: f64, tau: f64) -> f64 {
    let lhs = (tau - (0.5 - 1.0 / p)) / (tau / p - 0.25 + 1.0 / (2.0 * p));
    let rhs = (2.0 / 3.0) * (1.0 + p + p * tau);
    (lhs - rhs).abs()
}

/// The three admissible block-size schedule regimes.
#[derive(Debug, Clone)]
pub enum ScheduleCase {
    I,
    II,
    III,
}

/// m_k for the given regime; k >= 2, clamped to >= 1. `log_base` applies to
/// the log k factors (any base only rescales constants; natural log is the
/// default).
pub fn mk_schedule(case: ScheduleCase, p: f64, alpha: f64, k: u64, log_base: f64) -> Result<u64> {
    if k < 2 {
        return Err(KmtError::InadmissibleSchedule(format!("k must be >= 2, got {k}")));
    }
    let kf = k as f64;
    let logk = kf.ln() / log_base.ln();
    let ln3 = 3f64.ln();
    let v = match case {
        ScheduleCase::I => {
            if p <= 4.0 {
                return Err(KmtError::InadmissibleSchedule(format!(
                    "case i requires p > 4, got p = {p}"
                )));
            }
            if alpha <= p {
                return Err(KmtError::InadmissibleSchedule(format!(
                    "case i requires alpha > p, got alpha = {alpha}, p = {p}"
                )));
            }
            let e = kf * (alpha / p - 1.0) / (alpha / 2.0 - 1.0);
            (e * ln3).exp()
                * kf.powf(-1.0 / (alpha / 2.0 - 1.0))
                * logk.powf(-1.0 / (p / 2.0 - 1.0))
        }
        ScheduleCase::II => {
            if (p - 4.0).abs() > 1e-12 || (alpha - 6.0).abs() > 1e-12 {
                return Err(KmtError::InadmissibleSchedule(format!(
                    "case ii fixes p = 4, alpha = 6; got p = {p}, alpha = {alpha}"
                )));
            }
            (kf / 4.0 * ln3).exp() / kf
        }
        ScheduleCase::III => {
            if !(2.0 < p && p < 4.0) {
                return Err(KmtError::InadmissibleSchedule(format!(
                    "case iii requires 2 < p < 4, got p = {p}"
                )));
            }
            let lo = (2.0 + p) / (3.0 - p / 2.0);
            let hi = (2.0 + 4.0 * p) / 3.0;
            if !(lo < alpha && alpha < hi) {
                return Err(KmtError::InadmissibleSchedule(format!(
                    "case iii requires {lo:.6} < alpha < {hi:.6}, got alpha = {alpha}"
                )));
            }
            (kf * (0.5 - 1.0 / p) * ln3).exp() * logk
        }
    };
    Ok((v.floor() as u64).max(1))
}

/// A block-size sequence m_k for the triadic decomposition.
#[derive(Debug, Clone)]
pub enum Schedule {
    CaseI { p: f64, alpha: f64, log_base: f64 },
    CaseII,
    CaseIII { p: f64, alpha: f64, log_base: f64 },
    Constant(u64),
    Explicit(Vec<u64>),
}

impl Schedule {
    /// m_k for any k >= 1; the case formulas are frozen at k = 2 below their
    /// stated range.
    pub fn m(&self, k: u64) -> Result<u64> {
        match self {
            Schedule::CaseI { p, alpha, log_base } => {
                mk_schedule(ScheduleCase::I, *p, *alpha, k.max(2), *log_base)
            }
            Schedule::CaseII => mk_schedule(ScheduleCase::II, 4.0, 6.0, k.max(2), std::f64::consts::E),
            Schedule::CaseIII { p, alpha, log_base } => {
                mk_schedule(ScheduleCase::III, *p, *alpha, k.max(2), *log_base)
            }
            Schedule::Constant(m) => {
                if *m < 1 {
                    Err(KmtError::InadmissibleSchedule("constant m must be >= 1".into()))
                } else {
                    Ok(*m)
                }
            }
            Schedule::Explicit(ms) => ms
                .get(k as usize - 1)
                .copied()
                .ok_or_else(|| KmtError::InadmissibleSchedule(format!(
                    "explicit schedule has {} entries, k = {k} requested",
                    ms.len()
                ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Schedule::CaseI { p, alpha, .. } => format!("case_i(p={p}, alpha={alpha})"),
            Schedule::CaseII => "case_ii(p=4, alpha=6)".into(),
            Schedule::CaseIII { p, alpha, .. } => format!("case_iii(p={p}, alpha={alpha})"),
            Schedule::Constant(m) => format!("constant({m})"),
            Schedule::Explicit(ms) => format!("explicit({} entries)", ms.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub id: &'static str,
    pub pass: bool,
    pub partial_sum: f64,
    pub tail_bound: f64,
    pub k0: Option<u64>,
    pub detail: String,
    /// (k or j, summand or quotient) trace.
    pub trace: Vec<(u64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub p: f64,
    pub alpha: f64,
    pub schedule: String,
    pub horizon: u64,
    pub xi: f64,
    pub checks: Vec<ConditionCheck>,
}

/// Summability diagnostic on a positive series: find the start k0 of the
/// maximal strictly-decreasing suffix; pass when that suffix covers at least
/// half the horizon and the last term is below half the mid-suffix term.
/// A finite horizon cannot certify a limit, so a pass is evidence, not proof.
pub(crate) fn decay_diagnostic(id: &'static str, trace: Vec<(u64, f64)>) -> ConditionCheck {
    let vals: Vec<f64> = trace.iter().map(|(_, v)| *v).collect();
    let n = vals.len();
    let partial_sum = pairwise_sum(&vals);
    if vals.iter().all(|v| *v == 0.0) {
        return ConditionCheck {
            id,
            pass: true,
            partial_sum,
            tail_bound: 0.0,
            k0: trace.first().map(|(k, _)| *k),
            detail: "all summands zero".into(),
            trace,
        };
    }
    // walk back while strictly decreasing (zeros extend the suffix)
    let mut start = n - 1;
    while start > 0 && (vals[start] < vals[start - 1] || vals[start] == 0.0) {
        start -= 1;
    }
    let k0 = trace[start].0;
    let suffix_covers = start <= n / 2;
    let mid_idx = (start + n - 1) / 2;
    let a_mid = vals[mid_idx];
    let a_last = vals[n - 1];
    let halved = a_mid == 0.0 || a_last <= 0.5 * a_mid;
    let mut r: f64 = 0.0;
    for i in mid_idx..n - 1 {
        if vals[i] > 0.0 {
            r = r.max(vals[i + 1] / vals[i]);
        }
    }
    let tail_bound = if a_last == 0.0 {
        0.0
    } else if r < 1.0 && r > 0.0 {
        a_last * r / (1.0 - r)
    } else if r == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let pass = suffix_covers && halved;
    ConditionCheck {
        id,
        pass,
        partial_sum,
        tail_bound,
        k0: Some(k0),
        detail: format!(
            "decreasing from k0={k0}; last/mid = {:.3e}/{:.3e}; ratio bound r = {r:.4}",
            a_last, a_mid
        ),
        trace,
    }
}

/// Verify the four strong-approximation conditions numerically from
/// delta / Theta sources.
///
/// `delta(j)` and `theta(m)` may come from a measured profile or an analytic
/// model; the report records partial sums, truncation levels, and the decay
/// evidence for each condition.
pub fn check_sip_conditions(
    delta: &dyn Fn(u64) -> f64,
    theta: &dyn Fn(u64) -> f64,
    p: f64,
    alpha: f64,
    schedule: &Schedule,
    horizon: u64,
) -> Result<ConditionReport> {
    if alpha <= p {
        return Err(KmtError::InvalidParameter(format!(
            "conditions require alpha > p, got alpha = {alpha}, p = {p}"
        )));
    }
    if horizon < 6 {
        return Err(KmtError::InvalidParameter("horizon must be >= 6".into()));
    }

    // Xi_{alpha,p} finite; summand over j on a lag grid
    let j_cap: u64 = 10_000;
    let e0 = 0.5 - 1.0 / alpha;
    let q = p / alpha;
    let trace24: Vec<(u64, f64)> =
        (1..=j_cap).map(|j| (j, (j as f64).powf(e0) * delta(j).powf(q))).collect();
    let check24 = decay_diagnostic("xi_summability", trace24);
    let xi = check24.partial_sum + check24.tail_bound;

    // schedule moment sum: sum_k 3^{k(1 - alpha/p)} m_k^{alpha/2 - 1}
    let ln3 = 3f64.ln();
    let mut trace25 = Vec::new();
    let mut trace26 = Vec::new();
    let mut trace27 = Vec::new();
    for k in 2..=horizon {
        let kf = k as f64;
        let m = schedule.m(k)? as f64;
        trace25.push((k, (kf * (1.0 - alpha / p) * ln3).exp() * m.powf(alpha / 2.0 - 1.0)));
        trace26.push((k, (kf * (p / 2.0 - 1.0) * ln3).exp() * theta(m as u64).powf(p)));

        // variance-rate quotient: Theta_{m_k} + min_l(Theta_l + l 3^{k(2/p-1)})
        // against 3^{k(1/p-1/2)} / sqrt(log k)
        let slope = (kf * (2.0 / p - 1.0) * ln3).exp();
        let l_hi = (kf * ln3).exp().min(1e12) as u64;
        let (_, min_val) = ternary_min(|l| theta(l) + l as f64 * slope, 0, l_hi.max(1));
        let denom = (kf * (1.0 / p - 0.5) * ln3).exp() / kf.ln().sqrt();
        trace27.push((k, (theta(m as u64) + min_val) / denom));
    }
    let check25 = decay_diagnostic("schedule_moment_sum", trace25);
    let check26 = decay_diagnostic("theta_block_sum", trace26);
    let check27 = decay_diagnostic("variance_rate_quotient", trace27);

    Ok(ConditionReport {
        p,
        alpha,
        schedule: schedule.describe(),
        horizon,
        xi,
        checks: vec![check24, check25, check26, check27],
    })
}

/// The profile-driven form of the condition check.
pub fn check_profile_conditions(
    profile: &DependenceProfile,
    alpha: f64,
    schedule: &Schedule,
    horizon: u64,
) -> Result<ConditionReport> {
    let delta = |j: u64| profile.delta_at(j);
    let theta = |m: u64| theta_tail(profile, m);
    check_sip_conditions(&delta, &theta, profile.p, alpha, schedule, horizon)
}

impl ConditionReport {
    pub fn write_text(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "condition report: p = {}, alpha = {}", self.p, self.alpha)?;
        writeln!(out, "schedule: {}; horizon K = {}", self.schedule, self.horizon)?;
        writeln!(out, "Xi_alpha_p = {:.6e}", self.xi)?;
        writeln!(out, "(a finite-horizon pass is evidence of decay, not a proof)")?;
        for c in &self.checks {
            writeln!(
                out,
                "({}) {}: partial sum {:.6e}, tail bound {:.3e}, k0 {:?} | {}",
                c.id,
                if c.pass { "pass" } else { "FAIL" },
                c.partial_sum,
                c.tail_bound,
                c.k0,
                c.detail
            )?;
        }
        Ok(())
    }

    pub fn write_summands_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["condition", "k", "summand"])?;
        for c in &self.checks {
            for (k, v) in &c.trace {
                w.write_record([c.id.to_string(), k.to_string(), format!("{v:.17e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovations::InnovationLaw;
    use crate::processes::{IrfProcess, LinearProcess};

    #[test]
    fn delta_matches_linear_oracle() {
        let proc = LinearProcess::ar1_truncated(0.5, 64);
        let est = estimate_delta(&proc, 3, 2.0, 100_000, 64, Seed::new(21)).unwrap();
        let oracle = 2f64.sqrt() * 0.125;
        assert!(
            (est.delta_hat - oracle).abs() < 3.0 * est.se,
            "est {} oracle {oracle} se {}",
            est.delta_hat,
            est.se
        );
    }

    #[test]
    fn delta_beyond_support_is_exactly_zero() {
        let proc = LinearProcess::ma1(0.5, InnovationLaw::StandardNormal);
        let est = estimate_delta(&proc, 5, 2.0, 1000, 16, Seed::new(1)).unwrap();
        assert_eq!(est.delta_hat, 0.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn delta_rejects_lag_beyond_budget() {
        let proc = LinearProcess::ma1(0.5, InnovationLaw::StandardNormal);
        assert!(matches!(
            estimate_delta(&proc, 20, 2.0, 10, 16, Seed::new(1)),
            Err(KmtError::LagBeyondBudget { .. })
        ));
    }

    #[test]
    fn doubling_haar_nonleading_bit_gives_zero() {
        let proc = crate::processes::DoublingMapProcess::haar_mother();
        let est =
            estimate_delta(&proc, 4, 2.0, 2000, proc.min_lag(), Seed::new(2)).unwrap();
        assert_eq!(est.delta_hat, 0.0);
    }

    #[test]
    fn theta_zero_matches_geometric_series() {
        let proc = LinearProcess::ar1_truncated(0.5, 64);
        let profile =
            estimate_profile(&proc, 2.0, 64, 20_000, 64, Seed::new(3)).unwrap();
        let theta0 = theta_tail(&profile, 0);
        let oracle = 2f64.sqrt() / 0.5;
        let se: f64 = profile.delta.iter().map(|d| d.se * d.se).sum::<f64>().sqrt();
        assert!((theta0 - oracle).abs() < 3.0 * se, "theta0 {theta0} oracle {oracle}");
        // exact monotonicity
        let mut prev = theta0;
        for m in 1..=70 {
            let t = theta_tail(&profile, m);
            assert!(t <= prev + 1e-15);
            prev = t;
        }
    }

    #[test]
    fn theta_trivial_cases() {
        let proc = LinearProcess::new(vec![1.0], InnovationLaw::StandardNormal).unwrap();
        let profile = estimate_profile(&proc, 2.0, 8, 500, 8, Seed::new(4)).unwrap();
        assert_eq!(theta_tail(&profile, 1), 0.0);
        assert_eq!(theta_tail(&profile, 20), 0.0);
    }

    #[test]
    fn xi_finite_support_exact() {
        let proc = LinearProcess::ma1(0.5, InnovationLaw::StandardNormal);
        let profile = estimate_profile(&proc, 2.0, 8, 50_000, 8, Seed::new(5)).unwrap();
        let alpha = 4.0;
        let xi = xi_alpha_p(&profile, alpha).unwrap();
        // only j = 1 contributes: 1^{1/4} * delta_1^{1/2}
        let d1 = profile.delta_at(1);
        assert!((xi - d1.powf(0.5)).abs() < 1e-12);
    }

    #[test]
    fn xi_geometric_tail_close_to_series() {
        // synthetic profile: delta_j = 0.5^j exactly, measured to 40
        let delta: Vec<DeltaEstimate> = (0..=40)
            .map(|j| DeltaEstimate {
                j,
                delta_hat: 0.5f64.powi(j as i32),
                se: 0.0,
                n_reps: 1,
            })
            .collect();
        let profile = DependenceProfile {
            p: 3.0,
            delta,
            tail: TailModel::Geometric { c: 1.0, rate: 0.5 },
            fit: None,
            long_range: false,
        };
        let alpha = 4.5;
        let xi = xi_alpha_p(&profile, alpha).unwrap();
        let direct: f64 = (1..=2000u64)
            .map(|j| (j as f64).powf(0.5 - 1.0 / alpha) * 0.5f64.powf(j as f64 * 3.0 / alpha))
            .sum();
        assert!((xi - direct).abs() / direct < 0.01, "xi {xi} direct {direct}");
    }

    #[test]
    fn xi_slow_power_tail_diverges() {
        let delta: Vec<DeltaEstimate> = (0..=40)
            .map(|j| DeltaEstimate {
                j,
                delta_hat: ((j.max(2)) as f64).powf(-0.6),
                se: 0.0,
                n_reps: 1,
            })
            .collect();
        let profile = DependenceProfile {
            p: 3.0,
            delta,
            tail: TailModel::PowerLog { c: 1.0, beta: 0.6, a: 0.0 },
            fit: None,
            long_range: true,
        };
        // net exponent 1/2 - 1/4 - 0.6*(3/4) = -0.2 > -1: diverges
        assert!(xi_alpha_p(&profile, 4.0).unwrap().is_infinite());
    }

    #[test]
    fn tau_values_and_residuals() {
        assert!((tau_p(4.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(tau_p(2.0).unwrap().abs() < 1e-12);
        let t6 = tau_p(6.0).unwrap();
        assert!((t6 - (32.0 + 4.0 * 160f64.sqrt()) / 48.0).abs() < 1e-12);
        assert!((t6 - 1.72076).abs() < 1e-5);
        for p in [2.5, 3.0, 4.0, 5.0, 6.0, 8.0] {
            let t = tau_p(p).unwrap();
            assert!(tau_p_residual(p, t) < 1e-12, "p = {p}");
        }
        assert!(tau_p(1.5).is_err());
    }

    #[test]
    fn schedule_case_ii_values() {
        assert_eq!(mk_schedule(ScheduleCase::II, 4.0, 6.0, 12, std::f64::consts::E).unwrap(), 2);
        assert_eq!(mk_schedule(ScheduleCase::II, 4.0, 6.0, 8, std::f64::consts::E).unwrap(), 1);
    }

    #[test]
    fn schedule_case_iii_natural_log() {
        let m = mk_schedule(ScheduleCase::III, 3.0, 3.5, 10, std::f64::consts::E).unwrap();
        assert_eq!(m, 14);
    }

    #[test]
    fn schedule_rejects_inadmissible() {
        assert!(mk_schedule(ScheduleCase::I, 3.0, 6.0, 5, std::f64::consts::E).is_err());
        assert!(mk_schedule(ScheduleCase::II, 5.0, 6.0, 5, std::f64::consts::E).is_err());
        // case iii alpha range for p = 3: (10/3, 14/3)
        assert!(mk_schedule(ScheduleCase::III, 3.0, 5.0, 5, std::f64::consts::E).is_err());
        assert!(mk_schedule(ScheduleCase::III, 3.0, 3.0, 5, std::f64::consts::E).is_err());
        assert!(mk_schedule(ScheduleCase::II, 4.0, 6.0, 1, std::f64::consts::E).is_err());
    }

    fn theta_power_log(a: f64) -> impl Fn(u64) -> f64 {
        move |m: u64| {
            let x = m.max(2) as f64;
            x.powf(-1.0) * x.ln().powf(-a)
        }
    }

    #[test]
    fn conditions_geometric_theta_pass() {
        let theta = |m: u64| 0.5f64.powf(m as f64);
        let delta = |j: u64| theta(j) - theta(j + 1);
        let report = check_sip_conditions(&delta, &theta, 4.0, 6.0, &Schedule::CaseII, 100)
            .unwrap();
        assert!(report.all_pass(), "{:?}", report.checks.iter().map(|c| (c.id, c.pass)).collect::<Vec<_>>());
    }

    #[test]
    fn conditions_constant_theta_fail_26() {
        let theta = |_: u64| 0.3f64;
        let delta = |_: u64| 0.0f64;
        let report = check_sip_conditions(&delta, &theta, 4.0, 6.0, &Schedule::CaseII, 40)
            .unwrap();
        let c26 = report.checks.iter().find(|c| c.id == "theta_block_sum").unwrap();
        assert!(!c26.pass);
    }

    #[test]
    fn conditions_log_power_threshold() {
        // A = 2 passes, A = 1 fails (2.6) under the case-ii schedule
        let theta2 = theta_power_log(2.0);
        let delta2 = move |j: u64| theta2(j) - theta2(j + 1);
        let report =
            check_sip_conditions(&delta2, &theta_power_log(2.0), 4.0, 6.0, &Schedule::CaseII, 100)
                .unwrap();
        let c26 = report.checks.iter().find(|c| c.id == "theta_block_sum").unwrap();
        assert!(c26.pass, "{}", c26.detail);

        let theta1 = theta_power_log(1.0);
        let delta1 = move |j: u64| theta1(j) - theta1(j + 1);
        let report =
            check_sip_conditions(&delta1, &theta_power_log(1.0), 4.0, 6.0, &Schedule::CaseII, 100)
                .unwrap();
        let c26 = report.checks.iter().find(|c| c.id == "theta_block_sum").unwrap();
        assert!(!c26.pass, "{}", c26.detail);
    }

    #[test]
    fn crn_reduces_delta_variance() {
        let proc = IrfProcess::ar1(0.5);
        let law = proc.law();
        let lag = proc.min_lag();
        let j = 2i64;
        let mut crn = Vec::new();
        let mut indep = Vec::new();
        for s in 0..100u64 {
            let seed = Seed::new(500 + s);
            let reps = 2000u64;
            let mut sum_c = 0.0;
            let mut sum_i = 0.0;
            for r in 0..reps {
                let sr = seed.with_replication(r);
                let w = draw_window(sr, law, j, lag);
                let w2 = couple_at(&w, law, 0, sr.child(COUPLE_TAG)).unwrap();
                let d = proc.eval(&w, j, lag) - proc.eval(&w2, j, lag);
                sum_c += d * d;
                // independent paths: no shared innovations at all
                let wa = draw_window(sr.child(1), law, j, lag);
                let wb = couple_at(
                    &draw_window(sr.child(2), law, j, lag),
                    law,
                    0,
                    sr.child(3),
                )
                .unwrap();
                let di = proc.eval(&wa, j, lag) - proc.eval(&wb, j, lag);
                sum_i += di * di;
            }
            crn.push((sum_c / reps as f64).sqrt());
            indep.push((sum_i / reps as f64).sqrt());
        }
        assert!(variance(&crn) < variance(&indep), "crn {} indep {}", variance(&crn), variance(&indep));
    }

    #[test]
    fn predictive_measure_dominated_by_delta() {
        // AR(1): ||E(X_i | G_0) - E(X_i | G_{-1})|| = rho^i <= delta_{i,2}
        let proc = IrfProcess::ar1(0.5);
        for i in [1u64, 2, 4] {
            let est =
                estimate_delta(&proc, i, 2.0, 50_000, proc.min_lag(), Seed::new(80 + i)).unwrap();
            let predictive = 0.5f64.powf(i as f64);
            assert!(
                predictive <= est.delta_hat + 3.0 * est.se,
                "i = {i}: predictive {predictive} delta {}",
                est.delta_hat
            );
        }
    }

    #[test]
    fn volterra_bound_dominates_monte_carlo() {
        let proc = crate::processes::VolterraProcess::quadratic(0.5, InnovationLaw::StandardNormal);
        let p = 4u32;
        let bound = crate::processes::volterra_delta_bound(
            &proc,
            1,
            p,
            crate::processes::default_cp(p),
        )
        .unwrap();
        let est = estimate_delta(&proc, 1, p as f64, 100_000, 4, Seed::new(90)).unwrap();
        let d2 = est.delta_hat * est.delta_hat;
        let se_d2 = 2.0 * est.delta_hat * est.se;
        assert!(d2 <= bound + 3.0 * se_d2, "d2 {d2} bound {bound}");
    }

    #[test]
    fn fit_recovers_geometric_decay() {
        let delta: Vec<DeltaEstimate> = (0..=40)
            .map(|j| DeltaEstimate {
                j,
                delta_hat: 1.4 * 0.6f64.powi(j as i32),
                se: 0.0,
                n_reps: 1,
            })
            .collect();
        let fit = fit_decay(&delta).unwrap();
        match fit.model {
            TailModel::Geometric { rate, .. } => assert!((rate - 0.6).abs() < 0.01),
            other => panic!("expected geometric fit, got {other:?}"),
        }
        assert!(fit.aicc_geometric < fit.aicc_power_log);
    }

    #[test]
    fn geometric_delta_decay_slope_for_irf() {
        // fitted slope of log delta_m vs m within 10% of log l_p
        let proc = IrfProcess::ar1(0.5);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for m in 1..=10u64 {
            let est =
                estimate_delta(&proc, m, 2.0, 40_000, proc.min_lag(), Seed::new(200 + m)).unwrap();
            xs.push(m as f64);
            ys.push(est.delta_hat.ln());
        }
        let (slope, _, _) = crate::numeric::ols(&xs, &ys);
        let target = 0.5f64.ln();
        assert!(
            (slope - target).abs() < 0.1 * target.abs(),
            "slope {slope} target {target}"
        );
    }
}
