//! Variance machinery and the per-block quantile coupling: per-scale
//! autocovariances of the m-dependent values, the block variance rate nu_k,
//! the piecewise-linear variance clock phi, its linearization against the
//! long-run variance, and the coupled Brownian path built from one shared
//! uniform per block.

use std::path::Path;

use rayon::prelude::*;

use crate::depmeasure::{decay_diagnostic, theta_tail, ConditionCheck, DependenceProfile};
use crate::error::{KmtError, Result};
use crate::innovations::{uniform01, Seed};
use crate::numeric::{mean, normal_cdf, normal_quantile, pairwise_sum, variance};
use crate::pipeline::{mdep_approx, pow3, scale_of, truncate, BlockDecomposition, TriadicLayout};
use crate::processes::{draw_panel, CausalProcess};

const BRIDGE_TAG: u64 = 0x6272_6467;
const GAMMA_TAG: u64 = 0x6774_6c64;
const BLOCK_CDF_TAG: u64 = 0x6263_6466;
const ET_MC_TAG: u64 = 0x6574_6d63;
const SIGMA_TAG: u64 = 0x7367_6d32;

/// nu_k from the autocovariances of the m-dependent values at one scale:
/// sum over |i| <= m plus a triangular correction from lags m+1..2m. The
/// correction vanishes identically for exactly m-dependent values.
pub fn nu_k(gamma_tilde: &[f64], m: u64) -> f64 {
    let g = |d: u64| -> f64 {
        if (d as usize) < gamma_tilde.len() {
            gamma_tilde[d as usize]
        } else {
            0.0
        }
    };
    let mut v = g(0);
    for d in 1..=m {
        v += 2.0 * g(d);
    }
    for i in 1..=m {
        v += 2.0 * (1.0 - i as f64 / m as f64) * g(m + i);
    }
    v
}

/// Exact Var(B) of one block (3m consecutive m-dependent values) from the
/// autocovariances; equals 3m nu - 2 sum_d d gamma_tilde_d.
pub fn block_variance(gamma_tilde: &[f64], m: u64) -> f64 {
    let len = 3 * m;
    let mut v = len as f64 * gamma_tilde[0];
    for d in 1..len {
        let g = if (d as usize) < gamma_tilde.len() { gamma_tilde[d as usize] } else { 0.0 };
        v += 2.0 * (len - d) as f64 * g;
    }
    v
}

/// Closed-form autocovariances of the conditioned linear process: the value
/// keeps coefficients a_0..a_min(m, J) only. Valid when the truncation clamp
/// is inactive at the working scale. Returns lags 0..=2m.
pub fn gamma_tilde_linear(coeffs: &[f64], var_eps: f64, m: u64) -> Vec<f64> {
    let j_max = (m as usize).min(coeffs.len() - 1);
    let a = &coeffs[..=j_max];
    (0..=2 * m as usize)
        .map(|d| {
            if d > j_max {
                return 0.0;
            }
            var_eps * a.iter().take(j_max + 1 - d).zip(&a[d..]).map(|(x, y)| x * y).sum::<f64>()
        })
        .collect()
}

fn estimate_et(proc: &dyn CausalProcess, a: f64, lag: usize, reps: u64, seed: Seed) -> f64 {
    if proc.is_symmetric() {
        return 0.0;
    }
    let s = seed.child(ET_MC_TAG);
    let xs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let w = crate::innovations::draw_window(s.with_replication(r), proc.law(), 0, lag);
            truncate(proc.eval(&w, 0, lag), a)
        })
        .collect();
    mean(&xs)
}

/// Monte Carlo autocovariances of the m-dependent values at scale k, lags
/// 0..=2m, from one path of length `len`.
pub fn estimate_gamma_tilde(
    proc: &dyn CausalProcess,
    p: f64,
    k: u32,
    m: u64,
    lag: usize,
    len: u64,
    r_inner: u64,
    seed: Seed,
) -> Vec<f64> {
    let a = 3f64.powf(k as f64 / p);
    let et = estimate_et(proc, a, lag, 20_000, seed);
    let panel = draw_panel(proc, seed.child(GAMMA_TAG), len, lag);
    let xs: Vec<f64> = (1..=len)
        .into_par_iter()
        .map(|i| mdep_approx(proc, &panel, i, a, m, lag, et, r_inner, seed).0)
        .collect();
    let mu = mean(&xs);
    let n = xs.len();
    (0..=2 * m as usize)
        .map(|d| {
            let prods: Vec<f64> =
                (0..n - d).map(|i| (xs[i] - mu) * (xs[i + d] - mu)).collect();
            pairwise_sum(&prods) / n as f64
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SigmaEstimate {
    pub value: f64,
    pub se: f64,
    pub bandwidth: u64,
    pub oracle: bool,
}

/// Long-run variance sum_i gamma_i: analytic oracle when the process has one,
/// else a flat-top kernel estimate with bandwidth driven by the fitted
/// dependence decay.
pub fn sigma2_longrun(
    proc: &dyn CausalProcess,
    profile: Option<&DependenceProfile>,
    lag: usize,
    len: u64,
    reps: u64,
    seed: Seed,
) -> Result<SigmaEstimate> {
    if let Some(pr) = profile {
        if pr.long_range {
            return Err(KmtError::InvalidParameter(
                "dependence profile flags a divergent Theta tail; sigma2 is not summable".into(),
            ));
        }
    }
    if let Some(v) = proc.sigma2_oracle() {
        return Ok(SigmaEstimate { value: v, se: 0.0, bandwidth: 0, oracle: true });
    }
    let bw = auto_bandwidth(profile, len);
    Ok(sigma2_kernel(proc, lag, len, bw, reps, seed))
}

fn auto_bandwidth(profile: Option<&DependenceProfile>, len: u64) -> u64 {
    let cap = (len / 10).max(1);
    if let Some(pr) = profile {
        let total = theta_tail(pr, 0);
        if total > 0.0 && total.is_finite() {
            for m in 1..=cap {
                if theta_tail(pr, m) <= 0.01 * total {
                    return m;
                }
            }
        }
        return cap;
    }
    ((len as f64).powf(1.0 / 3.0).ceil() as u64).clamp(1, cap)
}

/// Flat-top (trapezoid) kernel long-run variance estimate averaged over
/// independent replications; weight 1 up to the bandwidth, linear to zero at
/// twice the bandwidth.
pub fn sigma2_kernel(
    proc: &dyn CausalProcess,
    lag: usize,
    len: u64,
    bandwidth: u64,
    reps: u64,
    seed: Seed,
) -> SigmaEstimate {
    let bw = bandwidth.max(1);
    let vals: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = seed.child(SIGMA_TAG).with_replication(r);
            let panel = draw_panel(proc, s, len, lag);
            let xs = proc.eval_path(&panel, len, lag);
            let mu = mean(&xs);
            let n = xs.len();
            let mut acc = 0.0;
            for d in 0..=(2 * bw as usize).min(n - 1) {
                let w = if d as u64 <= bw {
                    1.0
                } else {
                    1.0 - (d as f64 - bw as f64) / bw as f64
                };
                let prods: Vec<f64> =
                    (0..n - d).map(|i| (xs[i] - mu) * (xs[i + d] - mu)).collect();
                let g = pairwise_sum(&prods) / n as f64;
                acc += if d == 0 { g } else { 2.0 * w * g };
            }
            acc
        })
        .collect();
    let value = mean(&vals);
    let se = if reps > 1 { (variance(&vals) / reps as f64).sqrt() } else { f64::NAN };
    SigmaEstimate { value, se, bandwidth: bw, oracle: false }
}

/// Per-scale variance rates and the derived variance clock.
#[derive(Debug, Clone)]
pub struct VarianceModel {
    pub n: u64,
    pub h_n: u32,
    /// Autocovariances per scale k = 1..=h_n (lags 0..), empty when the
    /// model was built from nu directly.
    pub gamma_tilde: Vec<Vec<f64>>,
    /// nu[k-1], k = 1..=h_n.
    pub nu: Vec<f64>,
    pub sigma2: f64,
    /// phi[i-1], i = 1..=n; phi_1 = 0, increment nu_{h(i)} per step.
    pub phi: Vec<f64>,
    /// varsigma2[i-1]: cumulative squared linearization coefficients.
    pub varsigma2: Vec<f64>,
}

/// Build the model from per-scale autocovariances (lags 0..=2 m_k each).
pub fn variance_model(
    layout: &TriadicLayout,
    gamma_tilde: Vec<Vec<f64>>,
    sigma2: f64,
) -> Result<VarianceModel> {
    if gamma_tilde.len() != layout.h_n as usize {
        return Err(KmtError::InvalidParameter(format!(
            "need autocovariances for {} scales, got {}",
            layout.h_n,
            gamma_tilde.len()
        )));
    }
    let nu: Vec<f64> = gamma_tilde
        .iter()
        .enumerate()
        .map(|(idx, g)| nu_k(g, layout.m_at(idx as u32 + 1)).max(0.0))
        .collect();
    let mut model = variance_model_from_nu(layout, nu, sigma2)?;
    model.gamma_tilde = gamma_tilde;
    Ok(model)
}

/// Build the model from per-scale variance rates directly.
pub fn variance_model_from_nu(
    layout: &TriadicLayout,
    nu: Vec<f64>,
    sigma2: f64,
) -> Result<VarianceModel> {
    if nu.len() != layout.h_n as usize {
        return Err(KmtError::InvalidParameter(format!(
            "need nu for {} scales, got {}",
            layout.h_n,
            nu.len()
        )));
    }
    if nu.iter().any(|v| *v < 0.0 || !v.is_finite()) || sigma2 < 0.0 {
        return Err(KmtError::InvalidParameter("variance rates must be finite and >= 0".into()));
    }
    let n = layout.n;
    let sigma = sigma2.sqrt();
    let mut phi = Vec::with_capacity(n as usize);
    let mut varsigma2 = Vec::with_capacity(n as usize);
    let (mut acc_phi, mut acc_vs) = (0.0, 0.0);
    phi.push(0.0);
    varsigma2.push(0.0);
    for i in 2..=n {
        let h = scale_of(i).max(1);
        let v = nu[h as usize - 1];
        acc_phi += v;
        let b = v.sqrt() - sigma;
        acc_vs += b * b;
        phi.push(acc_phi);
        varsigma2.push(acc_vs);
    }
    Ok(VarianceModel { n, h_n: layout.h_n, gamma_tilde: Vec::new(), nu, sigma2, phi, varsigma2 })
}

impl VarianceModel {
    /// Linearization coefficient b_i = nu_{h(i)}^{1/2} - sigma (0 at i = 1).
    pub fn b(&self, i: u64) -> f64 {
        if i < 2 {
            return 0.0;
        }
        self.nu[scale_of(i).max(1) as usize - 1].sqrt() - self.sigma2.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct LinearizeReport {
    /// Final linearization residual varsigma_n^2.
    pub varsigma2: f64,
    /// Decay evidence for varsigma_n^2 loglog n / n^{2/p} -> 0, evaluated on
    /// the power-of-3 grid.
    pub check: ConditionCheck,
}

/// Growth check for the linearized Brownian substitution: the residual must
/// stay below n^{2/p} up to the iterated logarithm.
pub fn linearize(model: &VarianceModel, p: f64) -> LinearizeReport {
    let trace: Vec<(u64, f64)> = (1..=model.h_n)
        .map(|j| {
            let nj = pow3(j).min(model.n);
            let vs = model.varsigma2[nj as usize - 1];
            // guard: loglog is negative below n = 16
            let ll = (nj as f64).ln().ln().max(1.0);
            (nj, vs * ll / (nj as f64).powf(2.0 / p))
        })
        .collect();
    LinearizeReport {
        varsigma2: *model.varsigma2.last().unwrap(),
        check: decay_diagnostic("linearization_growth", trace),
    }
}

/// Per-scale block law used by the quantile transform.
#[derive(Debug, Clone)]
pub enum BlockCdf {
    Gaussian { sd: f64 },
    /// Sorted pre-simulated block values with exponential tails beyond the
    /// extremes, decay rate matched to the working moment order.
    Empirical { sorted: Vec<f64>, moment_p: f64 },
}

impl BlockCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            BlockCdf::Gaussian { sd } => {
                if *sd == 0.0 {
                    return if x < 0.0 { 0.0 } else { 1.0 };
                }
                normal_cdf(x / sd)
            }
            BlockCdf::Empirical { sorted, moment_p } => {
                let n = sorted.len() as f64;
                let (x0, x1) = (sorted[0], *sorted.last().unwrap());
                let (p0, p1) = (0.5 / n, (n - 0.5) / n);
                if x < x0 {
                    let lam = moment_p / x0.abs().max(1e-12);
                    return p0 * (lam * (x - x0)).exp();
                }
                if x > x1 {
                    let lam = moment_p / x1.abs().max(1e-12);
                    return 1.0 - (1.0 - p1) * (-lam * (x - x1)).exp();
                }
                let hi = sorted.partition_point(|v| *v < x);
                if hi == 0 {
                    return p0;
                }
                let lo = hi - 1;
                if hi == sorted.len() || sorted[hi] == sorted[lo] {
                    return ((lo as f64 + 0.5) / n).min(p1);
                }
                let frac = (x - sorted[lo]) / (sorted[hi] - sorted[lo]);
                (lo as f64 + 0.5 + frac) / n
            }
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            BlockCdf::Gaussian { sd } => sd * normal_quantile(u),
            BlockCdf::Empirical { sorted, moment_p } => {
                let n = sorted.len() as f64;
                let (x0, x1) = (sorted[0], *sorted.last().unwrap());
                let (p0, p1) = (0.5 / n, (n - 0.5) / n);
                if u <= p0 {
                    let lam = moment_p / x0.abs().max(1e-12);
                    return x0 + (u / p0).ln() / lam;
                }
                if u >= p1 {
                    let lam = moment_p / x1.abs().max(1e-12);
                    return x1 + ((1.0 - p1) / (1.0 - u)).ln() / lam;
                }
                let pos = u * n - 0.5;
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
            }
        }
    }
}

/// Pre-simulate `reps` independent blocks at scale k (3m consecutive
/// m-dependent values) and return their empirical law.
pub fn empirical_block_cdf(
    proc: &dyn CausalProcess,
    p: f64,
    k: u32,
    m: u64,
    lag: usize,
    reps: u64,
    r_inner: u64,
    seed: Seed,
) -> Result<BlockCdf> {
    if reps < 100 {
        return Err(KmtError::InvalidParameter("block CDF needs >= 100 replications".into()));
    }
    let a = 3f64.powf(k as f64 / p);
    let et = estimate_et(proc, a, lag, 20_000, seed);
    let len = 3 * m;
    let mut sorted: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = seed.child(BLOCK_CDF_TAG).with_replication(r);
            let panel = draw_panel(proc, s, len, lag);
            let vals: Vec<f64> =
                (1..=len).map(|i| mdep_approx(proc, &panel, i, a, m, lag, et, r_inner, s).0).collect();
            pairwise_sum(&vals)
        })
        .collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(BlockCdf::Empirical { sorted, moment_p: p })
}

/// The coupled pair of paths on the block-completion grid.
#[derive(Debug, Clone)]
pub struct CoupledPaths {
    /// Index at which each block enters the diamond path.
    pub grid: Vec<u64>,
    pub scales: Vec<u32>,
    /// Shared per-block uniforms (probability integral transform of the
    /// realized block values).
    pub uniforms: Vec<f64>,
    /// Diamond path sampled on the grid.
    pub s_diamond: Vec<f64>,
    /// Gaussian path on the variance clock, block increments sqrt(3 m nu) z.
    pub gaussian: Vec<f64>,
    /// Linearized path sigma B(grid), block increments sigma sqrt(3 m) z.
    pub linearized: Vec<f64>,
    /// max_grid |S_diamond - gaussian|.
    pub d_n: f64,
    /// max_grid |S_diamond - linearized|.
    pub d_prime_n: f64,
    /// max_grid |gaussian - linearized|: the variance-grid part of the error.
    pub grid_gap: f64,
    /// max per-block quantile roundtrip |B - F^{-1}(F(B))|: the block-law
    /// part of the error (0 for exact continuous laws).
    pub law_roundtrip: f64,
    pub sigma_degenerate: bool,
}

/// Couple the realized blocks to a Brownian path: each block maps to one
/// uniform through its scale's CDF, and the same uniform drives the Gaussian
/// and linearized increments. Both paths are accumulated per scale on the
/// block-completion grid.
pub fn couple_blocks(
    decomp: &BlockDecomposition,
    model: &VarianceModel,
    cdfs: &[BlockCdf],
) -> Result<CoupledPaths> {
    let layout = &decomp.layout;
    if decomp.blocks.is_empty() {
        return Err(KmtError::InvalidParameter("layout has no blocks to couple".into()));
    }
    let want = (layout.h_n - layout.k0 + 1) as usize;
    if cdfs.len() != want {
        return Err(KmtError::InvalidParameter(format!(
            "need one block CDF per scale {}..={}, got {}",
            layout.k0,
            layout.h_n,
            cdfs.len()
        )));
    }
    let sigma = model.sigma2.sqrt();
    let mut grid = Vec::with_capacity(decomp.blocks.len());
    let mut scales = Vec::with_capacity(decomp.blocks.len());
    let mut uniforms = Vec::with_capacity(decomp.blocks.len());
    let mut s_diamond = Vec::with_capacity(decomp.blocks.len());
    let mut gaussian = Vec::with_capacity(decomp.blocks.len());
    let mut linearized = Vec::with_capacity(decomp.blocks.len());
    let (mut acc_d, mut acc_g, mut acc_l) = (0.0, 0.0, 0.0);
    let mut law_roundtrip: f64 = 0.0;
    for b in &decomp.blocks {
        let k = b.window.k;
        let m = layout.m_at(k);
        let f = &cdfs[(k - layout.k0) as usize];
        let nu = model.nu[k as usize - 1];
        let phi_sd = (3.0 * m as f64 * nu).sqrt();
        // For a Gaussian block law the quantile transform is the linear map
        // z = B / sd; applying it as one rescaling keeps the coupling exact
        // (bit-exact when sd matches the phi increment) instead of
        // accumulating inverse-cdf roundtrip noise.
        let (u, z, g_inc) = match f {
            BlockCdf::Gaussian { sd } if *sd > 0.0 => {
                let z = b.value / sd;
                let ratio = phi_sd / sd;
                let g_inc = if ratio == 1.0 { b.value } else { ratio * b.value };
                (normal_cdf(z).clamp(1e-15, 1.0 - 1e-15), z, g_inc)
            }
            _ => {
                let u = f.cdf(b.value).clamp(1e-15, 1.0 - 1e-15);
                law_roundtrip = law_roundtrip.max((f.quantile(u) - b.value).abs());
                let z = normal_quantile(u);
                (u, z, phi_sd * z)
            }
        };
        acc_d += b.value;
        acc_g += g_inc;
        acc_l += sigma * (3.0 * m as f64).sqrt() * z;
        let enter = b.window.hi - 1 + 3 * m; // tau rule: one block behind completion
        grid.push(enter);
        scales.push(k);
        uniforms.push(u);
        // grid value of the diamond path, accumulated in the same order as
        // the Gaussian path so an exact per-block coupling yields d_n = 0
        s_diamond.push(acc_d);
        gaussian.push(acc_g);
        linearized.push(acc_l);
    }
    let mut d_n: f64 = 0.0;
    let mut d_prime_n: f64 = 0.0;
    let mut grid_gap: f64 = 0.0;
    for i in 0..grid.len() {
        d_n = d_n.max((s_diamond[i] - gaussian[i]).abs());
        d_prime_n = d_prime_n.max((s_diamond[i] - linearized[i]).abs());
        grid_gap = grid_gap.max((gaussian[i] - linearized[i]).abs());
    }
    Ok(CoupledPaths {
        grid,
        scales,
        uniforms,
        s_diamond,
        gaussian,
        linearized,
        d_n,
        d_prime_n,
        grid_gap,
        law_roundtrip,
        sigma_degenerate: sigma == 0.0,
    })
}

impl CoupledPaths {
    /// Per-index CSV with Brownian-bridge infill of the Gaussian path between
    /// grid points (display only; the coupling itself lives on the grid). The
    /// linearized path is defined on integers and held as a step function.
    pub fn write_csv(
        &self,
        decomp: &BlockDecomposition,
        model: &VarianceModel,
        seed: Seed,
        path: &Path,
    ) -> Result<()> {
        let n = decomp.layout.n;
        let bridge = seed.child(BRIDGE_TAG);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "S_diamond", "B_phi", "sigma_Bddag", "abs_err"])?;
        let mut g_prev = 0.0; // anchor: path value 0 at index 1, phi_1 = 0
        let mut prev_i = 1u64;
        let mut next = 0usize;
        let mut lin = 0.0;
        for i in 1..=n {
            let g = if next < self.grid.len() && self.grid[next] == i {
                let v = self.gaussian[next];
                lin = self.linearized[next];
                next += 1;
                v
            } else if i == 1 {
                0.0
            } else {
                let dphi = model.phi[i as usize - 1] - model.phi[i as usize - 2];
                let z = normal_quantile(uniform01(bridge, i as i64, 0));
                if next < self.grid.len() {
                    // bridge toward the next grid point on the phi clock
                    let (ib, gb) = (self.grid[next], self.gaussian[next]);
                    let rem = model.phi[ib as usize - 1] - model.phi[prev_i as usize - 1];
                    if rem <= 0.0 {
                        gb
                    } else {
                        let frac = dphi / rem;
                        let var = dphi * (rem - dphi) / rem;
                        g_prev + frac * (gb - g_prev) + var.max(0.0).sqrt() * z
                    }
                } else {
                    // past the last block: free increments
                    g_prev + dphi.sqrt() * z
                }
            };
            let s = decomp.s_diamond[i as usize - 1];
            w.write_record([
                i.to_string(),
                format!("{:.17e}", s),
                format!("{:.17e}", g),
                format!("{:.17e}", lin),
                format!("{:.17e}", (s - g).abs()),
            ])?;
            g_prev = g;
            prev_i = i;
        }
        w.flush()?;
        Ok(())
    }
}
