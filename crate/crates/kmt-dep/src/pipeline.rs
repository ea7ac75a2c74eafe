//! The constructive core: truncation, m_k-dependent approximation and
//! triadic blocking, producing the approximating partial-sum paths
//! S^dag, S~ and S<> with exact reconstruction identities.

use crate::depmeasure::Schedule;
use crate::error::{KmtError, Result};
use crate::innovations::{InnovationWindow, Seed};
use crate::numeric::{clamped_normal_mean, mean, pairwise_sum, sample_correlation, variance};
use crate::processes::{draw_panel, CausalProcess};
use rayon::prelude::*;
use std::path::Path;

const REDRAW_TAG: u64 = 0x6d64_6570;
const ET_TAG: u64 = 0x65_74;

/// The truncation operator T_a: clamp to [-a, a]; Lipschitz with constant 1.
#[inline]
pub fn truncate(w: f64, a: f64) -> f64 {
    debug_assert!(a > 0.0);
    w.clamp(-a, a)
}

pub fn pow3(k: u32) -> u64 {
    3u64.pow(k)
}

/// Scale of index i: the smallest h with i <= 3^h, so 3^{h-1} < i <= 3^h.
pub fn scale_of(i: u64) -> u32 {
    let mut h = 0;
    while pow3(h) < i {
        h += 1;
    }
    h
}

#[derive(Debug, Clone)]
pub struct TriadicLayout {
    pub n: u64,
    pub h_n: u32,
    /// m_k for k = 1..=h_n (index k-1).
    pub m: Vec<u64>,
    /// q_k = floor(2 * 3^{k-2} / m_k) - 2 for k = 1..=h_n.
    pub q: Vec<i64>,
    /// Smallest k with q_j >= 2 for all j in k..=h_n; h_n + 1 when none.
    pub k0: u32,
    pub n0: u64,
    pub tau_n: i64,
}

/// Half-open index window [lo, hi) of one block, in absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockWindow {
    pub k: u32,
    pub j: u64,
    pub lo: u64,
    pub hi: u64,
}

pub fn layout(n: u64, schedule: &Schedule) -> Result<TriadicLayout> {
    if n < 2 {
        return Err(KmtError::InvalidParameter(
            "layout requires n >= 2 (the n = 1 paths are identically zero)".into(),
        ));
    }
    let h_n = scale_of(n);
    let mut m = Vec::with_capacity(h_n as usize);
    let mut q = Vec::with_capacity(h_n as usize);
    for k in 1..=h_n {
        let mk = schedule.m(k as u64)?;
        m.push(mk);
        let qk = if k >= 2 { (2 * pow3(k - 2) / mk) as i64 - 2 } else { -2 };
        q.push(qk);
    }
    let mut k0 = h_n + 1;
    for k in (1..=h_n).rev() {
        if q[k as usize - 1] >= 2 {
            k0 = k;
        } else {
            break;
        }
    }
    let tau_n = ((n - pow3(h_n - 1)) / (3 * m[h_n as usize - 1])) as i64 - 2;
    let n0 = if k0 <= h_n { pow3(k0) } else { u64::MAX };
    Ok(TriadicLayout { n, h_n, m, q, k0, n0, tau_n })
}

impl TriadicLayout {
    pub fn m_at(&self, k: u32) -> u64 {
        self.m[k as usize - 1]
    }

    pub fn q_at(&self, k: u32) -> i64 {
        self.q[k as usize - 1]
    }

    /// Number of blocks actually used at scale k: q_k below the top scale,
    /// tau_n at the top, 0 below K_0 (empty-sum convention).
    pub fn blocks_at(&self, k: u32) -> u64 {
        if k < self.k0 || k > self.h_n {
            return 0;
        }
        let count = if k == self.h_n { self.tau_n } else { self.q_at(k) };
        count.max(0) as u64
    }

    pub fn block_window(&self, k: u32, j: u64) -> BlockWindow {
        let m = self.m_at(k);
        let base = pow3(k - 1);
        BlockWindow { k, j, lo: base + 3 * j * m + 1, hi: base + 3 * (j + 1) * m + 1 }
    }

    pub fn windows(&self) -> Vec<BlockWindow> {
        let mut out = Vec::new();
        for k in self.k0..=self.h_n {
            for j in 1..=self.blocks_at(k) {
                out.push(self.block_window(k, j));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub window: BlockWindow,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    pub layout: TriadicLayout,
    pub p: f64,
    /// Raw partial sums S_i, index i-1.
    pub s: Vec<f64>,
    pub s_dag: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub s_diamond: Vec<f64>,
    /// T_{3^{h(i)/p}}(X_i) - E T at each index (the S^dag increments).
    pub t_centered: Vec<f64>,
    /// Xtilde_{h(i), i} at each index (the S~ increments).
    pub xtilde: Vec<f64>,
    pub blocks: Vec<Block>,
    /// E T_{3^{k/p}}(X) per scale k = 1..=h_n.
    pub et: Vec<f64>,
    /// Largest inner Monte Carlo standard error over all indices.
    pub mdep_max_se: f64,
}

/// Xtilde_{k,i}: conditional expectation of the truncated value given the
/// last m+1 innovations, minus the unconditional mean `et`.
///
/// Exact when the conditioning window covers the whole dependence support or
/// a Gaussian conditional-mean oracle exists; otherwise averaged over
/// `r_inner` redraws of every innovation older than lag m. Returns the value
/// and the inner standard error (0 for the exact branches).
pub fn mdep_approx(
    proc: &dyn CausalProcess,
    panel: &InnovationWindow,
    i: u64,
    a: f64,
    m: u64,
    lag: usize,
    et: f64,
    r_inner: u64,
    seed: Seed,
) -> (f64, f64) {
    if let Some(support) = proc.dependence_support() {
        if support as u64 <= m {
            return (truncate(proc.eval(panel, i as i64, lag), a) - et, 0.0);
        }
    }
    if let Some((s, v)) = proc.cond_mean_split(panel, i as i64, m as usize) {
        return (clamped_normal_mean(s, v, a) - et, 0.0);
    }
    let law = proc.law();
    let t = i as i64;
    let first = t - lag as i64;
    let cut = t - m as i64; // times < cut are redrawn
    let redraw_seed = seed.child(REDRAW_TAG ^ i);
    let draws: Vec<f64> = (0..r_inner)
        .map(|r| {
            let rs = redraw_seed.child(r);
            let values: Vec<f64> = (first..=t)
                .map(|s| if s < cut { law.sample(rs, s) } else { panel.value(s) })
                .collect();
            let w = InnovationWindow::from_values(t, values);
            truncate(proc.eval(&w, t, lag), a)
        })
        .collect();
    let m_hat = mean(&draws);
    let se = if r_inner > 1 { (variance(&draws) / r_inner as f64).sqrt() } else { f64::NAN };
    (m_hat - et, se)
}

/// E T_{3^{k/p}}(X) per scale: exactly zero for symmetric processes, else a
/// shared Monte Carlo sample reused across all scales.
fn et_per_scale(
    proc: &dyn CausalProcess,
    p: f64,
    h_n: u32,
    lag: usize,
    seed: Seed,
    et_reps: u64,
) -> Vec<f64> {
    if proc.is_symmetric() {
        return vec![0.0; h_n as usize];
    }
    let et_seed = seed.child(ET_TAG);
    let xs: Vec<f64> = (0..et_reps)
        .into_par_iter()
        .map(|r| {
            let w = crate::innovations::draw_window(
                et_seed.with_replication(r),
                proc.law(),
                0,
                lag,
            );
            proc.eval(&w, 0, lag)
        })
        .collect();
    (1..=h_n)
        .map(|k| {
            let a = 3f64.powf(k as f64 / p);
            let t: Vec<f64> = xs.iter().map(|x| truncate(*x, a)).collect();
            mean(&t)
        })
        .collect()
}

/// Full decomposition of the path X_1..X_n into the truncated, m-dependent
/// and blocked partial-sum approximations.
pub fn decompose(
    proc: &dyn CausalProcess,
    panel: &InnovationWindow,
    layout: &TriadicLayout,
    p: f64,
    lag: usize,
    r_inner: u64,
    et_reps: u64,
    seed: Seed,
) -> Result<BlockDecomposition> {
    let n = layout.n;
    let et = et_per_scale(proc, p, layout.h_n, lag, seed, et_reps);

    let per_index: Vec<(f64, f64, f64, f64)> = (1..=n)
        .into_par_iter()
        .map(|i| {
            let x = proc.eval(panel, i as i64, lag);
            let k = scale_of(i).max(1);
            let a = 3f64.powf(k as f64 / p);
            let e = et[k as usize - 1];
            let tc = truncate(x, a) - e;
            let (xt, se) = mdep_approx(
                proc,
                panel,
                i,
                a,
                layout.m_at(k),
                lag,
                e,
                r_inner,
                seed,
            );
            (x, tc, xt, se)
        })
        .collect();

    let mdep_max_se = per_index
        .iter()
        .map(|t| t.3)
        .fold(0.0f64, f64::max);

    let mut s = Vec::with_capacity(n as usize);
    let mut s_dag = Vec::with_capacity(n as usize);
    let mut s_tilde = Vec::with_capacity(n as usize);
    let mut t_centered = Vec::with_capacity(n as usize);
    let mut xtilde = Vec::with_capacity(n as usize);
    let (mut acc_s, mut acc_d, mut acc_t) = (0.0, 0.0, 0.0);
    for (idx, (x, tc, xt, _)) in per_index.iter().enumerate() {
        let i = idx as u64 + 1;
        acc_s += x;
        t_centered.push(*tc);
        xtilde.push(*xt);
        if i >= 2 {
            // index 1 is excluded: S_1^dag = S~_1 = 0
            acc_d += tc;
            acc_t += xt;
        }
        s.push(acc_s);
        s_dag.push(acc_d);
        s_tilde.push(acc_t);
    }

    let blocks: Vec<Block> = layout
        .windows()
        .into_iter()
        .map(|w| {
            let vals = &xtilde[w.lo as usize - 1..w.hi as usize - 1];
            Block { window: w, value: pairwise_sum(vals) }
        })
        .collect();

    // S<>_i: all full lower scales plus tau_i blocks at i's own scale. The
    // per-index count tau_i = floor((i - 3^{k-1}) / (3 m_k)) - 2 admits block
    // j only once i has passed the block end by a further 3 m_k indices, so
    // the count lags one block behind completion.
    let mut s_diamond = vec![0.0; n as usize];
    let mut full_below = 0.0; // sum over complete scales < current
    let mut cur_scale = 0u32;
    let mut scale_acc = 0.0;
    let mut next_block = 0usize;
    let by_order = &blocks; // layout.windows() is ordered by (k, j)
    for i in 1..=n {
        let k = scale_of(i).max(1);
        if k != cur_scale {
            full_below += scale_acc;
            scale_acc = 0.0;
            cur_scale = k;
        }
        while next_block < by_order.len() && {
            let w = &by_order[next_block].window;
            w.hi + (w.hi - w.lo) <= i + 1
        } {
            scale_acc += by_order[next_block].value;
            next_block += 1;
        }
        s_diamond[i as usize - 1] = full_below + scale_acc;
    }

    Ok(BlockDecomposition {
        layout: layout.clone(),
        p,
        s,
        s_dag,
        s_tilde,
        s_diamond,
        t_centered,
        xtilde,
        blocks,
        et,
        mdep_max_se,
    })
}

impl BlockDecomposition {
    /// W_{k,l}: partial sum of the truncated centered values over
    /// (3^{k-1}, 3^{k-1} + l].
    pub fn w(&self, k: u32, l: u64) -> f64 {
        let base = pow3(k - 1);
        let vals = &self.t_centered[base as usize..(base + l) as usize];
        pairwise_sum(vals)
    }

    /// The m_k-dependent counterpart of `w`.
    pub fn w_tilde(&self, k: u32, l: u64) -> f64 {
        let base = pow3(k - 1);
        let vals = &self.xtilde[base as usize..(base + l) as usize];
        pairwise_sum(vals)
    }

    /// max_l |W~_{k,l} - W_{k,l}| over the whole scale (clipped at n).
    pub fn max_w_diff(&self, k: u32) -> f64 {
        let base = pow3(k - 1);
        let top = pow3(k).min(self.layout.n);
        let mut acc_w = 0.0;
        let mut acc_wt = 0.0;
        let mut worst: f64 = 0.0;
        for i in base + 1..=top {
            acc_w += self.t_centered[i as usize - 1];
            acc_wt += self.xtilde[i as usize - 1];
            worst = worst.max((acc_wt - acc_w).abs());
        }
        worst
    }

    /// Recompute S<>_n from the stored blocks; must equal the streamed value
    /// bit-exactly.
    pub fn diamond_from_blocks(&self) -> f64 {
        let vals: Vec<f64> = self.blocks.iter().map(|b| b.value).collect();
        let mut by_scale: Vec<Vec<f64>> = vec![Vec::new(); self.layout.h_n as usize + 1];
        for (b, v) in self.blocks.iter().zip(&vals) {
            by_scale[b.window.k as usize].push(*v);
        }
        let mut acc = 0.0;
        for k in self.layout.k0..=self.layout.h_n {
            let mut scale_acc = 0.0;
            for v in &by_scale[k as usize] {
                scale_acc += v;
            }
            acc += scale_acc;
        }
        acc
    }

    pub fn write_blocks_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "j", "window_start", "window_end", "B_value"])?;
        for b in &self.blocks {
            w.write_record([
                b.window.k.to_string(),
                b.window.j.to_string(),
                b.window.lo.to_string(),
                b.window.hi.to_string(),
                format!("{:.17e}", b.value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_paths_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "S", "S_dag", "S_tilde", "S_diamond"])?;
        for i in 0..self.s.len() {
            w.write_record([
                (i + 1).to_string(),
                format!("{:.17e}", self.s[i]),
                format!("{:.17e}", self.s_dag[i]),
                format!("{:.17e}", self.s_tilde[i]),
                format!("{:.17e}", self.s_diamond[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    /// Same-scale windows pairwise disjoint and ordered.
    pub disjoint: bool,
    /// B_{k,q_k} shares no innovation with B_{k+1,1} (dependence windows).
    pub cross_scale_ok: bool,
    /// (k, j, corr(B_{k,j}, B_{k,j+1})) across replications.
    pub correlations: Vec<(u32, u64, f64)>,
    /// Per-pair 3-sigma band, 3 / sqrt(reps).
    pub band: f64,
    /// Bonferroni band at familywise level 1% across all tested pairs.
    pub family_band: f64,
    pub max_abs_corr: f64,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.disjoint && self.cross_scale_ok && self.max_abs_corr <= self.family_band
    }
}

/// Exact index bookkeeping plus a cross-replication correlation audit of
/// adjacent blocks.
pub fn block_independence_audit(
    proc: &dyn CausalProcess,
    layout: &TriadicLayout,
    p: f64,
    lag: usize,
    reps: u64,
    r_inner: u64,
    seed: Seed,
) -> Result<AuditReport> {
    if reps < 200 {
        return Err(KmtError::InvalidParameter("audit requires >= 200 replications".into()));
    }
    let windows = layout.windows();
    let mut disjoint = true;
    for pair in windows.windows(2) {
        if pair[0].window_overlaps(&pair[1]) || pair[1].lo < pair[0].lo {
            disjoint = false;
        }
    }
    // cross-scale: the first block of scale k+1 reaches back m_{k+1}
    // innovations before its window; it must not touch scale k's last window
    let mut cross_scale_ok = true;
    for k in layout.k0..layout.h_n {
        if layout.blocks_at(k) == 0 || layout.blocks_at(k + 1) == 0 {
            continue;
        }
        let last = layout.block_window(k, layout.blocks_at(k));
        let first = layout.block_window(k + 1, 1);
        let first_innov = first.lo as i64 - layout.m_at(k + 1) as i64;
        if first_innov < last.hi as i64 {
            cross_scale_ok = false;
        }
    }
    if !disjoint || !cross_scale_ok {
        return Err(KmtError::InvalidParameter(
            "block windows overlap: layout bug".into(),
        ));
    }

    let all_values: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = seed.with_replication(r);
            let panel = draw_panel(proc, s, layout.n, lag);
            let d = decompose(proc, &panel, layout, p, lag, r_inner, 10_000, s)
                .expect("layout validated");
            d.blocks.iter().map(|b| b.value).collect()
        })
        .collect();

    let mut correlations = Vec::new();
    let mut max_abs: f64 = 0.0;
    for (idx, pair) in windows.windows(2).enumerate() {
        if pair[0].k != pair[1].k {
            continue;
        }
        let xs: Vec<f64> = all_values.iter().map(|v| v[idx]).collect();
        let ys: Vec<f64> = all_values.iter().map(|v| v[idx + 1]).collect();
        let c = sample_correlation(&xs, &ys);
        max_abs = max_abs.max(c.abs());
        correlations.push((pair[0].k, pair[0].j, c));
    }
    let npairs = correlations.len().max(1) as f64;
    let family_z = crate::numeric::normal_quantile(1.0 - 0.005 / npairs);
    Ok(AuditReport {
        disjoint,
        cross_scale_ok,
        correlations,
        band: 3.0 / (reps as f64).sqrt(),
        family_band: family_z / (reps as f64).sqrt(),
        max_abs_corr: max_abs,
    })
}

impl BlockWindow {
    fn window_overlaps(&self, other: &BlockWindow) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}
