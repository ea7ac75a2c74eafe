//! The doubling-map functional: X_t = g(U_t) where U_t has the dyadic
//! expansion U_t = sum_{l >= 0} eps_{t-l} 2^{-(l+1)} over i.i.d. fair bits,
//! so the most recent bit is the most significant one.

use super::CausalProcess;
use crate::error::{KmtError, Result};
use crate::innovations::{InnovationLaw, InnovationWindow};
use crate::numeric::simpson;
use std::sync::Arc;

/// Midpoint rule on [0, 1]; avoids sampling the dyadic break points where a
/// piecewise-constant g jumps.
fn midpoint01<F: Fn(f64) -> f64>(f: F, n: usize) -> f64 {
    (0..n).map(|k| f((k as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
}

/// The functional g on [0, 1], either a Lipschitz rule with its constant or a
/// finite Haar expansion g = sum c_{i,j} 2^{i/2} phi(2^i u - (j-1)) with
/// mother phi = +1 on [0, 1/2), -1 on [1/2, 1).
#[derive(Clone)]
pub enum GFunc {
    Lipschitz { f: Arc<dyn Fn(f64) -> f64 + Sync + Send>, constant: f64 },
    /// (level i, position j with 1 <= j <= 2^i, coefficient)
    Haar { coeffs: Vec<(u32, u64, f64)> },
}

fn haar_mother(u: f64) -> f64 {
    if !(0.0..1.0).contains(&u) {
        0.0
    } else if u < 0.5 {
        1.0
    } else {
        -1.0
    }
}

impl GFunc {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            GFunc::Lipschitz { f, .. } => f(u),
            GFunc::Haar { coeffs } => coeffs
                .iter()
                .map(|(i, j, c)| {
                    c * 2f64.powf(*i as f64 / 2.0)
                        * haar_mother(2f64.powi(*i as i32) * u - (*j as f64 - 1.0))
                })
                .sum(),
        }
    }
}

#[derive(Clone)]
pub struct DoublingMapProcess {
    g: GFunc,
    bit_depth: usize,
    name: String,
}

impl DoublingMapProcess {
    pub fn new(g: GFunc) -> Result<Self> {
        Self::with_bit_depth(g, 53)
    }

    pub fn with_bit_depth(g: GFunc, bit_depth: usize) -> Result<Self> {
        if bit_depth == 0 || bit_depth > 63 {
            return Err(KmtError::InvalidParameter(format!(
                "bit_depth must lie in 1..=63, got {bit_depth}"
            )));
        }
        if let GFunc::Haar { coeffs } = &g {
            for (i, j, _) in coeffs {
                if *j < 1 || *j > 1u64 << i {
                    return Err(KmtError::InvalidParameter(format!(
                        "Haar index j={j} outside 1..=2^{i}"
                    )));
                }
            }
        }
        // centering: integral of g over [0,1] must vanish (Haar terms do
        // exactly; the quadrature check covers the Lipschitz case)
        let integral = match &g {
            GFunc::Haar { .. } => 0.0,
            GFunc::Lipschitz { f, .. } => simpson(|u| f(u), 0.0, 1.0, 100_000),
        };
        if integral.abs() > 1e-6 {
            return Err(KmtError::InvalidParameter(format!(
                "g must integrate to zero over [0,1]; quadrature gives {integral:.3e}"
            )));
        }
        Ok(DoublingMapProcess { g, bit_depth, name: "doubling_map".into() })
    }

    /// g = Haar mother: X_t = +1 when the current bit is 0, else -1.
    pub fn haar_mother() -> Self {
        DoublingMapProcess::new(GFunc::Haar { coeffs: vec![(0, 1, 1.0)] })
            .unwrap()
            .with_name("doubling_haar_mother")
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    pub fn g(&self) -> &GFunc {
        &self.g
    }

    pub fn bit_depth(&self) -> usize {
        self.bit_depth
    }

    fn u_at(&self, window: &InnovationWindow, t: i64, lag: usize) -> f64 {
        let depth = self.bit_depth.min(lag + 1);
        let mut u = 0.0;
        // least significant bit first so the sum is exact in f64
        for l in (0..depth).rev() {
            u = 0.5 * (u + window.value(t - l as i64));
        }
        u
    }
}

impl CausalProcess for DoublingMapProcess {
    fn name(&self) -> &str {
        &self.name
    }

    fn law(&self) -> InnovationLaw {
        InnovationLaw::BernoulliHalf
    }

    fn min_lag(&self) -> usize {
        self.bit_depth - 1
    }

    fn tail_bound(&self, lag: usize) -> f64 {
        // dropping bits below position L+1 moves u by less than 2^{-(L+1)}
        let shift = 2f64.powi(-(lag as i32 + 1));
        match &self.g {
            GFunc::Lipschitz { constant, .. } => constant * shift,
            GFunc::Haar { coeffs } => {
                // level i flips only when u crosses a dyadic break, which has
                // probability at most min(1, 2^{i+1} shift)
                coeffs
                    .iter()
                    .map(|(i, _, c)| {
                        let p_cross = (2f64.powi(*i as i32 + 1) * shift).min(1.0);
                        2.0 * c.abs() * 2f64.powf(*i as f64 / 2.0) * p_cross.sqrt()
                    })
                    .sum()
            }
        }
    }

    fn eval(&self, window: &InnovationWindow, t: i64, lag: usize) -> f64 {
        self.g.eval(self.u_at(window, t, lag))
    }
}

/// The printed cell-indexed sum for delta_{-i,p}^p: cells j = 1..2^i with g
/// compared at j/2^i + u/2^{i+1} versus (j-1)/2^i + u/2^{i+1}. The last cell
/// exits [0, 1] and is skipped; see `doubling_delta_formula` for the
/// coupling-faithful evaluation.
pub fn doubling_delta_printed(spec: &DoublingMapProcess, i: u32, p: f64, resolution: usize) -> f64 {
    let cells = 1u64 << i;
    let w = 2f64.powi(-(i as i32));
    let half = 0.5 * w;
    let mut s = 0.0;
    for j in 1..cells {
        s += midpoint01(
            |u| (spec.g.eval(j as f64 * w + u * half) - spec.g.eval((j - 1) as f64 * w + u * half))
                .abs()
                .powf(p),
            resolution,
        );
    }
    0.5 * s
}

/// delta_{-i,p}^p by exact quadrature of the bit-flip coupling: flipping the
/// bit at lag i shifts u by 2^{-(i+1)} inside its dyadic cell, the flip
/// itself having probability 1/2. Agrees with bit-flip Monte Carlo.
pub fn doubling_delta_formula(spec: &DoublingMapProcess, i: u32, p: f64, resolution: usize) -> f64 {
    let cells = 1u64 << i;
    let w = 2f64.powi(-(i as i32));
    let half = 0.5 * w;
    let mut s = 0.0;
    for j in 0..cells {
        s += midpoint01(
            |u| {
                let lo = j as f64 * w + u * half;
                (spec.g.eval(lo + half) - spec.g.eval(lo)).abs().powf(p)
            },
            resolution,
        );
    }
    0.5 * s / cells as f64
}

/// Non-constant part of the Haar decay bound: 2^{i(p/2-1)} sum_j |c_{i,j}|^p.
pub fn haar_delta_bound(spec: &DoublingMapProcess, i: u32, p: f64) -> Result<f64> {
    let coeffs = match &spec.g {
        GFunc::Haar { coeffs } => coeffs,
        GFunc::Lipschitz { .. } => {
            return Err(KmtError::InvalidParameter(
                "haar_delta_bound requires a Haar coefficient spec".into(),
            ))
        }
    };
    let s: f64 = coeffs
        .iter()
        .filter(|(lvl, _, _)| *lvl == i)
        .map(|(_, _, c)| c.abs().powf(p))
        .sum();
    Ok(2f64.powf(i as f64 * (p / 2.0 - 1.0)) * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::innovations::{draw_window, Seed};
    use crate::processes::evaluate_path;

    fn lipschitz_cos() -> DoublingMapProcess {
        let f = |u: f64| (2.0 * std::f64::consts::PI * u).cos();
        DoublingMapProcess::new(GFunc::Lipschitz {
            f: Arc::new(f),
            constant: 2.0 * std::f64::consts::PI,
        })
        .unwrap()
    }

    #[test]
    fn haar_mother_path_recodes_bits() {
        let proc = DoublingMapProcess::haar_mother();
        let seed = Seed::new(3);
        let n = 200u64;
        let lag = proc.min_lag();
        let xs = evaluate_path(&proc, seed, n, lag).unwrap();
        let panel = draw_window(seed, proc.law(), n as i64, n as usize - 1 + lag);
        for (t, x) in (1..=n as i64).zip(&xs) {
            let expect = if panel.value(t) == 0.0 { 1.0 } else { -1.0 };
            assert_eq!(*x, expect, "t = {t}");
        }
    }

    #[test]
    fn haar_mother_formula_vanishes_beyond_leading_bit() {
        let proc = DoublingMapProcess::haar_mother();
        for i in 1..=4u32 {
            assert_eq!(doubling_delta_formula(&proc, i, 2.0, 64), 0.0);
        }
        // the leading bit flips the sign: |diff| = 2 with probability 1/2
        let d0 = doubling_delta_formula(&proc, 0, 2.0, 64);
        assert!((d0 - 2.0).abs() < 1e-12, "d0 {d0}");
    }

    #[test]
    fn lipschitz_formula_bounded_by_cell_width() {
        let proc = lipschitz_cos();
        let c = 2.0 * std::f64::consts::PI;
        for i in 1..=6u32 {
            for &p in &[2.0, 4.0] {
                let v = doubling_delta_formula(&proc, i, p, 256);
                assert!(v <= c.powf(p) * 2f64.powf(-(i as f64) * p) + 1e-12);
            }
        }
    }

    #[test]
    fn printed_reading_matches_formula_at_level_zero() {
        // at i = 0 the printed sum has a single in-range cell and both
        // readings coincide up to the cell weight
        let proc = lipschitz_cos();
        let printed = doubling_delta_printed(&proc, 0, 2.0, 512);
        let formula = doubling_delta_formula(&proc, 0, 2.0, 512);
        // printed skips its only cell (j = 1 exits [0,1]); it must be 0 there
        assert_eq!(printed, 0.0);
        assert!(formula > 0.0);
    }

    #[test]
    fn zero_g_gives_zero() {
        let proc = DoublingMapProcess::new(GFunc::Haar { coeffs: vec![] }).unwrap();
        assert_eq!(doubling_delta_formula(&proc, 2, 2.0, 64), 0.0);
        assert_eq!(doubling_delta_printed(&proc, 2, 2.0, 64), 0.0);
    }

    #[test]
    fn haar_bound_examples() {
        let proc = DoublingMapProcess::new(GFunc::Haar { coeffs: vec![(0, 1, 1.0)] }).unwrap();
        assert_eq!(haar_delta_bound(&proc, 0, 2.0).unwrap(), 1.0);
        assert_eq!(haar_delta_bound(&proc, 3, 2.0).unwrap(), 0.0);

        // c_{i,j} = 2^{-i} for all j at level i, p = 2 -> 2^{-i}
        let i = 4u32;
        let coeffs: Vec<(u32, u64, f64)> =
            (1..=1u64 << i).map(|j| (i, j, 2f64.powi(-(i as i32)))).collect();
        let proc = DoublingMapProcess::new(GFunc::Haar { coeffs }).unwrap();
        let b = haar_delta_bound(&proc, i, 2.0).unwrap();
        assert!((b - 2f64.powi(-(i as i32))).abs() < 1e-12);
    }

    #[test]
    fn rejects_uncentered_and_bad_indices() {
        let f = |_: f64| 1.0;
        assert!(DoublingMapProcess::new(GFunc::Lipschitz { f: Arc::new(f), constant: 0.0 })
            .is_err());
        assert!(DoublingMapProcess::new(GFunc::Haar { coeffs: vec![(2, 5, 1.0)] }).is_err());
    }

    #[test]
    fn bitflip_monte_carlo_agrees_with_formula() {
        let proc = lipschitz_cos();
        let law = proc.law();
        let i = 2u32;
        let p = 2.0;
        let mut s = 0.0;
        let n = 200_000u64;
        for r in 0..n {
            let seed = Seed::new(55).with_replication(r);
            let w = draw_window(seed, law, 0, proc.min_lag());
            let w2 =
                crate::innovations::couple_at(&w, law, -(i as i64), seed.child(9)).unwrap();
            let d = proc.eval(&w, 0, proc.min_lag()) - proc.eval(&w2, 0, proc.min_lag());
            s += d.abs().powf(p);
        }
        let mc = s / n as f64;
        let exact = doubling_delta_formula(&proc, i, p, 1024);
        assert!((mc - exact).abs() < 0.01, "mc {mc} exact {exact}");
    }
}
