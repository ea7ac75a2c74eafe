//! Shared numeric helpers: order-insensitive reduction, Kolmogorov-Smirnov
//! statistics, quadrature, least squares, and standard-normal shorthands.

use statrs::distribution::{ContinuousCDF, Normal};

/// Sum with pairwise (cascade) recursion so the result does not depend on
/// how callers chunk the input across workers.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() as f64 - 1.0)
}

/// Median via sorting a copy; averages the middle pair for even lengths.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() as f64 - 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        v[lo]
    } else {
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    }
}

pub fn sample_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_quantile(u: f64) -> f64 {
    std_normal().inverse_cdf(u)
}

/// Kolmogorov-Smirnov distance between a sample and a target CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// One-sample KS critical value at level 1% (Stephens' small-sample form).
pub fn ks_critical_1pct(n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    1.628 / (sn + 0.12 + 0.11 / sn)
}

/// Composite Simpson rule on [a, b] with `n` subintervals (n rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Ordinary least squares of y on x. Returns (slope, intercept, r2).
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    let _ = n;
    (slope, intercept, r2)
}

/// Least squares y ~ cols by normal equations with Gaussian elimination;
/// intended for the 2-3 regressor fits used in tail extrapolation.
pub fn lstsq(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = cols.len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum();
        }
        a[i][k] = cols[i].iter().zip(y).map(|(u, v)| u * v).sum();
    }
    for i in 0..k {
        let pivot = (i..k).max_by(|&r, &s| a[r][i].abs().partial_cmp(&a[s][i].abs()).unwrap()).unwrap();
        a.swap(i, pivot);
        for r in i + 1..k {
            let f = a[r][i] / a[i][i];
            for c in i..=k {
                a[r][c] -= f * a[i][c];
            }
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][k] - s) / a[i][i];
    }
    x
}

/// Minimize a discrete unimodal function over [lo, hi] by ternary search,
/// then scan a small neighbourhood and both endpoints. Returns (argmin, min).
pub fn ternary_min<F: Fn(u64) -> f64>(f: F, lo: u64, hi: u64) -> (u64, f64) {
    let mut a = lo;
    let mut b = hi;
    while b - a > 8 {
        let m1 = a + (b - a) / 3;
        let m2 = b - (b - a) / 3;
        if f(m1) <= f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let mut best = (a, f(a));
    for l in a..=b {
        let v = f(l);
        if v < best.1 {
            best = (l, v);
        }
    }
    // endpoint scan guards against non-unimodal edges
    for l in [lo, hi] {
        let v = f(l);
        if v < best.1 {
            best = (l, v);
        }
    }
    best
}

/// Mean of a clamp-to-[-a, a] applied to N(s, v).
///
/// For v = 0 this is the clamp of s itself.
pub fn clamped_normal_mean(s: f64, v: f64, a: f64) -> f64 {
    if v <= 0.0 {
        return s.clamp(-a, a);
    }
    let sd = v.sqrt();
    let alpha = (-a - s) / sd;
    let beta = (a - s) / sd;
    let (ca, cb) = (normal_cdf(alpha), normal_cdf(beta));
    s * (cb - ca) - sd * (normal_pdf(beta) - normal_pdf(alpha)) + a * (1.0 - cb) - a * ca
}
