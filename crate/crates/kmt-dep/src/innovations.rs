//! Deterministic, splittable i.i.d. innovation streams.
//!
//! Every draw is a pure function of a [`Seed`] triple and an absolute time
//! index: the generator is counter-based (a 64-bit mix of the seed words and
//! the time index), so streams can be evaluated from any number of workers in
//! any order and still produce bit-identical output. This also makes the
//! coordinate-replacement coupling structural: replacing the innovation at an
//! absolute time is just evaluating a different seed at that one index.

use crate::error::{KmtError, Result};
use crate::numeric::{normal_cdf, normal_quantile, simpson};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

/// Identifies one i.i.d. innovation stream.
///
/// Distinct `(master, stream_id, replication_id)` triples give statistically
/// independent streams; the same triple always reproduces the same stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed {
    pub master: u64,
    pub stream_id: u64,
    pub replication_id: u64,
}

impl Seed {
    pub fn new(master: u64) -> Self {
        Seed { master, stream_id: 0, replication_id: 0 }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Seed { stream_id, ..self }
    }

    pub fn with_replication(self, replication_id: u64) -> Self {
        Seed { replication_id, ..self }
    }

    /// Derive a statistically independent child stream, keyed by `tag`.
    pub fn child(self, tag: u64) -> Self {
        Seed {
            master: self.master,
            stream_id: mix64(self.stream_id ^ mix64(tag ^ 0x517c_c1b7_2722_0a95)),
            replication_id: self.replication_id,
        }
    }
}

/// SplitMix64 finalizer; a full-period 64-bit permutation with good avalanche.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based output word for (seed, time, counter).
///
/// `ctr` indexes multiple draws at the same time point (rejection samplers,
/// auxiliary uniforms); `ctr = 0` is the primary draw.
#[inline]
pub fn raw_bits(seed: Seed, time: i64, ctr: u64) -> u64 {
    let mut h = mix64(seed.master ^ 0x6a09_e667_f3bc_c909);
    h = mix64(h ^ seed.stream_id);
    h = mix64(h ^ seed.replication_id);
    h = mix64(h ^ (time as u64));
    mix64(h ^ ctr)
}

/// Uniform in the open interval (0, 1) with 53-bit resolution.
#[inline]
pub fn uniform01(seed: Seed, time: i64, ctr: u64) -> f64 {
    (((raw_bits(seed, time, ctr) >> 11) as f64) + 0.5) * (1.0 / 9007199254740992.0)
}

/// The marginal law of one innovation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnovationLaw {
    StandardNormal,
    Rademacher,
    Uniform01,
    BernoulliHalf,
    StudentT { df: f64 },
    CenteredPareto { tail_index: f64 },
}

impl InnovationLaw {
    /// Largest p with E|eps|^p finite (supremum; not attained for the
    /// heavy-tailed laws).
    pub fn p_max(&self) -> f64 {
        match self {
            InnovationLaw::StudentT { df } => *df,
            InnovationLaw::CenteredPareto { tail_index } => *tail_index,
            _ => f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InnovationLaw::StudentT { df } if *df <= 2.0 => Err(KmtError::InvalidParameter(
                format!("student_t requires df > 2 for a finite variance, got {df}"),
            )),
            InnovationLaw::CenteredPareto { tail_index } if *tail_index <= 1.0 => {
                Err(KmtError::InvalidParameter(format!(
                    "centered_pareto requires tail_index > 1 for centering, got {tail_index}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            InnovationLaw::Uniform01 | InnovationLaw::BernoulliHalf => 0.5,
            _ => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            InnovationLaw::StandardNormal | InnovationLaw::Rademacher => 1.0,
            InnovationLaw::Uniform01 => 1.0 / 12.0,
            InnovationLaw::BernoulliHalf => 0.25,
            InnovationLaw::StudentT { df } => df / (df - 2.0),
            InnovationLaw::CenteredPareto { tail_index } => {
                let a = *tail_index;
                if a <= 2.0 {
                    f64::INFINITY
                } else {
                    a / ((a - 1.0) * (a - 1.0) * (a - 2.0))
                }
            }
        }
    }

    fn pareto_mu(tail_index: f64) -> f64 {
        tail_index / (tail_index - 1.0)
    }

    /// One innovation at absolute time `time`. Pure in (seed, time).
    pub fn sample(&self, seed: Seed, time: i64) -> f64 {
        match self {
            InnovationLaw::StandardNormal => normal_quantile(uniform01(seed, time, 0)),
            InnovationLaw::Rademacher => {
                if raw_bits(seed, time, 0) >> 63 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            InnovationLaw::Uniform01 => uniform01(seed, time, 0),
            InnovationLaw::BernoulliHalf => (raw_bits(seed, time, 0) >> 63) as f64,
            InnovationLaw::StudentT { df } => {
                let z = normal_quantile(uniform01(seed, time, 0));
                let chi2 = 2.0 * sample_gamma(seed, time, df / 2.0);
                z * (df / chi2).sqrt()
            }
            InnovationLaw::CenteredPareto { tail_index } => {
                let u = uniform01(seed, time, 0);
                (1.0 - u).powf(-1.0 / tail_index) - Self::pareto_mu(*tail_index)
            }
        }
    }

    /// CDF of the law (step CDFs for the discrete laws).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            InnovationLaw::StandardNormal => normal_cdf(x),
            InnovationLaw::Rademacher => {
                if x < -1.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            InnovationLaw::Uniform01 => x.clamp(0.0, 1.0),
            InnovationLaw::BernoulliHalf => {
                if x < 0.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            InnovationLaw::StudentT { df } => {
                StudentsT::new(0.0, 1.0, *df).expect("validated df").cdf(x)
            }
            InnovationLaw::CenteredPareto { tail_index } => {
                let mu = Self::pareto_mu(*tail_index);
                if x < 1.0 - mu {
                    0.0
                } else {
                    1.0 - (x + mu).powf(-tail_index)
                }
            }
        }
    }

    /// P(|eps| >= t) for t >= 0.
    pub fn tail_prob(&self, t: f64) -> f64 {
        match self {
            InnovationLaw::StandardNormal => 2.0 * (1.0 - normal_cdf(t)),
            InnovationLaw::Rademacher => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            InnovationLaw::Uniform01 => (1.0 - t).clamp(0.0, 1.0),
            InnovationLaw::BernoulliHalf => {
                if t <= 0.0 {
                    1.0
                } else if t <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            InnovationLaw::StudentT { .. } => 2.0 * (1.0 - self.cdf(t)),
            InnovationLaw::CenteredPareto { tail_index } => {
                let mu = Self::pareto_mu(*tail_index);
                // support is [1 - mu, inf); the left tail is bounded by mu - 1
                let right = (t + mu).powf(-tail_index);
                let left = if t < mu - 1.0 { 1.0 - (mu - t).powf(-tail_index) - right } else { 0.0 };
                if t <= 0.0 {
                    1.0
                } else {
                    (right + left.max(0.0)).min(1.0)
                }
            }
        }
    }

    /// E|eps|^p; infinite when p >= p_max.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match self {
            InnovationLaw::StandardNormal => {
                // E|Z|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)
                (0.5 * p * std::f64::consts::LN_2 + ln_gamma((p + 1.0) / 2.0)
                    - 0.5 * std::f64::consts::PI.ln())
                .exp()
            }
            InnovationLaw::Rademacher => 1.0,
            InnovationLaw::Uniform01 => 1.0 / (p + 1.0),
            InnovationLaw::BernoulliHalf => 0.5,
            InnovationLaw::StudentT { df } => {
                if p >= *df {
                    return f64::INFINITY;
                }
                (0.5 * p * df.ln() + ln_gamma((p + 1.0) / 2.0) + ln_gamma((df - p) / 2.0)
                    - 0.5 * std::f64::consts::PI.ln()
                    - ln_gamma(df / 2.0))
                .exp()
            }
            InnovationLaw::CenteredPareto { tail_index } => {
                let a = *tail_index;
                if p >= a {
                    return f64::INFINITY;
                }
                let mu = Self::pareto_mu(a);
                // E|X|^p = int_0^1 |(1-u)^{-1/a} - mu|^p du, u = 1 - e^{-t}
                let t_max = 80.0 / (1.0 - p / a);
                simpson(|t| ((t / a).exp() - mu).abs().powf(p) * (-t).exp(), 0.0, t_max, 8192)
            }
        }
    }

    /// ||eps - eps'||_p for two independent copies, when a closed form exists.
    pub fn diff_norm(&self, p: f64) -> Option<f64> {
        if (p - 2.0).abs() < 1e-12 {
            let v = self.variance();
            return if v.is_finite() { Some((2.0 * v).sqrt()) } else { None };
        }
        match self {
            // eps - eps' ~ N(0, 2)
            InnovationLaw::StandardNormal => {
                Some(2.0_f64.sqrt() * InnovationLaw::StandardNormal.abs_moment(p).powf(1.0 / p))
            }
            // |eps - eps'| is 0 or 2 with probability 1/2 each
            InnovationLaw::Rademacher => Some(2.0_f64.powf((p - 1.0) / p)),
            _ => None,
        }
    }
}

/// Gamma(shape, 1) via Marsaglia-Tsang, with trial draws taken from the
/// counter dimension so the result is still a pure function of (seed, time).
fn sample_gamma(seed: Seed, time: i64, shape: f64) -> f64 {
    if shape < 1.0 {
        let u = uniform01(seed, time, 1);
        return sample_gamma_ge1(seed, time, shape + 1.0, 2) * u.powf(1.0 / shape);
    }
    sample_gamma_ge1(seed, time, shape, 1)
}

fn sample_gamma_ge1(seed: Seed, time: i64, shape: f64, ctr0: u64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    let mut ctr = ctr0;
    loop {
        let x = normal_quantile(uniform01(seed, time, ctr));
        let u = uniform01(seed, time, ctr + 1);
        ctr += 2;
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

/// A contiguous slice of one innovation stream covering absolute times
/// `[origin - lag, origin]`.
#[derive(Debug, Clone)]
pub struct InnovationWindow {
    origin: i64,
    lag: usize,
    values: Vec<f64>,
}

impl InnovationWindow {
    /// Build a window directly from values at times
    /// `origin - (values.len() - 1) ..= origin`.
    pub fn from_values(origin: i64, values: Vec<f64>) -> Self {
        assert!(!values.is_empty());
        InnovationWindow { origin, lag: values.len() - 1, values }
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn first_time(&self) -> i64 {
        self.origin - self.lag as i64
    }

    /// Innovation at absolute time `t`; panics outside the window.
    #[inline]
    pub fn value(&self, t: i64) -> f64 {
        let idx = t - self.first_time();
        self.values[idx as usize]
    }

    pub fn contains(&self, t: i64) -> bool {
        t >= self.first_time() && t <= self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Draw the window of innovations at absolute times `origin - lag ..= origin`.
///
/// Indexed by absolute time: extending `lag` keeps the shared suffix
/// bit-identical.
pub fn draw_window(seed: Seed, law: InnovationLaw, origin: i64, lag: usize) -> InnovationWindow {
    let first = origin - lag as i64;
    let values = (first..=origin).map(|t| law.sample(seed, t)).collect();
    InnovationWindow { origin, lag, values }
}

/// Replace the single coordinate at absolute time `j` with an independent
/// draw from `couple_seed`, leaving every other coordinate bit-identical.
pub fn couple_at(
    window: &InnovationWindow,
    law: InnovationLaw,
    j: i64,
    couple_seed: Seed,
) -> Result<InnovationWindow> {
    if !window.contains(j) {
        return Err(KmtError::IndexOutOfRange {
            index: j,
            lo: window.first_time(),
            hi: window.origin,
        });
    }
    let mut out = window.clone();
    let idx = (j - window.first_time()) as usize;
    out.values[idx] = law.sample(couple_seed, j);
    Ok(out)
}
