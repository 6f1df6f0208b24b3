//! Hitting times `h(x) = min{n > 0 : |det Df^n(x)| >= a_n}` and Monte Carlo
//! estimates of the tail measures `Leb(Gamma_n) = Leb{h >= n}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSystem, Point};
use crate::error::{Error, Result};
use crate::json::ExtReal;
use crate::rng::sample_rng;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Default refusal threshold for censored fractions.
pub const DEFAULT_CENSOR_THRESHOLD: f64 = 0.01;

/// The growth sequence `a_n`, stored as `log a_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ExpansionSchedule {
    /// `a_n = exp(lambda n)`.
    Exponential { lambda: f64 },
}

impl ExpansionSchedule {
    pub fn exponential(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "expansion rate must be positive, got {lambda}"
            )));
        }
        Ok(ExpansionSchedule::Exponential { lambda })
    }

    #[inline]
    pub fn log_a(&self, n: usize) -> f64 {
        match *self {
            ExpansionSchedule::Exponential { lambda } => lambda * n as f64,
        }
    }
}

/// Outcome of a first-passage search with a finite horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Passage {
    At(usize),
    /// Not found within the horizon; stands for an infinite (or unresolved) value.
    Censored,
}

impl Passage {
    pub fn value(self) -> Option<usize> {
        match self {
            Passage::At(n) => Some(n),
            Passage::Censored => None,
        }
    }
}

/// First `n <= n_max` with `cocycle(p, n) >= threshold(n)`, walking the orbit once.
pub(crate) fn first_passage(
    system: &MapSystem,
    p: &Point,
    n_max: usize,
    threshold: impl Fn(usize) -> f64,
) -> Result<Passage> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("horizon n_max must be >= 1".into()));
    }
    for (i, sum) in system.cocycle_sums(p)?.take(n_max).enumerate() {
        let n = i + 1;
        if sum >= threshold(n) {
            return Ok(Passage::At(n));
        }
    }
    Ok(Passage::Censored)
}

pub fn hitting_time(
    system: &MapSystem,
    p: &Point,
    sched: &ExpansionSchedule,
    n_max: usize,
) -> Result<Passage> {
    first_passage(system, p, n_max, |n| sched.log_a(n))
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if k == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    /// Fraction of samples with `h >= n` (censored samples included).
    pub tail_fraction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Number of samples with `h >= n`; absent for tails given as exact laws.
    pub count: Option<u64>,
}

/// Estimate of `n -> Leb(Gamma_n)` for `n = 1..=n_max`, with Leb normalized to a
/// probability on the phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub sample_size: u64,
    pub n_max: usize,
    pub rows: Vec<TailRow>,
    pub censored_fraction: f64,
    pub rng_seed: Option<u64>,
}

impl TailEstimate {
    /// A tail given exactly, e.g. a synthetic law. Intervals collapse to the values.
    pub fn from_exact(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty tail".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) || values.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::InvalidParameter(
                "a tail must be nonincreasing with values in [0, 1]".into(),
            ));
        }
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| TailRow {
                n: i + 1,
                tail_fraction: v,
                ci_low: v,
                ci_high: v,
                count: None,
            })
            .collect();
        Ok(TailEstimate {
            sample_size: 0,
            n_max: values.len(),
            rows,
            censored_fraction: 0.0,
            rng_seed: None,
        })
    }

    fn from_counts(hits: &[u64], censored: u64, sample_size: u64, seed: Option<u64>) -> Self {
        let n_max = hits.len();
        let mut rows = Vec::with_capacity(n_max);
        // tail[n] = #{h >= n} = censored + sum_{k >= n} hits[k]
        let mut tail = censored;
        let mut tails = vec![0u64; n_max];
        for n in (1..=n_max).rev() {
            tail += hits[n - 1];
            tails[n - 1] = tail;
        }
        for (i, &k) in tails.iter().enumerate() {
            let (lo, hi) = wilson_interval(k, sample_size, Z95);
            rows.push(TailRow {
                n: i + 1,
                tail_fraction: k as f64 / sample_size as f64,
                ci_low: lo,
                ci_high: hi,
                count: Some(k),
            });
        }
        TailEstimate {
            sample_size,
            n_max,
            rows,
            censored_fraction: censored as f64 / sample_size as f64,
            rng_seed: seed,
        }
    }

    pub fn tail(&self, n: usize) -> f64 {
        self.rows[n - 1].tail_fraction
    }

    /// `(n, tail_fraction)` pairs, ready for the decay fit.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.n as f64, r.tail_fraction))
            .collect()
    }

    /// Probability mass of `{h = n}` among uncensored samples.
    fn masses(&self) -> Vec<f64> {
        let m = self.rows.len();
        (0..m)
            .map(|i| {
                let next = if i + 1 < m {
                    self.rows[i + 1].tail_fraction
                } else {
                    self.censored_fraction
                };
                (self.rows[i].tail_fraction - next).max(0.0)
            })
            .collect()
    }
}

/// Monte Carlo estimate of the tail of `h` from `sample_size` Lebesgue-uniform
/// points. Sample `i` draws from stream `i` under `seed`, so the estimate does
/// not depend on the number of worker threads.
pub fn estimate_tail(
    system: &MapSystem,
    sched: &ExpansionSchedule,
    sample_size: u64,
    n_max: usize,
    seed: u64,
) -> Result<TailEstimate> {
    if sample_size < 100 {
        return Err(Error::InvalidParameter(format!(
            "tail estimates need >= 100 samples, got {sample_size}"
        )));
    }
    if n_max == 0 {
        return Err(Error::InvalidParameter("horizon n_max must be >= 1".into()));
    }
    let (hits, censored) = (0..sample_size)
        .into_par_iter()
        .map(|i| {
            let p = system.sample_uniform(&mut sample_rng(seed, i));
            hitting_time(system, &p, sched, n_max)
        })
        .try_fold(
            || (vec![0u64; n_max], 0u64),
            |(mut hits, mut censored), h| {
                match h? {
                    Passage::At(n) => hits[n - 1] += 1,
                    Passage::Censored => censored += 1,
                }
                Ok::<_, Error>((hits, censored))
            },
        )
        .try_reduce(
            || (vec![0u64; n_max], 0u64),
            |(mut a, ca), (b, cb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok((a, ca + cb))
            },
        )?;
    Ok(TailEstimate::from_counts(
        &hits,
        censored,
        sample_size,
        Some(seed),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpDiagnostic {
    pub p: f64,
    /// `(1/N) sum h_i^p` over uncensored samples.
    pub empirical_moment: f64,
    /// Least-squares slope of `log tail` against `log n` on the upper half of the
    /// positive part of the tail; `-inf` when the tail vanishes after one point.
    pub tail_exponent_fit: ExtReal,
    /// `tail_exponent_fit < -(p - 1)`.
    pub admissible: bool,
    /// The slope is within `BORDERLINE_TOL` of `-(p - 1)`.
    pub borderline: bool,
}

pub const BORDERLINE_TOL: f64 = 0.05;

/// Checks whether the sampled law of `h` looks like it belongs to `L^p`.
pub fn lp_diagnostic(tail: &TailEstimate, p: f64, censor_threshold: f64) -> Result<LpDiagnostic> {
    if p.is_nan() || p <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "moment order must be positive, got {p}"
        )));
    }
    if tail.censored_fraction > censor_threshold {
        return Err(Error::Refused(format!(
            "censored fraction {} exceeds {censor_threshold}; the L^p claim is untestable at this horizon",
            tail.censored_fraction
        )));
    }
    let empirical_moment = tail
        .masses()
        .iter()
        .enumerate()
        .map(|(i, m)| ((i + 1) as f64).powf(p) * m)
        .sum();
    let positive: Vec<(f64, f64)> = tail
        .rows
        .iter()
        .filter(|r| r.tail_fraction > 0.0)
        .map(|r| ((r.n as f64).ln(), r.tail_fraction.ln()))
        .collect();
    let vanishes = tail.rows.last().is_some_and(|r| r.tail_fraction == 0.0);
    let slope = if positive.len() >= 2 {
        let upper = &positive[positive.len() / 2..];
        let upper = if upper.len() >= 2 {
            upper
        } else {
            &positive[positive.len() - 2..]
        };
        least_squares_slope(upper)
    } else if vanishes {
        f64::NEG_INFINITY
    } else {
        return Err(Error::Degenerate(
            "tail has fewer than two positive points".into(),
        ));
    };
    let bound = -(p - 1.0);
    Ok(LpDiagnostic {
        p,
        empirical_moment,
        tail_exponent_fit: ExtReal(slope),
        admissible: slope < bound,
        borderline: slope.is_finite() && (slope - bound).abs() <= BORDERLINE_TOL,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
