//! Concatenated collections over sampled orbits.
//!
//! `U_n = {x : |det Df^n(x)| >= b_n}`, `u(x)` is the first `n` with `x` in `U_n`
//! and the chain of `x` is the orbit segment `x, f(x), ..., f^(u(x)-1)(x)`.
//! Submultiplicativity of `b` plus the cocycle identity make `(U_n)` a
//! concatenated collection: `x in U_n` and `f^n(x) in U_m` imply `x in U_(n+m)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSystem, Point};
use crate::error::{Error, Result};
use crate::rng::sample_rng;
use crate::schedules::BSchedule;
use crate::tails::{first_passage, Passage};

/// Log-space slack for the concatenation implication.
pub const CONCAT_SLACK: f64 = 1e-9;

/// Relative increment below which the chain-length partial sums count as a plateau.
pub const PLATEAU_TOL: f64 = 1e-3;

const CHUNK: u64 = 8192;
const MAX_WITNESSES: usize = 10;

/// `u(p)`: first `n <= n_max` with `cocycle(p, n) >= log b_n`.
pub fn u_of(system: &MapSystem, p: &Point, bsched: &BSchedule, n_max: usize) -> Result<Passage> {
    first_passage(system, p, n_max, |n| bsched.log_b(n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub base: Point,
    pub u_value: usize,
    pub chain_points: Vec<Point>,
}

/// The chain generated by `p`, or `None` when `u(p)` is censored at `n_max`.
pub fn chain(
    system: &MapSystem,
    p: &Point,
    bsched: &BSchedule,
    n_max: usize,
) -> Result<Option<ChainRecord>> {
    let Passage::At(u) = u_of(system, p, bsched, n_max)? else {
        return Ok(None);
    };
    let mut chain_points = Vec::with_capacity(u);
    let mut q = *p;
    for _ in 0..u {
        chain_points.push(q);
        q = system.step(q);
    }
    Ok(Some(ChainRecord {
        base: *p,
        u_value: u,
        chain_points,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcatenationWitness {
    pub point: Point,
    pub n: usize,
    pub m: usize,
    pub log_det_n: f64,
    pub log_det_m: f64,
    pub log_det_sum: f64,
    pub log_b_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcatenationReport {
    pub attempts: u64,
    /// Attempts whose hypothesis held.
    pub checked: u64,
    pub violations: u64,
    pub witnesses: Vec<ConcatenationWitness>,
}

enum Trial {
    Vacuous,
    Holds,
    Violated(ConcatenationWitness),
}

fn concatenation_trial(
    system: &MapSystem,
    bsched: &BSchedule,
    n_cap: usize,
    seed: u64,
    i: u64,
) -> Result<Trial> {
    let mut rng = sample_rng(seed, i);
    let p = system.sample_uniform(&mut rng);
    let n = rng.random_range(1..n_cap);
    let m = rng.random_range(1..=n_cap - n);
    let terms = system.orbit_log_dets(&p, n + m)?;
    let head: f64 = terms[..n].iter().sum();
    let tail: f64 = terms[n..].iter().sum();
    if !(head >= bsched.log_b(n) && tail >= bsched.log_b(m)) {
        return Ok(Trial::Vacuous);
    }
    let whole: f64 = terms.iter().sum();
    let target = bsched.log_b(n + m);
    if whole >= target - CONCAT_SLACK {
        Ok(Trial::Holds)
    } else {
        Ok(Trial::Violated(ConcatenationWitness {
            point: p,
            n,
            m,
            log_det_n: head,
            log_det_m: tail,
            log_det_sum: whole,
            log_b_sum: target,
        }))
    }
}

/// Samples `(x, n, m)` with `n + m <= n_cap` until `trials` of them satisfy the
/// hypothesis `x in U_n, f^n(x) in U_m` (or `max_attempts` draws are spent) and
/// counts failures of `x in U_(n+m)`.
pub fn check_concatenation(
    system: &MapSystem,
    bsched: &BSchedule,
    trials: u64,
    n_cap: usize,
    max_attempts: u64,
    seed: u64,
) -> Result<ConcatenationReport> {
    if n_cap < 2 {
        return Err(Error::InvalidParameter(format!(
            "n_cap must be >= 2, got {n_cap}"
        )));
    }
    let mut report = ConcatenationReport {
        attempts: 0,
        checked: 0,
        violations: 0,
        witnesses: Vec::new(),
    };
    let mut start = 0u64;
    while report.checked < trials && start < max_attempts {
        let end = (start + CHUNK).min(max_attempts);
        let outcomes: Vec<Trial> = (start..end)
            .into_par_iter()
            .map(|i| concatenation_trial(system, bsched, n_cap, seed, i))
            .collect::<Result<_>>()?;
        for outcome in outcomes {
            if report.checked >= trials {
                break;
            }
            report.attempts += 1;
            match outcome {
                Trial::Vacuous => {}
                Trial::Holds => report.checked += 1,
                Trial::Violated(w) => {
                    report.checked += 1;
                    report.violations += 1;
                    if report.witnesses.len() < MAX_WITNESSES {
                        report.witnesses.push(w);
                    }
                }
            }
        }
        start = end;
    }
    Ok(report)
}

/// Samples of `u` over Lebesgue-uniform points: `histogram[n - 1] = #{u = n}`.
pub fn u_histogram(
    system: &MapSystem,
    bsched: &BSchedule,
    sample_size: u64,
    n_max: usize,
    seed: u64,
) -> Result<(Vec<u64>, u64)> {
    (0..sample_size)
        .into_par_iter()
        .map(|i| {
            let p = system.sample_uniform(&mut sample_rng(seed, i));
            u_of(system, &p, bsched, n_max)
        })
        .try_fold(
            || (vec![0u64; n_max], 0u64),
            |(mut h, mut c), u| {
                match u? {
                    Passage::At(n) => h[n - 1] += 1,
                    Passage::Censored => c += 1,
                }
                Ok::<_, Error>((h, c))
            },
        )
        .try_reduce(
            || (vec![0u64; n_max], 0u64),
            |(mut a, ca), (b, cb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                Ok((a, ca + cb))
            },
        )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Series {
    pub sample_size: u64,
    pub u_histogram: Vec<u64>,
    pub censored_fraction: f64,
    /// `S_N` for `N = 1..=n_max`.
    pub partial_sums: Vec<f64>,
    /// `(S_N - S_(3N/4)) / S_N` at `N = n_max`.
    pub relative_increment: f64,
    pub plateau: bool,
}

/// Partial sums `S_N = sum_(n <= N) sum_(j < n) min(b_j L_n, 1)` where `L_n` is
/// the sampled (normalized) measure of `u^-1(n)` and `b_0 = 1`. Each term bounds
/// `Leb(f^j(u^-1(n)))`, capped at the total measure.
pub fn lemma1_series_estimate(
    system: &MapSystem,
    bsched: &BSchedule,
    sample_size: u64,
    n_max: usize,
    seed: u64,
    censor_threshold: f64,
) -> Result<Lemma1Series> {
    if sample_size == 0 || n_max < 4 {
        return Err(Error::InvalidParameter(
            "need samples and n_max >= 4".into(),
        ));
    }
    let (hist, censored) = u_histogram(system, bsched, sample_size, n_max, seed)?;
    let censored_fraction = censored as f64 / sample_size as f64;
    if censored_fraction > censor_threshold {
        return Err(Error::Refused(format!(
            "u is censored for a fraction {censored_fraction} of samples (threshold {censor_threshold})"
        )));
    }
    let mut partial_sums = Vec::with_capacity(n_max);
    let mut s = 0.0;
    for n in 1..=n_max {
        let l = hist[n - 1] as f64 / sample_size as f64;
        if l > 0.0 {
            s += (0..n)
                .map(|j| (bsched.log_b(j).exp() * l).min(1.0))
                .sum::<f64>();
        }
        partial_sums.push(s);
    }
    let last = partial_sums[n_max - 1];
    let q = partial_sums[(3 * n_max) / 4 - 1];
    let relative_increment = if last > 0.0 { (last - q) / last } else { 0.0 };
    Ok(Lemma1Series {
        sample_size,
        u_histogram: hist,
        censored_fraction,
        partial_sums,
        relative_increment,
        plateau: relative_increment < PLATEAU_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthChainStats {
    pub depth: usize,
    pub leaves: usize,
    /// `histogram[s]` counts leaves whose minimal shift is `s`.
    pub histogram: Vec<u64>,
    pub unresolved: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainBoundEstimate {
    pub base: Point,
    pub depth_tested: usize,
    pub s_max: usize,
    /// Largest minimal shift `s` with `z in U_(n+s)` over tested preimages `z`.
    pub n_hat: usize,
    /// Some leaf had no `s <= s_max`, so `n_hat` only bounds the true value from below.
    pub lower_bound_only: bool,
    pub truncated: bool,
    pub per_depth: Vec<DepthChainStats>,
}

/// Minimal shift `s` in `[0, s_max]` with `leaf_log_det + extension[s] >= log b_(n+s)`.
/// `extension[s]` is `log|det Df^s(x)|` at the root, so `f^(n+s)` at the leaf
/// factors through the root by the chain rule.
fn minimal_shift(
    leaf_log_det: f64,
    n: usize,
    extension: &[f64],
    bsched: &BSchedule,
) -> Option<usize> {
    extension
        .iter()
        .enumerate()
        .find(|(s, e)| leaf_log_det + *e >= bsched.log_b(n + s))
        .map(|(s, _)| s)
}

/// Empirical version of the uniform bound `N`: every preimage `z` of `base` at
/// depth `n` lies in some `U_(n+s)`, and `n_hat` is the largest minimal `s`.
pub fn estimate_n(
    system: &MapSystem,
    base: &Point,
    bsched: &BSchedule,
    depths: &[usize],
    leaf_budget: usize,
    s_max: usize,
) -> Result<ChainBoundEstimate> {
    let max_depth = *depths
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidParameter("empty depth list".into()))?;
    let mut extension = Vec::with_capacity(s_max + 1);
    extension.push(0.0);
    extension.extend(system.cocycle_sums(base)?.take(s_max));
    let mut per_depth = Vec::new();
    let truncated = system.expand_levels(base, max_depth, leaf_budget, |level, frontier, _| {
        if !depths.contains(&level) {
            return;
        }
        let shifts: Vec<Option<usize>> = frontier
            .par_iter()
            .map(|(_, ld)| minimal_shift(*ld, level, &extension, bsched))
            .collect();
        let mut histogram = vec![0u64; s_max + 1];
        let mut unresolved = 0;
        for s in shifts {
            match s {
                Some(s) => histogram[s] += 1,
                None => unresolved += 1,
            }
        }
        per_depth.push(DepthChainStats {
            depth: level,
            leaves: frontier.len(),
            histogram,
            unresolved,
        });
    })?;
    let n_hat = per_depth
        .iter()
        .filter_map(|d| d.histogram.iter().rposition(|&c| c > 0))
        .max()
        .unwrap_or(0);
    let lower_bound_only = per_depth.iter().any(|d| d.unresolved > 0);
    Ok(ChainBoundEstimate {
        base: *base,
        depth_tested: max_depth,
        s_max,
        n_hat,
        lower_bound_only,
        truncated,
        per_depth,
    })
}
