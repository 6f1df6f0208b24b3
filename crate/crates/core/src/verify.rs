//! Backward volume contraction checks.
//!
//! For a base point `x` the minimum of `log|det Df^n(y)|` over `y in f^-n(x)` is
//! compared with `log b_n`. The constant `C_x` is estimated as the infimum over
//! tested depths of `exp(min_log_det(n) - log b_n)`; a finite computation cannot
//! show the infimum is positive, so the report also carries the ratio of the
//! estimate over all depths to the estimate over the first half of them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{estimate_n, ChainBoundEstimate};
use crate::dynamics::{MapSystem, Point};
use crate::error::{Error, Result};
use crate::json::ExtReal;
use crate::rates::{fit_decay, fit_growth, DecayRegime, Family, RegimeFit};
use crate::rng::{sample_rng, substream};
use crate::schedules::{
    build_bn, corollary_rate, BFamily, BSchedule, BuiltSchedule, FamilyTag, RatePrediction,
};
use crate::tails::{estimate_tail, lp_diagnostic, ExpansionSchedule, LpDiagnostic, TailEstimate};

/// Minimum stabilization ratio for `C_x` to count as stable.
pub const STABILIZATION_MIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMin {
    pub depth: usize,
    /// `+inf` when the level is empty.
    pub min_log_det: ExtReal,
    pub leaves: usize,
    pub truncated: bool,
}

/// Minimum backward log-determinant at every depth `1..=max_depth`, from one
/// tree expansion.
pub fn min_backward_profile(
    system: &MapSystem,
    x: &Point,
    max_depth: usize,
    leaf_budget: usize,
) -> Result<Vec<LevelMin>> {
    let mut out = Vec::with_capacity(max_depth);
    system.expand_levels(x, max_depth, leaf_budget, |level, frontier, truncated| {
        let min = frontier
            .par_iter()
            .map(|(_, ld)| *ld)
            .reduce(|| f64::INFINITY, f64::min);
        out.push(LevelMin {
            depth: level,
            min_log_det: ExtReal(min),
            leaves: frontier.len(),
            truncated,
        });
    })?;
    Ok(out)
}

/// `min { log|det Df^n(y)| : y in f^-n(x) }` and whether the tree was truncated.
/// An empty preimage set gives `+inf`.
pub fn min_backward_log_det(
    system: &MapSystem,
    x: &Point,
    n: usize,
    leaf_budget: usize,
) -> Result<(f64, bool)> {
    let profile = min_backward_profile(system, x, n, leaf_budget)?;
    let last = profile.last().expect("depth >= 1");
    Ok((last.min_log_det.0, last.truncated))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub leaf_budget: usize,
    /// Largest shift tried when estimating `N_x`.
    pub s_max: usize,
    /// Depths used for the `N_x` estimate; all verification depths when empty.
    pub n_depths: Vec<usize>,
    pub growth_fit_n_min: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            leaf_budget: crate::preimage::DEFAULT_LEAF_BUDGET,
            s_max: 40,
            n_depths: Vec::new(),
            growth_fit_n_min: crate::rates::DEFAULT_N_MIN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub base: Point,
    pub depths: Vec<usize>,
    pub min_log_dets: Vec<ExtReal>,
    pub log_b: Vec<f64>,
    #[serde(rename = "C_x_hat")]
    pub c_x_hat: ExtReal,
    #[serde(rename = "log_C_x_hat")]
    pub log_c_x_hat: ExtReal,
    /// `C_x_hat` over all depths divided by `C_x_hat` over the first half.
    pub stabilization_ratio: ExtReal,
    #[serde(rename = "N_x_hat")]
    pub n_x_hat: usize,
    #[serde(rename = "N_x_lower_bound_only")]
    pub n_x_lower_bound_only: bool,
    /// `exp(-N_x_hat * sup_log_det)`.
    pub theoretical_floor: f64,
    pub sigma_fit: Option<RegimeFit>,
    pub certified: bool,
    /// Some preimage branch met the critical set (`-inf` minimum).
    pub non_generic: bool,
    /// Some tested depth had no preimages at all.
    pub vacuous: bool,
    pub warnings: Vec<String>,
}

impl VerificationReport {
    pub fn stabilized(&self) -> bool {
        self.stabilization_ratio.0 >= STABILIZATION_MIN
    }
}

/// `log C_x_hat` over the given (depth, min log det, log b) triples; empty
/// minima (`+inf`) do not constrain.
fn log_c_hat(rows: impl Iterator<Item = (f64, f64)>) -> f64 {
    rows.map(|(m, lb)| m - lb).fold(f64::INFINITY, f64::min)
}

/// Checks `|det Df^n(y)| > C_x b_n` over all `y in f^-n(x)` for the given depths.
pub fn verify_theorem(
    system: &MapSystem,
    x: &Point,
    bsched: &BSchedule,
    depths: &[usize],
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    if depths.is_empty() || depths.windows(2).any(|w| w[1] <= w[0]) || depths[0] == 0 {
        return Err(Error::InvalidParameter(
            "depths must be positive and strictly increasing".into(),
        ));
    }
    let max_depth = *depths.last().expect("nonempty");
    let profile = min_backward_profile(system, x, max_depth, opts.leaf_budget)?;
    let min_log_dets: Vec<ExtReal> = depths.iter().map(|&d| profile[d - 1].min_log_det).collect();
    let log_b: Vec<f64> = depths.iter().map(|&d| bsched.log_b(d)).collect();
    let certified = !profile.iter().any(|l| l.truncated);
    let non_generic = min_log_dets.iter().any(|m| m.0 == f64::NEG_INFINITY);
    let vacuous = min_log_dets.iter().any(|m| m.0 == f64::INFINITY);

    let pairs: Vec<(f64, f64)> = min_log_dets
        .iter()
        .map(|m| m.0)
        .zip(log_b.iter().copied())
        .collect();
    let log_c = log_c_hat(pairs.iter().copied());
    let half = pairs.len().div_ceil(2);
    let log_c_half = log_c_hat(pairs[..half].iter().copied());
    let stabilization_ratio = if log_c.is_finite() && log_c_half.is_finite() {
        (log_c - log_c_half).exp()
    } else if log_c == f64::NEG_INFINITY {
        0.0
    } else {
        f64::NAN
    };

    let n_depths = if opts.n_depths.is_empty() {
        depths.to_vec()
    } else {
        opts.n_depths.clone()
    };
    let chains: ChainBoundEstimate =
        estimate_n(system, x, bsched, &n_depths, opts.leaf_budget, opts.s_max)?;

    let mut warnings = Vec::new();
    if !certified {
        warnings.push(
            "preimage tree truncated by the leaf budget; minima are not certified".to_string(),
        );
    }
    if non_generic {
        warnings.push(
            "a preimage branch meets the critical set; base point is non-generic".to_string(),
        );
    }
    if vacuous {
        warnings
            .push("empty preimage set at some depth; the bound holds vacuously there".to_string());
    }
    if chains.lower_bound_only {
        warnings.push(format!(
            "some preimages need a shift beyond s_max = {}; N_x_hat is a lower bound",
            opts.s_max
        ));
    }

    let growth_points: Vec<(f64, f64)> = depths
        .iter()
        .zip(&min_log_dets)
        .filter(|(_, m)| m.0.is_finite())
        .map(|(&d, m)| (d as f64, m.0))
        .collect();
    let sigma_fit = match fit_growth(&growth_points, opts.growth_fit_n_min) {
        Ok(fit) => Some(fit),
        Err(e) => {
            warnings.push(format!("growth fit unavailable: {e}"));
            None
        }
    };

    Ok(VerificationReport {
        base: *x,
        depths: depths.to_vec(),
        min_log_dets,
        log_b,
        c_x_hat: ExtReal(log_c.exp()),
        log_c_x_hat: ExtReal(log_c),
        stabilization_ratio: ExtReal(stabilization_ratio),
        n_x_hat: chains.n_hat,
        n_x_lower_bound_only: chains.lower_bound_only,
        theoretical_floor: (-(chains.n_hat as f64) * system.sup_log_det).exp(),
        sigma_fit,
        certified,
        non_generic,
        vacuous,
        warnings,
    })
}

/// `count` Lebesgue-uniform base points from the `"verify-base-points"` substream.
pub fn sample_base_points(system: &MapSystem, count: usize, seed: u64) -> Vec<Point> {
    let stream = substream(seed, "verify-base-points");
    (0..count as u64)
        .map(|i| system.sample_uniform(&mut sample_rng(stream, i)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryConfig {
    pub gamma: f64,
    pub p_assumed: f64,
    pub sample_size: u64,
    pub n_max: usize,
    pub n0_max: usize,
    /// Smallest `n` entering the tail regime fit.
    pub tail_fit_n_min: f64,
    /// Tail points backed by fewer samples are left out of the regime fit.
    pub tail_fit_min_count: u64,
    pub censor_threshold: f64,
    pub base_points: usize,
    pub depths: Vec<usize>,
    pub verify: VerifyOptions,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub tail: TailEstimate,
    pub lp: Option<LpDiagnostic>,
    /// Regime of `Leb(Gamma_n)`; `None` when the tail vanishes too early to fit.
    pub gamma_fit: Option<RegimeFit>,
    pub gamma_fit_note: Option<String>,
    pub schedule_b: BuiltSchedule,
    pub predicted: RatePrediction,
    pub base_points: Vec<VerificationReport>,
    /// Family selected by the majority of per-point growth fits.
    pub sigma_family: Option<Family>,
    pub regime_match: bool,
}

/// Tail points usable for the regime fit: positive and backed by enough samples.
pub fn tail_fit_points(tail: &TailEstimate, min_count: u64) -> Vec<(f64, f64)> {
    tail.rows
        .iter()
        .filter(|r| r.count.is_none_or(|c| c >= min_count))
        .map(|r| (r.n as f64, r.tail_fraction))
        .collect()
}

/// Majority family over the per-point growth fits (ties go to the earlier family).
pub fn majority_family(reports: &[VerificationReport]) -> Option<Family> {
    let families = [Family::Exponential, Family::Stretched, Family::Polynomial];
    let counts = families.map(|f| {
        reports
            .iter()
            .filter(|r| r.sigma_fit.as_ref().is_some_and(|s| s.selected == f))
            .count()
    });
    let best = counts.iter().copied().max()?;
    (best > 0).then(|| families[counts.iter().position(|&c| c == best).expect("max exists")])
}

/// Regime of `Leb(Gamma_n)` and the `b_n` family and `sigma_n` prediction it
/// supports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRegime {
    /// `None` when the tail vanishes too early to fit.
    pub fit: Option<RegimeFit>,
    pub note: Option<String>,
    pub family: FamilyTag,
    pub predicted: RatePrediction,
}

pub fn gamma_regime(
    tail: &TailEstimate,
    sched_a: &ExpansionSchedule,
    gamma: f64,
    fit_n_min: f64,
    fit_min_count: u64,
) -> Result<GammaRegime> {
    let (fit, note) = match fit_decay(&tail_fit_points(tail, fit_min_count), fit_n_min) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let ExpansionSchedule::Exponential { lambda } = *sched_a;
    let (family, predicted) = match fit.as_ref().map(RegimeFit::regime) {
        Some(regime) => {
            let family = match regime {
                DecayRegime::Exponential { .. } => FamilyTag::Exponential,
                DecayRegime::Stretched { tau, .. } => FamilyTag::StretchedExponential { tau },
                DecayRegime::Polynomial { .. } => FamilyTag::Polynomial,
            };
            (family, corollary_rate(&regime, lambda, gamma)?)
        }
        // the tail vanishes at sampling resolution: only a_n constrains b_n
        None => (
            FamilyTag::Exponential,
            RatePrediction {
                sigma: BFamily::Exponential { c: lambda },
                beta: lambda,
                n0: 1,
            },
        ),
    };
    Ok(GammaRegime {
        fit,
        note,
        family,
        predicted,
    })
}

/// Runs [`verify_theorem`] at `cfg.base_points` sampled base points.
pub fn verify_points(
    system: &MapSystem,
    bsched: &BSchedule,
    cfg: &CorollaryConfig,
) -> Result<Vec<VerificationReport>> {
    sample_base_points(system, cfg.base_points, cfg.seed)
        .iter()
        .map(|x| verify_theorem(system, x, bsched, &cfg.depths, &cfg.verify))
        .collect()
}

/// Majority growth family of the reports and whether it equals the predicted one.
pub fn compare_sigma(
    reports: &[VerificationReport],
    predicted: &RatePrediction,
) -> (Option<Family>, bool) {
    let measured = majority_family(reports);
    let expected = match predicted.sigma {
        BFamily::Exponential { .. } => Some(Family::Exponential),
        BFamily::StretchedExponential { .. } => Some(Family::Stretched),
        BFamily::Polynomial { .. } => Some(Family::Polynomial),
        BFamily::Tabulated { .. } => None,
    };
    (measured, measured.is_some() && measured == expected)
}

/// Tail estimate, regime fit of `Leb(Gamma_n)`, schedule `b_n`, verification at
/// sampled base points, and comparison of the measured growth family with the
/// family predicted from the tail regime.
pub fn corollary_experiment(
    system: &MapSystem,
    sched_a: &ExpansionSchedule,
    cfg: &CorollaryConfig,
) -> Result<CorollaryReport> {
    let tail = estimate_tail(
        system,
        sched_a,
        cfg.sample_size,
        cfg.n_max,
        substream(cfg.seed, "tail"),
    )?;
    let lp = lp_diagnostic(&tail, cfg.p_assumed, cfg.censor_threshold).ok();
    let regime = gamma_regime(
        &tail,
        sched_a,
        cfg.gamma,
        cfg.tail_fit_n_min,
        cfg.tail_fit_min_count,
    )?;
    let schedule_b = build_bn(
        sched_a,
        &tail,
        cfg.gamma,
        cfg.p_assumed,
        regime.family,
        cfg.n0_max,
    )?;
    let base_points = verify_points(system, &schedule_b.schedule, cfg)?;
    let (sigma_family, regime_match) = compare_sigma(&base_points, &regime.predicted);
    Ok(CorollaryReport {
        tail,
        lp,
        gamma_fit: regime.fit,
        gamma_fit_note: regime.note,
        schedule_b,
        predicted: regime.predicted,
        base_points,
        sigma_family,
        regime_match,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn exp_sched(c: f64) -> BSchedule {
        BSchedule::new(BFamily::Exponential { c }, 1, 0.45, 5.0).unwrap()
    }

    #[test]
    fn doubling_minimum_is_exact() {
        let dbl = MapSystem::doubling(2).unwrap();
        let (m, truncated) =
            min_backward_log_det(&dbl, &Point::interval(0.3), 15, 1 << 16).unwrap();
        assert!((m - 15.0 * LN_2).abs() < 1e-12);
        assert!(!truncated);
    }

    #[test]
    fn critical_value_gives_negative_infinity() {
        let q = MapSystem::quadratic(2.0).unwrap();
        let (m, _) = min_backward_log_det(&q, &Point::interval(1.0), 1, 16).unwrap();
        assert_eq!(m, f64::NEG_INFINITY);
    }

    #[test]
    fn doubling_report_closed_form() {
        let dbl = MapSystem::doubling(2).unwrap();
        let depths: Vec<usize> = (1..=12).collect();
        let r = verify_theorem(
            &dbl,
            &Point::interval(0.3),
            &exp_sched(0.5),
            &depths,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!((r.c_x_hat.0 - (LN_2 - 0.5).exp()).abs() < 1e-12);
        assert_eq!(r.n_x_hat, 0);
        assert_eq!(r.theoretical_floor, 1.0);
        assert!(r.certified && !r.non_generic && !r.vacuous);
        assert_eq!(r.sigma_fit.as_ref().unwrap().selected, Family::Exponential);
        assert!(r.stabilized());
    }

    #[test]
    fn empty_preimages_are_vacuous() {
        let q = MapSystem::quadratic(1.5).unwrap();
        let depths: Vec<usize> = (1..=3).collect();
        let r = verify_theorem(
            &q,
            &Point::interval(-0.9),
            &exp_sched(0.1),
            &depths,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(r.vacuous);
        assert!(r.min_log_dets.iter().all(|m| m.0 == f64::INFINITY));
        assert_eq!(r.c_x_hat.0, f64::INFINITY);
        assert!(r.warnings.iter().any(|w| w.contains("vacuously")));
    }

    #[test]
    fn truncation_is_not_certified() {
        let dbl = MapSystem::doubling(2).unwrap();
        let depths: Vec<usize> = (1..=8).collect();
        let opts = VerifyOptions {
            leaf_budget: 64,
            ..VerifyOptions::default()
        };
        let r =
            verify_theorem(&dbl, &Point::interval(0.3), &exp_sched(0.5), &depths, &opts).unwrap();
        assert!(!r.certified);
    }

    #[test]
    fn depths_must_increase() {
        let dbl = MapSystem::doubling(2).unwrap();
        let o = VerifyOptions::default();
        assert!(verify_theorem(&dbl, &Point::interval(0.3), &exp_sched(0.5), &[3, 2], &o).is_err());
        assert!(verify_theorem(&dbl, &Point::interval(0.3), &exp_sched(0.5), &[], &o).is_err());
    }
}
