//! The contraction schedule `b_n`: nondecreasing, submultiplicative
//! (`b_k b_n >= b_{k+n}`) and, from some `n0` on, dominated by
//! `min{a_n, Leb(Gamma_n)^-gamma}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::DecayRegime;
use crate::tails::{ExpansionSchedule, TailEstimate};

/// Range of `k, n` checked exhaustively when a schedule is constructed.
pub const CONSTRUCTION_CHECK: usize = 200;

/// Horizon of the constraint scan in [`corollary_rate`].
pub const COROLLARY_SCAN: usize = 10_000;

const SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BFamily {
    /// `log b_n = c n`
    Exponential { c: f64 },
    /// `log b_n = beta log(n + 1)`
    Polynomial { beta: f64 },
    /// `log b_n = c n^tau`, `0 < tau <= 1`
    StretchedExponential { c: f64, tau: f64 },
    /// `log b_n` listed for `n = 1..=len`; `+inf` beyond. Used for negative controls.
    Tabulated { log_b: Vec<f64> },
}

impl BFamily {
    /// `log b_n`, with `log b_0 = 0`.
    #[inline]
    pub fn log_b(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let nf = n as f64;
        match self {
            BFamily::Exponential { c } => c * nf,
            BFamily::Polynomial { beta } => beta * (nf + 1.0).ln(),
            BFamily::StretchedExponential { c, tau } => c * nf.powf(*tau),
            BFamily::Tabulated { log_b } => log_b.get(n - 1).copied().unwrap_or(f64::INFINITY),
        }
    }

    /// The family's parameter (the multiplier of its shape function).
    pub fn rate(&self) -> Option<f64> {
        match self {
            BFamily::Exponential { c } | BFamily::StretchedExponential { c, .. } => Some(*c),
            BFamily::Polynomial { beta } => Some(*beta),
            BFamily::Tabulated { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BFamily::Exponential { .. } => "exponential",
            BFamily::Polynomial { .. } => "polynomial",
            BFamily::StretchedExponential { .. } => "stretched",
            BFamily::Tabulated { .. } => "tabulated",
        }
    }
}

/// Parametric family requested from [`build_bn`]; the stretched exponent is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyTag {
    Exponential,
    Polynomial,
    StretchedExponential { tau: f64 },
}

impl FamilyTag {
    fn shape(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            FamilyTag::Exponential => nf,
            FamilyTag::Polynomial => (nf + 1.0).ln(),
            FamilyTag::StretchedExponential { tau } => nf.powf(*tau),
        }
    }

    fn with_rate(&self, rate: f64) -> BFamily {
        match *self {
            FamilyTag::Exponential => BFamily::Exponential { c: rate },
            FamilyTag::Polynomial => BFamily::Polynomial { beta: rate },
            FamilyTag::StretchedExponential { tau } => {
                BFamily::StretchedExponential { c: rate, tau }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BSchedule {
    pub family: BFamily,
    pub n0: usize,
    pub gamma: f64,
    pub p_assumed: f64,
}

/// Strict upper bound `(p - 3) / (p - 1)` for admissible `gamma`; needs `p > 3`.
pub fn gamma_bound(p: f64) -> Result<f64> {
    if !(p > 3.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "integrability exponent must exceed 3, got {p}"
        )));
    }
    Ok((p - 3.0) / (p - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmultiplicativeCheck {
    pub k_max: usize,
    pub passed: bool,
    /// First `(k, n)` with `log b_k + log b_n < log b_{k+n}` beyond the slack.
    pub witness: Option<(usize, usize)>,
}

impl BSchedule {
    /// Validates positivity, monotonicity and submultiplicativity (exhaustively
    /// for `k, n <= 200`) and `gamma < (p_assumed - 3) / (p_assumed - 1)`.
    pub fn new(family: BFamily, n0: usize, gamma: f64, p_assumed: f64) -> Result<Self> {
        let bound = gamma_bound(p_assumed)?;
        if !(gamma > 0.0 && gamma < bound) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, {bound}) for p = {p_assumed}, got {gamma}"
            )));
        }
        match &family {
            BFamily::StretchedExponential { tau, .. } if !(*tau > 0.0 && *tau <= 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "stretched exponent must be in (0, 1], got {tau}"
                )));
            }
            _ => {}
        }
        if n0 == 0 {
            return Err(Error::InvalidParameter("n0 must be >= 1".into()));
        }
        let sched = BSchedule {
            family,
            n0,
            gamma,
            p_assumed,
        };
        if !sched.log_b(1).is_finite() {
            return Err(Error::InvalidParameter(
                "b_1 must be positive and finite".into(),
            ));
        }
        if let Some(n) =
            (1..2 * CONSTRUCTION_CHECK).find(|&n| sched.log_b(n + 1) < sched.log_b(n) - SLACK)
        {
            return Err(Error::InvalidParameter(format!(
                "schedule decreases between n = {n} and n = {}",
                n + 1
            )));
        }
        let check = check_submultiplicative(&sched, CONSTRUCTION_CHECK);
        if let Some((k, n)) = check.witness {
            return Err(Error::InvalidParameter(format!(
                "b_k b_n < b_(k+n) at k = {k}, n = {n}"
            )));
        }
        Ok(sched)
    }

    /// A schedule that skips every check. Only for negative controls.
    pub fn without_validation(family: BFamily) -> Self {
        BSchedule {
            family,
            n0: 1,
            gamma: f64::NAN,
            p_assumed: f64::NAN,
        }
    }

    #[inline]
    pub fn log_b(&self, n: usize) -> f64 {
        self.family.log_b(n)
    }
}

pub fn check_submultiplicative(sched: &BSchedule, k_max: usize) -> SubmultiplicativeCheck {
    let mut witness = None;
    'outer: for k in 1..=k_max {
        for n in 1..=k_max {
            let lhs = sched.log_b(k) + sched.log_b(n);
            let rhs = sched.log_b(k + n);
            if lhs < rhs - SLACK * rhs.abs().max(1.0) {
                witness = Some((k, n));
                break 'outer;
            }
        }
    }
    SubmultiplicativeCheck {
        k_max,
        passed: witness.is_none(),
        witness,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    /// `log a_n` is the smaller bound.
    Expansion,
    /// `-gamma log Leb(Gamma_n)` is the smaller bound.
    Tail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub n: usize,
    pub log_b: f64,
    pub log_a: f64,
    /// `-gamma log(upper tail bound)`; `None` when no sample reached `Gamma_n`.
    pub tail_bound: Option<f64>,
    pub binding: Binding,
    /// `n >= n0` and `log_b <= min(log_a, tail_bound)`.
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuiltSchedule {
    pub schedule: BSchedule,
    pub rows: Vec<ConstraintRow>,
}

/// Largest parameter of `family` with `log b_n <= min(log a_n, -gamma log U_n)`
/// for every `n` in `[n0, n_max]`, for some `n0 <= n0_max`. `U_n` is the upper
/// 95% bound of the tail estimate. The tail constraint is inactive where no
/// sample was observed in `Gamma_n`, the point estimate being zero there. The
/// returned `n0` is the smallest start from which the constraint holds.
pub fn build_bn(
    sched_a: &ExpansionSchedule,
    tail: &TailEstimate,
    gamma: f64,
    p_assumed: f64,
    family: FamilyTag,
    n0_max: usize,
) -> Result<BuiltSchedule> {
    let bound_gamma = gamma_bound(p_assumed)?;
    if !(gamma > 0.0 && gamma < bound_gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma must lie in (0, {bound_gamma}) for p = {p_assumed}, got {gamma}"
        )));
    }
    let n_max = tail.n_max;
    if n0_max == 0 || n0_max > n_max {
        return Err(Error::InvalidParameter(format!(
            "n0_max must be in [1, {n_max}], got {n0_max}"
        )));
    }
    let bounds: Vec<(f64, Option<f64>)> = tail
        .rows
        .iter()
        .map(|r| {
            let tail_bound = (r.tail_fraction > 0.0).then(|| -gamma * r.ci_high.ln());
            (sched_a.log_a(r.n), tail_bound)
        })
        .collect();
    let ratio = |n: usize| {
        let (la, lt) = bounds[n - 1];
        la.min(lt.unwrap_or(f64::INFINITY)) / family.shape(n)
    };
    let rate = (n0_max..=n_max).map(ratio).fold(f64::INFINITY, f64::min);
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::NoAdmissibleSchedule(format!(
            "largest {family:?} parameter is {rate}; try a smaller gamma or a larger sample"
        )));
    }
    let holds = |n: usize| ratio(n) >= rate * (1.0 - SLACK);
    let mut n0 = n0_max;
    while n0 > 1 && holds(n0 - 1) {
        n0 -= 1;
    }
    let schedule = BSchedule::new(family.with_rate(rate), n0, gamma, p_assumed)?;
    let rows = (1..=n_max)
        .map(|n| {
            let (log_a, tail_bound) = bounds[n - 1];
            let log_b = schedule.log_b(n);
            let limit = log_a.min(tail_bound.unwrap_or(f64::INFINITY));
            ConstraintRow {
                n,
                log_b,
                log_a,
                tail_bound,
                binding: if tail_bound.is_some_and(|t| t < log_a) {
                    Binding::Tail
                } else {
                    Binding::Expansion
                },
                satisfied: n >= n0 && log_b <= limit + SLACK * limit.abs().max(1.0),
            }
        })
        .collect();
    Ok(BuiltSchedule { schedule, rows })
}

/// The growth family for `sigma_n` that a decay regime of `Leb(Gamma_n)` supports,
/// with the first `n` from which the constraint holds through the scan horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub sigma: BFamily,
    pub beta: f64,
    pub n0: usize,
}

/// Constructive exponent for the corollary regimes: `beta = min(lambda, gamma alpha)`
/// for exponential decay, `beta = gamma alpha` for stretched and polynomial decay.
/// The choice is verified by scanning `log sigma_n <= min(lambda n, -gamma log G_n)`
/// for `n <= 10^4`, with the model tails `G_n = exp(-alpha n)`, `exp(-alpha n^tau)`
/// and `(n + 1)^-alpha` (unit constants).
pub fn corollary_rate(regime: &DecayRegime, lambda: f64, gamma: f64) -> Result<RatePrediction> {
    if !(lambda > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need lambda > 0 and gamma > 0, got {lambda}, {gamma}"
        )));
    }
    let (sigma, beta, neg_log_tail): (BFamily, f64, Box<dyn Fn(f64) -> f64>) = match *regime {
        DecayRegime::Exponential { alpha } if alpha > 0.0 => {
            let beta = lambda.min(gamma * alpha);
            (
                BFamily::Exponential { c: beta },
                beta,
                Box::new(move |n| alpha * n),
            )
        }
        DecayRegime::Stretched { alpha, tau } if alpha > 0.0 && tau > 0.0 && tau <= 1.0 => {
            let beta = gamma * alpha;
            (
                BFamily::StretchedExponential { c: beta, tau },
                beta,
                Box::new(move |n: f64| alpha * n.powf(tau)),
            )
        }
        DecayRegime::Polynomial { alpha } if alpha > 2.0 => {
            let beta = gamma * alpha;
            (
                BFamily::Polynomial { beta },
                beta,
                Box::new(move |n: f64| alpha * (n + 1.0).ln()),
            )
        }
        DecayRegime::Polynomial { alpha } => {
            return Err(Error::InvalidParameter(format!(
                "polynomial regime needs alpha > 2, got {alpha}"
            )));
        }
        other => return Err(Error::InvalidParameter(format!("invalid regime {other:?}"))),
    };
    let holds = |n: usize| {
        let nf = n as f64;
        let limit = (lambda * nf).min(gamma * neg_log_tail(nf));
        sigma.log_b(n) <= limit + SLACK * limit.abs().max(1.0)
    };
    let mut n0 = COROLLARY_SCAN + 1;
    while n0 > 1 && holds(n0 - 1) {
        n0 -= 1;
    }
    if n0 > COROLLARY_SCAN {
        return Err(Error::NoAdmissibleSchedule(format!(
            "{regime:?}: constraint fails at the end of the scan"
        )));
    }
    Ok(RatePrediction { sigma, beta, n0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_bound_values() {
        assert_eq!(gamma_bound(5.0).unwrap(), 0.5);
        assert!((gamma_bound(101.0).unwrap() - 0.98).abs() < 1e-15);
        assert!(gamma_bound(3.0 + 1e-9).unwrap() < 1e-9);
        assert!(gamma_bound(3.0).is_err());
        assert!(gamma_bound(2.0).is_err());
    }

    #[test]
    fn submultiplicative_families() {
        let exp = BSchedule::new(BFamily::Exponential { c: 0.5 }, 1, 0.4, 5.0).unwrap();
        assert!(check_submultiplicative(&exp, 200).passed);
        let poly = BSchedule::new(BFamily::Polynomial { beta: 2.0 }, 1, 0.4, 5.0).unwrap();
        assert!(check_submultiplicative(&poly, 200).passed);
        let st = BSchedule::new(
            BFamily::StretchedExponential { c: 1.0, tau: 0.5 },
            1,
            0.4,
            5.0,
        )
        .unwrap();
        assert!(check_submultiplicative(&st, 200).passed);
    }

    #[test]
    fn superlinear_schedule_is_rejected() {
        let sq = BSchedule::without_validation(BFamily::Tabulated {
            log_b: (1..=400).map(|n| (n * n) as f64).collect(),
        });
        let check = check_submultiplicative(&sq, 10);
        assert!(!check.passed);
        assert_eq!(check.witness, Some((1, 1)));
        let fam = sq.family.clone();
        assert!(BSchedule::new(fam, 1, 0.4, 5.0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(BSchedule::new(BFamily::Exponential { c: 0.5 }, 1, 0.5, 5.0).is_err());
        assert!(BSchedule::new(BFamily::Exponential { c: -0.5 }, 1, 0.4, 5.0).is_err());
        assert!(BSchedule::new(
            BFamily::StretchedExponential { c: 1.0, tau: 1.5 },
            1,
            0.4,
            5.0
        )
        .is_err());
        assert!(BSchedule::new(BFamily::Exponential { c: 0.5 }, 0, 0.4, 5.0).is_err());
    }

    #[test]
    fn build_from_exact_exponential_tail() {
        let (alpha, lambda, gamma) = (1.0, 0.35, 0.45);
        let tail = TailEstimate::from_exact(
            &(1..=40)
                .map(|n| (-alpha * n as f64).exp())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let a = ExpansionSchedule::exponential(lambda).unwrap();
        let built = build_bn(&a, &tail, gamma, 5.0, FamilyTag::Exponential, 5).unwrap();
        let BFamily::Exponential { c } = built.schedule.family else {
            panic!()
        };
        assert!((c - lambda.min(gamma * alpha)).abs() < 1e-12);
        assert_eq!(built.schedule.n0, 1);
        assert!(built.rows.iter().all(|r| r.satisfied));

        let built = build_bn(&a, &tail, 0.2, 5.0, FamilyTag::Exponential, 5).unwrap();
        let BFamily::Exponential { c } = built.schedule.family else {
            panic!()
        };
        assert!((c - 0.2).abs() < 1e-12);
        assert!(built.rows.iter().all(|r| r.binding == Binding::Tail));
    }

    #[test]
    fn no_decay_means_no_schedule() {
        let tail = TailEstimate::from_exact(&[1.0; 30]).unwrap();
        let a = ExpansionSchedule::exponential(0.35).unwrap();
        for fam in [
            FamilyTag::Exponential,
            FamilyTag::Polynomial,
            FamilyTag::StretchedExponential { tau: 0.5 },
        ] {
            assert!(matches!(
                build_bn(&a, &tail, 0.45, 5.0, fam, 5),
                Err(Error::NoAdmissibleSchedule(_))
            ));
        }
    }

    #[test]
    fn build_rejects_inadmissible_gamma() {
        let tail = TailEstimate::from_exact(&[1.0, 0.5, 0.25]).unwrap();
        let a = ExpansionSchedule::exponential(0.35).unwrap();
        assert!(build_bn(&a, &tail, 0.6, 5.0, FamilyTag::Exponential, 1).is_err());
        assert!(build_bn(&a, &tail, 0.4, 3.0, FamilyTag::Exponential, 1).is_err());
    }

    #[test]
    fn corollary_rates() {
        let r = corollary_rate(&DecayRegime::Exponential { alpha: 1.0 }, 0.35, 0.5).unwrap();
        assert_eq!(r.sigma, BFamily::Exponential { c: 0.35 });
        assert!(corollary_rate(&DecayRegime::Polynomial { alpha: 1.5 }, 0.35, 0.5).is_err());
        let r = corollary_rate(
            &DecayRegime::Stretched {
                alpha: 0.8,
                tau: 0.5,
            },
            0.35,
            0.5,
        )
        .unwrap();
        assert!((r.beta - 0.4).abs() < 1e-15);
        assert_eq!(r.sigma, BFamily::StretchedExponential { c: 0.4, tau: 0.5 });
        assert!(r.n0 >= 2 && r.n0 <= 10, "n0 = {}", r.n0);
        let r = corollary_rate(&DecayRegime::Polynomial { alpha: 3.0 }, 0.35, 0.5).unwrap();
        assert_eq!(r.sigma, BFamily::Polynomial { beta: 1.5 });
    }
}
