//! Phase spaces, maps and the Jacobian-determinant cocycle.
//!
//! Three families are supported:
//!
//! * `Doubling(d)`: `s -> d s mod 1` on the circle `[0, 1)`.
//! * `Quadratic(a)`: `x -> 1 - a x^2` on `[-1, 1]`, `0 < a <= 2`.
//! * `Viana(a0, alpha, d, I)`: `(s, x) -> (d s mod 1, a0 + alpha sin(2 pi s) - x^2)`
//!   on `[0, 1) x I`, with `I` a forward-invariant fiber interval.
//!
//! `log|det Df|` is `log d`, `log(2a|x|)` and `log(2d|x|)` respectively; the last
//! holds because the Viana Jacobian is lower triangular with diagonal `(d, -2x)`.

use std::f64::consts::TAU;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the phase space: one coordinate for interval and circle maps,
/// `(s, x)` for skew products.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Point {
    coords: [f64; 2],
    dim: u8,
}

impl Point {
    pub fn interval(x: f64) -> Self {
        Point {
            coords: [x, 0.0],
            dim: 1,
        }
    }

    pub fn cylinder(s: f64, x: f64) -> Self {
        Point {
            coords: [s, x],
            dim: 2,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// First coordinate (the circle coordinate for `Doubling` and `Viana`).
    pub fn first(&self) -> f64 {
        self.coords[0]
    }

    /// Last coordinate: the interval coordinate, or the fiber coordinate of a skew product.
    pub fn last(&self) -> f64 {
        self.coords[self.dim as usize - 1]
    }

    /// Largest per-coordinate distance, measuring circle coordinates modulo 1
    /// when `circle_first` is set.
    pub fn distance(&self, other: &Point, circle_first: bool) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .enumerate()
            .map(|(i, (a, b))| {
                let d = (a - b).abs();
                if i == 0 && circle_first {
                    d.min(1.0 - d)
                } else {
                    d
                }
            })
            .fold(0.0, f64::max)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.coords().to_vec()
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = String;

    fn try_from(v: Vec<f64>) -> std::result::Result<Self, String> {
        match v.as_slice() {
            [x] => Ok(Point::interval(*x)),
            [s, x] => Ok(Point::cylinder(*s, *x)),
            _ => Err(format!("a point has 1 or 2 coordinates, got {}", v.len())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    Doubling {
        d: u32,
    },
    Quadratic {
        a: f64,
    },
    Viana {
        a0: f64,
        alpha: f64,
        d: u32,
        fiber_lo: f64,
        fiber_hi: f64,
    },
}

/// A smooth endomorphism together with an upper bound for `log sup |det Df|`.
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSystem {
    pub kind: SystemKind,
    pub sup_log_det: f64,
}

impl fmt::Display for MapSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SystemKind::Doubling { d } => write!(f, "doubling d={d}"),
            SystemKind::Quadratic { a } => write!(f, "quadratic a={a}"),
            SystemKind::Viana {
                a0,
                alpha,
                d,
                fiber_lo,
                fiber_hi,
            } => {
                write!(
                    f,
                    "viana a0={a0} alpha={alpha} d={d} I=[{fiber_lo}, {fiber_hi}]"
                )
            }
        }
    }
}

/// Iterate of the critical point of `Q(x) = a - x^2`.
fn critical_iterate(a: f64, n: usize) -> f64 {
    (0..n).fold(0.0, |x, _| a - x * x)
}

/// The parameter `a0` in `(1, 2)` at which the critical orbit of `Q(x) = a0 - x^2`
/// lands on a fixed point after three steps (`Q^4(0) = Q^3(0)`), located by a grid
/// scan for the sign change followed by bisection to `1e-12`.
pub fn misiurewicz_parameter() -> f64 {
    let g = |a: f64| critical_iterate(a, 4) - critical_iterate(a, 3);
    let grid = 10_000;
    let mut bracket = None;
    let mut prev = (1.0 + 1e-9, g(1.0 + 1e-9));
    for i in 1..grid {
        let a = 1.0 + f64::from(i) / f64::from(grid);
        let v = g(a);
        if v.signum() != prev.1.signum() {
            bracket = Some((prev.0, a));
            break;
        }
        prev = (a, v);
    }
    let (mut lo, mut hi) = bracket.expect("Q^4(0) - Q^3(0) changes sign in (1, 2)");
    let glo = g(lo);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if g(mid).signum() == glo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// Endpoint padding of the Viana fiber interval. The lower padding must exceed
// 2 * hi * FIBER_PAD_HI (+ square) for the padded interval to stay invariant.
const FIBER_PAD_HI: f64 = 1e-9;
const FIBER_PAD_LO: f64 = 1e-8;

/// Forward-invariant fiber interval for the Viana map with `a(s)` ranging over
/// `[a_min, a_max]`.
///
/// Starts from the hull of the critical values `[a_min, a_max]`, grows it by the
/// hull of its image for 200 steps (clipped to `[-2, 2]`), pads the endpoints and
/// verifies invariance of the padded interval.
pub fn viana_fiber_interval(a0: f64, alpha: f64) -> Result<(f64, f64)> {
    let (a_min, a_max) = (a0 - alpha, a0 + alpha);
    let image = |lo: f64, hi: f64| {
        let max_sq = (lo * lo).max(hi * hi);
        let min_sq = if lo <= 0.0 && hi >= 0.0 {
            0.0
        } else {
            (lo * lo).min(hi * hi)
        };
        (a_min - max_sq, a_max - min_sq)
    };
    let (mut lo, mut hi) = (a_min, a_max);
    for _ in 0..200 {
        let (ilo, ihi) = image(lo, hi);
        lo = lo.min(ilo).max(-2.0);
        hi = hi.max(ihi).min(2.0);
    }
    let (lo, hi) = (lo - FIBER_PAD_LO, hi + FIBER_PAD_HI);
    if lo <= -2.0 || hi >= 2.0 {
        return Err(Error::InvalidParameter(format!(
            "no forward-invariant fiber interval inside (-2, 2) for a0={a0}, alpha={alpha}"
        )));
    }
    let (ilo, ihi) = image(lo, hi);
    if ilo < lo || ihi > hi {
        return Err(Error::InvalidParameter(format!(
            "fiber interval [{lo}, {hi}] is not forward invariant (image [{ilo}, {ihi}])"
        )));
    }
    Ok((lo, hi))
}

impl MapSystem {
    pub fn doubling(d: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "doubling needs d >= 2, got {d}"
            )));
        }
        Ok(MapSystem {
            kind: SystemKind::Doubling { d },
            sup_log_det: f64::from(d).ln(),
        })
    }

    pub fn quadratic(a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "quadratic needs 0 < a <= 2, got {a}"
            )));
        }
        Ok(MapSystem {
            kind: SystemKind::Quadratic { a },
            sup_log_det: (2.0 * a).ln(),
        })
    }

    /// Viana map with the fiber interval computed by [`viana_fiber_interval`].
    pub fn viana(a0: f64, alpha: f64, d: u32) -> Result<Self> {
        if !(a0 > 1.0 && a0 < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "viana needs a0 in (1, 2), got {a0}"
            )));
        }
        if alpha.is_nan() || alpha < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "viana needs alpha >= 0, got {alpha}"
            )));
        }
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "viana needs d >= 2, got {d}"
            )));
        }
        let (fiber_lo, fiber_hi) = viana_fiber_interval(a0, alpha)?;
        let system = MapSystem {
            kind: SystemKind::Viana {
                a0,
                alpha,
                d,
                fiber_lo,
                fiber_hi,
            },
            sup_log_det: (2.0 * f64::from(d) * fiber_lo.abs().max(fiber_hi.abs())).ln(),
        };
        system.spot_check_invariance()?;
        Ok(system)
    }

    /// Viana map at the Misiurewicz parameter of [`misiurewicz_parameter`].
    pub fn viana_default(alpha: f64, d: u32) -> Result<Self> {
        Self::viana(misiurewicz_parameter(), alpha, d)
    }

    fn spot_check_invariance(&self) -> Result<()> {
        let SystemKind::Viana {
            fiber_lo, fiber_hi, ..
        } = self.kind
        else {
            return Ok(());
        };
        let grid = 100;
        for i in 0..grid {
            for j in 0..=grid {
                let s = f64::from(i) / f64::from(grid);
                let x = fiber_lo + (fiber_hi - fiber_lo) * f64::from(j) / f64::from(grid);
                let q = self.step(Point::cylinder(s, x));
                if !self.contains(&q) {
                    return Err(Error::InvalidParameter(format!(
                        "{self}: image {:?} of ({s}, {x}) leaves the phase space",
                        q.coords()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SystemKind::Doubling { .. } | SystemKind::Quadratic { .. } => 1,
            SystemKind::Viana { .. } => 2,
        }
    }

    /// Whether the first coordinate lives on the circle `R/Z`.
    pub fn circle_first(&self) -> bool {
        !matches!(self.kind, SystemKind::Quadratic { .. })
    }

    /// Largest number of inverse branches at any point.
    pub fn max_branches(&self) -> usize {
        match self.kind {
            SystemKind::Doubling { d } => d as usize,
            SystemKind::Quadratic { .. } => 2,
            SystemKind::Viana { d, .. } => 2 * d as usize,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        if p.dim() != self.dim() {
            return false;
        }
        match self.kind {
            SystemKind::Doubling { .. } => (0.0..1.0).contains(&p.first()),
            SystemKind::Quadratic { .. } => (-1.0..=1.0).contains(&p.first()),
            SystemKind::Viana {
                fiber_lo, fiber_hi, ..
            } => (0.0..1.0).contains(&p.first()) && (fiber_lo..=fiber_hi).contains(&p.last()),
        }
    }

    pub(crate) fn check_domain(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain {
                system: self.to_string(),
                coords: p.coords().to_vec(),
            })
        }
    }

    /// `a(s) = a0 + alpha sin(2 pi s)` for the Viana map.
    pub(crate) fn viana_a(a0: f64, alpha: f64, s: f64) -> f64 {
        a0 + alpha * (TAU * s).sin()
    }

    /// `f(p)` without the domain check; callers guarantee `p` is in the phase space.
    #[inline]
    pub(crate) fn step(&self, p: Point) -> Point {
        match self.kind {
            SystemKind::Doubling { d } => Point::interval(reduce_mod1(f64::from(d) * p.first())),
            SystemKind::Quadratic { a } => {
                let x = p.first();
                Point::interval((-a * x).mul_add(x, 1.0))
            }
            SystemKind::Viana { a0, alpha, d, .. } => {
                let (s, x) = (p.first(), p.last());
                let q = (-x).mul_add(x, Self::viana_a(a0, alpha, s));
                Point::cylinder(reduce_mod1(f64::from(d) * s), q)
            }
        }
    }

    /// `log|det Df(p)|` without the domain check. `-inf` on the critical set.
    #[inline]
    pub(crate) fn log_det_at(&self, p: &Point) -> f64 {
        match self.kind {
            SystemKind::Doubling { d } => f64::from(d).ln(),
            SystemKind::Quadratic { a } => (2.0 * a * p.first().abs()).ln(),
            SystemKind::Viana { d, .. } => (2.0 * f64::from(d) * p.last().abs()).ln(),
        }
    }

    pub fn apply(&self, p: &Point) -> Result<Point> {
        self.check_domain(p)?;
        Ok(self.step(*p))
    }

    pub fn log_abs_det_jacobian(&self, p: &Point) -> Result<f64> {
        self.check_domain(p)?;
        Ok(self.log_det_at(p))
    }

    /// `log|det Df^n(p)|` as the sum of single-step log-determinants along the orbit.
    pub fn cocycle_log_det(&self, p: &Point, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidParameter("cocycle needs n >= 1".into()));
        }
        self.check_domain(p)?;
        let mut q = *p;
        let mut sum = 0.0;
        for _ in 0..n {
            if !self.contains(&q) {
                return Err(Error::Internal(format!(
                    "{self}: orbit of {:?} left the phase space at {:?}",
                    p.coords(),
                    q.coords()
                )));
            }
            sum += self.log_det_at(&q);
            q = self.step(q);
        }
        Ok(sum)
    }

    /// Single-step log-determinants `log|det Df(f^j(p))|` for `j < n`.
    pub fn orbit_log_dets(&self, p: &Point, n: usize) -> Result<Vec<f64>> {
        self.check_domain(p)?;
        let mut q = *p;
        Ok((0..n)
            .map(|_| {
                let v = self.log_det_at(&q);
                q = self.step(q);
                v
            })
            .collect())
    }

    /// Iterator over the partial cocycle sums `log|det Df^k(p)|`, `k = 1, 2, ...`.
    pub fn cocycle_sums(&self, p: &Point) -> Result<CocycleSums<'_>> {
        self.check_domain(p)?;
        Ok(CocycleSums {
            system: self,
            point: *p,
            sum: 0.0,
        })
    }

    /// A Lebesgue-uniform point of the phase space.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self.kind {
            SystemKind::Doubling { .. } => Point::interval(rng.random::<f64>()),
            SystemKind::Quadratic { .. } => Point::interval(rng.random_range(-1.0..=1.0)),
            SystemKind::Viana {
                fiber_lo, fiber_hi, ..
            } => {
                let s = rng.random::<f64>();
                Point::cylinder(s, rng.random_range(fiber_lo..=fiber_hi))
            }
        }
    }

    /// Distance from `p` to the critical set (`x = 0`); infinite when there is none.
    pub fn critical_distance(&self, p: &Point) -> f64 {
        match self.kind {
            SystemKind::Doubling { .. } => f64::INFINITY,
            SystemKind::Quadratic { .. } | SystemKind::Viana { .. } => p.last().abs(),
        }
    }

    /// The map without the `mod 1` reduction, for difference quotients across 0.
    fn lifted(&self, c: &[f64]) -> [f64; 2] {
        match self.kind {
            SystemKind::Doubling { d } => [f64::from(d) * c[0], 0.0],
            SystemKind::Quadratic { a } => [1.0 - a * c[0] * c[0], 0.0],
            SystemKind::Viana { a0, alpha, d, .. } => [
                f64::from(d) * c[0],
                Self::viana_a(a0, alpha, c[0]) - c[1] * c[1],
            ],
        }
    }

    /// Relative discrepancy between the analytic `|det Df(p)|` and the determinant of
    /// a central-difference Jacobian with the given step.
    pub fn finite_difference_jacobian_check(&self, p: &Point, step: f64) -> Result<f64> {
        self.check_domain(p)?;
        if step.is_nan() || step <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "step must be positive, got {step}"
            )));
        }
        if self.critical_distance(p) <= 100.0 * step {
            return Err(Error::InvalidParameter(format!(
                "{:?} is within {} of the critical set; difference quotients are meaningless there",
                p.coords(),
                100.0 * step
            )));
        }
        let (lo, hi) = match self.kind {
            SystemKind::Doubling { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            SystemKind::Quadratic { .. } => (-1.0, 1.0),
            SystemKind::Viana {
                fiber_lo, fiber_hi, ..
            } => (fiber_lo, fiber_hi),
        };
        let x = p.last();
        if x - step < lo || x + step > hi {
            return Err(Error::InvalidParameter(format!(
                "{:?} is within {step} of the phase-space boundary",
                p.coords()
            )));
        }
        let dim = self.dim();
        let mut jac = [[0.0f64; 2]; 2];
        for j in 0..dim {
            let mut plus = [p.coords[0], p.coords[1]];
            let mut minus = plus;
            plus[j] += step;
            minus[j] -= step;
            let (fp, fm) = (self.lifted(&plus), self.lifted(&minus));
            for i in 0..dim {
                jac[i][j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        let fd_det = if dim == 1 {
            jac[0][0].abs()
        } else {
            (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]).abs()
        };
        let analytic = self.log_det_at(p).exp();
        Ok((fd_det - analytic).abs() / analytic)
    }
}

/// Floored reduction into `[0, 1)`. For `v >= 0` the subtraction is exact.
#[inline]
fn reduce_mod1(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Partial sums of the log-determinant cocycle along a forward orbit.
pub struct CocycleSums<'a> {
    system: &'a MapSystem,
    point: Point,
    sum: f64,
}

impl Iterator for CocycleSums<'_> {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        self.sum += self.system.log_det_at(&self.point);
        self.point = self.system.step(self.point);
        Some(self.sum)
    }
}
