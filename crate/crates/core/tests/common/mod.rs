//! Reference implementations used as test oracles. They share no code with the
//! library: inverse branches are found by bisection on monotone laps and
//! derivatives come from the textbook formulas.

#![allow(dead_code)]

use backvol::{MapSystem, SystemKind};

/// Root of the increasing-or-decreasing function `g` on `[lo, hi]` (`g(lo)` and
/// `g(hi)` of opposite sign or zero).
pub fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let glo = g(lo);
    if glo == 0.0 {
        return lo;
    }
    if g(hi) == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solutions of `c - y^2 = x` on `[lo, 0]` and `[0, hi]`, one per lap, found by
/// bisection. A double root at the top of the parabola is reported once.
fn parabola_roots(c: f64, x: f64, lo: f64, hi: f64) -> Vec<f64> {
    let g = |y: f64| c - y * y - x;
    if c - x <= 0.0 {
        return if c - x > -1e-12 { vec![0.0] } else { vec![] };
    }
    let mut out = Vec::new();
    if g(lo) <= 0.0 {
        out.push(bisect(g, lo, 0.0));
    }
    if g(hi) <= 0.0 {
        out.push(bisect(g, 0.0, hi));
    }
    out
}

/// One-step preimages of `p` as coordinate vectors.
pub fn oracle_inverse(sys: &MapSystem, p: &[f64]) -> Vec<Vec<f64>> {
    match sys.kind {
        SystemKind::Doubling { d } => (0..d)
            .map(|k| (p[0] + k as f64) / d as f64)
            .filter(|&y| y < 1.0)
            .map(|y| vec![y])
            .collect(),
        SystemKind::Quadratic { a } => {
            let g = |y: f64| 1.0 - a * y * y - p[0];
            if 1.0 - p[0] < 0.0 {
                return vec![];
            }
            if p[0] == 1.0 {
                return vec![vec![0.0]];
            }
            let mut out = Vec::new();
            if g(-1.0) <= 0.0 {
                out.push(vec![bisect(g, -1.0, 0.0)]);
            }
            if g(1.0) <= 0.0 {
                out.push(vec![bisect(g, 0.0, 1.0)]);
            }
            out
        }
        SystemKind::Viana {
            a0,
            alpha,
            d,
            fiber_lo,
            fiber_hi,
        } => {
            let mut out = Vec::new();
            for k in 0..d {
                let s = (p[0] + k as f64) / d as f64;
                if s >= 1.0 {
                    continue;
                }
                let c = a0 + alpha * (2.0 * std::f64::consts::PI * s).sin();
                for y in parabola_roots(c, p[1], fiber_lo, fiber_hi) {
                    out.push(vec![s, y]);
                }
            }
            out
        }
    }
}

/// `log|det Df(p)|` from the derivative formula.
pub fn oracle_log_det(sys: &MapSystem, p: &[f64]) -> f64 {
    match sys.kind {
        SystemKind::Doubling { d } => (d as f64).ln(),
        SystemKind::Quadratic { a } => (2.0 * a * p[0]).abs().ln(),
        SystemKind::Viana { d, .. } => (2.0 * d as f64 * p[1]).abs().ln(),
    }
}

/// `f(p)` from the map formula.
pub fn oracle_apply(sys: &MapSystem, p: &[f64]) -> Vec<f64> {
    match sys.kind {
        SystemKind::Doubling { d } => vec![(d as f64 * p[0]).fract()],
        SystemKind::Quadratic { a } => vec![1.0 - a * p[0] * p[0]],
        SystemKind::Viana { a0, alpha, d, .. } => vec![
            (d as f64 * p[0]).fract(),
            a0 + alpha * (2.0 * std::f64::consts::PI * p[0]).sin() - p[1] * p[1],
        ],
    }
}

/// Depth-`n` preimages of `root` with accumulated forward log-determinants, by
/// plain recursion.
pub fn oracle_preimages(sys: &MapSystem, root: &[f64], n: usize) -> Vec<(Vec<f64>, f64)> {
    fn go(sys: &MapSystem, p: &[f64], acc: f64, left: usize, out: &mut Vec<(Vec<f64>, f64)>) {
        if left == 0 {
            out.push((p.to_vec(), acc));
            return;
        }
        for y in oracle_inverse(sys, p) {
            let ld = acc + oracle_log_det(sys, &y);
            go(sys, &y, ld, left - 1, out);
        }
    }
    let mut out = Vec::new();
    go(sys, root, 0.0, n, &mut out);
    out
}

pub fn oracle_min_log_det(sys: &MapSystem, root: &[f64], n: usize) -> f64 {
    oracle_preimages(sys, root, n)
        .iter()
        .map(|(_, ld)| *ld)
        .fold(f64::INFINITY, f64::min)
}

/// Pairs the two multisets after sorting by coordinates and reports the largest
/// coordinate gap and the largest relative log-det gap; `None` when the sizes differ.
pub fn multiset_gap(a: &[(Vec<f64>, f64)], b: &[(Vec<f64>, f64)]) -> Option<(f64, f64)> {
    if a.len() != b.len() {
        return None;
    }
    let sort = |v: &[(Vec<f64>, f64)]| {
        let mut v = v.to_vec();
        v.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite coordinates"));
        v
    };
    let (a, b) = (sort(a), sort(b));
    let mut coord = 0.0f64;
    let mut ld = 0.0f64;
    for ((pa, la), (pb, lb)) in a.iter().zip(&b) {
        for (x, y) in pa.iter().zip(pb) {
            coord = coord.max((x - y).abs());
        }
        if la != lb {
            ld = ld.max((la - lb).abs() / la.abs().max(1.0));
        }
    }
    Some((coord, ld))
}

pub fn relative_gap(x: f64, y: f64) -> f64 {
    if x == y {
        0.0
    } else {
        (x - y).abs() / x.abs().max(y.abs()).max(1.0)
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `c - k (h + l)^2` in double-double arithmetic.
fn parabola_dd(c: f64, k: f64, h: f64, l: f64) -> (f64, f64) {
    let (sh, sl) = two_prod(h, h);
    let (sh, sl) = two_sum(sh, sl + 2.0 * h * l);
    let (ph, pl) = two_prod(k, sh);
    let pl = pl + k * sl;
    let (rh, rl) = two_sum(c, -ph);
    two_sum(rh, rl - pl)
}

/// `f^n(p)` with the interval (or fiber) coordinate carried in double-double, so
/// the result measures how far `p` itself is from an exact preimage rather than
/// the rounding of the forward iteration.
pub fn forward_accurate(sys: &MapSystem, p: &[f64], n: usize) -> Vec<f64> {
    match sys.kind {
        SystemKind::Doubling { .. } => (0..n).fold(p.to_vec(), |q, _| oracle_apply(sys, &q)),
        SystemKind::Quadratic { a } => {
            let (mut h, mut l) = (p[0], 0.0);
            for _ in 0..n {
                (h, l) = parabola_dd(1.0, a, h, l);
            }
            vec![h + l]
        }
        SystemKind::Viana { a0, alpha, d, .. } => {
            let (mut s, mut h, mut l) = (p[0], p[1], 0.0);
            for _ in 0..n {
                let c = a0 + alpha * (2.0 * std::f64::consts::PI * s).sin();
                (h, l) = parabola_dd(c, 1.0, h, l);
                s = (d as f64 * s).fract();
            }
            vec![s, h + l]
        }
    }
}

/// Distance on the phase space; the circle coordinate of the skew product wraps.
pub fn phase_distance(sys: &MapSystem, p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .enumerate()
        .map(|(i, (a, b))| {
            let d = (a - b).abs();
            if i == 0 && !matches!(sys.kind, SystemKind::Quadratic { .. }) {
                d.min(1.0 - d)
            } else {
                d
            }
        })
        .fold(0.0, f64::max)
}
