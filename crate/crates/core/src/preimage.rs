//! Inverse branches and depth-`n` preimage trees.
//!
//! Trees are expanded level by level. Each frontier entry carries the running sum
//! of single-step log-determinants along its branch, so a leaf's
//! `log|det Df^n(leaf)|` costs one log evaluation per level. Frontiers are kept in
//! lexicographic order of branch indices, which makes results independent of the
//! number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MapSystem, Point, SystemKind};
use crate::error::{Error, Result};
use crate::json::ExtReal;

/// A fiber discriminant in `(-NEAR_TANGENCY, 0]` is a double root at 0.
pub const NEAR_TANGENCY: f64 = 1e-12;

/// Default cap on the frontier size of a preimage tree.
pub const DEFAULT_LEAF_BUDGET: usize = 1 << 22;

// Re-application check for computed preimages.
const REAPPLY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreimageLeaf {
    pub point: Point,
    /// `log|det Df^depth(point)|`.
    pub forward_log_det: ExtReal,
    pub depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreimageTree {
    pub root: Point,
    pub depth: usize,
    pub leaves: Vec<PreimageLeaf>,
    /// Set when some frontier exceeded the leaf budget and was cut back to it.
    pub truncated: bool,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// `c - k y^2 - (x + x_lo)` evaluated with error-free transformations, so the
/// result is accurate even when the terms nearly cancel.
fn parabola_residual(c: f64, k: f64, y: f64, x: f64, x_lo: f64) -> f64 {
    let (sq, sq_err) = two_prod(y, y);
    let (ksq, ksq_err) = two_prod(k, sq);
    let (d1, e1) = two_sum(c, -ksq);
    let (d2, e2) = two_sum(d1, -x);
    d2 + (e1 + e2 - ksq_err - k * sq_err - x_lo)
}

/// `y` with `c - k y^2 = x + x_lo`, improved by one Newton step against the
/// compensated residual when that lowers it, together with the correction term
/// `y_lo` such that `y + y_lo` is a closer root.
fn refine_root(c: f64, k: f64, x: f64, x_lo: f64, y: f64) -> (f64, f64) {
    if y.abs() < 1e-8 {
        return (y, 0.0);
    }
    let r0 = parabola_residual(c, k, y, x, x_lo);
    let y1 = y + r0 / (2.0 * k * y);
    let r1 = parabola_residual(c, k, y1, x, x_lo);
    if r1.abs() < r0.abs() {
        (y1, r1 / (2.0 * k * y1))
    } else {
        (y, r0 / (2.0 * k * y))
    }
}

impl MapSystem {
    /// Calls `emit` with every preimage of `p`, in canonical branch order. `lo` is a
    /// low-order correction to the last coordinate of `p` and each emitted point
    /// comes with its own. No domain check on `p`.
    pub(crate) fn for_each_inverse(&self, p: &Point, lo: f64, mut emit: impl FnMut(Point, f64)) {
        match self.kind {
            SystemKind::Doubling { d } => {
                let df = f64::from(d);
                for k in 0..d {
                    let y = (p.first() + f64::from(k)) / df;
                    if y < 1.0 {
                        emit(Point::interval(y), 0.0);
                    }
                }
            }
            SystemKind::Quadratic { a } => {
                let x = p.first();
                let disc = (1.0 - x) / a;
                if disc < 0.0 {
                    return;
                }
                if disc == 0.0 {
                    emit(Point::interval(0.0), 0.0);
                    return;
                }
                let r = disc.sqrt();
                for y in [-r, r] {
                    let (y, y_lo) = refine_root(1.0, a, x, lo, y);
                    if (-1.0..=1.0).contains(&y)
                        && ((-a * y).mul_add(y, 1.0) - x).abs() <= REAPPLY_TOL
                    {
                        emit(Point::interval(y), y_lo);
                    }
                }
            }
            SystemKind::Viana {
                a0,
                alpha,
                d,
                fiber_lo,
                fiber_hi,
            } => {
                let df = f64::from(d);
                let (s, x) = (p.first(), p.last());
                for k in 0..d {
                    let sk = (s + f64::from(k)) / df;
                    if sk >= 1.0 {
                        continue;
                    }
                    let c = Self::viana_a(a0, alpha, sk);
                    let disc = c - x;
                    if disc <= -NEAR_TANGENCY {
                        continue;
                    }
                    if disc <= 0.0 {
                        emit(Point::cylinder(sk, 0.0), 0.0);
                        continue;
                    }
                    let r = disc.sqrt();
                    for y in [-r, r] {
                        let (y, y_lo) = refine_root(c, 1.0, x, lo, y);
                        if (fiber_lo..=fiber_hi).contains(&y)
                            && ((-y).mul_add(y, c) - x).abs() <= REAPPLY_TOL
                        {
                            emit(Point::cylinder(sk, y), y_lo);
                        }
                    }
                }
            }
        }
    }

    /// All `y` in the phase space with `f(y) = p`. A double root is reported once;
    /// no real solution gives an empty list.
    pub fn inverse_branches(&self, p: &Point) -> Result<Vec<Point>> {
        self.check_domain(p)?;
        let mut out = Vec::with_capacity(self.max_branches());
        self.for_each_inverse(p, 0.0, |y, _| out.push(y));
        Ok(out)
    }

    /// Expands the preimage tree of `root` level by level up to `depth`, calling
    /// `visit(level, frontier, truncated_so_far)` after each level. Each frontier entry is a point and
    /// its accumulated `log|det Df^level|`. Returns whether any level was truncated.
    pub(crate) fn expand_levels(
        &self,
        root: &Point,
        depth: usize,
        leaf_budget: usize,
        mut visit: impl FnMut(usize, &[(Point, f64)], bool),
    ) -> Result<bool> {
        if depth == 0 {
            return Err(Error::InvalidParameter(
                "preimage depth must be >= 1".into(),
            ));
        }
        if leaf_budget == 0 {
            return Err(Error::InvalidParameter("leaf budget must be >= 1".into()));
        }
        self.check_domain(root)?;
        let mut frontier = vec![(*root, 0.0f64)];
        // low-order parts of the last coordinates, carried so that deep leaves
        // stay correctly rounded
        let mut lows = vec![0.0f64];
        let mut truncated = false;
        for level in 1..=depth {
            let (mut next, mut next_lows): (Vec<(Point, f64)>, Vec<f64>) = frontier
                .par_iter()
                .zip(lows.par_iter())
                .flat_map_iter(|((p, acc), lo)| {
                    let mut kids = Vec::with_capacity(self.max_branches());
                    self.for_each_inverse(p, *lo, |y, y_lo| {
                        kids.push(((y, acc + self.log_det_at(&y)), y_lo))
                    });
                    kids
                })
                .unzip();
            if next.len() > leaf_budget {
                next.truncate(leaf_budget);
                next_lows.truncate(leaf_budget);
                truncated = true;
            }
            frontier = next;
            lows = next_lows;
            visit(level, &frontier, truncated);
        }
        Ok(truncated)
    }

    pub fn preimage_tree(
        &self,
        root: &Point,
        depth: usize,
        leaf_budget: usize,
    ) -> Result<PreimageTree> {
        let mut leaves = Vec::new();
        let truncated = self.expand_levels(root, depth, leaf_budget, |level, frontier, _| {
            if level == depth {
                leaves = frontier
                    .iter()
                    .map(|(p, ld)| PreimageLeaf {
                        point: *p,
                        forward_log_det: ExtReal(*ld),
                        depth,
                    })
                    .collect();
            }
        })?;
        Ok(PreimageTree {
            root: *root,
            depth,
            leaves,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn quadratic_branches() {
        let q = MapSystem::quadratic(2.0).unwrap();
        let ys: Vec<f64> = q
            .inverse_branches(&Point::interval(-1.0))
            .unwrap()
            .iter()
            .map(|p| p.first())
            .collect();
        assert_eq!(ys, vec![-1.0, 1.0]);
        let ys = q.inverse_branches(&Point::interval(1.0)).unwrap();
        assert_eq!(ys, vec![Point::interval(0.0)]);
        assert!(q.inverse_branches(&Point::interval(1.5)).is_err());
    }

    #[test]
    fn quadratic_without_real_preimages() {
        // 1 - 1.5 y^2 = -0.9 needs y^2 = 1.9 / 1.5 > 1
        let q = MapSystem::quadratic(1.5).unwrap();
        assert!(q
            .inverse_branches(&Point::interval(-0.9))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn doubling_branches() {
        let dbl = MapSystem::doubling(2).unwrap();
        let ys = dbl.inverse_branches(&Point::interval(0.5)).unwrap();
        assert_eq!(ys, vec![Point::interval(0.25), Point::interval(0.75)]);
    }

    #[test]
    fn viana_branches_round_trip() {
        let v = MapSystem::viana_default(0.05, 3).unwrap();
        let p = Point::cylinder(0.4, 0.3);
        let ys = v.inverse_branches(&p).unwrap();
        assert!(!ys.is_empty() && ys.len() <= 6);
        for y in ys {
            assert!(v.apply(&y).unwrap().distance(&p, true) < 1e-12);
        }
    }

    #[test]
    fn viana_near_tangency_is_a_double_root() {
        let v = MapSystem::viana_default(0.0, 2).unwrap();
        let SystemKind::Viana { a0, .. } = v.kind else {
            unreachable!()
        };
        // with alpha = 0 the fiber critical value is a0 for every base branch
        let ys = v
            .inverse_branches(&Point::cylinder(0.2, a0 + 5e-13))
            .unwrap();
        assert_eq!(ys.len(), 2);
        assert!(ys.iter().all(|y| y.last() == 0.0));
    }

    #[test]
    fn doubling_tree() {
        let dbl = MapSystem::doubling(2).unwrap();
        let tree = dbl
            .preimage_tree(&Point::interval(0.3), 3, DEFAULT_LEAF_BUDGET)
            .unwrap();
        assert_eq!(tree.leaves.len(), 8);
        assert!(!tree.truncated);
        for leaf in &tree.leaves {
            assert!((leaf.forward_log_det.0 - 3.0 * LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn critical_value_tree() {
        let q = MapSystem::quadratic(2.0).unwrap();
        let tree = q.preimage_tree(&Point::interval(1.0), 1, 16).unwrap();
        assert_eq!(tree.leaves.len(), 1);
        assert_eq!(tree.leaves[0].point.first(), 0.0);
        assert_eq!(tree.leaves[0].forward_log_det.0, f64::NEG_INFINITY);
    }

    #[test]
    fn truncation_is_flagged() {
        let dbl = MapSystem::doubling(2).unwrap();
        let tree = dbl.preimage_tree(&Point::interval(0.3), 5, 10).unwrap();
        assert!(tree.truncated);
        assert_eq!(tree.leaves.len(), 10);
        assert!(dbl.preimage_tree(&Point::interval(0.3), 0, 10).is_err());
        assert!(dbl.preimage_tree(&Point::interval(0.3), 2, 0).is_err());
    }
}
