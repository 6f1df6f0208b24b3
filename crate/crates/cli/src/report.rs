//! Report artifacts: `report.json`, CSV tables and the human-readable summary.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use backvol::chains::{ChainBoundEstimate, ConcatenationReport, Lemma1Series};
use backvol::json::{fmt17, to_canonical_json};
use backvol::rates::{Family, RegimeFit};
use backvol::schedules::{BSchedule, ConstraintRow, RatePrediction};
use backvol::tails::{ExpansionSchedule, LpDiagnostic, TailEstimate};
use backvol::verify::{LevelMin, VerificationReport};
use backvol::{MapSystem, Point};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub sample_size: u64,
    pub n_max: usize,
    pub censored_fraction: f64,
    pub rng_seed: Option<u64>,
    pub lp: Option<LpDiagnostic>,
    pub lp_note: Option<String>,
    pub gamma_fit: Option<RegimeFit>,
    pub gamma_fit_note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub base: Point,
    pub levels: Vec<LevelMin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub system: MapSystem,
    pub schedule_a: ExpansionSchedule,
    pub gamma: f64,
    pub p_assumed: f64,
    pub schedule_b: Option<BSchedule>,
    pub schedule_b_constraints: Vec<ConstraintRow>,
    pub tail: Option<TailSummary>,
    pub predicted: Option<RatePrediction>,
    pub base_points: Vec<VerificationReport>,
    pub sigma_family: Option<Family>,
    pub regime_match: Option<bool>,
    pub preimage_scan: Vec<ScanRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainsReport {
    pub schedule_b: BSchedule,
    pub concatenation: ConcatenationReport,
    /// The same check under `log b_n = n^2`, which is not submultiplicative.
    pub negative_control: ConcatenationReport,
    pub lemma1: Lemma1Series,
    pub chain_bounds: Vec<ChainBoundEstimate>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = to_canonical_json(value).context("serializing report")?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_report(path: &Path) -> anyhow::Result<Report> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> anyhow::Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_tail_csv(path: &Path, tail: &TailEstimate) -> anyhow::Result<()> {
    let rows: Vec<String> = tail
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.n,
                fmt17(r.tail_fraction),
                fmt17(r.ci_low),
                fmt17(r.ci_high),
                fmt17(tail.censored_fraction)
            )
        })
        .collect();
    write_csv(
        path,
        "n,tail_fraction,ci_low,ci_high,censored_fraction",
        &rows,
    )
}

fn coords(p: &Point) -> (String, String) {
    match p.coords() {
        [x] => (fmt17(*x), String::new()),
        [s, x] => (fmt17(*s), fmt17(*x)),
        _ => unreachable!("points have one or two coordinates"),
    }
}

pub fn write_mindet_csv(path: &Path, reports: &[VerificationReport]) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let (c0, c1) = coords(&r.base);
        for ((d, m), lb) in r.depths.iter().zip(&r.min_log_dets).zip(&r.log_b) {
            rows.push(format!("{i},{c0},{c1},{d},{},{}", fmt17(m.0), fmt17(*lb)));
        }
    }
    write_csv(path, "point,coord0,coord1,depth,min_log_det,log_b", &rows)
}

pub fn write_scan_csv(path: &Path, scan: &[ScanRecord]) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for (i, r) in scan.iter().enumerate() {
        let (c0, c1) = coords(&r.base);
        for l in &r.levels {
            rows.push(format!(
                "{i},{c0},{c1},{},{},{},{}",
                l.depth,
                fmt17(l.min_log_det.0),
                l.leaves,
                l.truncated
            ));
        }
    }
    write_csv(
        path,
        "point,coord0,coord1,depth,min_log_det,leaves,truncated",
        &rows,
    )
}

/// Base-point index, its growth fit and the `(depth, min_log_det)` points it was fitted to.
pub type SigmaResiduals<'a> = (usize, &'a RegimeFit, Vec<(f64, f64)>);

/// Observed and fitted log values under every family, for the tail regime fit
/// (`source = gamma`) and the per-point growth fits (`source = sigma`).
pub fn write_residuals_csv(
    path: &Path,
    gamma: Option<(&RegimeFit, &[(f64, f64)])>,
    sigma: &[SigmaResiduals],
) -> anyhow::Result<()> {
    let families = [Family::Exponential, Family::Stretched, Family::Polynomial];
    let mut rows = Vec::new();
    let mut emit = |source: &str, point: String, fit: &RegimeFit, points: &[(f64, f64)]| {
        for f in families {
            for &(n, y) in points {
                let fitted = fit.fitted_log(f, n);
                rows.push(format!(
                    "{source},{point},{},{},{},{},{}",
                    f.name(),
                    n,
                    fmt17(y),
                    fmt17(fitted),
                    fmt17(y - fitted)
                ));
            }
        }
    };
    if let Some((fit, points)) = gamma {
        emit("gamma", String::new(), fit, points);
    }
    for (i, fit, points) in sigma {
        emit("sigma", i.to_string(), fit, points);
    }
    write_csv(
        path,
        "source,point,family,n,observed_log,fitted_log,residual",
        &rows,
    )
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn regime_line(fit: &RegimeFit, rate_name: &str) -> String {
    let f = fit.selected_fit();
    match f.tau {
        Some(tau) => format!(
            "{}, {rate_name} = {:.6}, τ = {:.6}",
            f.family.name(),
            f.rate,
            tau
        ),
        None => format!("{}, {rate_name} = {:.6}", f.family.name(), f.rate),
    }
}

/// Regime classifications, exponents, `C_x_hat` and `N_x_hat` ranges, and flags
/// for uncertified, non-generic or vacuous verifications.
pub fn summary(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command: {}", report.command);
    let _ = writeln!(s, "system: {}", report.system);
    let _ = writeln!(s, "seed: {}", report.seed);
    let ExpansionSchedule::Exponential { lambda } = report.schedule_a;
    let _ = writeln!(s, "a_n: exponential, λ = {lambda:.6}");
    if let Some(t) = &report.tail {
        let _ = writeln!(
            s,
            "Γ_n tail: {} samples, n_max = {}, censored fraction = {:.6}",
            t.sample_size, t.n_max, t.censored_fraction
        );
        if let Some(lp) = &t.lp {
            let _ = writeln!(
                s,
                "h in L^p (p = {}): {}{}",
                lp.p,
                if lp.admissible {
                    "admissible"
                } else {
                    "not admissible"
                },
                if lp.borderline { " (borderline)" } else { "" }
            );
        }
        match (&t.gamma_fit, &t.gamma_fit_note) {
            (Some(fit), _) => {
                let _ = writeln!(s, "Γ regime: {}", regime_line(fit, "α"));
            }
            (None, note) => {
                let _ = writeln!(
                    s,
                    "Γ regime: degenerate ({})",
                    note.as_deref().unwrap_or("no fit")
                );
            }
        }
    }
    if let Some(b) = &report.schedule_b {
        let params = match &b.family {
            backvol::BFamily::Exponential { c } => format!("c = {c:.6}"),
            backvol::BFamily::Polynomial { beta } => format!("β = {beta:.6}"),
            backvol::BFamily::StretchedExponential { c, tau } => {
                format!("c = {c:.6}, τ = {tau:.6}")
            }
            backvol::BFamily::Tabulated { log_b } => format!("{} tabulated values", log_b.len()),
        };
        let _ = writeln!(
            s,
            "b_n: {}, {params}, n0 = {}, γ = {:.6}",
            b.family.name(),
            b.n0,
            b.gamma
        );
    }
    if let Some(p) = &report.predicted {
        let tau = match p.sigma {
            backvol::BFamily::StretchedExponential { tau, .. } => format!(", τ = {tau:.6}"),
            _ => String::new(),
        };
        let _ = writeln!(s, "predicted σ: {}, β = {:.6}{tau}", p.sigma.name(), p.beta);
    }
    let points = &report.base_points;
    if !points.is_empty() {
        let total = points.len();
        match report
            .sigma_family
            .or_else(|| backvol::verify::majority_family(points))
        {
            Some(family) => {
                let agreeing: Vec<&RegimeFit> = points
                    .iter()
                    .filter_map(|r| r.sigma_fit.as_ref())
                    .filter(|f| f.selected == family)
                    .collect();
                let beta = agreeing.iter().map(|f| f.selected_fit().rate).sum::<f64>()
                    / agreeing.len() as f64;
                let _ = writeln!(
                    s,
                    "σ regime: {}, β = {beta:.6} ({}/{total} base points)",
                    family.name(),
                    agreeing.len()
                );
            }
            None => {
                let _ = writeln!(s, "σ regime: not measured (growth fits unavailable)");
            }
        }
        match report.regime_match {
            Some(m) => {
                let _ = writeln!(s, "regime match: {}", if m { "yes" } else { "no" });
            }
            None if report.command == "corollary" => {
                let _ = writeln!(s, "regime match: not assessed");
            }
            None => {}
        }
        let generic: Vec<&VerificationReport> = points.iter().filter(|r| !r.non_generic).collect();
        if let Some((lo, hi)) = range(generic.iter().map(|r| r.c_x_hat.0)) {
            let _ = writeln!(s, "C_x_hat range: [{lo:.6e}, {hi:.6e}]");
        }
        if let Some((lo, _)) = range(generic.iter().map(|r| r.stabilization_ratio.0)) {
            let _ = writeln!(s, "stabilization ratio min: {lo:.6}");
        }
        if let Some((lo, hi)) = range(points.iter().map(|r| r.n_x_hat as f64)) {
            let _ = writeln!(s, "N_x_hat range: [{lo}, {hi}]");
        }
        if let Some((lo, hi)) = range(points.iter().map(|r| r.theoretical_floor)) {
            let _ = writeln!(s, "theoretical floor range: [{lo:.6e}, {hi:.6e}]");
        }
        let certified = points.iter().filter(|r| r.certified).count();
        let _ = writeln!(s, "certified: {certified}/{total}");
        let flag = |s: &mut String, count: usize, what: &str| {
            if count > 0 {
                let _ = writeln!(s, "WARNING: {count}/{total} base points {what}");
            }
        };
        flag(
            &mut s,
            total - certified,
            "uncertified: preimage tree truncated by the leaf budget",
        );
        flag(
            &mut s,
            points.iter().filter(|r| r.non_generic).count(),
            "non-generic: a preimage branch meets the critical set",
        );
        flag(
            &mut s,
            points.iter().filter(|r| r.vacuous).count(),
            "vacuous at some depth: empty preimage set",
        );
        flag(
            &mut s,
            points.iter().filter(|r| r.n_x_lower_bound_only).count(),
            "with N_x_hat only a lower bound",
        );
        flag(
            &mut s,
            generic.iter().filter(|r| !r.stabilized()).count(),
            "with C_x_hat not stabilized",
        );
    }
    if !report.preimage_scan.is_empty() {
        let truncated = report
            .preimage_scan
            .iter()
            .filter(|r| r.levels.iter().any(|l| l.truncated))
            .count();
        let _ = writeln!(
            s,
            "preimage scan: {} base points",
            report.preimage_scan.len()
        );
        if truncated > 0 {
            let _ = writeln!(
                s,
                "WARNING: {truncated}/{} base points uncertified: preimage tree truncated by the leaf budget",
                report.preimage_scan.len()
            );
        }
    }
    s
}

pub fn chains_summary(chains: &ChainsReport) -> String {
    let mut s = String::new();
    let c = &chains.concatenation;
    let _ = writeln!(
        s,
        "concatenation: {} violations in {} checked implications",
        c.violations, c.checked
    );
    let nc = &chains.negative_control;
    let _ = writeln!(
        s,
        "negative control (log b_n = n^2): {} violations in {} checked implications",
        nc.violations, nc.checked
    );
    let l = &chains.lemma1;
    let _ = writeln!(
        s,
        "chain-length series: S_N = {:.6} at N = {}, relative increment {:.3e}, {}",
        l.partial_sums.last().copied().unwrap_or(0.0),
        l.partial_sums.len(),
        l.relative_increment,
        if l.plateau { "plateau" } else { "no plateau" }
    );
    if let Some((lo, hi)) = range(chains.chain_bounds.iter().map(|b| b.n_hat as f64)) {
        let _ = writeln!(s, "chain bound N_x range: [{lo}, {hi}]");
    }
    let lower = chains
        .chain_bounds
        .iter()
        .filter(|b| b.lower_bound_only)
        .count();
    if lower > 0 {
        let _ = writeln!(s, "WARNING: {lower} chain bounds are lower bounds only");
    }
    let truncated = chains.chain_bounds.iter().filter(|b| b.truncated).count();
    if truncated > 0 {
        let _ = writeln!(s, "WARNING: {truncated} chain bounds used truncated trees");
    }
    if c.violations > 0 {
        let _ = writeln!(
            s,
            "WARNING: the schedule b_n failed the concatenation check"
        );
    }
    s
}
