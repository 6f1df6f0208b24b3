//! Subcommand pipelines. Each subcommand recomputes the upstream stages it needs
//! from the configuration, so any of them can run on its own; all randomness
//! comes from the config seed through named substreams.

use std::path::{Path, PathBuf};

use backvol::chains::{check_concatenation, estimate_n, lemma1_series_estimate};
use backvol::rng::substream;
use backvol::schedules::{build_bn, BFamily, BSchedule, ConstraintRow};
use backvol::tails::{estimate_tail, lp_diagnostic, TailEstimate};
use backvol::verify::{
    compare_sigma, gamma_regime, min_backward_profile, sample_base_points, tail_fit_points,
    verify_points, GammaRegime, VerificationReport,
};
use backvol::Error;
use clap::ValueEnum;

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{
    chains_summary, read_report, summary, write_json, write_mindet_csv, write_residuals_csv,
    write_scan_csv, write_tail_csv, ChainsReport, Report, ScanRecord, TailSummary,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    HittingTail,
    PreimageScan,
    Chains,
    Verify,
    Corollary,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::HittingTail => "hitting-tail",
            Command::PreimageScan => "preimage-scan",
            Command::Chains => "chains",
            Command::Verify => "verify",
            Command::Corollary => "corollary",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Refused(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) => Failure::Validation(e.to_string()),
            Error::Refused(_) | Error::NoAdmissibleSchedule(_) | Error::Degenerate(_) => {
                Failure::Refused(e.to_string())
            }
            Error::Domain { .. } | Error::Internal(_) => Failure::Other(e.into()),
        }
    }
}

/// What a run produced: the summary text and the files written.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

const DEFAULT_OUT: &str = "out";
/// Segment cap for the `log b_n = n^2` control, whose hypothesis rarely holds past a few steps.
const NEGATIVE_CONTROL_CAP: usize = 3;

pub fn run(command: Command, opts: &RunOptions) -> Result<Outcome, Failure> {
    if command == Command::Report {
        let out = opts
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let path = out.join("report.json");
        if !path.is_file() {
            return Err(Failure::Validation(format!(
                "no report at {}",
                path.display()
            )));
        }
        let report = read_report(&path).map_err(|e| Failure::Validation(format!("{e:#}")))?;
        return Ok(Outcome {
            summary: summary(&report),
            files: Vec::new(),
        });
    }
    let config_path = opts
        .config
        .as_ref()
        .ok_or_else(|| Failure::Validation("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&out)
        .map_err(|e| anyhow::anyhow!("creating {}: {e}", out.display()))?;
    Pipeline::new(cfg, out)?.run(command)
}

struct Pipeline {
    cfg: ExperimentConfig,
    out: PathBuf,
    files: Vec<PathBuf>,
}

struct Schedule {
    b: BSchedule,
    constraints: Vec<ConstraintRow>,
}

impl Pipeline {
    fn new(cfg: ExperimentConfig, out: PathBuf) -> Result<Self, Failure> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            out,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.files.push(p.clone());
        p
    }

    fn base_report(&self, command: Command) -> Result<Report, Failure> {
        Ok(Report {
            command: command.name().to_string(),
            seed: self.cfg.seed,
            system: self.cfg.map_system()?,
            schedule_a: self.cfg.expansion_schedule()?,
            gamma: self.cfg.theorem.gamma,
            p_assumed: self.cfg.theorem.p_assumed,
            schedule_b: None,
            schedule_b_constraints: Vec::new(),
            tail: None,
            predicted: None,
            base_points: Vec::new(),
            sigma_family: None,
            regime_match: None,
            preimage_scan: Vec::new(),
        })
    }

    fn tail(&self) -> Result<(TailEstimate, GammaRegime, TailSummary), Failure> {
        let system = self.cfg.map_system()?;
        let sched_a = self.cfg.expansion_schedule()?;
        let t = &self.cfg.tail;
        let tail = estimate_tail(
            &system,
            &sched_a,
            t.sample_size,
            t.n_max,
            substream(self.cfg.seed, "tail"),
        )?;
        let (lp, lp_note) =
            match lp_diagnostic(&tail, self.cfg.theorem.p_assumed, t.censor_threshold) {
                Ok(lp) => (Some(lp), None),
                Err(e) => (None, Some(e.to_string())),
            };
        let regime = gamma_regime(
            &tail,
            &sched_a,
            self.cfg.theorem.gamma,
            t.fit_n_min,
            t.fit_min_count,
        )?;
        let summary = TailSummary {
            sample_size: tail.sample_size,
            n_max: tail.n_max,
            censored_fraction: tail.censored_fraction,
            rng_seed: tail.rng_seed,
            lp,
            lp_note,
            gamma_fit: regime.fit.clone(),
            gamma_fit_note: regime.note.clone(),
        };
        Ok((tail, regime, summary))
    }

    fn schedule(&self, tail: &TailEstimate, regime: &GammaRegime) -> Result<Schedule, Failure> {
        if let Some(b) = self.cfg.fixed_schedule_b()? {
            return Ok(Schedule {
                b,
                constraints: Vec::new(),
            });
        }
        let th = &self.cfg.theorem;
        let built = build_bn(
            &self.cfg.expansion_schedule()?,
            tail,
            th.gamma,
            th.p_assumed,
            regime.family,
            th.n0_max,
        )?;
        Ok(Schedule {
            b: built.schedule,
            constraints: built.rows,
        })
    }

    fn run(mut self, command: Command) -> Result<Outcome, Failure> {
        let mut extra = String::new();
        let report = match command {
            Command::HittingTail => self.hitting_tail()?,
            Command::PreimageScan => self.preimage_scan()?,
            Command::Chains => {
                let (report, chains) = self.chains()?;
                extra = chains_summary(&chains);
                report
            }
            Command::Verify | Command::Corollary => self.verify(command)?,
            Command::Report => unreachable!("handled before the pipeline"),
        };
        let path = self.path("report.json");
        write_json(&path, &report)?;
        Ok(Outcome {
            summary: summary(&report) + &extra,
            files: self.files,
        })
    }

    fn hitting_tail(&mut self) -> Result<Report, Failure> {
        let (tail, regime, tail_summary) = self.tail()?;
        let path = self.path("tail.csv");
        write_tail_csv(&path, &tail)?;
        let mut report = self.base_report(Command::HittingTail)?;
        report.tail = Some(tail_summary);
        report.predicted = Some(regime.predicted);
        Ok(report)
    }

    fn preimage_scan(&mut self) -> Result<Report, Failure> {
        let system = self.cfg.map_system()?;
        let v = &self.cfg.verify;
        let max_depth = *v.depths.last().expect("validated nonempty");
        let scan = sample_base_points(&system, v.base_points, self.cfg.seed)
            .into_iter()
            .map(|base| {
                Ok(ScanRecord {
                    base,
                    levels: min_backward_profile(&system, &base, max_depth, v.leaf_budget)?,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let path = self.path("mindet.csv");
        write_scan_csv(&path, &scan)?;
        let mut report = self.base_report(Command::PreimageScan)?;
        report.preimage_scan = scan;
        Ok(report)
    }

    fn chains(&mut self) -> Result<(Report, ChainsReport), Failure> {
        let system = self.cfg.map_system()?;
        let (tail, regime, tail_summary) = self.tail()?;
        let sched = self.schedule(&tail, &regime)?;
        let c = &self.cfg.chains;
        let seed = self.cfg.seed;
        let concatenation = check_concatenation(
            &system,
            &sched.b,
            c.trials,
            c.n_cap,
            c.max_attempts,
            substream(seed, "concatenation"),
        )?;
        let control_cap = c.n_cap.min(NEGATIVE_CONTROL_CAP);
        let control = BSchedule::without_validation(BFamily::Tabulated {
            log_b: (1..=control_cap).map(|n| (n * n) as f64).collect(),
        });
        let negative_control = check_concatenation(
            &system,
            &control,
            c.trials,
            control_cap,
            c.max_attempts,
            substream(seed, "negative-control"),
        )?;
        let lemma1 = lemma1_series_estimate(
            &system,
            &sched.b,
            c.series_samples,
            c.series_n_max,
            substream(seed, "lemma1"),
            self.cfg.tail.censor_threshold,
        )?;
        let v = &self.cfg.verify;
        let chain_bounds = sample_base_points(&system, v.base_points, seed)
            .iter()
            .map(|x| estimate_n(&system, x, &sched.b, &c.depths, v.leaf_budget, v.s_max))
            .collect::<Result<Vec<_>, Error>>()?;
        let chains = ChainsReport {
            schedule_b: sched.b.clone(),
            concatenation,
            negative_control,
            lemma1,
            chain_bounds,
        };
        let path = self.path("chains.json");
        write_json(&path, &chains)?;

        let mut report = self.base_report(Command::Chains)?;
        report.tail = Some(tail_summary);
        report.predicted = Some(regime.predicted);
        report.schedule_b = Some(sched.b);
        report.schedule_b_constraints = sched.constraints;
        Ok((report, chains))
    }

    fn verify(&mut self, command: Command) -> Result<Report, Failure> {
        let system = self.cfg.map_system()?;
        let (tail, regime, tail_summary) = self.tail()?;
        let sched = self.schedule(&tail, &regime)?;
        let base_points = verify_points(&system, &sched.b, &self.cfg.corollary_config())?;

        let path = self.path("mindet.csv");
        write_mindet_csv(&path, &base_points)?;
        let path = self.path("residuals.csv");
        self.write_residuals(&path, &tail, &regime, &base_points)?;

        let mut report = self.base_report(command)?;
        if command == Command::Corollary {
            let path = self.path("tail.csv");
            write_tail_csv(&path, &tail)?;
            let (sigma_family, regime_match) = compare_sigma(&base_points, &regime.predicted);
            report.regime_match = sigma_family.map(|_| regime_match);
            report.sigma_family = sigma_family;
        }
        report.tail = Some(tail_summary);
        report.predicted = Some(regime.predicted);
        report.schedule_b = Some(sched.b);
        report.schedule_b_constraints = sched.constraints;
        report.base_points = base_points;
        Ok(report)
    }

    fn write_residuals(
        &self,
        path: &Path,
        tail: &TailEstimate,
        regime: &GammaRegime,
        reports: &[VerificationReport],
    ) -> anyhow::Result<()> {
        let t = &self.cfg.tail;
        let gamma_points: Vec<(f64, f64)> = tail_fit_points(tail, t.fit_min_count)
            .into_iter()
            .filter(|&(n, v)| n >= t.fit_n_min && v > 0.0)
            .map(|(n, v)| (n, v.ln()))
            .collect();
        let n_min = self.cfg.verify.growth_fit_n_min;
        let sigma: Vec<_> = reports
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let fit = r.sigma_fit.as_ref()?;
                let points = r
                    .depths
                    .iter()
                    .zip(&r.min_log_dets)
                    .filter(|(&d, m)| d as f64 >= n_min && m.0.is_finite())
                    .map(|(&d, m)| (d as f64, m.0))
                    .collect();
                Some((i, fit, points))
            })
            .collect();
        write_residuals_csv(
            path,
            regime.fit.as_ref().map(|f| (f, gamma_points.as_slice())),
            &sigma,
        )
    }
}
