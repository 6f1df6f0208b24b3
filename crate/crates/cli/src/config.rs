//! Experiment configuration files.
//!
//! Every key is documented in `configs/reference.toml`. Unknown keys are errors;
//! only `seed`, `[system]` and `[schedule_a]` are required.

use std::path::{Path, PathBuf};

use backvol::schedules::{gamma_bound, BFamily, BSchedule};
use backvol::tails::ExpansionSchedule;
use backvol::verify::{CorollaryConfig, VerifyOptions};
use backvol::MapSystem;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: SystemConfig,
    pub schedule_a: ScheduleAConfig,
    #[serde(default)]
    pub theorem: TheoremConfig,
    #[serde(default)]
    pub tail: TailConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub chains: ChainsConfig,
    #[serde(default)]
    pub schedule_b: ScheduleBConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Doubling {
        d: u32,
    },
    Quadratic {
        a: f64,
    },
    Viana {
        /// Misiurewicz parameter when absent.
        a0: Option<f64>,
        alpha: f64,
        d: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleAConfig {
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    pub gamma: f64,
    pub p_assumed: f64,
    pub n0_max: usize,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        TheoremConfig {
            gamma: 0.45,
            p_assumed: 5.0,
            n0_max: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailConfig {
    pub sample_size: u64,
    pub n_max: usize,
    pub censor_threshold: f64,
    pub fit_n_min: f64,
    pub fit_min_count: u64,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            sample_size: 100_000,
            n_max: 60,
            censor_threshold: 0.01,
            fit_n_min: 5.0,
            fit_min_count: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub base_points: usize,
    pub depths: Vec<usize>,
    pub leaf_budget: usize,
    pub s_max: usize,
    pub n_depths: Vec<usize>,
    pub growth_fit_n_min: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            base_points: 20,
            depths: (1..=12).collect(),
            leaf_budget: backvol::preimage::DEFAULT_LEAF_BUDGET,
            s_max: 40,
            n_depths: Vec::new(),
            growth_fit_n_min: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainsConfig {
    pub trials: u64,
    pub n_cap: usize,
    pub max_attempts: u64,
    pub series_samples: u64,
    pub series_n_max: usize,
    pub depths: Vec<usize>,
}

impl Default for ChainsConfig {
    fn default() -> Self {
        ChainsConfig {
            trials: 100_000,
            n_cap: 40,
            max_attempts: 10_000_000,
            series_samples: 100_000,
            series_n_max: 60,
            depths: vec![8, 12, 16],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleBFamily {
    /// Family follows the fitted regime of `Leb(Gamma_n)`.
    Auto,
    Exponential,
    Polynomial,
    Stretched,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleBConfig {
    pub family: ScheduleBFamily,
    /// Fixes the schedule instead of building it from the tail estimate.
    pub rate: Option<f64>,
    pub tau: Option<f64>,
    pub n0: usize,
}

impl Default for ScheduleBConfig {
    fn default() -> Self {
        ScheduleBConfig {
            family: ScheduleBFamily::Auto,
            rate: None,
            tau: None,
            n0: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks for every numeric field, done before any computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.map_system()?;
        self.expansion_schedule()?;
        let t = &self.theorem;
        let bound =
            gamma_bound(t.p_assumed).map_err(|e| invalid("theorem.p_assumed", e.to_string()))?;
        if !(t.gamma > 0.0 && t.gamma < bound) {
            return Err(invalid(
                "theorem.gamma",
                format!("must lie in (0, {bound}) for p_assumed = {}", t.p_assumed),
            ));
        }
        if t.n0_max == 0 || t.n0_max > self.tail.n_max {
            return Err(invalid(
                "theorem.n0_max",
                format!("must lie in [1, tail.n_max = {}]", self.tail.n_max),
            ));
        }
        let tail = &self.tail;
        if tail.sample_size < 100 {
            return Err(invalid("tail.sample_size", "must be >= 100"));
        }
        if tail.n_max < 8 {
            return Err(invalid("tail.n_max", "must be >= 8"));
        }
        if !(tail.censor_threshold >= 0.0 && tail.censor_threshold <= 1.0) {
            return Err(invalid("tail.censor_threshold", "must lie in [0, 1]"));
        }
        if !(tail.fit_n_min >= 1.0 && tail.fit_n_min.is_finite()) {
            return Err(invalid("tail.fit_n_min", "must be >= 1"));
        }
        let v = &self.verify;
        if v.base_points == 0 {
            return Err(invalid("verify.base_points", "must be >= 1"));
        }
        check_depths("verify.depths", &v.depths)?;
        if !v.n_depths.is_empty() {
            check_depths("verify.n_depths", &v.n_depths)?;
        }
        if v.leaf_budget == 0 {
            return Err(invalid("verify.leaf_budget", "must be >= 1"));
        }
        if !(v.growth_fit_n_min >= 1.0 && v.growth_fit_n_min.is_finite()) {
            return Err(invalid("verify.growth_fit_n_min", "must be >= 1"));
        }
        let c = &self.chains;
        if c.n_cap < 2 {
            return Err(invalid("chains.n_cap", "must be >= 2"));
        }
        if c.trials == 0 || c.max_attempts < c.trials {
            return Err(invalid(
                "chains.max_attempts",
                "need trials >= 1 and max_attempts >= trials",
            ));
        }
        if c.series_samples == 0 {
            return Err(invalid("chains.series_samples", "must be >= 1"));
        }
        if c.series_n_max < 4 {
            return Err(invalid("chains.series_n_max", "must be >= 4"));
        }
        check_depths("chains.depths", &c.depths)?;
        self.fixed_schedule_b()?;
        Ok(())
    }

    pub fn map_system(&self) -> Result<MapSystem, ConfigError> {
        match self.system {
            SystemConfig::Doubling { d } => MapSystem::doubling(d),
            SystemConfig::Quadratic { a } => MapSystem::quadratic(a),
            SystemConfig::Viana {
                a0: Some(a0),
                alpha,
                d,
            } => MapSystem::viana(a0, alpha, d),
            SystemConfig::Viana { a0: None, alpha, d } => MapSystem::viana_default(alpha, d),
        }
        .map_err(|e| invalid("system", e.to_string()))
    }

    pub fn expansion_schedule(&self) -> Result<ExpansionSchedule, ConfigError> {
        ExpansionSchedule::exponential(self.schedule_a.lambda)
            .map_err(|e| invalid("schedule_a.lambda", e.to_string()))
    }

    /// The schedule given explicitly by `[schedule_b]`, if any.
    pub fn fixed_schedule_b(&self) -> Result<Option<BSchedule>, ConfigError> {
        let b = &self.schedule_b;
        let Some(rate) = b.rate else {
            if b.tau.is_some() && b.family != ScheduleBFamily::Stretched {
                return Err(invalid(
                    "schedule_b.tau",
                    "only meaningful for the stretched family",
                ));
            }
            return Ok(None);
        };
        let family = match b.family {
            ScheduleBFamily::Auto => {
                return Err(invalid(
                    "schedule_b.family",
                    "a fixed rate needs an explicit family",
                ))
            }
            ScheduleBFamily::Exponential => BFamily::Exponential { c: rate },
            ScheduleBFamily::Polynomial => BFamily::Polynomial { beta: rate },
            ScheduleBFamily::Stretched => {
                let tau = b.tau.ok_or_else(|| {
                    invalid("schedule_b.tau", "required for the stretched family")
                })?;
                BFamily::StretchedExponential { c: rate, tau }
            }
        };
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("schedule_b.rate", "must be positive"));
        }
        BSchedule::new(family, b.n0, self.theorem.gamma, self.theorem.p_assumed)
            .map(Some)
            .map_err(|e| invalid("schedule_b", e.to_string()))
    }

    pub fn corollary_config(&self) -> CorollaryConfig {
        CorollaryConfig {
            gamma: self.theorem.gamma,
            p_assumed: self.theorem.p_assumed,
            sample_size: self.tail.sample_size,
            n_max: self.tail.n_max,
            n0_max: self.theorem.n0_max,
            tail_fit_n_min: self.tail.fit_n_min,
            tail_fit_min_count: self.tail.fit_min_count,
            censor_threshold: self.tail.censor_threshold,
            base_points: self.verify.base_points,
            depths: self.verify.depths.clone(),
            verify: VerifyOptions {
                leaf_budget: self.verify.leaf_budget,
                s_max: self.verify.s_max,
                n_depths: self.verify.n_depths.clone(),
                growth_fit_n_min: self.verify.growth_fit_n_min,
            },
            seed: self.seed,
        }
    }
}

fn check_depths(field: &'static str, depths: &[usize]) -> Result<(), ConfigError> {
    if depths.is_empty() || depths[0] == 0 || depths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(
            field,
            "must be a nonempty, strictly increasing list of positive depths",
        ));
    }
    if *depths.last().expect("nonempty") > 64 {
        return Err(invalid(field, "depths above 64 are not supported"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        "seed = 1\n[system]\nkind = \"doubling\"\nd = 2\n[schedule_a]\nlambda = 0.5\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.theorem, TheoremConfig::default());
        assert_eq!(cfg.verify.depths, (1..=12).collect::<Vec<_>>());
        assert!(cfg.fixed_schedule_b().unwrap().is_none());
    }

    #[test]
    fn missing_seed_is_named() {
        let err = ExperimentConfig::parse(&MINIMAL.replace("seed = 1\n", "")).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = ExperimentConfig::parse(&format!("{MINIMAL}[tail]\nsamples = 5\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("samples") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn ranges_are_checked() {
        let err =
            ExperimentConfig::parse(&format!("{MINIMAL}[theorem]\ngamma = 0.6\n")).unwrap_err();
        assert!(err.to_string().starts_with("theorem.gamma"), "{err}");
        let err =
            ExperimentConfig::parse(&format!("{MINIMAL}[verify]\ndepths = [3, 2]\n")).unwrap_err();
        assert!(err.to_string().starts_with("verify.depths"), "{err}");
        let err = ExperimentConfig::parse(&MINIMAL.replace("d = 2", "d = 1")).unwrap_err();
        assert!(err.to_string().starts_with("system"), "{err}");
    }

    #[test]
    fn fixed_schedule_b() {
        let cfg = ExperimentConfig::parse(&format!(
            "{MINIMAL}[schedule_b]\nfamily = \"exponential\"\nrate = 0.5\n"
        ))
        .unwrap();
        let b = cfg.fixed_schedule_b().unwrap().unwrap();
        assert_eq!(b.family, BFamily::Exponential { c: 0.5 });
        assert!(ExperimentConfig::parse(&format!("{MINIMAL}[schedule_b]\nrate = 0.5\n")).is_err());
    }
}
