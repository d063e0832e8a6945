use std::path::PathBuf;

use estrack_core::controllers::{ControllerConfig, Regime};
use estrack_core::cost_models::{fixture, CostFunction, SamplingGrid};
use estrack_core::simulate::{StepPolicy, DEFAULT_SAMPLE_EVERY};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending key, or `.` for the document root.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: &str, message: impl std::fmt::Display) -> Self {
        Self {
            path: path.to_string(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub cost: String,
    pub controller: ControllerConfig,
    pub theta0: Vec<f64>,
    pub t_span: [f64; 2],
    #[serde(default)]
    pub policy: StepPolicy,
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub checks: Vec<Check>,
}

fn default_sample_every() -> f64 {
    DEFAULT_SAMPLE_EVERY
}

fn default_outputs() -> PathBuf {
    PathBuf::from("estrack_out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Convergence gain thresholds. Without `kappa1` the estimate from the
    /// assumption sampler is used; without `regime` it follows the fixture.
    GainConditions {
        #[serde(default)]
        kappa1: Option<f64>,
        #[serde(default)]
        regime: Option<Regime>,
    },
    Assumptions {
        #[serde(default = "default_points_per_axis")]
        points_per_axis: usize,
        #[serde(default = "default_time_samples")]
        time_samples: usize,
    },
    /// Passes when the deviation strictly shrinks along `omega_list`.
    AveragedComparison {
        omega_list: Vec<f64>,
        #[serde(default)]
        t_span: Option<[f64; 2]>,
    },
    DecayFit {
        window: [f64; 2],
        #[serde(default)]
        min_rate: Option<f64>,
        #[serde(default)]
        max_rate: Option<f64>,
    },
}

fn default_points_per_axis() -> usize {
    SamplingGrid::default().points_per_axis
}

fn default_time_samples() -> usize {
    SamplingGrid::default().time_samples
}

impl Check {
    pub fn kind(&self) -> &'static str {
        match self {
            Check::GainConditions { .. } => "gain_conditions",
            Check::Assumptions { .. } => "assumptions",
            Check::AveragedComparison { .. } => "averaged_comparison",
            Check::DecayFit { .. } => "decay_fit",
        }
    }
}

/// Parses and validates a JSON experiment description.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::at(&path, e.into_inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(ConfigError::at("name", "must be nonempty"));
        }
        let n = self.controller.dim_n;
        self.cost_function()?;
        for (key, len) in [
            ("controller.omega_hat", self.controller.omega_hat.len()),
            ("controller.alpha", self.controller.alpha.len()),
            ("controller.k", self.controller.k.len()),
            ("theta0", self.theta0.len()),
        ] {
            if len != n {
                return Err(ConfigError::at(
                    key,
                    format!("expected {n} entries (dim_n), got {len}"),
                ));
            }
        }
        self.controller
            .validate()
            .map_err(|e| ConfigError::at("controller", e))?;
        if self.theta0.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::at("theta0", "entries must be finite"));
        }
        let [a, b] = self.t_span;
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(ConfigError::at(
                "t_span",
                format!("need start < end, got [{a}, {b}]"),
            ));
        }
        if a != self.controller.t0() {
            return Err(ConfigError::at(
                "t_span",
                format!(
                    "must start at controller.schedule.t0 = {}",
                    self.controller.t0()
                ),
            ));
        }
        self.policy
            .validate()
            .map_err(|e| ConfigError::at("policy", e))?;
        if !(self.sample_every > 0.0) || !self.sample_every.is_finite() {
            return Err(ConfigError::at("sample_every", "must be positive"));
        }
        for (i, check) in self.checks.iter().enumerate() {
            check_valid(check, self).map_err(|m| ConfigError::at(&format!("checks[{i}]"), m))?;
        }
        Ok(())
    }

    pub fn cost_function(&self) -> Result<CostFunction, ConfigError> {
        fixture(&self.cost, self.controller.dim_n).map_err(|e| ConfigError::at("cost", e))
    }

    pub fn t_span(&self) -> (f64, f64) {
        (self.t_span[0], self.t_span[1])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn check_valid(check: &Check, cfg: &ExperimentConfig) -> Result<(), String> {
    match check {
        Check::GainConditions { kappa1, .. } => {
            if let Some(k) = kappa1 {
                if !(*k > 0.0) {
                    return Err(format!("kappa1 must be positive, got {k}"));
                }
            }
        }
        Check::Assumptions {
            points_per_axis,
            time_samples,
        } => {
            if *points_per_axis < 10 || *time_samples < 20 {
                return Err(
                    "assumptions grid needs points_per_axis >= 10 and time_samples >= 20".into(),
                );
            }
        }
        Check::AveragedComparison { omega_list, t_span } => {
            if omega_list.len() < 2 {
                return Err("omega_list needs at least two entries".into());
            }
            if omega_list.iter().any(|w| !(*w > 0.0)) || omega_list.windows(2).any(|w| w[1] < w[0])
            {
                return Err("omega_list must be positive and increasing".into());
            }
            if let Some([a, b]) = t_span {
                if *a != cfg.controller.t0() || !(b > a) {
                    return Err("t_span must start at t0 and be nonempty".into());
                }
            }
        }
        Check::DecayFit { window, .. } => {
            let [a, b] = *window;
            if !(b > a) || a < cfg.t_span[0] || b > cfg.t_span[1] {
                return Err(format!("window [{a}, {b}] must lie inside t_span"));
            }
        }
    }
    Ok(())
}
