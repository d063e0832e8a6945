//! The asymptotic and exponential ES laws and their gain conditions.
//!
//! Both laws share one shape once the schedule is evaluated:
//!
//! `d theta_i / dt = nu(t) sqrt(alpha_i omega_i) cos(omega_i eta(t) + k_i phi(t) y)`
//!
//! The controller is stateless. It sees the measured output `y` and the
//! clock, nothing else.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::schedules::{eval_schedule, Caps, Growth, ScheduleParams, ScheduleSample};

/// Relative gap below which two frequency multipliers count as equal.
pub const MULTIPLIER_GAP: f64 = 1e-9;

/// Which reading of the exponential time-varying gain condition to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdForm {
    /// Bound the product `k_i alpha_i`.
    #[default]
    Product,
    /// Bound `k_i` alone.
    GainOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub dim_n: usize,
    pub omega: f64,
    pub omega_hat: Vec<f64>,
    pub alpha: Vec<f64>,
    pub k: Vec<f64>,
    pub schedule: ScheduleParams,
    #[serde(default)]
    pub threshold_form: ThresholdForm,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim_n == 0 {
            return Err(Error::InvalidArgument("dim_n must be positive".into()));
        }
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        check_dim("omega_hat", self.dim_n, self.omega_hat.len())?;
        check_dim("alpha", self.dim_n, self.alpha.len())?;
        check_dim("k", self.dim_n, self.k.len())?;
        for (name, values) in [
            ("omega_hat", &self.omega_hat),
            ("alpha", &self.alpha),
            ("k", &self.k),
        ] {
            if let Some(i) = values.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name}[{i}] must be positive and finite, got {}",
                    values[i]
                )));
            }
        }
        distinct_multipliers(&self.omega_hat)?;
        self.schedule.validate()
    }

    /// Caps the instantaneous frequency of the fastest channel at `freq_max` rad/s.
    pub fn with_frequency_cap(mut self, freq_max: f64) -> Result<Self> {
        let fastest = self.omega * self.omega_hat.iter().cloned().fold(0.0, f64::max);
        let mut caps = self.schedule.caps.unwrap_or_default();
        caps.warp_rate_max = Some(freq_max / fastest);
        self.schedule = self.schedule.with_caps(caps)?;
        Ok(self)
    }

    pub fn with_caps(mut self, caps: Caps) -> Result<Self> {
        self.schedule = self.schedule.with_caps(caps)?;
        Ok(self)
    }

    pub fn t0(&self) -> f64 {
        self.schedule.t0
    }
}

fn distinct_multipliers(omega_hat: &[f64]) -> Result<()> {
    for i in 0..omega_hat.len() {
        for j in (i + 1)..omega_hat.len() {
            let (a, b) = (omega_hat[i], omega_hat[j]);
            if (a - b).abs() <= MULTIPLIER_GAP * a.abs().max(b.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "frequency multipliers omega_hat[{i}] and omega_hat[{j}] coincide ({a})"
                )));
            }
        }
    }
    Ok(())
}

/// Channel frequencies `omega_i = omega * omega_hat_i`.
pub fn derive_frequencies(cfg: &ControllerConfig) -> Result<Vec<f64>> {
    distinct_multipliers(&cfg.omega_hat)?;
    Ok(cfg.omega_hat.iter().map(|w| cfg.omega * w).collect())
}

/// A validated controller with per-channel constants precomputed.
#[derive(Debug, Clone)]
pub struct EsController {
    cfg: ControllerConfig,
    frequencies: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl EsController {
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        let frequencies = derive_frequencies(&cfg)?;
        let amplitudes = cfg
            .alpha
            .iter()
            .zip(&frequencies)
            .map(|(a, w)| (a * w).sqrt())
            .collect();
        Ok(Self {
            cfg,
            frequencies,
            amplitudes,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Writes `d theta / dt` into `out` and returns the schedule sample used.
    pub fn rhs_into(&self, y: f64, t: f64, out: &mut [f64]) -> Result<ScheduleSample> {
        let s = eval_schedule(&self.cfg.schedule, t)?;
        for (i, o) in out.iter_mut().enumerate() {
            let phase = self.frequencies[i] * s.eta + self.cfg.k[i] * s.phi_gain * y;
            *o = s.nu * self.amplitudes[i] * phase.cos();
        }
        Ok(s)
    }

    /// Instantaneous dither frequencies `omega_i * d eta / dt`.
    pub fn instantaneous_frequencies(&self, t: f64) -> Result<Vec<f64>> {
        let s = eval_schedule(&self.cfg.schedule, t)?;
        Ok(self.frequencies.iter().map(|w| w * s.deta_dt).collect())
    }

    pub fn max_instantaneous_frequency(&self, t: f64) -> Result<f64> {
        let s = eval_schedule(&self.cfg.schedule, t)?;
        Ok(self.frequencies.iter().cloned().fold(0.0, f64::max) * s.deta_dt)
    }
}

/// Right-hand side of the ES law at `(theta, y, t)`. `theta` only fixes the
/// dimension; the law depends on it through `y` alone.
pub fn es_rhs(cfg: &ControllerConfig, theta: &[f64], y: f64, t: f64) -> Result<Vec<f64>> {
    check_dim("theta", cfg.dim_n, theta.len())?;
    let ctrl = EsController::new(cfg.clone())?;
    let mut out = vec![0.0; cfg.dim_n];
    ctrl.rhs_into(y, t, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ConstantOptimum,
    TimeVaryingOptimum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub regime: Regime,
    pub exponent_ok: bool,
    pub thresholds: Vec<f64>,
    pub margins: Vec<f64>,
    pub pass: bool,
}

/// Lower bound on `k_i alpha_i` (or on `k_i`, for [`ThresholdForm::GainOnly`])
/// required by the convergence theorems, plus the admissible exponent range.
pub fn check_gain_conditions(
    cfg: &ControllerConfig,
    kappa1: f64,
    regime: Regime,
) -> ConditionReport {
    let (exponent_ok, threshold) = match (cfg.schedule.growth, regime) {
        (Growth::Asymptotic { beta, r, m }, Regime::ConstantOptimum) => (
            (-r / 2.0..=1.0).contains(&m),
            2.0 * (r + 2.0).powi(2) * beta.powi(3) / (r.powi(3) * kappa1),
        ),
        (Growth::Asymptotic { beta, r, m }, Regime::TimeVaryingOptimum) => (
            m > 0.5 && m <= 1.0,
            2.0 * (r + 2.0).powi(2) * (2.0 * m * r - r + 1.0) * beta.powi(3) / (r.powi(3) * kappa1),
        ),
        (Growth::Exponential { lambda, p }, Regime::ConstantOptimum) => {
            ((0.0..=1.0).contains(&p), 4.0 * lambda * lambda / kappa1)
        }
        (Growth::Exponential { lambda, p }, Regime::TimeVaryingOptimum) => {
            (p > 0.5 && p <= 1.0, 8.0 * lambda * lambda * p / kappa1)
        }
    };
    let threshold = if kappa1 > 0.0 {
        threshold
    } else {
        f64::INFINITY
    };

    let gain_only = cfg.threshold_form == ThresholdForm::GainOnly
        && regime == Regime::TimeVaryingOptimum
        && !cfg.schedule.growth.is_asymptotic();
    let margins: Vec<f64> = cfg
        .k
        .iter()
        .zip(&cfg.alpha)
        .map(|(k, a)| {
            if gain_only {
                k - threshold
            } else {
                k * a - threshold
            }
        })
        .collect();
    let pass = exponent_ok && margins.iter().all(|&m| m > 0.0);
    ConditionReport {
        regime,
        exponent_ok,
        thresholds: vec![threshold; cfg.k.len()],
        margins,
        pass,
    }
}
