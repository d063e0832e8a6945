//! Closed-loop and averaged simulations.
//!
//! Integration is classical RK4. In frequency-adaptive mode the step is
//! slaved to the fastest instantaneous dither frequency so that every step
//! advances the dither phase by at most `2 pi / steps_per_period`.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{averaged_rhs, transform_state, AveragedSystem, Clock, Direction};
use crate::controllers::{ControllerConfig, EsController};
use crate::cost_models::{CostFunction, CostModel};
use crate::error::{check_dim, Error, Result};
use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepPolicy {
    Fixed {
        dt: f64,
    },
    FrequencyAdaptive {
        #[serde(default = "default_steps_per_period")]
        steps_per_period: u32,
        #[serde(default = "default_dt_max")]
        dt_max: f64,
        #[serde(default = "default_dt_min")]
        dt_min: f64,
    },
}

fn default_steps_per_period() -> u32 {
    40
}
fn default_dt_max() -> f64 {
    1e-2
}
fn default_dt_min() -> f64 {
    1e-8
}

pub const DEFAULT_SAMPLE_EVERY: f64 = 0.01;

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::FrequencyAdaptive {
            steps_per_period: default_steps_per_period(),
            dt_max: default_dt_max(),
            dt_min: default_dt_min(),
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepPolicy::Fixed { dt } => {
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "fixed dt must be positive, got {dt}"
                    )));
                }
            }
            StepPolicy::FrequencyAdaptive {
                steps_per_period,
                dt_max,
                dt_min,
            } => {
                if steps_per_period < 20 {
                    return Err(Error::InvalidArgument(format!(
                        "steps_per_period must be >= 20, got {steps_per_period}"
                    )));
                }
                if !(dt_min > 0.0) || !(dt_min <= dt_max) || !dt_max.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "need 0 < dt_min <= dt_max (dt_min = {dt_min}, dt_max = {dt_max})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest phase advance per step allowed by this policy.
    pub fn phase_budget(&self) -> Option<f64> {
        match *self {
            StepPolicy::Fixed { .. } => None,
            StepPolicy::FrequencyAdaptive {
                steps_per_period, ..
            } => Some(2.0 * PI / f64::from(steps_per_period)),
        }
    }
}

/// An ODE `dx/dt = f(t, x)` with an optional dither frequency for step control.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;

    /// Fastest instantaneous frequency (rad/s) present in the right-hand side at `t`.
    fn max_frequency(&self, _t: f64) -> Result<f64> {
        Ok(0.0)
    }
}

/// Adapts a closure `f(t, x) -> dx/dt` with optional frequency function.
pub struct VectorField<F, W = fn(f64) -> f64> {
    pub dim: usize,
    pub field: F,
    pub frequency: Option<W>,
}

impl<F> VectorField<F>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    pub fn new(dim: usize, field: F) -> Self {
        Self {
            dim,
            field,
            frequency: None,
        }
    }
}

impl<F, W> VectorField<F, W>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
    W: Fn(f64) -> f64,
{
    pub fn with_frequency(dim: usize, field: F, frequency: W) -> Self {
        Self {
            dim,
            field,
            frequency: Some(frequency),
        }
    }
}

impl<F, W> OdeSystem for VectorField<F, W>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
    W: Fn(f64) -> f64,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let v = (self.field)(t, x);
        check_dim("vector field output", self.dim, v.len())?;
        dx.copy_from_slice(&v);
        Ok(())
    }

    fn max_frequency(&self, t: f64) -> Result<f64> {
        Ok(self.frequency.as_ref().map_or(0.0, |w| w(t)))
    }
}

/// One classical RK4 step of size `h`, in place.
pub fn rk4_step<F>(f: &F, t: f64, x: &mut [f64], h: f64) -> Result<()>
where
    F: Fn(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    f(t, x, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4)?;
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: u64,
    pub rhs_evals: u64,
    pub min_dt: f64,
    pub max_dt: f64,
    /// Largest `dt * max_frequency` over accepted steps, with the frequency
    /// taken at whichever end of the step is larger.
    pub max_phase_advance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

fn sample_times(start: f64, end: f64, every: f64) -> Vec<f64> {
    let count = ((end - start) / every).floor() as usize;
    let mut times: Vec<f64> = (0..=count).map(|k| start + k as f64 * every).collect();
    times.retain(|&t| t < end);
    times.push(end);
    times
}

/// Integrates `sys` over `t_span`, recording states at `t_start + k * sample_every`
/// and at `t_end`. Steps are shortened to land exactly on sample times.
pub fn integrate<S: OdeSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    t_span: (f64, f64),
    policy: &StepPolicy,
    sample_every: f64,
) -> Result<RawRecord> {
    policy.validate()?;
    check_dim("initial state", sys.dim(), x0.len())?;
    let (start, end) = t_span;
    if !(end > start) || !start.is_finite() || !end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid time span [{start}, {end}]"
        )));
    }
    if !(sample_every > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample_every must be positive, got {sample_every}"
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }

    let targets = sample_times(start, end, sample_every);
    let mut times = Vec::with_capacity(targets.len());
    let mut states = Vec::with_capacity(targets.len());
    times.push(start);
    states.push(x0.to_vec());

    let mut stats = StepStats {
        min_dt: f64::INFINITY,
        ..StepStats::default()
    };
    let field = |t: f64, x: &[f64], dx: &mut [f64]| sys.rhs(t, x, dx);
    let mut x = x0.to_vec();
    let mut t = start;

    for &target in &targets[1..] {
        while t < target {
            let (mut dt, freq) = match *policy {
                StepPolicy::Fixed { dt } => (dt, 0.0),
                StepPolicy::FrequencyAdaptive {
                    steps_per_period,
                    dt_max,
                    dt_min,
                } => adaptive_step(sys, t, steps_per_period, dt_max, dt_min)?,
            };
            if t + dt >= target || target - (t + dt) < 1e-12 * target.abs().max(1.0) {
                dt = target - t;
            }
            rk4_step(&field, t, &mut x, dt)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { last_valid_t: t });
            }
            stats.steps += 1;
            stats.rhs_evals += 4;
            stats.min_dt = stats.min_dt.min(dt);
            stats.max_dt = stats.max_dt.max(dt);
            stats.max_phase_advance = stats.max_phase_advance.max(dt * freq);
            t = if dt == target - t { target } else { t + dt };
        }
        times.push(target);
        states.push(x.clone());
    }

    Ok(RawRecord {
        times,
        states,
        stats,
    })
}

/// Returns `(dt, f)` with `dt * f <= 2 pi / steps_per_period`, where `f` is the
/// larger of the frequencies at both ends of the step.
fn adaptive_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    steps_per_period: u32,
    dt_max: f64,
    dt_min: f64,
) -> Result<(f64, f64)> {
    let budget = 2.0 * PI / f64::from(steps_per_period);
    let f0 = sys.max_frequency(t)?;
    let mut dt = if f0 > 0.0 {
        (budget / f0).min(dt_max)
    } else {
        dt_max
    };
    let mut freq = f0;
    for _ in 0..64 {
        let f1 = sys.max_frequency(t + dt)?.max(f0);
        freq = f1;
        if dt * f1 <= budget {
            break;
        }
        dt = budget / f1;
    }
    if dt < dt_min {
        return Err(Error::StepUnderflow {
            t,
            required: dt,
            dt_min,
        });
    }
    Ok((dt, freq))
}

struct EsLoop<'a> {
    ctrl: &'a EsController,
    cost: &'a dyn CostModel,
}

impl OdeSystem for EsLoop<'_> {
    fn dim(&self) -> usize {
        self.cost.dim()
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        let y = self.cost.value(x, t);
        self.ctrl.rhs_into(y, t, dx)?;
        Ok(())
    }

    fn max_frequency(&self, t: f64) -> Result<f64> {
        self.ctrl.max_instantaneous_frequency(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub label: String,
    pub config_hash: Option<String>,
    pub policy: StepPolicy,
    pub sample_every: f64,
    pub stats: StepStats,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub theta_star: Vec<Vec<f64>>,
    pub y_star: Vec<f64>,
    pub err_norm: Vec<f64>,
    pub inst_freq: Vec<Vec<f64>>,
    pub meta: RunMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }
}

pub fn error_norm(theta: &[f64], theta_star: &[f64]) -> f64 {
    theta
        .iter()
        .zip(theta_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Simulates the closed ES loop. The reference columns are filled from the
/// cost's optimizer path after integration and are never fed back.
pub fn run_es(
    cfg: &ControllerConfig,
    cost: &CostFunction,
    theta0: &[f64],
    t_span: (f64, f64),
    policy: &StepPolicy,
    sample_every: f64,
) -> Result<Trajectory> {
    let ctrl = EsController::new(cfg.clone())?;
    check_dim("cost input", cfg.dim_n, cost.dim())?;
    check_dim("theta0", cfg.dim_n, theta0.len())?;
    if t_span.0 != cfg.t0() {
        return Err(Error::InvalidArgument(format!(
            "simulation must start at the schedule's t0 = {}, got {}",
            cfg.t0(),
            t_span.0
        )));
    }
    let clock = Instant::now();
    let sys = EsLoop {
        ctrl: &ctrl,
        cost: cost.as_ref(),
    };
    let raw = integrate(&sys, theta0, t_span, policy, sample_every)?;

    let mut y = Vec::with_capacity(raw.times.len());
    let mut theta_star = Vec::with_capacity(raw.times.len());
    let mut y_star = Vec::with_capacity(raw.times.len());
    let mut err_norm = Vec::with_capacity(raw.times.len());
    let mut inst_freq = Vec::with_capacity(raw.times.len());
    for (t, theta) in raw.times.iter().zip(&raw.states) {
        let star = cost.optimizer(*t);
        y.push(cost.value(theta, *t));
        y_star.push(cost.optimum_value(*t));
        err_norm.push(error_norm(theta, &star));
        theta_star.push(star);
        inst_freq.push(ctrl.instantaneous_frequencies(*t)?);
    }

    Ok(Trajectory {
        times: raw.times,
        theta: raw.states,
        y,
        theta_star,
        y_star,
        err_norm,
        inst_freq,
        meta: RunMeta {
            label: format!("es:{}", cost.name()),
            config_hash: None,
            policy: *policy,
            sample_every,
            stats: raw.stats,
            wall_clock_s: clock.elapsed().as_secs_f64(),
        },
    })
}

struct AveragedOde<'a>(&'a AveragedSystem);

impl OdeSystem for AveragedOde<'_> {
    fn dim(&self) -> usize {
        self.0.cfg.dim_n
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        dx.copy_from_slice(&averaged_rhs(self.0, x, t)?);
        Ok(())
    }
}

/// Integrates the averaged system in its own clock; states are `theta_f_bar`.
pub fn run_averaged(
    sys: &AveragedSystem,
    theta_f0: &[f64],
    t_span: (f64, f64),
    policy: &StepPolicy,
    sample_every: f64,
) -> Result<RawRecord> {
    integrate(&AveragedOde(sys), theta_f0, t_span, policy, sample_every)
}

/// Minimum rise of a strict local maximum over both neighbours.
pub const PEAK_PROMINENCE: f64 = 1e-12;

/// Strict local maxima of `values` with `t` inside `window`.
pub fn envelope_peaks(times: &[f64], values: &[f64], window: (f64, f64)) -> Vec<(f64, f64)> {
    (1..values.len().saturating_sub(1))
        .filter(|&k| times[k] >= window.0 && times[k] <= window.1)
        .filter(|&k| {
            values[k] - values[k - 1] >= PEAK_PROMINENCE
                && values[k] - values[k + 1] >= PEAK_PROMINENCE
        })
        .map(|k| (times[k], values[k]))
        .collect()
}

/// Least-squares slope of `ln(peak)` against time, negated.
pub fn fit_decay_rate_series(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    check_dim("values", times.len(), values.len())?;
    if !(window.1 > window.0) {
        return Err(Error::InvalidArgument(format!(
            "empty fit window [{}, {}]",
            window.0, window.1
        )));
    }
    let inside: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(_, v)| *v)
        .collect();
    let (lo, hi) = inside
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if inside.len() >= 2 && hi - lo <= PEAK_PROMINENCE * hi.abs().max(1.0) {
        // flat envelope
        return Ok(0.0);
    }

    let peaks = envelope_peaks(times, values, window);
    if peaks.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "{} envelope maxima in [{}, {}], need at least 5",
            peaks.len(),
            window.0,
            window.1
        )));
    }
    if peaks.iter().any(|(_, v)| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(
            "envelope maxima must be positive".into(),
        ));
    }
    let n = peaks.len() as f64;
    let mean_t = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_l = peaks.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (num, den) = peaks.iter().fold((0.0, 0.0), |(num, den), (t, v)| {
        (
            num + (t - mean_t) * (v.ln() - mean_l),
            den + (t - mean_t) * (t - mean_t),
        )
    });
    Ok(-num / den)
}

pub fn fit_decay_rate(traj: &Trajectory, window: (f64, f64)) -> Result<f64> {
    if traj.is_empty() || window.0 < traj.times[0] || window.1 > *traj.times.last().unwrap() {
        return Err(Error::InvalidArgument(format!(
            "fit window [{}, {}] is outside the trajectory",
            window.0, window.1
        )));
    }
    fit_decay_rate_series(&traj.times, &traj.err_norm, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub omega: f64,
    pub rms: f64,
}

/// For each base frequency, runs the full loop and the averaged system from
/// the matched initial condition and returns the RMS over sample times of
/// `|base(t) (theta - theta*) - theta_f_bar|`. Runs execute in parallel.
pub fn compare_full_vs_averaged(
    cfg: &ControllerConfig,
    cost: &CostFunction,
    theta0: &[f64],
    t_span: (f64, f64),
    omega_list: &[f64],
    policy: &StepPolicy,
    sample_every: f64,
) -> Result<Vec<Deviation>> {
    if omega_list.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two frequencies".into(),
        ));
    }
    if omega_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "frequencies must be increasing".into(),
        ));
    }
    omega_list
        .par_iter()
        .map(|&omega| {
            let mut cfg = cfg.clone();
            cfg.omega = omega;
            let sys = AveragedSystem::new(cfg.clone(), cost.clone(), Clock::Original)?;
            let full = run_es(&cfg, cost, theta0, t_span, policy, sample_every)?;
            let sched = &cfg.schedule;
            let err0: Vec<f64> = theta0
                .iter()
                .zip(cost.optimizer(t_span.0))
                .map(|(a, b)| a - b)
                .collect();
            let theta_f0 = transform_state(sched, &err0, t_span.0, Direction::Forward)?;
            let avg = run_averaged(&sys, &theta_f0, t_span, policy, sample_every)?;

            let sum: f64 = full
                .times
                .iter()
                .zip(&full.theta)
                .zip(&full.theta_star)
                .zip(&avg.states)
                .map(|(((t, theta), star), bar)| {
                    let err: Vec<f64> = theta.iter().zip(star).map(|(a, b)| a - b).collect();
                    let full_f = transform_state(sched, &err, *t, Direction::Forward)?;
                    let diff: Vec<f64> = full_f.iter().zip(bar).map(|(a, b)| a - b).collect();
                    Ok(numeric::norm(&diff).powi(2))
                })
                .sum::<Result<f64>>()?;
            Ok(Deviation {
                omega,
                rms: (sum / full.len() as f64).sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::ThresholdForm;
    use crate::cost_models::fixture;
    use crate::schedules::ScheduleParams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rk4_decay_pin() {
        let sys = VectorField::new(1, |_t, x: &[f64]| vec![-x[0]]);
        let rec = integrate(
            &sys,
            &[1.0],
            (0.0, 1.0),
            &StepPolicy::Fixed { dt: 1e-3 },
            0.5,
        )
        .unwrap();
        assert_eq!(rec.times, vec![0.0, 0.5, 1.0]);
        assert_relative_eq!(rec.states[2][0], (-1.0f64).exp(), epsilon = 1e-9);
        assert_relative_eq!(rec.states[2][0], 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn zero_field_is_constant() {
        let sys = VectorField::new(2, |_t, _x: &[f64]| vec![0.0, 0.0]);
        let rec = integrate(&sys, &[1.5, -2.0], (0.0, 3.0), &StepPolicy::default(), 0.25).unwrap();
        assert!(rec.states.iter().all(|s| s == &vec![1.5, -2.0]));
        assert_eq!(rec.times.len(), 13);
    }

    #[test]
    fn adaptive_step_respects_frequency() {
        let w = 1e4;
        let sys = VectorField::with_frequency(
            1,
            move |t, _x: &[f64]| vec![(w * t).cos() * w.sqrt()],
            move |_| w,
        );
        let policy = StepPolicy::FrequencyAdaptive {
            steps_per_period: 20,
            dt_max: 1e-2,
            dt_min: 1e-9,
        };
        let rec = integrate(&sys, &[0.0], (0.0, 0.05), &policy, 0.01).unwrap();
        assert!(rec.stats.max_dt <= 2.0 * PI / (20.0 * w) * (1.0 + 1e-12));
        assert!(rec.stats.max_phase_advance <= policy.phase_budget().unwrap() * (1.0 + 1e-12));
        // x(t) = sin(w t) / sqrt(w)
        assert_relative_eq!(
            rec.states[5][0],
            (w * 0.05).sin() / w.sqrt(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn step_underflow_and_divergence() {
        let fast = VectorField::with_frequency(1, |_t, _x: &[f64]| vec![0.0], |_| 1e12);
        let err = integrate(&fast, &[0.0], (0.0, 1.0), &StepPolicy::default(), 0.1).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }));

        let blowup = VectorField::new(1, |_t, x: &[f64]| vec![x[0] * x[0]]);
        let err = integrate(
            &blowup,
            &[1.0],
            (0.0, 2.0),
            &StepPolicy::Fixed { dt: 1e-3 },
            0.1,
        )
        .unwrap_err();
        match err {
            Error::Divergence { last_valid_t } => {
                assert!(last_valid_t > 0.9 && last_valid_t < 1.1, "{last_valid_t}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_policies_are_rejected() {
        let p = StepPolicy::FrequencyAdaptive {
            steps_per_period: 10,
            dt_max: 1e-2,
            dt_min: 1e-8,
        };
        assert!(p.validate().is_err());
        let p = StepPolicy::FrequencyAdaptive {
            steps_per_period: 40,
            dt_max: 1e-8,
            dt_min: 1e-2,
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn decay_fit_on_synthetic_envelopes() {
        let times: Vec<f64> = (0..=60_000).map(|k| k as f64 * 1e-3).collect();
        for lambda in [0.05, 0.1, 0.5] {
            let v: Vec<f64> = times
                .iter()
                .map(|t| (-lambda * t).exp() * t.cos().abs())
                .collect();
            let fit = fit_decay_rate_series(&times, &v, (5.0, 55.0)).unwrap();
            assert!((fit - lambda).abs() <= 0.01 * lambda, "{lambda}: {fit}");
        }
        let flat = vec![0.3; times.len()];
        assert_eq!(
            fit_decay_rate_series(&times, &flat, (5.0, 55.0)).unwrap(),
            0.0
        );
        let few: Vec<f64> = times.iter().map(|t| (0.1 * t).sin()).collect();
        assert!(matches!(
            fit_decay_rate_series(&times, &few, (0.0, 60.0)),
            Err(Error::InsufficientData(_))
        ));
    }

    fn constant_case() -> (ControllerConfig, CostFunction) {
        let cfg = ControllerConfig {
            dim_n: 2,
            omega: 20.0,
            omega_hat: vec![1.0, 1.3],
            alpha: vec![0.5, 0.5],
            k: vec![6.0, 6.0],
            schedule: ScheduleParams::asymptotic(1.0, 2.0, 1.0, 0.0).unwrap(),
            threshold_form: ThresholdForm::Product,
        };
        (cfg, fixture("quadratic_constant", 2).unwrap())
    }

    #[test]
    fn trajectory_columns_are_consistent() {
        let (cfg, cost) = constant_case();
        let traj = run_es(
            &cfg,
            &cost,
            &[0.8, -0.6],
            (0.0, 2.0),
            &StepPolicy::default(),
            0.05,
        )
        .unwrap();
        assert_eq!(traj.len(), 41);
        for k in 0..traj.len() {
            assert_eq!(
                traj.err_norm[k].to_bits(),
                error_norm(&traj.theta[k], &traj.theta_star[k]).to_bits()
            );
            assert_eq!(traj.y[k], cost.value(&traj.theta[k], traj.times[k]));
            assert_eq!(traj.inst_freq[k].len(), 2);
        }
        assert!(traj.meta.stats.max_phase_advance <= 2.0 * PI / 40.0 * (1.0 + 1e-12));
    }

    #[test]
    fn run_must_start_at_t0() {
        let (cfg, cost) = constant_case();
        assert!(run_es(
            &cfg,
            &cost,
            &[0.8, -0.6],
            (1.0, 2.0),
            &StepPolicy::default(),
            0.05
        )
        .is_err());
        assert!(run_es(
            &cfg,
            &cost,
            &[0.8],
            (0.0, 2.0),
            &StepPolicy::default(),
            0.05
        )
        .is_err());
    }

    #[test]
    fn constant_optimum_error_shrinks() {
        let (cfg, cost) = constant_case();
        let traj = run_es(
            &cfg,
            &cost,
            &[0.8, -0.6],
            (0.0, 30.0),
            &StepPolicy::default(),
            0.01,
        )
        .unwrap();
        assert!(traj.err_norm[3000] < traj.err_norm[500]);
    }

    #[test]
    fn start_at_optimum_stays_near_it() {
        let (cfg, cost) = constant_case();
        let traj = run_es(
            &cfg,
            &cost,
            &[0.0, 0.0],
            (0.0, 10.0),
            &StepPolicy::default(),
            0.01,
        )
        .unwrap();
        let worst = traj.err_norm.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 0.2, "{worst}");
    }

    #[test]
    fn sweep_is_deterministic_and_shrinks_with_omega() {
        let (cfg, cost) = constant_case();
        let same = compare_full_vs_averaged(
            &cfg,
            &cost,
            &[0.8, -0.6],
            (0.0, 3.0),
            &[20.0, 20.0],
            &StepPolicy::default(),
            0.01,
        )
        .unwrap();
        assert_eq!(same[0].rms.to_bits(), same[1].rms.to_bits());

        let at_opt = compare_full_vs_averaged(
            &cfg,
            &cost,
            &[0.0, 0.0],
            (0.0, 10.0),
            &[100.0, 1000.0],
            &StepPolicy::default(),
            0.01,
        )
        .unwrap();
        assert!(at_opt[1].rms < 0.05, "{:?}", at_opt);
        assert!(compare_full_vs_averaged(
            &cfg,
            &cost,
            &[0.0, 0.0],
            (0.0, 1.0),
            &[10.0],
            &StepPolicy::default(),
            0.01
        )
        .is_err());
        assert!(compare_full_vs_averaged(
            &cfg,
            &cost,
            &[0.0, 0.0],
            (0.0, 1.0),
            &[10.0, 5.0],
            &StepPolicy::default(),
            0.01
        )
        .is_err());
    }

    #[test]
    fn averaged_equilibrium_stays_put() {
        let (cfg, cost) = constant_case();
        let sys = AveragedSystem::new(cfg, cost, Clock::Original).unwrap();
        let rec = run_averaged(&sys, &[0.0, 0.0], (0.0, 5.0), &StepPolicy::default(), 0.5).unwrap();
        assert!(rec.states.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn adaptive_steps_stay_within_phase_budget(
            w0 in 1.0f64..1e3,
            growth in 0.0f64..2.0,
            spp in 20u32..100,
        ) {
            let sys = VectorField::with_frequency(
                1,
                move |t, _x: &[f64]| vec![(w0 * t * (1.0 + growth * t)).cos()],
                move |t| w0 * (1.0 + 2.0 * growth * t),
            );
            let policy = StepPolicy::FrequencyAdaptive { steps_per_period: spp, dt_max: 1e-2, dt_min: 1e-10 };
            let rec = integrate(&sys, &[0.0], (0.0, 2.0), &policy, 0.1).unwrap();
            prop_assert!(rec.stats.max_phase_advance <= policy.phase_budget().unwrap() * (1.0 + 1e-12));
            prop_assert_eq!(rec.times.len(), 21);
        }
    }
}
