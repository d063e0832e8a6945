//! Lie-bracket averaging of the ES loops.
//!
//! After the state transform `theta_f = base(t) (theta - theta*)` and the
//! dilation `tau = eta(t)`, each channel of the loop becomes a pair of
//! control-affine fields `b_c`, `b_s` driven by `sqrt(omega_i) cos(omega_i tau)`
//! and `-sqrt(omega_i) sin(omega_i tau)`. Averaging keeps the drift and
//! `-1/2 [b_c, b_s]` per channel. Mapped back to the original clock:
//!
//! `d theta_f/dt = -base dtheta*/dt + (d ln base/dt) theta_f
//!                 - nu^2 base^2 phi / (d eta/dt) sum_i (k_i alpha_i / 2) e_i dJ_f/dtheta_f,i`
//!
//! with `J_f(theta_f, t) = J(theta_f / base + theta*(t), t)`. For the
//! asymptotic law the gradient coefficient is `xi^(2m+2) r / ((r+2) beta)`;
//! for the exponential law it is `phi^(2p+2) / (2 lambda)`.

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerConfig;
use crate::cost_models::{path_derivative, CostFunction};
use crate::error::{check_dim, Error, Result};
use crate::numeric::{self, GRADIENT_STEP};
use crate::schedules::{contract_time, eval_schedule, Growth, ScheduleParams};
use crate::simulate::rk4_step;

/// `[f, g](x, t) = (dg/dx) f - (df/dx) g`, Jacobians by central differences.
pub fn lie_bracket<F, G>(f: F, g: G, x: &[f64], t: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Vec<f64>,
    G: Fn(&[f64], f64) -> Vec<f64>,
{
    let fx = f(x, t);
    let gx = g(x, t);
    check_dim("f(x)", x.len(), fx.len())?;
    check_dim("g(x)", x.len(), gx.len())?;
    let jf = numeric::jacobian(|z| f(z, t), x, GRADIENT_STEP);
    let jg = numeric::jacobian(|z| g(z, t), x, GRADIENT_STEP);
    let out: Vec<f64> = (0..x.len())
        .map(|r| numeric::dot(&jg[r], &fx) - numeric::dot(&jf[r], &gx))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Lie bracket".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

/// Forward: `theta_f = base(t) theta_err`; inverse divides by `base(t)`.
pub fn transform_state(
    sched: &ScheduleParams,
    theta_err: &[f64],
    t: f64,
    direction: Direction,
) -> Result<Vec<f64>> {
    if sched.caps.is_some() {
        return Err(Error::Unsupported(
            "state transform assumes unsaturated growth; remove the schedule caps".into(),
        ));
    }
    if !(t >= sched.t0) {
        return Err(Error::InvalidArgument(format!(
            "t = {t} precedes t0 = {}",
            sched.t0
        )));
    }
    let base = sched.base(t);
    Ok(match direction {
        Direction::Forward => theta_err.iter().map(|v| v * base).collect(),
        Direction::Inverse => theta_err.iter().map(|v| v / base).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    #[default]
    Original,
    Dilated,
}

/// The averaged comparison system of one ES loop.
#[derive(Debug, Clone)]
pub struct AveragedSystem {
    pub cfg: ControllerConfig,
    pub cost: CostFunction,
    pub clock: Clock,
}

impl AveragedSystem {
    pub fn new(cfg: ControllerConfig, cost: CostFunction, clock: Clock) -> Result<Self> {
        cfg.validate()?;
        if cfg.schedule.caps.is_some() {
            return Err(Error::Unsupported(
                "averaged analysis assumes unsaturated growth; remove the schedule caps".into(),
            ));
        }
        check_dim("cost input", cfg.dim_n, cost.dim())?;
        Ok(Self { cfg, cost, clock })
    }

    fn rhs_original(&self, theta_f: &[f64], t: f64) -> Result<Vec<f64>> {
        let sched = &self.cfg.schedule;
        let s = eval_schedule(sched, t)?;
        let base = s.base;
        let growth_rate = match sched.growth {
            Growth::Asymptotic { beta, r, .. } => beta / (r * base.powf(r)),
            Growth::Exponential { lambda, .. } => lambda,
        };
        let gain = s.nu * s.nu * base * base * s.phi_gain / s.deta_dt;

        let star = self.cost.optimizer(t);
        let star_rate = path_derivative(self.cost.as_ref(), t, GRADIENT_STEP, 1);
        let transformed_cost = |z: &[f64]| {
            let theta: Vec<f64> = z.iter().zip(&star).map(|(v, c)| v / base + c).collect();
            self.cost.value(&theta, t)
        };
        let grad = numeric::gradient(transformed_cost, theta_f, GRADIENT_STEP);

        let out: Vec<f64> = (0..theta_f.len())
            .map(|i| {
                -base * star_rate[i] + growth_rate * theta_f[i]
                    - gain * 0.5 * self.cfg.k[i] * self.cfg.alpha[i] * grad[i]
            })
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("averaged right-hand side".into()));
        }
        Ok(out)
    }
}

/// Averaged right-hand side at `s`, which is `t` or `tau` depending on `sys.clock`.
pub fn averaged_rhs(sys: &AveragedSystem, theta_f_bar: &[f64], s: f64) -> Result<Vec<f64>> {
    check_dim("theta_f_bar", sys.cfg.dim_n, theta_f_bar.len())?;
    match sys.clock {
        Clock::Original => sys.rhs_original(theta_f_bar, s),
        Clock::Dilated => {
            let sched = &sys.cfg.schedule;
            let t = contract_time(sched, s)?;
            let rate = sched.dtau_dt_at(s);
            Ok(sys
                .rhs_original(theta_f_bar, t)?
                .into_iter()
                .map(|v| v / rate)
                .collect())
        }
    }
}

/// Parameters of the scalar comparison system
/// `dV/dt = -eps_a mu^m1 V + eps_b mu^m2`, `mu = 1 + beta (t - t0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaOneParams {
    pub eps_a: f64,
    pub eps_b: f64,
    pub m1: f64,
    pub m2: f64,
    pub beta: f64,
    pub t0: f64,
    pub v0: f64,
}

impl LemmaOneParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(self.m1 > self.m2) || !(self.m1 >= -1.0) {
            return Err(Error::InvalidArgument(format!(
                "need m1 > m2 and m1 >= -1 (m1 = {}, m2 = {})",
                self.m1, self.m2
            )));
        }
        if !(self.eps_a > self.beta * (self.m1 - self.m2)) {
            return Err(Error::InvalidArgument(format!(
                "eps_a = {} must exceed beta (m1 - m2) = {}",
                self.eps_a,
                self.beta * (self.m1 - self.m2)
            )));
        }
        if !(self.v0 >= 0.0) || !self.t0.is_finite() || !self.eps_b.is_finite() {
            return Err(Error::InvalidArgument(
                "v0 must be >= 0 and inputs finite".into(),
            ));
        }
        Ok(())
    }

    fn mu(&self, t: f64) -> f64 {
        1.0 + self.beta * (t - self.t0)
    }

    fn rhs(&self, t: f64, v: f64) -> f64 {
        let mu = self.mu(t);
        -self.eps_a * mu.powf(self.m1) * v + self.eps_b * mu.powf(self.m2)
    }

    /// Closed-form bound on `|V(t)|` obtained from the weighted Lyapunov
    /// function `U = (mu^(m1-m2) V)^2 / 2`.
    pub fn magnitude_bound(&self, t: f64) -> f64 {
        let mu = self.mu(t);
        let shift = self.m1 - self.m2;
        let eps_c = self.eps_a - self.beta * shift;
        let u0 = 0.5 * self.v0 * self.v0;
        let decay = if self.m1 > -1.0 {
            (-eps_c / ((self.m1 + 1.0) * self.beta) * (mu.powf(self.m1 + 1.0) - 1.0)).exp()
        } else {
            mu.powf(-eps_c / self.beta)
        };
        let u_bound = decay * u0 + self.eps_b * self.eps_b / (2.0 * eps_c * eps_c);
        (2.0 * u_bound).sqrt() / mu.powf(shift)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaOneTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub bounds: Vec<f64>,
}

/// Largest RK4 step used between grid points.
pub const LEMMA_ONE_MAX_STEP: f64 = 1e-3;

pub fn lemma1_trajectory(params: &LemmaOneParams, t_grid: &[f64]) -> Result<LemmaOneTrajectory> {
    params.validate()?;
    let first = *t_grid
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty time grid".into()))?;
    if first != params.t0 {
        return Err(Error::InvalidArgument(format!(
            "time grid must start at t0 = {}, starts at {first}",
            params.t0
        )));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "time grid must be strictly increasing".into(),
        ));
    }

    let mut values = Vec::with_capacity(t_grid.len());
    let mut state = [params.v0];
    let mut t = first;
    values.push(params.v0);
    let field = |s: f64, x: &[f64], dx: &mut [f64]| -> Result<()> {
        dx[0] = params.rhs(s, x[0]);
        Ok(())
    };
    for &target in &t_grid[1..] {
        let substeps = ((target - t) / LEMMA_ONE_MAX_STEP).ceil().max(1.0) as usize;
        let h = (target - t) / substeps as f64;
        let start = t;
        for k in 0..substeps {
            rk4_step(&field, start + k as f64 * h, &mut state, h)?;
        }
        t = target;
        values.push(state[0]);
    }
    let bounds = t_grid.iter().map(|&s| params.magnitude_bound(s)).collect();
    Ok(LemmaOneTrajectory {
        times: t_grid.to_vec(),
        values,
        bounds,
    })
}
