//! Growing gains and phase warps for the two ES laws.
//!
//! | component | asymptotic                     | exponential            |
//! |-----------|--------------------------------|------------------------|
//! | base      | `(1 + beta (t - t0))^(1/r)`    | `exp(lambda (t - t0))` |
//! | nu        | `base^m`                       | `base^p`               |
//! | eta       | `t0 + base^(r+2) - 1`          | `t0 + base^2 - 1`      |
//! | phi_gain  | `base^2`                       | `base^2`               |
//!
//! `eta` doubles as the time dilation used in the averaging analysis, and
//! [`contract_time`] is its exact inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values above this raise [`Error::Overflow`] rather than propagating infinities.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum Growth {
    Asymptotic { beta: f64, r: f64, m: f64 },
    Exponential { lambda: f64, p: f64 },
}

impl Growth {
    /// Exponent applied to `base` for the amplitude gain (`m` or `p`).
    pub fn amplitude_exponent(&self) -> f64 {
        match *self {
            Growth::Asymptotic { m, .. } => m,
            Growth::Exponential { p, .. } => p,
        }
    }

    pub fn is_asymptotic(&self) -> bool {
        matches!(self, Growth::Asymptotic { .. })
    }
}

/// Saturation limits. `warp_rate_max` bounds `d eta / dt`; an instantaneous
/// frequency cap in rad/s divides by the largest channel frequency to get it
/// (see `ControllerConfig::with_frequency_cap`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warp_rate_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct ScheduleParams {
    #[serde(flatten)]
    pub growth: Growth,
    #[serde(default)]
    pub t0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caps: Option<Caps>,
}

// Flattened internally tagged enums cannot reject unknown keys, so parsing
// goes through this fully spelled-out form.
#[derive(Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
enum RawSchedule {
    Asymptotic {
        beta: f64,
        r: f64,
        m: f64,
        #[serde(default)]
        t0: f64,
        #[serde(default)]
        caps: Option<Caps>,
    },
    Exponential {
        lambda: f64,
        p: f64,
        #[serde(default)]
        t0: f64,
        #[serde(default)]
        caps: Option<Caps>,
    },
}

impl TryFrom<RawSchedule> for ScheduleParams {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        match raw {
            RawSchedule::Asymptotic {
                beta,
                r,
                m,
                t0,
                caps,
            } => Self::new(Growth::Asymptotic { beta, r, m }, t0, caps),
            RawSchedule::Exponential {
                lambda,
                p,
                t0,
                caps,
            } => Self::new(Growth::Exponential { lambda, p }, t0, caps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSample {
    pub nu: f64,
    pub eta: f64,
    pub deta_dt: f64,
    pub phi_gain: f64,
    pub base: f64,
    pub saturated: bool,
}

impl ScheduleParams {
    pub fn asymptotic(beta: f64, r: f64, m: f64, t0: f64) -> Result<Self> {
        Self::new(Growth::Asymptotic { beta, r, m }, t0, None)
    }

    pub fn exponential(lambda: f64, p: f64, t0: f64) -> Result<Self> {
        Self::new(Growth::Exponential { lambda, p }, t0, None)
    }

    pub fn new(growth: Growth, t0: f64, caps: Option<Caps>) -> Result<Self> {
        let params = Self { growth, t0, caps };
        params.validate()?;
        Ok(params)
    }

    pub fn with_caps(mut self, caps: Caps) -> Result<Self> {
        self.caps = Some(caps);
        self.validate()?;
        Ok(self)
    }

    /// Structural checks. Exponent ranges (`m`, `p`) are a property of the
    /// gain-condition report, not of the schedule.
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 >= 0.0) || !self.t0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t0 must be >= 0, got {}",
                self.t0
            )));
        }
        match self.growth {
            Growth::Asymptotic { beta, r, m } => {
                if !(beta > 0.0) || !(r > 0.0) || !m.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "asymptotic schedule needs beta > 0 and r > 0 (beta = {beta}, r = {r}, m = {m})"
                    )));
                }
            }
            Growth::Exponential { lambda, p } => {
                if !(lambda > 0.0) || !p.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "exponential schedule needs lambda > 0 (lambda = {lambda}, p = {p})"
                    )));
                }
            }
        }
        if let Some(caps) = self.caps {
            let initial = [
                ("nu_max", caps.nu_max, 1.0),
                ("phi_max", caps.phi_max, 1.0),
                ("warp_rate_max", caps.warp_rate_max, self.warp_coefficient()),
            ];
            for (name, cap, at_t0) in initial {
                if let Some(c) = cap {
                    if !(c > at_t0) {
                        return Err(Error::InvalidArgument(format!(
                            "{name} = {c} must exceed its initial value {at_t0}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `d eta / dt = warp_coefficient * base^2`.
    fn warp_coefficient(&self) -> f64 {
        match self.growth {
            Growth::Asymptotic { beta, r, .. } => (r + 2.0) / r * beta,
            Growth::Exponential { lambda, .. } => 2.0 * lambda,
        }
    }

    /// `ln base(t)`, finite for all `t >= t0`.
    fn log_base(&self, t: f64) -> f64 {
        let dt = t - self.t0;
        match self.growth {
            Growth::Asymptotic { beta, r, .. } => (beta * dt).ln_1p() / r,
            Growth::Exponential { lambda, .. } => lambda * dt,
        }
    }

    fn time_at_log_base(&self, log_base: f64) -> f64 {
        match self.growth {
            Growth::Asymptotic { beta, r, .. } => self.t0 + (r * log_base).exp_m1() / beta,
            Growth::Exponential { lambda, .. } => self.t0 + log_base / lambda,
        }
    }

    /// Power of `base` that gives `eta - t0 + 1`.
    fn warp_power(&self) -> f64 {
        match self.growth {
            Growth::Asymptotic { r, .. } => r + 2.0,
            Growth::Exponential { .. } => 2.0,
        }
    }

    pub fn base(&self, t: f64) -> f64 {
        self.log_base(t).exp()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= self.t0) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} precedes t0 = {}",
                self.t0
            )));
        }
        Ok(())
    }

    fn require_uncapped(&self, op: &str) -> Result<()> {
        if self.caps.is_some() {
            return Err(Error::Unsupported(format!(
                "{op} assumes unsaturated growth; remove the schedule caps"
            )));
        }
        Ok(())
    }

    fn dilate_unchecked(&self, t: f64) -> f64 {
        self.t0 + (self.warp_power() * self.log_base(t)).exp_m1()
    }

    /// `d tau / dt` written in terms of the dilated time.
    pub fn dtau_dt_at(&self, tau: f64) -> f64 {
        let s = tau - self.t0 + 1.0;
        match self.growth {
            Growth::Asymptotic { beta, r, .. } => (r + 2.0) / r * beta * s.powf(2.0 / (r + 2.0)),
            Growth::Exponential { lambda, .. } => 2.0 * lambda * s,
        }
    }
}

pub fn eval_schedule(sched: &ScheduleParams, t: f64) -> Result<ScheduleSample> {
    sched.check_time(t)?;
    let log_base = sched.log_base(t);
    let base = log_base.exp();
    let exponent = sched.growth.amplitude_exponent();
    let coef = sched.warp_coefficient();

    let mut nu = (exponent * log_base).exp();
    let mut phi_gain = (2.0 * log_base).exp();
    let mut deta_dt = coef * phi_gain;
    let mut eta = sched.dilate_unchecked(t);
    let mut saturated = false;

    if let Some(caps) = sched.caps {
        if let Some(cap) = caps.nu_max {
            if nu >= cap {
                nu = cap;
                saturated = true;
            }
        }
        if let Some(cap) = caps.phi_max {
            if phi_gain >= cap {
                phi_gain = cap;
                saturated = true;
            }
        }
        if let Some(cap) = caps.warp_rate_max {
            if deta_dt >= cap {
                // phase keeps growing linearly from the freeze instant
                let log_base_freeze = 0.5 * (cap / coef).ln();
                let t_freeze = sched.time_at_log_base(log_base_freeze);
                let eta_freeze = sched.t0 + (sched.warp_power() * log_base_freeze).exp_m1();
                eta = eta_freeze + cap * (t - t_freeze);
                deta_dt = cap;
                saturated = true;
            }
        }
    }

    for (component, value) in [
        ("base", base),
        ("nu", nu),
        ("eta", eta),
        ("deta_dt", deta_dt),
        ("phi_gain", phi_gain),
    ] {
        if !(value <= OVERFLOW_GUARD) {
            return Err(Error::Overflow {
                component,
                t,
                value,
            });
        }
    }

    Ok(ScheduleSample {
        nu,
        eta,
        deta_dt,
        phi_gain,
        base,
        saturated,
    })
}

/// Time dilation `tau(t)`; equals the schedule's `eta` for uncapped schedules.
pub fn dilate_time(sched: &ScheduleParams, t: f64) -> Result<f64> {
    sched.require_uncapped("time dilation")?;
    sched.check_time(t)?;
    Ok(sched.dilate_unchecked(t))
}

/// Inverse of [`dilate_time`].
pub fn contract_time(sched: &ScheduleParams, tau: f64) -> Result<f64> {
    sched.require_uncapped("time contraction")?;
    if !(tau >= sched.t0) {
        return Err(Error::InvalidArgument(format!(
            "tau = {tau} precedes t0 = {}",
            sched.t0
        )));
    }
    let log_base = (tau - sched.t0).ln_1p() / sched.warp_power();
    Ok(sched.time_at_log_base(log_base))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn asym() -> ScheduleParams {
        ScheduleParams::asymptotic(1.0, 2.0, 1.0, 0.0).unwrap()
    }

    fn expo() -> ScheduleParams {
        ScheduleParams::exponential(0.1, 0.51, 0.0).unwrap()
    }

    #[test]
    fn asymptotic_hand_values() {
        let s = eval_schedule(&asym(), 3.0).unwrap();
        assert_relative_eq!(s.base, 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.nu, 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.eta, 15.0, epsilon = 1e-13);
        assert_relative_eq!(s.phi_gain, 4.0, epsilon = 1e-14);
        assert_relative_eq!(s.deta_dt, 2.0 * 4.0, epsilon = 1e-13);
        assert!(!s.saturated);
    }

    #[test]
    fn all_components_are_one_at_t0() {
        for sched in [
            asym(),
            expo(),
            ScheduleParams::asymptotic(0.3, 1.5, -0.5, 4.0).unwrap(),
            ScheduleParams::exponential(0.7, 0.0, 2.5).unwrap(),
        ] {
            let s = eval_schedule(&sched, sched.t0).unwrap();
            assert_eq!((s.base, s.nu, s.phi_gain), (1.0, 1.0, 1.0));
            assert_eq!(s.eta, sched.t0);
        }
    }

    #[test]
    fn exponential_hand_values_at_twenty() {
        let s = eval_schedule(&expo(), 20.0).unwrap();
        assert_relative_eq!(s.phi_gain, 4f64.exp(), max_relative = 1e-14);
        assert_relative_eq!(s.phi_gain, 54.598150033144236, max_relative = 1e-14);
        assert_relative_eq!(s.deta_dt, 10.919630006628847, max_relative = 1e-14);
        assert_relative_eq!(s.nu, 1.02f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn dilation_hand_values() {
        assert_relative_eq!(dilate_time(&asym(), 3.0).unwrap(), 15.0, epsilon = 1e-13);
        assert_relative_eq!(
            dilate_time(&expo(), 10.0).unwrap(),
            6.38905609893065,
            epsilon = 1e-12
        );
        assert_relative_eq!(contract_time(&asym(), 15.0).unwrap(), 3.0, epsilon = 1e-13);
        assert_relative_eq!(
            contract_time(&expo(), 2f64.exp() - 1.0).unwrap(),
            10.0,
            epsilon = 1e-12
        );
        for sched in [asym(), expo()] {
            assert_eq!(dilate_time(&sched, 0.0).unwrap(), 0.0);
            assert_eq!(contract_time(&sched, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn times_before_t0_are_rejected() {
        let sched = ScheduleParams::exponential(0.1, 0.5, 1.0).unwrap();
        assert!(matches!(
            eval_schedule(&sched, 0.5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            contract_time(&sched, 0.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn capped_schedules_refuse_transforms() {
        let sched = expo()
            .with_caps(Caps {
                phi_max: Some(10.0),
                ..Caps::default()
            })
            .unwrap();
        assert!(matches!(
            dilate_time(&sched, 1.0),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            contract_time(&sched, 1.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn caps_below_initial_values_are_rejected() {
        let caps = Caps {
            warp_rate_max: Some(0.1),
            ..Caps::default()
        };
        // d eta/dt starts at 2 lambda = 0.2
        assert!(expo().with_caps(caps).is_err());
    }

    #[test]
    fn saturation_freezes_and_keeps_phase_continuous() {
        let cap = 1.0;
        let sched = expo()
            .with_caps(Caps {
                nu_max: Some(1.5),
                phi_max: Some(4.0),
                warp_rate_max: Some(cap),
            })
            .unwrap();
        // d eta/dt = 0.2 e^{0.2 t} hits 1 at t = 5 ln 5
        let t_freeze = 5.0 * 5f64.ln();
        let before = eval_schedule(&sched, t_freeze - 1e-7).unwrap();
        let after = eval_schedule(&sched, t_freeze + 1e-7).unwrap();
        assert!((after.eta - before.eta).abs() < 1e-6);
        let late = eval_schedule(&sched, 100.0).unwrap();
        assert!(late.saturated);
        assert_eq!(late.nu, 1.5);
        assert_eq!(late.phi_gain, 4.0);
        assert_eq!(late.deta_dt, cap);
        assert_relative_eq!(
            late.eta - after.eta,
            cap * (100.0 - t_freeze - 1e-7),
            max_relative = 1e-9
        );
    }

    #[test]
    fn overflow_names_first_component() {
        let sched = ScheduleParams::exponential(1.0, 0.5, 0.0).unwrap();
        // eta = e^{2t} passes the guard long before base = e^{t}
        match eval_schedule(&sched, 14.0) {
            Err(Error::Overflow { component, .. }) => assert_eq!(component, "eta"),
            other => panic!("expected overflow, got {other:?}"),
        }
        match eval_schedule(&sched, 40.0) {
            Err(Error::Overflow { component, .. }) => assert_eq!(component, "base"),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    fn schedules() -> impl Strategy<Value = ScheduleParams> {
        prop_oneof![
            (0.1f64..2.0, 0.5f64..4.0, 0.0f64..1.0, 0.0f64..5.0)
                .prop_map(|(b, r, m, t0)| ScheduleParams::asymptotic(b, r, m, t0).unwrap()),
            (0.02f64..0.3, 0.0f64..1.0, 0.0f64..5.0)
                .prop_map(|(l, p, t0)| ScheduleParams::exponential(l, p, t0).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn eta_is_dilation_and_components_grow(sched in schedules(), a in 0.0f64..30.0, d in 0.0f64..10.0) {
            let t = sched.t0 + a;
            let s1 = eval_schedule(&sched, t).unwrap();
            let s2 = eval_schedule(&sched, t + d).unwrap();
            prop_assert_eq!(s1.eta, dilate_time(&sched, t).unwrap());
            prop_assert!(s2.base >= s1.base && s2.nu >= s1.nu && s2.eta >= s1.eta);
            prop_assert!(s2.phi_gain >= s1.phi_gain && s2.deta_dt >= s1.deta_dt);
        }

        #[test]
        fn contraction_inverts_dilation(sched in schedules(), a in 0.0f64..50.0) {
            let t = sched.t0 + a;
            let back = contract_time(&sched, dilate_time(&sched, t).unwrap()).unwrap();
            prop_assert!((back - t).abs() <= 1e-9 * t.abs().max(1.0));
        }
    }
}
