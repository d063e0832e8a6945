//! Time-varying cost maps `J(theta, zeta(t))` with known optimizer paths.
//!
//! Every model closes over its own time-varying parameters, so the hidden
//! signal `zeta(t)` never appears at runtime. The optimizer path is exposed
//! for error bookkeeping and for the analysis in [`crate::averaging`]; the
//! controllers only ever see the value returned by [`eval_cost`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numeric::{self, GRADIENT_STEP, HESSIAN_STEP};

pub trait CostModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// `J(theta, zeta(t))`. Callers guarantee `theta.len() == dim()`.
    fn value(&self, theta: &[f64], t: f64) -> f64;

    /// Reference optimizer `theta*(t)`.
    fn optimizer(&self, t: f64) -> Vec<f64>;

    fn optimum_value(&self, t: f64) -> f64 {
        self.value(&self.optimizer(t), t)
    }

    /// Per-axis `[lo, hi]` bounds of the compact set used by the assumption checks.
    fn domain_box(&self) -> Vec<(f64, f64)>;

    /// Analytic gradient, when the model knows one.
    fn gradient(&self, _theta: &[f64], _t: f64) -> Option<Vec<f64>> {
        None
    }

    /// True when `theta*` does not depend on time.
    fn stationary_optimizer(&self) -> bool {
        false
    }
}

pub type CostFunction = Arc<dyn CostModel>;

/// Measured output `y = J(theta, zeta(t))`.
pub fn eval_cost(cost: &dyn CostModel, theta: &[f64], t: f64) -> Result<f64> {
    check_dim("theta", cost.dim(), theta.len())?;
    Ok(cost.value(theta, t))
}

/// Analytic `(theta*(t), y*(t))`; verification only.
pub fn optimizer_ref(cost: &dyn CostModel, t: f64) -> (Vec<f64>, f64) {
    (cost.optimizer(t), cost.optimum_value(t))
}

/// The two-input quadratic map with an oscillating optimizer:
///
/// `J = 0.2 sin(0.5 t) + (theta_1 + 1 - 0.2 sin(0.7 t))^2 + (theta_2 - 1 - 0.3 cos(0.8 t))^2`
#[derive(Debug, Clone, Copy, Default)]
pub struct TimeVaryingQuadratic;

impl TimeVaryingQuadratic {
    fn offsets(t: f64) -> [f64; 2] {
        [-1.0 + 0.2 * (0.7 * t).sin(), 1.0 + 0.3 * (0.8 * t).cos()]
    }
}

impl CostModel for TimeVaryingQuadratic {
    fn name(&self) -> &str {
        "quadratic_tv_sec6"
    }

    fn dim(&self) -> usize {
        2
    }

    fn value(&self, theta: &[f64], t: f64) -> f64 {
        let c = Self::offsets(t);
        0.2 * (0.5 * t).sin() + (theta[0] - c[0]).powi(2) + (theta[1] - c[1]).powi(2)
    }

    fn optimizer(&self, t: f64) -> Vec<f64> {
        Self::offsets(t).to_vec()
    }

    fn optimum_value(&self, t: f64) -> f64 {
        0.2 * (0.5 * t).sin()
    }

    fn domain_box(&self) -> Vec<(f64, f64)> {
        vec![(-2.0, 0.0), (0.0, 2.0)]
    }

    fn gradient(&self, theta: &[f64], t: f64) -> Option<Vec<f64>> {
        let c = Self::offsets(t);
        Some(vec![2.0 * (theta[0] - c[0]), 2.0 * (theta[1] - c[1])])
    }
}

/// `J = sum_i a_i (theta_i - c_i)^2` with constant center and curvatures.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantQuadratic {
    name: String,
    center: Vec<f64>,
    curvature: Vec<f64>,
    half_width: f64,
}

impl ConstantQuadratic {
    /// Isotropic `|theta - c|^2`.
    pub fn isotropic(center: Vec<f64>) -> Self {
        let curvature = vec![1.0; center.len()];
        Self {
            name: "quadratic_constant".into(),
            center,
            curvature,
            half_width: 2.0,
        }
    }

    pub fn anisotropic(center: Vec<f64>, curvature: Vec<f64>) -> Result<Self> {
        check_dim("curvature", center.len(), curvature.len())?;
        if curvature.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidArgument(
                "curvatures must be strictly positive".into(),
            ));
        }
        Ok(Self {
            name: "quadratic_aniso".into(),
            center,
            curvature,
            half_width: 2.0,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl CostModel for ConstantQuadratic {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, theta: &[f64], _t: f64) -> f64 {
        theta
            .iter()
            .zip(&self.center)
            .zip(&self.curvature)
            .map(|((x, c), a)| a * (x - c) * (x - c))
            .sum()
    }

    fn optimizer(&self, _t: f64) -> Vec<f64> {
        self.center.clone()
    }

    fn optimum_value(&self, _t: f64) -> f64 {
        0.0
    }

    fn domain_box(&self) -> Vec<(f64, f64)> {
        self.center
            .iter()
            .map(|c| (c - self.half_width, c + self.half_width))
            .collect()
    }

    fn gradient(&self, theta: &[f64], _t: f64) -> Option<Vec<f64>> {
        Some(
            theta
                .iter()
                .zip(&self.center)
                .zip(&self.curvature)
                .map(|((x, c), a)| 2.0 * a * (x - c))
                .collect(),
        )
    }

    fn stationary_optimizer(&self) -> bool {
        true
    }
}

/// `J = -|theta|^2`; a negative fixture for the assumption checker.
#[derive(Debug, Clone, Copy)]
pub struct ConcaveQuadratic {
    pub dim: usize,
}

impl CostModel for ConcaveQuadratic {
    fn name(&self) -> &str {
        "concave"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64], _t: f64) -> f64 {
        -theta.iter().map(|x| x * x).sum::<f64>()
    }

    fn optimizer(&self, _t: f64) -> Vec<f64> {
        vec![0.0; self.dim]
    }

    fn domain_box(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); self.dim]
    }

    fn gradient(&self, theta: &[f64], _t: f64) -> Option<Vec<f64>> {
        Some(theta.iter().map(|x| -2.0 * x).collect())
    }

    fn stationary_optimizer(&self) -> bool {
        true
    }
}

pub const FIXTURE_NAMES: [&str; 4] = [
    "quadratic_tv_sec6",
    "quadratic_constant",
    "quadratic_aniso",
    "concave",
];

/// Built-in fixture registry.
///
/// `quadratic_constant` and `quadratic_aniso` are centered at the origin;
/// the anisotropic curvatures are `1, 2, 3, ...` along the axes.
pub fn fixture(name: &str, dim: usize) -> Result<CostFunction> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    match name {
        "quadratic_tv_sec6" => {
            check_dim("quadratic_tv_sec6 input", 2, dim)?;
            Ok(Arc::new(TimeVaryingQuadratic))
        }
        "quadratic_constant" => Ok(Arc::new(ConstantQuadratic::isotropic(vec![0.0; dim]))),
        "quadratic_aniso" => Ok(Arc::new(ConstantQuadratic::anisotropic(
            vec![0.0; dim],
            (1..=dim).map(|i| i as f64).collect(),
        )?)),
        "concave" => Ok(Arc::new(ConcaveQuadratic { dim })),
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub points_per_axis: usize,
    pub time_samples: usize,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self {
            points_per_axis: 11,
            time_samples: 21,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionCheck {
    /// `J(theta*) < J(theta)` away from the optimizer.
    Minimality,
    /// Gradient vanishes at the optimizer.
    Stationarity,
    /// `(theta - theta*)^T grad J > 0` away from the optimizer.
    StrongConvexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub theta: Vec<f64>,
    pub check: AssumptionCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub kappa1_hat: f64,
    pub kappa2_hat: f64,
    /// Sampled bound on `|theta*| + |d theta*/dt| + |d^2 theta*/dt^2|`.
    pub m_theta_hat: f64,
    /// Sampled bound on `|J| + |dJ/dt| + |d^2 J/(d theta dt)|`.
    pub m_j_hat: f64,
    pub violations: Vec<Violation>,
    pub samples: usize,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples within this distance of `theta*` are excluded from the `kappa1` ratio.
pub const EXCLUSION_RADIUS: f64 = 1e-6;
/// Tolerance on `|grad J(theta*)|`.
pub const GRADIENT_ZERO_TOL: f64 = 1e-6;

/// Estimates the strong-convexity and boundedness constants on a uniform
/// lattice over `cost.domain_box()` and `time_samples` instants in `t_range`.
pub fn verify_assumptions(
    cost: &dyn CostModel,
    t_range: (f64, f64),
    grid: SamplingGrid,
) -> Result<AssumptionReport> {
    if grid.points_per_axis < 10 || grid.time_samples < 20 {
        return Err(Error::InvalidArgument(format!(
            "sampling grid too coarse ({} points per axis, {} time samples; need >= 10 and >= 20)",
            grid.points_per_axis, grid.time_samples
        )));
    }
    if !(t_range.1 > t_range.0) {
        return Err(Error::InvalidArgument(format!(
            "empty time range [{}, {}]",
            t_range.0, t_range.1
        )));
    }
    let bounds = cost.domain_box();
    check_dim("domain box", cost.dim(), bounds.len())?;
    if bounds.iter().any(|(lo, hi)| !(hi > lo)) {
        return Err(Error::InvalidArgument("degenerate domain box".into()));
    }

    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&(lo, hi)| numeric::linspace(lo, hi, grid.points_per_axis))
        .collect();
    let lattice = cartesian(&axes);

    let mut kappa1 = f64::INFINITY;
    let mut kappa2: f64 = 0.0;
    let mut m_theta: f64 = 0.0;
    let mut m_j: f64 = 0.0;
    let mut violations = Vec::new();
    let mut samples = 0;

    for t in numeric::linspace(t_range.0, t_range.1, grid.time_samples) {
        let star = cost.optimizer(t);
        let y_star = cost.value(&star, t);

        let grad_star = numeric::gradient(|x| cost.value(x, t), &star, GRADIENT_STEP);
        if numeric::norm(&grad_star) > GRADIENT_ZERO_TOL {
            violations.push(Violation {
                t,
                theta: star.clone(),
                check: AssumptionCheck::Stationarity,
            });
        }

        let d1 = path_derivative(cost, t, GRADIENT_STEP, 1);
        let d2 = path_derivative(cost, t, HESSIAN_STEP, 2);
        m_theta = m_theta.max(numeric::norm(&star) + numeric::norm(&d1) + numeric::norm(&d2));

        for theta in &lattice {
            samples += 1;
            let diff: Vec<f64> = theta.iter().zip(&star).map(|(a, b)| a - b).collect();
            let dist = numeric::norm(&diff);
            let grad = numeric::gradient(|x| cost.value(x, t), theta, GRADIENT_STEP);
            let hess = numeric::hessian(|x| cost.value(x, t), theta, HESSIAN_STEP);
            kappa2 = kappa2.max(numeric::symmetric_spectral_norm(&hess));

            let y = cost.value(theta, t);
            let dj_dt = (cost.value(theta, t + GRADIENT_STEP)
                - cost.value(theta, t - GRADIENT_STEP))
                / (2.0 * GRADIENT_STEP);
            let grad_plus =
                numeric::gradient(|x| cost.value(x, t + HESSIAN_STEP), theta, GRADIENT_STEP);
            let grad_minus =
                numeric::gradient(|x| cost.value(x, t - HESSIAN_STEP), theta, GRADIENT_STEP);
            let mixed: Vec<f64> = grad_plus
                .iter()
                .zip(&grad_minus)
                .map(|(a, b)| (a - b) / (2.0 * HESSIAN_STEP))
                .collect();
            m_j = m_j.max(y.abs() + dj_dt.abs() + numeric::norm(&mixed));

            if dist < EXCLUSION_RADIUS {
                continue;
            }
            if !(y_star < y) {
                violations.push(Violation {
                    t,
                    theta: theta.clone(),
                    check: AssumptionCheck::Minimality,
                });
            }
            let inner = numeric::dot(&diff, &grad);
            if !(inner > 0.0) {
                violations.push(Violation {
                    t,
                    theta: theta.clone(),
                    check: AssumptionCheck::StrongConvexity,
                });
            }
            kappa1 = kappa1.min(inner / (dist * dist));
        }
    }

    Ok(AssumptionReport {
        kappa1_hat: kappa1,
        kappa2_hat: kappa2,
        m_theta_hat: m_theta,
        m_j_hat: m_j,
        violations,
        samples,
    })
}

/// Central-difference derivative of the optimizer path of the given order (1 or 2).
pub fn path_derivative(cost: &dyn CostModel, t: f64, h: f64, order: u8) -> Vec<f64> {
    let plus = cost.optimizer(t + h);
    let minus = cost.optimizer(t - h);
    match order {
        1 => plus
            .iter()
            .zip(&minus)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect(),
        _ => {
            let mid = cost.optimizer(t);
            plus.iter()
                .zip(&minus)
                .zip(&mid)
                .map(|((a, b), c)| (a - 2.0 * c + b) / (h * h))
                .collect()
        }
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}
