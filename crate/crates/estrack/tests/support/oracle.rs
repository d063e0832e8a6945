//! Brute-force averaged vector field of an ES loop, built from the
//! control-affine form with explicit Lie brackets and quadrature of the
//! iterated dither integrals. Shares no code with the averaging module.

use std::f64::consts::PI;

use estrack_core::controllers::ControllerConfig;
use estrack_core::cost_models::CostFunction;
use estrack_core::schedules::{eval_schedule, Growth};

const FD_STEP: f64 = 1e-5;
const QUAD_POINTS: usize = 200_000;

/// Slow-time quantities of the loop in shifted error coordinates at time `t`.
struct Frozen<'a> {
    cost: &'a CostFunction,
    cfg: &'a ControllerConfig,
    t: f64,
    base: f64,
    base_rate: f64,
    nu: f64,
    phi_gain: f64,
    deta_dt: f64,
    star: Vec<f64>,
    star_rate: Vec<f64>,
}

impl<'a> Frozen<'a> {
    fn new(cfg: &'a ControllerConfig, cost: &'a CostFunction, t: f64) -> Self {
        let s = eval_schedule(&cfg.schedule, t).unwrap();
        let h = 1e-6;
        let b_plus = eval_schedule(&cfg.schedule, t + h).unwrap().base;
        let b_minus = eval_schedule(&cfg.schedule, (t - h).max(cfg.t0()))
            .unwrap()
            .base;
        let base_rate = (b_plus - b_minus) / (t + h - (t - h).max(cfg.t0()));
        let sp = cost.optimizer(t + h);
        let sm = cost.optimizer(t - h);
        Self {
            cost,
            cfg,
            t,
            base: s.base,
            base_rate,
            nu: s.nu,
            phi_gain: s.phi_gain,
            deta_dt: s.deta_dt,
            star: cost.optimizer(t),
            star_rate: sp
                .iter()
                .zip(&sm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        }
    }

    fn j_f(&self, z: &[f64]) -> f64 {
        let theta: Vec<f64> = z
            .iter()
            .zip(&self.star)
            .map(|(v, c)| v / self.base + c)
            .collect();
        self.cost.value(&theta, self.t)
    }

    /// Drift in the dilated clock.
    fn b0(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.star_rate)
            .map(|(v, r)| (self.base_rate / self.base * v - self.base * r) / self.deta_dt)
            .collect()
    }

    /// Input field of channel `i`; `sine` selects the quadrature component.
    fn b(&self, i: usize, sine: bool, z: &[f64]) -> Vec<f64> {
        let amp = self.nu * self.base * self.cfg.alpha[i].sqrt() / self.deta_dt;
        let arg = self.cfg.k[i] * self.phi_gain * self.j_f(z);
        let mut out = vec![0.0; z.len()];
        out[i] = amp * if sine { arg.sin() } else { arg.cos() };
        out
    }
}

fn jacobian_times(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for c in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += FD_STEP;
        xm[c] -= FD_STEP;
        let (fp, fm) = (f(&xp), f(&xm));
        for r in 0..n {
            out[r] += (fp[r] - fm[r]) / (2.0 * FD_STEP) * v[c];
        }
    }
    out
}

/// `[f, g](x) = Dg(x) f(x) - Df(x) g(x)`.
fn bracket(f: &dyn Fn(&[f64]) -> Vec<f64>, g: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<f64> {
    let dg_f = jacobian_times(g, x, &f(x));
    let df_g = jacobian_times(f, x, &g(x));
    dg_f.iter().zip(&df_g).map(|(a, b)| a - b).collect()
}

fn gcd(a: f64, b: f64) -> f64 {
    let (mut a, mut b) = (a.max(b), a.min(b));
    while b > 1e-9 * a {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// `(1/T) int_0^T u_j(s) int_0^s u_i(r) dr ds` by the composite trapezoid rule.
fn iterated_average(u_i: &dyn Fn(f64) -> f64, u_j: &dyn Fn(f64) -> f64, period: f64) -> f64 {
    let h = period / QUAD_POINTS as f64;
    let mut inner = 0.0;
    let mut total = 0.0;
    let mut prev_ui = u_i(0.0);
    let mut prev_integrand = 0.0;
    for k in 1..=QUAD_POINTS {
        let s = k as f64 * h;
        let ui = u_i(s);
        inner += 0.5 * h * (prev_ui + ui);
        prev_ui = ui;
        let integrand = u_j(s) * inner;
        total += 0.5 * h * (prev_integrand + integrand);
        prev_integrand = integrand;
    }
    total / period
}

/// Averaged vector field in the original clock at `(theta_f, t)`.
pub fn brute_force_average(
    cfg: &ControllerConfig,
    cost: &CostFunction,
    theta_f: &[f64],
    t: f64,
) -> Vec<f64> {
    let fr = Frozen::new(cfg, cost, t);
    let n = cfg.dim_n;
    let period = 2.0 * PI / cfg.omega_hat.iter().copied().reduce(gcd).unwrap();

    // channel list: (index, sine?)
    let channels: Vec<(usize, bool)> = (0..n).flat_map(|i| [(i, false), (i, true)]).collect();
    let input = |(i, sine): (usize, bool)| {
        let w = cfg.omega_hat[i];
        move |s: f64| {
            if sine {
                -w.sqrt() * (w * s).sin()
            } else {
                w.sqrt() * (w * s).cos()
            }
        }
    };

    let mut out = fr.b0(theta_f);
    for a in 0..channels.len() {
        for b in (a + 1)..channels.len() {
            let (ui, uj) = (input(channels[a]), input(channels[b]));
            let weight = iterated_average(&ui, &uj, period);
            if weight.abs() < 1e-10 {
                continue;
            }
            let (ci, cj) = (channels[a], channels[b]);
            let fi = |z: &[f64]| fr.b(ci.0, ci.1, z);
            let fj = |z: &[f64]| fr.b(cj.0, cj.1, z);
            let br = bracket(&fi, &fj, theta_f);
            for (o, v) in out.iter_mut().zip(&br) {
                *o += weight * v;
            }
        }
    }
    out.iter().map(|v| v * fr.deta_dt).collect()
}

#[allow(dead_code)]
pub fn describe(cfg: &ControllerConfig) -> &'static str {
    match cfg.schedule.growth {
        Growth::Asymptotic { .. } => "asymptotic",
        Growth::Exponential { .. } => "exponential",
    }
}
