use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use estrack_core::controllers::{check_gain_conditions, ConditionReport, Regime};
use estrack_core::cost_models::{verify_assumptions, AssumptionReport, CostFunction, SamplingGrid};
use estrack_core::simulate::{
    compare_full_vs_averaged, envelope_peaks, fit_decay_rate, run_es, Deviation, Trajectory,
};
use sha2::{Digest, Sha256};

use crate::config::{Check, ExperimentConfig};
use crate::csv_out;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Main simulation plus checks.
    Run,
    /// Checks only. A decay fit still simulates, but no trajectory is written.
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ParseError = 2,
    SimulationError = 3,
    CheckFailure = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckDetail {
    Gain(ConditionReport),
    Assumptions(AssumptionReport),
    Deviations(Vec<Deviation>),
    Decay { rate: f64, maxima: usize },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub kind: &'static str,
    pub passed: bool,
    pub detail: CheckDetail,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub out_dir: PathBuf,
    pub written: Vec<PathBuf>,
    pub checks: Vec<CheckOutcome>,
    pub trajectory: Option<Trajectory>,
    pub error: Option<String>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    format!("{:x}", Sha256::digest(canonical.as_bytes()))
}

/// Runs `cfg` and writes its artifacts to `out_dir`. Only I/O failures are
/// returned as errors; simulation and check failures are reflected in the
/// exit status and in `report.txt`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    mode: Mode,
) -> io::Result<RunOutcome> {
    fs::create_dir_all(out_dir)?;
    let clock = Instant::now();
    let hash = config_hash(cfg);
    let cost = cfg
        .cost_function()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let mut written = Vec::new();

    let mut trajectory = None;
    let mut error = None;
    let needs_sim = mode == Mode::Run
        || cfg
            .checks
            .iter()
            .any(|c| matches!(c, Check::DecayFit { .. }));
    if needs_sim {
        match run_es(
            &cfg.controller,
            &cost,
            &cfg.theta0,
            cfg.t_span(),
            &cfg.policy,
            cfg.sample_every,
        ) {
            Ok(mut traj) => {
                traj.meta.label = cfg.name.clone();
                traj.meta.config_hash = Some(hash.clone());
                if mode == Mode::Run {
                    let path = out_dir.join("trajectory.csv");
                    csv_out::write_trajectory(&path, &traj)?;
                    written.push(path);
                }
                trajectory = Some(traj);
            }
            Err(e) => error = Some(format!("simulation failed: {e}")),
        }
    }

    let mut checks = Vec::new();
    if error.is_none() {
        for check in &cfg.checks {
            let outcome = evaluate(check, cfg, &cost, trajectory.as_ref());
            if let Some(path) = write_check_csv(out_dir, &outcome)? {
                written.push(path);
            }
            checks.push(outcome);
        }
    }

    let status = if error.is_some() {
        ExitStatus::SimulationError
    } else if checks.iter().all(|c| c.passed) {
        ExitStatus::Success
    } else {
        ExitStatus::CheckFailure
    };

    if mode == Mode::Verify || !cfg.checks.is_empty() || error.is_some() {
        let path = out_dir.join("report.txt");
        let report = render_report(
            cfg,
            &hash,
            mode,
            trajectory.as_ref(),
            &checks,
            error.as_deref(),
            status,
            clock.elapsed().as_secs_f64(),
        );
        fs::write(&path, report)?;
        written.push(path);
    }

    Ok(RunOutcome {
        status,
        out_dir: out_dir.to_path_buf(),
        written,
        checks,
        trajectory,
        error,
    })
}

fn default_regime(cost: &CostFunction) -> Regime {
    if cost.stationary_optimizer() {
        Regime::ConstantOptimum
    } else {
        Regime::TimeVaryingOptimum
    }
}

fn evaluate(
    check: &Check,
    cfg: &ExperimentConfig,
    cost: &CostFunction,
    traj: Option<&Trajectory>,
) -> CheckOutcome {
    let kind = check.kind();
    let failed = |msg: String| CheckOutcome {
        kind,
        passed: false,
        detail: CheckDetail::Failed(msg),
    };
    match check {
        Check::GainConditions { kappa1, regime } => {
            let kappa1 = match kappa1 {
                Some(k) => *k,
                None => {
                    match verify_assumptions(cost.as_ref(), cfg.t_span(), SamplingGrid::default()) {
                        Ok(r) => r.kappa1_hat,
                        Err(e) => return failed(format!("kappa1 estimate failed: {e}")),
                    }
                }
            };
            let report = check_gain_conditions(
                &cfg.controller,
                kappa1,
                regime.unwrap_or_else(|| default_regime(cost)),
            );
            CheckOutcome {
                kind,
                passed: report.pass,
                detail: CheckDetail::Gain(report),
            }
        }
        Check::Assumptions {
            points_per_axis,
            time_samples,
        } => {
            let grid = SamplingGrid {
                points_per_axis: *points_per_axis,
                time_samples: *time_samples,
            };
            match verify_assumptions(cost.as_ref(), cfg.t_span(), grid) {
                Ok(r) => CheckOutcome {
                    kind,
                    passed: r.passed(),
                    detail: CheckDetail::Assumptions(r),
                },
                Err(e) => failed(e.to_string()),
            }
        }
        Check::AveragedComparison { omega_list, t_span } => {
            let span = t_span.map_or(cfg.t_span(), |[a, b]| (a, b));
            match compare_full_vs_averaged(
                &cfg.controller,
                cost,
                &cfg.theta0,
                span,
                omega_list,
                &cfg.policy,
                cfg.sample_every,
            ) {
                Ok(devs) => CheckOutcome {
                    kind,
                    passed: devs.windows(2).all(|w| w[1].rms < w[0].rms),
                    detail: CheckDetail::Deviations(devs),
                },
                Err(e) => failed(e.to_string()),
            }
        }
        Check::DecayFit {
            window,
            min_rate,
            max_rate,
        } => {
            let Some(traj) = traj else {
                return failed("no trajectory".into());
            };
            let window = (window[0], window[1]);
            match fit_decay_rate(traj, window) {
                Ok(rate) => {
                    let above = min_rate.map_or(rate > 0.0, |lo| rate >= lo);
                    let below = max_rate.is_none_or(|hi| rate <= hi);
                    CheckOutcome {
                        kind,
                        passed: above && below,
                        detail: CheckDetail::Decay {
                            rate,
                            maxima: envelope_peaks(&traj.times, &traj.err_norm, window).len(),
                        },
                    }
                }
                Err(e) => failed(e.to_string()),
            }
        }
    }
}

fn write_check_csv(out_dir: &Path, outcome: &CheckOutcome) -> io::Result<Option<PathBuf>> {
    let path = out_dir.join(format!("{}.csv", outcome.kind));
    match &outcome.detail {
        CheckDetail::Gain(r) => csv_out::write_gain(&path, r)?,
        CheckDetail::Assumptions(r) => csv_out::write_assumptions(&path, r)?,
        CheckDetail::Deviations(d) => csv_out::write_deviations(&path, d)?,
        CheckDetail::Decay { rate, maxima } => csv_out::write_decay(&path, *rate, *maxima)?,
        CheckDetail::Failed(_) => return Ok(None),
    }
    Ok(Some(path))
}

#[allow(clippy::too_many_arguments)]
fn render_report(
    cfg: &ExperimentConfig,
    hash: &str,
    mode: Mode,
    traj: Option<&Trajectory>,
    checks: &[CheckOutcome],
    error: Option<&str>,
    status: ExitStatus,
    wall_clock: f64,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment: {}", cfg.name);
    let _ = writeln!(
        s,
        "mode: {}",
        if mode == Mode::Run { "run" } else { "verify" }
    );
    let _ = writeln!(s, "config sha256: {hash}");
    let _ = writeln!(s, "wall clock: {wall_clock:.3} s");
    let _ = writeln!(s, "\n[config]\n{}", cfg.to_json());

    if let Some(traj) = traj {
        let st = &traj.meta.stats;
        let _ = writeln!(s, "\n[simulation]");
        let _ = writeln!(s, "integrator: rk4, samples: {}", traj.len());
        let _ = writeln!(s, "steps: {}  rhs evaluations: {}", st.steps, st.rhs_evals);
        let _ = writeln!(
            s,
            "dt range: [{:.3e}, {:.3e}]  max phase advance per step: {:.6}",
            st.min_dt, st.max_dt, st.max_phase_advance
        );
        if let (Some(e), Some(t)) = (traj.err_norm.last(), traj.times.last()) {
            let _ = writeln!(s, "err_norm({t}) = {e:.6e}");
        }
    }
    if let Some(e) = error {
        let _ = writeln!(s, "\n[error]\n{e}");
    }

    for c in checks {
        let _ = writeln!(
            s,
            "\n[check {}] {}",
            c.kind,
            if c.passed { "PASS" } else { "FAIL" }
        );
        match &c.detail {
            CheckDetail::Gain(r) => {
                let _ = writeln!(s, "regime: {:?}  exponent ok: {}", r.regime, r.exponent_ok);
                for (i, (th, m)) in r.thresholds.iter().zip(&r.margins).enumerate() {
                    let _ = writeln!(s, "channel {}: threshold {:.6}  margin {:.6}", i + 1, th, m);
                }
            }
            CheckDetail::Assumptions(r) => {
                let _ = writeln!(
                    s,
                    "kappa1_hat {:.6}  kappa2_hat {:.6}",
                    r.kappa1_hat, r.kappa2_hat
                );
                let _ = writeln!(
                    s,
                    "m_theta_hat {:.6}  m_j_hat {:.6}",
                    r.m_theta_hat, r.m_j_hat
                );
                let _ = writeln!(
                    s,
                    "samples {}  violations {}",
                    r.samples,
                    r.violations.len()
                );
            }
            CheckDetail::Deviations(d) => {
                for dev in d {
                    let _ = writeln!(s, "omega {:>10.3}  rms {:.6e}", dev.omega, dev.rms);
                }
            }
            CheckDetail::Decay { rate, maxima } => {
                let _ = writeln!(s, "fitted rate {rate:.6} from {maxima} envelope maxima");
            }
            CheckDetail::Failed(msg) => {
                let _ = writeln!(s, "error: {msg}");
            }
        }
    }
    let _ = writeln!(s, "\nexit status: {}", status.code());
    s
}
