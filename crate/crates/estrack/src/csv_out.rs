//! CSV artifacts. Reals are written with 17 significant digits so every
//! value round-trips exactly.

use std::io;
use std::path::Path;

use estrack_core::controllers::ConditionReport;
use estrack_core::cost_models::AssumptionReport;
use estrack_core::simulate::{Deviation, Trajectory};

pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("theta_{i}")));
    h.push("y".into());
    h.extend((1..=n).map(|i| format!("theta_star_{i}")));
    h.push("y_star".into());
    h.push("err_norm".into());
    h.extend((1..=n).map(|i| format!("inst_freq_{i}")));
    h
}

fn to_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(trajectory_header(traj.dim()))
        .map_err(to_io)?;
    for k in 0..traj.len() {
        let mut row = Vec::with_capacity(4 + 3 * traj.dim());
        row.push(real(traj.times[k]));
        row.extend(traj.theta[k].iter().copied().map(real));
        row.push(real(traj.y[k]));
        row.extend(traj.theta_star[k].iter().copied().map(real));
        row.push(real(traj.y_star[k]));
        row.push(real(traj.err_norm[k]));
        row.extend(traj.inst_freq[k].iter().copied().map(real));
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush()
}

pub fn write_gain(path: &Path, r: &ConditionReport) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(["channel", "threshold", "margin", "pass"])
        .map_err(to_io)?;
    for (i, (th, m)) in r.thresholds.iter().zip(&r.margins).enumerate() {
        w.write_record([
            (i + 1).to_string(),
            real(*th),
            real(*m),
            (r.exponent_ok && *m > 0.0).to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush()
}

pub fn write_assumptions(path: &Path, r: &AssumptionReport) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(["quantity", "value"]).map_err(to_io)?;
    for (name, v) in [
        ("kappa1_hat", r.kappa1_hat),
        ("kappa2_hat", r.kappa2_hat),
        ("m_theta_hat", r.m_theta_hat),
        ("m_j_hat", r.m_j_hat),
    ] {
        w.write_record([name.to_string(), real(v)]).map_err(to_io)?;
    }
    w.write_record(["samples".to_string(), r.samples.to_string()])
        .map_err(to_io)?;
    w.write_record(["violations".to_string(), r.violations.len().to_string()])
        .map_err(to_io)?;
    w.flush()
}

pub fn write_deviations(path: &Path, devs: &[Deviation]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(["omega", "rms"]).map_err(to_io)?;
    for d in devs {
        w.write_record([real(d.omega), real(d.rms)])
            .map_err(to_io)?;
    }
    w.flush()
}

pub fn write_decay(path: &Path, rate: f64, maxima: usize) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(["lambda_hat", "maxima"]).map_err(to_io)?;
    w.write_record([real(rate), maxima.to_string()])
        .map_err(to_io)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_schema() {
        assert_eq!(
            trajectory_header(2).join(","),
            "t,theta_1,theta_2,y,theta_star_1,theta_star_2,y_star,err_norm,inst_freq_1,inst_freq_2"
        );
    }

    #[test]
    fn reals_round_trip() {
        for v in [0.1, -1.0 / 3.0, 52863.123456789, 1e-300, 0.0] {
            assert_eq!(real(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
