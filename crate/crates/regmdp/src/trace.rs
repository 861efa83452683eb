//! Trace files for runs: CSV schemas for the critic and actor traces,
//! run-directory layout, and log-spaced downsampling for plot-ready data.
//!
//! Float cells are written with the shortest round-trippable representation,
//! so rewriting parsed rows reproduces the original bytes and repeated runs
//! of the same config overwrite files with identical content.

use std::path::{Path, PathBuf};

use crate::critic::EvalRow;
use crate::error::{RegMdpError, Result};
use crate::sim::AcCheckpoint;

pub const CRITIC_TRACE_FILE: &str = "critic_trace.csv";
pub const ACTOR_TRACE_FILE: &str = "actor_trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_OMEGA_ERROR_FILE: &str = "plot_omega_error.csv";
pub const PLOT_J_THETA_FILE: &str = "plot_j_theta.csv";
pub const PLOT_RESIDUAL_FILE: &str = "plot_residual.csv";

/// Directory for one run: `<out>/<config-hash>-s<seed>`.
pub fn run_dir(out: &Path, config_hash: &str, seed: u64) -> PathBuf {
    out.join(format!("{config_hash}-s{seed}"))
}

/// Writes the critic trace: `step, omega_error, omega_norm, td_error_ma`.
pub fn write_critic_trace(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["step", "omega_error", "omega_norm", "td_error_ma"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.omega_error.to_string(),
            r.omega_norm.to_string(),
            r.td_error_ma.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the actor trace:
/// `step, J_theta, grad_residual, min_policy_prob, n_active_constraints`.
pub fn write_actor_trace(path: &Path, rows: &[AcCheckpoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "step",
        "J_theta",
        "grad_residual",
        "min_policy_prob",
        "n_active_constraints",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.j_theta.to_string(),
            r.grad_residual.to_string(),
            r.min_policy_prob.to_string(),
            r.n_active_constraints.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// The critic trace of a coupled run shares the critic CSV schema; with a
/// frozen actor it is byte-identical to the plain policy-evaluation trace.
pub fn write_critic_trace_from_checkpoints(path: &Path, rows: &[AcCheckpoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["step", "omega_error", "omega_norm", "td_error_ma"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.omega_error.to_string(),
            r.omega_norm.to_string(),
            r.td_error_ma.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> RegMdpError {
    RegMdpError::Numeric(format!("csv: {e}"))
}

/// A parsed trace: header plus rows keyed by the integer step in column 0.
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub header: Vec<String>,
    pub rows: Vec<(u64, Vec<String>)>,
}

pub fn read_trace(path: &Path) -> Result<ParsedTrace> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let cells: Vec<String> = record.iter().map(str::to_owned).collect();
        let step: u64 = cells
            .first()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| RegMdpError::Numeric(format!("bad step cell in {}", path.display())))?;
        rows.push((step, cells));
    }
    Ok(ParsedTrace { header, rows })
}

/// Log-spaced row selection: at most `max_points` rows, always keeping the
/// first and last raw rows exactly as read.
pub fn downsample_log(rows: &[(u64, Vec<String>)], max_points: usize) -> Vec<Vec<String>> {
    if rows.len() <= max_points || rows.len() <= 2 {
        return rows.iter().map(|(_, cells)| cells.clone()).collect();
    }
    let first_step = rows.first().unwrap().0.max(1);
    let last_step = rows.last().unwrap().0.max(first_step);
    let mut picked = vec![0usize];
    let mut cursor = 0usize;
    let n_targets = max_points.saturating_sub(1).max(1);
    let ratio = (last_step as f64 / first_step as f64).powf(1.0 / n_targets as f64);
    let mut target = first_step as f64;
    for _ in 0..n_targets {
        target *= ratio;
        while cursor + 1 < rows.len() && (rows[cursor].0 as f64) < target {
            cursor += 1;
        }
        if *picked.last().unwrap() != cursor {
            picked.push(cursor);
        }
    }
    if *picked.last().unwrap() != rows.len() - 1 {
        picked.push(rows.len() - 1);
    }
    picked
        .into_iter()
        .map(|i| rows[i].1.clone())
        .collect()
}

fn write_plot(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Converts the traces of a run directory into downsampled plot-ready CSVs
/// (omega-error, objective, residual curves). Errors when no trace is
/// present, naming the files it expected.
pub fn plot_data(run_dir: &Path, max_points: usize) -> Result<Vec<PathBuf>> {
    let critic_path = run_dir.join(CRITIC_TRACE_FILE);
    let actor_path = run_dir.join(ACTOR_TRACE_FILE);
    if !critic_path.exists() && !actor_path.exists() {
        return Err(RegMdpError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "no traces in {}: expected {CRITIC_TRACE_FILE} and/or {ACTOR_TRACE_FILE}",
                run_dir.display()
            ),
        )));
    }
    let mut written = Vec::new();
    if critic_path.exists() {
        let trace = read_trace(&critic_path)?;
        let rows = downsample_log(&trace.rows, max_points);
        let rows: Vec<Vec<String>> = rows
            .into_iter()
            .map(|cells| vec![cells[0].clone(), cells[1].clone()])
            .collect();
        let out = run_dir.join(PLOT_OMEGA_ERROR_FILE);
        write_plot(&out, &["step", "omega_error"], rows)?;
        written.push(out);
    }
    if actor_path.exists() {
        let trace = read_trace(&actor_path)?;
        let rows = downsample_log(&trace.rows, max_points);
        let j_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|cells| vec![cells[0].clone(), cells[1].clone()])
            .collect();
        let r_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|cells| vec![cells[0].clone(), cells[2].clone()])
            .collect();
        let out_j = run_dir.join(PLOT_J_THETA_FILE);
        write_plot(&out_j, &["step", "J_theta"], j_rows)?;
        written.push(out_j);
        let out_r = run_dir.join(PLOT_RESIDUAL_FILE);
        write_plot(&out_r, &["step", "grad_residual"], r_rows)?;
        written.push(out_r);
    }
    Ok(written)
}
