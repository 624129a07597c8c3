//! CSV plot data: one header row, comma separated, floats with 17
//! significant digits.

use std::fs;
use std::path::Path;

use monodromy::lattice::BasisTrajectory;
use monodromy::maslov::MaslovIndex;

use crate::CliError;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(&header).map_err(|e| io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// Writes `s, T1_1, ..., Tn_n` per continuation sample, where `s` runs
/// from 0 to 1 over the samples and `Ti_j` is component `j` of period `i`.
/// Returns the file name.
pub fn write_trajectory(dir: &Path, traj: &BasisTrajectory) -> Result<String, CliError> {
    let n = traj.start().n();
    let mut header = vec!["s".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("T{i}_{j}"));
        }
    }
    let last = (traj.bases.len() - 1).max(1) as f64;
    let rows = traj.bases.iter().enumerate().map(|(k, b)| {
        let mut row = vec![num(k as f64 / last)];
        for i in 0..n {
            row.extend(b.period(i).iter().map(|&x| num(x)));
        }
        row
    });
    write(&dir.join(TRAJECTORY_FILE), header, rows)?;
    Ok(TRAJECTORY_FILE.into())
}

/// Writes `s, phase` (unwrapped phase of `det^2`) for one Maslov cycle.
pub fn write_phase(dir: &Path, cycle: usize, m: &MaslovIndex) -> Result<String, CliError> {
    let name = format!("maslov_cycle_{cycle}.csv");
    let rows = m.phase_curve.iter().map(|&(s, phi)| vec![num(s), num(phi)]);
    write(&dir.join(&name), vec!["s".into(), "phase".into()], rows)?;
    Ok(name)
}
