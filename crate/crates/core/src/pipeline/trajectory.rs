//! Timestamped pose sequences and the plain-text interchange format
//! `timestamp tx ty tz qx qy qz qw` (one pose per line).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::PipelineError;
use crate::geom::{PoseSE3, UnitQuat};

/// Poses with strictly ascending timestamps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<(f64, PoseSE3)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn push(&mut self, t: f64, pose: PoseSE3) {
        self.poses.push((t, pose));
    }
}

/// Formats with at least nine significant digits, trimming trailing zeros.
pub(crate) fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let x = if x == 0.0 { 0.0 } else { x };
    let exp = if x == 0.0 { 0 } else { x.abs().log10().floor() as i64 };
    let decimals = (8 - exp).clamp(9, 17) as usize;
    let s = format!("{x:.decimals$}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed == "-0" { "0".to_string() } else { trimmed.to_string() }
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), source }
}

/// Writes the trajectory in the interchange layout. An empty trajectory
/// produces an empty file and a warning.
pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), PipelineError> {
    if traj.is_empty() {
        log::warn!("writing empty trajectory to {}", path.display());
    }
    let mut out = String::new();
    for (t, pose) in &traj.poses {
        out.push_str(&format!(
            "{:.9} {} {} {} {} {} {} {}\n",
            t,
            fmt_float(pose.t.x),
            fmt_float(pose.t.y),
            fmt_float(pose.t.z),
            fmt_float(pose.q.x),
            fmt_float(pose.q.y),
            fmt_float(pose.q.z),
            fmt_float(pose.q.w),
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Reads the interchange layout back; `#` lines are ignored.
pub fn read_trajectory(path: &Path) -> Result<Trajectory, PipelineError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut traj = Trajectory::default();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(PipelineError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let mut v = [0.0f64; 8];
        for (k, field) in fields.iter().enumerate() {
            v[k] = field.parse().map_err(|e| PipelineError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("bad number `{field}`: {e}"),
            })?;
        }
        traj.push(
            v[0],
            PoseSE3::new(Vector3::new(v[1], v[2], v[3]), UnitQuat::new(v[7], v[4], v[5], v[6])),
        );
    }
    Ok(traj)
}
