//! Dataset directory layout and parsing.
//!
//! A dataset root contains `imu.csv` (header `t,ax,ay,az,wx,wy,wz`),
//! `scans/<index>.csv` files (header `t,x,y,z,doppler,intensity`; the first
//! row's `t` is the scan timestamp), `calib.txt` with the radar-to-body
//! rotation as a row-major 3x3 matrix, and an optional `groundtruth.txt` in
//! the trajectory interchange layout. SI units throughout.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::trajectory::{read_trajectory, Trajectory};
use super::PipelineError;
use crate::egovel::{RadarPoint, RadarScan};
use crate::ekf::ImuSample;
use crate::pipeline::config::Config;

/// Parsed, validated, time-sorted sensor streams plus extrinsics.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub imu: Vec<ImuSample>,
    pub scans: Vec<RadarScan>,
    /// Rotation taking radar-frame vectors into the body/IMU frame.
    pub c_body_radar: Matrix3<f64>,
    pub groundtruth: Option<Trajectory>,
    /// Non-fatal irregularities found while loading (e.g. empty scan files).
    pub warnings: Vec<String>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> PipelineError {
    PipelineError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), source }
}

fn parse_csv_rows(
    path: &Path,
    expected_header: &str,
) -> Result<Vec<(usize, Vec<f64>)>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let n_cols = expected_header.split(',').count();
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == expected_header => {}
        Some((_, header)) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header `{expected_header}`, got `{}`", header.trim()),
            ))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut vals = Vec::with_capacity(n_cols);
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|e| {
                parse_err(path, idx + 1, format!("bad number `{}`: {e}", field.trim()))
            })?;
            vals.push(v);
        }
        if vals.len() != n_cols {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {n_cols} columns, got {}", vals.len()),
            ));
        }
        rows.push((idx + 1, vals));
    }
    Ok(rows)
}

fn load_imu(path: &Path) -> Result<Vec<ImuSample>, PipelineError> {
    let rows = parse_csv_rows(path, "t,ax,ay,az,wx,wy,wz")?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut prev_t: Option<(f64, usize)> = None;
    for (line, v) in rows {
        if let Some((pt, _)) = prev_t {
            if v[0] <= pt {
                return Err(parse_err(
                    path,
                    line,
                    format!("timestamp {} not strictly increasing (previous {})", v[0], pt),
                ));
            }
        }
        prev_t = Some((v[0], line));
        samples.push(ImuSample {
            timestamp: v[0],
            accel: Vector3::new(v[1], v[2], v[3]),
            gyro: Vector3::new(v[4], v[5], v[6]),
        });
    }
    if samples.is_empty() {
        return Err(parse_err(path, 1, "no IMU samples"));
    }
    Ok(samples)
}

fn load_scan(path: &Path, doppler_sign: f64) -> Result<Option<RadarScan>, PipelineError> {
    let rows = parse_csv_rows(path, "t,x,y,z,doppler,intensity")?;
    let Some((_, first)) = rows.first() else {
        return Ok(None);
    };
    let timestamp = first[0];
    let mut points = Vec::with_capacity(rows.len());
    for (line, v) in &rows {
        let position = Vector3::new(v[1], v[2], v[3]);
        if !position.iter().all(|c| c.is_finite()) {
            return Err(parse_err(path, *line, "non-finite point position"));
        }
        points.push(RadarPoint {
            position,
            doppler: doppler_sign * v[4],
            intensity: v[5],
        });
    }
    Ok(Some(RadarScan { timestamp, points }))
}

fn load_calib(path: &Path) -> Result<Matrix3<f64>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let vals: Result<Vec<f64>, _> = text.split_whitespace().map(|f| f.parse::<f64>()).collect();
    let vals = vals.map_err(|e| parse_err(path, 1, format!("bad calibration value: {e}")))?;
    if vals.len() != 9 {
        return Err(parse_err(path, 1, format!("expected 9 values, got {}", vals.len())));
    }
    let m = Matrix3::from_row_slice(&vals);
    let orth = (m * m.transpose() - Matrix3::identity()).abs().max();
    if orth > 1e-6 {
        return Err(parse_err(path, 1, "calibration matrix is not a rotation"));
    }
    Ok(m)
}

/// Loads a dataset directory, applying the configured Doppler sign.
pub fn load_dataset(root: &Path, cfg: &Config) -> Result<Dataset, PipelineError> {
    let imu = load_imu(&root.join("imu.csv"))?;
    let c_body_radar = load_calib(&root.join("calib.txt"))?;

    let scans_dir = root.join("scans");
    let entries = std::fs::read_dir(&scans_dir).map_err(|e| io_err(&scans_dir, e))?;
    let mut indexed: Vec<(u64, std::path::PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| io_err(&scans_dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let index: u64 = stem.parse().map_err(|_| {
            PipelineError::Invalid(format!(
                "scan file name `{}` is not an integer index",
                path.display()
            ))
        })?;
        indexed.push((index, path));
    }
    if indexed.is_empty() {
        return Err(PipelineError::Invalid(format!("no scan files in {}", scans_dir.display())));
    }
    indexed.sort_by_key(|(i, _)| *i);

    let mut warnings = Vec::new();
    let mut scans = Vec::with_capacity(indexed.len());
    for (_, path) in &indexed {
        match load_scan(path, cfg.doppler_sign)? {
            Some(scan) => scans.push(scan),
            None => {
                let msg = format!("{}: empty scan file (no points), excluded", path.display());
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
    }
    scans.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).unwrap());
    for w in scans.windows(2) {
        if w[1].timestamp <= w[0].timestamp {
            return Err(PipelineError::Invalid(format!(
                "scan timestamps not strictly increasing near t={}",
                w[0].timestamp
            )));
        }
    }

    let gt_path = root.join("groundtruth.txt");
    let groundtruth = if gt_path.exists() { Some(read_trajectory(&gt_path)?) } else { None };

    Ok(Dataset { imu, scans, c_body_radar, groundtruth, warnings })
}
