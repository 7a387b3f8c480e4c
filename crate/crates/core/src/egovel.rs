//! Body-frame egovelocity from per-point Doppler measurements: RANSAC over a
//! 3-parameter least-squares model, splitting the scan into static inliers
//! and dynamic outliers.
//!
//! Sign convention: positive Doppler means the target is receding, so a
//! static point satisfies `doppler = -dirᵀ v`.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Additive diagonal floor keeping the observation covariance invertible.
const COV_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EgovelError {
    #[error("egovelocity needs at least 3 usable points, got {0}")]
    TooFewPoints(usize),
    #[error("point directions are rank-deficient; velocity unobservable")]
    Degenerate,
}

/// One radar return: position (sensor frame), radial speed, intensity.
#[derive(Clone, Copy, Debug)]
pub struct RadarPoint {
    pub position: Vector3<f64>,
    pub doppler: f64,
    pub intensity: f64,
}

/// A timestamped collection of radar returns.
#[derive(Clone, Debug, Default)]
pub struct RadarScan {
    pub timestamp: f64,
    pub points: Vec<RadarPoint>,
}

/// Estimated body-frame velocity, its covariance, and the static-point mask.
#[derive(Clone, Debug)]
pub struct EgovelEstimate {
    pub v_body: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub inlier_mask: Vec<bool>,
}

#[derive(Clone, Copy, Debug)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier residual threshold in m/s.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iterations: 100, threshold: 0.15, seed: 0 }
    }
}

/// Residual of the static-point Doppler model: `doppler + dirᵀ v`.
pub fn doppler_residual(point_dir: &Vector3<f64>, doppler: f64, v: &Vector3<f64>) -> f64 {
    doppler + point_dir.dot(v)
}

fn lsq_velocity(dirs: &[Vector3<f64>], dops: &[f64], subset: &[usize]) -> Option<Vector3<f64>> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &i in subset {
        ata += dirs[i] * dirs[i].transpose();
        atb -= dops[i] * dirs[i];
    }
    let eig = ata.symmetric_eigenvalues();
    if eig.min() < 1e-9 * eig.max().max(1e-30) {
        return None;
    }
    ata.try_inverse().map(|inv| inv * atb)
}

/// RANSAC-LSQ over the scan's Doppler measurements. The scan must already be
/// rotated into the body frame. Fails when fewer than three points are usable
/// or their directions do not span 3D.
pub fn estimate_egovelocity(
    scan: &RadarScan,
    cfg: &RansacConfig,
) -> Result<EgovelEstimate, EgovelError> {
    let mut dirs = Vec::with_capacity(scan.points.len());
    let mut dops = Vec::with_capacity(scan.points.len());
    let mut usable = Vec::with_capacity(scan.points.len());
    for (i, p) in scan.points.iter().enumerate() {
        let n = p.position.norm();
        if n > 1e-9 && p.position.iter().all(|c| c.is_finite()) && p.doppler.is_finite() {
            dirs.push(p.position / n);
            dops.push(p.doppler);
            usable.push(i);
        }
    }
    let n = dirs.len();
    if n < 3 {
        return Err(EgovelError::TooFewPoints(n));
    }

    let all: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_count = 0usize;
    let mut best_v: Option<Vector3<f64>> = None;
    for _ in 0..cfg.iterations {
        let mut pick = [0usize; 3];
        pick[0] = rng.random_range(0..n);
        pick[1] = rng.random_range(0..n);
        pick[2] = rng.random_range(0..n);
        if pick[0] == pick[1] || pick[1] == pick[2] || pick[0] == pick[2] {
            continue;
        }
        let Some(v) = lsq_velocity(&dirs, &dops, &pick) else { continue };
        let count = (0..n)
            .filter(|&i| doppler_residual(&dirs[i], dops[i], &v).abs() < cfg.threshold)
            .count();
        if count > best_count {
            best_count = count;
            best_v = Some(v);
        }
    }

    // Consensus set of the best candidate; fall back to all points when every
    // minimal sample was degenerate.
    let consensus: Vec<usize> = match best_v {
        Some(v) => (0..n)
            .filter(|&i| doppler_residual(&dirs[i], dops[i], &v).abs() < cfg.threshold)
            .collect(),
        None => all.clone(),
    };
    let consensus = if consensus.len() >= 3 { consensus } else { all };

    let v = lsq_velocity(&dirs, &dops, &consensus).ok_or(EgovelError::Degenerate)?;

    // Final inliers and unbiased residual variance on the refit solution.
    let final_inliers: Vec<usize> = (0..n)
        .filter(|&i| doppler_residual(&dirs[i], dops[i], &v).abs() < cfg.threshold)
        .collect();
    let fit_set = if final_inliers.len() >= 3 { &final_inliers } else { &consensus };
    let mut ata = Matrix3::zeros();
    let mut ss = 0.0;
    for &i in fit_set {
        ata += dirs[i] * dirs[i].transpose();
        let r = doppler_residual(&dirs[i], dops[i], &v);
        ss += r * r;
    }
    let dof = fit_set.len().saturating_sub(3);
    let sigma_sq = if dof > 0 { ss / dof as f64 } else { 0.0 };
    let ata_inv = ata.try_inverse().ok_or(EgovelError::Degenerate)?;
    let cov = sigma_sq * ata_inv + COV_FLOOR * Matrix3::identity();

    let mut inlier_mask = vec![false; scan.points.len()];
    for &i in fit_set {
        inlier_mask[usable[i]] = true;
    }
    Ok(EgovelEstimate { v_body: v, cov, inlier_mask })
}
