//! Fitting collections of freely positioned 3D Gaussians to point clouds.
//!
//! Each Gaussian carries a center, per-axis log scales, and a raw (not
//! necessarily unit) rotation quaternion. The effective covariance is
//! `R S S Rᵀ` where `S = diag(exp(max(s_min, s)))` and `R` comes from the
//! normalized quaternion. Models are initialized with Bisecting K-Means and
//! refined by adaptive gradient descent on a Mahalanobis + log-determinant
//! loss with a thin-disc prior.

mod fit;
mod kmeans;

pub use fit::{fit_model, model_loss, FitConfig, FitOutcome, ModelLoss, ParamGrad};

use nalgebra::{Matrix3, Vector3, Vector4};
use rayon::prelude::*;
use thiserror::Error;

use crate::geom::UnitQuat;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("cannot build a model from an empty point cloud")]
    EmptyCloud,
    #[error("requested {0} Gaussians; at least 1 is required")]
    InvalidCount(usize),
    #[error("non-finite loss in Gaussian {gaussian} at epoch {epoch}")]
    NonFiniteLoss { gaussian: usize, epoch: usize },
}

/// One trivariate normal: center, log scales, raw rotation quaternion
/// `(w, x, y, z)`.
#[derive(Clone, Debug)]
pub struct Gaussian {
    pub mu: Vector3<f64>,
    pub log_scales: Vector3<f64>,
    pub rot: Vector4<f64>,
}

impl Gaussian {
    pub fn isotropic(mu: Vector3<f64>) -> Self {
        Self { mu, log_scales: Vector3::zeros(), rot: Vector4::new(1.0, 0.0, 0.0, 0.0) }
    }

    /// Log scales clamped from below by `s_min`.
    pub fn effective_log_scales(&self, s_min: f64) -> Vector3<f64> {
        self.log_scales.map(|s| s.max(s_min))
    }

    /// Normalized rotation quaternion.
    pub fn unit_rot(&self) -> UnitQuat {
        UnitQuat::new(self.rot[0], self.rot[1], self.rot[2], self.rot[3])
    }

    /// Maps a world point into the Gaussian's whitened local frame; the
    /// squared norm of the result is the squared Mahalanobis distance.
    pub fn transform_to_local(&self, s_min: f64, p: &Vector3<f64>) -> Vector3<f64> {
        let rt = self.unit_rot().to_rotation_matrix().transpose();
        let u = rt * (p - self.mu);
        let inv_scale = self.effective_log_scales(s_min).map(|s| (-s).exp());
        u.component_mul(&inv_scale)
    }

    /// Covariance matrix `R S² Rᵀ` with eigenvalues `exp(2 ŝ)`.
    pub fn covariance(&self, s_min: f64) -> Matrix3<f64> {
        let r = self.unit_rot().to_rotation_matrix();
        let s2 = self.effective_log_scales(s_min).map(|s| (2.0 * s).exp());
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = (0..3).map(|k| r[(i, k)] * s2[k] * r[(j, k)]).sum();
            }
        }
        m
    }
}

/// Precomputed per-Gaussian data for repeated Mahalanobis evaluations.
#[derive(Clone, Debug)]
pub(crate) struct LocalFrame {
    pub mu: Vector3<f64>,
    pub rot: Matrix3<f64>,
    pub inv_scale: Vector3<f64>,
}

impl LocalFrame {
    pub fn new(g: &Gaussian, s_min: f64) -> Self {
        Self {
            mu: g.mu,
            rot: g.unit_rot().to_rotation_matrix(),
            inv_scale: g.effective_log_scales(s_min).map(|s| (-s).exp()),
        }
    }

    /// Whitened local coordinates of `p`.
    pub fn local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        (self.rot.transpose() * (p - self.mu)).component_mul(&self.inv_scale)
    }

    pub fn mahal_sq(&self, p: &Vector3<f64>) -> f64 {
        self.local(p).norm_squared()
    }
}

/// A fitted collection of Gaussians plus the shared scale hyperparameters.
#[derive(Clone, Debug)]
pub struct GaussianModel {
    pub gaussians: Vec<Gaussian>,
    pub s_min: f64,
    pub s_disc: f64,
}

impl GaussianModel {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub(crate) fn frames(&self) -> Vec<LocalFrame> {
        self.gaussians.iter().map(|g| LocalFrame::new(g, self.s_min)).collect()
    }

    /// Debug dump, one Gaussian per line:
    /// `mu_x mu_y mu_z s1 s2 s3 qw qx qy qz`
    /// (effective log scales and the normalized rotation, nine significant
    /// digits).
    pub fn debug_dump(&self) -> String {
        use crate::pipeline::trajectory::fmt_float as ff;
        let mut out = String::new();
        for g in &self.gaussians {
            let s = g.effective_log_scales(self.s_min);
            let q = g.unit_rot();
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {} {} {}\n",
                ff(g.mu.x),
                ff(g.mu.y),
                ff(g.mu.z),
                ff(s.x),
                ff(s.y),
                ff(s.z),
                ff(q.w),
                ff(q.x),
                ff(q.y),
                ff(q.z),
            ));
        }
        out
    }
}

/// Point-to-Gaussian ownership: a full partition of the cloud.
#[derive(Clone, Debug)]
pub struct Assignment {
    /// Owning Gaussian index for every point.
    pub owner: Vec<usize>,
    /// Point indices per Gaussian.
    pub groups: Vec<Vec<usize>>,
}

impl Assignment {
    fn from_owner(owner: Vec<usize>, n_gaussians: usize) -> Self {
        let mut groups = vec![Vec::new(); n_gaussians];
        for (i, &j) in owner.iter().enumerate() {
            groups[j].push(i);
        }
        Self { owner, groups }
    }
}

/// Initializes a model with Bisecting K-Means centers, unit scales, and
/// identity rotations. Requests for more Gaussians than points are reduced
/// to the point count.
pub fn init_model(
    cloud: &[Vector3<f64>],
    n_gaussians: usize,
    s_min: f64,
    s_disc: f64,
    seed: u64,
) -> Result<GaussianModel, GaussianError> {
    if cloud.is_empty() {
        return Err(GaussianError::EmptyCloud);
    }
    if n_gaussians == 0 {
        return Err(GaussianError::InvalidCount(0));
    }
    let n = if n_gaussians > cloud.len() {
        log::warn!(
            "requested {} Gaussians for {} points; reducing to point count",
            n_gaussians,
            cloud.len()
        );
        cloud.len()
    } else {
        n_gaussians
    };
    let centers = kmeans::bisecting_kmeans(cloud, n, seed);
    Ok(GaussianModel {
        gaussians: centers.into_iter().map(Gaussian::isotropic).collect(),
        s_min,
        s_disc,
    })
}

/// Assigns every point to the Gaussian with the nearest center (Euclidean,
/// ties broken toward the lowest index).
pub fn assign_points(model: &GaussianModel, cloud: &[Vector3<f64>]) -> Assignment {
    let centers: Vec<Vector3<f64>> = model.gaussians.iter().map(|g| g.mu).collect();
    let owner: Vec<usize> = cloud
        .par_iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d = (p - c).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect();
    Assignment::from_owner(owner, model.len())
}

/// Default Gaussian count rule: one per ten points, capped.
pub fn default_gaussian_count(cloud_size: usize, cap: usize) -> usize {
    (cloud_size / 10).clamp(1, cap.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, LN_2};

    fn cube_cloud(n: usize, offset: Vector3<f64>) -> Vec<Vector3<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        (0..n)
            .map(|_| {
                offset
                    + Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
            })
            .collect()
    }

    #[test]
    fn single_gaussian_center_is_cloud_mean() {
        let cloud = cube_cloud(100, Vector3::new(2.0, -1.0, 0.5));
        let model = init_model(&cloud, 1, -3.0, -3.0, 0).unwrap();
        let mean = cloud.iter().sum::<Vector3<f64>>() / cloud.len() as f64;
        assert_relative_eq!(model.gaussians[0].mu, mean, epsilon = 1e-9);
    }

    #[test]
    fn init_sets_unit_scale_and_identity_rotation() {
        let cloud = cube_cloud(60, Vector3::zeros());
        let model = init_model(&cloud, 4, -3.0, -3.0, 1).unwrap();
        assert_eq!(model.len(), 4);
        for g in &model.gaussians {
            assert_eq!(g.log_scales, Vector3::zeros());
            assert_eq!(g.unit_rot(), UnitQuat::identity());
        }
    }

    #[test]
    fn two_separated_clusters_recovered_against_exhaustive_oracle() {
        // Small cloud so the exhaustive 2-partition oracle is cheap.
        let mut cloud = cube_cloud(8, Vector3::new(-5.0, 0.0, 0.0));
        cloud.extend(cube_cloud(8, Vector3::new(5.0, 0.0, 0.0)));

        // Oracle: best SSE over all 2^n two-colorings.
        let n = cloud.len();
        let mut best_sse = f64::INFINITY;
        let mut best_centers = (Vector3::zeros(), Vector3::zeros());
        for mask in 1..(1u32 << n) - 1 {
            let (mut ca, mut cb) = (Vector3::zeros(), Vector3::zeros());
            let (mut na, mut nb) = (0.0, 0.0);
            for (i, p) in cloud.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    ca += p;
                    na += 1.0;
                } else {
                    cb += p;
                    nb += 1.0;
                }
            }
            if na == 0.0 || nb == 0.0 {
                continue;
            }
            ca /= na;
            cb /= nb;
            let sse: f64 = cloud
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if mask & (1 << i) != 0 {
                        (p - ca).norm_squared()
                    } else {
                        (p - cb).norm_squared()
                    }
                })
                .sum();
            if sse < best_sse {
                best_sse = sse;
                best_centers = (ca, cb);
            }
        }

        let model = init_model(&cloud, 2, -3.0, -3.0, 3).unwrap();
        let mut got: Vec<Vector3<f64>> = model.gaussians.iter().map(|g| g.mu).collect();
        got.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        let mut want = [best_centers.0, best_centers.1];
        want.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).norm() < 0.2, "center {g:?} vs oracle {w:?}");
        }
    }

    #[test]
    fn more_gaussians_than_points_reduces() {
        let cloud = cube_cloud(3, Vector3::zeros());
        let model = init_model(&cloud, 10, -3.0, -3.0, 0).unwrap();
        assert_eq!(model.len(), 3);
    }

    #[test]
    fn empty_cloud_errors() {
        assert!(matches!(init_model(&[], 1, -3.0, -3.0, 0), Err(GaussianError::EmptyCloud)));
    }

    #[test]
    fn assign_single_gaussian_takes_all() {
        let cloud = cube_cloud(20, Vector3::zeros());
        let model = init_model(&cloud, 1, -3.0, -3.0, 0).unwrap();
        let a = assign_points(&model, &cloud);
        assert!(a.owner.iter().all(|&j| j == 0));
        assert_eq!(a.groups[0].len(), 20);
    }

    #[test]
    fn assign_tie_breaks_to_lowest_index() {
        let model = GaussianModel {
            gaussians: vec![
                Gaussian::isotropic(Vector3::new(-1.0, 0.0, 0.0)),
                Gaussian::isotropic(Vector3::new(1.0, 0.0, 0.0)),
            ],
            s_min: -3.0,
            s_disc: -3.0,
        };
        let a = assign_points(&model, &[Vector3::zeros()]);
        assert_eq!(a.owner, vec![0]);
    }

    #[test]
    fn assign_nearest_center() {
        let model = GaussianModel {
            gaussians: vec![
                Gaussian::isotropic(Vector3::zeros()),
                Gaussian::isotropic(Vector3::new(10.0, 0.0, 0.0)),
            ],
            s_min: -3.0,
            s_disc: -3.0,
        };
        let a = assign_points(&model, &[Vector3::new(2.0, 0.0, 0.0)]);
        assert_eq!(a.owner, vec![0]);
    }

    #[test]
    fn local_transform_examples() {
        let g = Gaussian::isotropic(Vector3::new(1.0, 2.0, 3.0));
        assert_relative_eq!(
            g.transform_to_local(-3.0, &g.mu),
            Vector3::zeros(),
            epsilon = 1e-12
        );
        let p = g.mu + Vector3::x();
        assert_relative_eq!(g.transform_to_local(-3.0, &p).norm(), 1.0, epsilon = 1e-12);

        let mut aniso = Gaussian::isotropic(Vector3::zeros());
        aniso.log_scales = Vector3::new(LN_2, 0.0, 0.0);
        let local = aniso.transform_to_local(-3.0, &Vector3::new(2.0, 0.0, 0.0));
        assert_relative_eq!(local, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn covariance_examples() {
        let g = Gaussian::isotropic(Vector3::zeros());
        assert_relative_eq!(g.covariance(-3.0), Matrix3::identity(), epsilon = 1e-9);

        let mut iso = Gaussian::isotropic(Vector3::zeros());
        iso.log_scales = Vector3::from_element(LN_2);
        assert_relative_eq!(iso.covariance(-3.0), 4.0 * Matrix3::identity(), epsilon = 1e-9);

        let mut rotated = Gaussian::isotropic(Vector3::zeros());
        rotated.log_scales = Vector3::new(LN_2, 0.0, 0.0);
        let q = UnitQuat::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        rotated.rot = Vector4::new(q.w, q.x, q.y, q.z);
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0));
        assert_relative_eq!(rotated.covariance(-3.0), expected, epsilon = 1e-9);
    }

    #[test]
    fn covariance_respects_scale_floor() {
        let mut g = Gaussian::isotropic(Vector3::zeros());
        g.log_scales = Vector3::new(-10.0, 0.0, 0.0);
        let s_min = -2.0;
        let cov = g.covariance(s_min);
        let min_eig = cov.symmetric_eigenvalues().min();
        assert!(min_eig >= (2.0 * s_min).exp() * (1.0 - 1e-6));
    }
}
