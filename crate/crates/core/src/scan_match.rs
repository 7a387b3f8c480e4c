//! Registration of a point cloud against a Gaussian model by simultaneous
//! gradient-based optimization of several pose hypotheses, plus the keyframe
//! promotion test.

use nalgebra::{SVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::derive_seed;
use crate::gaussian::GaussianModel;
use crate::geom::{PoseSE3, UnitQuat};
use crate::optim::{lr_at, Adam};

/// One pose candidate and its most recent loss.
#[derive(Clone, Debug)]
pub struct PoseHypothesis {
    pub pose: PoseSE3,
    pub loss: f64,
}

/// Registration parameters.
#[derive(Clone, Debug)]
pub struct MatchConfig {
    /// Number of simultaneous pose hypotheses.
    pub n_hypotheses: usize,
    /// Mahalanobis distance clamp; matches beyond it contribute a constant
    /// loss and no gradient.
    pub mahal_clamp: f64,
    /// Uniform random subsample size shared by all hypotheses and epochs.
    pub downsample_target: usize,
    /// Per-axis sampling standard deviations for the hypothesis swarm:
    /// x, y, z in meters, then roll, pitch, yaw in radians.
    pub dispersion: [f64; 6],
    pub epochs: usize,
    pub lr_translation: f64,
    pub lr_rotation: f64,
    pub lr_decay: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            n_hypotheses: 16,
            mahal_clamp: 4.0,
            downsample_target: 512,
            dispersion: [
                0.3,
                0.3,
                0.1,
                0.5f64.to_radians(),
                0.5f64.to_radians(),
                2.0f64.to_radians(),
            ],
            epochs: 50,
            lr_translation: 0.05,
            lr_rotation: 0.01,
            lr_decay: 0.1,
        }
    }
}

/// Keyframe promotion thresholds on the pose relative to the last keyframe.
#[derive(Clone, Copy, Debug)]
pub struct KeyframeCriteria {
    pub kf_dist_max: f64,
    pub kf_angle_max: f64,
}

/// Draws the hypothesis swarm around `center`. Hypothesis 0 is pinned to
/// `center`; the rest add independent per-axis normal perturbations, with the
/// rotation applied as a left tangent increment.
pub fn sample_hypotheses(center: &PoseSE3, cfg: &MatchConfig, seed: u64) -> Vec<PoseHypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cfg.n_hypotheses);
    out.push(PoseHypothesis { pose: *center, loss: f64::INFINITY });
    for _ in 1..cfg.n_hypotheses {
        let mut draw = [0.0f64; 6];
        for (k, d) in draw.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *d = z * cfg.dispersion[k];
        }
        let t = center.t + Vector3::new(draw[0], draw[1], draw[2]);
        let tangent = Vector3::new(draw[3], draw[4], draw[5]);
        let q = UnitQuat::exp(&(0.5 * tangent)) * center.q;
        out.push(PoseHypothesis { pose: PoseSE3::new(t, q), loss: f64::INFINITY });
    }
    out
}

/// Mean clamped Mahalanobis distance of the transformed cloud to its nearest
/// Gaussians, with the gradient over the 6 pose tangent coordinates
/// (translation, then left rotation increment).
pub fn match_loss(
    model: &GaussianModel,
    cloud: &[Vector3<f64>],
    pose: &PoseSE3,
    mahal_clamp: f64,
) -> (f64, SVector<f64, 6>) {
    let frames = model.frames();
    match_loss_frames(&frames, cloud, pose, mahal_clamp)
}

pub(crate) fn match_loss_frames(
    frames: &[crate::gaussian::LocalFrame],
    cloud: &[Vector3<f64>],
    pose: &PoseSE3,
    mahal_clamp: f64,
) -> (f64, SVector<f64, 6>) {
    let rot = pose.q.to_rotation_matrix();
    let mut loss = 0.0;
    let mut grad_t = Vector3::zeros();
    let mut grad_r = Vector3::zeros();
    for p in cloud {
        let rotated = rot * p;
        let world = rotated + pose.t;
        let mut best = 0usize;
        let mut best_sq = f64::INFINITY;
        for (j, f) in frames.iter().enumerate() {
            let sq = f.mahal_sq(&world);
            if sq < best_sq {
                best_sq = sq;
                best = j;
            }
        }
        let d = best_sq.sqrt();
        if d >= mahal_clamp {
            loss += mahal_clamp;
            continue;
        }
        loss += d;
        if d > 1e-12 {
            let f = &frames[best];
            let local = f.local(&world);
            let g_world = f.rot * local.component_mul(&f.inv_scale) / d;
            grad_t += g_world;
            grad_r += rotated.cross(&g_world);
        }
    }
    let m = cloud.len().max(1) as f64;
    let mut grad = SVector::<f64, 6>::zeros();
    grad.fixed_rows_mut::<3>(0).copy_from(&(grad_t / m));
    grad.fixed_rows_mut::<3>(3).copy_from(&(grad_r / m));
    (loss / m, grad)
}

struct HypState {
    pose: PoseSE3,
    loss: f64,
    frozen: bool,
    adam_t: Adam<3>,
    adam_r: Adam<3>,
}

/// Optimizes the hypothesis swarm against the model and returns the pose with
/// the lowest loss plus the full optimized swarm.
///
/// The subsample is drawn once and shared by every hypothesis and epoch so
/// losses stay comparable. A hypothesis whose loss turns non-finite is frozen
/// at its last finite state while the others continue.
pub fn register_scan(
    model: &GaussianModel,
    cloud: &[Vector3<f64>],
    center: &PoseSE3,
    cfg: &MatchConfig,
    seed: u64,
) -> (PoseSE3, Vec<PoseHypothesis>) {
    if cloud.is_empty() {
        return (*center, vec![PoseHypothesis { pose: *center, loss: f64::INFINITY }]);
    }
    let mut ds_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let sub: Vec<Vector3<f64>> = if cloud.len() > cfg.downsample_target {
        rand::seq::index::sample(&mut ds_rng, cloud.len(), cfg.downsample_target)
            .iter()
            .map(|i| cloud[i])
            .collect()
    } else {
        cloud.to_vec()
    };

    let frames = model.frames();
    let mut states: Vec<HypState> = sample_hypotheses(center, cfg, derive_seed(seed, 1))
        .into_iter()
        .map(|h| HypState {
            pose: h.pose,
            loss: h.loss,
            frozen: false,
            adam_t: Adam::new(),
            adam_r: Adam::new(),
        })
        .collect();

    for epoch in 0..cfg.epochs {
        let lr_t = lr_at(cfg.lr_translation, cfg.lr_decay, epoch, cfg.epochs);
        let lr_r = lr_at(cfg.lr_rotation, cfg.lr_decay, epoch, cfg.epochs);
        states.par_iter_mut().for_each(|s| {
            if s.frozen {
                return;
            }
            let (loss, grad) = match_loss_frames(&frames, &sub, &s.pose, cfg.mahal_clamp);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                s.frozen = true;
                return;
            }
            s.loss = loss;
            let dt = s.adam_t.delta(&grad.fixed_rows::<3>(0).into_owned(), lr_t);
            let dr = s.adam_r.delta(&grad.fixed_rows::<3>(3).into_owned(), lr_r);
            s.pose.t += dt;
            s.pose.q = UnitQuat::exp(&(0.5 * dr)) * s.pose.q;
        });
    }
    // Re-evaluate so reported losses match the final poses.
    states.par_iter_mut().for_each(|s| {
        if !s.frozen {
            let (loss, _) = match_loss_frames(&frames, &sub, &s.pose, cfg.mahal_clamp);
            s.loss = if loss.is_finite() { loss } else { f64::INFINITY };
        }
    });

    let all: Vec<PoseHypothesis> =
        states.iter().map(|s| PoseHypothesis { pose: s.pose, loss: s.loss }).collect();
    let best = all
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.loss.partial_cmp(&b.loss).unwrap_or(std::cmp::Ordering::Equal).then(ia.cmp(ib))
        })
        .map(|(_, h)| h.pose)
        .unwrap_or(*center);
    (best, all)
}

/// True when the relative pose from `last_kf` to `current` crosses either the
/// translation or rotation threshold (boundary inclusive).
pub fn keyframe_due(last_kf: &PoseSE3, current: &PoseSE3, crit: &KeyframeCriteria) -> bool {
    let rel = last_kf.relative(current);
    rel.t.norm() >= crit.kf_dist_max || rel.rotation_angle() >= crit.kf_angle_max
}
