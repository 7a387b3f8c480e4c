//! Model loss (Mahalanobis + log-determinant + thin-disc prior) with analytic
//! gradients, and the gradient-descent fitting loop.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rayon::prelude::*;

use super::{assign_points, Assignment, GaussianError, GaussianModel, LocalFrame};
use crate::geom::rotmat_partials;
use crate::optim::{lr_at, Adam};

/// Gradients of the model loss with respect to one Gaussian's parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamGrad {
    pub mu: Vector3<f64>,
    pub log_scales: Vector3<f64>,
    pub rot: Vector4<f64>,
}

/// Loss value plus per-Gaussian terms and parameter gradients.
#[derive(Clone, Debug)]
pub struct ModelLoss {
    pub loss: f64,
    pub per_gaussian: Vec<f64>,
    pub grads: Vec<ParamGrad>,
}

/// Evaluates the loss `mean_j [ (1/2|G_j|) Σ p̂ᵀp̂ + Σ_k ŝ_k + (min_k ŝ_k − s_disc)⁺ ]`
/// and its gradients, holding the given assignment fixed.
///
/// A Gaussian with no assigned points contributes only its determinant and
/// disc terms; the scale clamp uses a zero subgradient below `s_min`, and the
/// rotation gradient is taken through the quaternion normalization.
pub fn model_loss(model: &GaussianModel, assignment: &Assignment, cloud: &[Vector3<f64>]) -> ModelLoss {
    let n_g = model.len() as f64;
    let results: Vec<(f64, ParamGrad)> = model
        .gaussians
        .par_iter()
        .zip(assignment.groups.par_iter())
        .map(|(g, members)| {
            let frame = LocalFrame::new(g, model.s_min);
            let s_hat = g.effective_log_scales(model.s_min);

            // Disc prior on the smallest effective scale (lowest index on ties).
            let mut min_idx = 0;
            for k in 1..3 {
                if s_hat[k] < s_hat[min_idx] {
                    min_idx = k;
                }
            }
            let disc_excess = s_hat[min_idx] - model.s_disc;
            let disc_term = disc_excess.max(0.0);
            let disc_active = disc_excess > 0.0;

            let det_term = s_hat.sum();
            let mut loss_j = det_term + disc_term;

            let mut grad_shat = Vector3::new(1.0, 1.0, 1.0);
            if disc_active {
                grad_shat[min_idx] += 1.0;
            }
            let mut grad = ParamGrad::default();

            if !members.is_empty() {
                let inv_n = 1.0 / members.len() as f64;
                let mut maha_sum = 0.0;
                let mut mu_acc = Vector3::zeros();
                let mut data_sq = Vector3::zeros();
                let mut rot_acc = Matrix3::zeros();
                for &i in members.iter() {
                    let d = cloud[i] - g.mu;
                    let local = frame.local(&cloud[i]);
                    maha_sum += local.norm_squared();
                    let scaled = local.component_mul(&frame.inv_scale);
                    mu_acc += frame.rot * scaled;
                    data_sq += local.component_mul(&local);
                    rot_acc += d * scaled.transpose();
                }
                loss_j += 0.5 * maha_sum * inv_n;
                grad.mu = -mu_acc * inv_n;
                grad_shat -= data_sq * inv_n;

                // Chain ∂L/∂R into the raw quaternion through the plain
                // normalization (no hemisphere flip: R(q) = R(-q), but the
                // partials are odd in q, so the chart must stay consistent).
                let grad_r = rot_acc * inv_n;
                let norm = g.rot.norm();
                let qn = g.rot / norm;
                let parts = rotmat_partials(&crate::geom::UnitQuat {
                    w: qn[0],
                    x: qn[1],
                    y: qn[2],
                    z: qn[3],
                });
                let grad_q = Vector4::from_fn(|m, _| parts[m].component_mul(&grad_r).sum());
                let proj = (Matrix4::identity() - qn * qn.transpose()) / norm;
                grad.rot = proj * grad_q;
            }

            // Zero subgradient below the scale clamp.
            for k in 0..3 {
                grad.log_scales[k] = if g.log_scales[k] >= model.s_min { grad_shat[k] } else { 0.0 };
            }
            (loss_j, grad)
        })
        .collect();

    let mut per_gaussian = Vec::with_capacity(results.len());
    let mut grads = Vec::with_capacity(results.len());
    let mut total = 0.0;
    for (loss_j, mut grad) in results {
        total += loss_j;
        grad.mu /= n_g;
        grad.log_scales /= n_g;
        grad.rot /= n_g;
        per_gaussian.push(loss_j);
        grads.push(grad);
    }
    ModelLoss { loss: total / n_g, per_gaussian, grads }
}

/// Fitting schedule; learning rates decay exponentially to
/// `lr * lr_decay` over the epoch budget.
#[derive(Clone, Debug)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr_mu: f64,
    pub lr_scale: f64,
    pub lr_rot: f64,
    pub lr_decay: f64,
    pub early_stop_eps: f64,
    pub early_stop_window: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr_mu: 1e-2,
            lr_scale: 1e-2,
            lr_rot: 1e-2,
            lr_decay: 0.3,
            early_stop_eps: 1e-6,
            early_stop_window: 10,
        }
    }
}

/// A fitted model plus the pre-step loss recorded at every epoch.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub model: GaussianModel,
    pub losses: Vec<f64>,
}

/// Runs the per-epoch loop: re-assign points to nearest centers, evaluate
/// loss and gradients, take one adaptive step per Gaussian parameter block.
pub fn fit_model(
    mut model: GaussianModel,
    cloud: &[Vector3<f64>],
    cfg: &FitConfig,
) -> Result<FitOutcome, GaussianError> {
    if cloud.is_empty() {
        return Err(GaussianError::EmptyCloud);
    }
    let mut adam: Vec<(Adam<3>, Adam<3>, Adam<4>)> =
        (0..model.len()).map(|_| (Adam::new(), Adam::new(), Adam::new())).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let assignment = assign_points(&model, cloud);
        let ml = model_loss(&model, &assignment, cloud);
        if let Some(bad) = ml.per_gaussian.iter().position(|l| !l.is_finite()) {
            return Err(GaussianError::NonFiniteLoss { gaussian: bad, epoch });
        }
        losses.push(ml.loss);
        if losses.len() > cfg.early_stop_window {
            let prev = losses[losses.len() - 1 - cfg.early_stop_window];
            if prev - ml.loss < cfg.early_stop_eps {
                break;
            }
        }

        let lr_mu = lr_at(cfg.lr_mu, cfg.lr_decay, epoch, cfg.epochs);
        let lr_s = lr_at(cfg.lr_scale, cfg.lr_decay, epoch, cfg.epochs);
        let lr_q = lr_at(cfg.lr_rot, cfg.lr_decay, epoch, cfg.epochs);
        for (j, g) in model.gaussians.iter_mut().enumerate() {
            let (am, ascale, arot) = &mut adam[j];
            g.mu += am.delta(&ml.grads[j].mu, lr_mu);
            g.log_scales += ascale.delta(&ml.grads[j].log_scales, lr_s);
            g.rot += arot.delta(&ml.grads[j].rot, lr_q);
        }
    }
    Ok(FitOutcome { model, losses })
}
