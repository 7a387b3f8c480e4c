//! Per-parameter adaptive gradient steps (Adam-style first/second moments)
//! shared by Gaussian fitting and scan matching.

use nalgebra::SVector;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Moment state for one parameter block of fixed size `N`.
#[derive(Clone, Debug)]
pub(crate) struct Adam<const N: usize> {
    m: SVector<f64, N>,
    v: SVector<f64, N>,
    step: u32,
}

impl<const N: usize> Adam<N> {
    pub fn new() -> Self {
        Self { m: SVector::zeros(), v: SVector::zeros(), step: 0 }
    }

    /// Returns the signed parameter delta (already a descent step) for the
    /// given gradient and learning rate.
    pub fn delta(&mut self, grad: &SVector<f64, N>, lr: f64) -> SVector<f64, N> {
        self.step += 1;
        self.m = BETA1 * self.m + (1.0 - BETA1) * grad;
        self.v = BETA2 * self.v + (1.0 - BETA2) * grad.component_mul(grad);
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let mut out = SVector::zeros();
        for i in 0..N {
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            out[i] = -lr * mhat / (vhat.sqrt() + EPS);
        }
        out
    }
}

/// Exponentially decaying schedule: the rate falls from `initial` at epoch 0
/// to `initial * final_fraction` at the last epoch.
pub(crate) fn lr_at(initial: f64, final_fraction: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 || final_fraction >= 1.0 {
        return initial;
    }
    let x = epoch as f64 / (epochs - 1) as f64;
    initial * final_fraction.powf(x)
}
