//! Radar-inertial odometry built on 3D Gaussian scan summaries.
//!
//! The crate models noisy radar point clouds as collections of freely
//! positioned trivariate Gaussians, registers incoming scans against those
//! models by optimizing several pose hypotheses at once, and fuses the
//! results with IMU strapdown and Doppler egovelocity in an error-state
//! Kalman filter. The [`pipeline`] module ties everything into a batch
//! odometry loop with dataset I/O, synthetic data generation, and
//! relative-error trajectory evaluation.

pub mod egovel;
pub mod ekf;
pub mod gaussian;
pub mod geom;
mod optim;
pub mod pipeline;
pub mod scan_match;

pub use egovel::{estimate_egovelocity, EgovelEstimate, RadarPoint, RadarScan, RansacConfig};
pub use ekf::{EkfState, ImuSample, NoiseParams, UpdateOutcome};
pub use gaussian::{Assignment, Gaussian, GaussianModel};
pub use geom::{skew, PoseSE3, TangentRotation, UnitQuat};
pub use pipeline::config::Config;
pub use scan_match::{KeyframeCriteria, MatchConfig, PoseHypothesis};

/// SplitMix64 step, used to derive independent substream seeds from a base
/// seed without correlated state.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
