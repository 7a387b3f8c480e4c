//! Flat key-value runtime configuration: parsed from `key = value` files with
//! `#` comments, overridable key-by-key (the CLI exposes one flag per key).

use std::path::Path;

use nalgebra::SMatrix;
use thiserror::Error;

use crate::ekf::{NoiseParams, QDtExponents};
use crate::gaussian::FitConfig;
use crate::scan_match::{KeyframeCriteria, MatchConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for key `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{path}:{line}: expected `key = value`")]
    Malformed { path: String, line: usize },
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A value that is either derived from other settings or pinned explicitly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AutoF64 {
    Auto,
    Fixed(f64),
}

impl AutoF64 {
    pub fn resolve(&self, auto_value: f64) -> f64 {
        match self {
            AutoF64::Auto => auto_value,
            AutoF64::Fixed(v) => *v,
        }
    }
}

pub(crate) trait ConfigValue: Sized {
    fn parse_cfg(s: &str) -> Result<Self, String>;
    fn show(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn show(&self) -> String {
        format!("{self}")
    }
}

impl ConfigValue for u64 {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn show(&self) -> String {
        format!("{self}")
    }
}

impl ConfigValue for usize {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn show(&self) -> String {
        format!("{self}")
    }
}

impl ConfigValue for bool {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "on" => Ok(true),
            "0" | "false" | "no" | "off" => Ok(false),
            _ => Err("expected a boolean (1/0/true/false)".into()),
        }
    }
    fn show(&self) -> String {
        format!("{self}")
    }
}

impl ConfigValue for String {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        Ok(s.to_string())
    }
    fn show(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for AutoF64 {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(AutoF64::Auto)
        } else {
            s.parse().map(AutoF64::Fixed).map_err(|e| format!("{e}"))
        }
    }
    fn show(&self) -> String {
        match self {
            AutoF64::Auto => "auto".into(),
            AutoF64::Fixed(v) => format!("{v}"),
        }
    }
}

impl ConfigValue for i32 {
    fn parse_cfg(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e| format!("{e}"))
    }
    fn show(&self) -> String {
        format!("{self}")
    }
}

macro_rules! config_keys {
    ($( $field:ident : $ty:ty = $default:expr, $help:expr; )+) => {
        /// Every tunable of the toolkit, one flat namespace.
        #[derive(Clone, Debug)]
        pub struct Config {
            $( pub $field: $ty, )+
        }

        impl Default for Config {
            fn default() -> Self {
                Self { $( $field: $default, )+ }
            }
        }

        impl Config {
            /// `(key, current value, help)` rows for every recognized key.
            pub fn schema(&self) -> Vec<(&'static str, String, &'static str)> {
                vec![ $( (stringify!($field), ConfigValue::show(&self.$field), $help), )+ ]
            }

            /// Sets one key from its textual value.
            pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $(
                        stringify!($field) => {
                            self.$field = ConfigValue::parse_cfg(value).map_err(|reason| {
                                ConfigError::BadValue {
                                    key: key.into(),
                                    value: value.into(),
                                    reason,
                                }
                            })?;
                            Ok(())
                        }
                    )+
                    _ => Err(ConfigError::UnknownKey(key.into())),
                }
            }
        }
    };
}

config_keys! {
    // General
    seed: u64 = 0, "Base RNG seed for every stochastic stage";
    doppler_sign: f64 = 1.0, "Doppler sign convention of the dataset (+1: positive = receding)";
    radar_sigma: f64 = 0.05, "Expected radar point position noise sigma [m]";

    // Gaussian modeling
    n_gaussians: usize = 0, "Gaussians per keyframe model (0 = points/10, capped)";
    n_gaussians_max: usize = 150, "Cap for the automatic Gaussian count rule";
    s_min: AutoF64 = AutoF64::Auto, "Minimum log scale (auto = ln(radar_sigma))";
    s_disc: AutoF64 = AutoF64::Auto, "Thin-disc log-size prior (auto = s_min)";
    gm_epochs: usize = 100, "Gaussian fitting epoch budget";
    gm_lr_mu: f64 = 1e-2, "Fitting learning rate for centers";
    gm_lr_scale: f64 = 1e-2, "Fitting learning rate for log scales";
    gm_lr_rot: f64 = 1e-2, "Fitting learning rate for rotations";
    gm_lr_decay: f64 = 0.1, "Final/initial learning-rate fraction for fitting";
    gm_early_stop_eps: f64 = 1e-6, "Stop when the loss improves less than this over the window";
    gm_early_stop_window: usize = 10, "Early-stop window in epochs";

    // Scan matching
    sm_enabled: bool = true, "Apply scan-match observations (off = egovelocity-only)";
    sm_hypotheses: usize = 16, "Pose hypotheses per registration";
    sm_d_max: f64 = 4.0, "Mahalanobis distance clamp";
    sm_downsample: usize = 512, "Scan subsample size per registration";
    sm_epochs: usize = 50, "Registration epoch budget";
    sm_lr_trans: f64 = 0.05, "Registration translation learning rate [m]";
    sm_lr_rot: f64 = 0.01, "Registration rotation learning rate [rad]";
    sm_lr_decay: f64 = 0.1, "Final/initial learning-rate fraction for registration";
    sm_disp_x: f64 = 0.3, "Hypothesis dispersion sigma, x [m]";
    sm_disp_y: f64 = 0.3, "Hypothesis dispersion sigma, y [m]";
    sm_disp_z: f64 = 0.1, "Hypothesis dispersion sigma, z [m]";
    sm_disp_roll_deg: f64 = 0.5, "Hypothesis dispersion sigma, roll [deg]";
    sm_disp_pitch_deg: f64 = 0.5, "Hypothesis dispersion sigma, pitch [deg]";
    sm_disp_yaw_deg: f64 = 2.0, "Hypothesis dispersion sigma, yaw [deg]";
    sm_min_points: usize = 10, "Minimum inlier points to attempt registration";

    // Keyframing
    kf_dist_max: f64 = 2.0, "Keyframe promotion distance threshold [m]";
    kf_angle_max_deg: f64 = 15.0, "Keyframe promotion rotation threshold [deg]";

    // Egovelocity RANSAC
    ransac_iterations: usize = 100, "RANSAC iterations for egovelocity";
    ransac_threshold: f64 = 0.15, "RANSAC inlier threshold [m/s]";

    // EKF noise model
    sigma_v: f64 = 1e-3, "Velocity process noise (per step)";
    sigma_theta: f64 = 1e-4, "Attitude process noise (per step)";
    sigma_a: f64 = 2e-2, "Accelerometer white noise density";
    sigma_w: f64 = 2e-3, "Gyroscope white noise density";
    sigma_ba: f64 = 2e-4, "Accelerometer bias random-walk density";
    sigma_bw: f64 = 2e-5, "Gyroscope bias random-walk density";
    eta_ba: f64 = 5e-2, "Initial accelerometer bias sigma";
    eta_bw: f64 = 5e-3, "Initial gyroscope bias sigma";
    eta_theta: f64 = 2e-2, "Initial roll/pitch attitude sigma [rad]";
    q_exp_v: i32 = 0, "dt exponent on the velocity process block";
    q_exp_theta: i32 = 0, "dt exponent on the attitude process block";
    q_exp_a: i32 = -1, "dt exponent on the accelerometer noise block";
    q_exp_w: i32 = -1, "dt exponent on the gyroscope noise block";
    q_exp_ba: i32 = 1, "dt exponent on the accelerometer walk block";
    q_exp_bw: i32 = 1, "dt exponent on the gyroscope walk block";
    gate_enabled: bool = true, "Chi-square innovation gating of observations";
    r_sm_xy: f64 = 0.05, "Scan-match observation sigma, x/y [m]";
    r_sm_yaw_deg: f64 = 1.0, "Scan-match observation sigma, yaw [deg]";

    // Synthetic data generation
    synth_scene: String = "corridor".to_string(), "Scene preset: corridor | room";
    synth_traj: String = "straight".to_string(), "Trajectory preset: stationary | straight | circle";
    synth_duration: f64 = 20.0, "Synthetic run duration [s]";
    synth_speed: f64 = 2.0, "Cruise speed [m/s]";
    synth_imu_rate: f64 = 100.0, "IMU rate [Hz]";
    synth_radar_rate: f64 = 10.0, "Radar rate [Hz]";
    synth_scan_points: usize = 400, "Target visible points per scan";
    synth_range: f64 = 40.0, "Radar maximum range [m]";
    synth_fov_az_deg: f64 = 70.0, "Radar azimuth half field of view [deg]";
    synth_fov_el_deg: f64 = 30.0, "Radar elevation half field of view [deg]";
    synth_noise: bool = true, "Simulate sensor noise and biases";
    synth_radar_sigma: f64 = 0.05, "Simulated radar position noise sigma [m]";
    synth_doppler_sigma: f64 = 0.05, "Simulated Doppler noise sigma [m/s]";
    synth_circle_radius: f64 = 8.0, "Circle trajectory radius [m]";
    synth_corridor_length: f64 = 30.0, "Corridor scene length [m]";
    synth_corridor_width: f64 = 6.0, "Corridor scene width [m]";
    synth_corridor_height: f64 = 4.0, "Corridor scene height [m]";
    synth_room_size: f64 = 16.0, "Room scene edge length [m]";
    synth_calib_yaw_deg: f64 = 0.0, "Radar-to-body extrinsic yaw [deg]";

    // Evaluation
    eval_lengths: String = "10,20,40,80".to_string(), "Sub-trajectory lengths [m], comma separated";
    eval_max_gap: f64 = 0.05, "Timestamp association gap limit [s]";
}

impl Config {
    /// Loads a `key = value` file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        cfg.load_file(path)?;
        Ok(cfg)
    }

    /// Applies a `key = value` file on top of the current settings.
    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    path: path.display().to_string(),
                    line: idx + 1,
                });
            };
            self.set_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn s_min_value(&self) -> f64 {
        self.s_min.resolve(self.radar_sigma.ln())
    }

    pub fn s_disc_value(&self) -> f64 {
        self.s_disc.resolve(self.s_min_value())
    }

    /// Gaussian count for a cloud of the given size.
    pub fn gaussian_count(&self, cloud_size: usize) -> usize {
        if self.n_gaussians > 0 {
            self.n_gaussians
        } else {
            crate::gaussian::default_gaussian_count(cloud_size, self.n_gaussians_max)
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            epochs: self.gm_epochs,
            lr_mu: self.gm_lr_mu,
            lr_scale: self.gm_lr_scale,
            lr_rot: self.gm_lr_rot,
            lr_decay: self.gm_lr_decay,
            early_stop_eps: self.gm_early_stop_eps,
            early_stop_window: self.gm_early_stop_window,
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            n_hypotheses: self.sm_hypotheses,
            mahal_clamp: self.sm_d_max,
            downsample_target: self.sm_downsample,
            dispersion: [
                self.sm_disp_x,
                self.sm_disp_y,
                self.sm_disp_z,
                self.sm_disp_roll_deg.to_radians(),
                self.sm_disp_pitch_deg.to_radians(),
                self.sm_disp_yaw_deg.to_radians(),
            ],
            epochs: self.sm_epochs,
            lr_translation: self.sm_lr_trans,
            lr_rotation: self.sm_lr_rot,
            lr_decay: self.sm_lr_decay,
        }
    }

    pub fn keyframe_criteria(&self) -> KeyframeCriteria {
        KeyframeCriteria {
            kf_dist_max: self.kf_dist_max,
            kf_angle_max: self.kf_angle_max_deg.to_radians(),
        }
    }

    pub fn noise_params(&self) -> NoiseParams {
        NoiseParams {
            sigma_v: self.sigma_v,
            sigma_theta: self.sigma_theta,
            sigma_a: self.sigma_a,
            sigma_w: self.sigma_w,
            sigma_ba: self.sigma_ba,
            sigma_bw: self.sigma_bw,
            eta_ba: self.eta_ba,
            eta_bw: self.eta_bw,
            eta_theta: self.eta_theta,
            dt_exponents: QDtExponents {
                v: self.q_exp_v,
                theta: self.q_exp_theta,
                a: self.q_exp_a,
                w: self.q_exp_w,
                ba: self.q_exp_ba,
                bw: self.q_exp_bw,
            },
        }
    }

    /// Fixed 6x6 scan-match observation covariance. Only the x, y, and yaw
    /// entries survive the constraint selector; the z/roll/pitch diagonal is
    /// filled with the same values for completeness.
    pub fn scanmatch_r6(&self) -> SMatrix<f64, 6, 6> {
        let xy = self.r_sm_xy * self.r_sm_xy;
        let yaw = self.r_sm_yaw_deg.to_radians().powi(2);
        SMatrix::<f64, 6, 6>::from_diagonal(&nalgebra::SVector::<f64, 6>::from_column_slice(&[
            xy, xy, xy, yaw, yaw, yaw,
        ]))
    }

    pub fn gate(&self) -> Option<f64> {
        self.gate_enabled.then_some(crate::ekf::CHI2_GATE_3DOF)
    }

    pub fn eval_lengths_vec(&self) -> Result<Vec<f64>, ConfigError> {
        self.eval_lengths
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| ConfigError::BadValue {
                    key: "eval_lengths".into(),
                    value: self.eval_lengths.clone(),
                    reason: format!("{e}"),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_file_with_comments() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# comment line").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "seed = 42").unwrap();
        writeln!(f, "sm_hypotheses = 8  # inline comment").unwrap();
        writeln!(f, "s_min = -2.5").unwrap();
        writeln!(f, "synth_scene = room").unwrap();
        let cfg = Config::from_file(f.path()).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.sm_hypotheses, 8);
        assert_eq!(cfg.s_min, AutoF64::Fixed(-2.5));
        assert_eq!(cfg.synth_scene, "room");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let mut cfg = Config::default();
        assert!(matches!(cfg.set_key("no_such_key", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.set_key("seed", "abc"), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn auto_scale_defaults_track_radar_sigma() {
        let mut cfg = Config::default();
        assert!((cfg.s_min_value() - (0.05f64).ln()).abs() < 1e-12);
        assert_eq!(cfg.s_disc_value(), cfg.s_min_value());
        cfg.set_key("radar_sigma", "0.1").unwrap();
        assert!((cfg.s_min_value() - (0.1f64).ln()).abs() < 1e-12);
        cfg.set_key("s_disc", "-1.0").unwrap();
        assert_eq!(cfg.s_disc_value(), -1.0);
    }

    #[test]
    fn gaussian_count_rule() {
        let cfg = Config::default();
        assert_eq!(cfg.gaussian_count(40), 4);
        assert_eq!(cfg.gaussian_count(5), 1);
        assert_eq!(cfg.gaussian_count(10_000), 150);
    }

    #[test]
    fn eval_lengths_parse() {
        let cfg = Config::default();
        assert_eq!(cfg.eval_lengths_vec().unwrap(), vec![10.0, 20.0, 40.0, 80.0]);
    }
}
