//! Synthetic dataset generation: structured scenes sampled into surface
//! points, analytic trajectories differentiated into IMU readings (gravity,
//! biases, Kalibr-style noise), and simulated radar scans with per-point
//! Doppler, all mutually consistent with the filter's conventions.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::Config;
use super::dataset::Dataset;
use super::trajectory::{fmt_float, Trajectory};
use super::PipelineError;
use crate::derive_seed;
use crate::egovel::{RadarPoint, RadarScan};
use crate::ekf::{gravity, ImuSample};
use crate::geom::{PoseSE3, UnitQuat};

const SEED_IMU: u64 = 0x1a10;
const SEED_SCAN: u64 = 0x5ca0;
const SPEED_RAMP_S: f64 = 2.0;

/// Generated dataset plus the exact trajectory at scan timestamps.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub dataset: Dataset,
    pub truth: Trajectory,
}

/// Analytic trajectory sample: world position, velocity, acceleration, yaw
/// and yaw rate (ground trajectories, attitude is yaw-only).
struct TrajState {
    p: Vector3<f64>,
    v: Vector3<f64>,
    a: Vector3<f64>,
    yaw: f64,
    yaw_rate: f64,
}

impl TrajState {
    fn pose(&self) -> PoseSE3 {
        PoseSE3::new(self.p, UnitQuat::from_axis_angle(&Vector3::z(), self.yaw))
    }
}

enum TrajModel {
    Stationary,
    Straight { speed: f64 },
    Circle { radius: f64, speed: f64 },
}

impl TrajModel {
    fn from_config(cfg: &Config) -> Result<Self, PipelineError> {
        match cfg.synth_traj.as_str() {
            "stationary" => Ok(Self::Stationary),
            "straight" => Ok(Self::Straight { speed: cfg.synth_speed }),
            "circle" => Ok(Self::Circle { radius: cfg.synth_circle_radius, speed: cfg.synth_speed }),
            other => Err(PipelineError::Invalid(format!("unknown trajectory preset `{other}`"))),
        }
    }

    /// Smoothly ramped path length and its first two derivatives.
    fn arc(speed: f64, t: f64) -> (f64, f64, f64) {
        use std::f64::consts::PI;
        if t >= SPEED_RAMP_S {
            (speed * (0.5 * SPEED_RAMP_S + (t - SPEED_RAMP_S)), speed, 0.0)
        } else {
            let phase = PI * t / SPEED_RAMP_S;
            let s = speed * 0.5 * (t - SPEED_RAMP_S / PI * phase.sin());
            let v = speed * 0.5 * (1.0 - phase.cos());
            let a = speed * 0.5 * PI / SPEED_RAMP_S * phase.sin();
            (s, v, a)
        }
    }

    fn sample(&self, t: f64) -> TrajState {
        match self {
            Self::Stationary => TrajState {
                p: Vector3::zeros(),
                v: Vector3::zeros(),
                a: Vector3::zeros(),
                yaw: 0.0,
                yaw_rate: 0.0,
            },
            Self::Straight { speed } => {
                let (s, v, a) = Self::arc(*speed, t);
                TrajState {
                    p: Vector3::new(s, 0.0, 0.0),
                    v: Vector3::new(v, 0.0, 0.0),
                    a: Vector3::new(a, 0.0, 0.0),
                    yaw: 0.0,
                    yaw_rate: 0.0,
                }
            }
            Self::Circle { radius, speed } => {
                let (s, v, a) = Self::arc(*speed, t);
                let phi = s / radius;
                let rate = v / radius;
                let (sin, cos) = phi.sin_cos();
                TrajState {
                    p: Vector3::new(radius * sin, radius * (1.0 - cos), 0.0),
                    v: Vector3::new(v * cos, v * sin, 0.0),
                    a: Vector3::new(a * cos - v * rate * sin, a * sin + v * rate * cos, 0.0),
                    yaw: phi,
                    yaw_rate: rate,
                }
            }
        }
    }
}

/// A rectangular surface patch; radar returns scatter continuously over it,
/// so consecutive scans sample different physical points (no lattice
/// aliasing).
struct Surface {
    origin: Vector3<f64>,
    e1: Vector3<f64>,
    len1: f64,
    e2: Vector3<f64>,
    len2: f64,
    /// Sampling weight (area times a relative return density).
    weight: f64,
}

impl Surface {
    fn new(origin: Vector3<f64>, e1: Vector3<f64>, len1: f64, e2: Vector3<f64>, len2: f64) -> Self {
        Self { origin, e1, len1, e2, len2, weight: len1 * len2 }
    }

    fn density(mut self, factor: f64) -> Self {
        self.weight *= factor;
        self
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let u: f64 = rng.random_range(0.0..self.len1);
        let v: f64 = rng.random_range(0.0..self.len2);
        self.origin + self.e1 * u + self.e2 * v
    }
}

fn add_box(out: &mut Vec<Surface>, corner: Vector3<f64>, size: Vector3<f64>) {
    let (x, y, z) = (Vector3::x(), Vector3::y(), Vector3::z());
    // Four side faces plus the top.
    out.push(Surface::new(corner, x, size.x, z, size.z));
    out.push(Surface::new(corner + y * size.y, x, size.x, z, size.z));
    out.push(Surface::new(corner, y, size.y, z, size.z));
    out.push(Surface::new(corner + x * size.x, y, size.y, z, size.z));
    out.push(Surface::new(corner + z * size.z, x, size.x, y, size.y));
}

fn build_scene(cfg: &Config) -> Result<Vec<Surface>, PipelineError> {
    let mut scene = Vec::new();
    match cfg.synth_scene.as_str() {
        "corridor" => {
            let len = cfg.synth_corridor_length;
            let w = cfg.synth_corridor_width;
            let h = cfg.synth_corridor_height;
            let x0 = Vector3::new(-5.0, 0.0, 0.0);
            let total = len + 10.0;
            // Side walls, sparse floor, end wall.
            scene.push(Surface::new(x0 + Vector3::new(0.0, -w / 2.0, 0.2), Vector3::x(), total, Vector3::z(), h));
            scene.push(Surface::new(x0 + Vector3::new(0.0, w / 2.0, 0.2), Vector3::x(), total, Vector3::z(), h));
            scene.push(Surface::new(x0 + Vector3::new(0.0, -w / 2.0, 0.0), Vector3::x(), total, Vector3::y(), w).density(0.25));
            scene.push(Surface::new(Vector3::new(len + 5.0, -w / 2.0, 0.2), Vector3::y(), w, Vector3::z(), h));
            // Alternating boxes along the walls break the translational symmetry.
            let mut side = 1.0;
            let mut bx = 2.0;
            while bx < len + 4.0 {
                let corner = Vector3::new(bx, side * (w / 2.0 - 1.0) - 0.4, 0.0);
                add_box(&mut scene, corner, Vector3::new(0.8, 0.8, 1.2));
                side = -side;
                bx += 4.0;
            }
        }
        "room" => {
            // Square room centered a quarter-size up the y axis so that the
            // circle trajectory (which starts at the origin and turns about
            // (0, radius)) stays concentric with comfortable wall clearance.
            let s = cfg.synth_room_size;
            let h = 3.0;
            let half = s / 2.0;
            let cy = s / 4.0;
            let sw = Vector3::new(-half, cy - half, 0.0);
            scene.push(Surface::new(sw + Vector3::new(0.0, 0.0, 0.2), Vector3::x(), s, Vector3::z(), h));
            scene.push(Surface::new(sw + Vector3::new(0.0, s, 0.2), Vector3::x(), s, Vector3::z(), h));
            scene.push(Surface::new(sw + Vector3::new(0.0, 0.0, 0.2), Vector3::y(), s, Vector3::z(), h));
            scene.push(Surface::new(sw + Vector3::new(s, 0.0, 0.2), Vector3::y(), s, Vector3::z(), h));
            scene.push(Surface::new(sw, Vector3::x(), s, Vector3::y(), s).density(0.25));
            // Pillars on a ring between the trajectory and the walls, plus a
            // couple of boxes near the middle.
            let ring = 0.72 * half;
            for k in 0..6 {
                let ang = k as f64 * std::f64::consts::PI / 3.0 + 0.3;
                let c = Vector3::new(ring * ang.cos() - 0.2, cy + ring * ang.sin() - 0.2, 0.0);
                add_box(&mut scene, c, Vector3::new(0.4, 0.4, 2.2));
            }
            add_box(&mut scene, Vector3::new(1.0, cy - 1.1, 0.0), Vector3::new(0.6, 0.6, 1.0));
            add_box(&mut scene, Vector3::new(-1.7, cy + 0.6, 0.0), Vector3::new(0.7, 0.7, 1.4));
        }
        other => return Err(PipelineError::Invalid(format!("unknown scene preset `{other}`"))),
    }
    Ok(scene)
}

/// Simulates one radar scan: surfaces are sampled continuously (weighted by
/// area), filtered by range and field of view in the radar frame, and turned
/// into returns with per-point Doppler.
#[allow(clippy::too_many_arguments)]
fn simulate_scan(
    cfg: &Config,
    scene: &[Surface],
    pose: &PoseSE3,
    v_body: &Vector3<f64>,
    c_radar_body: &Matrix3<f64>,
    timestamp: f64,
    noisy: bool,
    rng: &mut ChaCha8Rng,
) -> RadarScan {
    let az_max = cfg.synth_fov_az_deg.to_radians();
    let el_max = cfg.synth_fov_el_deg.to_radians();
    let v_radar = c_radar_body * v_body;
    let total_weight: f64 = scene.iter().map(|s| s.weight).sum();

    let target = cfg.synth_scan_points;
    let mut points = Vec::with_capacity(target);
    let mut tries = 0usize;
    while points.len() < target && tries < target * 40 {
        tries += 1;
        let mut pick = rng.random_range(0.0..total_weight);
        let mut surface = &scene[0];
        for s in scene {
            pick -= s.weight;
            if pick <= 0.0 {
                surface = s;
                break;
            }
        }
        let world = surface.sample(rng);
        let body = pose.q.conjugate().rotate(&(world - pose.t));
        let radar = c_radar_body * body;
        let range = radar.norm();
        if !(0.5..=cfg.synth_range).contains(&range) {
            continue;
        }
        let az = radar.y.atan2(radar.x);
        let el = radar.z.atan2(radar.fixed_rows::<2>(0).norm());
        if az.abs() > az_max || el.abs() > el_max {
            continue;
        }
        let dir = radar / range;
        let mut doppler = -dir.dot(&v_radar);
        let mut position = radar;
        if noisy {
            position += Vector3::from_fn(|_, _| {
                let z: f64 = StandardNormal.sample(rng);
                cfg.synth_radar_sigma * z
            });
            let z: f64 = StandardNormal.sample(rng);
            doppler += cfg.synth_doppler_sigma * z;
        }
        points.push(RadarPoint { position, doppler, intensity: 10.0 });
    }
    RadarScan { timestamp, points }
}

/// Generates a full synthetic dataset (IMU, scans, calibration, ground
/// truth), byte-reproducible for a fixed config.
pub fn generate_synthetic(cfg: &Config) -> Result<SynthData, PipelineError> {
    let traj = TrajModel::from_config(cfg)?;
    let scene = build_scene(cfg)?;

    let c_body_radar =
        UnitQuat::from_axis_angle(&Vector3::z(), cfg.synth_calib_yaw_deg.to_radians())
            .to_rotation_matrix();
    let c_radar_body = c_body_radar.transpose();

    let noisy = cfg.synth_noise;
    let g = gravity();

    // IMU stream with midpoint sampling so first-order strapdown stays tight.
    let imu_dt = 1.0 / cfg.synth_imu_rate;
    let n_imu = (cfg.synth_duration * cfg.synth_imu_rate).round() as usize;
    let mut imu_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_IMU));
    let mut b_a = Vector3::zeros();
    let mut b_w = Vector3::zeros();
    if noisy {
        b_a = Vector3::from_fn(|_, _| {
            let z: f64 = StandardNormal.sample(&mut imu_rng);
            cfg.eta_ba * z
        });
        b_w = Vector3::from_fn(|_, _| {
            let z: f64 = StandardNormal.sample(&mut imu_rng);
            cfg.eta_bw * z
        });
    }
    let mut imu = Vec::with_capacity(n_imu + 1);
    for k in 0..=n_imu {
        let t = k as f64 * imu_dt;
        let mid = (t - 0.5 * imu_dt).max(0.0);
        let s = traj.sample(mid);
        let c_bw = s.pose().q.conjugate();
        let mut accel = c_bw.rotate(&(s.a - g));
        let mut gyro = Vector3::new(0.0, 0.0, s.yaw_rate);
        if noisy {
            let sd_a = cfg.sigma_a / imu_dt.sqrt();
            let sd_w = cfg.sigma_w / imu_dt.sqrt();
            accel += b_a
                + Vector3::from_fn(|_, _| {
                    let z: f64 = StandardNormal.sample(&mut imu_rng);
                    sd_a * z
                });
            gyro += b_w
                + Vector3::from_fn(|_, _| {
                    let z: f64 = StandardNormal.sample(&mut imu_rng);
                    sd_w * z
                });
            b_a += Vector3::from_fn(|_, _| {
                let z: f64 = StandardNormal.sample(&mut imu_rng);
                cfg.sigma_ba * imu_dt.sqrt() * z
            });
            b_w += Vector3::from_fn(|_, _| {
                let z: f64 = StandardNormal.sample(&mut imu_rng);
                cfg.sigma_bw * imu_dt.sqrt() * z
            });
        }
        imu.push(ImuSample { timestamp: t, accel, gyro });
    }

    // Radar scans plus ground truth at scan timestamps.
    let n_scans = (cfg.synth_duration * cfg.synth_radar_rate).floor() as usize;
    let mut scans = Vec::with_capacity(n_scans);
    let mut truth = Trajectory::default();
    for j in 1..=n_scans {
        let t = j as f64 / cfg.synth_radar_rate;
        let s = traj.sample(t);
        let pose = s.pose();
        let v_body = pose.q.conjugate().rotate(&s.v);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SEED_SCAN + j as u64));
        let scan =
            simulate_scan(cfg, &scene, &pose, &v_body, &c_radar_body, t, noisy, &mut rng);
        scans.push(scan);
        truth.push(t, pose);
    }

    Ok(SynthData {
        dataset: Dataset {
            imu,
            scans,
            c_body_radar,
            groundtruth: Some(truth.clone()),
            warnings: Vec::new(),
        },
        truth,
    })
}

/// Writes the dataset in the directory layout the loader expects. Doppler
/// values are stored under the given sign convention.
pub fn write_synthetic(data: &SynthData, dir: &Path, doppler_sign: f64) -> Result<(), PipelineError> {
    let io = |p: &Path, e: std::io::Error| PipelineError::Io {
        path: p.display().to_string(),
        source: e,
    };
    std::fs::create_dir_all(dir.join("scans")).map_err(|e| io(dir, e))?;

    let mut imu_text = String::from("t,ax,ay,az,wx,wy,wz\n");
    for s in &data.dataset.imu {
        imu_text.push_str(&format!(
            "{:.9},{},{},{},{},{},{}\n",
            s.timestamp,
            fmt_float(s.accel.x),
            fmt_float(s.accel.y),
            fmt_float(s.accel.z),
            fmt_float(s.gyro.x),
            fmt_float(s.gyro.y),
            fmt_float(s.gyro.z),
        ));
    }
    let imu_path = dir.join("imu.csv");
    std::fs::write(&imu_path, imu_text).map_err(|e| io(&imu_path, e))?;

    for (idx, scan) in data.dataset.scans.iter().enumerate() {
        let mut text = String::from("t,x,y,z,doppler,intensity\n");
        for p in &scan.points {
            text.push_str(&format!(
                "{:.9},{},{},{},{},{}\n",
                scan.timestamp,
                fmt_float(p.position.x),
                fmt_float(p.position.y),
                fmt_float(p.position.z),
                fmt_float(p.doppler * doppler_sign),
                fmt_float(p.intensity),
            ));
        }
        let path = dir.join(format!("scans/{idx:06}.csv"));
        std::fs::write(&path, text).map_err(|e| io(&path, e))?;
    }

    let c = &data.dataset.c_body_radar;
    let mut calib = String::new();
    for r in 0..3 {
        calib.push_str(&format!(
            "{} {} {}\n",
            fmt_float(c[(r, 0)]),
            fmt_float(c[(r, 1)]),
            fmt_float(c[(r, 2)])
        ));
    }
    let calib_path = dir.join("calib.txt");
    std::fs::write(&calib_path, calib).map_err(|e| io(&calib_path, e))?;

    super::trajectory::write_trajectory(&data.truth, &dir.join("groundtruth.txt"))
}
