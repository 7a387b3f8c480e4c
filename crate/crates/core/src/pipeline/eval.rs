//! Trajectory evaluation: relative translation (% of distance) and rotation
//! (degrees per meter) over fixed sub-trajectory lengths, plus absolute
//! trajectory error for ablations.

use super::trajectory::Trajectory;
use super::PipelineError;

/// Mean relative errors for one sub-trajectory length.
#[derive(Clone, Copy, Debug)]
pub struct EvalRow {
    pub length: f64,
    pub t_rel_pct: f64,
    pub r_rel_deg_per_m: f64,
    pub samples: usize,
}

/// Per-length rows plus the mean over lengths.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_t_rel_pct: f64,
    pub mean_r_rel_deg_per_m: f64,
}

impl EvalReport {
    /// Aligned text table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>10}  {:>12}  {:>18}  {:>8}\n",
            "length_m", "t_rel_pct", "r_rel_deg_per_m", "samples"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:>10.1}  {:>12.4}  {:>18.6}  {:>8}\n",
                row.length, row.t_rel_pct, row.r_rel_deg_per_m, row.samples
            ));
        }
        out.push_str(&format!(
            "{:>10}  {:>12.4}  {:>18.6}  {:>8}\n",
            "mean", self.mean_t_rel_pct, self.mean_r_rel_deg_per_m, ""
        ));
        out
    }

    /// Machine-readable rows, one per evaluated length.
    pub fn csv(&self) -> String {
        let mut out = String::from("length,t_rel_pct,r_rel_deg_per_m\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.length, row.t_rel_pct, row.r_rel_deg_per_m
            ));
        }
        out
    }
}

/// Nearest-neighbor timestamp association within `max_gap`, monotone in the
/// reference index.
fn associate(est: &Trajectory, reference: &Trajectory, max_gap: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let ref_times: Vec<f64> = reference.poses.iter().map(|(t, _)| *t).collect();
    let mut last_ref: Option<usize> = None;
    for (ei, (t, _)) in est.poses.iter().enumerate() {
        let idx = ref_times.partition_point(|rt| rt < t);
        let mut best: Option<usize> = None;
        for cand in [idx.wrapping_sub(1), idx] {
            if cand < ref_times.len() {
                let gap = (ref_times[cand] - t).abs();
                if gap <= max_gap && best.is_none_or(|b| gap < (ref_times[b] - t).abs()) {
                    best = Some(cand);
                }
            }
        }
        if let Some(ri) = best {
            if last_ref.is_none_or(|l| ri > l) {
                pairs.push((ei, ri));
                last_ref = Some(ri);
            }
        }
    }
    pairs
}

/// Relative-pose errors over the given sub-trajectory lengths (meters of
/// reference arc length). A rigid transform applied to both trajectories
/// leaves the result unchanged.
pub fn evaluate_relative_errors(
    est: &Trajectory,
    reference: &Trajectory,
    lengths: &[f64],
    max_gap: f64,
) -> Result<EvalReport, PipelineError> {
    if reference.len() < 2 {
        return Err(PipelineError::Invalid("reference needs at least 2 poses".into()));
    }
    let pairs = associate(est, reference, max_gap);
    if pairs.len() < 2 {
        return Err(PipelineError::Invalid(
            "trajectories do not overlap in time (no associations)".into(),
        ));
    }

    // Cumulative reference arc length along the associated poses.
    let mut cum = vec![0.0f64; pairs.len()];
    for k in 1..pairs.len() {
        let (_, ri_prev) = pairs[k - 1];
        let (_, ri) = pairs[k];
        let d = (reference.poses[ri].1.t - reference.poses[ri_prev].1.t).norm();
        cum[k] = cum[k - 1] + d;
    }

    let mut rows = Vec::new();
    for &length in lengths {
        let mut t_sum = 0.0;
        let mut r_sum = 0.0;
        let mut count = 0usize;
        let mut end = 0usize;
        for start in 0..pairs.len() {
            if end <= start {
                end = start + 1;
            }
            while end < pairs.len() && cum[end] - cum[start] < length {
                end += 1;
            }
            if end >= pairs.len() {
                break;
            }
            let arc = cum[end] - cum[start];
            if arc <= 0.0 {
                continue;
            }
            let (e0, r0) = pairs[start];
            let (e1, r1) = pairs[end];
            let ref_rel = reference.poses[r0].1.relative(&reference.poses[r1].1);
            let est_rel = est.poses[e0].1.relative(&est.poses[e1].1);
            let err = ref_rel.relative(&est_rel);
            t_sum += 100.0 * err.t.norm() / arc;
            r_sum += err.rotation_angle().to_degrees() / arc;
            count += 1;
        }
        if count > 0 {
            rows.push(EvalRow {
                length,
                t_rel_pct: t_sum / count as f64,
                r_rel_deg_per_m: r_sum / count as f64,
                samples: count,
            });
        }
    }
    if rows.is_empty() {
        return Err(PipelineError::Invalid(
            "no sub-trajectory of the requested lengths fits the overlap".into(),
        ));
    }
    let mean_t = rows.iter().map(|r| r.t_rel_pct).sum::<f64>() / rows.len() as f64;
    let mean_r = rows.iter().map(|r| r.r_rel_deg_per_m).sum::<f64>() / rows.len() as f64;
    Ok(EvalReport { rows, mean_t_rel_pct: mean_t, mean_r_rel_deg_per_m: mean_r })
}

/// Root-mean-square absolute position error over associated poses, without
/// any alignment (odometry shares the reference origin).
pub fn ate_rmse(est: &Trajectory, reference: &Trajectory, max_gap: f64) -> Result<f64, PipelineError> {
    let pairs = associate(est, reference, max_gap);
    if pairs.is_empty() {
        return Err(PipelineError::Invalid("trajectories do not overlap in time".into()));
    }
    let ss: f64 = pairs
        .iter()
        .map(|&(e, r)| (est.poses[e].1.t - reference.poses[r].1.t).norm_squared())
        .sum();
    Ok((ss / pairs.len() as f64).sqrt())
}

/// Per-axis dump (`t,x,y,z` CSV) for plotting.
pub fn trajectory_xyz_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,x,y,z\n");
    for (t, pose) in &traj.poses {
        out.push_str(&format!("{:.9},{},{},{}\n", t, pose.t.x, pose.t.y, pose.t.z));
    }
    out
}
