use nalgebra::Vector3;
use rio_core::pipeline::synth::generate_synthetic;
use rio_core::egovel::{estimate_egovelocity, RansacConfig};
use rio_core::gaussian::{init_model, fit_model};
use rio_core::scan_match::register_scan;
use rio_core::Config;

fn reg_errors(cfg: &Config, label: &str) {
    let data = generate_synthetic(cfg).unwrap();
    let scans = &data.dataset.scans;
    let truth = &data.truth;
    let mcfg = cfg.match_config();
    let kf_pose = truth.poses[0].1;
    let inliers = |i: usize| -> Vec<Vector3<f64>> {
        let est = estimate_egovelocity(&scans[i], &RansacConfig::default()).unwrap();
        scans[i].points.iter().zip(est.inlier_mask.iter())
            .filter(|(_, &k)| k).map(|(p, _)| p.position).collect()
    };
    let cloud0 = inliers(0);
    let n = cfg.gaussian_count(cloud0.len());
    let model = {
        let m = init_model(&cloud0, n, cfg.s_min_value(), cfg.s_disc_value(), 1).unwrap();
        fit_model(m, &cloud0, &cfg.fit_config()).unwrap().model
    };
    let mut errs_t = Vec::new();
    let mut errs_r = Vec::new();
    for i in 1..8 {
        let true_rel = kf_pose.relative(&truth.poses[i].1);
        let cloud = inliers(i);
        let (best, _) = register_scan(&model, &cloud, &true_rel, &mcfg, 42 + i as u64);
        errs_t.push((best.t - true_rel.t).norm());
        errs_r.push((best.q * true_rel.q.conjugate()).angle().to_degrees());
    }
    let mt = errs_t.iter().sum::<f64>() / errs_t.len() as f64;
    let mr = errs_r.iter().sum::<f64>() / errs_r.len() as f64;
    let maxt = errs_t.iter().cloned().fold(0.0, f64::max);
    println!("{label}: N={n} mean {mt:.3} m / {mr:.2} deg, max {maxt:.3} m");
}

fn main() {
    let base = |pts: &str, noise: &str| {
        let mut cfg = Config::default();
        for (k, v) in [
            ("synth_radar_rate", "5"), ("synth_scan_points", pts),
            ("sm_hypotheses", "8"), ("sm_epochs", "30"), ("sm_downsample", "192"),
            ("gm_epochs", "80"),
            ("synth_traj", "circle"), ("synth_scene", "room"),
            ("synth_circle_radius", "4"), ("synth_speed", "1.5"),
            ("synth_duration", "14"), ("synth_noise", noise),
        ] { cfg.set_key(k, v).unwrap(); }
        cfg
    };
    reg_errors(&base("300", "false"), "zero-noise 300pt auto-N");
    reg_errors(&base("600", "false"), "zero-noise 600pt auto-N");
    let mut c = base("600", "false");
    c.set_key("n_gaussians", "30").unwrap();
    reg_errors(&c, "zero-noise 600pt N=30   ");
    let mut c = base("600", "false");
    c.set_key("sm_downsample", "300").unwrap();
    c.set_key("gm_epochs", "150").unwrap();
    reg_errors(&c, "zero-noise 600pt ds300 e150");
    let mut c = base("900", "false");
    c.set_key("sm_downsample", "300").unwrap();
    reg_errors(&c, "zero-noise 900pt ds300  ");
    let mut c = base("600", "true");
    c.set_key("sm_downsample", "300").unwrap();
    reg_errors(&c, "noisy      600pt ds300  ");
}
