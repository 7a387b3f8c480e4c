//! Batch command line for the radar-inertial odometry toolkit.
//!
//! Verbs: `run` (dataset -> trajectory), `synth` (config -> dataset),
//! `eval` (two trajectories -> relative-error metrics), `fit` (single scan ->
//! Gaussian model dump). Every config key is also a flag of the same name;
//! precedence is flag > config file > default.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Arg, ArgAction, ArgMatches, Command};

use rio_core::gaussian::{fit_model, init_model};
use rio_core::pipeline::dataset::load_dataset;
use rio_core::pipeline::eval::{evaluate_relative_errors, trajectory_xyz_csv};
use rio_core::pipeline::odometry::run_odometry_detailed;
use rio_core::pipeline::synth::{generate_synthetic, write_synthetic};
use rio_core::pipeline::trajectory::{read_trajectory, write_trajectory};
use rio_core::Config;

fn with_config_flags(mut cmd: Command) -> Command {
    cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("Key-value config file (`key = value`, `#` comments)"),
    );
    for (key, default, help) in Config::default().schema() {
        cmd = cmd.arg(
            Arg::new(key)
                .long(key)
                .value_name("VALUE")
                .help(format!("{help} [default: {default}]")),
        );
    }
    cmd
}

fn cli() -> Command {
    let run = Command::new("run")
        .about("Run odometry on a dataset directory and write the trajectory")
        .arg(Arg::new("dataset").long("dataset").value_name("DIR").required(true))
        .arg(Arg::new("output").long("output").value_name("FILE").required(true))
        .arg(
            Arg::new("keyframes")
                .long("keyframes")
                .value_name("FILE")
                .help("Also write the keyframe poses as a trajectory file"),
        );
    let synth = Command::new("synth")
        .about("Generate a synthetic dataset with ground truth")
        .arg(Arg::new("output").long("output").value_name("DIR").required(true));
    let eval = Command::new("eval")
        .about("Relative translation/rotation errors between two trajectories")
        .arg(Arg::new("estimate").long("estimate").value_name("FILE").required(true))
        .arg(Arg::new("reference").long("reference").value_name("FILE").required(true))
        .arg(
            Arg::new("csv")
                .long("csv")
                .value_name("FILE")
                .help("Write the machine-readable table to a file instead of stdout"),
        )
        .arg(
            Arg::new("dump")
                .long("dump")
                .value_name("PREFIX")
                .help("Write per-axis `t,x,y,z` dumps for plotting (PREFIX_est.csv, PREFIX_ref.csv)"),
        );
    let fit = Command::new("fit")
        .about("Fit a Gaussian model to a single scan file and dump it")
        .arg(Arg::new("scan").long("scan").value_name("FILE").required(true))
        .arg(Arg::new("output").long("output").value_name("FILE").required(true));

    Command::new("rio")
        .about("Gaussian-model radar-inertial odometry toolkit")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("verbose")
                .long("verbose")
                .short('v')
                .action(ArgAction::Count)
                .global(true)
                .help("Increase log verbosity (-v info, -vv debug)"),
        )
        .subcommand(with_config_flags(run))
        .subcommand(with_config_flags(synth))
        .subcommand(with_config_flags(eval))
        .subcommand(with_config_flags(fit))
}

/// Defaults, then the config file, then any flags given on the command line.
fn build_config(matches: &ArgMatches) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(path) = matches.get_one::<String>("config") {
        cfg.load_file(Path::new(path)).context("loading config file")?;
    }
    for (key, _, _) in Config::default().schema() {
        if matches.value_source(key) == Some(clap::parser::ValueSource::CommandLine) {
            let value = matches.get_one::<String>(key).expect("flag with value");
            cfg.set_key(key, value)?;
        }
    }
    Ok(cfg)
}

fn cmd_run(matches: &ArgMatches) -> Result<()> {
    let cfg = build_config(matches)?;
    let root = PathBuf::from(matches.get_one::<String>("dataset").unwrap());
    let output = PathBuf::from(matches.get_one::<String>("output").unwrap());
    let dataset = load_dataset(&root, &cfg).context("loading dataset")?;
    for w in &dataset.warnings {
        log::warn!("{w}");
    }
    println!(
        "dataset: {} IMU samples, {} scans",
        dataset.imu.len(),
        dataset.scans.len()
    );
    let run = run_odometry_detailed(&dataset, &cfg)?;
    write_trajectory(&run.trajectory, &output)?;
    if let Some(kf_path) = matches.get_one::<String>("keyframes") {
        let mut kf = rio_core::pipeline::Trajectory::default();
        for (t, pose) in &run.keyframes {
            kf.push(*t, *pose);
        }
        write_trajectory(&kf, Path::new(kf_path))?;
    }
    println!(
        "wrote {} poses to {} ({} keyframes, {} egovelocity failures, {} scan-match rejections)",
        run.trajectory.len(),
        output.display(),
        run.stats.keyframes,
        run.stats.egovel_failures,
        run.stats.scanmatch_rejections
    );
    Ok(())
}

fn cmd_synth(matches: &ArgMatches) -> Result<()> {
    let cfg = build_config(matches)?;
    let output = PathBuf::from(matches.get_one::<String>("output").unwrap());
    let data = generate_synthetic(&cfg)?;
    write_synthetic(&data, &output, cfg.doppler_sign)?;
    println!(
        "wrote synthetic dataset to {}: {} IMU samples, {} scans, scene `{}`, trajectory `{}`",
        output.display(),
        data.dataset.imu.len(),
        data.dataset.scans.len(),
        cfg.synth_scene,
        cfg.synth_traj
    );
    Ok(())
}

fn cmd_eval(matches: &ArgMatches) -> Result<()> {
    let cfg = build_config(matches)?;
    let est_path = PathBuf::from(matches.get_one::<String>("estimate").unwrap());
    let ref_path = PathBuf::from(matches.get_one::<String>("reference").unwrap());
    let est = read_trajectory(&est_path)?;
    let reference = read_trajectory(&ref_path)?;
    let lengths = cfg.eval_lengths_vec()?;
    let report = evaluate_relative_errors(&est, &reference, &lengths, cfg.eval_max_gap)?;
    print!("{}", report.table());
    match matches.get_one::<String>("csv") {
        Some(path) => std::fs::write(path, report.csv())
            .with_context(|| format!("writing {path}"))?,
        None => print!("{}", report.csv()),
    }
    if let Some(prefix) = matches.get_one::<String>("dump") {
        std::fs::write(format!("{prefix}_est.csv"), trajectory_xyz_csv(&est))?;
        std::fs::write(format!("{prefix}_ref.csv"), trajectory_xyz_csv(&reference))?;
    }
    Ok(())
}

fn cmd_fit(matches: &ArgMatches) -> Result<()> {
    let cfg = build_config(matches)?;
    let scan_path = PathBuf::from(matches.get_one::<String>("scan").unwrap());
    let output = PathBuf::from(matches.get_one::<String>("output").unwrap());

    // A scan file outside a dataset directory: parse just this one file.
    let text = std::fs::read_to_string(&scan_path)
        .with_context(|| format!("reading {}", scan_path.display()))?;
    let mut cloud = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "t,x,y,z,doppler,intensity" {
                bail!("{}: expected scan header `t,x,y,z,doppler,intensity`", scan_path.display());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}:{}: bad number", scan_path.display(), idx + 1))?;
        if vals.len() != 6 {
            bail!("{}:{}: expected 6 columns", scan_path.display(), idx + 1);
        }
        cloud.push(nalgebra::Vector3::new(vals[1], vals[2], vals[3]));
    }
    if cloud.is_empty() {
        bail!("{}: no points to fit", scan_path.display());
    }

    let n = cfg.gaussian_count(cloud.len());
    let model = init_model(&cloud, n, cfg.s_min_value(), cfg.s_disc_value(), cfg.seed)?;
    let out = fit_model(model, &cloud, &cfg.fit_config())?;
    std::fs::write(&output, out.model.debug_dump())
        .with_context(|| format!("writing {}", output.display()))?;
    println!(
        "fitted {} Gaussians to {} points in {} epochs (final loss {:.6}); dump at {}",
        out.model.len(),
        cloud.len(),
        out.losses.len(),
        out.losses.last().unwrap(),
        output.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    let matches = cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match matches.subcommand() {
        Some(("run", m)) => cmd_run(m),
        Some(("synth", m)) => cmd_synth(m),
        Some(("eval", m)) => cmd_eval(m),
        Some(("fit", m)) => cmd_fit(m),
        _ => unreachable!("subcommand required"),
    }
}
