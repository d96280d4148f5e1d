//! `pursuit`: train and analyse the joint sparse-coding / smooth-pursuit model.
//!
//! Exit status: 0 on success, 2 on configuration or usage errors, 1 on
//! runtime errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use pursuit_core::analysis::{
    self, curve_csv, eval_slip_grid, fit_dictionary, fit_table_csv, median_fit_error, mse_training_curve,
    preference_histograms, render_atoms, tuning_curves, Controller, EvalSettings, IdealController, LearnedController,
};
use pursuit_core::checkpoint::Checkpoint;
use pursuit_core::config::{Config, KEYS};
use pursuit_core::imagery::write_pgm_file;
use pursuit_core::trainer::{run, telemetry_csv, Trainer};
use pursuit_core::Error;

const CONFIG_ENV: &str = "PURSUIT_CONFIG";

#[derive(Parser, Debug)]
#[command(name = "pursuit", version, about = "Sparse motion coding and smooth-pursuit learning", after_help = key_help())]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file [env: PURSUIT_CONFIG]
    #[arg(long, global = true, env = CONFIG_ENV, hide_env = true)]
    config: Option<PathBuf>,

    /// Override any config key, e.g. `--set nac.alpha_theta=1e-3` (repeatable) [config: any key below]
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Master seed [config: seed]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Frames to train [config: train.total_frames]
    #[arg(long, global = true)]
    frames: Option<u64>,

    /// Policy head, softmax or gaussian [config: policy.head]
    #[arg(long, global = true)]
    head: Option<String>,

    /// Image pairs per slip condition [config: eval.pairs_per_condition]
    #[arg(long, global = true)]
    pairs: Option<usize>,

    /// Directory of held-out PGM textures [config: corpus.holdout_dir]
    #[arg(long, global = true)]
    holdout_dir: Option<PathBuf>,

    /// Directory of training PGM textures [config: corpus.train_dir]
    #[arg(long, global = true)]
    train_dir: Option<PathBuf>,

    /// Worker threads; defaults to the available parallelism [config: none]
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory, created if absent [config: none]
    #[arg(long, short, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one run, writing checkpoints and telemetry.csv.
    Train,
    /// Evaluate checkpoints (one per trial) on the 9×9 slip grid.
    EvalGrid {
        /// Checkpoint file; repeat for several trials.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Evaluate the ideal one-step controller instead.
        #[arg(long)]
        ideal: bool,
    },
    /// Slip-grid MSE over all checkpoints of one or more run directories.
    MseCurve {
        /// Run directory written by `train`; repeat for several trials.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
    },
    /// Fit Gabor functions to every atom.
    FitGabors {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Direction and velocity tuning curves.
    Tuning {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Only this atom; all atoms when absent.
        #[arg(long)]
        atom: Option<usize>,
    },
    /// Histograms of preferred orientation and velocity.
    Histograms {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render atoms as a PGM image (previous frame above current).
    RenderBases {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Atoms per row.
        #[arg(long, default_value_t = 20)]
        per_row: usize,
    },
    /// Short training run on the fast profile, followed by every analysis.
    Smoke,
}

fn key_help() -> String {
    let mut s = String::from("Config keys (file sections or --set KEY=VALUE):\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<28} {d}\n"));
    }
    s
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match load_config(&cli.common, matches!(cli.command, Command::Smoke)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .chain()
                .any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config { .. })));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}

fn load_config(common: &Common, smoke: bool) -> anyhow::Result<Config> {
    let mut cfg = if smoke { Config::smoke() } else { Config::default() };
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_toml(&text)
            .with_context(|| format!("in config {}", path.display()))?;
    }
    for o in &common.overrides {
        let Some((k, v)) = o.split_once('=') else {
            return Err(Error::config(o.clone(), "expected KEY=VALUE").into());
        };
        cfg.set_str(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        cfg.set_str("seed", &s.to_string())?;
    }
    if let Some(f) = common.frames {
        cfg.set_str("train.total_frames", &f.to_string())?;
    }
    if let Some(h) = &common.head {
        cfg.set_string("policy.head", h)?;
    }
    if let Some(p) = common.pairs {
        cfg.set_str("eval.pairs_per_condition", &p.to_string())?;
    }
    if let Some(d) = &common.train_dir {
        cfg.set_string("corpus.train_dir", &d.display().to_string())?;
    }
    if let Some(d) = &common.holdout_dir {
        cfg.set_string("corpus.holdout_dir", &d.display().to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn settings(cfg: &Config) -> EvalSettings {
    EvalSettings {
        grid: cfg.train.dictionary.grid,
        mp: cfg.train.dictionary.mp,
        divisive_norm: cfg.train.policy.divisive_norm,
        slip_grid: cfg.eval.slip_grid_options(cfg.train.env.max_accel),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let p = dir.join(name);
    fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
}

fn load_checkpoint(path: &Path, cfg: &Config) -> anyhow::Result<Checkpoint> {
    let c = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    if c.config_hash != cfg.train.fingerprint() {
        eprintln!(
            "warning: {} was written with a different configuration; evaluation uses the current one",
            path.display()
        );
    }
    Ok(c)
}

fn checkpoint_name(frame: u64) -> String {
    format!("checkpoint-{frame:09}.ckpt")
}

/// Checkpoints of a run directory in frame order.
fn run_checkpoints(dir: &Path, cfg: &Config) -> anyhow::Result<Vec<Checkpoint>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ckpt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no checkpoints in {}", dir.display());
    }
    paths.iter().map(|p| load_checkpoint(p, cfg)).collect()
}

fn dispatch(cli: &Cli, cfg: &Config) -> anyhow::Result<String> {
    let common = &cli.common;
    let threads = common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build_global()
        .context("starting worker pool")?;
    let out = &common.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    match &cli.command {
        Command::Train => train(cfg, out),
        Command::EvalGrid { checkpoints, ideal } => eval_grid(cfg, out, checkpoints, *ideal),
        Command::MseCurve { runs } => {
            let holdout = cfg.eval.holdout.load()?;
            let trials = runs.iter().map(|r| run_checkpoints(r, cfg)).collect::<anyhow::Result<Vec<_>>>()?;
            let points = mse_training_curve(&trials, &holdout, settings(cfg))?;
            write(out, "mse_curve.csv", &curve_csv(&points))?;
            let last = points.last().expect("at least one checkpoint");
            Ok(format!("{} points, final mse {:.4} at frame {}", points.len(), last.mse, last.frame))
        }
        Command::FitGabors { checkpoint } => {
            let c = load_checkpoint(checkpoint, cfg)?;
            let fits = fit_dictionary(&c.dictionary);
            write(out, "gabor_fits.csv", &fit_table_csv(&fits))?;
            Ok(match median_fit_error(&fits) {
                Some(m) => format!("fitted {} atoms, median fit error {m:.4}", fits.len()),
                None => "no atom could be fit".to_string(),
            })
        }
        Command::Tuning { checkpoint, atom } => tuning(cfg, out, checkpoint, *atom),
        Command::Histograms { checkpoint } => histograms(cfg, out, checkpoint),
        Command::RenderBases { checkpoint, per_row } => {
            let c = load_checkpoint(checkpoint, cfg)?;
            let img = render_atoms(&c.dictionary, *per_row)?;
            let path = out.join("bases.pgm");
            write_pgm_file(&path, &img)?;
            Ok(format!("rendered {} atoms to {}", c.dictionary.len(), path.display()))
        }
        Command::Smoke => smoke_run(cfg, out),
    }
}

fn train(cfg: &Config, out: &Path) -> anyhow::Result<String> {
    let mut trainer = Trainer::new(cfg.train.clone())?;
    let outcome = run(&mut trainer, cfg.train.total_frames, |c| c.save(&out.join(checkpoint_name(c.frame))))?;
    write(out, "telemetry.csv", &telemetry_csv(&outcome.telemetry))?;
    let tail = &outcome.telemetry[outcome.telemetry.len().saturating_sub(1000)..];
    let recon = tail.iter().map(|r| r.recon_error).sum::<f64>() / tail.len().max(1) as f64;
    Ok(format!(
        "trained {} frames, recent reconstruction error {recon:.4}",
        outcome.final_checkpoint.frame
    ))
}

fn eval_grid(cfg: &Config, out: &Path, checkpoints: &[PathBuf], ideal: bool) -> anyhow::Result<String> {
    let holdout = cfg.eval.holdout.load()?;
    let opts = cfg.eval.slip_grid_options(cfg.train.env.max_accel);
    let result = if ideal {
        eval_slip_grid(&[&IdealController { max_accel: cfg.train.env.max_accel }], &holdout, opts)?
    } else {
        if checkpoints.is_empty() {
            return Err(Error::Argument("give --checkpoint or --ideal".into()).into());
        }
        let cps = checkpoints.iter().map(|p| load_checkpoint(p, cfg)).collect::<anyhow::Result<Vec<_>>>()?;
        let s = settings(cfg);
        let ctrls = cps
            .iter()
            .map(|c| LearnedController::new(&c.policy, &c.dictionary, s.grid, s.mp, s.divisive_norm))
            .collect::<pursuit_core::Result<Vec<_>>>()?;
        let refs: Vec<&dyn Controller> = ctrls.iter().map(|c| c as &dyn Controller).collect();
        eval_slip_grid(&refs, &holdout, opts)?
    };
    write(out, "slip_grid.csv", &result.to_csv())?;
    write(out, "slip_grid_by_magnitude.csv", &result.magnitude_csv())?;
    Ok(format!(
        "mse {} toward origin {}/{}",
        result.mse,
        result.conditions_toward_origin(),
        result.conditions.len()
    ))
}

fn tuning(cfg: &Config, out: &Path, checkpoint: &Path, atom: Option<usize>) -> anyhow::Result<String> {
    let c = load_checkpoint(checkpoint, cfg)?;
    let n = c.dictionary.len();
    let atoms: Vec<usize> = match atom {
        Some(a) if a >= n => return Err(Error::Argument(format!("atom {a} out of range, dictionary has {n}")).into()),
        Some(a) => vec![a],
        None => (0..n).collect(),
    };
    use rayon::prelude::*;
    let curves: Vec<_> = atoms.par_iter().map(|&a| (a, tuning_curves(c.dictionary.atom(a)))).collect();
    let mut dir = String::from("atom,direction_deg,response\n");
    let mut vel = String::from("atom,velocity,response\n");
    let mut peaks = String::from("atom,status,wavelength,direction_deg,speed,direction_peak_deg,velocity_peak\n");
    for (a, t) in &curves {
        match t {
            Some(t) => {
                for (d, r) in &t.direction_curve {
                    dir.push_str(&format!("{a},{d},{r}\n"));
                }
                for (v, r) in &t.velocity_curve {
                    vel.push_str(&format!("{a},{v},{r}\n"));
                }
                peaks.push_str(&format!(
                    "{a},fit,{},{},{},{},{}\n",
                    t.wavelength, t.direction_deg, t.speed, t.direction_peak_deg, t.velocity_peak
                ));
            }
            None => peaks.push_str(&format!("{a},unfit,,,,,\n")),
        }
    }
    write(out, "tuning_direction.csv", &dir)?;
    write(out, "tuning_velocity.csv", &vel)?;
    write(out, "tuning_peaks.csv", &peaks)?;
    let unfit = curves.iter().filter(|(_, t)| t.is_none()).count();
    Ok(format!("tuning curves for {} atoms ({unfit} unfit)", curves.len()))
}

fn histograms(cfg: &Config, out: &Path, checkpoint: &Path) -> anyhow::Result<String> {
    let c = load_checkpoint(checkpoint, cfg)?;
    let fits = fit_dictionary(&c.dictionary);
    let h = preference_histograms(&fits, cfg.eval.fit_threshold);
    write(out, "orientation_histogram.csv", &h.orientation_csv())?;
    write(out, "velocity_histogram.csv", &h.velocity_csv())?;
    if h.is_empty() {
        eprintln!("warning: no atom has fit error below {}", h.threshold);
    }
    Ok(format!(
        "{} of {} atoms qualify, fraction with |v| < 1: {:.3}",
        h.qualifying,
        fits.len(),
        h.slow_fraction()
    ))
}

/// Train on the fast profile, then run every analysis and check invariants.
fn smoke_run(cfg: &Config, out: &Path) -> anyhow::Result<String> {
    let mut trainer = Trainer::new(cfg.train.clone())?;
    let mut cps = Vec::new();
    let outcome = run(&mut trainer, cfg.train.total_frames, |c| {
        c.save(&out.join(checkpoint_name(c.frame)))?;
        cps.push(c.clone());
        Ok(())
    })?;
    write(out, "telemetry.csv", &telemetry_csv(&outcome.telemetry))?;
    for r in &outcome.telemetry {
        if !(-1.0..=0.0).contains(&r.reward) {
            bail!("reward {} out of [-1, 0] at frame {}", r.reward, r.frame);
        }
    }
    outcome.final_checkpoint.dictionary.check_unit_norm()?;
    if outcome.max_energy_violation > pursuit_core::trainer::ENERGY_TOL {
        bail!("energy identity violated by {:e}", outcome.max_energy_violation);
    }
    let roundtrip = Checkpoint::from_bytes(&outcome.final_checkpoint.to_bytes())?;
    if roundtrip != outcome.final_checkpoint {
        bail!("checkpoint round trip changed the state");
    }

    let holdout = cfg.eval.holdout.load()?;
    let s = settings(cfg);
    let ideal = eval_slip_grid(&[&IdealController { max_accel: cfg.train.env.max_accel }], &holdout, s.slip_grid)?;
    if ideal.mse != 0.0 {
        bail!("ideal controller scored mse {}", ideal.mse);
    }
    let points = mse_training_curve(&[cps], &holdout, s)?;
    write(out, "mse_curve.csv", &curve_csv(&points))?;
    let final_cp = &outcome.final_checkpoint;
    let grid = analysis::eval_checkpoints(&[final_cp], &holdout, s)?;
    write(out, "slip_grid.csv", &grid.to_csv())?;
    let fits = fit_dictionary(&final_cp.dictionary);
    write(out, "gabor_fits.csv", &fit_table_csv(&fits))?;
    let h = preference_histograms(&fits, cfg.eval.fit_threshold);
    write(out, "orientation_histogram.csv", &h.orientation_csv())?;
    write(out, "velocity_histogram.csv", &h.velocity_csv())?;
    write_pgm_file(&out.join("bases.pgm"), &render_atoms(&final_cp.dictionary, 16)?)?;
    Ok(format!(
        "smoke ok: {} frames, mse {:.4} -> {:.4}, median fit error {}",
        final_cp.frame,
        points.first().map_or(f64::NAN, |p| p.mse),
        grid.mse,
        median_fit_error(&fits).map_or("n/a".into(), |m| format!("{m:.4}"))
    ))
}
