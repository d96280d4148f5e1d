//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The desk-scale training runs (two heads × three seeds × 2·10⁵ frames) are
//! cached under the target directory, keyed by configuration fingerprint, so
//! only the first invocation pays for training.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;

use pursuit_core::analysis::{
    eval_checkpoints, eval_slip_grid, fit_dictionary, fit_gabor, median_fit_error, preference_histograms,
    EvalSettings, GaborParams, IdealController, PreferenceHistograms, SlipGridResult, DEFAULT_THRESHOLD,
};
use pursuit_core::checkpoint::Checkpoint;
use pursuit_core::config::Config;
use pursuit_core::imagery::Corpus;
use pursuit_core::features::FeatureVector;
use pursuit_core::policy::{nac_update, ActorRule, Choice, CriticState, HeadKind, NacParams, Policy, SoftmaxPolicy};
use pursuit_core::trainer::{run, telemetry_csv, train, CorpusSource, TrainConfig, Trainer};

const SEEDS: [u64; 3] = [1, 2, 3];
const HEADS: [HeadKind; 2] = [HeadKind::Gaussian, HeadKind::Softmax];
const DESCENT_WINDOW: usize = 10_000;

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

/// One desk-scale training run reduced to what the criteria need.
struct DeskRun {
    head: HeadKind,
    seed: u64,
    initial: Checkpoint,
    last: Checkpoint,
    first_recon: f64,
    last_recon: f64,
    max_energy_violation: f64,
}

fn desk_config(head: HeadKind, seed: u64) -> TrainConfig {
    let mut c = Config::default().train;
    c.seed = seed;
    c.policy.head = head;
    c
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-cache")
}

fn load_cached(dir: &PathBuf, head: HeadKind, seed: u64) -> Option<DeskRun> {
    let summary = fs::read_to_string(dir.join("summary.txt")).ok()?;
    let v: Vec<f64> = summary.split_whitespace().filter_map(|s| s.parse().ok()).collect();
    let [first_recon, last_recon, max_energy_violation] = v[..] else {
        return None;
    };
    Some(DeskRun {
        head,
        seed,
        initial: Checkpoint::load(&dir.join("initial.ckpt")).ok()?,
        last: Checkpoint::load(&dir.join("final.ckpt")).ok()?,
        first_recon,
        last_recon,
        max_energy_violation,
    })
}

fn desk_run(head: HeadKind, seed: u64) -> DeskRun {
    let cfg = desk_config(head, seed);
    let dir = cache_dir().join(format!(
        "{}-seed{seed}-{:08x}-{}",
        head.name(),
        cfg.fingerprint(),
        cfg.total_frames
    ));
    if let Some(r) = load_cached(&dir, head, seed) {
        return r;
    }
    let t0 = Instant::now();
    let mut initial = None;
    let outcome = train(&cfg, |c| {
        if c.frame == 0 {
            initial = Some(c.clone());
        }
        Ok(())
    })
    .expect("desk-scale training");
    let recon: Vec<f64> = outcome.telemetry.iter().map(|r| r.recon_error).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let run = DeskRun {
        head,
        seed,
        initial: initial.expect("initial checkpoint"),
        last: outcome.final_checkpoint,
        first_recon: mean(&recon[..DESCENT_WINDOW]),
        last_recon: mean(&recon[recon.len() - DESCENT_WINDOW..]),
        max_energy_violation: outcome.max_energy_violation,
    };
    fs::create_dir_all(&dir).expect("cache directory");
    run.initial.save(&dir.join("initial.ckpt")).expect("cache write");
    run.last.save(&dir.join("final.ckpt")).expect("cache write");
    fs::write(
        dir.join("summary.txt"),
        format!("{} {} {}\n", run.first_recon, run.last_recon, run.max_energy_violation),
    )
    .expect("cache write");
    eprintln!(
        "trained {} seed {seed}: {} frames in {:.1} min",
        head.name(),
        cfg.total_frames,
        t0.elapsed().as_secs_f64() / 60.0
    );
    run
}

struct HeadEval {
    initial: SlipGridResult,
    last: SlipGridResult,
}

fn eval_head(runs: &[DeskRun], head: HeadKind, holdout: &Corpus, settings: EvalSettings) -> HeadEval {
    let of = |pick: fn(&DeskRun) -> &Checkpoint| {
        let cps: Vec<&Checkpoint> = runs.iter().filter(|r| r.head == head).map(pick).collect();
        eval_checkpoints(&cps, holdout, settings).expect("slip-grid evaluation")
    };
    HeadEval {
        initial: of(|r| &r.initial),
        last: of(|r| &r.last),
    }
}

fn zero_action_grid_mse() -> f64 {
    let mut s = 0.0;
    for sx in -4i32..=4 {
        for sy in -4i32..=4 {
            let cx = f64::from(sx).clamp(-5.0, 5.0);
            let cy = f64::from(sy).clamp(-5.0, 5.0);
            s += cx * cx + cy * cy;
        }
    }
    s / 81.0
}

fn criterion_1(g: &HeadEval, s: &HeadEval) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, e) in [("gaussian", g), ("softmax", s)] {
        let ratio = e.last.mse / e.initial.mse;
        let toward = e.last.conditions_toward_origin();
        pass &= ratio < 0.5 && toward >= 70;
        parts.push(format!(
            "{name} mse {:.3} -> {:.3} (ratio {:.3} < 0.5), toward origin {toward}/81 (>= 70)",
            e.initial.mse, e.last.mse, ratio
        ));
    }
    Outcome {
        id: "1",
        title: "smooth-pursuit emergence",
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_2(g: &HeadEval, s: &HeadEval) -> Outcome {
    let oracle = zero_action_grid_mse();
    let final_order = g.last.mse <= s.last.mse;
    let initial_order = s.initial.mse > g.initial.mse;
    let closed_form = (g.initial.mse - oracle).abs() < 0.1;
    Outcome {
        id: "2",
        title: "gaussian vs softmax ordering",
        pass: final_order && initial_order && closed_form,
        detail: format!(
            "final gaussian {:.3} <= softmax {:.3}; initial softmax {:.3} > gaussian {:.3}; \
             initial gaussian vs zero-action grid average {oracle:.4} (|diff| < 0.1)",
            g.last.mse, s.last.mse, s.initial.mse, g.initial.mse
        ),
    }
}

fn criterion_3(runs: &[DeskRun]) -> Outcome {
    let per_run: Vec<_> = runs.iter().map(|r| fit_dictionary(&r.last.dictionary)).collect();
    for head in [HeadKind::Gaussian, HeadKind::Softmax] {
        let own: Vec<_> = runs
            .iter()
            .zip(&per_run)
            .filter(|(r, _)| r.head == head)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        if let Some(m) = median_fit_error(&own) {
            println!("info: {} median fit error {m:.4} over {} atoms", head.name(), own.len());
        }
    }
    let fits: Vec<_> = per_run.into_iter().flatten().collect();
    let median = median_fit_error(&fits).unwrap_or(f64::NAN);
    let in_band = (0.02..=0.10).contains(&median);

    let truth = GaborParams {
        x0: 4.5,
        y0: 4.5,
        orientation: 30f64.to_radians(),
        wavelength: 6.0,
        sigma_u: 2.5,
        sigma_w: 3.0,
        phase_prev: 0.2,
        phase_curr: 0.2 + PI / 3.0,
        amplitude: 1.0,
    };
    let mut atom = truth.render();
    let n = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
    atom.iter_mut().for_each(|v| *v /= n);
    let fit = fit_gabor(Array1::from(atom).view());
    let synthetic = match fit.params() {
        Some(p) => {
            (p.wavelength - 6.0).abs() / 6.0 < 0.05
                && (p.orientation - truth.orientation).abs() / truth.orientation < 0.05
                && (p.phase_shift() - PI / 3.0).abs() < 0.05
                && fit.error().unwrap() < 1e-3
        }
        None => false,
    };
    Outcome {
        id: "3",
        title: "gabor fit quality",
        pass: in_band && synthetic,
        detail: format!(
            "median fit error {median:.4} over {} trained atoms (in [0.02, 0.10]); synthetic recovery {}",
            fits.len(),
            if synthetic { "ok" } else { "failed" }
        ),
    }
}

fn criterion_4(runs: &[DeskRun]) -> Outcome {
    let hist = |pick: fn(&DeskRun) -> &Checkpoint| {
        let fits: Vec<_> = runs.iter().flat_map(|r| fit_dictionary(&pick(r).dictionary)).collect();
        preference_histograms(&fits, DEFAULT_THRESHOLD)
    };
    let before = hist(|r| &r.initial);
    let after = hist(|r| &r.last);
    let shift = after.slow_fraction() > before.slow_fraction();
    let share = after.max_orientation_share();
    let mode = after
        .velocity_mode_bin()
        .map(|b| format!("{:+.1}", PreferenceHistograms::velocity_bin_centre(b)))
        .unwrap_or_else(|| "none".into());
    Outcome {
        id: "4",
        title: "velocity-prior shift",
        pass: shift && share <= 0.30,
        detail: format!(
            "fraction |v| < 1: initial {:.3} ({} atoms) -> final {:.3} ({} atoms); \
             max orientation bin share {share:.3} (<= 0.30); velocity mode bin centre {mode}",
            before.slow_fraction(),
            before.qualifying,
            after.slow_fraction(),
            after.qualifying
        ),
    }
}

fn criterion_5(runs: &[DeskRun]) -> Outcome {
    let agree = common::mp_agreement(1000, 5);
    let worst = runs.iter().map(|r| r.max_energy_violation).fold(0.0, f64::max);
    Outcome {
        id: "5",
        title: "matching-pursuit correctness",
        pass: agree == 1000 && worst <= 1e-9,
        detail: format!("{agree}/1000 instances agree with the reference; max energy violation {worst:.2e} (<= 1e-9)"),
    }
}

fn criterion_6() -> Outcome {
    let soft = common::worst_score_error(true, 100, 6);
    let gauss = common::worst_score_error(false, 100, 7);
    Outcome {
        id: "6",
        title: "gradient correctness",
        pass: soft < 1e-4 && gauss < 1e-4,
        detail: format!("worst relative error softmax {soft:.2e}, gaussian {gauss:.2e} (< 1e-4, 100 instances each)"),
    }
}

fn criterion_7() -> Outcome {
    let wins = (0..50).filter(|&s| common::bandit_run(s, ActorRule::Natural)).count();

    let mut p = Policy::Softmax(SoftmaxPolicy::new(11, 2, 1.0, 5.0).unwrap());
    let zero = FeatureVector(vec![0.0, 0.0]);
    let mut c = CriticState::new(2, p.param_count(), NacParams::default());
    let d0 = nac_update(&mut c, &mut p, &zero, Choice::Discrete([5, 5]), -0.5, &zero).unwrap().td_error;
    let mut c = CriticState::new(2, p.param_count(), NacParams::default());
    c.v = vec![1.0, 2.0];
    let f_t = FeatureVector(vec![1.0, 0.0]);
    let f_next = FeatureVector(vec![0.0, 1.0]);
    // -0.25 + 0.3·2 - 1 = -0.65
    let d1 = nac_update(&mut c, &mut p, &f_t, Choice::Discrete([5, 5]), -0.25, &f_next).unwrap().td_error;
    let td_ok = d0 == -0.5 && (d1 + 0.65).abs() < 1e-15;
    Outcome {
        id: "7",
        title: "RL correctness at oracle scale",
        pass: wins >= 48 && td_ok,
        detail: format!("bandit recovered in {wins}/50 runs (>= 48); TD errors {d0} and {d1:.4} (expected -0.5, -0.65)"),
    }
}

fn criterion_8() -> Outcome {
    let mut cfg = TrainConfig::smoke();
    cfg.train_corpus = CorpusSource::Synthetic { base_seed: 11, count: 4, size: 96 };
    cfg.total_frames = 1000;
    cfg.checkpoint_every = 500;
    cfg.log_every = 1;
    let a = train(&cfg, |_| Ok(())).unwrap();
    let b = train(&cfg, |_| Ok(())).unwrap();
    let repeat = telemetry_csv(&a.telemetry) == telemetry_csv(&b.telemetry);

    let mut t = Trainer::new(cfg.clone()).unwrap();
    let first = run(&mut t, 500, |_| Ok(())).unwrap();
    let restored = Checkpoint::from_bytes(&first.final_checkpoint.to_bytes()).unwrap();
    let mut resumed = Trainer::resume(cfg.clone(), &restored).unwrap();
    let second = run(&mut resumed, 1000, |_| Ok(())).unwrap();
    let mut joined = first.telemetry;
    joined.extend(second.telemetry);
    let split = telemetry_csv(&joined) == telemetry_csv(&a.telemetry) && second.final_checkpoint == a.final_checkpoint;

    let bytes = a.final_checkpoint.to_bytes();
    let round = Checkpoint::from_bytes(&bytes).map(|c| c == a.final_checkpoint && c.to_bytes() == bytes).unwrap_or(false);
    Outcome {
        id: "8",
        title: "determinism and persistence",
        pass: repeat && split && round,
        detail: format!("repeat run identical: {repeat}; split run identical: {split}; round trip bit-exact: {round}"),
    }
}

fn criterion_9(holdout: &Corpus, settings: EvalSettings) -> Outcome {
    let r = eval_slip_grid(&[&IdealController { max_accel: settings.slip_grid.max_accel }], holdout, settings.slip_grid)
        .expect("ideal evaluation");
    Outcome {
        id: "9",
        title: "ideal-policy zero",
        pass: r.mse == 0.0,
        detail: format!("mse {} over {} conditions", r.mse, r.conditions.len()),
    }
}

fn main() {
    // The test harness may probe the target with --list; there is nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let t0 = Instant::now();
    let cfg = Config::default();
    let holdout = cfg.eval.holdout.load().expect("held-out corpus");
    let train_corpus = cfg.train.train_corpus.load().expect("training corpus");
    assert!(holdout.is_disjoint_from(&train_corpus), "held-out images overlap the training set");
    let settings = EvalSettings {
        grid: cfg.train.dictionary.grid,
        mp: cfg.train.dictionary.mp,
        divisive_norm: cfg.train.policy.divisive_norm,
        slip_grid: cfg.eval.slip_grid_options(cfg.train.env.max_accel),
    };

    let jobs: Vec<(HeadKind, u64)> = HEADS.iter().flat_map(|&h| SEEDS.iter().map(move |&s| (h, s))).collect();
    let runs: Vec<DeskRun> = jobs.par_iter().map(|&(h, s)| desk_run(h, s)).collect();
    let gauss = eval_head(&runs, HeadKind::Gaussian, &holdout, settings);
    let soft = eval_head(&runs, HeadKind::Softmax, &holdout, settings);

    let outcomes = vec![
        criterion_1(&gauss, &soft),
        criterion_2(&gauss, &soft),
        criterion_3(&runs),
        criterion_4(&runs),
        criterion_5(&runs),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(&holdout, settings),
    ];

    println!();
    for r in &runs {
        println!(
            "info: {} seed {} mean reconstruction error first {} frames {:.4}, last {} frames {:.4}",
            r.head.name(),
            r.seed,
            DESCENT_WINDOW,
            r.first_recon,
            DESCENT_WINDOW,
            r.last_recon
        );
    }
    for o in &outcomes {
        println!("{} {}. {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.title, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.1} min",
        outcomes.len() - failed,
        t0.elapsed().as_secs_f64() / 60.0
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
