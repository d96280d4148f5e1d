use std::path::Path;
use std::process::{Command, Output};

fn pursuit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pursuit"))
        .current_dir(dir)
        .env_remove("PURSUIT_CONFIG")
        .args(args)
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn help_lists_flags_with_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = pursuit(dir.path(), &["--help"]);
    assert!(out.status.success());
    let help = text(&out.stdout);
    for flag in ["--config", "--set", "--seed", "--frames", "--head", "--pairs", "--workers", "--out"] {
        assert!(help.contains(flag), "{flag} missing");
    }
    assert!(help.contains("[config: train.total_frames]"));
    assert!(help.contains("nac.alpha_theta"));
}

#[test]
fn unknown_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = pursuit(dir.path(), &["--set", "nac.alpha_bogus=1", "eval-grid", "--ideal"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("nac.alpha_bogus"));

    std::fs::write(dir.path().join("bad.toml"), "[policy]\nwidth = 3\n").unwrap();
    let out = pursuit(dir.path(), &["--config", "bad.toml", "eval-grid", "--ideal"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("policy.width"));
}

#[test]
fn malformed_config_and_bad_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.toml"), "seed = = 3\n").unwrap();
    assert_eq!(pursuit(dir.path(), &["--config", "broken.toml", "train"]).status.code(), Some(2));
    let out = pursuit(dir.path(), &["--head", "lstm", "train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("policy.head"));
    assert_eq!(pursuit(dir.path(), &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = pursuit(dir.path(), &["fit-gabors", "--checkpoint", "missing.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("missing.ckpt"));
}

#[test]
fn ideal_grid_prints_zero_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let o = pursuit(dir.path(), &["--pairs", "3", "-o", out, "eval-grid", "--ideal"]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        assert!(text(&o.stdout).starts_with("mse 0 "), "{}", text(&o.stdout));
        std::fs::read(dir.path().join(out).join("slip_grid.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(text(&a).lines().count(), 82);
}

#[test]
fn smoke_profile_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = pursuit(dir.path(), &["--frames", "600", "--pairs", "2", "--set", "train.checkpoint_every=300", "smoke"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("smoke ok"));
    let o = dir.path().join("out");
    for f in [
        "telemetry.csv",
        "mse_curve.csv",
        "slip_grid.csv",
        "gabor_fits.csv",
        "orientation_histogram.csv",
        "velocity_histogram.csv",
        "bases.pgm",
        "checkpoint-000000600.ckpt",
    ] {
        assert!(o.join(f).exists(), "{f} missing");
    }

    // Analyses on the written checkpoint.
    let ckpt = "out/checkpoint-000000600.ckpt";
    let smoke = ["--set", "dictionary.atoms=64", "--set", "dictionary.patch_grid=5", "--set", "dictionary.patch_stride=10"];
    for cmd in [
        vec!["tuning", "--checkpoint", ckpt, "--atom", "3"],
        vec!["histograms", "--checkpoint", ckpt],
        vec!["render-bases", "--checkpoint", ckpt],
    ] {
        let mut args: Vec<&str> = smoke.to_vec();
        args.extend(["-o", "analysis"]);
        args.extend(cmd);
        let r = pursuit(dir.path(), &args);
        assert!(r.status.success(), "{args:?}: {}", text(&r.stderr));
    }
    let r = pursuit(dir.path(), &["-o", "curve", "--pairs", "2", "--set", "dictionary.atoms=64", "--set", "dictionary.patch_grid=5", "--set", "dictionary.patch_stride=10", "mse-curve", "--run", "out"]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    assert_eq!(text(&std::fs::read(dir.path().join("curve/mse_curve.csv")).unwrap()).lines().count(), 4);
}
