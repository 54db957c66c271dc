//! End-to-end checks of the `mkssl` binary: exit codes, artifact layout,
//! manifest replay, and the tag-driven evaluation pools.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mkssl"));
    c.env("RUST_LOG", "warn");
    c.env_remove("MKSSL_CACHE_DIR");
    c
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn mkssl");
    assert!(
        out.status.success(),
        "mkssl {:?} failed (exit {:?}):\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn s(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
    assert_eq!(code(&bin().arg("--version").output().unwrap()), 0);
    assert_eq!(code(&bin().args(["experiment", "--help"]).output().unwrap()), 0);
}

#[test]
fn usage_errors_exit_one() {
    // No subcommand, unknown subcommand, unknown flag.
    assert_eq!(code(&bin().output().unwrap()), 1);
    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 1);
    assert_eq!(code(&bin().args(["synth", "--bogus"]).output().unwrap()), 1);
}

#[test]
fn unknown_config_key_exits_one_and_names_the_key() {
    let out = bin()
        .args(["experiment", "--synthetic", "bogus_key=3"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn missing_feature_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("absent.csv");
    let out = bin()
        .args(["experiment", "--features", s(&absent)])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_parameter_value_exits_one() {
    let out = bin()
        .args(["experiment", "--synthetic", "eta=-1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_experiment_and_manifest_replay_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let feat = dir.path().join("feat.csv");
    run_ok(&[
        "synth",
        "--out",
        s(&feat),
        "persons=12",
        "latent_dim=4",
        "noise_sigma=0.3",
        "synthetic_seed=7",
    ]);

    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    run_ok(&[
        "experiment",
        "--features",
        s(&feat),
        "--out-dir",
        s(&run1),
        "--method",
        "mkssl",
        "trials=2",
        "ratio=1/2",
    ]);
    for name in ["cmc.csv", "history.csv", "summary.txt", "run.manifest"] {
        assert!(run1.join(name).is_file(), "missing artifact {name}");
    }
    let manifest = read(&run1.join("run.manifest"));
    assert!(manifest.contains("# dataset_sha256:"));
    assert!(manifest.contains("# trial_seeds:"));
    assert!(manifest.contains("method=mkssl"));

    // The manifest replays the run; data-derived CSVs must match exactly.
    run_ok(&[
        "experiment",
        "--config",
        s(&run1.join("run.manifest")),
        "--out-dir",
        s(&run2),
    ]);
    assert_eq!(read(&run1.join("cmc.csv")), read(&run2.join("cmc.csv")));
    assert_eq!(read(&run1.join("history.csv")), read(&run2.join("history.csv")));
}

#[test]
fn supervised_train_writes_empty_history_and_projection_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let feat = dir.path().join("feat.csv");
    run_ok(&[
        "synth",
        "--out",
        s(&feat),
        "persons=8",
        "images_per_view=1",
        "latent_dim=3",
        "noise_sigma=0.2",
        "synthetic_seed=11",
    ]);
    let tr = dir.path().join("train");
    run_ok(&[
        "train",
        "--features",
        s(&feat),
        "--method",
        "mkfsl",
        "--out-dir",
        s(&tr),
        "ratio=1",
    ]);
    // No self-training loop ran, so the log is just the header.
    assert_eq!(read(&tr.join("train_log.csv")), "iteration,edges_changed,objective\n");
    assert!(tr.join("projection.bin").is_file());

    let ev = dir.path().join("eval");
    run_ok(&[
        "eval",
        "--projection",
        s(&tr.join("projection.bin")),
        "--features",
        s(&feat),
        "--out-dir",
        s(&ev),
    ]);
    let cmc = read(&ev.join("cmc.csv"));
    assert!(cmc.starts_with("rank,rate\n"));
    // Cross-view pools: 8 gallery images, so 8 curve rows.
    assert_eq!(cmc.lines().count(), 9);
}

#[test]
fn eval_on_single_view_file_self_matches_at_rank_one() {
    let dir = tempfile::tempdir().unwrap();
    let feat = dir.path().join("single_view.csv");
    std::fs::write(
        &feat,
        "# d=2 n=3 cols=person_id,view_id,split,f0..f1\n\
         1,0,labeled,0.0,0.0\n\
         2,0,labeled,1.0,0.0\n\
         3,0,labeled,0.0,1.0\n",
    )
    .unwrap();
    let tr = dir.path().join("train");
    run_ok(&[
        "train",
        "--features",
        s(&feat),
        "--method",
        "fsl",
        "--out-dir",
        s(&tr),
        "ratio=1",
    ]);
    let ev = dir.path().join("eval");
    run_ok(&[
        "eval",
        "--projection",
        s(&tr.join("projection.bin")),
        "--features",
        s(&feat),
        "--out-dir",
        s(&ev),
    ]);
    // Every probe is its own gallery entry at distance zero.
    let first = read(&ev.join("cmc.csv")).lines().nth(1).unwrap().to_string();
    assert_eq!(first, "1,1.000000");
}

#[test]
fn eval_honors_probe_and_gallery_tags() {
    let dir = tempfile::tempdir().unwrap();
    let train_file = dir.path().join("train.csv");
    std::fs::write(
        &train_file,
        "# d=2 n=4 cols=person_id,view_id,split,f0..f1\n\
         1,0,labeled,0.0,0.1\n\
         2,0,labeled,1.0,0.9\n\
         1,1,labeled,0.1,0.0\n\
         2,1,labeled,0.9,1.0\n",
    )
    .unwrap();
    // Three probes against a two-column gallery, one probe unmatchable.
    let test_file = dir.path().join("test.csv");
    std::fs::write(
        &test_file,
        "# d=2 n=5 cols=person_id,view_id,split,f0..f1\n\
         1,0,probe,0.0,0.0\n\
         2,0,probe,1.0,1.0\n\
         9,0,probe,0.5,0.5\n\
         1,1,gallery,0.05,0.05\n\
         2,1,gallery,0.95,0.95\n",
    )
    .unwrap();
    let tr = dir.path().join("train");
    run_ok(&[
        "train",
        "--features",
        s(&train_file),
        "--method",
        "fsl",
        "--out-dir",
        s(&tr),
        "ratio=1",
    ]);
    let ev = dir.path().join("eval");
    run_ok(&[
        "eval",
        "--projection",
        s(&tr.join("projection.bin")),
        "--features",
        s(&test_file),
        "--out-dir",
        s(&ev),
    ]);
    let summary = read(&ev.join("summary.txt"));
    assert!(summary.contains("probes: 3"), "{summary}");
    assert!(summary.contains("gallery: 2"), "{summary}");
    assert!(summary.contains("scored: 2 (excluded 1)"), "{summary}");
}

#[test]
fn cache_dir_environment_variable_populates_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let feat = dir.path().join("feat.csv");
    run_ok(&[
        "synth",
        "--out",
        s(&feat),
        "persons=10",
        "latent_dim=3",
        "synthetic_seed=3",
    ]);
    let cache = dir.path().join("kernel-cache");
    let out = bin()
        .env("MKSSL_CACHE_DIR", s(&cache))
        .args([
            "experiment",
            "--features",
            s(&feat),
            "--method",
            "mkfsl",
            "--out-dir",
            s(&dir.path().join("run")),
            "trials=1",
            "ratio=1/2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let entries = std::fs::read_dir(&cache).expect("cache dir exists").count();
    assert!(entries > 0, "expected cached kernel banks");
}

#[test]
fn single_trial_experiment_mean_equals_the_trial_curve() {
    let dir = tempfile::tempdir().unwrap();
    let feat = dir.path().join("feat.csv");
    run_ok(&[
        "synth",
        "--out",
        s(&feat),
        "persons=10",
        "latent_dim=3",
        "noise_sigma=0.2",
        "synthetic_seed=5",
    ]);
    let run = dir.path().join("run");
    run_ok(&[
        "experiment",
        "--features",
        s(&feat),
        "--method",
        "fsl",
        "--out-dir",
        s(&run),
        "trials=1",
        "ratio=1/2",
    ]);
    let cmc = read(&run.join("cmc.csv"));
    let summary = read(&run.join("summary.txt"));
    // With one trial the mean curve is that trial's curve; its rank-1 value
    // appears verbatim in the per-trial summary line.
    let rank1 = cmc.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert!(
        summary.contains(&format!("rank1={:.4}", rank1.parse::<f64>().unwrap())),
        "summary should quote the trial curve:\n{summary}"
    );
}
