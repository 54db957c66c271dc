//! Subcommand bodies: wire configuration layers to the library calls and
//! write the output artifacts.
//!
//! Artifact layout per run directory: `projection.bin` and `train_log.csv`
//! from `train`, `cmc.csv` (plus `cmc_rerank.csv`) and `summary.txt` from
//! `eval`, `cmc.csv`/`history.csv`/`summary.txt` from `experiment`, and a
//! `run.manifest` from each that replays the run via `--config`. CSV artifacts
//! contain no timestamps or timings, so identical runs produce identical
//! bytes; wall-clock numbers live only in `summary.txt`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use mkssl_core::data::{
    detect_format, generate_synthetic, load_feature_set, load_projection, save_feature_set,
    save_projection, split_by_ratio, FeatureSet, FileFormat, MatchingMode, Projection, SplitTag,
};
use mkssl_core::data::projected_sq_dists;
use mkssl_core::eval::{
    fit_with_partition, image_cmc, manifold_rerank, person_cmc, run_experiment, write_cmc_csv,
    write_curve_csv, write_history_csv, write_summary, CmcCurve,
};
use mkssl_core::learner::TrainState;
use mkssl_core::util::{derive_seed, sha256_hex};
use mkssl_core::{Error, Result};

use crate::config::{Cli, Command, EvalArgs, ManifestMeta, RunArgs, RunSpec, SynthArgs};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// Defaults -> environment -> config file -> positional overrides.
fn build_spec(config: Option<&Path>, overrides: &[String]) -> Result<RunSpec> {
    let mut spec = RunSpec::from_env();
    if let Some(path) = config {
        spec.apply_file(path)?;
    }
    spec.apply_overrides(overrides)?;
    Ok(spec)
}

/// Flags beat every file- or override-provided setting.
fn apply_run_flags(spec: &mut RunSpec, args: &RunArgs) -> Result<()> {
    if let Some(m) = &args.method {
        spec.method = m.parse()?;
    }
    if let Some(p) = &args.features {
        spec.features = Some(p.clone());
    }
    if args.synthetic {
        spec.synthetic = true;
    }
    if let Some(dir) = &args.out_dir {
        spec.out_dir = dir.clone();
    }
    if args.rerank {
        spec.rerank = true;
    }
    if let Some(j) = args.jobs {
        spec.jobs = Some(j);
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn configure_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Param("jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Param(format!("cannot configure {n} worker threads: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn configure_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n > 1 {
            log::warn!("built without the parallel feature; --jobs {n} has no effect");
        }
    }
    Ok(())
}

/// Load the run's feature set, hashing file inputs for the manifest.
fn load_input(spec: &RunSpec) -> Result<(FeatureSet, Option<String>)> {
    if spec.synthetic {
        if spec.features.is_some() {
            return Err(Error::Param(
                "synthetic data and a features file are mutually exclusive".into(),
            ));
        }
        Ok((generate_synthetic(&spec.synth)?, None))
    } else {
        let path = spec
            .features
            .as_ref()
            .ok_or_else(|| Error::Param("no input: pass --features FILE or --synthetic".into()))?;
        let sha = sha256_hex(&std::fs::read(path)?);
        let fs = load_feature_set(path, detect_format(path)?)?;
        Ok((fs, Some(sha)))
    }
}

fn load_features_hashed(path: &Path) -> Result<(FeatureSet, String)> {
    let sha = sha256_hex(&std::fs::read(path)?);
    let fs = load_feature_set(path, detect_format(path)?)?;
    Ok((fs, sha))
}

fn cmd_train(args: RunArgs) -> Result<()> {
    let mut spec = build_spec(args.config.as_deref(), &args.overrides)?;
    apply_run_flags(&mut spec, &args)?;
    configure_jobs(spec.jobs)?;
    spec.config.validate()?;
    let (fs, sha) = load_input(&spec)?;

    let train_cols: Vec<usize> = (0..fs.len())
        .filter(|&i| {
            matches!(
                fs.split_tags()[i],
                SplitTag::Labeled | SplitTag::Unlabeled
            )
        })
        .collect();
    if train_cols.is_empty() {
        return Err(Error::Domain("no training columns in the input".into()));
    }
    let train = fs.select(&train_cols)?;

    // Unlabeled tags in the input define the split; otherwise one is drawn
    // from the configured ratio.
    let (labeled, unlabeled) = if train.split_tags().contains(&SplitTag::Unlabeled) {
        (
            train.indices_with_tag(SplitTag::Labeled),
            train.indices_with_tag(SplitTag::Unlabeled),
        )
    } else {
        let part = split_by_ratio(&train, spec.config.ratio, derive_seed(spec.config.rng_seed, 0))?;
        (part.labeled, part.unlabeled)
    };
    log::info!(
        "fitting {} on {} labeled / {} unlabeled columns",
        spec.method,
        labeled.len(),
        unlabeled.len()
    );
    let (projection, state) = fit_with_partition(spec.method, &train, &labeled, &unlabeled, &spec.config)?;
    if let Some(w) = &state.warning {
        log::warn!("{w}");
    }

    std::fs::create_dir_all(&spec.out_dir)?;
    save_projection(&projection, &spec.out_dir.join("projection.bin"))?;
    write_train_log(&spec.out_dir.join("train_log.csv"), &state)?;
    let meta = ManifestMeta {
        command: "train",
        dataset_sha256: sha.as_deref(),
        trial_seeds: &[],
        artifacts: &["projection.bin", "train_log.csv"],
    };
    write_manifest_to(&spec, &meta)?;
    log::info!(
        "saved projection ({} -> {} dims) to {}",
        projection.input_dim(),
        projection.subspace_dim(),
        spec.out_dir.join("projection.bin").display()
    );
    Ok(())
}

fn write_train_log(path: &Path, state: &TrainState) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "iteration,edges_changed,objective")?;
    for rec in &state.history {
        writeln!(out, "{},{},{:.6e}", rec.iteration, rec.edges_changed, rec.objective)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_manifest_to(spec: &RunSpec, meta: &ManifestMeta) -> Result<()> {
    crate::config::write_manifest(&spec.out_dir.join("run.manifest"), spec, meta)
}

/// Probe/gallery pools for standalone evaluation. Explicit tags win; without
/// them the lowest view probes against the others, and a single-view file
/// degenerates to matching every identified column against the whole set.
fn eval_pools(fs: &FeatureSet) -> Result<(Vec<usize>, Vec<usize>)> {
    let probes = fs.indices_with_tag(SplitTag::Probe);
    let gallery = fs.indices_with_tag(SplitTag::Gallery);
    match (probes.is_empty(), gallery.is_empty()) {
        (false, false) => return Ok((probes, gallery)),
        (false, true) | (true, false) => {
            return Err(Error::Domain(
                "input tags only one of probe/gallery; need both or neither".into(),
            ))
        }
        (true, true) => {}
    }
    let identified: Vec<usize> = (0..fs.len())
        .filter(|&i| fs.person_ids()[i].is_some())
        .collect();
    if identified.is_empty() {
        return Err(Error::Domain("no identified columns to evaluate".into()));
    }
    let views: BTreeSet<u32> = identified.iter().map(|&i| fs.view_ids()[i]).collect();
    if views.len() >= 2 {
        let probe_view = *views.iter().next().expect("nonempty");
        let probes: Vec<usize> = identified
            .iter()
            .copied()
            .filter(|&i| fs.view_ids()[i] == probe_view)
            .collect();
        // Distractor columns join the gallery regardless of view.
        let gallery: Vec<usize> = (0..fs.len())
            .filter(|&i| match fs.person_ids()[i] {
                Some(_) => fs.view_ids()[i] != probe_view,
                None => true,
            })
            .collect();
        Ok((probes, gallery))
    } else {
        Ok((identified, (0..fs.len()).collect()))
    }
}

fn score_pools(
    projection: &Projection,
    fs: &FeatureSet,
    probe_cols: &[usize],
    gallery_cols: &[usize],
    spec: &RunSpec,
    rerank: bool,
) -> Result<CmcCurve> {
    let probe_x = fs.features().select_columns(probe_cols.iter());
    let gallery_x = fs.features().select_columns(gallery_cols.iter());
    let probe_persons: Vec<i64> = probe_cols
        .iter()
        .map(|&i| {
            fs.person_ids()[i]
                .ok_or_else(|| Error::Domain(format!("probe column {i} has no person id")))
        })
        .collect::<Result<_>>()?;
    let gallery_persons: Vec<Option<i64>> =
        gallery_cols.iter().map(|&i| fs.person_ids()[i]).collect();

    let dissim = if rerank {
        let k = spec.config.rerank_k.min(gallery_cols.len().saturating_sub(1));
        if k == 0 {
            return Err(Error::Param(
                "re-ranking needs at least two gallery entries".into(),
            ));
        }
        let z_g = projection.project(&gallery_x)?;
        let z_p = projection.project(&probe_x)?;
        let scores = manifold_rerank(&z_g, &z_p, spec.config.rerank_alpha, k)?;
        scores.map(|s| -s)
    } else {
        projected_sq_dists(projection, &probe_x, &gallery_x)?
    };
    match spec.config.matching_mode {
        MatchingMode::SingleShot => image_cmc(&dissim, &probe_persons, &gallery_persons),
        MatchingMode::MultiShot => person_cmc(&dissim, &probe_persons, &gallery_persons),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut spec = build_spec(args.config.as_deref(), &args.overrides)?;
    if let Some(dir) = &args.out_dir {
        spec.out_dir = dir.clone();
    }
    if args.rerank {
        spec.rerank = true;
    }
    if let Some(j) = args.jobs {
        spec.jobs = Some(j);
    }
    configure_jobs(spec.jobs)?;
    spec.config.validate()?;
    spec.features = Some(args.features.clone());
    spec.synthetic = false;

    let projection = load_projection(&args.projection)?;
    let (fs, sha) = load_features_hashed(&args.features)?;
    let (probe_cols, gallery_cols) = eval_pools(&fs)?;
    log::info!(
        "scoring {} probes against {} gallery columns",
        probe_cols.len(),
        gallery_cols.len()
    );

    let curve = score_pools(&projection, &fs, &probe_cols, &gallery_cols, &spec, false)?;
    std::fs::create_dir_all(&spec.out_dir)?;
    write_curve_csv(&spec.out_dir.join("cmc.csv"), &curve)?;
    let mut artifacts = vec!["cmc.csv"];

    let rerank_curve = if spec.rerank {
        let c = score_pools(&projection, &fs, &probe_cols, &gallery_cols, &spec, true)?;
        write_curve_csv(&spec.out_dir.join("cmc_rerank.csv"), &c)?;
        artifacts.push("cmc_rerank.csv");
        Some(c)
    } else {
        None
    };

    write_eval_summary(
        &spec.out_dir.join("summary.txt"),
        &curve,
        rerank_curve.as_ref(),
        probe_cols.len(),
        gallery_cols.len(),
    )?;
    artifacts.push("summary.txt");
    let meta = ManifestMeta {
        command: "eval",
        dataset_sha256: Some(&sha),
        trial_seeds: &[],
        artifacts: &artifacts,
    };
    write_manifest_to(&spec, &meta)?;
    log::info!("rank-1 {:.4}", curve.rate_at(1));
    Ok(())
}

fn write_eval_summary(
    path: &Path,
    curve: &CmcCurve,
    rerank: Option<&CmcCurve>,
    probes: usize,
    gallery: usize,
) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "probes: {probes}")?;
    writeln!(out, "gallery: {gallery}")?;
    writeln!(out, "scored: {} (excluded {})", curve.included, curve.excluded)?;
    for rank in [1usize, 5, 10, 20] {
        if rank <= curve.rates.len() {
            writeln!(out, "rank-{rank}: {:.4}", curve.rate_at(rank))?;
        }
    }
    if let Some(r) = rerank {
        for rank in [1usize, 5, 10, 20] {
            if rank <= r.rates.len() {
                writeln!(out, "rerank rank-{rank}: {:.4}", r.rate_at(rank))?;
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn cmd_experiment(args: RunArgs) -> Result<()> {
    let started = Instant::now();
    let mut spec = build_spec(args.config.as_deref(), &args.overrides)?;
    apply_run_flags(&mut spec, &args)?;
    configure_jobs(spec.jobs)?;
    spec.config.validate()?;
    let (fs, sha) = load_input(&spec)?;
    log::info!(
        "running {} for {} trials (ratio {}, {} columns)",
        spec.method,
        spec.config.trials,
        spec.config.ratio,
        fs.len()
    );
    let report = run_experiment(&fs, spec.method, &spec.config, spec.rerank)?;

    std::fs::create_dir_all(&spec.out_dir)?;
    write_cmc_csv(&spec.out_dir.join("cmc.csv"), &report)?;
    write_history_csv(&spec.out_dir.join("history.csv"), &report)?;
    write_summary(&spec.out_dir.join("summary.txt"), &report, started.elapsed())?;
    let seeds: Vec<u64> = report.outcomes.iter().map(|o| o.seed).collect();
    let meta = ManifestMeta {
        command: "experiment",
        dataset_sha256: sha.as_deref(),
        trial_seeds: &seeds,
        artifacts: &["cmc.csv", "history.csv", "summary.txt"],
    };
    write_manifest_to(&spec, &meta)?;
    log::info!(
        "rank-1 {:.4} over {} trials; artifacts in {}",
        report.rank_rate(1),
        report.outcomes.len(),
        spec.out_dir.display()
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = build_spec(args.config.as_deref(), &args.overrides)?;
    let fs = generate_synthetic(&spec.synth)?;
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let format = match args.out.extension().and_then(|e| e.to_str()) {
        Some("csv") => FileFormat::Csv,
        _ => FileFormat::Binary,
    };
    save_feature_set(&fs, &args.out, format)?;
    log::info!(
        "wrote {} columns of dimension {} to {}",
        fs.len(),
        fs.dim(),
        args.out.display()
    );
    Ok(())
}
