//! Command-line surface and layered run configuration.
//!
//! A run is described by a [`RunSpec`]. Settings stack in a fixed order:
//! built-in defaults, then the `MKSSL_CACHE_DIR` environment variable, then a
//! `--config` file of `KEY=VALUE` lines, then positional `KEY=VALUE`
//! overrides, then explicit flags. Later layers win. Unknown keys are hard
//! errors at every layer, so a typo cannot silently fall back to a default.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use mkssl_core::data::{
    ExperimentConfig, MatchingMode, Ratio, SplitMode, SyntheticSpec,
};
use mkssl_core::eval::Method;
use mkssl_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "mkssl",
    version,
    about = "Train and evaluate cross-view re-identification projections",
    long_about = "Fits distance-metric projections for matching people across camera \
                  views, with fully supervised and semi-supervised variants in both a \
                  linear and a multi-kernel flavor, and scores them with cumulative \
                  match curves over repeated random trials."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one projection and save it with its training log.
    Train(RunArgs),
    /// Score a saved projection on a feature file.
    Eval(EvalArgs),
    /// Run the repeated-trial protocol and write aggregate curves.
    Experiment(RunArgs),
    /// Generate a synthetic two-view dataset file.
    Synth(SynthArgs),
}

/// Arguments shared by `train` and `experiment`.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file of KEY=VALUE lines (`#` starts a comment).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Input feature file, CSV or binary.
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,

    /// Draw a synthetic dataset instead of reading one.
    #[arg(long)]
    pub synthetic: bool,

    /// Learner to fit: fsl, ssl, mkfsl, mkssl, or mkssl-mrank.
    #[arg(long, value_name = "NAME")]
    pub method: Option<String>,

    /// Directory for output artifacts.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Score with manifold re-ranking on top of the fitted projection.
    #[arg(long)]
    pub rerank: bool,

    /// Worker threads for the data-parallel paths.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,

    /// Configuration overrides, applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Saved projection to score.
    #[arg(long, value_name = "FILE")]
    pub projection: PathBuf,

    /// Feature file to score against.
    #[arg(long, value_name = "FILE")]
    pub features: PathBuf,

    /// Config file of KEY=VALUE lines (`#` starts a comment).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory for output artifacts.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Additionally score with manifold re-ranking.
    #[arg(long)]
    pub rerank: bool,

    /// Worker threads for the data-parallel paths.
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,

    /// Configuration overrides, applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output file; a `.csv` extension selects the text format.
    #[arg(long, value_name = "FILE", default_value = "features.csv")]
    pub out: PathBuf,

    /// Config file of KEY=VALUE lines (`#` starts a comment).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Configuration overrides, applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Everything a run needs, resolved from all configuration layers.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: ExperimentConfig,
    pub method: Method,
    pub features: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub rerank: bool,
    pub synthetic: bool,
    pub synth: SyntheticSpec,
    pub jobs: Option<usize>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            config: ExperimentConfig::default(),
            method: Method::Mkssl,
            features: None,
            out_dir: PathBuf::from("mkssl-out"),
            rerank: false,
            synthetic: false,
            // CLI experiments default to a regime where the unlabeled pool
            // actually helps: two shots per view, light noise, and look-alike
            // person groups. Library callers keep the neutral generator.
            synth: SyntheticSpec {
                images_per_view: 2,
                noise_sigma: 0.03,
                view_shift: 0.5,
                person_clusters: 10,
                cluster_spread: 0.25,
                ..SyntheticSpec::default()
            },
            jobs: None,
        }
    }
}

impl RunSpec {
    /// Defaults plus the `MKSSL_CACHE_DIR` environment variable.
    pub fn from_env() -> RunSpec {
        let mut spec = RunSpec::default();
        if let Ok(dir) = std::env::var("MKSSL_CACHE_DIR") {
            if !dir.is_empty() {
                spec.config.cache_dir = Some(PathBuf::from(dir));
            }
        }
        spec
    }

    /// Layer a config file on top. Blank lines and `#` comments are skipped,
    /// which makes every run manifest a valid config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = split_assignment(line).ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected KEY=VALUE, got {line:?}"),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Layer positional `KEY=VALUE` overrides on top.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (key, value) = split_assignment(item).ok_or_else(|| {
                Error::Param(format!("override {item:?} is not of the form KEY=VALUE"))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Route one assignment to its field. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "method" => self.method = value.parse()?,
            "features" => self.features = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "rerank" => self.rerank = parse_bool(key, value)?,
            "synthetic" => self.synthetic = parse_bool(key, value)?,
            "jobs" => self.jobs = Some(parse_num(key, value)?),
            "cache_dir" => {
                self.config.cache_dir =
                    (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "eta" => self.config.eta = parse_num(key, value)?,
            "k_neighbors" => self.config.k_neighbors = parse_num(key, value)?,
            "max_iters" => self.config.max_iters = parse_num(key, value)?,
            "theta" => self.config.theta = parse_num(key, value)?,
            "c_grid" => self.config.c_grid = parse_grid(value)?,
            "ratio" => self.config.ratio = Ratio::parse(value)?,
            "trials" => self.config.trials = parse_num(key, value)?,
            "rng_seed" => self.config.rng_seed = parse_num(key, value)?,
            "stop_tolerance" => self.config.stop_tolerance = parse_num(key, value)?,
            "subspace_dim" => {
                self.config.subspace_dim = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "rerank_alpha" => self.config.rerank_alpha = parse_num(key, value)?,
            "rerank_k" => self.config.rerank_k = parse_num(key, value)?,
            "split_mode" => self.config.split_mode = parse_split_mode(value)?,
            "matching_mode" => self.config.matching_mode = parse_matching_mode(value)?,
            "persons" => self.synth.persons = parse_num(key, value)?,
            "images_per_view" => self.synth.images_per_view = parse_num(key, value)?,
            "latent_dim" => self.synth.latent_dim = parse_num(key, value)?,
            "feature_dim" => {
                self.synth.feature_dim = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "noise_sigma" => self.synth.noise_sigma = parse_num(key, value)?,
            "view_shift" => self.synth.view_shift = parse_num(key, value)?,
            "person_clusters" => self.synth.person_clusters = parse_num(key, value)?,
            "cluster_spread" => self.synth.cluster_spread = parse_num(key, value)?,
            "synthetic_seed" => self.synth.seed = parse_num(key, value)?,
            _ => return Err(Error::Param(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }
}

fn split_assignment(s: &str) -> Option<(&str, &str)> {
    let (key, value) = s.split_once('=')?;
    let key = key.trim();
    if key.is_empty() {
        return None;
    }
    Some((key, value.trim()))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Param(format!("bad value for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::Param(format!(
            "bad value for {key}: expected true or false, got {other:?}"
        ))),
    }
}

fn parse_grid(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| parse_num("c_grid", s.trim()))
        .collect()
}

fn parse_split_mode(value: &str) -> Result<SplitMode> {
    match value {
        "cross_view" => Ok(SplitMode::CrossView),
        "single_gallery" => Ok(SplitMode::SingleGalleryPerId),
        other => Err(Error::Param(format!(
            "unknown split_mode {other:?}; expected cross_view or single_gallery"
        ))),
    }
}

fn parse_matching_mode(value: &str) -> Result<MatchingMode> {
    match value {
        "single_shot" => Ok(MatchingMode::SingleShot),
        "multi_shot" => Ok(MatchingMode::MultiShot),
        other => Err(Error::Param(format!(
            "unknown matching_mode {other:?}; expected single_shot or multi_shot"
        ))),
    }
}

fn split_mode_str(mode: SplitMode) -> &'static str {
    match mode {
        SplitMode::CrossView => "cross_view",
        SplitMode::SingleGalleryPerId => "single_gallery",
    }
}

fn matching_mode_str(mode: MatchingMode) -> &'static str {
    match mode {
        MatchingMode::SingleShot => "single_shot",
        MatchingMode::MultiShot => "multi_shot",
    }
}

/// Provenance recorded alongside the resolved settings.
pub struct ManifestMeta<'a> {
    pub command: &'a str,
    pub dataset_sha256: Option<&'a str>,
    pub trial_seeds: &'a [u64],
    pub artifacts: &'a [&'a str],
}

/// Writes the run manifest: `#` comment lines carry provenance, everything
/// else is a KEY=VALUE assignment, so the file re-runs as-is via `--config`.
pub fn write_manifest(path: &Path, spec: &RunSpec, meta: &ManifestMeta) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "# mkssl {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# command: {}", meta.command)?;
    if let Some(sha) = meta.dataset_sha256 {
        writeln!(out, "# dataset_sha256: {sha}")?;
    }
    if !meta.trial_seeds.is_empty() {
        let seeds: Vec<String> = meta.trial_seeds.iter().map(|s| s.to_string()).collect();
        writeln!(out, "# trial_seeds: {}", seeds.join(","))?;
    }
    if !meta.artifacts.is_empty() {
        writeln!(out, "# artifacts: {}", meta.artifacts.join(","))?;
    }
    writeln!(out, "method={}", spec.method)?;
    if let Some(features) = &spec.features {
        writeln!(out, "features={}", features.display())?;
    }
    writeln!(out, "out_dir={}", spec.out_dir.display())?;
    writeln!(out, "rerank={}", spec.rerank)?;
    writeln!(out, "synthetic={}", spec.synthetic)?;
    if let Some(jobs) = spec.jobs {
        writeln!(out, "jobs={jobs}")?;
    }
    if let Some(dir) = &spec.config.cache_dir {
        writeln!(out, "cache_dir={}", dir.display())?;
    }
    let c = &spec.config;
    writeln!(out, "eta={}", c.eta)?;
    writeln!(out, "k_neighbors={}", c.k_neighbors)?;
    writeln!(out, "max_iters={}", c.max_iters)?;
    writeln!(out, "theta={}", c.theta)?;
    let grid: Vec<String> = c.c_grid.iter().map(|v| v.to_string()).collect();
    writeln!(out, "c_grid={}", grid.join(","))?;
    writeln!(out, "ratio={}", c.ratio)?;
    writeln!(out, "trials={}", c.trials)?;
    writeln!(out, "rng_seed={}", c.rng_seed)?;
    writeln!(out, "stop_tolerance={}", c.stop_tolerance)?;
    match c.subspace_dim {
        None => writeln!(out, "subspace_dim=auto")?,
        Some(r) => writeln!(out, "subspace_dim={r}")?,
    }
    writeln!(out, "rerank_alpha={}", c.rerank_alpha)?;
    writeln!(out, "rerank_k={}", c.rerank_k)?;
    writeln!(out, "split_mode={}", split_mode_str(c.split_mode))?;
    writeln!(out, "matching_mode={}", matching_mode_str(c.matching_mode))?;
    let s = &spec.synth;
    writeln!(out, "persons={}", s.persons)?;
    writeln!(out, "images_per_view={}", s.images_per_view)?;
    writeln!(out, "latent_dim={}", s.latent_dim)?;
    match s.feature_dim {
        None => writeln!(out, "feature_dim=auto")?,
        Some(d) => writeln!(out, "feature_dim={d}")?,
    }
    writeln!(out, "noise_sigma={}", s.noise_sigma)?;
    writeln!(out, "view_shift={}", s.view_shift)?;
    writeln!(out, "person_clusters={}", s.person_clusters)?;
    writeln!(out, "cluster_spread={}", s.cluster_spread)?;
    writeln!(out, "synthetic_seed={}", s.seed)?;
    std::fs::write(path, out)?;
    Ok(())
}
