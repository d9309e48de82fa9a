use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::stages::parse_key_values;
use super::*;
use crate::geo::DistanceMetric;
use crate::graph::BuildConfig;
use crate::risk::RiskProfile;

/// Everything one end-to-end run needs. Relative paths are resolved against
/// the manifest's directory.
#[derive(Debug, Clone)]
pub struct PipelineManifest {
    pub inputs: IngestInputs,
    pub gamma: Option<PathBuf>,
    pub k: usize,
    pub metric: DistanceMetric,
    pub seed: u64,
    pub synthetic_posts: usize,
    pub cgan_epochs: Option<usize>,
    pub gae_epochs: Option<usize>,
    pub snapshot_dir: PathBuf,
    pub graph_dir: PathBuf,
    pub models_dir: PathBuf,
    pub export_dir: PathBuf,
    /// Where per-stage checksums are recorded.
    pub lock: PathBuf,
}

pub const STAGES: [&str; 6] = ["ingest", "build-graph", "perception", "cgan", "gae", "export"];

impl PipelineManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self, PipelineError> {
        let base = path.parent().unwrap_or(Path::new("."));
        let keys = parse_key_values(text, path)?;
        let invalid = |reason: String| PipelineError::Invalid {
            path: path.to_path_buf(),
            reason,
        };
        let known = [
            "disease",
            "demographics",
            "mobility",
            "posts",
            "pois",
            "gamma",
            "k",
            "metric",
            "seed",
            "synthetic_posts",
            "cgan_epochs",
            "gae_epochs",
            "snapshot_dir",
            "graph_dir",
            "models_dir",
            "export_dir",
            "lock",
        ];
        if let Some(k) = keys.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(invalid(format!("unknown key `{k}`")));
        }
        let opt_path = |key: &str| keys.get(key).map(|v| base.join(v));
        let req_path = |key: &str| opt_path(key).ok_or_else(|| invalid(format!("missing key `{key}`")));
        fn num<T: std::str::FromStr>(
            keys: &BTreeMap<String, String>,
            key: &str,
            invalid: &dyn Fn(String) -> PipelineError,
        ) -> Result<Option<T>, PipelineError> {
            keys.get(key)
                .map(|v| v.parse().map_err(|_| invalid(format!("`{key}` is not a number"))))
                .transpose()
        }
        let metric = match keys.get("metric") {
            Some(m) => m.parse().map_err(|_| invalid(format!("unknown metric `{m}`")))?,
            None => DistanceMetric::Euclidean,
        };
        Ok(PipelineManifest {
            inputs: IngestInputs {
                disease: req_path("disease")?,
                demographics: req_path("demographics")?,
                mobility: req_path("mobility")?,
                posts: req_path("posts")?,
                pois: opt_path("pois"),
            },
            gamma: opt_path("gamma"),
            k: num(&keys, "k", &invalid)?.unwrap_or(2),
            metric,
            seed: num(&keys, "seed", &invalid)?.unwrap_or(7),
            synthetic_posts: num(&keys, "synthetic_posts", &invalid)?.unwrap_or(16),
            cgan_epochs: num(&keys, "cgan_epochs", &invalid)?,
            gae_epochs: num(&keys, "gae_epochs", &invalid)?,
            snapshot_dir: opt_path("snapshot_dir").unwrap_or_else(|| base.join("out/snapshot")),
            graph_dir: opt_path("graph_dir").unwrap_or_else(|| base.join("out/graph")),
            models_dir: opt_path("models_dir").unwrap_or_else(|| base.join("out/models")),
            export_dir: opt_path("export_dir").unwrap_or_else(|| base.join("out/datasets")),
            lock: opt_path("lock").unwrap_or_else(|| base.join("pipeline.lock")),
        })
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        Self::parse(&read_text(path, None)?, path)
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            k: self.k,
            metric: self.metric,
            ..BuildConfig::default()
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        let mut options = TrainOptions::default().with_seed(self.seed);
        options.synthetic_posts = self.synthetic_posts;
        if let Some(e) = self.cgan_epochs {
            options.cgan.epochs = e;
        }
        if let Some(e) = self.gae_epochs {
            options.gae.epochs = e;
        }
        options
    }

    /// Risk profile named by `gamma`, or the default.
    pub fn profile(&self) -> Result<RiskProfile, PipelineError> {
        match &self.gamma {
            Some(path) => Ok(RiskProfile::parse(&read_text(path, None)?)?),
            None => Ok(RiskProfile::default()),
        }
    }
}

/// Outcome of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineRun {
    /// Stage name to checksum of the files it wrote.
    pub checksums: BTreeMap<String, String>,
    /// Stages whose checksum differs from the previous lock file.
    pub changed: Vec<String>,
    pub ingest: IngestReport,
    pub export: ExportReport,
    pub holdout_mae: f64,
    pub log: Vec<String>,
}

fn files_checksum(files: &[PathBuf]) -> Result<String, PipelineError> {
    let mut joined = String::new();
    for path in files {
        let bytes = std::fs::read(path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        writeln!(joined, "{name}={}", sha256_hex(&bytes)).unwrap();
    }
    Ok(sha256_hex(joined.as_bytes()))
}

fn read_lock(path: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let keys = parse_key_values(&read_text(path, None)?, path)?;
    Ok(keys
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix("checksum.").map(|s| (s.to_string(), v)))
        .collect())
}

/// Runs every stage in order and records per-stage checksums in the lock
/// file. With `check` set the lock file is left alone and differing stages
/// are only reported in [`PipelineRun::changed`].
pub fn run_pipeline(manifest: &PipelineManifest, check: bool) -> Result<PipelineRun, PipelineError> {
    let profile = manifest.profile()?;
    let options = manifest.train_options();
    let mut checksums = BTreeMap::new();
    let mut log = Vec::new();

    let (ingest, files) = ingest_stage(&manifest.inputs, &manifest.snapshot_dir)?;
    checksums.insert("ingest".to_string(), files_checksum(&files)?);
    log.push(format!(
        "ingest: {} rows accepted, {} rejected",
        ingest.accepted.values().sum::<usize>(),
        ingest.rejected.values().sum::<usize>()
    ));

    let (graph, files) = build_graph_stage(&manifest.snapshot_dir, manifest.build_config(), &manifest.graph_dir)?;
    checksums.insert("build-graph".to_string(), files_checksum(&files)?);
    log.push(format!(
        "build-graph: {} nodes, {} edges",
        graph.counts.nodes(),
        graph.counts.edges()
    ));

    let (holdout_mae, files) = train_perception_stage(&manifest.snapshot_dir, &manifest.models_dir, &options)?;
    checksums.insert("perception".to_string(), files_checksum(&files)?);
    log.push(format!("perception: holdout MAE {holdout_mae:.4}"));

    let (pairs, files) = train_cgan_stage(&manifest.snapshot_dir, &manifest.graph_dir, &manifest.models_dir, &options)?;
    checksums.insert("cgan".to_string(), files_checksum(&files)?);
    log.push(format!("cgan: {pairs} training pairs"));

    let (losses, mut files) =
        train_gae_stage(&manifest.snapshot_dir, &manifest.graph_dir, &manifest.models_dir, &options)?;
    let gamma_path = manifest.models_dir.join("gamma.csv");
    write_bytes(&gamma_path, profile.to_csv().as_bytes())?;
    files.push(gamma_path);
    checksums.insert("gae".to_string(), files_checksum(&files)?);
    log.push(format!(
        "gae: final loss {:.4}",
        losses.last().copied().unwrap_or(f64::NAN)
    ));

    let (export, files) = export_datasets(&manifest.snapshot_dir, &manifest.graph_dir, &manifest.export_dir)?;
    checksums.insert("export".to_string(), files_checksum(&files)?);
    log.push(format!("export-datasets:\n{}", export.summary()));

    let previous = read_lock(&manifest.lock)?;
    let changed: Vec<String> = STAGES
        .iter()
        .filter(|s| previous.get(**s).is_some_and(|old| Some(old) != checksums.get(**s)))
        .map(|s| s.to_string())
        .collect();
    if !check {
        let mut lock = format!("seed={}\nk={}\nmetric={}\n", manifest.seed, manifest.k, manifest.metric);
        for stage in STAGES {
            writeln!(lock, "checksum.{stage}={}", checksums[stage]).unwrap();
        }
        write_bytes(&manifest.lock, lock.as_bytes())?;
    }
    Ok(PipelineRun {
        checksums,
        changed,
        ingest,
        export,
        holdout_mae,
        log,
    })
}
