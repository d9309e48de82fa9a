//! File-based stages from raw inputs to a loaded engine.
//!
//! Each stage reads the directories written by earlier stages and fails with
//! [`PipelineError::Missing`] naming the first absent artifact.

mod engine;
mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub use engine::{AreaPosts, Engine, EnginePaths};
pub use manifest::{run_pipeline, PipelineManifest, PipelineRun};
pub use stages::{
    build_graph_stage, compute_perceptions, export_datasets, ingest_stage, load_graph, load_snapshot,
    read_perceptions, train_cgan_stage, train_gae_stage, train_perception_stage, write_perceptions, ExportReport,
    GraphManifest, IngestInputs, IngestReport, PerceptionRow, Snapshot, TrainOptions,
};

use crate::checkpoint::CheckpointError;
use crate::gae::GaeError;
use crate::graph::GraphError;
use crate::ingest::IngestError;
use crate::perception::PerceptionError;
use crate::risk::RiskError;

pub const DISEASE_FILE: &str = "disease.csv";
pub const DEMOGRAPHICS_FILE: &str = "demographics.csv";
pub const MOBILITY_FILE: &str = "mobility.csv";
pub const POSTS_FILE: &str = "posts.jsonl";
pub const POIS_FILE: &str = "pois.csv";
pub const REJECTIONS_FILE: &str = "rejections.csv";
pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const GRAPH_MANIFEST_FILE: &str = "graph.manifest";
pub const PERCEPTION_MODEL_FILE: &str = "perception.ckpt";
pub const CGAN_MODEL_FILE: &str = "cgan.ckpt";
pub const RELATIONS_FILE: &str = "relations.csv";
pub const PERCEPTIONS_FILE: &str = "perceptions.csv";
pub const GAE_LOSS_FILE: &str = "gae_loss.csv";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing artifact {}{}", .path.display(), hint_suffix(.hint))]
    Missing { path: PathBuf, hint: Option<&'static str> },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Ingest {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error("{}: {source}", .path.display())]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("{}: {reason}", .path.display())]
    Invalid { path: PathBuf, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Gae(#[from] GaeError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

fn hint_suffix(hint: &Option<&'static str>) -> String {
    hint.map(|h| format!(" (run `{h}` first)")).unwrap_or_default()
}

impl PipelineError {
    /// True when an input or earlier-stage output is absent.
    pub fn is_missing(&self) -> bool {
        matches!(self, PipelineError::Missing { .. })
    }
}

pub(crate) fn require(path: &Path, hint: Option<&'static str>) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Missing {
            path: path.to_path_buf(),
            hint,
        })
    }
}

pub(crate) fn read_text(path: &Path, hint: Option<&'static str>) -> Result<String, PipelineError> {
    require(path, hint)?;
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest over the sorted names and contents of the regular files in `dir`.
pub fn directory_checksum(dir: &Path) -> Result<String, PipelineError> {
    let io = |source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    };
    require(dir, None)?;
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        if entry.file_type().map_err(io)?.is_file() {
            let bytes = fs::read(entry.path()).map_err(io)?;
            files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
        }
    }
    let mut hasher = Sha256::new();
    for (name, bytes) in &files {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}
