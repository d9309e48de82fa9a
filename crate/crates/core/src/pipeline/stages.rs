use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::*;
use crate::checkpoint;
use crate::gae::{train_gae, GaeConfig};
use crate::geo::{DistanceMetric, GeoId};
use crate::graph::{build_ahin, export, Ahin, AhinCounts, AhinInputs, BuildConfig, DiseaseFallback, PerceptionRecord};
use crate::ingest::{
    parse_demographics, parse_disease, parse_mobility, parse_pois, parse_posts, write_demographics, write_disease,
    write_mobility, write_pois, write_posts, DemographicRecord, DiseaseRecord, Gazetteer, LocationIndex,
    MobilityRecord, Poi, RawPost, Rejection,
};
use crate::perception::{
    area_perception, attribute_posts, synthesis_seed, train_cgan, train_perception, AreaPerception, CganConfig,
    Condition, Embedder, Lexicon, PerceptionConfig, PerceptionSource, Synthesizer, DEFAULT_EMBEDDING_DIM,
    DEFAULT_EMBEDDING_SEED,
};

/// Raw input files for the ingest stage.
#[derive(Debug, Clone)]
pub struct IngestInputs {
    pub disease: PathBuf,
    pub demographics: PathBuf,
    pub mobility: PathBuf,
    pub posts: PathBuf,
    pub pois: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// Accepted rows per source file.
    pub accepted: BTreeMap<String, usize>,
    /// Rejected rows per source file.
    pub rejected: BTreeMap<String, usize>,
}

/// Validated inputs as written by [`ingest_stage`].
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub demographics: Vec<DemographicRecord>,
    pub disease: Vec<DiseaseRecord>,
    pub mobility: Vec<MobilityRecord>,
    pub posts: Vec<RawPost>,
    pub pois: Vec<Poi>,
    pub checksum: String,
}

impl Snapshot {
    pub fn gazetteer(&self) -> Gazetteer {
        Gazetteer::new(self.demographics.clone())
    }

    /// Builds the graph, optionally with awareness scores attached.
    pub fn ahin(&self, config: BuildConfig, perceptions: &[PerceptionRecord]) -> Result<Ahin, PipelineError> {
        Ok(build_ahin(
            AhinInputs {
                demographics: &self.demographics,
                disease: &self.disease,
                mobility: &self.mobility,
                perceptions,
            },
            config,
        )?)
    }
}

fn ingest_error(path: &Path) -> impl Fn(crate::ingest::IngestError) -> PipelineError + '_ {
    move |source| PipelineError::Ingest {
        path: path.to_path_buf(),
        source,
    }
}

fn to_bytes(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<(), crate::ingest::IngestError>) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(ingest_error(path))?;
    Ok(buf)
}

/// Validates the raw files and writes clean copies plus `rejections.csv`
/// into `out`. Returns the written files.
pub fn ingest_stage(inputs: &IngestInputs, out: &Path) -> Result<(IngestReport, Vec<PathBuf>), PipelineError> {
    let demo_text = read_text(&inputs.demographics, None)?;
    let disease_text = read_text(&inputs.disease, None)?;
    let mobility_text = read_text(&inputs.mobility, None)?;
    let posts_text = read_text(&inputs.posts, None)?;
    let pois_text = inputs.pois.as_deref().map(|p| read_text(p, None)).transpose()?;

    let demographics = parse_demographics(&demo_text).map_err(ingest_error(&inputs.demographics))?;
    let gazetteer = Gazetteer::new(demographics.records.clone());
    let disease = parse_disease(&disease_text, Some(&gazetteer)).map_err(ingest_error(&inputs.disease))?;
    let mobility = parse_mobility(&mobility_text, Some(&gazetteer)).map_err(ingest_error(&inputs.mobility))?;
    let mut posts = parse_posts(&posts_text).map_err(ingest_error(&inputs.posts))?;
    posts.records.sort_by(|a, b| (a.created, &a.post_id).cmp(&(b.created, &b.post_id)));
    let pois = match (&pois_text, &inputs.pois) {
        (Some(text), Some(path)) => parse_pois(text).map_err(ingest_error(path))?,
        _ => Default::default(),
    };

    let mut report = IngestReport::default();
    let mut rejections = String::from("file,line,reason\n");
    let mut note = |file: &str, accepted: usize, rejected: &[Rejection]| {
        report.accepted.insert(file.to_string(), accepted);
        report.rejected.insert(file.to_string(), rejected.len());
        for r in rejected {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            w.write_record([file, &r.line.to_string(), &r.reason]).expect("in-memory write");
            rejections.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
        }
    };
    note(DEMOGRAPHICS_FILE, demographics.records.len(), &demographics.rejections);
    note(DISEASE_FILE, disease.records.len(), &disease.rejections);
    note(MOBILITY_FILE, mobility.records.len(), &mobility.rejections);
    note(POSTS_FILE, posts.records.len(), &posts.rejections);
    if inputs.pois.is_some() {
        note(POIS_FILE, pois.records.len(), &pois.rejections);
    }

    let files = [
        (DEMOGRAPHICS_FILE, to_bytes(&inputs.demographics, |b| write_demographics(b, &demographics.records))?),
        (DISEASE_FILE, to_bytes(&inputs.disease, |b| write_disease(b, &disease.records))?),
        (MOBILITY_FILE, to_bytes(&inputs.mobility, |b| write_mobility(b, &mobility.records))?),
        (POSTS_FILE, to_bytes(&inputs.posts, |b| write_posts(b, &posts.records))?),
        (POIS_FILE, to_bytes(out, |b| write_pois(b, &pois.records))?),
        (REJECTIONS_FILE, rejections.into_bytes()),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = out.join(name);
        write_bytes(&path, &bytes)?;
        written.push(path);
    }
    Ok((report, written))
}

/// Reads a snapshot directory written by [`ingest_stage`].
pub fn load_snapshot(dir: &Path) -> Result<Snapshot, PipelineError> {
    const HINT: Option<&str> = Some("ingest");
    let path = |name| dir.join(name);
    let demo_path = path(DEMOGRAPHICS_FILE);
    let demographics = parse_demographics(&read_text(&demo_path, HINT)?).map_err(ingest_error(&demo_path))?;
    let gazetteer = Gazetteer::new(demographics.records.clone());
    let disease_path = path(DISEASE_FILE);
    let disease = parse_disease(&read_text(&disease_path, HINT)?, Some(&gazetteer)).map_err(ingest_error(&disease_path))?;
    let mobility_path = path(MOBILITY_FILE);
    let mobility =
        parse_mobility(&read_text(&mobility_path, HINT)?, Some(&gazetteer)).map_err(ingest_error(&mobility_path))?;
    let posts_path = path(POSTS_FILE);
    let posts = parse_posts(&read_text(&posts_path, HINT)?).map_err(ingest_error(&posts_path))?;
    let pois_path = path(POIS_FILE);
    let pois = if pois_path.exists() {
        parse_pois(&read_text(&pois_path, HINT)?).map_err(ingest_error(&pois_path))?.records
    } else {
        Vec::new()
    };
    Ok(Snapshot {
        demographics: demographics.records,
        disease: disease.records,
        mobility: mobility.records,
        posts: posts.records,
        pois,
        checksum: snapshot_checksum(dir)?,
    })
}

fn snapshot_checksum(dir: &Path) -> Result<String, PipelineError> {
    let mut joined = String::new();
    for name in [DEMOGRAPHICS_FILE, DISEASE_FILE, MOBILITY_FILE, POSTS_FILE, POIS_FILE] {
        let path = dir.join(name);
        let bytes = if path.exists() {
            std::fs::read(&path).map_err(|source| PipelineError::Io { path: path.clone(), source })?
        } else {
            Vec::new()
        };
        writeln!(joined, "{name}={}", sha256_hex(&bytes)).unwrap();
    }
    Ok(sha256_hex(joined.as_bytes()))
}

/// Build settings and provenance of a graph or model directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphManifest {
    pub config: BuildConfig,
    pub counts: AhinCounts,
    pub snapshot: String,
}

fn fallback_name(f: DiseaseFallback) -> &'static str {
    match f {
        DiseaseFallback::ZeroPad => "zeropad",
        DiseaseFallback::Ancestor => "ancestor",
    }
}

impl GraphManifest {
    pub fn to_text(&self) -> String {
        let c = &self.counts;
        format!(
            "k={}\nmetric={}\ndisease_fallback={}\nsnapshot={}\nnations={}\nstates={}\ncounties={}\ncities={}\ninclude_edges={}\nnear_edges={}\n",
            self.config.k,
            self.config.metric,
            fallback_name(self.config.disease_fallback),
            self.snapshot,
            c.nations,
            c.states,
            c.counties,
            c.cities,
            c.include_edges,
            c.near_edges
        )
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, PipelineError> {
        let keys = parse_key_values(text, path)?;
        let invalid = |reason: String| PipelineError::Invalid {
            path: path.to_path_buf(),
            reason,
        };
        let get = |key: &str| keys.get(key).ok_or_else(|| invalid(format!("missing key `{key}`")));
        let num = |key: &str| -> Result<usize, PipelineError> {
            get(key)?.parse().map_err(|_| invalid(format!("`{key}` is not a count")))
        };
        let metric: DistanceMetric = get("metric")?.parse().map_err(|_| invalid("unknown metric".into()))?;
        let disease_fallback = match get("disease_fallback")?.as_str() {
            "zeropad" => DiseaseFallback::ZeroPad,
            "ancestor" => DiseaseFallback::Ancestor,
            other => return Err(invalid(format!("unknown disease_fallback `{other}`"))),
        };
        Ok(GraphManifest {
            config: BuildConfig {
                k: num("k")?,
                metric,
                disease_fallback,
            },
            counts: AhinCounts {
                nations: num("nations")?,
                states: num("states")?,
                counties: num("counties")?,
                cities: num("cities")?,
                include_edges: num("include_edges")?,
                near_edges: num("near_edges")?,
            },
            snapshot: get("snapshot")?.clone(),
        })
    }

    pub fn read(path: &Path, hint: &'static str) -> Result<Self, PipelineError> {
        Self::parse(&read_text(path, Some(hint))?, path)
    }
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub(crate) fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| PipelineError::Invalid {
            path: path.to_path_buf(),
            reason: format!("line {}: expected key=value", i + 1),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Builds the graph from a snapshot and writes `nodes.csv`, `edges.csv` and
/// `graph.manifest` into `out`.
pub fn build_graph_stage(
    snapshot_dir: &Path,
    config: BuildConfig,
    out: &Path,
) -> Result<(GraphManifest, Vec<PathBuf>), PipelineError> {
    let snapshot = load_snapshot(snapshot_dir)?;
    let ahin = snapshot.ahin(config, &[])?;
    let manifest = GraphManifest {
        config,
        counts: ahin.counts(),
        snapshot: snapshot.checksum.clone(),
    };
    let csv_bytes = |f: &dyn Fn(&mut Vec<u8>) -> Result<(), csv::Error>, path: &Path| {
        let mut buf = Vec::new();
        f(&mut buf).map_err(|e| PipelineError::Invalid {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok::<_, PipelineError>(buf)
    };
    let nodes_path = out.join(NODES_FILE);
    let edges_path = out.join(EDGES_FILE);
    let manifest_path = out.join(GRAPH_MANIFEST_FILE);
    write_bytes(&nodes_path, &csv_bytes(&|b| export::write_nodes(b, &ahin), &nodes_path)?)?;
    write_bytes(&edges_path, &csv_bytes(&|b| export::write_edges(b, &ahin), &edges_path)?)?;
    write_bytes(&manifest_path, manifest.to_text().as_bytes())?;
    Ok((manifest, vec![nodes_path, edges_path, manifest_path]))
}

/// Snapshot plus the graph built over it, rebuilt with the recorded settings.
pub fn load_graph(snapshot_dir: &Path, graph_dir: &Path) -> Result<(Snapshot, Ahin, GraphManifest), PipelineError> {
    let manifest_path = graph_dir.join(GRAPH_MANIFEST_FILE);
    let manifest = GraphManifest::read(&manifest_path, "build-graph")?;
    let snapshot = load_snapshot(snapshot_dir)?;
    if snapshot.checksum != manifest.snapshot {
        return Err(PipelineError::Invalid {
            path: manifest_path,
            reason: "graph was built from a different snapshot; rerun build-graph".into(),
        });
    }
    let ahin = snapshot.ahin(manifest.config, &[])?;
    Ok((snapshot, ahin, manifest))
}

/// Settings shared by the three training stages.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub seed: u64,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
    pub perception: PerceptionConfig,
    pub cgan: CganConfig,
    pub gae: GaeConfig,
    /// Synthetic posts drawn for each area and date below the real-post threshold.
    pub synthetic_posts: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            seed: 7,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            embedding_seed: DEFAULT_EMBEDDING_SEED,
            perception: PerceptionConfig::default(),
            cgan: CganConfig::default(),
            gae: GaeConfig::default(),
            synthetic_posts: 16,
        }
    }
}

impl TrainOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.perception.seed = seed;
        self.cgan.seed = seed;
        self.gae.seed = seed;
        self
    }

    fn embedder(&self) -> Embedder {
        Embedder::new(self.embedding_dim, self.embedding_seed)
    }
}

fn checkpoint_error(path: &Path) -> impl Fn(crate::checkpoint::CheckpointError) -> PipelineError + '_ {
    move |source| PipelineError::Checkpoint {
        path: path.to_path_buf(),
        source,
    }
}

/// Fits the awareness network on every post, labelled by the lexicon, and
/// writes `perception.ckpt`.
pub fn train_perception_stage(
    snapshot_dir: &Path,
    models_dir: &Path,
    options: &TrainOptions,
) -> Result<(f64, Vec<PathBuf>), PipelineError> {
    let snapshot = load_snapshot(snapshot_dir)?;
    let embedder = options.embedder();
    let lexicon = Lexicon::bundled();
    let samples: Vec<(Vec<f64>, f64)> = snapshot
        .posts
        .iter()
        .map(|p| {
            let text = p.text();
            (embedder.embed(&text).vector, lexicon.awareness(&text))
        })
        .collect();
    let trained = train_perception(&samples, &options.perception)?;
    let path = models_dir.join(PERCEPTION_MODEL_FILE);
    write_bytes(&path, checkpoint::write_perception(&trained.model, &embedder).as_bytes())?;
    Ok((trained.holdout_mae, vec![path]))
}

/// Fits the conditional generator on (post embedding, area condition) pairs
/// and writes `cgan.ckpt`.
pub fn train_cgan_stage(
    snapshot_dir: &Path,
    graph_dir: &Path,
    models_dir: &Path,
    options: &TrainOptions,
) -> Result<(usize, Vec<PathBuf>), PipelineError> {
    let (snapshot, ahin, _) = load_graph(snapshot_dir, graph_dir)?;
    let gazetteer = snapshot.gazetteer();
    let locations = LocationIndex::new(&gazetteer);
    let embedder = options.embedder();
    let mut samples = Vec::new();
    for post in &snapshot.posts {
        let found = locations.extract(post);
        if found.geo_ids.is_empty() {
            continue;
        }
        let embedding = embedder.embed(&post.text()).vector;
        for id in &found.geo_ids {
            if let Some(node) = ahin.lookup(id.as_str()) {
                samples.push((embedding.clone(), Condition::of(&ahin, node, post.date()).to_vec()));
            }
        }
    }
    let trained = train_cgan(&samples, &options.cgan)?;
    let path = models_dir.join(CGAN_MODEL_FILE);
    write_bytes(&path, checkpoint::write_cgan(&trained.pair, &embedder).as_bytes())?;
    Ok((samples.len(), vec![path]))
}

/// One row of `perceptions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionRow {
    pub geo_id: GeoId,
    pub date: NaiveDate,
    pub value: f64,
    pub source: PerceptionSource,
    pub real_posts: usize,
    pub synthetic_posts: usize,
}

impl PerceptionRow {
    pub fn perception(&self) -> AreaPerception {
        AreaPerception {
            value: self.value,
            source: self.source,
            real_posts: self.real_posts,
            synthetic_posts: self.synthetic_posts,
        }
    }
}

pub fn write_perceptions(rows: &[PerceptionRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn read_perceptions(path: &Path) -> Result<Vec<PerceptionRow>, PipelineError> {
    let text = read_text(path, Some("train --component gae"))?;
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<PerceptionRow>, _>>()
        .map_err(|e| PipelineError::Invalid {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Awareness of every area on every graph date: real posts when there are
/// enough, synthetic ones otherwise.
pub fn compute_perceptions(
    snapshot: &Snapshot,
    ahin: &Ahin,
    synthesizer: Option<Synthesizer<'_>>,
    synthetic_posts: usize,
    seed: u64,
) -> Vec<PerceptionRow> {
    let gazetteer = snapshot.gazetteer();
    let attributed = attribute_posts(&snapshot.posts, &LocationIndex::new(&gazetteer), Lexicon::bundled());
    let dates: Vec<NaiveDate> = ahin.dates().collect();
    let mut rows = Vec::with_capacity(ahin.len() * dates.len());
    for node in ahin.nodes() {
        let id = ahin.lookup(node.geo_id.as_str()).expect("node is indexed");
        let posts = attributed.get(&node.geo_id).map(Vec::as_slice).unwrap_or(&[]);
        for &date in &dates {
            let scores: Vec<f64> = posts.iter().filter(|p| p.date == date).map(|p| p.awareness).collect();
            let condition = Condition::of(ahin, id, date);
            let seed = synthesis_seed(seed, node.geo_id.as_str(), date);
            let p = area_perception(&scores, synthesizer, &condition, synthetic_posts, seed);
            rows.push(PerceptionRow {
                geo_id: node.geo_id.clone(),
                date,
                value: p.value,
                source: p.source,
                real_posts: p.real_posts,
                synthetic_posts: p.synthetic_posts,
            });
        }
    }
    rows
}

/// Computes area perceptions, rebuilds the graph with them and learns the
/// relation matrices. Writes `perceptions.csv`, `relations.csv`,
/// `gae_loss.csv` and a copy of the graph manifest into `models_dir`.
pub fn train_gae_stage(
    snapshot_dir: &Path,
    graph_dir: &Path,
    models_dir: &Path,
    options: &TrainOptions,
) -> Result<(Vec<f64>, Vec<PathBuf>), PipelineError> {
    let (snapshot, base, manifest) = load_graph(snapshot_dir, graph_dir)?;
    let perception_path = models_dir.join(PERCEPTION_MODEL_FILE);
    let cgan_path = models_dir.join(CGAN_MODEL_FILE);
    let (model, _) = checkpoint::read_perception(&read_text(&perception_path, Some("train --component perception"))?)
        .map_err(checkpoint_error(&perception_path))?;
    let (pair, _) = checkpoint::read_cgan(&read_text(&cgan_path, Some("train --component cgan"))?)
        .map_err(checkpoint_error(&cgan_path))?;
    let synthesizer = Synthesizer::new(&pair, &model)?;
    let rows = compute_perceptions(&snapshot, &base, Some(synthesizer), options.synthetic_posts, options.seed);
    let records: Vec<PerceptionRecord> = rows
        .iter()
        .map(|r| PerceptionRecord {
            geo_id: r.geo_id.clone(),
            date: r.date,
            value: r.value,
        })
        .collect();
    let ahin = snapshot.ahin(manifest.config, &records)?;
    let trained = train_gae(&ahin, &options.gae)?;

    let mut loss_csv = String::from("epoch,loss\n");
    for (i, l) in trained.losses.iter().enumerate() {
        writeln!(loss_csv, "{},{l}", i + 1).unwrap();
    }
    let files = [
        (PERCEPTIONS_FILE, write_perceptions(&rows)),
        (RELATIONS_FILE, checkpoint::write_relations(&trained.relations).into_bytes()),
        (GAE_LOSS_FILE, loss_csv.into_bytes()),
        (GRAPH_MANIFEST_FILE, manifest.to_text().into_bytes()),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = models_dir.join(name);
        write_bytes(&path, &bytes)?;
        written.push(path);
    }
    Ok((trained.losses, written))
}

pub const DB_FILES: [&str; 4] = ["db1_disease.csv", "db2_demographics.csv", "db3_posts.jsonl", "db4_ahin_edges.csv"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportReport {
    pub disease_rows: usize,
    pub demographic_rows: usize,
    pub posts: usize,
    pub counts: AhinCounts,
}

impl ExportReport {
    pub fn summary(&self) -> String {
        let c = &self.counts;
        format!(
            "DB1 {} disease rows\nDB2 {} demographic rows\nDB3 {} posts\nDB4 {} nodes ({} nations, {} states, {} counties, {} cities), {} edges ({} include, {} near)",
            self.disease_rows,
            self.demographic_rows,
            self.posts,
            c.nodes(),
            c.nations,
            c.states,
            c.counties,
            c.cities,
            c.edges(),
            c.include_edges,
            c.near_edges
        )
    }
}

/// Writes the four dataset files: disease, demographics, posts, and the
/// graph edge list.
pub fn export_datasets(
    snapshot_dir: &Path,
    graph_dir: &Path,
    out: &Path,
) -> Result<(ExportReport, Vec<PathBuf>), PipelineError> {
    let (snapshot, ahin, _) = load_graph(snapshot_dir, graph_dir)?;
    let mut edges = Vec::new();
    export::write_edges(&mut edges, &ahin).map_err(|e| PipelineError::Invalid {
        path: out.join(DB_FILES[3]),
        reason: e.to_string(),
    })?;
    let files = [
        to_bytes(out, |b| write_disease(b, &snapshot.disease))?,
        to_bytes(out, |b| write_demographics(b, &snapshot.demographics))?,
        to_bytes(out, |b| write_posts(b, &snapshot.posts))?,
        edges,
    ];
    let mut written = Vec::new();
    for (name, bytes) in DB_FILES.iter().zip(files) {
        let path = out.join(name);
        write_bytes(&path, &bytes)?;
        written.push(path);
    }
    let report = ExportReport {
        disease_rows: snapshot.disease.len(),
        demographic_rows: snapshot.demographics.len(),
        posts: snapshot.posts.len(),
        counts: ahin.counts(),
    };
    Ok((report, written))
}
