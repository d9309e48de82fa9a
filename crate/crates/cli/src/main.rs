//! `asat`: runs the pipeline stages, answers assessments, serves the API.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asat_core::geo::DistanceMetric;
use asat_core::graph::{BuildConfig, DiseaseFallback};
use asat_core::pipeline::{self, Engine, EnginePaths, PipelineError, PipelineManifest, TrainOptions};
use asat_core::risk::{Location, RiskAssessment};
use asat_core::GeoId;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "asat", version, about = "Hierarchical community risk indexes from multi-source pandemic data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate raw inputs and write a snapshot directory.
    Ingest(IngestArgs),
    /// Build the area graph from a snapshot.
    BuildGraph(BuildGraphArgs),
    /// Train one model component.
    Train(TrainArgs),
    /// Assess a coordinate or area and print the hierarchical chain.
    Assess(AssessArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Write the disease, demographics, posts and graph-edge datasets.
    ExportDatasets(ExportArgs),
    /// Run every stage from a manifest file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    disease: PathBuf,
    #[arg(long = "demo", alias = "demographics")]
    demographics: PathBuf,
    #[arg(long)]
    mobility: PathBuf,
    #[arg(long)]
    posts: PathBuf,
    #[arg(long)]
    pois: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Metric {
    Euclidean,
    Haversine,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Fallback {
    Ancestor,
    Zeropad,
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, value_enum, default_value = "euclidean")]
    metric: Metric,
    #[arg(long, value_enum, default_value = "ancestor")]
    disease_fallback: Fallback,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Component {
    Perception,
    Cgan,
    Gae,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    component: Component,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    snapshot: PathBuf,
    /// Graph directory; needed by cgan and gae.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    models: PathBuf,
    /// Override the component's epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    /// Synthetic posts per area and date (gae only).
    #[arg(long, default_value_t = 16)]
    synthetic_posts: usize,
}

#[derive(Debug, Args)]
struct EngineArgs {
    #[arg(long, env = "ASAT_SNAPSHOT")]
    snapshot: PathBuf,
    #[arg(long, env = "ASAT_MODELS")]
    models: PathBuf,
    #[arg(long, env = "ASAT_GAMMA")]
    gamma: Option<PathBuf>,
}

impl EngineArgs {
    fn load(&self) -> Result<Engine> {
        Ok(Engine::load(&EnginePaths::new(&self.snapshot, &self.models, self.gamma.as_deref()))?)
    }
}

#[derive(Debug, Args)]
struct AssessArgs {
    #[arg(long, requires = "lon", conflicts_with = "geo_id", allow_hyphen_values = true)]
    lat: Option<f64>,
    #[arg(long, requires = "lat", allow_hyphen_values = true)]
    lon: Option<f64>,
    #[arg(long)]
    geo_id: Option<String>,
    /// Defaults to the latest ingested date.
    #[arg(long)]
    date: Option<NaiveDate>,
    /// Local busyness 1-5 at the coordinate.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
    mobility: Option<u8>,
    /// Assess dates without ingested data, with zero-padded disease features.
    #[arg(long)]
    allow_stale: bool,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "ASAT_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Date used when a request names none.
    #[arg(long, env = "ASAT_DATE")]
    date: Option<NaiveDate>,
    #[command(flatten)]
    engine: EngineArgs,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Compare against the lock file instead of rewriting it; fail on any difference.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("ASAT_LOG").unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let missing = e
                .chain()
                .any(|c| c.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_missing));
            ExitCode::from(if missing { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Train(a) => train(a),
        Command::Assess(a) => assess(a),
        Command::Serve(a) => serve(a),
        Command::ExportDatasets(a) => export(a),
        Command::Pipeline(a) => run_manifest(a),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let inputs = pipeline::IngestInputs {
        disease: a.disease,
        demographics: a.demographics,
        mobility: a.mobility,
        posts: a.posts,
        pois: a.pois,
    };
    let (report, _) = pipeline::ingest_stage(&inputs, &a.out)?;
    for (file, accepted) in &report.accepted {
        println!("{file}: {accepted} accepted, {} rejected", report.rejected[file]);
    }
    println!("snapshot written to {}", a.out.display());
    Ok(())
}

fn build_graph(a: BuildGraphArgs) -> Result<()> {
    let config = BuildConfig {
        k: a.k,
        metric: match a.metric {
            Metric::Euclidean => DistanceMetric::Euclidean,
            Metric::Haversine => DistanceMetric::Haversine,
        },
        disease_fallback: match a.disease_fallback {
            Fallback::Ancestor => DiseaseFallback::Ancestor,
            Fallback::Zeropad => DiseaseFallback::ZeroPad,
        },
    };
    let (manifest, _) = pipeline::build_graph_stage(&a.snapshot, config, &a.out)?;
    let c = manifest.counts;
    println!(
        "{} nodes ({} nations, {} states, {} counties, {} cities), {} include edges, {} near edges",
        c.nodes(),
        c.nations,
        c.states,
        c.counties,
        c.cities,
        c.include_edges,
        c.near_edges
    );
    Ok(())
}

fn graph_dir(a: &TrainArgs) -> Result<&Path> {
    match &a.graph {
        Some(g) => Ok(g),
        None => bail!("--graph is required for --component {:?}", a.component),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let mut options = TrainOptions::default().with_seed(a.seed);
    options.synthetic_posts = a.synthetic_posts;
    match a.component {
        Component::Perception => {
            if let Some(e) = a.epochs {
                options.perception.epochs = e;
            }
            let (mae, _) = pipeline::train_perception_stage(&a.snapshot, &a.models, &options)?;
            println!("perception model trained, holdout MAE {mae:.4}");
        }
        Component::Cgan => {
            if let Some(e) = a.epochs {
                options.cgan.epochs = e;
            }
            let (pairs, _) = pipeline::train_cgan_stage(&a.snapshot, graph_dir(&a)?, &a.models, &options)?;
            println!("cgan trained on {pairs} (embedding, condition) pairs");
        }
        Component::Gae => {
            if let Some(e) = a.epochs {
                options.gae.epochs = e;
            }
            let (losses, _) = pipeline::train_gae_stage(&a.snapshot, graph_dir(&a)?, &a.models, &options)?;
            match (losses.first(), losses.last()) {
                (Some(first), Some(last)) => println!("gae trained, loss {first:.4} -> {last:.4}"),
                _ => println!("gae relations initialised without training"),
            }
        }
    }
    println!("models written to {}", a.models.display());
    Ok(())
}

fn format_table(a: &RiskAssessment) -> String {
    let mut out = format!("date {}{}\n", a.date, if a.stale { " (stale: no ingested data)" } else { "" });
    out.push_str(&format!(
        "{:<8} {:<14} {:<24} {:>7} {:>10} {:>10} {:>8}\n",
        "level", "geo_id", "name", "index", "perception", "density", "mobility"
    ));
    for l in &a.chain {
        out.push_str(&format!(
            "{:<8} {:<14} {:<24} {:>7.3} {:>10.3} {:>10.0} {:>8.0}\n",
            l.level.to_string(),
            l.geo_id.as_str(),
            l.name,
            l.index,
            l.perception,
            l.density,
            l.mobility
        ));
    }
    if let Some(loc) = &a.location {
        out.push_str(&format!(
            "location {:.4},{:.4} in {} ({:.2} km){} index {:.3}\n",
            loc.lat,
            loc.lon,
            loc.geo_id.as_str(),
            loc.distance_km,
            loc.mobility.map(|m| format!(", mobility {m}")).unwrap_or_default(),
            loc.index
        ));
    }
    out
}

fn assess(a: AssessArgs) -> Result<()> {
    let location = match (a.lat, a.lon, &a.geo_id) {
        (Some(lat), Some(lon), None) => Location::Coordinate { lat, lon },
        (None, None, Some(id)) => Location::Area(GeoId::new(id.as_str())),
        _ => bail!("give either --lat and --lon, or --geo-id"),
    };
    let engine = a.engine.load()?;
    let date = match a.date.or_else(|| engine.latest_date()) {
        Some(d) => d,
        None => bail!("snapshot holds no dated records; pass --date"),
    };
    if !a.allow_stale && !engine.ahin().is_known_date(date) {
        bail!("no data ingested for {date}; pass --allow-stale to assess with zero-padded disease features");
    }
    let result = engine.assess(&location, date, a.mobility)?;
    print!("{}", format_table(&result));
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = asat_service::ApiConfig {
        bind: a.bind,
        snapshot: a.engine.snapshot.clone(),
        models: a.engine.models.clone(),
        gamma: a.engine.gamma.clone(),
        default_date: a.date,
    };
    let engine = a.engine.load()?;
    tokio::runtime::Runtime::new()
        .context("starting runtime")?
        .block_on(asat_service::serve(config, engine))
        .context("server failed")
}

fn export(a: ExportArgs) -> Result<()> {
    let (report, files) = pipeline::export_datasets(&a.snapshot, &a.graph, &a.out)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    println!("{}", report.summary());
    Ok(())
}

fn run_manifest(a: PipelineArgs) -> Result<()> {
    let manifest = PipelineManifest::read(&a.manifest)?;
    let run = pipeline::run_pipeline(&manifest, a.check)?;
    for line in &run.log {
        println!("{line}");
    }
    for (stage, sum) in &run.checksums {
        println!("checksum.{stage}={sum}");
    }
    if !run.changed.is_empty() {
        let msg = format!("outputs differ from {}: {}", manifest.lock.display(), run.changed.join(", "));
        if a.check {
            bail!(msg);
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}
