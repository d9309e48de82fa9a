use std::path::{Path, PathBuf};
use std::time::Instant;

use asat_core::pipeline::*;
use asat_core::risk::Location;
use asat_core::Level;
use chrono::NaiveDate;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn manifest_into(out: &Path) -> PipelineManifest {
    let mut m = PipelineManifest::read(&fixture_dir().join("pipeline.manifest")).unwrap();
    m.snapshot_dir = out.join("snapshot");
    m.graph_dir = out.join("graph");
    m.models_dir = out.join("models");
    m.export_dir = out.join("datasets");
    m.lock = out.join("pipeline.lock");
    m
}

fn day(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, d).unwrap()
}

fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6371.0088 * h.sqrt().asin()
}

#[test]
fn fixture_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = manifest_into(dir.path());
    let t = Instant::now();
    let run = run_pipeline(&manifest, false).unwrap();
    eprintln!("pipeline took {:?}: {:#?}", t.elapsed(), run.log);
    assert_eq!(run.ingest.rejected["disease.csv"], 2);
    assert_eq!(run.ingest.rejected["mobility.csv"], 1);
    assert_eq!(run.ingest.rejected["posts.jsonl"], 1);
    assert!(run.holdout_mae <= 0.15);

    let engine = Engine::load(&EnginePaths::new(
        &manifest.snapshot_dir,
        &manifest.models_dir,
        manifest.gamma.as_deref(),
    ))
    .unwrap();
    let a = engine
        .assess(&Location::Coordinate { lat: 41.5036, lon: -81.62 }, day(24), Some(3))
        .unwrap();
    let levels: Vec<Level> = a.chain.iter().map(|l| l.level).collect();
    assert_eq!(levels, [Level::State, Level::County, Level::City]);
    assert_eq!(a.chain[1].density, 1389.0);
    assert_eq!(a.location.as_ref().unwrap().geo_id.as_str(), "39035-44106");
    for l in &a.chain {
        assert!((0.0..=1.0).contains(&l.index), "{l:?}");
    }

    let series = engine.timeseries("39035", day(8), day(24)).unwrap();
    assert_eq!(series.len(), 17);
    assert!(series[1].index > series[0].index, "first confirmed cases raise the index");

    let billings = engine.perception("3006550", day(20)).unwrap();
    assert_eq!(billings.source, asat_core::perception::PerceptionSource::Synthetic);
    let montgomery = engine.posts("42091", Some(day(20))).unwrap();
    let dismissive = montgomery.posts.iter().find(|p| p.post_id == "p-mont-pa").unwrap();
    assert!(dismissive.awareness < 0.5);

    let groceries = engine.nearby_pois(41.5036, -81.62, "grocery", 3.0, day(24)).unwrap();
    assert_eq!(groceries.len(), 3);
    for pair in groceries.windows(2) {
        assert!(pair[0].distance_km <= pair[1].distance_km);
    }
    for p in &groceries {
        assert!((p.distance_km - great_circle_km(41.5036, -81.62, p.lat, p.lon)).abs() < 1e-9);
        assert!(p.distance_km < 3.0);
    }

    let rerun = run_pipeline(&manifest, true).unwrap();
    assert!(rerun.changed.is_empty(), "{:?}", rerun.changed);
    assert_eq!(rerun.checksums, run.checksums);
}

#[test]
fn stages_name_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let err = build_graph_stage(&dir.path().join("snapshot"), Default::default(), &dir.path().join("graph")).unwrap_err();
    assert!(err.is_missing());
    assert!(err.to_string().contains("demographics.csv"), "{err}");
    assert!(err.to_string().contains("ingest"), "{err}");

    let m = manifest_into(dir.path());
    ingest_stage(&m.inputs, &m.snapshot_dir).unwrap();
    let err = export_datasets(&m.snapshot_dir, &m.graph_dir, &m.export_dir).unwrap_err();
    assert!(err.is_missing());
    assert!(err.to_string().contains("graph.manifest"), "{err}");
    let err = train_gae_stage(&m.snapshot_dir, &dir.path().join("nowhere"), &m.models_dir, &TrainOptions::default())
        .unwrap_err();
    assert!(err.is_missing());
    let err = Engine::load(&EnginePaths::new(&m.snapshot_dir, &m.models_dir, None)).unwrap_err();
    assert!(err.is_missing());
}

#[test]
fn graph_from_other_snapshot_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest_into(dir.path());
    ingest_stage(&m.inputs, &m.snapshot_dir).unwrap();
    build_graph_stage(&m.snapshot_dir, m.build_config(), &m.graph_dir).unwrap();
    assert!(load_graph(&m.snapshot_dir, &m.graph_dir).is_ok());
    let mobility = m.snapshot_dir.join(MOBILITY_FILE);
    let text = std::fs::read_to_string(&mobility).unwrap();
    std::fs::write(&mobility, text.lines().take(5).collect::<Vec<_>>().join("\n")).unwrap();
    assert!(matches!(
        load_graph(&m.snapshot_dir, &m.graph_dir),
        Err(PipelineError::Invalid { .. })
    ));
}

#[test]
fn graph_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest_into(dir.path());
    ingest_stage(&m.inputs, &m.snapshot_dir).unwrap();
    let (written, _) = build_graph_stage(&m.snapshot_dir, m.build_config(), &m.graph_dir).unwrap();
    let path = m.graph_dir.join(GRAPH_MANIFEST_FILE);
    assert_eq!(GraphManifest::read(&path, "build-graph").unwrap(), written);
    assert_eq!(written.counts.nodes(), 47);
    assert_eq!(written.counts.include_edges, 46);
}

#[test]
fn manifest_rejects_unknown_keys_and_bad_numbers() {
    let path = Path::new("/tmp/x/pipeline.manifest");
    let base = "disease=a\ndemographics=b\nmobility=c\nposts=d\n";
    let m = PipelineManifest::parse(base, path).unwrap();
    assert_eq!(m.k, 2);
    assert_eq!(m.seed, 7);
    assert_eq!(m.inputs.disease, Path::new("/tmp/x/a"));
    assert_eq!(m.lock, Path::new("/tmp/x/pipeline.lock"));
    assert!(PipelineManifest::parse(&format!("{base}colour=blue\n"), path).is_err());
    assert!(PipelineManifest::parse(&format!("{base}k=two\n"), path).is_err());
    assert!(PipelineManifest::parse("disease=a\n", path).is_err());
    let seeded = PipelineManifest::parse(&format!("{base}seed=99\ngae_epochs=3\n"), path).unwrap();
    let options = seeded.train_options();
    assert_eq!((options.perception.seed, options.cgan.seed, options.gae.seed), (99, 99, 99));
    assert_eq!(options.gae.epochs, 3);
}

#[test]
fn check_mode_reports_changed_stages() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = manifest_into(dir.path());
    m.gae_epochs = Some(5);
    m.cgan_epochs = Some(5);
    run_pipeline(&m, false).unwrap();
    let lock = std::fs::read_to_string(&m.lock).unwrap();
    m.gae_epochs = Some(6);
    let run = run_pipeline(&m, true).unwrap();
    assert_eq!(run.changed, ["gae"]);
    assert_eq!(std::fs::read_to_string(&m.lock).unwrap(), lock, "check mode leaves the lock alone");
}

#[test]
fn perception_rows_round_trip() {
    use asat_core::perception::PerceptionSource;
    let rows = vec![
        PerceptionRow {
            geo_id: asat_core::GeoId::new("39035"),
            date: day(9),
            value: 0.1 + 0.2,
            source: PerceptionSource::Synthetic,
            real_posts: 2,
            synthetic_posts: 16,
        },
        PerceptionRow {
            geo_id: asat_core::GeoId::new("US"),
            date: day(10),
            value: 0.0,
            source: PerceptionSource::Padded,
            real_posts: 0,
            synthetic_posts: 0,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(PERCEPTIONS_FILE);
    std::fs::write(&path, write_perceptions(&rows)).unwrap();
    assert_eq!(read_perceptions(&path).unwrap(), rows);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("geo_id,date,value,source,real_posts,synthetic_posts\n"), "{text}");
}
