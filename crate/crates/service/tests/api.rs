use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use asat_core::gae::RelationMatrices;
use asat_core::graph::FEATURE_DIM;
use asat_core::pipeline::{run_pipeline, Engine, EnginePaths, PipelineManifest};
use asat_core::risk::RiskProfile;
use asat_core::synth;
use asat_service::{router, AppState};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::Value;
use tower::ServiceExt;

struct Trained {
    _dir: tempfile::TempDir,
    paths: EnginePaths,
}

fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
        let mut m = PipelineManifest::read(&fixtures.join("pipeline.manifest")).unwrap();
        let out: PathBuf = dir.path().to_path_buf();
        m.snapshot_dir = out.join("snapshot");
        m.graph_dir = out.join("graph");
        m.models_dir = out.join("models");
        m.export_dir = out.join("datasets");
        m.lock = out.join("pipeline.lock");
        run_pipeline(&m, false).unwrap();
        let paths = EnginePaths::new(&m.snapshot_dir, &m.models_dir, m.gamma.as_deref());
        Trained { _dir: dir, paths }
    })
}

fn fixture_state() -> AppState {
    AppState::new(Engine::load(&trained().paths).unwrap())
}

async fn get(state: &AppState, uri: &str) -> (StatusCode, Value) {
    let response = router(state.clone())
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn assert_error(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()));
}

fn great_circle_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let h = ((p2 - p1) / 2.0).sin().powi(2) + p1.cos() * p2.cos() * ((lon2 - lon1).to_radians() / 2.0).sin().powi(2);
    2.0 * 6371.0088 * h.sqrt().asin()
}

#[tokio::test]
async fn risk_returns_three_level_chain() {
    let state = fixture_state();
    let (status, body) = get(&state, "/v1/risk?lat=41.5036&lon=-81.62&date=2020-03-24&mobility=3").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let chain = body["chain"].as_array().unwrap();
    let levels: Vec<&str> = chain.iter().map(|l| l["level"].as_str().unwrap()).collect();
    assert_eq!(levels, ["state", "county", "city"]);
    for l in chain {
        let idx = l["index"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&idx));
        for key in ["perception", "density", "mobility"] {
            assert!(l[key].is_number(), "{key} missing in {l}");
        }
    }
    assert_eq!(chain[1]["density"], 1389.0);
    assert_eq!(body["location"]["geo_id"], "39035-44106");
    assert_eq!(body["location"]["mobility"], 3);
    assert_eq!(body["stale"], false);
}

#[tokio::test]
async fn risk_defaults_to_latest_date() {
    let state = fixture_state();
    let (status, body) = get(&state, "/v1/risk?lat=41.5036&lon=-81.62").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["date"], "2020-03-24");
    let mut pinned = fixture_state();
    pinned.default_date = Some(chrono::NaiveDate::from_ymd_opt(2020, 3, 10).unwrap());
    let (_, body) = get(&pinned, "/v1/risk?lat=41.5036&lon=-81.62").await;
    assert_eq!(body["date"], "2020-03-10");
}

#[tokio::test]
async fn risk_errors() {
    let state = fixture_state();
    for uri in [
        "/v1/risk?lat=91&lon=0",
        "/v1/risk?lat=abc&lon=0",
        "/v1/risk?lat=41.5",
        "/v1/risk?lat=41.5&lon=-181",
        "/v1/risk?lat=NaN&lon=0",
    ] {
        let (status, body) = get(&state, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_error(&body, "invalid_coordinate");
    }
    let (status, body) = get(&state, "/v1/risk?lat=35&lon=-60").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "outside_coverage");
    let (status, body) = get(&state, "/v1/risk?lat=41.5&lon=-81.6&date=2021-01-01").await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&body, "unknown_date");
    let (status, body) = get(&state, "/v1/risk?lat=41.5&lon=-81.6&date=2021-01-01&allow_stale=true").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["stale"], true);
    let (status, body) = get(&state, "/v1/risk?lat=41.5&lon=-81.6&date=03/24/2020").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "invalid_date");
    let (status, body) = get(&state, "/v1/risk?lat=41.5&lon=-81.6&mobility=9").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "invalid_mobility");
    let (status, _) = get(&state, "/v1/risk?lat=41.5&lat=41.6&lon=-81.6").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn timeseries_ranges() {
    let state = fixture_state();
    let (status, body) = get(&state, "/v1/areas/39035/timeseries?from=2020-03-10&to=2020-03-14").await;
    assert_eq!(status, StatusCode::OK);
    let points = body["points"].as_array().unwrap();
    let dates: Vec<&str> = points.iter().map(|p| p["date"].as_str().unwrap()).collect();
    assert_eq!(dates, ["2020-03-10", "2020-03-11", "2020-03-12", "2020-03-13", "2020-03-14"]);
    assert_eq!(body["name"], "Cuyahoga County");
    let (_, one) = get(&state, "/v1/areas/39035/timeseries?from=2020-03-12&to=2020-03-12").await;
    assert_eq!(one["points"].as_array().unwrap().len(), 1);
    let (_, all) = get(&state, "/v1/areas/39035/timeseries").await;
    assert_eq!(all["points"].as_array().unwrap().len(), 17);

    let (status, body) = get(&state, "/v1/areas/nowhere/timeseries").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "unknown_area");
    let (status, body) = get(&state, "/v1/areas/39035/timeseries?from=2020-03-14&to=2020-03-10").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "invalid_range");
    let (status, _) = get(&state, "/v1/areas/39035/timeseries?from=2000-01-01&to=2020-03-10").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn timeseries_rises_when_only_cases_grow() {
    let (ahin, target, dates) = synth::first_case_ahin(5);
    let engine = Engine::from_parts(
        ahin,
        RelationMatrices::identity(FEATURE_DIM),
        RiskProfile::default(),
        Default::default(),
        Default::default(),
        Vec::new(),
    )
    .unwrap();
    let state = AppState::new(engine);
    let uri = format!("/v1/areas/{target}/timeseries?from={}&to={}", dates[0], dates[4]);
    let (status, body) = get(&state, &uri).await;
    assert_eq!(status, StatusCode::OK);
    let idx: Vec<f64> = body["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["index"].as_f64().unwrap())
        .collect();
    assert_eq!(idx.len(), 5);
    assert!(idx[1] > idx[0], "{idx:?}");
    assert!(idx.windows(2).all(|w| w[1] >= w[0]), "{idx:?}");
}

#[tokio::test]
async fn pois_near_euclid_avenue() {
    let state = fixture_state();
    let (status, body) = get(&state, "/v1/pois?lat=41.5036&lon=-81.62&tag=grocery&radius_km=3").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let pois = body["pois"].as_array().unwrap();
    assert_eq!(pois.len(), 3);
    let d: Vec<f64> = pois.iter().map(|p| p["distance_km"].as_f64().unwrap()).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
    for p in pois {
        let oracle = great_circle_km(41.5036, -81.62, p["lat"].as_f64().unwrap(), p["lon"].as_f64().unwrap());
        assert!((p["distance_km"].as_f64().unwrap() - oracle).abs() < 1e-9);
        assert!((0.0..=1.0).contains(&p["index"].as_f64().unwrap()));
    }
    for uri in [
        "/v1/pois?lat=41.5036&lon=-81.62&tag=grocery&radius_km=0",
        "/v1/pois?lat=41.5036&lon=-81.62&tag=bakery&radius_km=3",
    ] {
        let (status, body) = get(&state, uri).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["pois"].as_array().unwrap().len(), 0);
    }
    let (status, body) = get(&state, "/v1/pois?lat=41.5036&lon=-81.62&radius_km=3").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "missing_parameter");
    let (status, body) = get(&state, "/v1/pois?lat=41.5036&lon=-81.62&tag=grocery&radius_km=-1").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&body, "invalid_radius");
}

#[tokio::test]
async fn area_posts() {
    let state = fixture_state();
    let (status, body) = get(&state, "/v1/areas/3961000/posts?date=2020-03-08").await;
    assert_eq!(status, StatusCode::OK);
    let posts = body["posts"].as_array().unwrap();
    assert_eq!(posts.len(), 2);
    for p in posts {
        assert!((0.0..=1.0).contains(&p["awareness"].as_f64().unwrap()));
        assert!(p["snippet"].as_str().unwrap().contains("Parma"));
    }

    let (status, body) = get(&state, "/v1/areas/3044500/posts?date=2020-03-20").await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["posts"].as_array().unwrap().is_empty());
    assert_eq!(body["synthetic"], true);
    assert_eq!(body["perception_source"], "synthetic");

    let (status, body) = get(&state, "/v1/areas/42091/posts?date=2020-03-20").await;
    assert_eq!(status, StatusCode::OK);
    let mont = body["posts"].as_array().unwrap().iter().find(|p| p["post_id"] == "p-mont-pa").unwrap();
    assert!(mont["awareness"].as_f64().unwrap() < 0.5);

    let (status, body) = get(&state, "/v1/areas/00000/posts").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "unknown_area");
}

#[tokio::test]
async fn responses_are_deterministic() {
    let state = fixture_state();
    for uri in [
        "/v1/risk?lat=40.0&lon=-75.2&date=2020-03-20",
        "/v1/areas/24031/timeseries",
        "/v1/pois?lat=41.5036&lon=-81.62&tag=grocery&radius_km=50",
        "/v1/areas/39035/posts",
    ] {
        let first = get(&state, uri).await;
        let again = get(&fixture_state(), uri).await;
        assert_eq!(first, again, "{uri}");
    }
}

#[tokio::test]
async fn unknown_route_and_cors() {
    let state = fixture_state();
    let (status, body) = get(&state, "/v2/risk").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&body, "no_route");
    let response = router(state)
        .oneshot(
            Request::get("/v1/meta")
                .header("origin", "http://localhost:5173")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    assert!(response.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test]
async fn meta_lists_dates_and_counts() {
    let (status, body) = get(&fixture_state(), "/v1/meta").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["dates"].as_array().unwrap().len(), 17);
    assert_eq!(body["latest_date"], "2020-03-24");
    assert_eq!(body["counts"]["cities"], 29);
    assert_eq!(body["weights"].as_array().unwrap().len(), FEATURE_DIM);
}

#[tokio::test]
async fn swap_replaces_engine_for_new_requests() {
    let state = fixture_state();
    let held = state.engine.current();
    let (ahin, _, _) = synth::first_case_ahin(1);
    let replacement = Engine::from_parts(
        ahin,
        RelationMatrices::identity(FEATURE_DIM),
        RiskProfile::default(),
        Default::default(),
        Default::default(),
        Vec::new(),
    )
    .unwrap();
    let old = state.engine.swap(replacement);
    assert!(std::sync::Arc::ptr_eq(&old, &held));
    // The old engine stays usable by whoever still holds it.
    assert!(held.ahin().lookup("39035").is_some());
    let (status, _) = get(&state, "/v1/areas/39035/timeseries").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get(&state, "/v1/areas/S00C000/timeseries").await;
    assert_eq!(status, StatusCode::OK);
}
