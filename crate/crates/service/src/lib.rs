//! Read-only HTTP API over an [`Engine`].
//!
//! Handlers take a cheap `Arc` clone of the current engine, so a reload only
//! affects requests that start after the swap.

mod error;
mod query;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use asat_core::perception::PerceptionSource;
use asat_core::pipeline::{Engine, EnginePaths, PipelineError};
use asat_core::risk::{DatedIndex, Location, ScoredPoi};
use asat_core::graph::AhinCounts;
use asat_core::{GeoId, Level};
use axum::extract::{Path, RawQuery, State};
use axum::routing::get;
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

pub use error::ApiError;
use query::Params;

/// Longest range a time-series request may span.
pub const MAX_SERIES_DAYS: i64 = 3660;

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    pub snapshot: PathBuf,
    pub models: PathBuf,
    pub gamma: Option<PathBuf>,
    /// Used when a request names no date; the latest ingested date otherwise.
    pub default_date: Option<NaiveDate>,
}

impl ApiConfig {
    pub fn engine_paths(&self) -> EnginePaths {
        EnginePaths::new(&self.snapshot, &self.models, self.gamma.as_deref())
    }

    pub fn load_engine(&self) -> Result<Engine, PipelineError> {
        Engine::load(&self.engine_paths())
    }
}

/// The engine currently served. Replaced wholesale on reload.
#[derive(Debug, Clone)]
pub struct SharedEngine(Arc<RwLock<Arc<Engine>>>);

impl SharedEngine {
    pub fn new(engine: Engine) -> Self {
        SharedEngine(Arc::new(RwLock::new(Arc::new(engine))))
    }

    pub fn current(&self) -> Arc<Engine> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Installs `engine` and returns the one it replaced.
    pub fn swap(&self, engine: Engine) -> Arc<Engine> {
        let mut slot = self.0.write().unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *slot, Arc::new(engine))
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub engine: SharedEngine,
    pub default_date: Option<NaiveDate>,
}

impl AppState {
    pub fn new(engine: Engine) -> Self {
        AppState {
            engine: SharedEngine::new(engine),
            default_date: None,
        }
    }

    fn date_or_default(&self, engine: &Engine, date: Option<NaiveDate>) -> Result<NaiveDate, ApiError> {
        date.or(self.default_date)
            .or_else(|| engine.latest_date())
            .ok_or_else(|| ApiError::unprocessable("no_dates", "snapshot holds no dated records"))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/meta", get(meta))
        .route("/v1/risk", get(risk))
        .route("/v1/areas/{geo_id}/timeseries", get(timeseries))
        .route("/v1/areas/{geo_id}/posts", get(posts))
        .route("/v1/pois", get(pois))
        .fallback(|| async { ApiError::not_found("no_route", "no such endpoint") })
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until ctrl-c. On unix, SIGHUP reloads the engine from `config`
/// and swaps it in; a failed reload keeps the old engine.
pub async fn serve(config: ApiConfig, engine: Engine) -> std::io::Result<()> {
    let state = AppState {
        engine: SharedEngine::new(engine),
        default_date: config.default_date,
    };
    spawn_reloader(config.clone(), state.engine.clone());
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(unix)]
fn spawn_reloader(config: ApiConfig, shared: SharedEngine) {
    use tokio::signal::unix::{signal, SignalKind};
    tokio::spawn(async move {
        let Ok(mut hup) = signal(SignalKind::hangup()) else {
            return;
        };
        while hup.recv().await.is_some() {
            let config = config.clone();
            match tokio::task::spawn_blocking(move || config.load_engine()).await {
                Ok(Ok(engine)) => {
                    shared.swap(engine);
                    tracing::info!("engine reloaded");
                }
                Ok(Err(e)) => tracing::error!("reload failed, keeping current engine: {e}"),
                Err(e) => tracing::error!("reload task failed: {e}"),
            }
        }
    });
}

#[cfg(not(unix))]
fn spawn_reloader(_: ApiConfig, _: SharedEngine) {}

#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub dates: Vec<NaiveDate>,
    pub latest_date: Option<NaiveDate>,
    pub counts: AhinCounts,
    pub weights: Vec<(String, f64)>,
    pub invert_awareness: bool,
}

async fn meta(State(state): State<AppState>) -> Json<Meta> {
    let engine = state.engine.current();
    let profile = engine.profile();
    Json(Meta {
        dates: engine.ahin().dates().collect(),
        latest_date: engine.latest_date(),
        counts: engine.ahin().counts(),
        weights: asat_core::graph::FEATURE_NAMES
            .iter()
            .zip(profile.weights())
            .map(|(n, w)| (n.to_string(), *w))
            .collect(),
        invert_awareness: profile.invert_awareness(),
    })
}

async fn risk(State(state): State<AppState>, RawQuery(q): RawQuery) -> Result<Json<serde_json::Value>, ApiError> {
    let p = Params::parse(q.as_deref())?;
    let lat = p.coordinate("lat")?;
    let lon = p.coordinate("lon")?;
    let allow_stale = p.flag("allow_stale")?;
    let mobility = p.mobility("mobility")?;
    let engine = state.engine.current();
    let date = state.date_or_default(&engine, p.date("date")?)?;
    if !allow_stale && !engine.ahin().is_known_date(date) {
        return Err(ApiError::unprocessable(
            "unknown_date",
            format!("no data ingested for {date}; pass allow_stale=true for zero-padded disease features"),
        ));
    }
    let a = engine.assess(&Location::Coordinate { lat, lon }, date, mobility)?;
    Ok(Json(serde_json::to_value(a).expect("serialisable")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timeseries {
    pub geo_id: GeoId,
    pub level: Level,
    pub name: String,
    pub points: Vec<DatedIndex>,
}

async fn timeseries(
    State(state): State<AppState>,
    Path(geo_id): Path<String>,
    RawQuery(q): RawQuery,
) -> Result<Json<Timeseries>, ApiError> {
    let p = Params::parse(q.as_deref())?;
    let engine = state.engine.current();
    let node = engine.assessor().lookup(&geo_id)?;
    let mut dates = engine.ahin().dates();
    let (first, last) = (dates.next(), dates.next_back());
    let from = p.date("from")?.or(first);
    let to = p.date("to")?.or(last).or(from);
    let (Some(from), Some(to)) = (from, to) else {
        return Err(ApiError::unprocessable("no_dates", "snapshot holds no dated records"));
    };
    if from > to {
        return Err(ApiError::bad_request("invalid_range", format!("from {from} is after to {to}")));
    }
    if (to - from).num_days() >= MAX_SERIES_DAYS {
        return Err(ApiError::bad_request(
            "invalid_range",
            format!("range longer than {MAX_SERIES_DAYS} days"),
        ));
    }
    let points = engine.timeseries(&geo_id, from, to)?;
    let n = engine.ahin().node(node);
    Ok(Json(Timeseries {
        geo_id: n.geo_id.clone(),
        level: n.level,
        name: n.name.clone(),
        points,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PoiList {
    pub date: NaiveDate,
    pub tag: String,
    pub radius_km: f64,
    pub pois: Vec<ScoredPoi>,
}

async fn pois(State(state): State<AppState>, RawQuery(q): RawQuery) -> Result<Json<PoiList>, ApiError> {
    let p = Params::parse(q.as_deref())?;
    let lat = p.coordinate("lat")?;
    let lon = p.coordinate("lon")?;
    let tag = p.required("tag")?.to_string();
    let radius_km = p.number("radius_km")?;
    if !radius_km.is_finite() || radius_km < 0.0 {
        return Err(ApiError::bad_request("invalid_radius", "radius_km must be a finite non-negative number"));
    }
    let engine = state.engine.current();
    let date = state.date_or_default(&engine, p.date("date")?)?;
    let pois = engine.nearby_pois(lat, lon, &tag, radius_km, date)?;
    Ok(Json(PoiList {
        date,
        tag,
        radius_km,
        pois,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PostList {
    pub geo_id: GeoId,
    pub date: Option<NaiveDate>,
    pub synthetic: bool,
    pub perception: Option<f64>,
    pub perception_source: Option<PerceptionSource>,
    pub posts: Vec<asat_core::perception::ScoredPost>,
}

async fn posts(
    State(state): State<AppState>,
    Path(geo_id): Path<String>,
    RawQuery(q): RawQuery,
) -> Result<Json<PostList>, ApiError> {
    let p = Params::parse(q.as_deref())?;
    let engine = state.engine.current();
    let found = engine.posts(&geo_id, p.date("date")?)?;
    Ok(Json(PostList {
        geo_id: found.geo_id,
        date: found.date,
        synthetic: found.synthetic,
        perception: found.perception.map(|a| a.value),
        perception_source: found.perception.map(|a| a.source),
        posts: found.posts,
    }))
}
