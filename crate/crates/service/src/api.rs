//! HTTP adapters. Every handler parses its input, makes exactly one library
//! call on the current snapshot (or the engine, for the two mutating
//! endpoints) and serializes the result unchanged.
//!
//! Query strings: repeated keys accumulate; `keywords` and `terms` are also
//! split on whitespace and commas. On `/documents`, `/aggregate` and
//! `/centrality`, every key that is not a named parameter is a facet filter
//! (`?language=en&company=acme&company=iris`).

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use textpond_core::analytics::{AnalysisQuery, TimeGranularity, DEFAULT_HIGHLIGHT_WINDOW};
use textpond_core::engine::ErrorClass;
use textpond_core::linkgraph::{MeasureKind, SimilarityMeasure};
use textpond_core::textproc::Label;
use textpond_core::{DocumentId, Engine, EngineError, Page};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::config::ApiConfig;

pub const DEFAULT_TOP_TERMS: usize = 20;
pub const DEFAULT_SEARCH_LABEL: &str = "original_version+classic_presentation";

/// JSON error body: `{"error": {"code", "message", "correlation_id"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn invalid(message: impl Display) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.to_string(),
        }
    }

    pub fn not_found(message: impl Display) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: message.to_string(),
        }
    }

    pub fn internal(message: impl Display) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.to_string(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self.status {
            StatusCode::BAD_REQUEST => "invalid_argument",
            StatusCode::NOT_FOUND => "not_found",
            _ => "internal",
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e.class() {
            ErrorClass::Invalid => Self::invalid(e),
            ErrorClass::NotFound => Self::not_found(e),
            ErrorClass::Internal => Self::internal(e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let correlation_id = uuid::Uuid::new_v4().to_string();
        if self.status.is_server_error() {
            log::error!("[{correlation_id}] {}", self.message);
        } else {
            log::debug!("[{correlation_id}] {} {}", self.status, self.message);
        }
        let body = json!({
            "error": {
                "code": self.code(),
                "message": self.message,
                "correlation_id": correlation_id,
            }
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Decoded query pairs, consumed parameter by parameter.
#[derive(Debug, Default)]
pub struct Params {
    pairs: Vec<(String, String)>,
}

fn split_terms(values: Vec<String>) -> Vec<String> {
    values
        .iter()
        .flat_map(|v| v.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

impl Params {
    pub fn parse(raw: Option<&str>) -> ApiResult<Self> {
        let pairs = serde_urlencoded::from_str(raw.unwrap_or("")).map_err(ApiError::invalid)?;
        Ok(Self { pairs })
    }

    pub fn take_all(&mut self, key: &str) -> Vec<String> {
        let (hits, rest) = std::mem::take(&mut self.pairs).into_iter().partition(|(k, _)| k == key);
        self.pairs = rest;
        hits.into_iter().map(|(_, v)| v).collect::<Vec<_>>()
    }

    pub fn take(&mut self, key: &str) -> ApiResult<Option<String>> {
        let mut values = self.take_all(key);
        match values.len() {
            0 => Ok(None),
            1 => Ok(values.pop()),
            _ => Err(ApiError::invalid(format!("parameter {key} given more than once"))),
        }
    }

    pub fn require(&mut self, key: &str) -> ApiResult<String> {
        self.take(key)?
            .ok_or_else(|| ApiError::invalid(format!("missing parameter {key}")))
    }

    pub fn parsed<T: FromStr>(&mut self, key: &str) -> ApiResult<Option<T>>
    where
        T::Err: Display,
    {
        self.take(key)?
            .map(|v| v.parse().map_err(|e| ApiError::invalid(format!("{key}={v:?}: {e}"))))
            .transpose()
    }

    pub fn terms(&mut self, key: &str) -> Vec<String> {
        split_terms(self.take_all(key))
    }

    /// Rejects leftovers.
    pub fn finish(self) -> ApiResult<()> {
        match self.pairs.first() {
            Some((k, _)) => Err(ApiError::invalid(format!("unknown parameter {k}"))),
            None => Ok(()),
        }
    }

    /// Keyword options plus every remaining key as a facet filter.
    pub fn analysis_query(mut self) -> ApiResult<AnalysisQuery> {
        let mut q = AnalysisQuery {
            keyword_terms: self.terms("keywords").into_iter().collect(),
            use_thesaurus: self.take("thesaurus")?,
            all_terms: self.parsed("all_terms")?.unwrap_or(false),
            ..AnalysisQuery::default()
        };
        if let Some(kind) = self.take("transform")? {
            q.transformation = kind.parse().map_err(ApiError::invalid)?;
        }
        for (k, v) in self.pairs {
            q.facet_filters.entry(k).or_default().insert(v);
        }
        Ok(q)
    }
}

fn threshold(value: Option<f64>) -> ApiResult<Option<f64>> {
    match value {
        Some(t) if !t.is_finite() => Err(ApiError::invalid(format!("threshold must be finite, got {t}"))),
        other => Ok(other),
    }
}

fn json_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("request body: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRequest {
    pub pond_root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildLinksRequest {
    /// Presentation label, e.g. `original+tfidf`.
    pub presentation: String,
    pub measure: String,
}

impl BuildLinksRequest {
    pub fn measure(&self) -> Result<SimilarityMeasure, EngineError> {
        let kind: MeasureKind = self.measure.parse()?;
        let label: Label = self.presentation.parse()?;
        Ok(SimilarityMeasure::new(kind, label)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunitiesRequest {
    #[serde(alias = "link_name")]
    pub link: String,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub walk_length: Option<usize>,
    #[serde(default)]
    pub query: AnalysisQuery,
}

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
}

/// Runs blocking store work off the async workers.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn ingest(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: IngestRequest = json_body(&body)?;
    let report = blocking(move || Ok(s.engine.ingest(&req.pond_root)?)).await?;
    Ok(Json(report).into_response())
}

async fn documents(State(s): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let mut p = Params::parse(raw.as_deref())?;
    let page = Page {
        offset: p.parsed("offset")?.unwrap_or(0),
        limit: p.parsed("limit")?,
    };
    let q = p.analysis_query()?;
    let list = blocking(move || Ok(s.engine.snapshot().documents(&q, page)?)).await?;
    Ok(Json(list).into_response())
}

fn parse_id(id: &str) -> ApiResult<DocumentId> {
    id.parse().map_err(ApiError::invalid)
}

async fn manifest(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_id(&id)?;
    let m = blocking(move || Ok(s.engine.snapshot().manifest(&id)?)).await?;
    Ok(Json(m).into_response())
}

async fn manifest_raw(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let id = parse_id(&id)?;
    let xml = blocking(move || Ok(s.engine.snapshot().manifest_raw(&id)?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/xml; charset=utf-8")], xml).into_response())
}

async fn global_manifest(State(s): State<AppState>) -> ApiResult<Response> {
    let g = blocking(move || Ok(s.engine.snapshot().global_manifest()?)).await?;
    Ok(Json(g).into_response())
}

/// `terms`, `label`, `thesaurus`, `all_terms`.
async fn search(State(s): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let mut p = Params::parse(raw.as_deref())?;
    let terms = p.terms("terms");
    let label: Label = p
        .take("label")?
        .as_deref()
        .unwrap_or(DEFAULT_SEARCH_LABEL)
        .parse()
        .map_err(ApiError::invalid)?;
    let thesaurus = p.take("thesaurus")?;
    let all_terms = p.parsed("all_terms")?.unwrap_or(false);
    p.finish()?;
    let r = blocking(move || Ok(s.engine.snapshot().search(&terms, label, thesaurus.as_deref(), all_terms)?)).await?;
    Ok(Json(r).into_response())
}

/// `id`, `terms`, `label`, `thesaurus`, `window`.
async fn highlights(State(s): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let mut p = Params::parse(raw.as_deref())?;
    let id = parse_id(&p.require("id")?)?;
    let terms = p.terms("terms");
    let label: Label = p
        .take("label")?
        .as_deref()
        .unwrap_or(DEFAULT_SEARCH_LABEL)
        .parse()
        .map_err(ApiError::invalid)?;
    let thesaurus = p.take("thesaurus")?;
    let window = p.parsed("window")?.unwrap_or(DEFAULT_HIGHLIGHT_WINDOW);
    p.finish()?;
    let r = blocking(move || {
        Ok(s.engine
            .snapshot()
            .highlights(&id, &terms, label, thesaurus.as_deref(), window)?)
    })
    .await?;
    Ok(Json(r).into_response())
}

/// `facet`, `granularity` (year|month), `k`, plus the document filter.
async fn aggregate(State(s): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let mut p = Params::parse(raw.as_deref())?;
    let facet = p.require("facet")?;
    let granularity: TimeGranularity = p.parsed("granularity")?.unwrap_or(TimeGranularity::Year);
    let k = p.parsed("k")?.unwrap_or(DEFAULT_TOP_TERMS);
    let q = p.analysis_query()?;
    let r = blocking(move || Ok(s.engine.snapshot().aggregate(&q, &facet, granularity, k)?)).await?;
    Ok(Json(r).into_response())
}

async fn build_links(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: BuildLinksRequest = json_body(&body)?;
    let measure = req.measure()?;
    let r = blocking(move || Ok(s.engine.build_links(measure)?)).await?;
    Ok(Json(r).into_response())
}

async fn list_links(State(s): State<AppState>) -> ApiResult<Response> {
    let names = blocking(move || Ok(s.engine.snapshot().stored_graphs())).await?;
    Ok(Json(names).into_response())
}

async fn link_graph(State(s): State<AppState>, Path(name): Path<String>) -> ApiResult<Response> {
    let g = blocking(move || Ok(s.engine.snapshot().graph(&name)?)).await?;
    Ok(Json(g).into_response())
}

async fn communities(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CommunitiesRequest = json_body(&body)?;
    let threshold = threshold(req.threshold)?;
    if req.walk_length == Some(0) {
        return Err(ApiError::invalid("walk_length must be positive"));
    }
    let r = blocking(move || {
        Ok(s.engine
            .snapshot()
            .communities(&req.link, &req.query, threshold, req.walk_length)?)
    })
    .await?;
    Ok(Json(r).into_response())
}

/// `link`, `threshold`, plus the document filter.
async fn centrality(State(s): State<AppState>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let mut p = Params::parse(raw.as_deref())?;
    let link = p.require("link")?;
    let threshold = threshold(p.parsed("threshold")?)?;
    let q = p.analysis_query()?;
    let r = blocking(move || Ok(s.engine.snapshot().centrality(&link, &q, threshold)?)).await?;
    Ok(Json(r).into_response())
}

async fn no_route() -> ApiError {
    ApiError::not_found("no such endpoint")
}

/// Origins must be valid header values.
pub fn cors_layer(origins: &[String]) -> Result<Option<CorsLayer>, String> {
    if origins.is_empty() {
        return Ok(None);
    }
    let values = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).map_err(|e| format!("CORS origin {o:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Some(
        CorsLayer::new()
            .allow_origin(AllowOrigin::list(values))
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE]),
    ))
}

pub fn router(engine: Arc<Engine>, config: &ApiConfig) -> Result<Router, String> {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/ingest", post(ingest))
        .route("/documents", get(documents))
        .route("/manifest/{id}", get(manifest))
        .route("/manifest/{id}/raw", get(manifest_raw))
        .route("/global-manifest", get(global_manifest))
        .route("/search", get(search))
        .route("/highlights", get(highlights))
        .route("/aggregate", get(aggregate))
        .route("/links", get(list_links))
        .route("/links/build", post(build_links))
        .route("/links/{name}", get(link_graph))
        .route("/communities", post(communities))
        .route("/centrality", get(centrality))
        .fallback(no_route)
        .with_state(AppState { engine });
    if let Some(dir) = &config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    if let Some(cors) = cors_layer(&config.cors_origins)? {
        app = app.layer(cors);
    }
    Ok(app)
}
