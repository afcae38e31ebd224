//! HTTP API over a snapshot: sentence splitting, faceted search, zoom-in,
//! cluster metadata and study feedback.
//!
//! | method | path            | body / response |
//! |--------|-----------------|-----------------|
//! | POST   | `/api/split`    | `{abstract}` → `{sentences}` |
//! | POST   | `/api/search`   | `{abstract, sentence_index, t?, paper_id?, keyword?}` → `{query_id, sentences, sentence_index, t, groups}` |
//! | POST   | `/api/zoom`     | `{query_id, selected_clusters, l?, m?, keyword?}` → zoom result |
//! | GET    | `/api/clusters` | `{clusters: [{id, size, descriptors}]}` |
//! | POST   | `/api/feedback` | `{session_id, paper_id, novelty, relevance, timestamp?}` → 204 |
//! | GET    | `/api/feedback` | `{records}`, latest record per (session, paper) |
//!
//! Errors are `{"error": message}` with status 400 (bad request), 404
//! (unknown or expired query id), 502/503 (embedding provider) or 500.

pub mod cache;
pub mod feedback;

use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use crate::corpus::split_sentences;
use crate::embedding::{EmbedError, EmbeddingProvider};
use crate::search::{faceted_search, keyword_filter, zoom_in, Query, ResultGroup, SearchConfig, SearchError, ZoomResult};
use crate::snapshot::{Snapshot, SnapshotError};
pub use cache::{query_id, CachedQuery, QueryCache, DEFAULT_QUERY_TTL};
pub use feedback::{fold, Feedback, FeedbackError, FeedbackLog};

/// Environment variable naming the feedback log file.
pub const FEEDBACK_LOG_ENV: &str = "XDOMAIN_FEEDBACK_LOG";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Defaults for `t`, `l`, `m`, dedup and the local k-means seed.
    pub search: SearchConfig,
    pub query_ttl: Duration,
    /// Allowed CORS origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            query_ttl: DEFAULT_QUERY_TTL,
            cors_origin: None,
        }
    }
}

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    provider: Arc<dyn EmbeddingProvider>,
    queries: QueryCache,
    feedback: FeedbackLog,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(
        snapshot: Snapshot,
        provider: Arc<dyn EmbeddingProvider>,
        feedback: FeedbackLog,
        config: ServiceConfig,
    ) -> Result<Self, SnapshotError> {
        snapshot.check_query_provider(provider.as_ref())?;
        Ok(Self {
            snapshot: RwLock::new(Arc::new(snapshot)),
            provider,
            queries: QueryCache::new(config.query_ttl),
            feedback,
            config,
        })
    }

    /// The snapshot current at the time of the call. Requests hold on to it
    /// until they finish, so a swap never affects one in flight.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().clone()
    }

    /// Atomically replaces the served snapshot.
    pub fn replace_snapshot(&self, next: Snapshot) -> Result<(), SnapshotError> {
        next.check_query_provider(self.provider.as_ref())?;
        *self.snapshot.write() = Arc::new(next);
        Ok(())
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = match &state.config.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(v),
            Err(_) => CorsLayer::new(),
        },
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    Router::new()
        .route("/api/split", post(split))
        .route("/api/search", post(search))
        .route("/api/zoom", post(zoom))
        .route("/api/clusters", get(clusters))
        .route("/api/feedback", post(post_feedback).get(get_feedback))
        .layer(cors)
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let status = match &e {
            e if e.is_client_error() => StatusCode::BAD_REQUEST,
            SearchError::Embed(EmbedError::Transport(_)) => StatusCode::SERVICE_UNAVAILABLE,
            SearchError::Embed(EmbedError::Contract(_)) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<FeedbackError> for ApiError {
    fn from(e: FeedbackError) -> Self {
        let status = match e {
            FeedbackError::Novelty(_) | FeedbackError::Empty(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Deserialize)]
struct SplitRequest {
    #[serde(rename = "abstract")]
    abstract_text: String,
}

#[derive(Serialize, Deserialize)]
pub struct SplitResponse {
    pub sentences: Vec<String>,
}

async fn split(body: Bytes) -> Result<Json<SplitResponse>, ApiError> {
    let req: SplitRequest = parse(&body)?;
    let sentences = split_sentences(&req.abstract_text).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(SplitResponse { sentences }))
}

#[derive(Deserialize)]
struct SearchRequest {
    #[serde(rename = "abstract")]
    abstract_text: String,
    sentence_index: usize,
    t: Option<usize>,
    paper_id: Option<String>,
    keyword: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query_id: String,
    /// Server-side split of the query abstract.
    pub sentences: Vec<String>,
    pub sentence_index: usize,
    pub t: usize,
    pub groups: Vec<ResultGroup>,
}

async fn search(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<SearchResponse>, ApiError> {
    let req: SearchRequest = parse(&body)?;
    let t = req.t.unwrap_or(app.config.search.t);
    if t < 1 {
        return Err(ApiError::bad_request("t must be at least 1"));
    }
    blocking(move || {
        let snapshot = app.snapshot();
        let id = query_id(&req.abstract_text, req.sentence_index);
        let query = match app.queries.get(&id) {
            Some(c) if c.query.paper_id == req.paper_id => c.query,
            _ => Arc::new(Query::new(
                &req.abstract_text,
                req.sentence_index,
                req.paper_id.clone(),
                app.provider.as_ref(),
            )?),
        };
        let cfg = SearchConfig { t, ..app.config.search };
        let mut groups = faceted_search(&snapshot, &query, &cfg)?;
        if let Some(kw) = &req.keyword {
            groups = keyword_filter(&groups, kw)?;
        }
        let query_id = app.queries.insert(CachedQuery {
            query: query.clone(),
            t,
        });
        Ok(Json(SearchResponse {
            query_id,
            sentences: query.sentences.clone(),
            sentence_index: query.sentence_index,
            t,
            groups,
        }))
    })
    .await
}

#[derive(Deserialize)]
struct ZoomRequest {
    query_id: String,
    selected_clusters: Vec<u32>,
    l: Option<usize>,
    m: Option<usize>,
    keyword: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ZoomResponse {
    pub query_id: String,
    #[serde(flatten)]
    pub result: ZoomResult,
}

async fn zoom(State(app): State<Arc<AppState>>, body: Bytes) -> Result<Json<ZoomResponse>, ApiError> {
    let req: ZoomRequest = parse(&body)?;
    let cached = app
        .queries
        .get(&req.query_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown or expired query_id {}", req.query_id)))?;
    let defaults = app.config.search;
    let cfg = SearchConfig {
        t: cached.t,
        l: req.l.unwrap_or(defaults.l),
        m: req.m.unwrap_or(defaults.m),
        ..defaults
    };
    blocking(move || {
        let snapshot = app.snapshot();
        let mut result = zoom_in(&snapshot, &cached.query, &req.selected_clusters, &cfg)?;
        if let Some(kw) = &req.keyword {
            result = result.filtered(kw)?;
        }
        Ok(Json(ZoomResponse {
            query_id: req.query_id,
            result,
        }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub id: u32,
    pub size: usize,
    pub descriptors: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClustersResponse {
    pub clusters: Vec<ClusterInfo>,
}

async fn clusters(State(app): State<Arc<AppState>>) -> Json<ClustersResponse> {
    let snapshot = app.snapshot();
    let clusters = (0..snapshot.clusters.k())
        .map(|c| ClusterInfo {
            id: c as u32,
            size: snapshot.clusters.doc_ids[c].len(),
            descriptors: snapshot.clusters.descriptors[c].clone(),
        })
        .collect();
    Json(ClustersResponse { clusters })
}

#[derive(Deserialize)]
struct FeedbackRequest {
    session_id: String,
    paper_id: String,
    novelty: i64,
    relevance: bool,
    timestamp: Option<u64>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

async fn post_feedback(State(app): State<Arc<AppState>>, body: Bytes) -> Result<StatusCode, ApiError> {
    let req: FeedbackRequest = parse(&body)?;
    let record = Feedback::new(
        &req.session_id,
        &req.paper_id,
        req.novelty,
        req.relevance,
        req.timestamp.unwrap_or_else(now_ms),
    )?;
    blocking(move || Ok(app.feedback.append(&record)?)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub records: Vec<Feedback>,
}

async fn get_feedback(State(app): State<Arc<AppState>>) -> Result<Json<FeedbackResponse>, ApiError> {
    let records = blocking(move || Ok(app.feedback.folded()?)).await?;
    Ok(Json(FeedbackResponse { records }))
}
