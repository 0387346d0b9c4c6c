//! Local HTTP service backing human data collection.
//!
//! Serves the session UI's static assets and accepts completed sessions,
//! appending each as a `human` record to one corpus file. Appends are
//! serialized through a single writer.

mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rngt_core::corpus::{read_corpus, CorpusAppender, CorpusError, CorpusPaths};
use rngt_core::report::{aggregate, BaselineSet};
use rngt_core::{compute_all, DigitSequence};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

pub use session::{validate_submission, FieldError, SessionMode, ValidSession};

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub corpus: PathBuf,
    /// Directory with the session UI bundle. Without one, `/` serves a short
    /// placeholder page.
    pub assets: Option<PathBuf>,
}

impl ServeConfig {
    pub fn loopback(port: u16, corpus: impl Into<PathBuf>) -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], port)),
            corpus: corpus.into(),
            assets: None,
        }
    }
}

pub struct AppState {
    paths: CorpusPaths,
    appender: Mutex<CorpusAppender>,
    baselines: BaselineSet,
}

impl AppState {
    pub fn open(corpus: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let paths = CorpusPaths::for_corpus(corpus);
        let appender = CorpusAppender::open(&paths)?;
        Ok(Self {
            paths,
            appender: Mutex::new(appender),
            baselines: BaselineSet::reference(),
        })
    }
}

const PLACEHOLDER_INDEX: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>RNGT session</title></head>
<body><p>No session UI bundle configured. Start the server with <code>--assets DIR</code>.</p>
<p>Sessions can be submitted with <code>POST /api/sessions</code>.</p></body></html>
";

pub fn router(state: Arc<AppState>, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(submit_session))
        .route("/api/metrics", post(metrics))
        .route("/api/baselines", get(baselines))
        .route("/api/corpus/summary", get(corpus_summary))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    }
}

/// Binds the listener and builds the app. Separate from [`serve`] so callers
/// can learn the bound address (e.g. with port 0) before serving.
pub async fn bind(config: &ServeConfig) -> Result<(TcpListener, Router), ServerError> {
    let state = Arc::new(AppState::open(&config.corpus)?);
    let listener = TcpListener::bind(config.addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: config.addr,
            source,
        })?;
    Ok((listener, router(state, config.assets.clone())))
}

pub async fn serve(config: &ServeConfig) -> Result<(), ServerError> {
    let (listener, app) = bind(config).await?;
    serve_on(listener, app).await
}

pub async fn serve_on(listener: TcpListener, app: Router) -> Result<(), ServerError> {
    axum::serve(listener, app).await?;
    Ok(())
}

fn error_response(status: StatusCode, errors: Vec<FieldError>) -> Response {
    (status, Json(json!({ "errors": errors }))).into_response()
}

fn internal(message: impl ToString) -> Response {
    error_response(
        StatusCode::INTERNAL_SERVER_ERROR,
        vec![FieldError::new("", message.to_string())],
    )
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let records = state.appender.lock().await.count();
    Json(json!({ "status": "ok", "records": records }))
}

async fn submit_session(State(state): State<Arc<AppState>>, Json(body): Json<Value>) -> Response {
    let session = match validate_submission(&body) {
        Ok(s) => s,
        Err(errors) => return error_response(StatusCode::UNPROCESSABLE_ENTITY, errors),
    };
    let metrics = compute_all(&session.digits);
    let record = session.into_record(chrono::Utc::now());
    let mut appender = state.appender.lock().await;
    match appender.append(record) {
        Ok(stored) => (
            StatusCode::CREATED,
            Json(json!({
                "id": stored.id,
                "length": stored.digits.len(),
                "metrics": metrics,
            })),
        )
            .into_response(),
        Err(e) => internal(e),
    }
}

async fn metrics(Json(body): Json<Value>) -> Response {
    let digits = match body.get("digits").and_then(Value::as_str) {
        Some(text) => text,
        None => {
            return error_response(
                StatusCode::UNPROCESSABLE_ENTITY,
                vec![FieldError::new("digits", "expected a string of digits 0-9")],
            )
        }
    };
    match DigitSequence::from_digit_str(digits) {
        Ok(seq) => Json(compute_all(&seq)).into_response(),
        Err(e) => error_response(
            StatusCode::UNPROCESSABLE_ENTITY,
            vec![FieldError::new("digits", e.to_string())],
        ),
    }
}

async fn baselines(State(state): State<Arc<AppState>>) -> Json<BaselineSet> {
    Json(state.baselines.clone())
}

async fn corpus_summary(State(state): State<Arc<AppState>>) -> Response {
    // hold the writer lock so the file is not read mid-append
    let _guard = state.appender.lock().await;
    let records = match read_corpus(&state.paths.corpus) {
        Ok(r) => r,
        Err(e) => return internal(e),
    };
    match aggregate(&records) {
        Ok(stats) => Json(stats).into_response(),
        Err(e) => error_response(StatusCode::NOT_FOUND, vec![FieldError::new("", e.to_string())]),
    }
}
