//! `/v1` HTTP/JSON surface over an [`Engine`].

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};

use schemamem_core::init::{GoalSpec, InitError};
use schemamem_core::query::QueryError;
use schemamem_core::{Engine, EngineError, IngestRequest};

pub const REQUEST_ID: &str = "x-request-id";

/// One row of the route table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Route {
    pub method: &'static str,
    pub path: &'static str,
    /// Stable operation name, one per route.
    pub name: &'static str,
}

/// Every endpoint the service exposes.
pub const ROUTES: &[Route] = &[
    Route {
        method: "POST",
        path: "/v1/init",
        name: "init",
    },
    Route {
        method: "POST",
        path: "/v1/experiences",
        name: "ingest",
    },
    Route {
        method: "POST",
        path: "/v1/answer",
        name: "answer",
    },
    Route {
        method: "POST",
        path: "/v1/query",
        name: "query",
    },
    Route {
        method: "GET",
        path: "/v1/buckets",
        name: "list_buckets",
    },
    Route {
        method: "GET",
        path: "/v1/buckets/{id}/schemas",
        name: "list_schemas",
    },
    Route {
        method: "GET",
        path: "/v1/records/{id}",
        name: "get_record",
    },
    Route {
        method: "GET",
        path: "/v1/health",
        name: "health",
    },
];

/// Error envelope returned for every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: JsonValue,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

/// Structured detail for errors that carry more than a message.
pub fn error_detail(err: &EngineError) -> JsonValue {
    match err {
        EngineError::Query(QueryError::Syntax { position, expected }) => {
            json!({ "position": position, "expected": expected })
        }
        EngineError::Query(QueryError::InvalidSelect { position, column }) => {
            json!({ "position": position, "column": column })
        }
        EngineError::Init(InitError::Invalid(diagnostics)) => json!({ "diagnostics": diagnostics }),
        _ => JsonValue::Null,
    }
}

impl From<EngineError> for ApiError {
    fn from(err: EngineError) -> Self {
        let status = match err.code() {
            "NotFound" => StatusCode::NOT_FOUND,
            "NonEmptyStore" | "DuplicateBucketName" => StatusCode::CONFLICT,
            _ if err.is_caller_error() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            body: ErrorBody {
                code: err.code().to_string(),
                message: err.to_string(),
                detail: error_detail(&err),
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        let (status, code) = match &rejection {
            JsonRejection::MissingJsonContentType(_) => (StatusCode::UNSUPPORTED_MEDIA_TYPE, "UnsupportedMediaType"),
            _ => (StatusCode::BAD_REQUEST, "InvalidRequest"),
        };
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: rejection.body_text(),
                detail: JsonValue::Null,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub query: String,
}

#[derive(Debug, Default, Deserialize)]
struct InitParams {
    #[serde(default)]
    force: bool,
}

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
}

/// Runs a blocking engine call off the async workers.
async fn blocking<T, F>(engine: &Arc<Engine>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, EngineError> + Send + 'static,
{
    let engine = Arc::clone(engine);
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody {
                code: "Internal".into(),
                message: e.to_string(),
                detail: JsonValue::Null,
            },
        })?
        .map_err(ApiError::from)
}

async fn init(
    State(s): State<AppState>,
    Query(params): Query<InitParams>,
    body: Result<Json<GoalSpec>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(spec) = body?;
    let layout = blocking(&s.engine, move |e| e.init(&spec, params.force)).await?;
    Ok((StatusCode::CREATED, Json(layout)))
}

async fn ingest(State(s): State<AppState>, body: Result<Json<IngestRequest>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    Ok(Json(blocking(&s.engine, move |e| e.ingest(req)).await?))
}

async fn answer(State(s): State<AppState>, body: Result<Json<AnswerRequest>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    Ok(Json(blocking(&s.engine, move |e| Ok(e.answer(&req.question, req.budget))).await?))
}

async fn query(State(s): State<AppState>, body: Result<Json<QueryRequest>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    Ok(Json(blocking(&s.engine, move |e| e.query(&req.query)).await?))
}

async fn buckets(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.engine.buckets())
}

async fn schemas(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.engine.schemas(&id)?))
}

async fn record(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.engine.record(&id)?))
}

async fn health(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.engine.health())
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        body: ErrorBody {
            code: "NotFound".into(),
            message: "no such endpoint".into(),
            detail: JsonValue::Null,
        },
    }
}

/// Echoes the caller's request id, or assigns one.
async fn request_id(req: Request, next: Next) -> Response {
    static NEXT: AtomicU64 = AtomicU64::new(1);
    let id = req
        .headers()
        .get(REQUEST_ID)
        .cloned()
        .unwrap_or_else(|| HeaderValue::from_str(&format!("req-{}", NEXT.fetch_add(1, Ordering::Relaxed))).expect("ascii"));
    let mut resp = next.run(req).await;
    resp.headers_mut().insert(REQUEST_ID, id);
    resp
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/v1/init", post(init))
        .route("/v1/experiences", post(ingest))
        .route("/v1/answer", post(answer))
        .route("/v1/query", post(query))
        .route("/v1/buckets", get(buckets))
        .route("/v1/buckets/{id}/schemas", get(schemas))
        .route("/v1/records/{id}", get(record))
        .route("/v1/health", get(health))
        .fallback(not_found)
        .layer(middleware::from_fn(request_id))
        .with_state(AppState { engine })
}

/// Serves until `shutdown` resolves, then flushes the event log.
pub async fn serve(
    engine: Arc<Engine>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::clone(&engine)))
        .with_graceful_shutdown(shutdown)
        .await?;
    engine.flush().map_err(std::io::Error::other)?;
    Ok(())
}

/// A server on its own runtime thread; stops and joins on drop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub fn spawn(engine: Arc<Engine>, addr: &str) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let local = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            serve(engine, listener, async move {
                let _ = rx.await;
            })
            .await
        })
    });
    Ok(ServerHandle {
        addr: local,
        stop: Some(tx),
        thread: Some(thread),
    })
}
