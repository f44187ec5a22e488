//! HTTP/1.1 front ends: one per edge variant, plus the optional standalone
//! content API.
//!
//! Variant servers answer every `GET` path through the worker and add
//! `x-edge-cache`, `x-server-time-us` and `x-edge-deploy` headers. Admin
//! endpoints live under `/__edge/`:
//!
//! * `POST /__edge/purge` empties the cache, replies `{"purged": <n>}`
//! * `POST /__edge/cold` marks the worker cold, replies 204
//! * `GET /__edge/stats` replies with the worker counters as JSON
//!
//! The content server answers `GET /posts` (JSON array of posts) and
//! `GET /posts/{id}` (one post), both `application/json`, each after the
//! upstream delay.

use std::io;
use std::net::SocketAddr;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode, Uri};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::bench::{ADMIN_COLD, ADMIN_PURGE, ADMIN_STATS};
use crate::clock::Clock;
use crate::content::{ContentError, Upstream};
use crate::edge::{EdgeWorker, Response, HEADER_CACHE, HEADER_DEPLOY, HEADER_SERVER_TIME};

pub fn variant_router(worker: EdgeWorker) -> Router {
    Router::new()
        .route(ADMIN_PURGE, post(purge))
        .route(ADMIN_COLD, post(cold))
        .route(ADMIN_STATS, get(stats))
        .fallback(page)
        .with_state(worker)
}

async fn purge(State(worker): State<EdgeWorker>) -> Json<serde_json::Value> {
    Json(json!({ "purged": worker.purge_cache() }))
}

async fn cold(State(worker): State<EdgeWorker>) -> StatusCode {
    worker.cold_worker();
    StatusCode::NO_CONTENT
}

async fn stats(State(worker): State<EdgeWorker>) -> Json<crate::edge::WorkerStats> {
    Json(worker.stats())
}

async fn page(State(worker): State<EdgeWorker>, uri: Uri) -> HttpResponse {
    to_http(worker.handle(uri.path()).await)
}

fn to_http(resp: Response) -> HttpResponse {
    let content_type = if resp.status == 200 {
        "text/html; charset=utf-8"
    } else {
        "text/plain; charset=utf-8"
    };
    let mut out = HttpResponse::new(Body::from(resp.body));
    *out.status_mut() = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let headers = out.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    headers.insert(HEADER_CACHE, HeaderValue::from_static(resp.cache_status.as_str()));
    headers.insert(
        HEADER_SERVER_TIME,
        HeaderValue::from(resp.server_time.as_micros() as u64),
    );
    if let Some(id) = resp.deploy_id {
        if let Ok(v) = HeaderValue::from_str(&id.to_string()) {
            headers.insert(HEADER_DEPLOY, v);
        }
    }
    out
}

#[derive(Clone)]
struct ContentState {
    upstream: Upstream,
    clock: Clock,
}

pub fn content_router(upstream: Upstream, clock: Clock) -> Router {
    Router::new()
        .route("/posts", get(list_posts))
        .route("/posts/{id}", get(one_post))
        .with_state(ContentState { upstream, clock })
}

async fn list_posts(State(s): State<ContentState>) -> HttpResponse {
    let posts = s.upstream.fetch_all(&s.clock).await;
    Json(posts.to_vec()).into_response()
}

async fn one_post(State(s): State<ContentState>, Path(id): Path<String>) -> HttpResponse {
    let Ok(id) = id.parse::<u64>() else {
        return (StatusCode::NOT_FOUND, Json(json!({ "error": "not found" }))).into_response();
    };
    match s.upstream.fetch(id, &s.clock).await {
        Ok(post) => Json(post).into_response(),
        Err(e @ ContentError::NotFound { .. }) => {
            (StatusCode::NOT_FOUND, Json(json!({ "error": e.to_string() }))).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

/// A running server; dropping the handle does not stop it, call
/// [`shutdown`](ServerHandle::shutdown).
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<io::Result<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) -> io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.task
            .await
            .map_err(|e| io::Error::other(e.to_string()))?
    }
}

/// Binds `addr` and serves `router` in a background task.
pub async fn spawn(router: Router, addr: SocketAddr) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(ServerHandle {
        addr,
        stop: Some(stop),
        task,
    })
}

pub async fn spawn_variant(worker: EdgeWorker, addr: SocketAddr) -> io::Result<ServerHandle> {
    spawn(variant_router(worker), addr).await
}

pub async fn spawn_content(upstream: Upstream, clock: Clock, addr: SocketAddr) -> io::Result<ServerHandle> {
    spawn(content_router(upstream, clock), addr).await
}
