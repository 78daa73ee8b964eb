//! HTTP control API and the server-sent live feed.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/sessions` | create a session |
//! | GET | `/sessions` | list sessions |
//! | GET | `/sessions/{id}` | one session |
//! | POST | `/sessions/{id}/calibrate` | start calibration |
//! | POST | `/sessions/{id}/record` | freeze calibration, start recording |
//! | POST | `/sessions/{id}/stop` | stop |
//! | GET | `/sessions/{id}/summary` | summary metrics (stopped only) |
//! | POST | `/sessions/{id}/export` | write CSV and sidecar to the data dir |
//! | GET | `/sessions/{id}/csv` | exported CSV contents |
//! | POST | `/replay` | ingest a raw frame stream from the request body |
//! | GET | `/stats` | ingest counters |
//! | GET | `/live` | live feed, one `LiveFeedEvent` JSON object per SSE `sample` event |

use std::convert::Infallible;
use std::future::Future;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{Stream, StreamExt};
use tokio_stream::wrappers::errors::BroadcastStreamRecvError;
use tokio_stream::wrappers::BroadcastStream;

use crate::error::{Result, ServiceError};
use crate::ingest::{CreateSession, ExportView, IngestHandle, IngestStats, ReplayReport, SessionView};
use kneelink_core::session::SessionSummary;

#[derive(Clone)]
struct AppState<S> {
    ingest: IngestHandle,
    shutdown: S,
}

/// Builds the router. Live-feed streams end when `shutdown` resolves.
pub fn router<S>(ingest: IngestHandle, shutdown: S) -> Router
where
    S: Future<Output = ()> + Clone + Send + Sync + 'static,
{
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create::<S>).get(list::<S>))
        .route("/sessions/{id}", get(get_session::<S>))
        .route("/sessions/{id}/calibrate", post(calibrate::<S>))
        .route("/sessions/{id}/record", post(record::<S>))
        .route("/sessions/{id}/stop", post(stop::<S>))
        .route("/sessions/{id}/summary", get(summary::<S>))
        .route("/sessions/{id}/export", post(export::<S>))
        .route("/sessions/{id}/csv", get(csv::<S>))
        .route("/replay", post(replay::<S>))
        .route("/stats", get(stats::<S>))
        .route("/live", get(live::<S>))
        .with_state(AppState { ingest, shutdown })
}

async fn create<S>(State(st): State<AppState<S>>, body: Bytes) -> Result<(StatusCode, Json<SessionView>)> {
    let req: CreateSession = serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(st.ingest.create(req).await?)))
}

async fn list<S>(State(st): State<AppState<S>>) -> Result<Json<Vec<SessionView>>> {
    Ok(Json(st.ingest.list().await?))
}

async fn get_session<S>(State(st): State<AppState<S>>, Path(id): Path<String>) -> Result<Json<SessionView>> {
    Ok(Json(st.ingest.get(&id).await?))
}

async fn calibrate<S>(State(st): State<AppState<S>>, Path(id): Path<String>) -> Result<Json<SessionView>> {
    Ok(Json(st.ingest.start_calibration(&id).await?))
}

async fn record<S>(State(st): State<AppState<S>>, Path(id): Path<String>) -> Result<Json<SessionView>> {
    Ok(Json(st.ingest.start_recording(&id).await?))
}

async fn stop<S>(State(st): State<AppState<S>>, Path(id): Path<String>) -> Result<Json<SessionView>> {
    Ok(Json(st.ingest.stop(&id).await?))
}

async fn summary<S>(State(st): State<AppState<S>>, Path(id): Path<String>) -> Result<Json<SessionSummary>> {
    Ok(Json(st.ingest.summary(&id).await?))
}

async fn export<S>(State(st): State<AppState<S>>, Path(id): Path<String>) -> Result<Json<ExportView>> {
    Ok(Json(st.ingest.export(&id).await?))
}

async fn csv<S>(State(st): State<AppState<S>>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    let paths = st.ingest.export(&id).await?;
    let text = tokio::fs::read_to_string(&paths.csv)
        .await
        .map_err(|e| ServiceError::Session(e.into()))?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], text))
}

async fn replay<S>(State(st): State<AppState<S>>, body: Bytes) -> Result<Json<ReplayReport>> {
    Ok(Json(st.ingest.replay(body.to_vec()).await?))
}

async fn stats<S>(State(st): State<AppState<S>>) -> Result<Json<IngestStats>> {
    Ok(Json(st.ingest.stats().await?))
}

async fn live<S>(State(st): State<AppState<S>>) -> Sse<impl Stream<Item = std::result::Result<Event, Infallible>>>
where
    S: Future<Output = ()> + Send + 'static,
{
    let ingest = st.ingest.clone();
    let events = BroadcastStream::new(st.ingest.subscribe()).map(move |item| {
        let event = match item {
            Ok(ev) => Event::default()
                .event("sample")
                .json_data(&ev)
                .unwrap_or_else(|_| Event::default().event("error").data("unserializable event")),
            Err(BroadcastStreamRecvError::Lagged(n)) => {
                ingest.record_lag(n);
                Event::default().event("lagged").data(format!("{{\"skipped\":{n}}}"))
            }
        };
        Ok(event)
    });
    Sse::new(events.take_until(st.shutdown)).keep_alive(KeepAlive::default())
}
