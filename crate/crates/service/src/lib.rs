//! Host side of kneelink: a daemon that ingests telemetry datagrams, runs
//! the session lifecycle and serves a JSON control API with a live
//! server-sent event feed.

pub mod api;
pub mod error;
pub mod feed;
pub mod ingest;
pub mod server;
pub mod simulate;

pub use error::ServiceError;
pub use feed::LiveFeedEvent;
pub use ingest::{spawn_ingest, CreateSession, ExportView, IngestHandle, IngestStats, ReplayReport, SessionView};
pub use server::{start, RunningService, ServeConfig};
