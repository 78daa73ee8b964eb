//! The ingest actor. It owns every session record and the frame parsers;
//! API handlers and the datagram listener reach it only through
//! [`IngestHandle`] messages, so no session state is shared.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use kneelink_core::protocol::{FrameParser, LinkStats, ParsedFrame};
use kneelink_core::session::{
    DominantLeg, ExportPaths, SessionConfig, SessionMetadata, SessionRecord, SessionState, SessionSummary, TrialStore,
};

use crate::error::{Result, ServiceError};
use crate::feed::LiveFeedEvent;

/// Body of a create-session request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub subject_id: String,
    pub age_range: String,
    pub sex: String,
    pub dominant_leg: DominantLeg,
    #[serde(default)]
    pub config: Option<SessionConfig>,
    /// Start recording by itself once the calibration window is full.
    #[serde(default)]
    pub auto_record: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: SessionState,
    pub metadata: SessionMetadata,
    pub config: SessionConfig,
    pub auto_record: bool,
    pub calibration_samples: usize,
    pub calibration_offset_deg: Option<f64>,
    pub packet_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportView {
    pub session_id: String,
    pub csv: String,
    pub sidecar: String,
}

/// Counters over everything the service has ingested.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub datagrams: u64,
    /// Frames that passed the CRC.
    pub frames: u64,
    /// Sequence gaps.
    pub dropped: u64,
    pub crc_failures: u64,
    /// Valid frames that arrived with no session taking data.
    pub orphaned: u64,
    /// Frames the session refused (nonconforming values).
    pub rejected: u64,
    pub events: u64,
    /// Live-feed events skipped by slow subscribers, summed over subscribers.
    pub lagged: u64,
    pub subscribers: u64,
}

/// Outcome of one replayed byte stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub frames: u64,
    pub events: u64,
    pub orphaned: u64,
    pub rejected: u64,
    pub crc_failures: u64,
    pub dropped: u64,
}

type Reply<T> = oneshot::Sender<Result<T>>;

enum Command {
    Create(CreateSession, Reply<SessionView>),
    List(Reply<Vec<SessionView>>),
    Get(String, Reply<SessionView>),
    Calibrate(String, Reply<SessionView>),
    Record(String, Reply<SessionView>),
    Stop(String, Reply<SessionView>),
    Summary(String, Reply<SessionSummary>),
    Export(String, Reply<ExportView>),
    Datagram(Vec<u8>),
    Replay(Vec<u8>, Reply<ReplayReport>),
    Stats(Reply<IngestStats>),
}

/// Cloneable front door to the ingest actor.
#[derive(Clone)]
pub struct IngestHandle {
    tx: mpsc::Sender<Command>,
    events: broadcast::Sender<LiveFeedEvent>,
    lagged: Arc<AtomicU64>,
}

impl IngestHandle {
    async fn call<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(make(reply)).await.map_err(|_| ServiceError::Unavailable)?;
        rx.await.map_err(|_| ServiceError::Unavailable)?
    }

    pub async fn create(&self, req: CreateSession) -> Result<SessionView> {
        self.call(|r| Command::Create(req, r)).await
    }

    pub async fn list(&self) -> Result<Vec<SessionView>> {
        self.call(Command::List).await
    }

    pub async fn get(&self, id: &str) -> Result<SessionView> {
        self.call(|r| Command::Get(id.to_string(), r)).await
    }

    pub async fn start_calibration(&self, id: &str) -> Result<SessionView> {
        self.call(|r| Command::Calibrate(id.to_string(), r)).await
    }

    pub async fn start_recording(&self, id: &str) -> Result<SessionView> {
        self.call(|r| Command::Record(id.to_string(), r)).await
    }

    pub async fn stop(&self, id: &str) -> Result<SessionView> {
        self.call(|r| Command::Stop(id.to_string(), r)).await
    }

    pub async fn summary(&self, id: &str) -> Result<SessionSummary> {
        self.call(|r| Command::Summary(id.to_string(), r)).await
    }

    pub async fn export(&self, id: &str) -> Result<ExportView> {
        self.call(|r| Command::Export(id.to_string(), r)).await
    }

    /// Feeds a byte stream (for example a simulator dump) through a fresh
    /// parser and waits until every event has been published.
    pub async fn replay(&self, bytes: Vec<u8>) -> Result<ReplayReport> {
        self.call(|r| Command::Replay(bytes, r)).await
    }

    /// Queues one received datagram.
    pub async fn datagram(&self, bytes: Vec<u8>) -> Result<()> {
        self.tx
            .send(Command::Datagram(bytes))
            .await
            .map_err(|_| ServiceError::Unavailable)
    }

    pub async fn stats(&self) -> Result<IngestStats> {
        let mut s = self.call(Command::Stats).await?;
        s.lagged = self.lagged.load(Ordering::Relaxed);
        s.subscribers = self.events.receiver_count() as u64;
        Ok(s)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<LiveFeedEvent> {
        self.events.subscribe()
    }

    /// Adds to the count of live events subscribers missed.
    pub fn record_lag(&self, skipped: u64) {
        self.lagged.fetch_add(skipped, Ordering::Relaxed);
    }
}

struct Entry {
    record: SessionRecord,
    auto_record: bool,
    export: Option<ExportPaths>,
}

struct Ingest {
    sessions: BTreeMap<String, Entry>,
    /// The one session currently calibrating or recording.
    live: Option<String>,
    next_id: u64,
    datagram_parser: FrameParser,
    store: TrialStore,
    events: broadcast::Sender<LiveFeedEvent>,
    stats: IngestStats,
}

/// Starts the actor. `feed_capacity` bounds each subscriber's queue.
pub fn spawn_ingest(store: TrialStore, feed_capacity: usize) -> (IngestHandle, JoinHandle<()>) {
    let (tx, rx) = mpsc::channel(4096);
    let (events, _) = broadcast::channel(feed_capacity.max(1));
    let actor = Ingest {
        sessions: BTreeMap::new(),
        live: None,
        next_id: 1,
        datagram_parser: FrameParser::new(),
        store,
        events: events.clone(),
        stats: IngestStats::default(),
    };
    let task = tokio::spawn(actor.run(rx));
    (
        IngestHandle {
            tx,
            events,
            lagged: Arc::new(AtomicU64::new(0)),
        },
        task,
    )
}

fn view(id: &str, e: &Entry) -> SessionView {
    SessionView {
        session_id: id.to_string(),
        state: e.record.state(),
        metadata: e.record.metadata.clone(),
        config: e.record.config,
        auto_record: e.auto_record,
        calibration_samples: e.record.calibration_sample_count(),
        calibration_offset_deg: e.record.calibration().map(|c| c.offset_deg),
        packet_count: e.record.packets().len(),
    }
}

fn add_link(stats: &mut IngestStats, before: LinkStats, after: LinkStats) {
    stats.frames += after.received - before.received;
    stats.dropped += after.dropped - before.dropped;
    stats.crc_failures += after.crc_failures - before.crc_failures;
}

impl Ingest {
    async fn run(mut self, mut rx: mpsc::Receiver<Command>) {
        while let Some(cmd) = rx.recv().await {
            self.handle(cmd);
        }
        debug!("ingest loop finished");
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Create(req, r) => {
                let _ = r.send(self.create(req));
            }
            Command::List(r) => {
                let _ = r.send(Ok(self.sessions.iter().map(|(id, e)| view(id, e)).collect()));
            }
            Command::Get(id, r) => {
                let _ = r.send(self.entry(&id).map(|e| view(&id, e)));
            }
            Command::Calibrate(id, r) => {
                let _ = r.send(self.calibrate(&id));
            }
            Command::Record(id, r) => {
                let _ = r.send(self.transition(&id, SessionRecord::start_recording));
            }
            Command::Stop(id, r) => {
                let res = self.transition(&id, SessionRecord::stop);
                if res.is_ok() && self.live.as_deref() == Some(id.as_str()) {
                    self.live = None;
                }
                let _ = r.send(res);
            }
            Command::Summary(id, r) => {
                let _ = r.send(self.entry(&id).and_then(|e| Ok(e.record.summary()?)));
            }
            Command::Export(id, r) => {
                let _ = r.send(self.export(&id));
            }
            Command::Datagram(bytes) => {
                self.stats.datagrams += 1;
                let before = self.datagram_parser.stats();
                let frames = self.datagram_parser.push(&bytes);
                let after = self.datagram_parser.stats();
                add_link(&mut self.stats, before, after);
                self.apply(&frames);
            }
            Command::Replay(bytes, r) => {
                let (frames, link) = FrameParser::parse_all(&bytes);
                add_link(&mut self.stats, LinkStats::default(), link);
                let before = self.stats;
                self.apply(&frames);
                let _ = r.send(Ok(ReplayReport {
                    frames: link.received,
                    events: self.stats.events - before.events,
                    orphaned: self.stats.orphaned - before.orphaned,
                    rejected: self.stats.rejected - before.rejected,
                    crc_failures: link.crc_failures,
                    dropped: link.dropped,
                }));
            }
            Command::Stats(r) => {
                let _ = r.send(Ok(self.stats));
            }
        }
    }

    fn entry(&self, id: &str) -> Result<&Entry> {
        self.sessions.get(id).ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    fn entry_mut(&mut self, id: &str) -> Result<&mut Entry> {
        self.sessions.get_mut(id).ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    fn create(&mut self, req: CreateSession) -> Result<SessionView> {
        let metadata = SessionMetadata::new(&req.subject_id, &req.age_range, &req.sex, req.dominant_leg)?;
        let record = SessionRecord::new(metadata, req.config.unwrap_or_default())?;
        let id = format!("session-{:04}", self.next_id);
        self.next_id += 1;
        let entry = Entry {
            record,
            auto_record: req.auto_record,
            export: None,
        };
        let v = view(&id, &entry);
        self.sessions.insert(id.clone(), entry);
        info!(session = %id, subject = %req.subject_id, "session created");
        Ok(v)
    }

    fn calibrate(&mut self, id: &str) -> Result<SessionView> {
        if let Some(live) = &self.live {
            if live != id {
                return Err(ServiceError::SessionActive(live.clone()));
            }
        }
        let v = self.transition(id, SessionRecord::start_calibration)?;
        self.live = Some(id.to_string());
        Ok(v)
    }

    fn transition(&mut self, id: &str, f: fn(&mut SessionRecord) -> kneelink_core::session::Result<()>) -> Result<SessionView> {
        let e = self.entry_mut(id)?;
        f(&mut e.record)?;
        info!(session = %id, state = ?e.record.state(), "session state");
        Ok(view(id, e))
    }

    fn export(&mut self, id: &str) -> Result<ExportView> {
        let store = self.store.clone();
        let e = self.entry_mut(id)?;
        let paths = match &e.export {
            Some(p) => p.clone(),
            None => {
                let p = store.save(&e.record)?;
                info!(session = %id, csv = %p.csv.display(), "exported");
                e.export = Some(p.clone());
                p
            }
        };
        Ok(ExportView {
            session_id: id.to_string(),
            csv: paths.csv.display().to_string(),
            sidecar: paths.sidecar.display().to_string(),
        })
    }

    /// Routes parsed frames to the live session and publishes one event per
    /// accepted frame.
    fn apply(&mut self, frames: &[ParsedFrame]) {
        for f in frames {
            let Some(id) = self.live.clone() else {
                self.stats.orphaned += 1;
                continue;
            };
            let Some(e) = self.sessions.get_mut(&id) else {
                self.stats.orphaned += 1;
                continue;
            };
            match e.record.push(f.seq, f.packet()) {
                Ok(sample) => {
                    self.stats.events += 1;
                    // No subscribers is fine.
                    let _ = self.events.send(LiveFeedEvent::from_sample(&id, &sample));
                    if e.auto_record && e.record.state() == SessionState::Calibrating && e.record.calibration_ready() {
                        match e.record.start_recording() {
                            Ok(()) => info!(session = %id, "calibration frozen, recording"),
                            Err(err) => warn!(session = %id, %err, "automatic start of recording failed"),
                        }
                    }
                }
                Err(err) => {
                    self.stats.rejected += 1;
                    debug!(session = %id, seq = f.seq, %err, "frame refused");
                }
            }
        }
    }
}
