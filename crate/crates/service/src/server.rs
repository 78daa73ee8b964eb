use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;

use futures::future::{BoxFuture, FutureExt, Shared};
use tokio::net::{TcpListener, UdpSocket};
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use kneelink_core::protocol::DEFAULT_PORT;
use kneelink_core::session::TrialStore;

use crate::api::router;
use crate::ingest::{spawn_ingest, IngestHandle};

/// Default HTTP port for the control API.
pub const DEFAULT_HTTP_PORT: u16 = 8747;
/// Live-feed events buffered per subscriber before the oldest are dropped.
pub const DEFAULT_FEED_CAPACITY: usize = 1024;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// Datagram endpoint.
    pub listen: SocketAddr,
    pub http: SocketAddr,
    pub data_dir: PathBuf,
    pub feed_capacity: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            http: SocketAddr::from(([127, 0, 0, 1], DEFAULT_HTTP_PORT)),
            data_dir: PathBuf::from("data"),
            feed_capacity: DEFAULT_FEED_CAPACITY,
        }
    }
}

type Shutdown = Shared<BoxFuture<'static, ()>>;

/// A started service. Dropping it does not stop the tasks; call
/// [`RunningService::shutdown`].
pub struct RunningService {
    pub udp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    pub ingest: IngestHandle,
    stop: watch::Sender<bool>,
    udp_task: JoinHandle<()>,
    http_task: JoinHandle<io::Result<()>>,
    ingest_task: JoinHandle<()>,
}

fn shutdown_signal(rx: &watch::Receiver<bool>) -> Shutdown {
    let mut rx = rx.clone();
    async move {
        let _ = rx.wait_for(|&stop| stop).await;
    }
    .boxed()
    .shared()
}

/// Binds both endpoints and starts the ingest actor, the datagram
/// listener and the HTTP server.
pub async fn start(config: ServeConfig) -> io::Result<RunningService> {
    std::fs::create_dir_all(&config.data_dir)?;
    let udp = UdpSocket::bind(config.listen).await?;
    let http = TcpListener::bind(config.http).await?;
    let udp_addr = udp.local_addr()?;
    let http_addr = http.local_addr()?;

    let (ingest, ingest_task) = spawn_ingest(TrialStore::new(&config.data_dir), config.feed_capacity);
    let (stop, stop_rx) = watch::channel(false);

    let udp_task = {
        let ingest = ingest.clone();
        let shutdown = shutdown_signal(&stop_rx);
        tokio::spawn(async move {
            let mut buf = vec![0u8; 2048];
            tokio::pin!(shutdown);
            loop {
                tokio::select! {
                    _ = &mut shutdown => break,
                    res = udp.recv_from(&mut buf) => match res {
                        Ok((n, _)) => {
                            if ingest.datagram(buf[..n].to_vec()).await.is_err() {
                                break;
                            }
                        }
                        Err(e) => warn!(error = %e, "datagram receive failed"),
                    },
                }
            }
        })
    };

    let app = router(ingest.clone(), shutdown_signal(&stop_rx));
    let http_shutdown = shutdown_signal(&stop_rx);
    let http_task = tokio::spawn(async move { axum::serve(http, app).with_graceful_shutdown(http_shutdown).await });

    info!(%udp_addr, %http_addr, data_dir = %config.data_dir.display(), "serving");
    Ok(RunningService {
        udp_addr,
        http_addr,
        ingest,
        stop,
        udp_task,
        http_task,
        ingest_task,
    })
}

impl RunningService {
    /// Stops accepting datagrams and requests, ends live feeds and waits
    /// for the tasks to finish.
    pub async fn shutdown(self) -> io::Result<()> {
        let _ = self.stop.send(true);
        let _ = self.udp_task.await;
        let served = self.http_task.await.map_err(io::Error::other)?;
        drop(self.ingest);
        let _ = self.ingest_task.await;
        served
    }
}
