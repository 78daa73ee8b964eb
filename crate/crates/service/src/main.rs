use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use kneelink_core::protocol::{default_port, DatagramSender, LossModel, UdpSender, FRAME_LEN};
use kneelink_core::simulator::{NoiseModel, SquatProfile};
use kneelink_core::NOMINAL_DT_S;
use kneelink_service::server::{self, ServeConfig, DEFAULT_FEED_CAPACITY, DEFAULT_HTTP_PORT};
use kneelink_service::simulate::{simulate, SimulateOptions};

#[derive(Parser)]
#[command(name = "kneelink", version, about = "Wearable squat telemetry: simulator and ingestion service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a squat trial and stream it as telemetry datagrams.
    Simulate(SimulateArgs),
    /// Run the ingestion service and control API.
    Serve(ServeArgs),
    /// Send a recorded frame dump to a listening service.
    Replay(ReplayArgs),
}

fn default_dest() -> String {
    format!("127.0.0.1:{}", default_port())
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 10.0)]
    trial_s: f64,
    #[arg(long, default_value_t = 120.0)]
    peak_deg: f64,
    #[arg(long, default_value_t = 0.0)]
    drop_prob: f64,
    /// Upper bound of the per-datagram delivery delay.
    #[arg(long, default_value_t = 0.0)]
    jitter_ms: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = default_dest())]
    dest: String,
    /// Pace frames at the device loop period (default).
    #[arg(long, conflicts_with = "fast")]
    realtime: bool,
    /// Send as fast as possible.
    #[arg(long)]
    fast: bool,
    /// Also write the delivered frames to this file.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Disable sensor noise and gyro bias.
    #[arg(long)]
    zero_noise: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Datagram endpoint.
    #[arg(long, env = "KNEELINK_LISTEN")]
    listen: Option<SocketAddr>,
    #[arg(long, env = "KNEELINK_HTTP_PORT", default_value_t = DEFAULT_HTTP_PORT)]
    http_port: u16,
    #[arg(long, env = "KNEELINK_HTTP_HOST", default_value = "127.0.0.1")]
    http_host: std::net::IpAddr,
    #[arg(long, env = "KNEELINK_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, env = "KNEELINK_FEED_CAPACITY", default_value_t = DEFAULT_FEED_CAPACITY)]
    feed_capacity: usize,
}

#[derive(Args)]
struct ReplayArgs {
    file: PathBuf,
    #[arg(long, default_value_t = default_dest())]
    dest: String,
    /// Pace frames at the device loop period.
    #[arg(long)]
    realtime: bool,
}

fn run_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let profile = SquatProfile {
        n_reps: a.reps,
        trial_s: a.trial_s,
        peak_flexion_deg: a.peak_deg,
        rng_seed: a.seed,
        ..SquatProfile::default()
    };
    let opts = SimulateOptions {
        profile,
        noise: if a.zero_noise { NoiseModel::zero() } else { NoiseModel::default() },
        drop_prob: a.drop_prob,
        jitter: Duration::from_secs_f64(a.jitter_ms.max(0.0) / 1000.0),
        dest: a.dest,
        realtime: !a.fast,
        dump: a.dump,
    };
    let stats = simulate(&opts)?;
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

async fn run_serve(a: ServeArgs) -> anyhow::Result<()> {
    let config = ServeConfig {
        listen: a
            .listen
            .unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], default_port()))),
        http: SocketAddr::new(a.http_host, a.http_port),
        data_dir: a.data_dir,
        feed_capacity: a.feed_capacity,
    };
    let running = server::start(config).await.context("starting service")?;
    println!("datagrams on {}, http on {}", running.udp_addr, running.http_addr);
    tokio::signal::ctrl_c().await?;
    running.shutdown().await?;
    Ok(())
}

fn run_replay(a: ReplayArgs) -> anyhow::Result<()> {
    let bytes = std::fs::read(&a.file).with_context(|| format!("reading {}", a.file.display()))?;
    let mut link = UdpSender::connect(a.dest.as_str(), LossModel::lossless())?;
    let start = Instant::now();
    for (i, frame) in bytes.chunks(FRAME_LEN).enumerate() {
        if a.realtime {
            let due = start + Duration::from_secs_f64(i as f64 * NOMINAL_DT_S);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        link.send(frame)?;
    }
    println!("{}", serde_json::to_string(&link.stats())?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Simulate(a) => run_simulate(a),
        Command::Replay(a) => run_replay(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(run_serve(a)),
    }
}
