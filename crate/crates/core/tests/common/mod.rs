#![allow(dead_code)]

use kneelink_core::protocol::{FrameParser, LinkStats, LossModel, MemoryLink};
use kneelink_core::session::{DominantLeg, LiveSample, SessionConfig, SessionMetadata, SessionRecord};
use kneelink_core::simulator::{device_ticks, run_device, DeviceConfig, DeviceTick, NoiseModel, SquatProfile};

pub struct TrialRun {
    pub ticks: Vec<DeviceTick>,
    /// Frames the link delivered, back to back.
    pub delivered: Vec<u8>,
    pub link: LinkStats,
    pub receiver: LinkStats,
    pub record: SessionRecord,
    pub live: Vec<LiveSample>,
}

pub fn metadata(subject: &str) -> SessionMetadata {
    SessionMetadata::new(subject, "25-34", "F", DominantLeg::Right).unwrap()
}

/// Host side: feeds a delivered frame stream into a fresh session,
/// starting the recording as soon as the calibration window is full.
pub fn ingest(bytes: &[u8], subject: &str) -> (SessionRecord, Vec<LiveSample>, LinkStats) {
    let mut record = SessionRecord::new(metadata(subject), SessionConfig::default()).unwrap();
    record.start_calibration().unwrap();
    let mut parser = FrameParser::new();
    let mut live = Vec::new();
    for frame in parser.push(bytes) {
        live.push(record.push(frame.seq, frame.packet()).unwrap());
        if record.state() == kneelink_core::session::SessionState::Calibrating && record.calibration_ready() {
            record.start_recording().unwrap();
        }
    }
    record.stop().unwrap();
    (record, live, parser.stats())
}

pub fn run_trial(profile: &SquatProfile, noise: &NoiseModel, drop_prob: f64) -> TrialRun {
    let ticks = device_ticks(profile, noise, &DeviceConfig::default()).unwrap();
    let (mut tx, mut rx) = MemoryLink::pair(LossModel::with_drop_prob(drop_prob, profile.rng_seed)).unwrap();
    let link = run_device(&ticks, profile.dt_s, &mut tx, false, None).unwrap();
    let delivered: Vec<u8> = rx.drain().concat();
    let (record, live, receiver) = ingest(&delivered, "S01");
    TrialRun {
        ticks,
        delivered,
        link,
        receiver,
        record,
        live,
    }
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Recorded angles paired with ground truth at the same device tick.
/// Assumes a lossless link.
pub fn recorded_vs_truth(run: &TrialRun) -> (Vec<f64>, Vec<f64>) {
    let origin = run.record.time_origin_index() as usize;
    let truth: Vec<f64> = run.ticks[origin..].iter().map(|t| t.truth_knee_deg).collect();
    (run.record.angles().to_vec(), truth)
}

/// Mean absolute error over the last `window_s` seconds.
pub fn terminal_drift(est: &[f64], truth: &[f64], window_s: f64, dt: f64) -> f64 {
    let n = ((window_s / dt).round() as usize).min(est.len());
    let start = est.len() - n;
    est[start..]
        .iter()
        .zip(&truth[start..])
        .map(|(e, t)| (e - t).abs())
        .sum::<f64>()
        / n as f64
}

/// Maximum number of disjoint (above `high`, then below `low`) index pairs,
/// found by dynamic programming over every starting point. Returns the
/// count and, for each counted pair, the index where the signal fell below
/// `low`.
pub fn brute_force_reps(x: &[f64], high: f64, low: f64) -> (usize, Vec<usize>) {
    let n = x.len();
    // best[i]: most pairs using only indices >= i; choice[i]: completion
    // index of the first pair in an optimal solution starting at i.
    let mut best = vec![0usize; n + 1];
    let mut choice: Vec<Option<usize>> = vec![None; n + 1];
    for i in (0..n).rev() {
        best[i] = best[i + 1];
        choice[i] = choice[i + 1];
        if x[i] > high {
            if let Some(b) = (i + 1..n).find(|&b| x[b] < low) {
                if 1 + best[b + 1] >= best[i] {
                    best[i] = 1 + best[b + 1];
                    choice[i] = Some(b);
                }
            }
        }
    }
    let mut ends = Vec::new();
    let mut i = 0;
    while let Some(b) = choice[i] {
        ends.push(b);
        i = b + 1;
    }
    (best[0], ends)
}

/// Random piecewise-linear trace: vertices drawn in `[lo, hi]`, joined by
/// straight runs of 1..=max_run samples.
pub fn piecewise_linear<R: rand::Rng>(rng: &mut R, n_vertices: usize, lo: f64, hi: f64, max_run: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev = rng.random_range(lo..=hi);
    out.push(prev);
    for _ in 1..n_vertices {
        let next = rng.random_range(lo..=hi);
        let run = rng.random_range(1..=max_run);
        for k in 1..=run {
            out.push(prev + (next - prev) * k as f64 / run as f64);
        }
        prev = next;
    }
    out
}
