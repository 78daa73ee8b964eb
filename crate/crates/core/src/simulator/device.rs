//! Fixed-rate device loop: sensors in, framed telemetry out.

use std::io::Write;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{generate_truth, synthesize_emg, synthesize_imu, EmgSynthesis, NoiseModel, SimError, SquatProfile};
use crate::emg::{EmgChannel, EmgChannelState, DEFAULT_ALPHA_EMG};
use crate::fusion::{calibration_sample_count, KneeEstimator, DEFAULT_ALPHA, DEFAULT_CALIBRATION_WINDOW_S};
use crate::protocol::{encode_frame, DatagramSender, LinkStats, TelemetryPacket, TransportError, FRAME_LEN};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceConfig {
    /// Complementary filter gyro weight.
    pub alpha: f64,
    pub alpha_emg: f64,
    /// On-device zeroing window at the start of the standing lead-in.
    pub calibration_window_s: f64,
    pub emg: EmgSynthesis,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            alpha_emg: DEFAULT_ALPHA_EMG,
            calibration_window_s: DEFAULT_CALIBRATION_WINDOW_S,
            emg: EmgSynthesis::default(),
        }
    }
}

/// Everything the device produced on one loop iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceTick {
    pub index: usize,
    pub seq: u16,
    pub t: f64,
    pub truth_knee_deg: f64,
    /// Fused knee angle before zeroing.
    pub raw_knee_deg: f64,
    pub packet: TelemetryPacket,
    pub frame: [u8; FRAME_LEN],
}

/// Runs the device loop offline and returns one tick per sample.
///
/// While the calibration window is open the device transmits the raw angle
/// minus the running mean of the window so far; afterwards the mean over
/// the full window is frozen and subtracted.
pub fn device_ticks(profile: &SquatProfile, noise: &NoiseModel, config: &DeviceConfig) -> Result<Vec<DeviceTick>, SimError> {
    let dev = |e: String| SimError::Device(e);
    if config.calibration_window_s > profile.standing_s + 1e-9 {
        return Err(dev(format!(
            "calibration window {} s exceeds the {} s standing lead-in",
            config.calibration_window_s, profile.standing_s
        )));
    }
    let truth = generate_truth(profile)?;
    let imu = synthesize_imu(&truth, profile, noise)?;
    let (raw1, raw2) = synthesize_emg(&truth, profile, noise, &config.emg)?;

    let mut estimator = KneeEstimator::new(config.alpha).map_err(|e| dev(e.to_string()))?;
    let mut emg1 = EmgChannelState::new(EmgChannel::VastusLateralis, config.alpha_emg).map_err(|e| dev(e.to_string()))?;
    let mut emg2 = EmgChannelState::new(EmgChannel::Semitendinosus, config.alpha_emg).map_err(|e| dev(e.to_string()))?;
    let window = if config.calibration_window_s > 0.0 {
        calibration_sample_count(config.calibration_window_s, profile.dt_s)
    } else {
        0
    };

    let mut cal_sum = 0.0;
    let mut offset = 0.0;
    let mut ticks = Vec::with_capacity(truth.len());
    for i in 0..truth.len() {
        let raw_knee = estimator
            .raw_knee(&imu.thigh[i], &imu.shank[i])
            .map_err(|e| dev(e.to_string()))?;
        if i < window {
            cal_sum += raw_knee;
            offset = cal_sum / (i + 1) as f64;
        }
        let e1 = emg1.update(f64::from(raw1[i])).map_err(|e| dev(e.to_string()))?;
        let e2 = emg2.update(f64::from(raw2[i])).map_err(|e| dev(e.to_string()))?;
        let packet = TelemetryPacket {
            knee_angle_deg: (raw_knee - offset) as f32,
            emg1_counts: e1.round() as u16,
            emg2_counts: e2.round() as u16,
        };
        let seq = i as u16;
        let frame = encode_frame(seq, &packet).map_err(|e| dev(e.to_string()))?;
        ticks.push(DeviceTick {
            index: i,
            seq,
            t: truth.time(i),
            truth_knee_deg: truth.knee_deg[i],
            raw_knee_deg: raw_knee,
            packet,
            frame,
        });
    }
    Ok(ticks)
}

#[derive(Debug, Error)]
#[error("device run aborted after {} frames: {source}", partial.sent)]
pub struct RunError {
    #[source]
    pub source: TransportError,
    pub partial: LinkStats,
}

/// Sends the ticks over `link`, one frame per datagram, paced at the
/// profile's loop period when `realtime` is set. Frames the link delivers
/// are also written to `dump` when given.
pub fn run_device<S: DatagramSender + ?Sized>(
    ticks: &[DeviceTick],
    dt_s: f64,
    link: &mut S,
    realtime: bool,
    mut dump: Option<&mut dyn Write>,
) -> Result<LinkStats, RunError> {
    link.set_realtime(realtime);
    let start = Instant::now();
    let before = link.stats();
    let stats = |link: &S| {
        let s = link.stats();
        LinkStats {
            sent: s.sent - before.sent,
            received: s.delivered() - before.delivered(),
            dropped: s.dropped - before.dropped,
            crc_failures: 0,
            observed_rate_hz: 0.0,
        }
        .with_rate(ticks.len() as f64 * dt_s)
    };
    for (i, tick) in ticks.iter().enumerate() {
        if realtime {
            let due = start + Duration::from_secs_f64(i as f64 * dt_s);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let delivered = match link.send(&tick.frame) {
            Ok(d) => d,
            Err(source) => {
                return Err(RunError {
                    source,
                    partial: stats(link),
                })
            }
        };
        if delivered {
            if let Some(out) = dump.as_mut() {
                out.write_all(&tick.frame).map_err(|e| RunError {
                    source: TransportError::Io(e),
                    partial: stats(link),
                })?;
            }
        }
    }
    Ok(stats(link))
}
