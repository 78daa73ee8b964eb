//! Host-side trial handling: lifecycle, calibration, time reconstruction,
//! repetition analytics, summaries and export.

mod export;
mod reps;

pub use export::{
    export_csv, format_sig6, read_csv, read_sidecar, sidecar_path, CsvRow, ExportPaths, SessionSidecar, TrialStore, CSV_HEADER,
};
pub use reps::{detect_repetitions, RepCounter, RepSpan, Repetitions, DEFAULT_HIGH_DEG, DEFAULT_LOW_DEG};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emg::{counts_to_volts, EmgChannel, EmgChannelState, EmgError};
use crate::fusion::{
    calibrate_offset, calibration_sample_count, derive_kinematics_smoothed, CalibrationOffset, CausalDifferentiator, FusionError, KneeState,
    DEFAULT_CALIBRATION_WINDOW_S,
};
use crate::protocol::TelemetryPacket;
use crate::NOMINAL_DT_S;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot {action} while {state:?}")]
    State { state: SessionState, action: &'static str },
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: need {needed} samples, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("calibration failed: {0}")]
    Calibration(#[source] FusionError),
    #[error("nonconforming packet (seq {seq})")]
    SuspectPacket { seq: u16 },
    #[error(transparent)]
    Emg(#[from] EmgError),
    #[error("export failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("sidecar: {0}")]
    Json(#[from] serde_json::Error),
}

impl SessionError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::State { .. } => "illegal_state",
            SessionError::Metadata(_) => "invalid_metadata",
            SessionError::Config(_) => "invalid_config",
            SessionError::InsufficientData { .. } => "insufficient_data",
            SessionError::Calibration(_) => "calibration_failed",
            SessionError::SuspectPacket { .. } => "suspect_packet",
            SessionError::Emg(_) => "invalid_emg",
            SessionError::Io(_) | SessionError::Csv(_) | SessionError::Json(_) => "export_failed",
        }
    }
}

pub type Result<T> = std::result::Result<T, SessionError>;

/// Sample time from its received index.
pub fn reconstruct_time(sample_index: u64, dt_s: f64) -> f64 {
    sample_index as f64 * dt_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Created,
    Calibrating,
    Recording,
    Stopped,
}

impl SessionState {
    /// The only legal successor, if any.
    pub fn next(self) -> Option<SessionState> {
        match self {
            SessionState::Created => Some(SessionState::Calibrating),
            SessionState::Calibrating => Some(SessionState::Recording),
            SessionState::Recording => Some(SessionState::Stopped),
            SessionState::Stopped => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DominantLeg {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetadata {
    pub subject_id: String,
    pub age_range: String,
    pub sex: String,
    pub dominant_leg: DominantLeg,
    pub created_at: DateTime<Utc>,
}

const MAX_FIELD_LEN: usize = 32;

impl SessionMetadata {
    pub fn new(subject_id: &str, age_range: &str, sex: &str, dominant_leg: DominantLeg) -> Result<Self> {
        let m = Self {
            subject_id: subject_id.to_string(),
            age_range: age_range.to_string(),
            sex: sex.to_string(),
            dominant_leg,
            created_at: Utc::now(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Subject IDs are anonymized tokens (`[A-Za-z0-9_-]`, at most 32
    /// characters) and double as directory names. The other text fields
    /// are short single-line categories.
    pub fn validate(&self) -> Result<()> {
        let id = &self.subject_id;
        if id.is_empty() {
            return Err(SessionError::Metadata("subject_id must not be empty".into()));
        }
        if id.len() > MAX_FIELD_LEN || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(SessionError::Metadata(format!(
                "subject_id must be at most {MAX_FIELD_LEN} characters of [A-Za-z0-9_-]"
            )));
        }
        for (name, v) in [("age_range", &self.age_range), ("sex", &self.sex)] {
            if v.chars().count() > MAX_FIELD_LEN || v.chars().any(char::is_control) {
                return Err(SessionError::Metadata(format!(
                    "{name} must be a single line of at most {MAX_FIELD_LEN} characters"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub dt_s: f64,
    pub calibration_window_s: f64,
    pub rep_high_deg: f64,
    pub rep_low_deg: f64,
    /// Moving-average width for stored derivatives; 1 disables smoothing.
    pub smoothing_width: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            dt_s: NOMINAL_DT_S,
            calibration_window_s: DEFAULT_CALIBRATION_WINDOW_S,
            rep_high_deg: DEFAULT_HIGH_DEG,
            rep_low_deg: DEFAULT_LOW_DEG,
            smoothing_width: 1,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(SessionError::Config(format!("dt_s must be positive, got {}", self.dt_s)));
        }
        if !(self.calibration_window_s > 0.0 && self.calibration_window_s.is_finite()) {
            return Err(SessionError::Config("calibration_window_s must be positive".into()));
        }
        RepCounter::new(self.rep_high_deg, self.rep_low_deg)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub rep_count: usize,
    pub rom_deg: f64,
    pub peak_flexion_deg: f64,
    pub peak_velocity_dps: f64,
    pub peak_accel_dps2: f64,
    pub emg1_peak_v: f64,
    pub emg1_mean_v: f64,
    pub emg2_peak_v: f64,
    pub emg2_mean_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordedPacket {
    pub seq: u16,
    pub packet: TelemetryPacket,
}

/// What the session made of one accepted packet, for live display.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiveSample {
    pub seq: u16,
    pub state: SessionState,
    /// Calibrated angle with causal (backward-difference) derivatives.
    pub knee: KneeState,
    pub emg1_v: f64,
    pub emg2_v: f64,
}

/// One trial: metadata, the received packets and everything derived from
/// them.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub metadata: SessionMetadata,
    pub config: SessionConfig,
    state: SessionState,
    calibration_angles: Vec<f64>,
    calibration: Option<CalibrationOffset>,
    /// Samples consumed before recording began; recorded sample `i` has
    /// received index `time_origin_index + i`.
    time_origin_index: u64,
    packets: Vec<RecordedPacket>,
    angles: Vec<f64>,
    live: CausalDifferentiator,
    emg1: EmgChannelState,
    emg2: EmgChannelState,
    derived: Vec<KneeState>,
}

impl SessionRecord {
    pub fn new(metadata: SessionMetadata, config: SessionConfig) -> Result<Self> {
        metadata.validate()?;
        config.validate()?;
        Ok(Self {
            metadata,
            config,
            state: SessionState::Created,
            calibration_angles: Vec::new(),
            calibration: None,
            time_origin_index: 0,
            packets: Vec::new(),
            angles: Vec::new(),
            live: CausalDifferentiator::new(),
            emg1: EmgChannelState::passthrough(EmgChannel::VastusLateralis),
            emg2: EmgChannelState::passthrough(EmgChannel::Semitendinosus),
            derived: Vec::new(),
        })
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    fn transition(&mut self, to: SessionState, action: &'static str) -> Result<()> {
        if self.state.next() != Some(to) {
            return Err(SessionError::State {
                state: self.state,
                action,
            });
        }
        self.state = to;
        Ok(())
    }

    pub fn start_calibration(&mut self) -> Result<()> {
        self.transition(SessionState::Calibrating, "start calibration")
    }

    /// Freezes the calibration offset from the first window of samples and
    /// begins recording. Fails, leaving the session calibrating, when the
    /// window is not yet full.
    pub fn start_recording(&mut self) -> Result<()> {
        if self.state != SessionState::Calibrating {
            return Err(SessionError::State {
                state: self.state,
                action: "start recording",
            });
        }
        let offset = calibrate_offset(&self.calibration_angles, self.config.calibration_window_s, self.config.dt_s)
            .map_err(|e| match e {
                FusionError::InsufficientData { needed, have } => SessionError::InsufficientData { needed, have },
                other => SessionError::Calibration(other),
            })?;
        self.calibration = Some(offset);
        self.time_origin_index = self.calibration_angles.len() as u64;
        self.live = CausalDifferentiator::new();
        self.transition(SessionState::Recording, "start recording")
    }

    /// Ends recording and computes the stored derivatives with central
    /// differences.
    pub fn stop(&mut self) -> Result<()> {
        self.transition(SessionState::Stopped, "stop")?;
        if self.angles.len() >= 3 {
            let mut derived = derive_kinematics_smoothed(&self.angles, self.config.dt_s, self.config.smoothing_width)
                .map_err(SessionError::Calibration)?;
            for (i, k) in derived.iter_mut().enumerate() {
                k.t = self.time_of(i);
            }
            self.derived = derived;
        }
        Ok(())
    }

    fn time_of(&self, recorded_index: usize) -> f64 {
        reconstruct_time(self.time_origin_index + recorded_index as u64, self.config.dt_s)
    }

    /// Accepts one packet. Only calibrating and recording sessions take
    /// data; nonconforming packets are refused.
    pub fn push(&mut self, seq: u16, packet: TelemetryPacket) -> Result<LiveSample> {
        if !matches!(self.state, SessionState::Calibrating | SessionState::Recording) {
            return Err(SessionError::State {
                state: self.state,
                action: "accept data",
            });
        }
        if packet.validity().is_suspect() {
            return Err(SessionError::SuspectPacket { seq });
        }
        let wire_angle = f64::from(packet.knee_angle_deg);
        let emg1_v = counts_to_volts(f64::from(packet.emg1_counts))?;
        let emg2_v = counts_to_volts(f64::from(packet.emg2_counts))?;
        let dt = self.config.dt_s;
        let knee = match self.state {
            SessionState::Calibrating => {
                let t = reconstruct_time(self.calibration_angles.len() as u64, dt);
                self.calibration_angles.push(wire_angle);
                self.live.push(wire_angle, t, dt)
            }
            _ => {
                let offset = self.calibration.map_or(0.0, |c| c.offset_deg);
                let angle = wire_angle - offset;
                let t = self.time_of(self.angles.len());
                self.angles.push(angle);
                self.packets.push(RecordedPacket { seq, packet });
                self.emg1.update(f64::from(packet.emg1_counts))?;
                self.emg2.update(f64::from(packet.emg2_counts))?;
                self.live.push(angle, t, dt)
            }
        };
        Ok(LiveSample {
            seq,
            state: self.state,
            knee,
            emg1_v,
            emg2_v,
        })
    }

    pub fn calibration(&self) -> Option<CalibrationOffset> {
        self.calibration
    }

    pub fn calibration_sample_count(&self) -> usize {
        self.calibration_angles.len()
    }

    /// Whether enough samples have arrived to freeze the calibration.
    pub fn calibration_ready(&self) -> bool {
        self.calibration_angles.len() >= calibration_sample_count(self.config.calibration_window_s, self.config.dt_s)
    }

    pub fn time_origin_index(&self) -> u64 {
        self.time_origin_index
    }

    pub fn packets(&self) -> &[RecordedPacket] {
        &self.packets
    }

    /// Calibrated knee angles of the recorded packets.
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Central-difference kinematics; empty until stopped.
    pub fn derived(&self) -> &[KneeState] {
        &self.derived
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.angles.len()).map(|i| self.time_of(i)).collect()
    }

    pub fn emg_channels(&self) -> (&EmgChannelState, &EmgChannelState) {
        (&self.emg1, &self.emg2)
    }

    pub fn repetitions(&self) -> Result<Repetitions> {
        detect_repetitions(&self.angles, self.config.rep_high_deg, self.config.rep_low_deg)
    }

    pub fn summary(&self) -> Result<SessionSummary> {
        summarize(self)
    }
}

fn peak_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.map(f64::abs).fold(0.0, f64::max)
}

/// Summary metrics of a stopped trial. Velocity and acceleration peaks are
/// largest magnitudes.
pub fn summarize(record: &SessionRecord) -> Result<SessionSummary> {
    if record.state != SessionState::Stopped {
        return Err(SessionError::State {
            state: record.state,
            action: "summarize",
        });
    }
    let n = record.angles.len();
    if n < 3 {
        return Err(SessionError::InsufficientData { needed: 3, have: n });
    }
    let max = record.angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = record.angles.iter().copied().fold(f64::INFINITY, f64::min);
    let e1 = record.emg1.summary()?;
    let e2 = record.emg2.summary()?;
    Ok(SessionSummary {
        rep_count: record.repetitions()?.count,
        rom_deg: max - min,
        peak_flexion_deg: max,
        peak_velocity_dps: peak_abs(record.derived.iter().map(|k| k.velocity_dps)),
        peak_accel_dps2: peak_abs(record.derived.iter().map(|k| k.accel_dps2)),
        emg1_peak_v: e1.peak_volts,
        emg1_mean_v: e1.mean_volts,
        emg2_peak_v: e2.peak_volts,
        emg2_mean_v: e2.mean_volts,
    })
}
