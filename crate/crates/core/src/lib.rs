//! Software model of a wireless EMG/IMU squat-analysis chain.
//!
//! A simulated wearable ([`simulator`]) fuses thigh and shank IMU streams
//! into a knee angle ([`fusion`]), smooths two EMG envelopes ([`emg`]) and
//! streams 8-byte telemetry packets at a 15 ms cadence ([`protocol`]). The
//! host side reconstructs time, counts repetitions, summarizes and exports
//! each trial ([`session`]).

pub mod emg;
pub mod fusion;
pub mod protocol;
pub mod session;
pub mod simulator;

/// Device loop period, seconds.
pub const NOMINAL_DT_S: f64 = 0.015;
