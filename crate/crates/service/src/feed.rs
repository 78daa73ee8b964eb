use serde::{Deserialize, Serialize};

use kneelink_core::session::LiveSample;

/// One accepted frame as shown on the live plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveFeedEvent {
    pub seq: u16,
    pub t_s: f64,
    pub knee_angle_deg: f64,
    pub knee_vel_dps: f64,
    pub knee_acc_dps2: f64,
    pub emg1_v: f64,
    pub emg2_v: f64,
    pub session_id: String,
}

impl LiveFeedEvent {
    pub fn from_sample(session_id: &str, s: &LiveSample) -> Self {
        Self {
            seq: s.seq,
            t_s: s.knee.t,
            knee_angle_deg: s.knee.angle_deg,
            knee_vel_dps: s.knee.velocity_dps,
            knee_acc_dps2: s.knee.accel_dps2,
            emg1_v: s.emg1_v,
            emg2_v: s.emg2_v,
            session_id: session_id.to_string(),
        }
    }
}
