//! Synthetic wearable: ground-truth squat kinematics, IMU and EMG sensor
//! models, and the device loop that turns them into framed telemetry.

mod device;
mod sensors;
mod truth;

pub use device::{device_ticks, run_device, DeviceConfig, DeviceTick, RunError};
pub use sensors::{synthesize_emg, synthesize_imu, EmgSynthesis, ImuStreams, PhaseGains, GRAVITY};
pub use truth::{generate_truth, Truth};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NOMINAL_DT_S;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("infeasible profile: {0}")]
    Profile(String),
    #[error("invalid noise model: {0}")]
    Noise(String),
    #[error("device configuration: {0}")]
    Device(String),
}

/// Shape and timing of one simulated trial.
///
/// The trial opens with `standing_s` of quiet stance, then `n_reps`
/// equal-length cycles. Each cycle is a raised-cosine descent, a hold at
/// `peak_flexion_deg`, a mirrored ascent and a short standing rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquatProfile {
    pub n_reps: usize,
    pub trial_s: f64,
    pub peak_flexion_deg: f64,
    /// Fraction of the knee angle carried by thigh rotation.
    pub thigh_share: f64,
    pub standing_s: f64,
    pub hold_s: f64,
    pub rest_s: f64,
    /// Sensor mounting misalignment, added to each segment's true tilt.
    pub thigh_mount_deg: f64,
    pub shank_mount_deg: f64,
    pub dt_s: f64,
    pub rng_seed: u64,
}

/// Shortest allowed descent (and ascent), seconds.
const MIN_MOVE_S: f64 = 0.1;

impl Default for SquatProfile {
    fn default() -> Self {
        Self {
            n_reps: 5,
            trial_s: 10.0,
            peak_flexion_deg: 120.0,
            thigh_share: 0.6,
            standing_s: 2.0,
            hold_s: 0.2,
            rest_s: 0.2,
            thigh_mount_deg: 3.0,
            shank_mount_deg: -4.5,
            dt_s: NOMINAL_DT_S,
            rng_seed: 1,
        }
    }
}

impl SquatProfile {
    /// Raw knee angle seen by a perfectly calibrated device while standing.
    pub fn mounting_misalignment_deg(&self) -> f64 {
        self.shank_mount_deg - self.thigh_mount_deg
    }

    pub fn sample_count(&self) -> usize {
        (self.trial_s / self.dt_s - 1e-9).ceil() as usize
    }

    pub fn cycle_s(&self) -> f64 {
        if self.n_reps == 0 {
            0.0
        } else {
            (self.trial_s - self.standing_s) / self.n_reps as f64
        }
    }

    /// Duration of the descent, and of the ascent.
    pub fn move_s(&self) -> f64 {
        (self.cycle_s() - self.hold_s - self.rest_s) / 2.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Profile(m));
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return bad(format!("dt_s must be positive, got {}", self.dt_s));
        }
        if !(self.trial_s > 0.0 && self.trial_s.is_finite()) {
            return bad(format!("trial_s must be positive, got {}", self.trial_s));
        }
        if !(self.peak_flexion_deg > 0.0 && self.peak_flexion_deg < 180.0) {
            return bad(format!("peak_flexion_deg must be in (0, 180), got {}", self.peak_flexion_deg));
        }
        if !(self.thigh_share > 0.0 && self.thigh_share < 1.0) {
            return bad(format!("thigh_share must be in (0, 1), got {}", self.thigh_share));
        }
        if !(self.standing_s >= 0.0 && self.standing_s < self.trial_s) {
            return bad("standing_s must be in [0, trial_s)".into());
        }
        if !(self.hold_s >= 0.0 && self.rest_s >= 0.0) {
            return bad("hold_s and rest_s must be non-negative".into());
        }
        for m in [self.thigh_mount_deg, self.shank_mount_deg] {
            if m.is_nan() || m.abs() >= 45.0 {
                return bad(format!("mounting misalignment {m} out of range"));
            }
        }
        if self.n_reps > 0 && self.move_s() < MIN_MOVE_S {
            return bad(format!(
                "{} reps with hold {} s and rest {} s do not fit in {} s after {} s standing",
                self.n_reps, self.hold_s, self.rest_s, self.trial_s, self.standing_s
            ));
        }
        Ok(())
    }
}

/// Sensor noise and bias.
///
/// `gyro_bias` is applied with opposite signs on the two sensors (thigh
/// negative, shank positive) so it does not cancel in the knee angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
    pub gyro_bias: f64,
    pub emg_baseline_counts: f64,
    pub emg_noise_sigma_counts: f64,
    /// Lever arm, metres, for a tangential acceleration artifact
    /// `r * angular_accel` on the anterior axis. Zero keeps the
    /// accelerometer quasi-static.
    pub linear_accel_lever_m: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            accel_sigma: 0.2,
            gyro_sigma: 0.5,
            gyro_bias: 0.5,
            emg_baseline_counts: 120.0,
            emg_noise_sigma_counts: 8.0,
            linear_accel_lever_m: 0.0,
        }
    }
}

impl NoiseModel {
    /// No noise or bias; the EMG baseline is kept.
    pub fn zero() -> Self {
        Self {
            accel_sigma: 0.0,
            gyro_sigma: 0.0,
            gyro_bias: 0.0,
            emg_noise_sigma_counts: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("accel_sigma", self.accel_sigma),
            ("gyro_sigma", self.gyro_sigma),
            ("emg_noise_sigma_counts", self.emg_noise_sigma_counts),
            ("emg_baseline_counts", self.emg_baseline_counts),
            ("linear_accel_lever_m", self.linear_accel_lever_m),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Noise(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !self.gyro_bias.is_finite() {
            return Err(SimError::Noise("gyro_bias must be finite".into()));
        }
        Ok(())
    }
}

/// Independent, reproducible RNG stream for one noise source.
pub(crate) fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const IMU_STREAM: u64 = 1;
pub(crate) const EMG_STREAM: u64 = 2;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_is_feasible() {
        let p = SquatProfile::default();
        p.validate().unwrap();
        assert_eq!(p.sample_count(), 667);
        assert!((p.cycle_s() - 1.6).abs() < 1e-12);
        assert!((p.move_s() - 0.6).abs() < 1e-12);
        assert_eq!(p.mounting_misalignment_deg(), -7.5);
    }

    #[test]
    fn infeasible_profiles() {
        let too_many = SquatProfile {
            n_reps: 40,
            ..SquatProfile::default()
        };
        assert!(matches!(too_many.validate(), Err(SimError::Profile(_))));
        for p in [
            SquatProfile {
                peak_flexion_deg: 180.0,
                ..SquatProfile::default()
            },
            SquatProfile {
                thigh_share: 1.0,
                ..SquatProfile::default()
            },
            SquatProfile {
                standing_s: 10.0,
                ..SquatProfile::default()
            },
        ] {
            assert!(p.validate().is_err());
        }
        assert!(NoiseModel {
            accel_sigma: -1.0,
            ..NoiseModel::default()
        }
        .validate()
        .is_err());
    }
}
