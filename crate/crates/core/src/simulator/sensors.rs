use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{noise_rng, NoiseModel, SimError, SquatProfile, Truth, EMG_STREAM, IMU_STREAM};
use crate::emg::ADC_MAX_COUNTS;
use crate::fusion::ImuSample;

pub const GRAVITY: f64 = 9.81;

fn gauss<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuStreams {
    pub thigh: Vec<ImuSample>,
    pub shank: Vec<ImuSample>,
}

fn segment_stream(
    angles: &[f64],
    mount_deg: f64,
    bias_dps: f64,
    dt: f64,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Vec<ImuSample> {
    let n = angles.len();
    (0..n)
        .map(|i| {
            let theta = (angles[i] + mount_deg).to_radians();
            let rate = if i == 0 { 0.0 } else { (angles[i] - angles[i - 1]) / dt };
            let ang_accel = if i == 0 || i + 1 >= n {
                0.0
            } else {
                (angles[i + 1] - 2.0 * angles[i] + angles[i - 1]) / (dt * dt)
            };
            let artifact = noise.linear_accel_lever_m * ang_accel.to_radians();
            ImuSample {
                ax: GRAVITY * theta.sin() + artifact + gauss(rng, noise.accel_sigma),
                ay: gauss(rng, noise.accel_sigma),
                az: GRAVITY * theta.cos() + gauss(rng, noise.accel_sigma),
                gx: rate + bias_dps + gauss(rng, noise.gyro_sigma),
                gy: gauss(rng, noise.gyro_sigma),
                gz: gauss(rng, noise.gyro_sigma),
                t: i as f64 * dt,
            }
        })
        .collect()
}

/// Thigh and shank IMU streams for a ground-truth trajectory.
///
/// Accelerometers see gravity rotated by the mounted segment angle; the
/// gyro reports the backward-difference rate of the true segment angle.
pub fn synthesize_imu(truth: &Truth, profile: &SquatProfile, noise: &NoiseModel) -> Result<ImuStreams, SimError> {
    noise.validate()?;
    let mut rng = noise_rng(profile.rng_seed, IMU_STREAM);
    let dt = truth.dt_s;
    let thigh = segment_stream(&truth.thigh_deg, profile.thigh_mount_deg, -noise.gyro_bias, dt, noise, &mut rng);
    let shank = segment_stream(&truth.shank_deg, profile.shank_mount_deg, noise.gyro_bias, dt, noise, &mut rng);
    Ok(ImuStreams { thigh, shank })
}

/// Counts per °/s of knee angular speed, by movement direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGains {
    /// Flexion increasing.
    pub descent: f64,
    /// Flexion decreasing.
    pub ascent: f64,
}

/// Envelope model for the two EMG channels: baseline plus a burst
/// proportional to knee angular speed, clipped at `ceiling_counts`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgSynthesis {
    pub ceiling_counts: f64,
    pub agonist: PhaseGains,
    pub antagonist: PhaseGains,
}

impl Default for EmgSynthesis {
    fn default() -> Self {
        Self {
            // 1.6 V at the ADC input.
            ceiling_counts: 1986.0,
            agonist: PhaseGains {
                descent: 12.0,
                ascent: 14.0,
            },
            antagonist: PhaseGains {
                descent: 2.0,
                ascent: 3.5,
            },
        }
    }
}

impl EmgSynthesis {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |g: PhaseGains| g.descent >= 0.0 && g.ascent >= 0.0 && g.descent.is_finite() && g.ascent.is_finite();
        if !(self.ceiling_counts >= 0.0 && self.ceiling_counts <= ADC_MAX_COUNTS as f64) {
            return Err(SimError::Noise(format!("EMG ceiling {} outside ADC range", self.ceiling_counts)));
        }
        if !ok(self.agonist) || !ok(self.antagonist) {
            return Err(SimError::Noise("EMG gains must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn channel_counts(baseline: f64, velocity_dps: f64, gains: PhaseGains, ceiling: f64, noise: f64) -> u16 {
    let gain = if velocity_dps > 0.0 { gains.descent } else { gains.ascent };
    let envelope = (baseline + gain * velocity_dps.abs()).min(ceiling);
    (envelope + noise).round().clamp(0.0, ADC_MAX_COUNTS as f64) as u16
}

/// Raw ADC streams for channel 1 (agonist) and channel 2 (antagonist).
pub fn synthesize_emg(
    truth: &Truth,
    profile: &SquatProfile,
    noise: &NoiseModel,
    model: &EmgSynthesis,
) -> Result<(Vec<u16>, Vec<u16>), SimError> {
    noise.validate()?;
    model.validate()?;
    let mut rng = noise_rng(profile.rng_seed, EMG_STREAM);
    let base = noise.emg_baseline_counts;
    let sigma = noise.emg_noise_sigma_counts;
    let mut ch1 = Vec::with_capacity(truth.len());
    let mut ch2 = Vec::with_capacity(truth.len());
    for &v in &truth.knee_velocity_dps {
        let n1 = gauss(&mut rng, sigma);
        let n2 = gauss(&mut rng, sigma);
        ch1.push(channel_counts(base, v, model.agonist, model.ceiling_counts, n1));
        ch2.push(channel_counts(base, v, model.antagonist, model.ceiling_counts, n2));
    }
    Ok((ch1, ch2))
}
