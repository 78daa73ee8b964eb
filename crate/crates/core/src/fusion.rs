//! Sagittal-plane knee kinematics from a thigh/shank IMU pair.
//!
//! Each segment's tilt comes from the gravity projection on its accelerometer
//! (`atan2(ax, az)`), is fused with the integrated gyro rate by a first-order
//! complementary filter, and the knee angle is the shank tilt minus the thigh
//! tilt minus a standing-posture offset. Flexion is positive.
//!
//! Sensor axis convention: `ax` points anterior, `az` runs along the segment,
//! and the sagittal angular rate is reported on `gx`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default gyro weight of the complementary filter.
pub const DEFAULT_ALPHA: f64 = 0.98;

/// Default length of the standing calibration window, seconds.
pub const DEFAULT_CALIBRATION_WINDOW_S: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("degenerate orientation: ax and az are both zero")]
    DegenerateOrientation,
    #[error("non-positive time step {0} s")]
    InvalidTimeStep(f64),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("complementary filter weight {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("expected {expected:?} segment, got {got:?}")]
    SegmentMismatch { expected: Segment, got: Segment },
    #[error("insufficient data: need {needed} samples, have {have}")]
    InsufficientData { needed: usize, have: usize },
}

pub type Result<T> = std::result::Result<T, FusionError>;

/// One 6-axis reading. Accelerations in m/s², rates in °/s, `t` in seconds
/// since stream start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
    pub t: f64,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        [self.ax, self.ay, self.az, self.gx, self.gy, self.gz, self.t]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Sagittal tilt from this sample's accelerometer.
    pub fn tilt(&self) -> Result<f64> {
        tilt_from_accel(self.ax, self.az)
    }

    /// Angular rate about the sagittal axis.
    pub fn sagittal_rate(&self) -> f64 {
        self.gx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    Thigh,
    Shank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentTilt {
    pub angle_deg: f64,
    pub segment: Segment,
}

impl SegmentTilt {
    pub fn new(segment: Segment, angle_deg: f64) -> Self {
        Self {
            angle_deg: wrap_deg(angle_deg),
            segment,
        }
    }
}

/// Normalizes an angle in degrees to (-180, 180].
pub fn wrap_deg(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

/// Segment tilt in degrees from the accelerometer's anterior and
/// longitudinal components.
pub fn tilt_from_accel(ax: f64, az: f64) -> Result<f64> {
    if !ax.is_finite() || !az.is_finite() {
        return Err(FusionError::NonFinite("acceleration"));
    }
    if ax == 0.0 && az == 0.0 {
        return Err(FusionError::DegenerateOrientation);
    }
    Ok(wrap_deg(ax.atan2(az).to_degrees()))
}

/// State of a single-segment complementary filter.
///
/// `alpha` is the weight on the gyro-propagated angle; `1 - alpha` goes to
/// the accelerometer tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplementaryFilter {
    pub fused_angle_deg: f64,
    pub alpha: f64,
    pub last_update_t: f64,
}

impl ComplementaryFilter {
    pub fn new(alpha: f64, initial_angle_deg: f64, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(FusionError::InvalidAlpha(alpha));
        }
        if !initial_angle_deg.is_finite() || !t.is_finite() {
            return Err(FusionError::NonFinite("initial state"));
        }
        Ok(Self {
            fused_angle_deg: wrap_deg(initial_angle_deg),
            alpha,
            last_update_t: t,
        })
    }

    /// Advances the filter by `dt` seconds. On error the state is unchanged.
    pub fn update(&mut self, gyro_rate_dps: f64, accel_tilt_deg: f64, dt: f64) -> Result<f64> {
        *self = complementary_update(*self, gyro_rate_dps, accel_tilt_deg, dt)?;
        Ok(self.fused_angle_deg)
    }
}

pub fn complementary_update(
    state: ComplementaryFilter,
    gyro_rate_dps: f64,
    accel_tilt_deg: f64,
    dt: f64,
) -> Result<ComplementaryFilter> {
    if !dt.is_finite() {
        return Err(FusionError::NonFinite("dt"));
    }
    if dt <= 0.0 {
        return Err(FusionError::InvalidTimeStep(dt));
    }
    if !gyro_rate_dps.is_finite() {
        return Err(FusionError::NonFinite("gyro rate"));
    }
    if !accel_tilt_deg.is_finite() {
        return Err(FusionError::NonFinite("accelerometer tilt"));
    }
    let alpha = state.alpha;
    let propagated = state.fused_angle_deg + gyro_rate_dps * dt;
    // Pure branches are returned as-is so alpha = 0 and alpha = 1 are exact.
    let fused = if alpha == 0.0 {
        accel_tilt_deg
    } else if alpha == 1.0 {
        propagated
    } else {
        alpha * propagated + (1.0 - alpha) * accel_tilt_deg
    };
    Ok(ComplementaryFilter {
        fused_angle_deg: wrap_deg(fused),
        alpha,
        last_update_t: state.last_update_t + dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOffset {
    pub offset_deg: f64,
    pub n_samples: usize,
    pub window_s: f64,
}

impl CalibrationOffset {
    pub const ZERO: CalibrationOffset = CalibrationOffset {
        offset_deg: 0.0,
        n_samples: 1,
        window_s: 0.0,
    };
}

/// Knee flexion from the two segment tilts.
pub fn knee_angle(shank: SegmentTilt, thigh: SegmentTilt, offset: CalibrationOffset) -> Result<f64> {
    if shank.segment != Segment::Shank {
        return Err(FusionError::SegmentMismatch {
            expected: Segment::Shank,
            got: shank.segment,
        });
    }
    if thigh.segment != Segment::Thigh {
        return Err(FusionError::SegmentMismatch {
            expected: Segment::Thigh,
            got: thigh.segment,
        });
    }
    Ok(wrap_deg(shank.angle_deg - thigh.angle_deg - offset.offset_deg))
}

/// Number of samples that fall in the first `window_s` seconds at interval `dt`.
pub fn calibration_sample_count(window_s: f64, dt: f64) -> usize {
    ((window_s / dt + 1e-9).floor() as usize).max(1)
}

/// Mean of the raw knee angles over the first `window_s` seconds of a
/// stream sampled every `dt` seconds.
pub fn calibrate_offset(raw_knee_angles: &[f64], window_s: f64, dt: f64) -> Result<CalibrationOffset> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(FusionError::InvalidTimeStep(dt));
    }
    if window_s <= 0.0 || !window_s.is_finite() {
        return Err(FusionError::InvalidTimeStep(window_s));
    }
    let needed = calibration_sample_count(window_s, dt);
    if raw_knee_angles.len() < needed {
        return Err(FusionError::InsufficientData {
            needed,
            have: raw_knee_angles.len(),
        });
    }
    let window = &raw_knee_angles[..needed];
    if window.iter().any(|a| !a.is_finite()) {
        return Err(FusionError::NonFinite("calibration sample"));
    }
    let first = window[0];
    let offset_deg = if window.iter().all(|&a| a == first) {
        first
    } else {
        window.iter().sum::<f64>() / needed as f64
    };
    Ok(CalibrationOffset {
        offset_deg,
        n_samples: needed,
        window_s,
    })
}

/// Knee angle with its first and second time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneeState {
    pub angle_deg: f64,
    pub velocity_dps: f64,
    pub accel_dps2: f64,
    pub t: f64,
}

/// Second-order finite difference of a uniformly sampled series: central in
/// the interior, three-point one-sided at both ends. Exact for quadratics.
fn differentiate(series: &[f64], dt: f64) -> Vec<f64> {
    let n = series.len();
    let h2 = 2.0 * dt;
    let mut out = Vec::with_capacity(n);
    out.push((-3.0 * series[0] + 4.0 * series[1] - series[2]) / h2);
    for i in 1..n - 1 {
        out.push((series[i + 1] - series[i - 1]) / h2);
    }
    out.push((3.0 * series[n - 1] - 4.0 * series[n - 2] + series[n - 3]) / h2);
    out
}

/// Centered moving average; the window shrinks at the ends. `width <= 1`
/// returns the input unchanged.
pub fn moving_average(series: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return series.to_vec();
    }
    let half = width / 2;
    let n = series.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let w = &series[lo..=hi];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// Velocity and acceleration of a uniformly sampled angle trace.
pub fn derive_kinematics(angles: &[f64], dt: f64) -> Result<Vec<KneeState>> {
    derive_kinematics_smoothed(angles, dt, 1)
}

/// As [`derive_kinematics`], with an optional moving average of width
/// `smoothing_width` applied to velocity and to acceleration.
pub fn derive_kinematics_smoothed(
    angles: &[f64],
    dt: f64,
    smoothing_width: usize,
) -> Result<Vec<KneeState>> {
    if angles.len() < 3 {
        return Err(FusionError::InsufficientData {
            needed: 3,
            have: angles.len(),
        });
    }
    if dt <= 0.0 || !dt.is_finite() {
        return Err(FusionError::InvalidTimeStep(dt));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(FusionError::NonFinite("angle"));
    }
    let velocity = moving_average(&differentiate(angles, dt), smoothing_width);
    let accel = moving_average(&differentiate(&velocity, dt), smoothing_width);
    Ok(angles
        .iter()
        .zip(velocity)
        .zip(accel)
        .enumerate()
        .map(|(i, ((&angle_deg, velocity_dps), accel_dps2))| KneeState {
            angle_deg,
            velocity_dps,
            accel_dps2,
            t: i as f64 * dt,
        })
        .collect())
}

/// Streaming counterpart of [`derive_kinematics`] using backward differences,
/// for live display. The first sample reports zero velocity, the first two
/// zero acceleration.
#[derive(Debug, Clone, Default)]
pub struct CausalDifferentiator {
    prev_angle: Option<f64>,
    prev_velocity: Option<f64>,
}

impl CausalDifferentiator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, angle_deg: f64, t: f64, dt: f64) -> KneeState {
        let velocity_dps = match self.prev_angle {
            Some(prev) => (angle_deg - prev) / dt,
            None => 0.0,
        };
        let accel_dps2 = match (self.prev_angle, self.prev_velocity) {
            (Some(_), Some(prev_v)) => (velocity_dps - prev_v) / dt,
            _ => 0.0,
        };
        if self.prev_angle.is_some() {
            self.prev_velocity = Some(velocity_dps);
        }
        self.prev_angle = Some(angle_deg);
        KneeState {
            angle_deg,
            velocity_dps,
            accel_dps2,
            t,
        }
    }
}

/// Device-side estimator: one complementary filter per segment, knee angle
/// by differencing.
#[derive(Debug, Clone)]
pub struct KneeEstimator {
    alpha: f64,
    thigh: Option<ComplementaryFilter>,
    shank: Option<ComplementaryFilter>,
}

impl KneeEstimator {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(FusionError::InvalidAlpha(alpha));
        }
        Ok(Self {
            alpha,
            thigh: None,
            shank: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn step(
        filter: &mut Option<ComplementaryFilter>,
        alpha: f64,
        sample: &ImuSample,
    ) -> Result<f64> {
        if !sample.is_finite() {
            return Err(FusionError::NonFinite("IMU sample"));
        }
        let tilt = sample.tilt()?;
        match filter {
            None => {
                let f = ComplementaryFilter::new(alpha, tilt, sample.t)?;
                *filter = Some(f);
                Ok(f.fused_angle_deg)
            }
            Some(f) => {
                let dt = sample.t - f.last_update_t;
                f.update(sample.sagittal_rate(), tilt, dt)
            }
        }
    }

    /// Feeds one synchronized sample pair and returns the fused segment
    /// tilts. The first pair seeds both filters from the accelerometer.
    pub fn update(&mut self, thigh: &ImuSample, shank: &ImuSample) -> Result<(SegmentTilt, SegmentTilt)> {
        let thigh_deg = Self::step(&mut self.thigh, self.alpha, thigh)?;
        let shank_deg = Self::step(&mut self.shank, self.alpha, shank)?;
        Ok((
            SegmentTilt::new(Segment::Thigh, thigh_deg),
            SegmentTilt::new(Segment::Shank, shank_deg),
        ))
    }

    /// Un-offset knee angle for one sample pair.
    pub fn raw_knee(&mut self, thigh: &ImuSample, shank: &ImuSample) -> Result<f64> {
        let (t, s) = self.update(thigh, shank)?;
        knee_angle(s, t, CalibrationOffset::ZERO)
    }
}
