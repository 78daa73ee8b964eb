//! EMG envelope channels: ADC conversion, first-order IIR smoothing and
//! running amplitude statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest 12-bit ADC reading.
pub const ADC_MAX_COUNTS: u16 = 4095;
/// ADC full-scale voltage.
pub const ADC_FULL_SCALE_V: f64 = 3.3;
/// Device-side smoothing coefficient.
pub const DEFAULT_ALPHA_EMG: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmgError {
    #[error("ADC reading {0} outside [0, 4095]")]
    OutOfRange(f64),
    #[error("smoothing coefficient {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("no samples in channel")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmgChannel {
    /// Agonist, wire channel 1.
    VastusLateralis,
    /// Antagonist, wire channel 2.
    Semitendinosus,
}

pub fn counts_to_volts(counts: f64) -> Result<f64, EmgError> {
    if !(0.0..=ADC_MAX_COUNTS as f64).contains(&counts) {
        return Err(EmgError::OutOfRange(counts));
    }
    Ok(counts * ADC_FULL_SCALE_V / ADC_MAX_COUNTS as f64)
}

/// Nearest ADC count for a voltage, clamped to the converter range.
pub fn volts_to_counts(volts: f64) -> u16 {
    let c = (volts * ADC_MAX_COUNTS as f64 / ADC_FULL_SCALE_V).round();
    c.clamp(0.0, ADC_MAX_COUNTS as f64) as u16
}

/// Time for the envelope to reach 63.2% of a step, seconds.
pub fn step_time_constant_s(alpha_emg: f64, dt: f64) -> f64 {
    -dt / (1.0 - alpha_emg).ln()
}

/// One channel's exponential-smoothing envelope plus peak/mean
/// accumulators over the smoothed output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmgChannelState {
    pub channel: EmgChannel,
    pub envelope_counts: f64,
    pub alpha_emg: f64,
    pub peak_counts: f64,
    pub sum_counts: f64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub peak_volts: f64,
    pub mean_volts: f64,
}

impl EmgChannelState {
    pub fn new(channel: EmgChannel, alpha_emg: f64) -> Result<Self, EmgError> {
        if !(alpha_emg > 0.0 && alpha_emg <= 1.0) {
            return Err(EmgError::InvalidAlpha(alpha_emg));
        }
        Ok(Self {
            channel,
            envelope_counts: 0.0,
            alpha_emg,
            peak_counts: 0.0,
            sum_counts: 0.0,
            n: 0,
        })
    }

    /// Statistics-only channel: the input is already an envelope.
    pub fn passthrough(channel: EmgChannel) -> Self {
        Self::new(channel, 1.0).expect("alpha 1 is valid")
    }

    /// Feeds one raw ADC reading and returns the new envelope value.
    pub fn update(&mut self, raw: f64) -> Result<f64, EmgError> {
        if !(0.0..=ADC_MAX_COUNTS as f64).contains(&raw) {
            return Err(EmgError::OutOfRange(raw));
        }
        let env = if self.alpha_emg == 1.0 {
            raw
        } else {
            self.envelope_counts + self.alpha_emg * (raw - self.envelope_counts)
        };
        self.envelope_counts = env;
        self.peak_counts = if self.n == 0 { env } else { self.peak_counts.max(env) };
        self.sum_counts += env;
        self.n += 1;
        Ok(env)
    }

    pub fn mean_counts(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_counts / self.n as f64)
    }

    pub fn summary(&self) -> Result<ChannelSummary, EmgError> {
        let mean = self.mean_counts().ok_or(EmgError::Empty)?;
        Ok(ChannelSummary {
            peak_volts: counts_to_volts(self.peak_counts)?,
            mean_volts: counts_to_volts(mean.min(self.peak_counts))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_alpha_passes_input_through() {
        let mut s = EmgChannelState::new(EmgChannel::VastusLateralis, 1.0).unwrap();
        s.envelope_counts = 3000.0;
        assert_eq!(s.update(1000.0).unwrap(), 1000.0);
    }

    #[test]
    fn step_response_closed_form() {
        let mut s = EmgChannelState::new(EmgChannel::Semitendinosus, 0.1).unwrap();
        let mut env = 0.0;
        for _ in 0..10 {
            env = s.update(1000.0).unwrap();
        }
        let expected = 1000.0 * (1.0 - 0.9f64.powi(10));
        assert!((env - expected).abs() < 1e-9);
        assert!((env - 651.3).abs() < 0.05);
    }

    #[test]
    fn constant_input_converges_monotonically() {
        for start in [0.0, 4000.0] {
            let mut s = EmgChannelState::new(EmgChannel::VastusLateralis, 0.2).unwrap();
            s.envelope_counts = start;
            let mut prev_gap = (start - 1500.0f64).abs();
            for _ in 0..200 {
                let gap = (s.update(1500.0).unwrap() - 1500.0).abs();
                assert!(gap <= prev_gap);
                prev_gap = gap;
            }
            assert!(prev_gap < 1e-9);
        }
    }

    #[test]
    fn out_of_range_is_rejected() {
        let mut s = EmgChannelState::new(EmgChannel::VastusLateralis, 0.2).unwrap();
        assert_eq!(s.update(4096.0), Err(EmgError::OutOfRange(4096.0)));
        assert!(s.update(-1.0).is_err());
        assert!(s.update(f64::NAN).is_err());
        assert_eq!(s.n, 0);
        assert!(EmgChannelState::new(EmgChannel::VastusLateralis, 0.0).is_err());
        assert!(EmgChannelState::new(EmgChannel::VastusLateralis, 1.2).is_err());
    }

    #[test]
    fn volts_conversion() {
        assert_eq!(counts_to_volts(0.0).unwrap(), 0.0);
        assert!((counts_to_volts(4095.0).unwrap() - 3.3).abs() < 1e-12);
        assert!((counts_to_volts(1986.0).unwrap() - 1.6).abs() < 1e-3);
        assert!(counts_to_volts(4095.5).is_err());
        // 1.6 V sits between codes 1985 and 1986.
        assert_eq!(volts_to_counts(1.6), 1985);
        assert!((counts_to_volts(1986.0).unwrap() - 1.6).abs() < 3.3 / 4095.0);
        // Round trip volts -> counts -> volts stays within one LSB.
        let lsb = ADC_FULL_SCALE_V / ADC_MAX_COUNTS as f64;
        for mv in (0..=3300).step_by(7) {
            let v = mv as f64 / 1000.0;
            let back = counts_to_volts(volts_to_counts(v) as f64).unwrap();
            assert!((back - v).abs() <= lsb);
        }
    }

    #[test]
    fn summaries() {
        let mut s = EmgChannelState::passthrough(EmgChannel::VastusLateralis);
        assert_eq!(s.summary(), Err(EmgError::Empty));
        s.update(1986.0).unwrap();
        let sum = s.summary().unwrap();
        assert_eq!(sum.peak_volts, sum.mean_volts);
        assert!((sum.peak_volts - 1.6).abs() < 1e-3);

        let mut s = EmgChannelState::passthrough(EmgChannel::Semitendinosus);
        s.update(0.0).unwrap();
        s.update(4095.0).unwrap();
        let sum = s.summary().unwrap();
        assert!((sum.peak_volts - 3.3).abs() < 1e-12);
        assert!((sum.mean_volts - 1.65).abs() < 1e-12);
    }

    #[test]
    fn time_constant() {
        let tau = step_time_constant_s(0.2, 0.015);
        assert!((tau - 0.015 / 0.8f64.ln().abs()).abs() < 1e-15);
    }
}
