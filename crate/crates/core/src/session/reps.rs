//! Hysteresis repetition counting on a knee-angle trace.

use serde::{Deserialize, Serialize};

use super::SessionError;

pub const DEFAULT_HIGH_DEG: f64 = 60.0;
pub const DEFAULT_LOW_DEG: f64 = 20.0;

/// Index span of one repetition: from the last upward crossing of the low
/// threshold before the rep to the sample where it fell back below it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Repetitions {
    pub count: usize,
    pub spans: Vec<RepSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Waiting for the angle to exceed the high threshold.
    Low,
    /// Above high at some point; waiting to drop below low.
    High,
}

/// Streaming form of [`detect_repetitions`].
#[derive(Debug, Clone)]
pub struct RepCounter {
    high: f64,
    low: f64,
    phase: Phase,
    was_above_low: bool,
    rise_start: usize,
    index: usize,
    reps: Repetitions,
}

impl RepCounter {
    pub fn new(high_deg: f64, low_deg: f64) -> Result<Self, SessionError> {
        if high_deg <= low_deg || !high_deg.is_finite() || !low_deg.is_finite() {
            return Err(SessionError::Config(format!(
                "repetition thresholds need high > low, got high={high_deg} low={low_deg}"
            )));
        }
        Ok(Self {
            high: high_deg,
            low: low_deg,
            phase: Phase::Low,
            was_above_low: false,
            rise_start: 0,
            index: 0,
            reps: Repetitions::default(),
        })
    }

    /// Feeds one sample; returns the span when it completes a repetition.
    pub fn push(&mut self, angle_deg: f64) -> Option<RepSpan> {
        let i = self.index;
        self.index += 1;
        let above_low = angle_deg > self.low;
        if above_low && !self.was_above_low && self.phase == Phase::Low {
            self.rise_start = i;
        }
        self.was_above_low = above_low;
        match self.phase {
            Phase::Low if angle_deg > self.high => {
                self.phase = Phase::High;
                None
            }
            Phase::High if angle_deg < self.low => {
                self.phase = Phase::Low;
                let span = RepSpan {
                    start: self.rise_start,
                    end: i,
                };
                self.reps.count += 1;
                self.reps.spans.push(span);
                Some(span)
            }
            _ => None,
        }
    }

    pub fn count(&self) -> usize {
        self.reps.count
    }

    pub fn finish(self) -> Repetitions {
        self.reps
    }
}

/// Counts repetitions: one each time the angle rises above `high_deg` and
/// subsequently falls below `low_deg`.
pub fn detect_repetitions(angles: &[f64], high_deg: f64, low_deg: f64) -> Result<Repetitions, SessionError> {
    let mut counter = RepCounter::new(high_deg, low_deg)?;
    if angles.is_empty() {
        return Err(SessionError::InsufficientData { needed: 1, have: 0 });
    }
    for &a in angles {
        counter.push(a);
    }
    Ok(counter.finish())
}
