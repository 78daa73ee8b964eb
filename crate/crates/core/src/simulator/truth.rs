use std::f64::consts::PI;

use super::{SimError, SquatProfile};

/// Ground-truth angles sampled every `dt_s`, starting at t = 0.
///
/// Thigh and shank rotate in opposite senses: `thigh = -share * knee`,
/// `shank = (1 - share) * knee`, so `shank - thigh = knee` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub dt_s: f64,
    pub knee_deg: Vec<f64>,
    /// Analytic knee angular velocity, °/s.
    pub knee_velocity_dps: Vec<f64>,
    pub thigh_deg: Vec<f64>,
    pub shank_deg: Vec<f64>,
}

impl Truth {
    pub fn len(&self) -> usize {
        self.knee_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knee_deg.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt_s
    }
}

/// Knee angle and its derivative at time `t`.
fn knee_at(p: &SquatProfile, t: f64) -> (f64, f64) {
    if p.n_reps == 0 || t < p.standing_s {
        return (0.0, 0.0);
    }
    let cycle = p.cycle_s();
    let tau = t - p.standing_s;
    let k = (tau / cycle).floor();
    if k >= p.n_reps as f64 {
        return (0.0, 0.0);
    }
    let u = tau - k * cycle;
    let mv = p.move_s();
    let peak = p.peak_flexion_deg;
    let w = PI / mv;
    if u < mv {
        (peak * (1.0 - (w * u).cos()) / 2.0, peak * w * (w * u).sin() / 2.0)
    } else if u < mv + p.hold_s {
        (peak, 0.0)
    } else if u < 2.0 * mv + p.hold_s {
        let v = u - mv - p.hold_s;
        (peak * (1.0 + (w * v).cos()) / 2.0, -peak * w * (w * v).sin() / 2.0)
    } else {
        (0.0, 0.0)
    }
}

pub fn generate_truth(profile: &SquatProfile) -> Result<Truth, SimError> {
    profile.validate()?;
    let n = profile.sample_count();
    let share = profile.thigh_share;
    let mut truth = Truth {
        dt_s: profile.dt_s,
        knee_deg: Vec::with_capacity(n),
        knee_velocity_dps: Vec::with_capacity(n),
        thigh_deg: Vec::with_capacity(n),
        shank_deg: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (knee, vel) = knee_at(profile, i as f64 * profile.dt_s);
        let thigh = -share * knee;
        truth.knee_deg.push(knee);
        truth.knee_velocity_dps.push(vel);
        truth.thigh_deg.push(thigh);
        truth.shank_deg.push(thigh + knee);
    }
    Ok(truth)
}
