//! Duty-cycle power estimate of the emulated sensor.
//!
//! Waking from idle costs one discarded frame cycle before the usable one,
//! so every captured frame keeps the sensor active for two frame cycles.
//! That caps the idling-mode frame rate at half of the streaming maximum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensor::{ActivityLog, SensorProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error("activity log covers no time")]
    EmptyLog,
    #[error("frame rate {0} is negative or not a number")]
    NegativeRate(f64),
    #[error("clock frequency must be positive")]
    InvalidClock,
    #[error("power levels must satisfy active >= idle >= 0 (active {active_mw} mW, idle {idle_mw} mW)")]
    InvalidParams { active_mw: f64, idle_mw: f64 },
}

/// State power levels. The defaults are illustrative only; real values
/// come from the sensor datasheet at the operating clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    pub p_active_mw: f64,
    pub p_idle_mw: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            p_active_mw: 8.0,
            p_idle_mw: 1.0,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<(), PowerError> {
        let ok = self.p_idle_mw >= 0.0 && self.p_active_mw >= self.p_idle_mw;
        if ok && self.p_active_mw.is_finite() {
            Ok(())
        } else {
            Err(PowerError::InvalidParams {
                active_mw: self.p_active_mw,
                idle_mw: self.p_idle_mw,
            })
        }
    }

    fn at_fraction(&self, active_fraction: f64) -> f64 {
        if active_fraction >= 1.0 {
            return self.p_active_mw;
        }
        let avg = self.p_idle_mw + active_fraction * (self.p_active_mw - self.p_idle_mw);
        avg.clamp(self.p_idle_mw, self.p_active_mw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub average_mw: f64,
    pub active_fraction: f64,
}

pub fn estimate_power(log: &ActivityLog, params: &PowerParams) -> Result<PowerEstimate, PowerError> {
    params.validate()?;
    let span = log.span().as_ps();
    if span == 0 {
        return Err(PowerError::EmptyLog);
    }
    let active_fraction = log.active_ps.as_ps() as f64 / span as f64;
    Ok(PowerEstimate {
        average_mw: params.at_fraction(active_fraction),
        active_fraction,
    })
}

/// Active fraction when capturing `fps` frames per second from idle.
pub fn duty_cycle(profile: &SensorProfile, fps: f64, clock_hz: u64) -> Result<f64, PowerError> {
    if fps.is_nan() || fps < 0.0 {
        return Err(PowerError::NegativeRate(fps));
    }
    if clock_hz == 0 {
        return Err(PowerError::InvalidClock);
    }
    let frame_secs = profile.frame_cycle_cycles as f64 / clock_hz as f64;
    Ok((fps * 2.0 * frame_secs).min(1.0))
}

/// Highest idling-mode capture rate: one frame per two frame cycles.
pub fn idling_max_fps(profile: &SensorProfile, clock_hz: u64) -> f64 {
    clock_hz as f64 / (2.0 * profile.frame_cycle_cycles as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub fps: f64,
    pub average_mw: f64,
    pub active_fraction: f64,
}

pub fn power_sweep(
    profile: &SensorProfile,
    fps_values: &[f64],
    clock_hz: u64,
    params: &PowerParams,
) -> Result<Vec<SweepPoint>, PowerError> {
    params.validate()?;
    fps_values
        .iter()
        .map(|&fps| {
            let active_fraction = duty_cycle(profile, fps, clock_hz)?;
            Ok(SweepPoint {
                fps,
                average_mw: params.at_fraction(active_fraction),
                active_fraction,
            })
        })
        .collect()
}

/// `fps,average_mw,active_fraction` with a header row.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("fps,average_mw,active_fraction\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            p.fps, p.average_mw, p.active_fraction
        ));
    }
    out
}

/// `count` evenly spaced rates from `start` in steps of `step`, computed by
/// index so long ranges don't drift.
pub fn fps_range(start: f64, end: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || end < start {
        return Vec::new();
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let v = start + k as f64 * step;
            (v * 1e9).round() / 1e9
        })
        .collect()
}
