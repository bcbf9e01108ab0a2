//! Road height reconstruction by inverting the wheel dynamics.
//!
//! With identified parameters the road under a corner is
//!
//! ```text
//! r_hat = (m_w x4' - k_s s_d - b_s s_v + f) / k_t + x3_hat
//! ```
//!
//! where `x3_hat` comes from integrating the wheel acceleration twice with a
//! first-order high-pass after each integration stage to suppress drift.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::quarter_car::{QuarterCarParams, SensorStream};
use crate::textio::{data_lines, parse_row, read_to_string};
use crate::{Error, Result};

/// Warm-up of the drift filter, in multiples of `1 / cutoff`.
pub const TRANSIENT_PERIODS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum IntegrationMethod {
    /// Trapezoidal integration with a high-pass after each of the two stages.
    TrapezoidalHighPassPerStage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionConfig {
    pub highpass_cutoff: f64,
    pub method: IntegrationMethod,
    pub params: QuarterCarParams,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            highpass_cutoff: 0.5,
            method: IntegrationMethod::TrapezoidalHighPassPerStage,
            params: QuarterCarParams::default(),
        }
    }
}

impl ReconstructionConfig {
    /// Seconds of output at the start of a stream dominated by filter warm-up.
    pub fn transient_duration(&self) -> f64 {
        TRANSIENT_PERIODS / self.highpass_cutoff
    }
}

/// Estimated road height over time, with the speed needed to map it to distance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeProfile {
    pub time: Vec<f64>,
    pub height: Vec<f64>,
    pub speed: Vec<f64>,
    /// Records before this time are filter warm-up.
    pub transient_until: f64,
    /// Whether the drift filter ran after each integration stage.
    pub highpass_per_stage: bool,
}

impl TimeProfile {
    pub fn new(time: Vec<f64>, height: Vec<f64>, speed: Vec<f64>) -> Result<Self> {
        if time.len() != height.len() || time.len() != speed.len() {
            return Err(Error::LengthMismatch {
                expected: time.len(),
                actual: height.len().min(speed.len()),
            });
        }
        if time.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("time must be strictly increasing"));
        }
        if height.iter().chain(&speed).any(|v| !v.is_finite()) {
            return Err(Error::invalid("profile values must be finite"));
        }
        Ok(Self {
            time,
            height,
            speed,
            transient_until: f64::NEG_INFINITY,
            highpass_per_stage: false,
        })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// `t,r_hat,v` delimited text.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 64);
        out.push_str("t,r_hat,v\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:.8e},{:.8e},{:.8e}\n",
                self.time[i], self.height[i], self.speed[i]
            ));
        }
        out
    }

    pub fn from_text(path: &Path, text: &str) -> Result<Self> {
        let (mut t, mut r, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for (ln, line) in data_lines(text) {
            if line.starts_with('t') {
                continue;
            }
            let row = parse_row(path, ln, line, 3)?;
            t.push(row[0]);
            r.push(row[1]);
            v.push(row[2]);
        }
        Self::new(t, r, v)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (p, text) = read_to_string(path)?;
        Self::from_text(&p, &text)
    }
}

/// First-order recursive high-pass `y[n] = a (y[n-1] + x[n] - x[n-1])`.
struct HighPass {
    alpha: f64,
    prev_in: f64,
    prev_out: f64,
}

impl HighPass {
    fn new(cutoff: f64, period: f64) -> Self {
        Self {
            alpha: 1.0 / (1.0 + std::f64::consts::TAU * cutoff * period),
            prev_in: 0.0,
            prev_out: 0.0,
        }
    }

    fn apply(&mut self, x: f64) -> f64 {
        let y = self.alpha * (self.prev_out + x - self.prev_in);
        self.prev_in = x;
        self.prev_out = y;
        y
    }
}

/// Integrates `accel` twice (trapezoidal rule) with the high-pass applied
/// after each integration. The integrators and filters start from rest.
pub fn double_integrate_highpass(accel: &[f64], period: f64, cutoff: f64) -> Result<Vec<f64>> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::invalid("sample period must be positive"));
    }
    let nyquist = 0.5 / period;
    if !(cutoff > 0.0 && cutoff < nyquist) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff} Hz must be in (0, {nyquist}) Hz"
        )));
    }
    let mut hp_velocity = HighPass::new(cutoff, period);
    let mut hp_position = HighPass::new(cutoff, period);
    let mut out = Vec::with_capacity(accel.len());
    let (mut velocity, mut position) = (0.0, 0.0);
    let (mut prev_accel, mut prev_vel) = (accel.first().copied().unwrap_or(0.0), 0.0);
    for (i, &a) in accel.iter().enumerate() {
        if i > 0 {
            velocity += 0.5 * period * (a + prev_accel);
        }
        let v = hp_velocity.apply(velocity);
        if i > 0 {
            position += 0.5 * period * (v + prev_vel);
        }
        out.push(hp_position.apply(position));
        prev_accel = a;
        prev_vel = v;
    }
    Ok(out)
}

/// Road height estimate for one corner.
pub fn estimate_road_profile(
    stream: &SensorStream,
    config: &ReconstructionConfig,
) -> Result<TimeProfile> {
    stream.check_channels()?;
    config.params.validate()?;
    let period = stream.sample_period()?;
    let wheel_position =
        double_integrate_highpass(&stream.wheel_accel, period, config.highpass_cutoff)?;
    let mut profile = estimate_with_wheel_position(stream, &config.params, &wheel_position)?;
    profile.transient_until = stream.time[0] + config.transient_duration();
    profile.highpass_per_stage = true;
    Ok(profile)
}

/// The same estimator with a caller-supplied wheel position trace in place
/// of the filtered double integral.
pub fn estimate_with_wheel_position(
    stream: &SensorStream,
    params: &QuarterCarParams,
    wheel_position: &[f64],
) -> Result<TimeProfile> {
    stream.check_channels()?;
    if wheel_position.len() != stream.len() {
        return Err(Error::LengthMismatch {
            expected: stream.len(),
            actual: wheel_position.len(),
        });
    }
    let height = (0..stream.len())
        .map(|i| {
            (params.wheel_mass * stream.wheel_accel[i]
                - params.spring_rate * stream.shock_displacement[i]
                - params.damping * stream.shock_velocity[i]
                + stream.force[i])
                / params.tire_rate
                + wheel_position[i]
        })
        .collect();
    TimeProfile::new(stream.time.clone(), height, stream.speed.clone())
}
