use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    linear_damping, step_dynamics_with, wheel_acceleration, QuarterCarParams, QuarterCarState,
    RoadInput, DEFAULT_DT,
};
use crate::textio::{data_lines, parse_error, parse_row, read_to_string};
use crate::{Error, Result};

const STREAM_HEADER: &str = "t,accel,sd,sv,f,v";

/// Per-timestep suspension sensor channels, stored column-wise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorStream {
    pub time: Vec<f64>,
    /// Wheel acceleration x4', m/s².
    pub wheel_accel: Vec<f64>,
    /// Shock displacement s_d, m.
    pub shock_displacement: Vec<f64>,
    /// Shock velocity s_v, m/s.
    pub shock_velocity: Vec<f64>,
    /// Actuator force f, N.
    pub force: Vec<f64>,
    /// Vehicle speed v, m/s.
    pub speed: Vec<f64>,
}

impl SensorStream {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            time: Vec::with_capacity(n),
            wheel_accel: Vec::with_capacity(n),
            shock_displacement: Vec::with_capacity(n),
            shock_velocity: Vec::with_capacity(n),
            force: Vec::with_capacity(n),
            speed: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// Checks that every channel has one value per timestamp.
    pub fn check_channels(&self) -> Result<()> {
        let n = self.time.len();
        let channels: [(&'static str, usize); 5] = [
            ("accel", self.wheel_accel.len()),
            ("sd", self.shock_displacement.len()),
            ("sv", self.shock_velocity.len()),
            ("f", self.force.len()),
            ("v", self.speed.len()),
        ];
        for (name, len) in channels {
            if len != n {
                return Err(Error::MissingChannel(name));
            }
        }
        Ok(())
    }

    /// Returns the constant sample period, or an error if timestamps are not
    /// strictly increasing at a uniform rate.
    pub fn sample_period(&self) -> Result<f64> {
        uniform_period(&self.time)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 96);
        out.push_str(STREAM_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}\n",
                self.time[i],
                self.wheel_accel[i],
                self.shock_displacement[i],
                self.shock_velocity[i],
                self.force[i],
                self.speed[i]
            ));
        }
        out
    }

    pub fn from_text(path: &Path, text: &str) -> Result<Self> {
        let mut lines = data_lines(text);
        let (header_line, header) = lines
            .next()
            .ok_or_else(|| parse_error(path, 0, "empty sensor stream"))?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        for (idx, name) in STREAM_HEADER.split(',').enumerate() {
            if columns.get(idx) != Some(&name) {
                return Err(match name {
                    "accel" => Error::MissingChannel("accel"),
                    "sd" => Error::MissingChannel("sd"),
                    "sv" => Error::MissingChannel("sv"),
                    "f" => Error::MissingChannel("f"),
                    "v" => Error::MissingChannel("v"),
                    _ => parse_error(path, header_line, format!("bad header `{header}`")),
                });
            }
        }
        let mut s = SensorStream::default();
        for (line_no, line) in lines {
            let row = parse_row(path, line_no, line, 6)?;
            s.time.push(row[0]);
            s.wheel_accel.push(row[1]);
            s.shock_displacement.push(row[2]);
            s.shock_velocity.push(row[3]);
            s.force.push(row[4]);
            s.speed.push(row[5]);
        }
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (p, text) = read_to_string(path)?;
        Self::from_text(&p, &text)
    }
}

pub(crate) fn uniform_period(time: &[f64]) -> Result<f64> {
    if time.len() < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let period = time[1] - time[0];
    if !(period > 0.0) {
        return Err(Error::NonUniformSampling { index: 1 });
    }
    for (i, w) in time.windows(2).enumerate() {
        let d = w[1] - w[0];
        if !(d > 0.0) || (d - period).abs() > 1e-6 * period {
            return Err(Error::NonUniformSampling { index: i + 1 });
        }
    }
    Ok(period)
}

/// Additive white Gaussian noise standard deviations per channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorNoise {
    pub accel: f64,
    pub shock_displacement: f64,
    pub shock_velocity: f64,
    pub force: f64,
    pub speed: f64,
}

impl SensorNoise {
    pub fn validate(&self) -> Result<()> {
        for v in [
            self.accel,
            self.shock_displacement,
            self.shock_velocity,
            self.force,
            self.speed,
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid("noise standard deviations must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationOptions {
    pub dt: f64,
    /// Road distance under the wheel at t = 0.
    pub start_distance: f64,
    pub noise: SensorNoise,
    pub seed: u64,
    /// Keep ground-truth traces alongside the stream.
    pub record_truth: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            start_distance: 0.0,
            noise: SensorNoise::default(),
            seed: 0,
            record_truth: false,
        }
    }
}

/// Ground-truth traces sampled at the stream timestamps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTruth {
    /// Distance travelled since t = 0.
    pub distance: Vec<f64>,
    pub road_height: Vec<f64>,
    pub wheel_position: Vec<f64>,
    /// Noise-free copy of the sensor channels.
    pub clean: SensorStream,
}

#[derive(Clone, Debug)]
pub struct SimulatedRun {
    pub stream: SensorStream,
    pub truth: Option<RunTruth>,
}

/// Drives one corner over `road` at `speed(t)` with no actuator force.
pub fn simulate_run(
    road: &RoadInput,
    params: &QuarterCarParams,
    speed: impl Fn(f64) -> f64,
    duration: f64,
    options: &SimulationOptions,
) -> Result<SimulatedRun> {
    simulate_run_with_force(road, params, speed, |_| 0.0, duration, options)
}

/// Drives one corner over `road`, integrating the quarter-car model with RK4.
///
/// Distance is the trapezoidal integral of the sampled speed, and inside each
/// step the road is evaluated at the RK4 stage offsets along the linearly
/// interpolated speed. The vehicle starts at rest relative to the road
/// height under the wheel.
pub fn simulate_run_with_force(
    road: &RoadInput,
    params: &QuarterCarParams,
    speed: impl Fn(f64) -> f64,
    force: impl Fn(f64) -> f64,
    duration: f64,
    options: &SimulationOptions,
) -> Result<SimulatedRun> {
    params.validate()?;
    options.noise.validate()?;
    let dt = options.dt;
    if !(dt > 0.0 && dt <= super::MAX_DT) {
        return Err(Error::invalid(format!("dt must be in (0, 0.01], got {dt}")));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid("duration must be positive"));
    }
    let steps = (duration / dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let speeds: Vec<f64> = times.iter().map(|&t| speed(t)).collect();
    if let Some(v) = speeds.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(format!("speed profile must be >= 0, got {v}")));
    }
    let total: f64 = speeds.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
    let start = options.start_distance;
    if !road.covers(start, start + total) {
        return Err(Error::RoadTooShort {
            needed: start + total,
            available: road.length(),
        });
    }

    let damper = linear_damping(params);
    let mut clean = SensorStream::with_capacity(steps + 1);
    let mut truth = options.record_truth.then(|| RunTruth {
        distance: Vec::with_capacity(steps + 1),
        road_height: Vec::with_capacity(steps + 1),
        wheel_position: Vec::with_capacity(steps + 1),
        clean: SensorStream::default(),
    });

    let mut state = QuarterCarState::at_rest(road.height_at(start));
    let mut distance = 0.0;
    for i in 0..=steps {
        let t = times[i];
        let r = road.height_at(start + distance);
        let f = params.clamp_force(force(t));
        clean.time.push(t);
        clean.wheel_accel.push(wheel_acceleration(&state, params, r, f));
        clean.shock_displacement.push(state.suspension_deflection());
        clean.shock_velocity.push(state.suspension_velocity());
        clean.force.push(f);
        clean.speed.push(speeds[i]);
        if let Some(tr) = truth.as_mut() {
            tr.distance.push(distance);
            tr.road_height.push(r);
            tr.wheel_position.push(state.wheel_position);
        }
        if i == steps {
            break;
        }
        let (v0, v1) = (speeds[i], speeds[i + 1]);
        let d0 = distance;
        let road_at = |tau: f64| {
            road.height_at(start + d0 + v0 * tau + 0.5 * (v1 - v0) * tau * tau / dt)
        };
        state = step_dynamics_with(state, params, &damper, road_at, f, dt).map_err(|e| match e {
            Error::NumericalBlowUp { .. } => Error::NumericalBlowUp { time: t + dt },
            other => other,
        })?;
        distance += 0.5 * (v0 + v1) * dt;
    }

    let stream = add_noise(&clean, &options.noise, options.seed);
    if let Some(tr) = truth.as_mut() {
        tr.clean = clean;
    }
    Ok(SimulatedRun { stream, truth })
}

fn add_noise(clean: &SensorStream, noise: &SensorNoise, seed: u64) -> SensorStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut channel = |values: &[f64], std: f64, non_negative: bool| -> Vec<f64> {
        if std == 0.0 {
            return values.to_vec();
        }
        let dist = Normal::new(0.0, std).expect("validated std");
        values
            .iter()
            .map(|v| {
                let noisy = v + dist.sample(&mut rng);
                if non_negative {
                    noisy.max(0.0)
                } else {
                    noisy
                }
            })
            .collect()
    };
    SensorStream {
        time: clean.time.clone(),
        wheel_accel: channel(&clean.wheel_accel, noise.accel, false),
        shock_displacement: channel(&clean.shock_displacement, noise.shock_displacement, false),
        shock_velocity: channel(&clean.shock_velocity, noise.shock_velocity, false),
        force: channel(&clean.force, noise.force, false),
        speed: channel(&clean.speed, noise.speed, true),
    }
}
