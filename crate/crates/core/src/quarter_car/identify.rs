use nalgebra::{DMatrix, DVector};

use super::{QuarterCarParams, RoadInput, SensorStream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct IdentificationOptions {
    /// Wheel mass m_w the regression is scaled by, kg.
    pub wheel_mass: f64,
    /// Road distance under the wheel at the first sample.
    pub road_offset: f64,
    /// Length of the windows over which the wheel position is re-integrated.
    pub window: f64,
}

impl Default for IdentificationOptions {
    fn default() -> Self {
        Self {
            wheel_mass: QuarterCarParams::default().wheel_mass,
            road_offset: 0.0,
            window: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdentifiedParameters {
    pub spring_rate: f64,
    pub damping: f64,
    pub tire_rate: f64,
    /// RMS of the force-balance residual, N.
    pub residual_rms: f64,
    pub samples: usize,
}

impl IdentifiedParameters {
    /// Folds the estimates into a full parameter set, taking the masses and
    /// force limit from `base`.
    pub fn apply_to(&self, base: &QuarterCarParams) -> QuarterCarParams {
        QuarterCarParams {
            spring_rate: self.spring_rate,
            damping: self.damping,
            tire_rate: self.tire_rate,
            ..*base
        }
    }
}

/// Least-squares fit of the wheel force balance
///
/// ```text
/// m_w x4' + f = k_s s_d + b_s s_v - k_t (x3 - r)
/// ```
///
/// for `k_s`, `b_s` and `k_t`. The road height `r` comes from `road` at the
/// odometer distance (trapezoidal integral of the reported speed). The wheel
/// position `x3` is the double integral of the measured wheel acceleration,
/// restarted in short windows; its unknown initial position and velocity in
/// each window are nuisance terms, removed by detrending every column of the
/// regression within the window.
///
/// The road is only piecewise linear, so the `k_t r / m_w` part of the
/// acceleration has kinks between samples that a sample-rate quadrature
/// cannot follow. That part is re-integrated on a fine sub-grid using the
/// current `k_t` estimate and the fit is repeated.
pub fn identify_parameters(
    stream: &SensorStream,
    road: &RoadInput,
    options: &IdentificationOptions,
) -> Result<IdentifiedParameters> {
    stream.check_channels()?;
    let dt = stream.sample_period()?;
    if !(options.wheel_mass > 0.0) {
        return Err(Error::invalid("wheel_mass must be positive"));
    }
    let window = ((options.window / dt).round() as usize).max(8);
    let n = stream.len();
    if n < window {
        return Err(Error::invalid(format!(
            "need at least {window} samples for identification, got {n}"
        )));
    }

    let mut distance = Vec::with_capacity(n);
    let mut road_height = Vec::with_capacity(n);
    let mut d = 0.0;
    for i in 0..n {
        if i > 0 {
            d += 0.5 * (stream.speed[i - 1] + stream.speed[i]) * dt;
        }
        distance.push(options.road_offset + d);
        road_height.push(road.height_at(options.road_offset + d));
    }

    let windows: Vec<(usize, usize)> = (0..n / window)
        .map(|k| (k * window, (k + 1) * window))
        .collect();
    let mut position = Vec::with_capacity(windows.len() * window);
    let mut road_defect = Vec::with_capacity(windows.len() * window);
    for &(start, end) in &windows {
        position.extend(double_integrate(&stream.wheel_accel[start..end], dt));
        let coarse = double_integrate(&road_height[start..end], dt);
        let fine = fine_road_double_integral(road, &distance, &stream.speed, start, end, dt);
        road_defect.extend(fine.iter().zip(&coarse).map(|(f, c)| f - c));
    }

    let mut fit = fit_balance(stream, &road_height, &position, &windows, options.wheel_mass)?;
    for _ in 0..ROAD_CORRECTION_PASSES {
        let gain = fit.tire_rate / options.wheel_mass;
        let corrected: Vec<f64> = position
            .iter()
            .zip(&road_defect)
            .map(|(x, e)| x + gain * e)
            .collect();
        fit = fit_balance(stream, &road_height, &corrected, &windows, options.wheel_mass)?;
    }
    Ok(fit)
}

const ROAD_CORRECTION_PASSES: usize = 2;
const ROAD_SUBSTEPS: usize = 32;

/// Regression on per-window detrended columns; `position` holds the wheel
/// position of every windowed sample, concatenated.
fn fit_balance(
    stream: &SensorStream,
    road_height: &[f64],
    position: &[f64],
    windows: &[(usize, usize)],
    wheel_mass: f64,
) -> Result<IdentifiedParameters> {
    let mut columns: [Vec<f64>; 3] = Default::default();
    let mut target = Vec::with_capacity(position.len());
    let mut offset = 0;
    for &(start, end) in windows {
        let mut block: [Vec<f64>; 4] = Default::default();
        for (k, i) in (start..end).enumerate() {
            block[0].push(stream.shock_displacement[i]);
            block[1].push(stream.shock_velocity[i]);
            block[2].push(-(position[offset + k] - road_height[i]));
            block[3].push(wheel_mass * stream.wheel_accel[i] + stream.force[i]);
        }
        offset += end - start;
        for col in block.iter_mut() {
            detrend(col);
        }
        let [a, b, c, y] = block;
        columns[0].extend(a);
        columns[1].extend(b);
        columns[2].extend(c);
        target.extend(y);
    }

    let rows = target.len();
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let scaled = DMatrix::from_fn(rows, 3, |r, c| {
        if norms[c] > 0.0 {
            columns[c][r] / norms[c]
        } else {
            0.0
        }
    });
    let y = DVector::from_vec(target);
    let svd = scaled.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-9 * max_sv.max(f64::MIN_POSITIVE) && **s > 0.0)
        .count();
    if rank < 3 || norms.contains(&0.0) {
        return Err(Error::RankDeficient { rank, columns: 3 });
    }
    let beta = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
    let residual = &y - &scaled * &beta;
    let residual_rms = (residual.norm_squared() / rows as f64).sqrt();

    Ok(IdentifiedParameters {
        spring_rate: beta[0] / norms[0],
        damping: beta[1] / norms[1],
        tire_rate: beta[2] / norms[2],
        residual_rms,
        samples: rows,
    })
}

/// Double integral of the road height over samples `start..end`, from zero
/// initial conditions, evaluated on `ROAD_SUBSTEPS` Simpson sub-steps per
/// sample interval with the speed varying linearly inside each interval.
fn fine_road_double_integral(
    road: &RoadInput,
    distance: &[f64],
    speed: &[f64],
    start: usize,
    end: usize,
    dt: f64,
) -> Vec<f64> {
    let h = dt / ROAD_SUBSTEPS as f64;
    let mut out = Vec::with_capacity(end - start);
    let (mut x, mut v) = (0.0, 0.0);
    out.push(0.0);
    for i in start..end - 1 {
        let (v0, v1) = (speed[i], speed[i + 1]);
        let height = |tau: f64| road.height_at(distance[i] + v0 * tau + 0.5 * (v1 - v0) * tau * tau / dt);
        for j in 0..ROAD_SUBSTEPS {
            let t0 = j as f64 * h;
            let (a0, am, a1) = (height(t0), height(t0 + 0.5 * h), height(t0 + h));
            x += v * h + h * h * (a0 / 6.0 + am / 3.0);
            v += h * (a0 + 4.0 * am + a1) / 6.0;
        }
        out.push(x);
    }
    out
}

/// Double integral from zero initial conditions using the fourth-order
/// cubic-interpolation rule on interior intervals.
fn double_integrate(accel: &[f64], dt: f64) -> Vec<f64> {
    let velocity = cumulative_integral(accel, dt);
    cumulative_integral(&velocity, dt)
}

fn cumulative_integral(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let area = if n < 4 {
            0.5 * (f[i] + f[i + 1])
        } else if i == 0 {
            (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]) / 24.0
        } else if i + 2 >= n {
            (f[i - 2] - 5.0 * f[i - 1] + 19.0 * f[i] + 9.0 * f[i + 1]) / 24.0
        } else {
            (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2]) / 24.0
        };
        out[i + 1] = out[i] + area * dt;
    }
    out
}

/// Removes the least-squares line through the samples (index as abscissa).
fn detrend(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, v) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (v - mean_y);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    for (i, v) in values.iter_mut().enumerate() {
        *v -= mean_y + slope * (i as f64 - mean_x);
    }
}
