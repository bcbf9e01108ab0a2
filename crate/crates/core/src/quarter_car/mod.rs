//! Quarter-car suspension model: simulation and parameter identification.
//!
//! State layout follows the classical two-mass model: body position and
//! velocity (`x1`, `x2`), wheel position and velocity (`x3`, `x4`). The
//! suspension deflection `s_d = x1 - x3` and deflection rate `s_v = x2 - x4`
//! are always derived from the state, never stored.
//!
//! ```text
//! x1' = x2
//! x2' = -(k_s s_d + b_s(s_v) - f) / m_b
//! x3' = x4
//! x4' = (k_s s_d + b_s(s_v) - k_t (x3 - r) - f) / m_w
//! ```
//!
//! Positions are measured from static equilibrium, so gravity does not appear.

mod identify;
mod road;
mod simulate;

pub use identify::{identify_parameters, IdentificationOptions, IdentifiedParameters};
pub use road::{generate_road, RoadInput, RoughnessClass};
pub use simulate::{
    simulate_run, simulate_run_with_force, RunTruth, SensorNoise, SensorStream, SimulatedRun,
    SimulationOptions,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest accepted integration step.
pub const MAX_DT: f64 = 0.01;

/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuarterCarParams {
    /// Sprung (body) mass m_b, kg.
    pub body_mass: f64,
    /// Unsprung (wheel assembly) mass m_w, kg.
    pub wheel_mass: f64,
    /// Suspension spring rate k_s, N/m.
    pub spring_rate: f64,
    /// Tire vertical stiffness k_t, N/m.
    pub tire_rate: f64,
    /// Linearized damping coefficient b_s, N·s/m.
    pub damping: f64,
    /// Actuator saturation, N. Commanded forces are clamped to ±this value.
    pub actuator_force_limit: f64,
}

impl Default for QuarterCarParams {
    fn default() -> Self {
        Self {
            body_mass: 400.0,
            wheel_mass: 50.0,
            spring_rate: 2.0e4,
            tire_rate: 2.0e5,
            damping: 1.5e3,
            actuator_force_limit: 5.0e3,
        }
    }
}

impl QuarterCarParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("body_mass", self.body_mass),
            ("wheel_mass", self.wheel_mass),
            ("spring_rate", self.spring_rate),
            ("tire_rate", self.tire_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(Error::invalid(format!(
                "damping must be non-negative, got {}",
                self.damping
            )));
        }
        if !(self.actuator_force_limit >= 0.0) {
            return Err(Error::invalid("actuator_force_limit must be non-negative"));
        }
        Ok(())
    }

    fn clamp_force(&self, force: f64) -> f64 {
        force.clamp(-self.actuator_force_limit, self.actuator_force_limit)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuarterCarState {
    pub body_position: f64,
    pub body_velocity: f64,
    pub wheel_position: f64,
    pub wheel_velocity: f64,
}

impl QuarterCarState {
    pub fn at_rest(height: f64) -> Self {
        Self {
            body_position: height,
            body_velocity: 0.0,
            wheel_position: height,
            wheel_velocity: 0.0,
        }
    }

    /// Shock displacement s_d = x1 - x3.
    pub fn suspension_deflection(&self) -> f64 {
        self.body_position - self.wheel_position
    }

    /// Shock velocity s_v = x2 - x4.
    pub fn suspension_velocity(&self) -> f64 {
        self.body_velocity - self.wheel_velocity
    }

    pub fn is_finite(&self) -> bool {
        self.body_position.is_finite()
            && self.body_velocity.is_finite()
            && self.wheel_position.is_finite()
            && self.wheel_velocity.is_finite()
    }

    /// Kinetic plus elastic energy relative to the road height `road`.
    pub fn energy(&self, params: &QuarterCarParams, road: f64) -> f64 {
        let sd = self.suspension_deflection();
        let tire = self.wheel_position - road;
        0.5 * params.body_mass * self.body_velocity.powi(2)
            + 0.5 * params.wheel_mass * self.wheel_velocity.powi(2)
            + 0.5 * params.spring_rate * sd * sd
            + 0.5 * params.tire_rate * tire * tire
    }

    fn axpy(&self, h: f64, d: &[f64; 4]) -> Self {
        Self {
            body_position: self.body_position + h * d[0],
            body_velocity: self.body_velocity + h * d[1],
            wheel_position: self.wheel_position + h * d[2],
            wheel_velocity: self.wheel_velocity + h * d[3],
        }
    }
}

/// Linear damper force `b_s · s_v`.
pub fn linear_damping(params: &QuarterCarParams) -> impl Fn(f64) -> f64 {
    let b = params.damping;
    move |sv| b * sv
}

/// Right-hand side of the model for a given damper curve.
pub fn derivatives(
    state: &QuarterCarState,
    params: &QuarterCarParams,
    damper: &impl Fn(f64) -> f64,
    road_height: f64,
    force: f64,
) -> [f64; 4] {
    let sd = state.suspension_deflection();
    let coupling = params.spring_rate * sd + damper(state.suspension_velocity());
    [
        state.body_velocity,
        -(coupling - force) / params.body_mass,
        state.wheel_velocity,
        (coupling - params.tire_rate * (state.wheel_position - road_height) - force)
            / params.wheel_mass,
    ]
}

/// Wheel acceleration x4' as the wheel accelerometer would report it.
pub fn wheel_acceleration(
    state: &QuarterCarState,
    params: &QuarterCarParams,
    road_height: f64,
    force: f64,
) -> f64 {
    derivatives(state, params, &linear_damping(params), road_height, force)[3]
}

/// Advances the state by one RK4 step with the road held at `road_height`
/// and linear damping.
pub fn step_dynamics(
    state: QuarterCarState,
    params: &QuarterCarParams,
    road_height: f64,
    force: f64,
    dt: f64,
) -> Result<QuarterCarState> {
    step_dynamics_with(state, params, &linear_damping(params), |_| road_height, force, dt)
}

/// RK4 step with a caller-supplied damper curve and a road height evaluated
/// at the stage offsets `0`, `dt/2` and `dt` within the step.
pub fn step_dynamics_with(
    state: QuarterCarState,
    params: &QuarterCarParams,
    damper: &impl Fn(f64) -> f64,
    road_at: impl Fn(f64) -> f64,
    force: f64,
    dt: f64,
) -> Result<QuarterCarState> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::invalid(format!("dt must be in (0, {MAX_DT}], got {dt}")));
    }
    if !state.is_finite() || !force.is_finite() {
        return Err(Error::invalid("non-finite state or force"));
    }
    let force = params.clamp_force(force);
    let r0 = road_at(0.0);
    let rm = road_at(0.5 * dt);
    let r1 = road_at(dt);
    if !(r0.is_finite() && rm.is_finite() && r1.is_finite()) {
        return Err(Error::invalid("non-finite road height"));
    }

    let k1 = derivatives(&state, params, damper, r0, force);
    let k2 = derivatives(&state.axpy(0.5 * dt, &k1), params, damper, rm, force);
    let k3 = derivatives(&state.axpy(0.5 * dt, &k2), params, damper, rm, force);
    let k4 = derivatives(&state.axpy(dt, &k3), params, damper, r1, force);
    let mut incr = [0.0; 4];
    for i in 0..4 {
        incr[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    let next = state.axpy(dt, &incr);
    if !next.is_finite() {
        return Err(Error::NumericalBlowUp { time: dt });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> QuarterCarParams {
        QuarterCarParams::default()
    }

    #[test]
    fn equilibrium_stays_put() {
        let s = step_dynamics(QuarterCarState::default(), &params(), 0.0, 0.0, 1e-3).unwrap();
        assert_eq!(s, QuarterCarState::default());
    }

    #[test]
    fn rejects_bad_step() {
        let s = QuarterCarState::default();
        assert!(step_dynamics(s, &params(), 0.0, 0.0, 0.0).is_err());
        assert!(step_dynamics(s, &params(), 0.0, 0.0, 0.02).is_err());
        assert!(step_dynamics(s, &params(), f64::NAN, 0.0, 1e-3).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        let stiff = QuarterCarParams {
            tire_rate: 1e12,
            ..params()
        };
        let mut s = QuarterCarState {
            wheel_position: 0.01,
            ..Default::default()
        };
        let mut err = None;
        for _ in 0..10_000 {
            match step_dynamics(s, &stiff, 0.0, 0.0, 0.01) {
                Ok(n) => s = n,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        assert!(matches!(err, Some(Error::NumericalBlowUp { .. })));
    }

    #[test]
    fn step_road_is_tracked() {
        let h = 0.05;
        let mut s = QuarterCarState::default();
        for _ in 0..20_000 {
            s = step_dynamics(s, &params(), h, 0.0, 1e-3).unwrap();
        }
        assert!((s.body_position - h).abs() < 1e-6);
        assert!((s.wheel_position - h).abs() < 1e-6);
        assert!(s.body_velocity.abs() < 1e-6 && s.wheel_velocity.abs() < 1e-6);
    }

    #[test]
    fn energy_does_not_grow_after_excitation() {
        let p = params();
        let mut s = QuarterCarState {
            body_position: 0.03,
            wheel_position: -0.01,
            wheel_velocity: 0.2,
            ..Default::default()
        };
        let mut e = s.energy(&p, 0.0);
        for _ in 0..5000 {
            s = step_dynamics(s, &p, 0.0, 0.0, 1e-3).unwrap();
            let next = s.energy(&p, 0.0);
            assert!(next <= e * (1.0 + 1e-6), "{next} > {e}");
            e = next;
        }
    }

    #[test]
    fn force_is_saturated() {
        let p = QuarterCarParams {
            actuator_force_limit: 100.0,
            ..params()
        };
        let a = step_dynamics(QuarterCarState::default(), &p, 0.0, 1e6, 1e-3).unwrap();
        let b = step_dynamics(QuarterCarState::default(), &p, 0.0, 100.0, 1e-3).unwrap();
        assert_eq!(a, b);
    }
}
