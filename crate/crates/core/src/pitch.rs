//! Chassis pitch from corner road profiles, and distance derivatives.

use serde::{Deserialize, Serialize};

use crate::resample::{DistanceProfile, Units};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    /// Distance between front and rear axles, m.
    pub wheelbase: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self { wheelbase: 2.968 }
    }
}

impl VehicleGeometry {
    pub fn new(wheelbase: f64) -> Result<Self> {
        if !(wheelbase.is_finite() && wheelbase > 0.0) {
            return Err(Error::invalid(format!("wheelbase must be positive, got {wheelbase}")));
        }
        Ok(Self { wheelbase })
    }
}

/// Road profiles under the four wheels, all on the same odometer grid.
///
/// Cell `k` of every corner was recorded at the same vehicle position, so the
/// rear corners see the road one wheelbase behind the front corners.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerProfiles {
    pub front_left: DistanceProfile,
    pub front_right: DistanceProfile,
    pub rear_left: DistanceProfile,
    pub rear_right: DistanceProfile,
}

impl CornerProfiles {
    pub fn new(
        front_left: DistanceProfile,
        front_right: DistanceProfile,
        rear_left: DistanceProfile,
        rear_right: DistanceProfile,
    ) -> Result<Self> {
        let corners = Self {
            front_left,
            front_right,
            rear_left,
            rear_right,
        };
        corners.check_aligned()?;
        Ok(corners)
    }

    /// Crops four independently converted corners to their common extent.
    pub fn aligned(
        front_left: DistanceProfile,
        front_right: DistanceProfile,
        rear_left: DistanceProfile,
        rear_right: DistanceProfile,
    ) -> Result<Self> {
        let all = [&front_left, &front_right, &rear_left, &rear_right];
        let spacing = front_left.spacing;
        if all.iter().any(|p| p.spacing != spacing) {
            return Err(Error::Misaligned("corner spacings differ".into()));
        }
        let start = all.iter().map(|p| p.start_offset).fold(f64::MIN, f64::max);
        let end = all.iter().map(|p| p.end_offset()).fold(f64::MAX, f64::min);
        if end - start < 2.0 * spacing {
            return Err(Error::Misaligned("corners do not overlap".into()));
        }
        let count = ((end - start) / spacing + 1e-6).floor() as usize;
        let crop = |p: &DistanceProfile| -> Result<DistanceProfile> {
            let shift = (start - p.start_offset) / spacing;
            if (shift - shift.round()).abs() > 1e-6 {
                return Err(Error::Misaligned("corner grids are out of phase".into()));
            }
            Ok(p.crop_cells(shift.round() as usize, count))
        };
        Self::new(
            crop(&front_left)?,
            crop(&front_right)?,
            crop(&rear_left)?,
            crop(&rear_right)?,
        )
    }

    fn check_aligned(&self) -> Result<()> {
        let reference = &self.front_left;
        for (name, p) in [
            ("front_right", &self.front_right),
            ("rear_left", &self.rear_left),
            ("rear_right", &self.rear_right),
        ] {
            if p.spacing != reference.spacing {
                return Err(Error::Misaligned(format!("{name} spacing differs")));
            }
            if p.len() != reference.len() {
                return Err(Error::Misaligned(format!(
                    "{name} has {} cells, front_left has {}",
                    p.len(),
                    reference.len()
                )));
            }
            if (p.start_offset - reference.start_offset).abs() > 1e-6 * reference.spacing {
                return Err(Error::Misaligned(format!("{name} start offset differs")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.front_left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.front_left.is_empty()
    }

    /// Mean of the two front corners: the road height at the front axle.
    pub fn front_axle_height(&self) -> DistanceProfile {
        let values = self
            .front_left
            .values
            .iter()
            .zip(&self.front_right.values)
            .map(|(l, r)| 0.5 * (l + r))
            .collect();
        DistanceProfile {
            values,
            ..self.front_left.clone()
        }
    }
}

/// `atan((fl + fr - rl - rr) / (2 l_b))` for one set of corner heights.
#[inline]
pub fn pitch_angle(fl: f64, fr: f64, rl: f64, rr: f64, wheelbase: f64) -> f64 {
    // Grouped so that swapping the axles negates the result exactly.
    (((fl + fr) - (rl + rr)) / (2.0 * wheelbase)).atan()
}

/// Element-wise chassis pitch of aligned corner profiles.
pub fn compute_pitch_profile(
    corners: &CornerProfiles,
    geometry: &VehicleGeometry,
) -> Result<DistanceProfile> {
    corners.check_aligned()?;
    let lb = geometry.wheelbase;
    let values = (0..corners.len())
        .map(|k| {
            pitch_angle(
                corners.front_left.values[k],
                corners.front_right.values[k],
                corners.rear_left.values[k],
                corners.rear_right.values[k],
                lb,
            )
        })
        .collect();
    DistanceProfile::new(
        corners.front_left.start_offset,
        corners.front_left.spacing,
        values,
        Units::Radians,
    )
}

/// Pitch a vehicle with this wheelbase would see driving over a stored
/// height profile.
///
/// Both front corners take the height at the cell, both rear corners the
/// height one wheelbase earlier (linear interpolation between cells). The
/// output starts at the first cell with a full wheelbase of history.
pub fn pitch_from_heights(
    heights: &DistanceProfile,
    geometry: &VehicleGeometry,
) -> Result<DistanceProfile> {
    let lag = geometry.wheelbase / heights.spacing;
    let first = wheelbase_cells(geometry, heights.spacing);
    if heights.len() <= first + 1 {
        return Err(Error::EmptyProfile(format!(
            "{} cells do not cover a {} m wheelbase",
            heights.len(),
            geometry.wheelbase
        )));
    }
    let values = (first..heights.len())
        .map(|k| {
            let front = heights.values[k];
            let rear = interpolate(&heights.values, k as f64 - lag);
            pitch_angle(front, front, rear, rear, geometry.wheelbase)
        })
        .collect();
    DistanceProfile::new(heights.position(first), heights.spacing, values, Units::Radians)
}

/// Number of leading cells [`pitch_from_heights`] drops.
pub fn wheelbase_cells(geometry: &VehicleGeometry, spacing: f64) -> usize {
    (geometry.wheelbase / spacing - 1e-9).ceil() as usize
}

fn interpolate(values: &[f64], x: f64) -> f64 {
    let i = (x.floor().max(0.0) as usize).min(values.len() - 2);
    let frac = x - i as f64;
    values[i] + frac * (values[i + 1] - values[i])
}

/// Central-difference distance derivative. Order 2 applies the first
/// derivative twice; each application drops one cell at each end.
pub fn differentiate_profile(profile: &DistanceProfile, order: usize) -> Result<DistanceProfile> {
    if !(1..=2).contains(&order) {
        return Err(Error::invalid(format!("derivative order must be 1 or 2, got {order}")));
    }
    if profile.len() <= 2 * order {
        return Err(Error::EmptyProfile(format!(
            "{} cells too short for order-{order} derivative",
            profile.len()
        )));
    }
    let mut current = profile.clone();
    for _ in 0..order {
        current = central_difference(&current);
    }
    Ok(current)
}

fn central_difference(p: &DistanceProfile) -> DistanceProfile {
    let inv = 1.0 / (2.0 * p.spacing);
    let values = p.values.windows(3).map(|w| (w[2] - w[0]) * inv).collect();
    DistanceProfile {
        start_offset: p.start_offset + p.spacing,
        spacing: p.spacing,
        values,
        units: p.units.derivative(),
    }
}

/// Twice-differentiated pitch of corner profiles: the matching signal.
pub fn matching_signal(
    corners: &CornerProfiles,
    geometry: &VehicleGeometry,
) -> Result<DistanceProfile> {
    differentiate_profile(&compute_pitch_profile(corners, geometry)?, 2)
}
