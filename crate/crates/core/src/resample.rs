//! Uniform distance-domain profiles and the time-to-distance conversion.

use std::fmt;
use std::path::Path;

use crate::reconstruction::TimeProfile;
use crate::textio::{data_lines, parse_error, read_to_string};
use crate::{Error, Result};

/// Default map resolution, m.
pub const DEFAULT_SPACING: f64 = 0.1;

/// Physical quantity held by a [`DistanceProfile`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Units {
    /// Road height.
    #[default]
    Meters,
    /// Pitch angle.
    Radians,
    /// First distance derivative of pitch.
    RadPerMeter,
    /// Second distance derivative of pitch.
    RadPerMeter2,
}

impl Units {
    pub fn tag(self) -> &'static str {
        match self {
            Units::Meters => "m",
            Units::Radians => "rad",
            Units::RadPerMeter => "rad_per_m",
            Units::RadPerMeter2 => "rad_per_m2",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "m" => Some(Units::Meters),
            "rad" => Some(Units::Radians),
            "rad_per_m" => Some(Units::RadPerMeter),
            "rad_per_m2" => Some(Units::RadPerMeter2),
            _ => None,
        }
    }

    /// Units after one distance derivative.
    pub fn derivative(self) -> Self {
        match self {
            Units::Radians => Units::RadPerMeter,
            Units::RadPerMeter | Units::RadPerMeter2 => Units::RadPerMeter2,
            Units::Meters => Units::Meters,
        }
    }
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Values sampled every `spacing` meters, the first at `start_offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceProfile {
    pub start_offset: f64,
    pub spacing: f64,
    pub values: Vec<f64>,
    pub units: Units,
}

impl DistanceProfile {
    pub fn new(start_offset: f64, spacing: f64, values: Vec<f64>, units: Units) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
        }
        if !start_offset.is_finite() {
            return Err(Error::invalid("start_offset must be finite"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("profile values must be finite"));
        }
        Ok(Self {
            start_offset,
            spacing,
            values,
            units,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Extent covered by the cells, `len * spacing`.
    pub fn length(&self) -> f64 {
        self.values.len() as f64 * self.spacing
    }

    /// Position of cell `i`.
    pub fn position(&self, i: usize) -> f64 {
        self.start_offset + i as f64 * self.spacing
    }

    /// Position just past the last cell.
    pub fn end_offset(&self) -> f64 {
        self.position(self.values.len())
    }

    /// Sub-profile of `length` meters beginning `start` meters after the
    /// first cell, both snapped to the grid. No resampling takes place.
    pub fn crop(&self, start: f64, length: f64) -> Result<Self> {
        let first = (start / self.spacing).round();
        let count = (length / self.spacing).round();
        if !(first >= 0.0 && count >= 0.0) || first + count > self.values.len() as f64 {
            return Err(Error::OutOfRange(format!(
                "crop [{start}, {}) outside profile of {} m",
                start + length,
                self.length()
            )));
        }
        let (first, count) = (first as usize, count as usize);
        Ok(self.crop_cells(first, count))
    }

    /// Sub-profile of `count` cells starting at cell `first`.
    ///
    /// Panics if the range is out of bounds.
    pub fn crop_cells(&self, first: usize, count: usize) -> Self {
        Self {
            start_offset: self.position(first),
            spacing: self.spacing,
            values: self.values[first..first + count].to_vec(),
            units: self.units,
        }
    }

    /// Header `start_offset,spacing,count,units` followed by one value per
    /// line. Values use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 + self.values.len() * 22);
        out.push_str(&format!(
            "{},{},{},{}\n",
            self.start_offset,
            self.spacing,
            self.values.len(),
            self.units
        ));
        for v in &self.values {
            out.push_str(&format!("{v}\n"));
        }
        out
    }

    pub fn from_text(path: &Path, text: &str) -> Result<Self> {
        let mut lines = data_lines(text);
        let (hl, header) = lines
            .next()
            .ok_or_else(|| parse_error(path, 0, "empty profile file"))?;
        let fields: Vec<&str> = header.split(',').map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_error(path, hl, "expected `start_offset,spacing,count[,units]`"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| parse_error(path, hl, format!("`{s}`: {e}")))
        };
        let start_offset = num(fields[0])?;
        let spacing = num(fields[1])?;
        let count: usize = fields[2]
            .parse()
            .map_err(|e| parse_error(path, hl, format!("count: {e}")))?;
        let units = match fields.get(3) {
            Some(tag) => Units::from_tag(tag)
                .ok_or_else(|| parse_error(path, hl, format!("unknown units `{tag}`")))?,
            None => Units::Meters,
        };
        let mut values = Vec::with_capacity(count);
        for (ln, line) in lines {
            values.push(
                line.parse::<f64>()
                    .map_err(|e| parse_error(path, ln, format!("`{line}`: {e}")))?,
            );
        }
        if values.len() != count {
            return Err(parse_error(
                path,
                0,
                format!("header declares {count} values, found {}", values.len()),
            ));
        }
        Self::new(start_offset, spacing, values, units)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (p, text) = read_to_string(path)?;
        Self::from_text(&p, &text)
    }
}

/// Converts a time-indexed profile to a distance grid starting at the onset
/// of motion.
///
/// Distance accumulates as the trapezoidal integral of speed between
/// consecutive moving records; records with `v <= 0` are skipped entirely.
/// Each grid point `d_map` falling in `(d_old, d_new]` is emitted as the
/// linear interpolation between the bracketing records, and the loop keeps
/// emitting while further grid points fit in the same interval, so a large
/// per-record advance never skips cells.
pub fn convert_time_to_distance(profile: &TimeProfile, spacing: f64) -> Result<DistanceProfile> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
    }
    if profile.speed.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("speeds must be finite and non-negative"));
    }
    let tolerance = 1e-9 * spacing;
    let mut values = Vec::new();
    // (t, v, r) of the last moving record.
    let mut last: Option<(f64, f64, f64)> = None;
    let mut d_new = 0.0;
    let mut next_cell: u64 = 0;

    for i in 0..profile.len() {
        let (t, v, r) = (profile.time[i], profile.speed[i], profile.height[i]);
        if !(v > 0.0) {
            continue;
        }
        let Some((t_old, v_old, r_old)) = last else {
            // Motion starts here: the first grid point sits on this record.
            values.push(r);
            next_cell = 1;
            last = Some((t, v, r));
            continue;
        };
        let d_old = d_new;
        d_new += 0.5 * (v_old + v) * (t - t_old);
        loop {
            let d_map = next_cell as f64 * spacing;
            if d_map > d_new + tolerance || d_new <= d_old {
                break;
            }
            values.push((r - r_old) * (d_map - d_old) / (d_new - d_old) + r_old);
            next_cell += 1;
        }
        last = Some((t, v, r));
    }

    if values.len() < 2 {
        return Err(Error::EmptyProfile(format!(
            "travelled {d_new:.3} m, less than one grid step of {spacing} m"
        )));
    }
    DistanceProfile::new(0.0, spacing, values, Units::Meters)
}
