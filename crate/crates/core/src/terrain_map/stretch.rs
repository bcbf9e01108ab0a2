//! GPS traces and ~100 m stretches cut from a live height profile.

use std::fmt::Write as _;
use std::path::Path;

use super::graph::{GpsPoint, GraphMap};
use crate::resample::DistanceProfile;
use crate::textio::{data_lines, parse_row, read_to_string};
use crate::{Error, Result};

/// Nominal stretch length, m.
pub const STRETCH_LENGTH: f64 = 100.0;

/// Trailing pieces shorter than this are dropped, m.
pub const MIN_STRETCH_LENGTH: f64 = 50.0;

/// A GPS fix tagged with the odometer distance at which it was taken.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub distance: f64,
    pub point: GpsPoint,
}

pub fn trace_to_text(trace: &[TracePoint]) -> String {
    let mut out = String::with_capacity(trace.len() * 48);
    out.push_str("distance,lat,lon\n");
    for p in trace {
        let _ = writeln!(out, "{},{},{}", p.distance, p.point.lat, p.point.lon);
    }
    out
}

pub fn trace_from_text(path: &Path, text: &str) -> Result<Vec<TracePoint>> {
    let mut trace = Vec::new();
    for (ln, line) in data_lines(text) {
        if line.starts_with("distance") {
            continue;
        }
        let row = parse_row(path, ln, line, 3)?;
        trace.push(TracePoint {
            distance: row[0],
            point: GpsPoint::new(row[1], row[2])?,
        });
    }
    check_trace(&trace)?;
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<Vec<TracePoint>> {
    let (p, text) = read_to_string(path)?;
    trace_from_text(&p, &text)
}

fn check_trace(trace: &[TracePoint]) -> Result<()> {
    if trace.is_empty() {
        return Err(Error::invalid("empty GPS trace"));
    }
    if trace.windows(2).any(|w| !(w[1].distance > w[0].distance)) {
        return Err(Error::invalid("GPS trace distances must be strictly increasing"));
    }
    Ok(())
}

/// GPS position at odometer `distance`, linearly interpolated between fixes.
pub fn interpolate_trace(trace: &[TracePoint], distance: f64) -> Result<GpsPoint> {
    check_trace(trace)?;
    let (first, last) = (&trace[0], &trace[trace.len() - 1]);
    if distance < first.distance || distance > last.distance {
        return Err(Error::OutOfRange(format!(
            "distance {distance:.2} m outside GPS trace [{:.2}, {:.2}] m",
            first.distance, last.distance
        )));
    }
    let i = trace.partition_point(|p| p.distance <= distance).clamp(1, trace.len() - 1);
    let (a, b) = (&trace[i - 1], &trace[i]);
    let t = (distance - a.distance) / (b.distance - a.distance);
    Ok(GpsPoint {
        lat: a.point.lat + t * (b.point.lat - a.point.lat),
        lon: a.point.lon + t * (b.point.lon - a.point.lon),
        noise_std: a.point.noise_std,
    })
}

/// Replaces every fix by a map-matched estimate: each fix is projected onto
/// the route, and the along-route offset between projection and odometer is
/// smoothed with a running median over `± half_window` meters of odometer.
/// Fixes that do not project are ignored.
pub fn snap_trace(
    trace: &[TracePoint],
    graph: &GraphMap,
    half_window: f64,
) -> Result<Vec<TracePoint>> {
    check_trace(trace)?;
    let mut offsets: Vec<(f64, f64)> = Vec::with_capacity(trace.len());
    let mut reference: Option<f64> = None;
    let mut last_err = None;
    for p in trace {
        match graph.project_gps(&p.point) {
            Ok(proj) => {
                let raw = proj.route_position - p.distance;
                let r = *reference.get_or_insert(raw);
                // Unwrap against the first fix so offsets compare across the seam.
                offsets.push((p.distance, r + graph.route_difference(raw, r)));
            }
            Err(e) => {
                log::debug!("GPS fix at {:.1} m ignored: {e}", p.distance);
                last_err = Some(e);
            }
        }
    }
    if offsets.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::invalid("empty GPS trace")));
    }

    let mut lo = 0;
    let mut hi = 0;
    let mut window: Vec<f64> = Vec::new();
    let mut out = Vec::with_capacity(trace.len());
    for p in trace {
        while lo < offsets.len() && offsets[lo].0 < p.distance - half_window {
            lo += 1;
        }
        while hi < offsets.len() && offsets[hi].0 <= p.distance + half_window {
            hi += 1;
        }
        let (a, b) = if lo < hi { (lo, hi) } else { nearest(&offsets, p.distance) };
        window.clear();
        window.extend(offsets[a..b].iter().map(|o| o.1));
        window.sort_by(|x, y| x.total_cmp(y));
        let m = window.len();
        let median = if m % 2 == 1 {
            window[m / 2]
        } else {
            0.5 * (window[m / 2 - 1] + window[m / 2])
        };
        let mut point = graph.gps_at(p.distance + median);
        point.noise_std = p.point.noise_std;
        out.push(TracePoint {
            distance: p.distance,
            point,
        });
    }
    Ok(out)
}

fn nearest(offsets: &[(f64, f64)], d: f64) -> (usize, usize) {
    let i = offsets
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 .0 - d).abs().total_cmp(&(b.1 .0 - d).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (i, i + 1)
}

/// A ~100 m piece of live height profile with GPS fixes at its first cell,
/// its middle, and its last cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Stretch {
    pub profile: DistanceProfile,
    pub start_gps: GpsPoint,
    pub center_gps: GpsPoint,
    pub end_gps: GpsPoint,
    pub source: u32,
}

impl Stretch {
    pub fn len(&self) -> usize {
        self.profile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profile.is_empty()
    }

    /// Odometer distance between the first cell and the center fix.
    pub fn center_offset(&self) -> f64 {
        0.5 * (self.profile.len().saturating_sub(1)) as f64 * self.profile.spacing
    }
}

/// Cuts `live` into consecutive non-overlapping 100 m stretches. A trailing
/// remainder of at least 50 m becomes a final, shorter stretch; anything
/// shorter is dropped.
pub fn extract_stretches(
    live: &DistanceProfile,
    gps_trace: &[TracePoint],
    source: u32,
) -> Result<Vec<Stretch>> {
    let per = (STRETCH_LENGTH / live.spacing).round() as usize;
    let min = (MIN_STRETCH_LENGTH / live.spacing).round() as usize;
    let mut stretches = Vec::with_capacity(live.len() / per + 1);
    let mut first = 0;
    while first < live.len() {
        let count = per.min(live.len() - first);
        if count < min {
            log::info!(
                "dropping {:.1} m trailing piece of run {source}",
                count as f64 * live.spacing
            );
            break;
        }
        let profile = live.crop_cells(first, count);
        let start = profile.start_offset;
        let end = profile.position(count - 1);
        stretches.push(Stretch {
            start_gps: interpolate_trace(gps_trace, start)?,
            center_gps: interpolate_trace(gps_trace, 0.5 * (start + end))?,
            end_gps: interpolate_trace(gps_trace, end)?,
            profile,
            source,
        });
        first += count;
    }
    Ok(stretches)
}
