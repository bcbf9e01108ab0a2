//! Real-time longitudinal localization against the master map.
//!
//! The localizer keeps a trailing buffer of the most recent corner heights.
//! Every `update_stride` meters it turns the buffer into a
//! twice-differentiated pitch snippet and correlates it against a window of
//! the master pitch signal around the current estimate. A clear peak fixes
//! the position of the buffer tail (the vehicle); otherwise the estimate
//! advances by odometry alone. After a coarse fix, the newest part of the
//! buffer is matched again inside a small window to refine it.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::matching::{Correlator, CorrelationResult, DEFAULT_EXCLUSION_HALFWIDTH};
use crate::pitch::{differentiate_profile, pitch_angle, CornerProfiles, VehicleGeometry};
use crate::resample::{DistanceProfile, Units};
use crate::terrain_map::{masked_matching_signal, matching_signal_lead, TerrainMap};
use crate::textio::{data_lines, parse_error, read_to_string};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizerConfig {
    /// m.
    pub buffer_length: f64,
    /// Master window searched around the estimate, m.
    pub window_length: f64,
    /// Newest part of the buffer used for refinement, m.
    pub subbuffer_length: f64,
    /// Window around the coarse fix searched during refinement, m.
    pub subwindow_length: f64,
    pub ratio_threshold: f64,
    /// Travel between localization updates, m.
    pub update_stride: f64,
    pub exclusion_halfwidth: usize,
    /// Dead-reckoning distance after which the status becomes [`Status::Lost`], m.
    pub lost_after: f64,
    /// Window enlargement until the first fix.
    pub initial_window_factor: f64,
    /// Windows with a larger uninitialized share force dead reckoning.
    pub max_uninitialized: f64,
    pub refine: bool,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            buffer_length: 100.0,
            window_length: 1000.0,
            subbuffer_length: 30.0,
            subwindow_length: 100.0,
            ratio_threshold: 0.6,
            update_stride: 1.0,
            exclusion_halfwidth: DEFAULT_EXCLUSION_HALFWIDTH,
            lost_after: 500.0,
            initial_window_factor: 3.0,
            max_uninitialized: 0.5,
            refine: true,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.buffer_length,
            self.window_length,
            self.subbuffer_length,
            self.subwindow_length,
            self.update_stride,
            self.lost_after,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("localizer lengths must be positive"));
        }
        if !(self.subbuffer_length < self.buffer_length && self.buffer_length < self.window_length) {
            return Err(Error::invalid(
                "localizer needs subbuffer_length < buffer_length < window_length",
            ));
        }
        if !(self.subbuffer_length < self.subwindow_length) {
            return Err(Error::invalid("subbuffer_length must be below subwindow_length"));
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold < 1.0) {
            return Err(Error::invalid("ratio_threshold must lie in (0, 1)"));
        }
        if !(self.initial_window_factor >= 1.0) {
            return Err(Error::invalid("initial_window_factor must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_uninitialized) {
            return Err(Error::invalid("max_uninitialized must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Matched,
    DeadReckoning,
    /// Dead reckoning for longer than `lost_after`.
    Lost,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Matched => "MATCHED",
            Status::DeadReckoning => "DEAD_RECKONING",
            Status::Lost => "LOST",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "MATCHED" => Some(Status::Matched),
            "DEAD_RECKONING" => Some(Status::DeadReckoning),
            "LOST" => Some(Status::Lost),
            _ => None,
        }
    }
}

/// Road heights under the four wheels at one odometer cell.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CornerCell {
    pub front_left: f64,
    pub front_right: f64,
    pub rear_left: f64,
    pub rear_right: f64,
}

impl CornerCell {
    /// Cells `first .. first + count` of aligned corner profiles.
    pub fn from_profiles(corners: &CornerProfiles, first: usize, count: usize) -> Vec<Self> {
        (first..first + count)
            .map(|k| CornerCell {
                front_left: corners.front_left.values[k],
                front_right: corners.front_right.values[k],
                rear_left: corners.rear_left.values[k],
                rear_right: corners.rear_right.values[k],
            })
            .collect()
    }
}

/// One localization output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    /// Odometer distance of the vehicle, m.
    pub travel_distance: f64,
    /// Unwrapped route position, m.
    pub position: f64,
    pub status: Status,
    /// Peak ratio of the coarse correlation, when one ran.
    pub ratio: Option<f64>,
}

/// Twice-differentiated master pitch for every route cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MasterPitch {
    spacing: f64,
    closed: bool,
    values: Vec<f64>,
    valid: Vec<bool>,
    positions: Vec<f64>,
}

impl MasterPitch {
    pub fn from_map(map: &TerrainMap, geometry: &VehicleGeometry) -> Result<Self> {
        let master = &map.master;
        let spacing = master.spacing();
        let n = master.cell_count();
        let lead = matching_signal_lead(geometry, spacing);
        let (heights, weights) = master.extract(-(lead as i64), n + lead + 2);
        let (values, valid) = masked_matching_signal(&heights, &weights, spacing, geometry)?;
        debug_assert_eq!(values.len(), n);
        let positions = (0..n).map(|c| master.cell_position(c)).collect();
        Ok(Self {
            spacing,
            closed: master.is_closed(),
            values,
            valid,
            positions,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn route_length(&self) -> f64 {
        self.values.len() as f64 * self.spacing
    }

    fn wrap(&self, c: i64) -> Option<usize> {
        let n = self.values.len() as i64;
        if self.closed {
            Some(c.rem_euclid(n) as usize)
        } else {
            (0..n).contains(&c).then_some(c as usize)
        }
    }

    /// Signal over `count` cells from unwrapped cell `first`, and the share
    /// of those cells without valid master data.
    pub fn window(&self, first: i64, count: usize) -> (Vec<f64>, f64) {
        let mut out = Vec::with_capacity(count);
        let mut invalid = 0;
        for c in first..first + count as i64 {
            match self.wrap(c) {
                Some(g) if self.valid[g] => out.push(self.values[g]),
                _ => {
                    out.push(0.0);
                    invalid += 1;
                }
            }
        }
        (out, invalid as f64 / count.max(1) as f64)
    }

    /// Route position of unwrapped cell `c`, placed on the lap nearest to
    /// `near` for closed routes.
    fn position_near(&self, c: i64, near: f64) -> f64 {
        let g = self.wrap(c).unwrap_or(0);
        let p = self.positions[g];
        if self.closed {
            let l = self.route_length();
            near + ((p - near) + 0.5 * l).rem_euclid(l) - 0.5 * l
        } else {
            p
        }
    }

    /// Clamps a window start so the window stays on an open route.
    fn clamp_window(&self, first: i64, count: usize) -> (i64, usize) {
        let n = self.values.len();
        if self.closed {
            (first, count.min(n))
        } else {
            let count = count.min(n);
            (first.clamp(0, (n - count) as i64), count)
        }
    }
}

/// Correlation trace captured at one update, for plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub travel_distance: f64,
    /// Unwrapped master cell of window lag 0.
    pub window_first_cell: i64,
    pub correlation: Vec<f64>,
    pub peak: CorrelationResult,
}

pub struct Localizer {
    config: LocalizerConfig,
    geometry: VehicleGeometry,
    spacing: f64,
    capacity: usize,
    buffer: VecDeque<CornerCell>,
    /// Odometer of the newest buffered cell.
    tail: Option<f64>,
    estimate: f64,
    estimate_distance: Option<f64>,
    last_fix_distance: Option<f64>,
    status: Status,
    matched_once: bool,
    correlator: Correlator,
    last_snapshot: Option<Snapshot>,
}

impl std::fmt::Debug for Localizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Localizer")
            .field("estimate", &self.estimate)
            .field("status", &self.status)
            .field("buffered", &self.buffer.len())
            .finish()
    }
}

impl Localizer {
    /// Starts in dead reckoning at the a-priori route position `initial`.
    pub fn new(
        config: LocalizerConfig,
        geometry: VehicleGeometry,
        spacing: f64,
        initial: f64,
    ) -> Result<Self> {
        config.validate()?;
        if !(spacing.is_finite() && spacing > 0.0) || !initial.is_finite() {
            return Err(Error::invalid("spacing must be positive and the initial position finite"));
        }
        let capacity = (config.buffer_length / spacing).round() as usize;
        let sub = (config.subbuffer_length / spacing).round() as usize;
        let lead = matching_signal_lead(&geometry, spacing);
        if sub < 8 || capacity <= lead + 8 {
            return Err(Error::invalid("buffer too short for the pitch signal"));
        }
        Ok(Self {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
            tail: None,
            estimate: initial,
            estimate_distance: None,
            last_fix_distance: None,
            status: Status::DeadReckoning,
            matched_once: false,
            correlator: Correlator::new(),
            last_snapshot: None,
            config,
            geometry,
            spacing,
        })
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.config
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_buffer_full(&self) -> bool {
        self.buffer.len() == self.capacity
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Odometer of the newest buffered cell.
    pub fn odometer(&self) -> Option<f64> {
        self.tail
    }

    /// Buffered front-left heights as a profile, oldest first.
    pub fn buffer_profile(&self) -> Option<DistanceProfile> {
        let tail = self.tail?;
        let values: Vec<f64> = self.buffer.iter().map(|c| c.front_left).collect();
        let start = tail - (values.len() as f64 - 1.0) * self.spacing;
        Some(DistanceProfile {
            start_offset: start,
            spacing: self.spacing,
            values,
            units: Units::Meters,
        })
    }

    pub fn last_snapshot(&self) -> Option<&Snapshot> {
        self.last_snapshot.as_ref()
    }

    /// Appends cells whose first one lies at odometer `first_distance`.
    ///
    /// Cells must continue the buffer at one spacing past its tail. A gap
    /// (or overlap) empties the buffer and drops to dead reckoning; the new
    /// cells then start a fresh buffer.
    pub fn update_buffer(&mut self, first_distance: f64, cells: &[CornerCell]) {
        if cells.is_empty() {
            return;
        }
        if let Some(tail) = self.tail {
            let expected = tail + self.spacing;
            if (first_distance - expected).abs() > 1e-3 * self.spacing {
                log::warn!(
                    "odometer gap: expected cell at {expected:.3} m, got {first_distance:.3} m; buffer reset"
                );
                self.buffer.clear();
                self.status = Status::DeadReckoning;
            }
        }
        for c in cells {
            if self.buffer.len() == self.capacity {
                self.buffer.pop_front();
            }
            self.buffer.push_back(*c);
        }
        self.tail = Some(first_distance + (cells.len() - 1) as f64 * self.spacing);
    }

    /// Runs one update with matching enabled.
    pub fn localize_step(&mut self, master: &MasterPitch) -> Result<Estimate> {
        self.step(master, true)
    }

    /// Runs one update. With `matching` off the estimate advances by
    /// odometry only.
    pub fn step(&mut self, master: &MasterPitch, matching: bool) -> Result<Estimate> {
        let odometer = self
            .tail
            .ok_or_else(|| Error::invalid("localize_step before any cells were buffered"))?;
        if (master.spacing - self.spacing).abs() > 1e-9 * self.spacing {
            return Err(Error::invalid(format!(
                "map spacing {} differs from live spacing {}",
                master.spacing, self.spacing
            )));
        }
        let reckoned = match self.estimate_distance {
            Some(d) => self.estimate + (odometer - d),
            None => self.estimate,
        };
        self.last_fix_distance.get_or_insert(odometer);

        let fix = if matching && self.is_buffer_full() {
            self.try_match(master, reckoned)?
        } else {
            None
        };
        let (position, status, ratio) = match fix {
            Some((position, ratio)) => {
                self.matched_once = true;
                self.last_fix_distance = Some(odometer);
                (position, Status::Matched, Some(ratio))
            }
            None => {
                let since = odometer - self.last_fix_distance.unwrap_or(odometer);
                let status = if since > self.config.lost_after {
                    Status::Lost
                } else {
                    Status::DeadReckoning
                };
                let ratio = self.last_snapshot.as_ref().and_then(|s| {
                    (s.travel_distance == odometer).then_some(s.peak.ratio).flatten()
                });
                (reckoned, status, ratio)
            }
        };
        self.estimate = position;
        self.estimate_distance = Some(odometer);
        self.status = status;
        Ok(Estimate {
            travel_distance: odometer,
            position,
            status,
            ratio,
        })
    }

    /// Coarse match plus optional refinement; `None` when no clear peak.
    fn try_match(&mut self, master: &MasterPitch, reckoned: f64) -> Result<Option<(f64, f64)>> {
        let odometer = self.tail.expect("buffer non-empty");
        let factor = if self.matched_once {
            1.0
        } else {
            self.config.initial_window_factor
        };
        let count = (self.config.window_length * factor / self.spacing).round() as usize;
        let center = (reckoned / self.spacing).round() as i64;
        let (first, count) = master.clamp_window(center - (count / 2) as i64, count);
        let (window, empty) = master.window(first, count);
        if empty > self.config.max_uninitialized {
            log::debug!("window {:.0}% uninitialized; dead reckoning", 100.0 * empty);
            return Ok(None);
        }

        let snippet = self.snippet(self.capacity)?;
        let (peak, correlation) =
            self.correlator
                .locate(&snippet, &window, self.config.exclusion_halfwidth)?;
        let ratio = peak.ratio;
        let clear = peak.is_clear(self.config.ratio_threshold);
        // The snippet's first value belongs to buffer cell 2; the vehicle is
        // at buffer cell N - 1.
        let coarse_cell = first + peak.best_lag as i64 + self.capacity as i64 - 3;
        self.last_snapshot = Some(Snapshot {
            travel_distance: odometer,
            window_first_cell: first,
            correlation,
            peak,
        });
        let Some(ratio) = ratio.filter(|_| clear) else {
            return Ok(None);
        };

        let mut cell = coarse_cell;
        if self.config.refine {
            if let Some(refined) = self.refine(master, coarse_cell, first, count)? {
                cell = refined;
            }
        }
        Ok(Some((master.position_near(cell, reckoned), ratio)))
    }

    fn refine(
        &mut self,
        master: &MasterPitch,
        coarse_cell: i64,
        window_first: i64,
        window_count: usize,
    ) -> Result<Option<i64>> {
        let sub = (self.config.subbuffer_length / self.spacing).round() as usize;
        let count = (self.config.subwindow_length / self.spacing).round() as usize;
        // Centered on the snippet's expected placement, kept inside the window.
        let ideal = coarse_cell - (sub as i64 - 3) - ((count - sub) / 2) as i64;
        let last_start = window_first + window_count as i64 - count as i64;
        let first = ideal.clamp(window_first, last_start.max(window_first));
        let count = count.min(window_count);
        let (window, empty) = master.window(first, count);
        if empty > self.config.max_uninitialized {
            return Ok(None);
        }
        let snippet = self.snippet(sub)?;
        let (peak, _) = self
            .correlator
            .locate(&snippet, &window, self.config.exclusion_halfwidth)?;
        Ok(peak
            .is_clear(self.config.ratio_threshold)
            .then(|| first + peak.best_lag as i64 + sub as i64 - 3))
    }

    /// Matching signal of the newest `cells` buffered cells.
    fn snippet(&self, cells: usize) -> Result<Vec<f64>> {
        let lb = self.geometry.wheelbase;
        let values = self
            .buffer
            .iter()
            .skip(self.buffer.len() - cells)
            .map(|c| pitch_angle(c.front_left, c.front_right, c.rear_left, c.rear_right, lb))
            .collect();
        let pitch = DistanceProfile {
            start_offset: 0.0,
            spacing: self.spacing,
            values,
            units: Units::Radians,
        };
        Ok(differentiate_profile(&pitch, 2)?.values)
    }
}

/// Options for [`run_localizer`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Odometer intervals `[from, to)` during which matching is switched off.
    pub disabled: Vec<(f64, f64)>,
    /// Matching off for the whole run.
    pub disable_matching: bool,
    /// Odometer distances at which to capture the correlation trace.
    pub snapshot_at: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    pub estimates: Vec<Estimate>,
    pub snapshots: Vec<Snapshot>,
}

/// Feeds aligned live corner profiles through `localizer` cell by cell and
/// updates every `update_stride` meters.
pub fn run_localizer(
    localizer: &mut Localizer,
    corners: &CornerProfiles,
    master: &MasterPitch,
    options: &RunOptions,
) -> Result<RunOutput> {
    let spacing = corners.front_left.spacing;
    let stride = ((localizer.config.update_stride / spacing).round() as usize).max(1);
    let mut out = RunOutput::default();
    let mut pending: Vec<f64> = options.snapshot_at.clone();
    pending.sort_by(|a, b| a.total_cmp(b));
    let mut pending = pending.into_iter().peekable();
    let mut k = 0;
    while k + stride <= corners.len() {
        let cells = CornerCell::from_profiles(corners, k, stride);
        localizer.update_buffer(corners.front_left.position(k), &cells);
        k += stride;
        let odometer = localizer.odometer().expect("cells buffered");
        let disabled = options.disable_matching
            || options
                .disabled
                .iter()
                .any(|(a, b)| odometer >= *a && odometer < *b);
        let estimate = localizer.step(master, !disabled)?;
        while let Some(&at) = pending.peek() {
            if at > odometer {
                break;
            }
            pending.next();
            if let Some(s) = localizer.last_snapshot().filter(|s| s.travel_distance == odometer) {
                out.snapshots.push(s.clone());
            }
        }
        out.estimates.push(estimate);
    }
    Ok(out)
}

/// `travel_distance,estimate,status,ratio` rows.
pub fn estimates_to_text(estimates: &[Estimate]) -> String {
    let mut out = String::with_capacity(estimates.len() * 48);
    out.push_str("travel_distance,estimate,status,ratio\n");
    for e in estimates {
        let ratio = e.ratio.map_or(String::new(), |r| r.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{ratio}",
            e.travel_distance,
            e.position,
            e.status.as_str()
        );
    }
    out
}

pub fn estimates_from_text(path: &Path, text: &str) -> Result<Vec<Estimate>> {
    let mut out = Vec::new();
    for (ln, line) in data_lines(text) {
        if line.starts_with("travel_distance") {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(parse_error(path, ln, format!("expected 4 fields, found {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_error(path, ln, format!("`{s}`: {e}")))
        };
        out.push(Estimate {
            travel_distance: num(f[0])?,
            position: num(f[1])?,
            status: Status::parse(f[2])
                .ok_or_else(|| parse_error(path, ln, format!("unknown status `{}`", f[2])))?,
            ratio: if f[3].is_empty() { None } else { Some(num(f[3])?) },
        });
    }
    Ok(out)
}

pub fn read_estimates(path: &Path) -> Result<Vec<Estimate>> {
    let (p, text) = read_to_string(path)?;
    estimates_from_text(&p, &text)
}

/// Share of estimates with the given status.
pub fn status_fraction(estimates: &[Estimate], status: Status) -> f64 {
    if estimates.is_empty() {
        return 0.0;
    }
    estimates.iter().filter(|e| e.status == status).count() as f64 / estimates.len() as f64
}

/// Longitudinal error statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSummary {
    /// (travel distance, signed error) per sample.
    pub samples: Vec<(f64, f64)>,
    /// Absolute errors, ascending.
    pub sorted_abs: Vec<f64>,
}

impl ErrorSummary {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Share of samples with |error| strictly below `limit`.
    pub fn fraction_below(&self, limit: f64) -> f64 {
        if self.sorted_abs.is_empty() {
            return 0.0;
        }
        self.sorted_abs.partition_point(|e| *e < limit) as f64 / self.sorted_abs.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.sorted_abs.last().copied().unwrap_or(0.0)
    }

    /// `error,fraction` empirical CDF rows.
    pub fn cdf_to_text(&self) -> String {
        let n = self.sorted_abs.len() as f64;
        let mut out = String::from("error,fraction\n");
        for (i, e) in self.sorted_abs.iter().enumerate() {
            let _ = writeln!(out, "{e},{}", (i + 1) as f64 / n);
        }
        out
    }

    pub fn summary_line(&self) -> String {
        format!(
            "samples={} below_0.1m={:.3} below_0.5m={:.3} below_1m={:.3} max={:.3}",
            self.len(),
            self.fraction_below(0.1),
            self.fraction_below(0.5),
            self.fraction_below(1.0),
            self.max_abs()
        )
    }
}

/// Samples the estimate error every `stride` meters of travel.
///
/// `truth` holds (travel distance, route position) pairs in increasing
/// travel order and is linearly interpolated. With `loop_length` the error
/// is taken modulo the loop.
pub fn evaluate_errors(
    estimates: &[Estimate],
    truth: &[(f64, f64)],
    stride: f64,
    loop_length: Option<f64>,
) -> Result<ErrorSummary> {
    if !(stride > 0.0) {
        return Err(Error::invalid("stride must be positive"));
    }
    if truth.len() < 2 || truth.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("truth must have increasing travel distances"));
    }
    let mut samples = Vec::new();
    let mut next = f64::NEG_INFINITY;
    for e in estimates {
        if e.travel_distance < next - 1e-6 * stride {
            continue;
        }
        let d = e.travel_distance;
        let (t0, tn) = (truth[0].0, truth[truth.len() - 1].0);
        if d < t0 || d > tn {
            return Err(Error::OutOfRange(format!(
                "estimate at {d:.2} m outside ground truth [{t0:.2}, {tn:.2}] m"
            )));
        }
        let i = truth.partition_point(|p| p.0 <= d).clamp(1, truth.len() - 1);
        let (a, b) = (truth[i - 1], truth[i]);
        let expected = a.1 + (d - a.0) / (b.0 - a.0) * (b.1 - a.1);
        let mut err = e.position - expected;
        if let Some(l) = loop_length {
            err = (err + 0.5 * l).rem_euclid(l) - 0.5 * l;
        }
        samples.push((d, err));
        next = if next.is_finite() { next + stride } else { d + stride };
    }
    let mut sorted_abs: Vec<f64> = samples.iter().map(|s| s.1.abs()).collect();
    sorted_abs.sort_by(|a, b| a.total_cmp(b));
    Ok(ErrorSummary {
        samples,
        sorted_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn estimates(positions: &[f64]) -> Vec<Estimate> {
        positions
            .iter()
            .enumerate()
            .map(|(i, p)| Estimate {
                travel_distance: i as f64,
                position: *p,
                status: Status::Matched,
                ratio: Some(0.1),
            })
            .collect()
    }

    fn truth(n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|i| (i as f64, 100.0 + i as f64)).collect()
    }

    #[test]
    fn perfect_estimates() {
        let e = estimates(&(0..100).map(|i| 100.0 + i as f64).collect::<Vec<_>>());
        let s = evaluate_errors(&e, &truth(100), 10.0, None).unwrap();
        assert_eq!(s.len(), 10);
        for limit in [0.1, 0.5, 1.0] {
            assert_eq!(s.fraction_below(limit), 1.0);
        }
    }

    #[test]
    fn constant_bias() {
        let e = estimates(&(0..100).map(|i| 100.3 + i as f64).collect::<Vec<_>>());
        let s = evaluate_errors(&e, &truth(100), 10.0, None).unwrap();
        assert_eq!(s.fraction_below(0.5), 1.0);
        assert_eq!(s.fraction_below(0.1), 0.0);
    }

    #[test]
    fn loop_wrap_and_extent() {
        let e = estimates(&[4199.95]);
        let t = vec![(0.0, 0.0), (1.0, 1.0)];
        let s = evaluate_errors(&e, &t, 10.0, Some(4200.0)).unwrap();
        assert!((s.samples[0].1 + 0.05).abs() < 1e-6);
        let far = vec![Estimate {
            travel_distance: 5.0,
            ..e[0]
        }];
        assert!(matches!(
            evaluate_errors(&far, &t, 10.0, None),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(LocalizerConfig::default().validate().is_ok());
        let bad = LocalizerConfig {
            subbuffer_length: 200.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = LocalizerConfig {
            ratio_threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn buffer_bookkeeping() {
        let mut loc =
            Localizer::new(LocalizerConfig::default(), VehicleGeometry::default(), 0.1, 0.0)
                .unwrap();
        let cells: Vec<CornerCell> = (0..1000)
            .map(|i| CornerCell {
                front_left: i as f64,
                ..Default::default()
            })
            .collect();
        loc.update_buffer(0.0, &cells);
        assert!(loc.is_buffer_full());
        let more: Vec<CornerCell> = (1000..1100)
            .map(|i| CornerCell {
                front_left: i as f64,
                ..Default::default()
            })
            .collect();
        loc.update_buffer(100.0, &more);
        let p = loc.buffer_profile().unwrap();
        assert_eq!(p.len(), 1000);
        assert_eq!(p.values[0], 100.0);
        assert!((loc.odometer().unwrap() - 109.9).abs() < 1e-9);

        loc.update_buffer(150.0, &more[..5]);
        assert_eq!(loc.buffer_len(), 5);
        assert_eq!(loc.status(), Status::DeadReckoning);
    }

    #[test]
    fn estimate_log_round_trip() {
        let mut e = estimates(&[1.0, 2.5]);
        e[1].status = Status::Lost;
        e[1].ratio = None;
        let back = estimates_from_text(Path::new("log"), &estimates_to_text(&e)).unwrap();
        assert_eq!(back, e);
    }
}
