//! The crowd-sourced terrain map.
//!
//! A [`GraphMap`] describes the road geometry, and a [`MasterProfile`]
//! stores averaged road heights every `spacing` meters along it. Drives are
//! cut into ~100 m [`Stretch`]es; each stretch is placed near its GPS
//! position, aligned precisely by cross-correlating pitch signals against a
//! longer piece of the master, and averaged in. Regions with no data yet take
//! the first stretch at its GPS position.

mod graph;
mod master;
mod persist;
mod stretch;

use std::fmt::Write as _;

pub use graph::{
    GpsPoint, GraphMap, LocalFrame, Node, Projection, Segment, EARTH_RADIUS,
    MAX_PROJECTION_DISTANCE,
};
pub use master::{
    masked_matching_signal, matching_signal_lead, MasterProfile, SegmentCells, WEIGHT_CAP,
};
pub use persist::{load_map, save_map, FORMAT_VERSION, MAGIC};
pub use stretch::{
    extract_stretches, interpolate_trace, read_trace, snap_trace, trace_from_text, trace_to_text,
    Stretch, TracePoint, MIN_STRETCH_LENGTH, STRETCH_LENGTH,
};

use crate::matching::{Correlator, DEFAULT_EXCLUSION_HALFWIDTH, DEFAULT_RATIO_THRESHOLD};
use crate::pitch::{differentiate_profile, pitch_from_heights, VehicleGeometry};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MatchOptions {
    /// Extra master length on each side of the GPS-predicted interval, m.
    pub margin: f64,
    pub ratio_threshold: f64,
    pub exclusion_halfwidth: usize,
    /// Below this initialized share of the predicted interval the stretch
    /// is placed by GPS alone.
    pub bootstrap_fraction: f64,
    /// Fraction of the GPS-vs-correlation discrepancy applied to the
    /// segment anchor per merge.
    pub anchor_gain: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            margin: 50.0,
            ratio_threshold: DEFAULT_RATIO_THRESHOLD,
            exclusion_halfwidth: DEFAULT_EXCLUSION_HALFWIDTH,
            bootstrap_fraction: 0.5,
            anchor_gain: 0.25,
        }
    }
}

/// Master cells a stretch was aligned to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedInterval {
    /// Unwrapped index of the cell under the stretch's first sample.
    pub first_cell: i64,
    pub count: usize,
    pub ratio: f64,
    /// Where GPS alone put the first sample, in fractional cells.
    pub gps_first_cell: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatchOutcome {
    /// Too little master data around the GPS position to correlate; the
    /// stretch may seed the empty cells at `first_cell` (fractional).
    Bootstrap { first_cell: f64 },
    Matched(MatchedInterval),
    /// No clear correlation peak; the stretch must not be merged.
    NoMatch {
        ratio: Option<f64>,
        gps_first_cell: f64,
    },
}

/// Graph plus master profile.
#[derive(Clone, Debug, PartialEq)]
pub struct TerrainMap {
    pub graph: GraphMap,
    pub master: MasterProfile,
}

impl TerrainMap {
    pub fn new(graph: GraphMap, spacing: f64) -> Result<Self> {
        let master = MasterProfile::new(&graph, spacing)?;
        Ok(Self { graph, master })
    }

    pub fn spacing(&self) -> f64 {
        self.master.spacing()
    }

    /// Fractional master cell of the stretch's first sample, from its
    /// center GPS fix.
    pub fn gps_first_cell(&self, stretch: &Stretch) -> Result<f64> {
        let proj = self.graph.project_gps(&stretch.center_gps)?;
        let start = proj.route_position - stretch.center_offset();
        Ok(self.master.position_to_cell(start))
    }

    /// Locates `stretch` in the master.
    ///
    /// The extended stretch spans the GPS-predicted interval plus
    /// `options.margin` on both sides, stitched across segment boundaries.
    /// Both signals are twice-differentiated pitch derived from heights with
    /// `geometry`; master outputs touching empty cells are zeroed.
    pub fn match_stretch(
        &self,
        stretch: &Stretch,
        geometry: &VehicleGeometry,
        options: &MatchOptions,
        correlator: &mut Correlator,
    ) -> Result<MatchOutcome> {
        let spacing = self.spacing();
        if (stretch.profile.spacing - spacing).abs() > 1e-9 * spacing {
            return Err(Error::invalid(format!(
                "stretch spacing {} differs from map spacing {spacing}",
                stretch.profile.spacing
            )));
        }
        let gps_first_cell = self.gps_first_cell(stretch)?;
        let predicted = gps_first_cell.round() as i64;
        let len = stretch.len();
        if self.master.initialized_fraction(predicted, len) < options.bootstrap_fraction {
            return Ok(MatchOutcome::Bootstrap {
                first_cell: gps_first_cell,
            });
        }

        let margin = (options.margin / spacing).round() as i64;
        let ext_first = predicted - margin;
        let ext_count = len + 2 * margin as usize;
        let (heights, weights) = self.master.extract(ext_first, ext_count);
        let (window, _) = masked_matching_signal(&heights, &weights, spacing, geometry)?;
        let snippet = differentiate_profile(&pitch_from_heights(&stretch.profile, geometry)?, 2)?;
        let (peak, _) = correlator.locate(&snippet.values, &window, options.exclusion_halfwidth)?;
        match peak.ratio {
            Some(ratio) if ratio < options.ratio_threshold => {
                Ok(MatchOutcome::Matched(MatchedInterval {
                    first_cell: ext_first + peak.best_lag as i64,
                    count: len,
                    ratio,
                    gps_first_cell,
                }))
            }
            ratio => Ok(MatchOutcome::NoMatch {
                ratio,
                gps_first_cell,
            }),
        }
    }

    /// Folds `stretch` into the master according to `outcome`; returns the
    /// number of cells written.
    ///
    /// Matched stretches update every aligned cell by a weighted mean and
    /// nudge the anchor of the segment under the stretch center by
    /// `options.anchor_gain` of the GPS-vs-correlation discrepancy.
    /// Bootstrap stretches are linearly resampled onto the grid at their
    /// fractional GPS position and only fill cells that are still empty.
    pub fn merge_stretch(
        &mut self,
        stretch: &Stretch,
        outcome: &MatchOutcome,
        options: &MatchOptions,
    ) -> Result<usize> {
        let values = &stretch.profile.values;
        match *outcome {
            MatchOutcome::NoMatch { .. } => Ok(0),
            MatchOutcome::Bootstrap { first_cell } => {
                if values.len() < 2 {
                    return Err(Error::EmptyProfile("stretch has fewer than two cells".into()));
                }
                let lo = first_cell.ceil() as i64;
                let hi = (first_cell + (values.len() - 1) as f64).floor() as i64;
                let mut written = 0;
                for c in lo..=hi {
                    let Some(g) = self.master.wrap_cell(c) else { continue };
                    let x = c as f64 - first_cell;
                    let i = (x.floor() as usize).min(values.len() - 2);
                    let t = x - i as f64;
                    let v = values[i] + t * (values[i + 1] - values[i]);
                    written += usize::from(self.master.seed_cell(g, v));
                }
                Ok(written)
            }
            MatchOutcome::Matched(interval) => {
                if interval.count != values.len() {
                    return Err(Error::LengthMismatch {
                        expected: interval.count,
                        actual: values.len(),
                    });
                }
                let mut written = 0;
                for (k, v) in values.iter().enumerate() {
                    if let Some(g) = self.master.wrap_cell(interval.first_cell + k as i64) {
                        self.master.merge_cell(g, *v);
                        written += 1;
                    }
                }
                let center = interval.first_cell + (interval.count / 2) as i64;
                if let Some(g) = self.master.wrap_cell(center) {
                    let segment = self.master.locate(g).0;
                    let discrepancy =
                        (interval.gps_first_cell - interval.first_cell as f64) * self.spacing();
                    self.master
                        .nudge_anchor(segment, options.anchor_gain * discrepancy);
                }
                Ok(written)
            }
        }
    }

    /// Matches and merges the stretches of one drive in order.
    pub fn add_run(
        &mut self,
        stretches: &[Stretch],
        geometry: &VehicleGeometry,
        options: &MatchOptions,
        correlator: &mut Correlator,
    ) -> Result<Vec<StretchReport>> {
        let mut report = Vec::with_capacity(stretches.len());
        for (index, stretch) in stretches.iter().enumerate() {
            let outcome = match self.match_stretch(stretch, geometry, options, correlator) {
                Ok(o) => o,
                Err(e @ Error::NoSegmentNearby { .. }) => {
                    log::warn!("run {} stretch {index}: {e}; quarantined", stretch.source);
                    report.push(StretchReport {
                        source: stretch.source,
                        index,
                        kind: OutcomeKind::Quarantined,
                        ratio: None,
                        gps_first_cell: f64::NAN,
                        first_cell: None,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let entry = match outcome {
                MatchOutcome::Bootstrap { first_cell } => StretchReport {
                    source: stretch.source,
                    index,
                    kind: OutcomeKind::Bootstrap,
                    ratio: None,
                    gps_first_cell: first_cell,
                    first_cell: Some(first_cell.round() as i64),
                },
                MatchOutcome::Matched(m) => StretchReport {
                    source: stretch.source,
                    index,
                    kind: OutcomeKind::Matched,
                    ratio: Some(m.ratio),
                    gps_first_cell: m.gps_first_cell,
                    first_cell: Some(m.first_cell),
                },
                MatchOutcome::NoMatch {
                    ratio,
                    gps_first_cell,
                } => {
                    log::info!(
                        "run {} stretch {index}: no clear peak (ratio {ratio:?}); quarantined",
                        stretch.source
                    );
                    StretchReport {
                        source: stretch.source,
                        index,
                        kind: OutcomeKind::Quarantined,
                        ratio,
                        gps_first_cell,
                        first_cell: None,
                    }
                }
            };
            self.merge_stretch(stretch, &outcome, options)?;
            report.push(entry);
        }
        Ok(report)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutcomeKind {
    Bootstrap,
    Matched,
    Quarantined,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Bootstrap => "bootstrap",
            OutcomeKind::Matched => "matched",
            OutcomeKind::Quarantined => "quarantined",
        }
    }
}

/// What happened to one stretch during map building.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StretchReport {
    pub source: u32,
    pub index: usize,
    pub kind: OutcomeKind,
    pub ratio: Option<f64>,
    pub gps_first_cell: f64,
    pub first_cell: Option<i64>,
}

/// `source,index,outcome,ratio,gps_cell,cell` rows.
pub fn report_to_text(report: &[StretchReport]) -> String {
    let mut out = String::from("source,index,outcome,ratio,gps_cell,cell\n");
    for r in report {
        let ratio = r.ratio.map_or(String::new(), |v| format!("{v:.4}"));
        let cell = r.first_cell.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{ratio},{:.2},{cell}",
            r.source,
            r.index,
            r.kind.as_str(),
            r.gps_first_cell
        );
    }
    out
}

/// Share of `report` entries of the given kind.
pub fn outcome_fraction(report: &[StretchReport], kind: OutcomeKind) -> f64 {
    if report.is_empty() {
        return 0.0;
    }
    report.iter().filter(|r| r.kind == kind).count() as f64 / report.len() as f64
}
