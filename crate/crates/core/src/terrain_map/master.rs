//! Per-segment master height cells and their stitched view along the route.

use super::graph::GraphMap;
use crate::pitch::{differentiate_profile, pitch_from_heights, wheelbase_cells, VehicleGeometry};
use crate::resample::{DistanceProfile, Units};
use crate::{Error, Result};

/// Observation count at which a cell stops gaining weight; later merges
/// then act as an exponential forget with factor 1/33.
pub const WEIGHT_CAP: u32 = 32;

/// Height cells of one segment.
///
/// Segments partition a single route-wide grid: the segment owns global
/// cells `first_cell .. first_cell + values.len()`, and global cell `c`
/// sits at route position `c * spacing + anchor`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentCells {
    pub segment_id: u64,
    pub first_cell: usize,
    /// Longitudinal correction of this segment's cells against GPS, m.
    pub anchor: f64,
    pub values: Vec<f64>,
    /// 0 means the cell has never been observed.
    pub weights: Vec<u32>,
}

impl SegmentCells {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterProfile {
    spacing: f64,
    closed: bool,
    cell_count: usize,
    segments: Vec<SegmentCells>,
}

impl MasterProfile {
    /// All-uninitialized cells at `spacing` along every segment of `graph`.
    pub fn new(graph: &GraphMap, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
        }
        let closed = graph.is_closed();
        let cell_count = if closed {
            (graph.length() / spacing).round() as usize
        } else {
            (graph.length() / spacing + 1e-9).floor() as usize + 1
        };
        let firsts: Vec<usize> = (0..graph.segments().len())
            .map(|i| ((graph.segment_start(i) / spacing - 1e-9).ceil().max(0.0) as usize).min(cell_count))
            .collect();
        let segments = graph
            .segments()
            .iter()
            .enumerate()
            .map(|(i, seg)| {
                let end = firsts.get(i + 1).copied().unwrap_or(cell_count);
                let n = end - firsts[i];
                SegmentCells {
                    segment_id: seg.id,
                    first_cell: firsts[i],
                    anchor: 0.0,
                    values: vec![0.0; n],
                    weights: vec![0; n],
                }
            })
            .collect();
        Ok(Self {
            spacing,
            closed,
            cell_count,
            segments,
        })
    }

    /// Reassembles a profile from stored parts, checking the partition.
    pub fn from_parts(spacing: f64, closed: bool, segments: Vec<SegmentCells>) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Corrupt(format!("bad spacing {spacing}")));
        }
        let mut next = 0;
        for s in &segments {
            if s.first_cell != next {
                return Err(Error::Corrupt(format!(
                    "segment {} starts at cell {}, expected {next}",
                    s.segment_id, s.first_cell
                )));
            }
            if s.values.len() != s.weights.len() {
                return Err(Error::Corrupt(format!("segment {} cell arrays differ", s.segment_id)));
            }
            if !s.anchor.is_finite() {
                return Err(Error::Corrupt(format!("segment {} anchor", s.segment_id)));
            }
            if s.values.iter().zip(&s.weights).any(|(v, w)| !v.is_finite() || (*w == 0 && *v != 0.0)) {
                return Err(Error::Corrupt(format!("segment {} cell values", s.segment_id)));
            }
            next += s.len();
        }
        Ok(Self {
            spacing,
            closed,
            cell_count: next,
            segments,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn segments(&self) -> &[SegmentCells] {
        &self.segments
    }

    /// Maps an unwrapped cell index onto the grid; `None` past the ends of an
    /// open route.
    pub fn wrap_cell(&self, c: i64) -> Option<usize> {
        let n = self.cell_count as i64;
        if self.closed {
            Some(c.rem_euclid(n) as usize)
        } else if (0..n).contains(&c) {
            Some(c as usize)
        } else {
            None
        }
    }

    /// (segment index, index within segment) of global cell `c`.
    pub fn locate(&self, c: usize) -> (usize, usize) {
        let i = self.segments.partition_point(|s| s.first_cell <= c).max(1) - 1;
        (i, c - self.segments[i].first_cell)
    }

    pub fn value(&self, c: usize) -> f64 {
        let (i, k) = self.locate(c);
        self.segments[i].values[k]
    }

    pub fn weight(&self, c: usize) -> u32 {
        let (i, k) = self.locate(c);
        self.segments[i].weights[k]
    }

    pub fn anchor_of_cell(&self, c: usize) -> f64 {
        self.segments[self.locate(c).0].anchor
    }

    /// Route position of cell `c`, m.
    pub fn cell_position(&self, c: usize) -> f64 {
        c as f64 * self.spacing + self.anchor_of_cell(c)
    }

    /// Fractional cell index for route position `s`, using the anchor of the
    /// segment under `s`. The result is not wrapped.
    pub fn position_to_cell(&self, s: f64) -> f64 {
        let nominal = (s / self.spacing).floor() as i64;
        let anchor = self
            .wrap_cell(nominal)
            .or_else(|| self.wrap_cell(nominal.clamp(0, self.cell_count as i64 - 1)))
            .map(|c| self.anchor_of_cell(c))
            .unwrap_or(0.0);
        (s - anchor) / self.spacing
    }

    /// Stitched copy of `count` cells starting at unwrapped cell `first`,
    /// crossing segment boundaries (and the seam of a closed route) without
    /// gap or overlap. Cells beyond an open route come back uninitialized.
    pub fn extract(&self, first: i64, count: usize) -> (Vec<f64>, Vec<u32>) {
        let mut values = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut c = first;
        while values.len() < count {
            let Some(g) = self.wrap_cell(c) else {
                values.push(0.0);
                weights.push(0);
                c += 1;
                continue;
            };
            let (i, k) = self.locate(g);
            let seg = &self.segments[i];
            let take = (seg.len() - k).min(count - values.len());
            values.extend_from_slice(&seg.values[k..k + take]);
            weights.extend_from_slice(&seg.weights[k..k + take]);
            c += take as i64;
        }
        (values, weights)
    }

    /// Share of the cells in `first .. first + count` that hold data.
    pub fn initialized_fraction(&self, first: i64, count: usize) -> f64 {
        if count == 0 {
            return 0.0;
        }
        let (_, w) = self.extract(first, count);
        w.iter().filter(|w| **w > 0).count() as f64 / count as f64
    }

    /// Share of all cells that hold data.
    pub fn coverage(&self) -> f64 {
        self.initialized_fraction(0, self.cell_count)
    }

    /// Weighted-mean update of one cell.
    pub fn merge_cell(&mut self, c: usize, observation: f64) {
        let (i, k) = self.locate(c);
        let seg = &mut self.segments[i];
        let w = seg.weights[k];
        let v = seg.values[k];
        seg.values[k] = (f64::from(w) * v + observation) / f64::from(w + 1);
        seg.weights[k] = (w + 1).min(WEIGHT_CAP);
    }

    /// Writes `value` with weight 1 into an uninitialized cell; returns
    /// whether the cell was empty.
    pub fn seed_cell(&mut self, c: usize, value: f64) -> bool {
        let (i, k) = self.locate(c);
        let seg = &mut self.segments[i];
        if seg.weights[k] > 0 {
            return false;
        }
        seg.values[k] = value;
        seg.weights[k] = 1;
        true
    }

    pub fn nudge_anchor(&mut self, segment_index: usize, delta: f64) {
        self.segments[segment_index].anchor += delta;
    }

    /// The whole grid as one height profile starting at cell 0.
    pub fn heights(&self) -> DistanceProfile {
        let (values, _) = self.extract(0, self.cell_count);
        DistanceProfile {
            start_offset: 0.0,
            spacing: self.spacing,
            values,
            units: Units::Meters,
        }
    }
}

/// Number of leading input cells [`masked_matching_signal`] consumes before
/// its first output.
pub fn matching_signal_lead(geometry: &VehicleGeometry, spacing: f64) -> usize {
    wheelbase_cells(geometry, spacing) + 2
}

/// Twice-differentiated pitch of a stretch of stored heights.
///
/// Output `j` belongs to input cell `lead + j` (see
/// [`matching_signal_lead`]); the last two cells yield no output. Outputs
/// that depend on any uninitialized cell are zero and flagged invalid.
pub fn masked_matching_signal(
    heights: &[f64],
    weights: &[u32],
    spacing: f64,
    geometry: &VehicleGeometry,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let profile = DistanceProfile::new(0.0, spacing, heights.to_vec(), Units::Meters)?;
    let signal = differentiate_profile(&pitch_from_heights(&profile, geometry)?, 2)?;
    let wb = wheelbase_cells(geometry, spacing);
    let lead = wb + 2;
    // Prefix count of empty cells.
    let mut empty = Vec::with_capacity(weights.len() + 1);
    empty.push(0u32);
    for w in weights {
        empty.push(empty.last().unwrap() + u32::from(*w == 0));
    }
    let mut values = signal.values;
    let mut valid = vec![true; values.len()];
    for (j, (v, ok)) in values.iter_mut().zip(valid.iter_mut()).enumerate() {
        let cell = lead + j;
        let (lo, hi) = (cell - wb - 2, cell + 2);
        if empty[hi + 1] - empty[lo] > 0 {
            *v = 0.0;
            *ok = false;
        }
    }
    Ok((values, valid))
}
