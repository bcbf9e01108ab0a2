//! Road graph geometry: nodes, straight segments, and GPS projection.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean Earth radius, m.
pub const EARTH_RADIUS: f64 = 6_371_008.8;

/// GPS points farther than this from every segment do not project.
pub const MAX_PROJECTION_DISTANCE: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    /// Degrees, positive north.
    pub lat: f64,
    /// Degrees, positive east.
    pub lon: f64,
    /// Per-axis noise standard deviation in meters, for synthetic fixes.
    pub noise_std: Option<f64>,
}

impl GpsPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = Self {
            lat,
            lon,
            noise_std: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat.is_finite() && self.lat.abs() <= 90.0) {
            return Err(Error::invalid(format!("latitude {} out of range", self.lat)));
        }
        if !(self.lon.is_finite() && self.lon.abs() <= 180.0) {
            return Err(Error::invalid(format!("longitude {} out of range", self.lon)));
        }
        Ok(())
    }
}

/// Equirectangular projection about a fixed center; `x` east, `y` north, m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub center_lat: f64,
    pub center_lon: f64,
    cos_lat: f64,
}

impl LocalFrame {
    pub fn new(center_lat: f64, center_lon: f64) -> Self {
        Self {
            center_lat,
            center_lon,
            cos_lat: center_lat.to_radians().cos(),
        }
    }

    pub fn to_local(&self, p: &GpsPoint) -> [f64; 2] {
        [
            EARTH_RADIUS * (p.lon - self.center_lon).to_radians() * self.cos_lat,
            EARTH_RADIUS * (p.lat - self.center_lat).to_radians(),
        ]
    }

    pub fn to_gps(&self, xy: [f64; 2]) -> GpsPoint {
        GpsPoint {
            lat: self.center_lat + (xy[1] / EARTH_RADIUS).to_degrees(),
            lon: self.center_lon + (xy[0] / (EARTH_RADIUS * self.cos_lat)).to_degrees(),
            noise_std: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
}

/// Straight section between two adjacent nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u64,
    pub from: u64,
    pub to: u64,
    /// m.
    pub length: f64,
}

/// Nodes and segments of the mapped road.
///
/// The segments, in order, form one connected route: each segment starts
/// where the previous one ends. The route is closed when the last segment
/// ends at the first node.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphMap {
    nodes: Vec<Node>,
    segments: Vec<Segment>,
    frame: LocalFrame,
    /// Per segment: local start/end points and route offset of the start.
    geometry: Vec<SegmentGeometry>,
    length: f64,
    closed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct SegmentGeometry {
    a: [f64; 2],
    b: [f64; 2],
    start: f64,
}

/// Result of projecting a GPS point onto the graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub segment_id: u64,
    /// Index of the segment in route order.
    pub segment_index: usize,
    /// Arc length along the segment, m.
    pub offset: f64,
    /// Arc length along the whole route, m.
    pub route_position: f64,
    /// Planar distance from the point to the segment, m.
    pub distance: f64,
}

impl GraphMap {
    /// Validates ids, connectivity, and that declared segment lengths agree
    /// with the projected node coordinates within 1%.
    pub fn new(nodes: Vec<Node>, segments: Vec<Segment>) -> Result<Self> {
        if nodes.is_empty() || segments.is_empty() {
            return Err(Error::invalid("graph needs at least one segment"));
        }
        for n in &nodes {
            GpsPoint::new(n.lat, n.lon)?;
        }
        let mut ids: Vec<u64> = nodes.iter().map(|n| n.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate node id"));
        }
        let mut seg_ids: Vec<u64> = segments.iter().map(|s| s.id).collect();
        seg_ids.sort_unstable();
        if seg_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate segment id"));
        }

        let count = nodes.len() as f64;
        let center_lat = nodes.iter().map(|n| n.lat).sum::<f64>() / count;
        let center_lon = nodes.iter().map(|n| n.lon).sum::<f64>() / count;
        let frame = LocalFrame::new(center_lat, center_lon);
        let node_xy = |id: u64| -> Result<[f64; 2]> {
            let n = nodes
                .iter()
                .find(|n| n.id == id)
                .ok_or_else(|| Error::invalid(format!("segment references unknown node {id}")))?;
            Ok(frame.to_local(&GpsPoint {
                lat: n.lat,
                lon: n.lon,
                noise_std: None,
            }))
        };

        let mut geometry = Vec::with_capacity(segments.len());
        let mut start = 0.0;
        for (i, s) in segments.iter().enumerate() {
            if i > 0 && segments[i - 1].to != s.from {
                return Err(Error::invalid(format!(
                    "segment {} does not start where segment {} ends",
                    s.id,
                    segments[i - 1].id
                )));
            }
            let (a, b) = (node_xy(s.from)?, node_xy(s.to)?);
            let planar = (b[0] - a[0]).hypot(b[1] - a[1]);
            if !(s.length > 0.0) || (planar - s.length).abs() > 0.01 * s.length {
                return Err(Error::invalid(format!(
                    "segment {} length {} m disagrees with node spacing {planar:.3} m",
                    s.id, s.length
                )));
            }
            geometry.push(SegmentGeometry { a, b, start });
            start += s.length;
        }
        let closed = segments.len() > 1 && segments[segments.len() - 1].to == segments[0].from;
        Ok(Self {
            nodes,
            segments,
            frame,
            geometry,
            length: start,
            closed,
        })
    }

    /// Chains consecutive nodes into segments with lengths taken from the
    /// local projection; `closed` adds a segment back to the first node.
    pub fn from_nodes(nodes: Vec<Node>, closed: bool) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("need at least two nodes"));
        }
        let count = nodes.len() as f64;
        let frame = LocalFrame::new(
            nodes.iter().map(|n| n.lat).sum::<f64>() / count,
            nodes.iter().map(|n| n.lon).sum::<f64>() / count,
        );
        let xy: Vec<[f64; 2]> = nodes
            .iter()
            .map(|n| {
                frame.to_local(&GpsPoint {
                    lat: n.lat,
                    lon: n.lon,
                    noise_std: None,
                })
            })
            .collect();
        let pairs = if closed { nodes.len() } else { nodes.len() - 1 };
        let segments = (0..pairs)
            .map(|i| {
                let j = (i + 1) % nodes.len();
                Segment {
                    id: i as u64,
                    from: nodes[i].id,
                    to: nodes[j].id,
                    length: (xy[j][0] - xy[i][0]).hypot(xy[j][1] - xy[i][1]),
                }
            })
            .collect();
        Self::new(nodes, segments)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    /// Total route length, m.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Route offset at which segment `index` starts.
    pub fn segment_start(&self, index: usize) -> f64 {
        self.geometry[index].start
    }

    /// Index of the segment containing route position `s` (wrapped on
    /// closed routes, clamped on open ones).
    pub fn segment_at(&self, s: f64) -> usize {
        let s = self.wrap(s);
        match self
            .geometry
            .binary_search_by(|g| g.start.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// Maps `s` into `[0, length)` on closed routes, `[0, length]` otherwise.
    pub fn wrap(&self, s: f64) -> f64 {
        if self.closed {
            s.rem_euclid(self.length)
        } else {
            s.clamp(0.0, self.length)
        }
    }

    /// Signed route distance from `b` to `a`, taking the short way round on
    /// closed routes.
    pub fn route_difference(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        if self.closed {
            let l = self.length;
            (d + 0.5 * l).rem_euclid(l) - 0.5 * l
        } else {
            d
        }
    }

    /// Local planar point at route position `s`.
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        let s = self.wrap(s);
        let i = self.segment_at(s);
        let g = &self.geometry[i];
        let len = self.segments[i].length;
        let t = ((s - g.start) / len).clamp(0.0, 1.0);
        [g.a[0] + t * (g.b[0] - g.a[0]), g.a[1] + t * (g.b[1] - g.a[1])]
    }

    pub fn gps_at(&self, s: f64) -> GpsPoint {
        self.frame.to_gps(self.point_at(s))
    }

    /// Orthogonal projection onto the nearest segment. Ties go to the segment
    /// with the lower id.
    pub fn project_gps(&self, point: &GpsPoint) -> Result<Projection> {
        point.validate()?;
        let p = self.frame.to_local(point);
        let mut best: Option<Projection> = None;
        for (i, (seg, g)) in self.segments.iter().zip(&self.geometry).enumerate() {
            let (offset, distance) = project_onto(p, g.a, g.b);
            let offset = offset.min(seg.length);
            let candidate = Projection {
                segment_id: seg.id,
                segment_index: i,
                offset,
                route_position: g.start + offset,
                distance,
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    distance < b.distance - 1e-9
                        || ((distance - b.distance).abs() <= 1e-9 && seg.id < b.segment_id)
                }
            };
            if better {
                best = Some(candidate);
            }
        }
        let best = best.expect("graph has segments");
        if best.distance > MAX_PROJECTION_DISTANCE {
            return Err(Error::NoSegmentNearby {
                nearest: best.distance,
                max_distance: MAX_PROJECTION_DISTANCE,
            });
        }
        Ok(best)
    }
}

/// Arc-length offset of the foot point from `a`, and the distance to it.
pub(crate) fn project_onto(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let foot = [a[0] + t * dx, a[1] + t * dy];
    (t * len2.sqrt(), (p[0] - foot[0]).hypot(p[1] - foot[1]))
}
