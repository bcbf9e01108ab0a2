//! Binary map container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic[8] version:u32 spacing:f64 closed:u8
//! node_count:u32    { id:u64 lat:f64 lon:f64 }*
//! segment_count:u32 { id:u64 from:u64 to:u64 length:f64 }*
//! cells_count:u32   { segment_id:u64 first_cell:u64 anchor:f64 n:u64 value:f64*n weight:u32*n }*
//! crc32:u32         (over every preceding byte)
//! ```

use std::path::Path;

use super::graph::{GraphMap, Node, Segment};
use super::master::{MasterProfile, SegmentCells};
use super::TerrainMap;
use crate::fsutil::write_atomic;
use crate::{Error, Result};

pub const MAGIC: [u8; 8] = *b"TRNMAP\0\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_map(path: &Path, map: &TerrainMap) -> Result<()> {
    write_atomic(path, &to_bytes(map))
}

pub fn load_map(path: &Path) -> Result<TerrainMap> {
    from_bytes(&std::fs::read(path)?)
}

pub(crate) fn to_bytes(map: &TerrainMap) -> Vec<u8> {
    let master = &map.master;
    let mut out = Vec::with_capacity(64 + master.cell_count() * 12);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&master.spacing().to_le_bytes());
    out.push(u8::from(master.is_closed()));

    let nodes = map.graph.nodes();
    out.extend_from_slice(&(nodes.len() as u32).to_le_bytes());
    for n in nodes {
        out.extend_from_slice(&n.id.to_le_bytes());
        out.extend_from_slice(&n.lat.to_le_bytes());
        out.extend_from_slice(&n.lon.to_le_bytes());
    }
    let segments = map.graph.segments();
    out.extend_from_slice(&(segments.len() as u32).to_le_bytes());
    for s in segments {
        out.extend_from_slice(&s.id.to_le_bytes());
        out.extend_from_slice(&s.from.to_le_bytes());
        out.extend_from_slice(&s.to.to_le_bytes());
        out.extend_from_slice(&s.length.to_le_bytes());
    }
    out.extend_from_slice(&(master.segments().len() as u32).to_le_bytes());
    for cells in master.segments() {
        out.extend_from_slice(&cells.segment_id.to_le_bytes());
        out.extend_from_slice(&(cells.first_cell as u64).to_le_bytes());
        out.extend_from_slice(&cells.anchor.to_le_bytes());
        out.extend_from_slice(&(cells.len() as u64).to_le_bytes());
        for v in &cells.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for w in &cells.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Checks magic, then version, then the checksum, and only then parses.
pub(crate) fn from_bytes(bytes: &[u8]) -> Result<TerrainMap> {
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { bytes, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < r.pos + 4 {
        return Err(Error::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { bytes: body, pos: r.pos };
    let spacing = r.f64()?;
    let closed = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(Error::Corrupt(format!("closed flag {b}"))),
    };
    let node_count = r.u32()? as usize;
    let mut nodes = Vec::with_capacity(node_count.min(body.len() / 24));
    for _ in 0..node_count {
        nodes.push(Node {
            id: r.u64()?,
            lat: r.f64()?,
            lon: r.f64()?,
        });
    }
    let segment_count = r.u32()? as usize;
    let mut segments = Vec::with_capacity(segment_count.min(body.len() / 32));
    for _ in 0..segment_count {
        segments.push(Segment {
            id: r.u64()?,
            from: r.u64()?,
            to: r.u64()?,
            length: r.f64()?,
        });
    }
    let cells_count = r.u32()? as usize;
    let mut parts = Vec::with_capacity(cells_count.min(body.len() / 32));
    for _ in 0..cells_count {
        let segment_id = r.u64()?;
        let first_cell = r.u64()? as usize;
        let anchor = r.f64()?;
        let n = r.u64()? as usize;
        if n.checked_mul(12).is_none_or(|b| b > body.len() - r.pos) {
            return Err(Error::Corrupt(format!("segment {segment_id} claims {n} cells")));
        }
        let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let weights = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        parts.push(SegmentCells {
            segment_id,
            first_cell,
            anchor,
            values,
            weights,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }

    let graph = GraphMap::new(nodes, segments).map_err(|e| Error::Corrupt(e.to_string()))?;
    if graph.is_closed() != closed {
        return Err(Error::Corrupt("closed flag disagrees with graph".into()));
    }
    let master = MasterProfile::from_parts(spacing, closed, parts)?;
    let expected = MasterProfile::new(&graph, spacing)?;
    let layout_matches = expected.cell_count() == master.cell_count()
        && expected
            .segments()
            .iter()
            .zip(master.segments())
            .all(|(a, b)| a.segment_id == b.segment_id && a.first_cell == b.first_cell)
        && expected.segments().len() == master.segments().len();
    if !layout_matches {
        return Err(Error::Corrupt("cell layout does not match graph".into()));
    }
    Ok(TerrainMap { graph, master })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Corrupt(format!("unexpected end of data at byte {}", self.pos)))?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}
