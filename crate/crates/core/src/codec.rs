//! VLPC: little-endian serialization of a built octree.
//!
//! Layout: a 65-byte header, one record per node sorted by path, then the payload.
//! Leaf points take 16 bytes (three `f32` offsets from the node minimum, RGB, one zero
//! pad byte); voxels take 6 bytes (grid coordinates then RGB).

use std::io::{Read, Write};

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::model::{
    BuildConfig, ColorRgb, NodeContent, NodeId, NodePath, Octree, OctreeNode, Point, Strategy,
    Voxel, MAX_TREE_DEPTH,
};

pub const MAGIC: [u8; 4] = *b"VLPC";
pub const VERSION: u32 = 1;
pub const HEADER_SIZE: usize = 65;
/// Node record size without the path bytes.
pub const NODE_RECORD_BASE: usize = 15;
pub const POINT_RECORD_SIZE: usize = 16;
pub const VOXEL_RECORD_SIZE: usize = 6;

const KIND_LEAF: u8 = 0;
const KIND_INNER: u8 = 1;
const FLAG_OVERSIZED: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FileHeader {
    pub version: u32,
    pub world_min: [f64; 3],
    pub world_size: f64,
    pub threshold: u32,
    pub point_count: u64,
    pub node_count: u32,
    pub strategy: u8,
    pub seed: u64,
}

impl FileHeader {
    fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&MAGIC)?;
        w.write_u32::<LittleEndian>(self.version)?;
        for c in self.world_min {
            w.write_f64::<LittleEndian>(c)?;
        }
        w.write_f64::<LittleEndian>(self.world_size)?;
        w.write_u32::<LittleEndian>(self.threshold)?;
        w.write_u64::<LittleEndian>(self.point_count)?;
        w.write_u32::<LittleEndian>(self.node_count)?;
        w.write_u8(self.strategy)?;
        w.write_u64::<LittleEndian>(self.seed)?;
        Ok(())
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(bytes);
        let magic = c.take(4, "header")?;
        if magic != MAGIC {
            return Err(Error::format(format!(
                "bad magic {magic:?}, expected \"VLPC\""
            )));
        }
        let version = c.u32("header")?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported version {version}")));
        }
        Ok(Self {
            version,
            world_min: [c.f64("header")?, c.f64("header")?, c.f64("header")?],
            world_size: c.f64("header")?,
            threshold: c.u32("header")?,
            point_count: c.u64("header")?,
            node_count: c.u32("header")?,
            strategy: c.u8("header")?,
            seed: c.u64("header")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRecord {
    pub path: NodePath,
    pub kind: u8,
    pub flags: u8,
    pub sample_count: u32,
    pub payload_offset: u64,
}

impl NodeRecord {
    pub fn size(&self) -> usize {
        NODE_RECORD_BASE + self.path.depth()
    }

    fn payload_len(&self) -> u64 {
        let unit = if self.kind == KIND_LEAF {
            POINT_RECORD_SIZE
        } else {
            VOXEL_RECORD_SIZE
        };
        self.sample_count as u64 * unit as u64
    }
}

/// Writes the tree and returns the number of bytes written.
pub fn encode<W: Write>(tree: &Octree, mut w: W) -> Result<u64> {
    let mut order: Vec<NodeId> = tree.ids().collect();
    order.sort_by_key(|&id| tree.node(id).path);

    let header = FileHeader {
        version: VERSION,
        world_min: tree.world_bounds().min,
        world_size: tree.world_bounds().size,
        threshold: tree.config().threshold,
        point_count: tree.point_count(),
        node_count: u32::try_from(order.len())
            .map_err(|_| Error::invalid("too many nodes for the VLPC format"))?,
        strategy: tree.config().strategy.code(),
        seed: tree.config().seed,
    };
    header.write(&mut w)?;
    let mut written = HEADER_SIZE as u64;

    let mut offset = 0u64;
    for &id in &order {
        let node = tree.node(id);
        let count = u32::try_from(node.sample_count())
            .map_err(|_| Error::invalid("node sample count exceeds 32 bits"))?;
        let record = NodeRecord {
            path: node.path,
            kind: if node.is_leaf() {
                KIND_LEAF
            } else {
                KIND_INNER
            },
            flags: if node.oversized { FLAG_OVERSIZED } else { 0 },
            sample_count: count,
            payload_offset: offset,
        };
        w.write_u8(record.path.depth() as u8)?;
        w.write_all(record.path.octants())?;
        w.write_u8(record.kind)?;
        w.write_u8(record.flags)?;
        w.write_u32::<LittleEndian>(record.sample_count)?;
        w.write_u64::<LittleEndian>(record.payload_offset)?;
        written += record.size() as u64;
        offset += record.payload_len();
    }

    let mut buf = Vec::with_capacity(POINT_RECORD_SIZE * 4096);
    for &id in &order {
        let node = tree.node(id);
        match &node.content {
            NodeContent::Leaf { points } => {
                for p in points {
                    for (c, lo) in p.position().into_iter().zip(node.bounds.min) {
                        buf.write_f32::<LittleEndian>((c - lo) as f32)?;
                    }
                    buf.extend_from_slice(&[p.color.r, p.color.g, p.color.b, 0]);
                    if buf.len() >= POINT_RECORD_SIZE * 4096 {
                        w.write_all(&buf)?;
                        buf.clear();
                    }
                }
            }
            NodeContent::Inner { voxels } => {
                for v in voxels {
                    buf.extend_from_slice(&[v.x, v.y, v.z, v.color.r, v.color.g, v.color.b]);
                    if buf.len() >= POINT_RECORD_SIZE * 4096 {
                        w.write_all(&buf)?;
                        buf.clear();
                    }
                }
            }
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(written + offset)
}

pub fn encode_to_vec(tree: &Octree) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    encode(tree, &mut out)?;
    Ok(out)
}

/// Reads a whole VLPC stream. Any structural defect fails the whole decode.
///
/// Voxel coordinates are not range-checked here; that belongs to validation.
pub fn decode<R: Read>(mut r: R) -> Result<Octree> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_bytes(&bytes)
}

pub fn decode_bytes(bytes: &[u8]) -> Result<Octree> {
    let (header, records, payload_start) = read_index(bytes)?;
    let world = Aabb::new(header.world_min, header.world_size)
        .map_err(|e| Error::format(format!("invalid world bounds: {e}")))?;
    let strategy = Strategy::from_code(header.strategy)
        .ok_or_else(|| Error::format(format!("unknown strategy code {}", header.strategy)))?;

    let payload = &bytes[payload_start..];
    let mut expected_offset = 0u64;
    for rec in &records {
        if rec.payload_offset != expected_offset {
            return Err(Error::format(format!(
                "payload offset {} of node {} is out of order (expected {expected_offset})",
                rec.payload_offset, rec.path
            )));
        }
        expected_offset += rec.payload_len();
    }
    if expected_offset > payload.len() as u64 {
        return Err(Error::format(format!(
            "truncated payload: need {expected_offset} bytes, have {}",
            payload.len()
        )));
    }
    if expected_offset < payload.len() as u64 {
        return Err(Error::format("trailing bytes after payload"));
    }

    let mut nodes: Vec<OctreeNode> = Vec::with_capacity(records.len());
    // Pre-order ids: the parent of each record is the nearest earlier record on its path.
    let mut stack: Vec<NodeId> = Vec::new();
    let mut oversized_depth: Option<usize> = None;
    for (i, rec) in records.iter().enumerate() {
        let id = NodeId(i as u32);
        let bounds = rec.path.bounds(&world);
        let start = rec.payload_offset as usize;
        let data = &payload[start..start + rec.payload_len() as usize];
        let content = match rec.kind {
            KIND_LEAF => NodeContent::Leaf {
                points: data
                    .chunks_exact(POINT_RECORD_SIZE)
                    .map(|chunk| {
                        let off = |k: usize| LittleEndian::read_f32(&chunk[4 * k..]) as f64;
                        Point::new(
                            bounds.min[0] + off(0),
                            bounds.min[1] + off(1),
                            bounds.min[2] + off(2),
                            ColorRgb::new(chunk[12], chunk[13], chunk[14]),
                        )
                    })
                    .collect(),
            },
            KIND_INNER => NodeContent::Inner {
                voxels: data
                    .chunks_exact(VOXEL_RECORD_SIZE)
                    .map(|c| Voxel::new(c[0], c[1], c[2], ColorRgb::new(c[3], c[4], c[5])))
                    .collect(),
            },
            other => return Err(Error::format(format!("unknown node kind {other}"))),
        };
        let oversized = rec.flags & FLAG_OVERSIZED != 0;
        if oversized {
            oversized_depth = Some(rec.path.depth());
        }
        nodes.push(OctreeNode {
            path: rec.path,
            bounds,
            content,
            children: [None; 8],
            oversized,
        });

        if let Some(parent_path) = rec.path.parent() {
            while let Some(&top) = stack.last() {
                if nodes[top.index()].path == parent_path {
                    break;
                }
                stack.pop();
            }
            let parent = *stack
                .last()
                .ok_or_else(|| Error::format(format!("node {} has no parent record", rec.path)))?;
            let octant = rec.path.last_octant().expect("non-root path") as usize;
            let parent_node = &mut nodes[parent.index()];
            if parent_node.is_leaf() {
                return Err(Error::format(format!(
                    "node {} has a leaf parent",
                    rec.path
                )));
            }
            parent_node.children[octant] = Some(id);
        } else if i != 0 {
            return Err(Error::format("duplicate root record"));
        }
        stack.push(id);
    }

    let config = BuildConfig {
        threshold: header.threshold,
        strategy,
        seed: header.seed,
        // The format does not carry the depth cap; oversized leaves mark it when present.
        max_depth: oversized_depth.unwrap_or(MAX_TREE_DEPTH) as u8,
        ..BuildConfig::default()
    };
    Ok(Octree::from_parts(nodes, world, config, header.point_count))
}

/// Parses header and node table, checking ordering and uniqueness of paths.
pub fn read_index(bytes: &[u8]) -> Result<(FileHeader, Vec<NodeRecord>, usize)> {
    let header = FileHeader::parse(bytes)?;
    let mut c = Cursor::new(bytes);
    c.pos = HEADER_SIZE;
    if header.node_count == 0 {
        return Err(Error::format("missing root record"));
    }
    let mut records: Vec<NodeRecord> = Vec::with_capacity(header.node_count.min(1 << 20) as usize);
    for _ in 0..header.node_count {
        let len = c.u8("node table")? as usize;
        if len > MAX_TREE_DEPTH {
            return Err(Error::format(format!(
                "node path length {len} exceeds {MAX_TREE_DEPTH}"
            )));
        }
        let path = NodePath::from_octants(c.take(len, "node table")?)
            .map_err(|e| Error::format(e.to_string()))?;
        let rec = NodeRecord {
            path,
            kind: c.u8("node table")?,
            flags: c.u8("node table")?,
            sample_count: c.u32("node table")?,
            payload_offset: c.u64("node table")?,
        };
        if let Some(prev) = records.last() {
            if prev.path >= rec.path {
                return Err(Error::format(format!(
                    "node records out of order or duplicated at {}",
                    rec.path
                )));
            }
        } else if !rec.path.is_root() {
            return Err(Error::format("missing root record"));
        }
        records.push(rec);
    }
    Ok((header, records, c.pos))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(format!("truncated {what}"))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8, what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8, what)?))
    }
}
