//! Reference pyramid mapping counting cells to octree nodes, and point insertion.

use rayon::prelude::*;

use super::pyramid::{cells_at, linear_index, unit_cell, CountCell, CountPyramid, ExtendedPyramid};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::model::{BuildConfig, NodeContent, NodeId, NodePath, Octree, OctreeNode, Point};

const TAG_SHIFT: u32 = 30;
const ID_MASK: u32 = (1 << TAG_SHIFT) - 1;
const TAG_LEAF: u32 = 1;
const TAG_INNER: u32 = 2;
const TAG_EXTENDED: u32 = 3;

/// Packed reference cell: two tag bits over a 30-bit id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[repr(transparent)]
pub struct TargetCell(u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Empty,
    Leaf(NodeId),
    Inner(NodeId),
    Extended(u32),
}

impl TargetCell {
    pub const EMPTY: TargetCell = TargetCell(0);

    fn tagged(tag: u32, id: u32) -> Self {
        debug_assert!(id <= ID_MASK);
        TargetCell(tag << TAG_SHIFT | id)
    }

    #[inline]
    pub fn get(self) -> Target {
        let id = self.0 & ID_MASK;
        match self.0 >> TAG_SHIFT {
            0 => Target::Empty,
            TAG_LEAF => Target::Leaf(NodeId(id)),
            TAG_INNER => Target::Inner(NodeId(id)),
            _ => Target::Extended(id),
        }
    }
}

impl From<Target> for TargetCell {
    fn from(t: Target) -> Self {
        match t {
            Target::Empty => TargetCell::EMPTY,
            Target::Leaf(id) => TargetCell::tagged(TAG_LEAF, id.0),
            Target::Inner(id) => TargetCell::tagged(TAG_INNER, id.0),
            Target::Extended(e) => TargetCell::tagged(TAG_EXTENDED, e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtendedTargets {
    pub anchor_depth: u8,
    pub anchor: [u32; 3],
    /// Inner node created for the refined cell.
    pub node: NodeId,
    levels: Vec<Vec<TargetCell>>,
}

impl ExtendedTargets {
    pub fn depth(&self) -> u8 {
        (self.levels.len() - 1) as u8
    }

    pub fn finest_depth(&self) -> u8 {
        self.anchor_depth + self.depth()
    }
}

#[derive(Debug, Clone)]
pub struct TargetPyramid {
    main: Vec<Vec<TargetCell>>,
    extended: Vec<ExtendedTargets>,
}

impl TargetPyramid {
    pub fn depth(&self) -> u8 {
        (self.main.len() - 1) as u8
    }

    pub fn main_cell(&self, level: u8, c: [u32; 3]) -> Target {
        self.main[level as usize][linear_index(c, level)].get()
    }

    pub fn extended(&self) -> &[ExtendedTargets] {
        &self.extended
    }

    pub fn extended_cell(&self, ext: usize, level: u8, c: [u32; 3]) -> Target {
        self.extended[ext].levels[level as usize][linear_index(c, level)].get()
    }

    /// Finds the leaf for a unit coordinate.
    ///
    /// Projects to the finest main level, descends through extended references and walks up
    /// through empty cells until a leaf reference appears.
    pub fn resolve(&self, u: [f64; 3]) -> Result<NodeId> {
        let mut grid: Option<usize> = None;
        let mut level = self.depth();
        let mut cell = unit_cell(u, level);
        loop {
            let levels = match grid {
                None => &self.main,
                Some(e) => &self.extended[e].levels,
            };
            match levels[level as usize][linear_index(cell, level)].get() {
                Target::Leaf(id) => return Ok(id),
                Target::Extended(e) => {
                    let ext = &self.extended[e as usize];
                    if level as usize != levels.len() - 1 {
                        return Err(Error::internal("extended reference above the finest level"));
                    }
                    let depth = ext.depth();
                    let g = unit_cell(u, ext.finest_depth());
                    cell = [
                        g[0] - (ext.anchor[0] << depth),
                        g[1] - (ext.anchor[1] << depth),
                        g[2] - (ext.anchor[2] << depth),
                    ];
                    level = depth;
                    grid = Some(e as usize);
                }
                Target::Empty => {
                    // Level 0 of an extended grid is the refined cell, which is never a leaf.
                    let floor = if grid.is_some() { 1 } else { 0 };
                    if level <= floor {
                        return Err(Error::internal(format!(
                            "point at unit coordinates {u:?} resolves to no leaf"
                        )));
                    }
                    level -= 1;
                    cell = [cell[0] >> 1, cell[1] >> 1, cell[2] >> 1];
                }
                Target::Inner(id) => {
                    return Err(Error::internal(format!(
                        "point at unit coordinates {u:?} resolves to inner node {}",
                        id.0
                    )))
                }
            }
        }
    }
}

/// Node hierarchy with empty leaves plus the reference pyramid used to fill them.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub nodes: Vec<OctreeNode>,
    pub targets: TargetPyramid,
    /// Expected point count per node (zero for inner nodes).
    pub leaf_counts: Vec<u32>,
}

impl Skeleton {
    pub fn into_octree(self, bounds: Aabb<f64>, config: BuildConfig, point_count: u64) -> Octree {
        Octree::from_parts(self.nodes, bounds, config, point_count)
    }
}

struct Builder<'a> {
    main: &'a mut Vec<Vec<u32>>,
    extended: &'a mut [ExtendedPyramid],
    extended_nodes: Vec<Option<NodeId>>,
    nodes: Vec<OctreeNode>,
    leaf_counts: Vec<u32>,
    threshold: u32,
    max_depth: usize,
}

impl Builder<'_> {
    fn levels(&mut self, grid: Option<usize>) -> &mut Vec<Vec<u32>> {
        match grid {
            None => self.main,
            Some(e) => &mut self.extended[e].levels,
        }
    }

    fn push(&mut self, node: OctreeNode, count: u32) -> Result<NodeId> {
        if self.nodes.len() > super::MAX_NODES {
            return Err(Error::internal("node count exceeds reference capacity"));
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        self.leaf_counts.push(count);
        Ok(id)
    }

    /// Pre-order visit; each reached cell is read once and then overwritten with its target.
    fn visit(
        &mut self,
        grid: Option<usize>,
        level: u8,
        cell: [u32; 3],
        path: NodePath,
        bounds: Aabb<f64>,
    ) -> Result<Option<NodeId>> {
        let idx = linear_index(cell, level);
        let levels = self.levels(grid);
        let finest = (levels.len() - 1) as u8;
        let raw = levels[level as usize][idx];
        let (id, children_in) = match CountCell::decode(raw) {
            CountCell::Count(0) => return Ok(None),
            CountCell::Count(n) => {
                let oversized = n > self.threshold;
                if oversized && path.depth() != self.max_depth {
                    return Err(Error::internal(format!(
                        "leaf {path} holds {n} points above the threshold before the maximum depth"
                    )));
                }
                let id = self.push(OctreeNode::leaf(path, bounds, n as usize, oversized), n)?;
                self.levels(grid)[level as usize][idx] = TargetCell::from(Target::Leaf(id)).0;
                return Ok(Some(id));
            }
            CountCell::Unmergeable => {
                if level == finest {
                    return Err(Error::internal("unmergeable flag on a finest level"));
                }
                let id = self.push(OctreeNode::inner(path, bounds), 0)?;
                self.levels(grid)[level as usize][idx] = TargetCell::from(Target::Inner(id)).0;
                (
                    id,
                    (grid, level + 1, [cell[0] * 2, cell[1] * 2, cell[2] * 2]),
                )
            }
            CountCell::Extended(e) => {
                if level != finest {
                    return Err(Error::internal("extended reference above the finest level"));
                }
                let id = self.push(OctreeNode::inner(path, bounds), 0)?;
                self.levels(grid)[level as usize][idx] = TargetCell::from(Target::Extended(e)).0;
                self.extended_nodes[e as usize] = Some(id);
                (id, (Some(e as usize), 1, [0; 3]))
            }
        };

        let (child_grid, child_level, base) = children_in;
        let mut any = false;
        for octant in 0..8u8 {
            let c = [
                base[0] + (octant & 1) as u32,
                base[1] + ((octant >> 1) & 1) as u32,
                base[2] + ((octant >> 2) & 1) as u32,
            ];
            let child = self.visit(
                child_grid,
                child_level,
                c,
                path.child(octant),
                bounds.child(octant),
            )?;
            any |= child.is_some();
            self.nodes[id.index()].children[octant as usize] = child;
        }
        if !any {
            return Err(Error::internal(format!(
                "inner node {path} has no children"
            )));
        }
        Ok(Some(id))
    }
}

fn nonzero_cells(levels: &[Vec<u32>]) -> usize {
    levels.iter().flatten().filter(|&&raw| raw != 0).count()
}

/// Allocates one leaf per positive counter and one inner node per unmergeable or extended
/// cell, links them by path and turns the counting pyramids into reference pyramids.
pub fn build_targets(
    mut pyramid: CountPyramid,
    mut extended: Vec<ExtendedPyramid>,
    bounds: &Aabb<f64>,
    config: &BuildConfig,
) -> Result<Skeleton> {
    for ext in &mut extended {
        // Level 0 records the merge status of the refined cell, which always exceeds the
        // threshold; the refined cell's node is created from the parent grid's reference.
        if ext.levels[0][0] != CountCell::Unmergeable.encode() {
            return Err(Error::internal(
                "extended pyramid root merged below the threshold",
            ));
        }
        ext.levels[0][0] = 0;
    }
    let expected = nonzero_cells(&pyramid.levels)
        + extended
            .iter()
            .map(|e| nonzero_cells(&e.levels))
            .sum::<usize>();

    let mut builder = Builder {
        main: &mut pyramid.levels,
        extended_nodes: vec![None; extended.len()],
        extended: &mut extended,
        nodes: Vec::new(),
        leaf_counts: Vec::new(),
        threshold: config.threshold,
        max_depth: config.max_depth as usize,
    };
    let root = builder.visit(None, 0, [0; 3], NodePath::root(), *bounds)?;
    if root != Some(NodeId(0)) {
        return Err(Error::internal("counting pyramid has an empty root"));
    }
    if builder.nodes.len() != expected {
        return Err(Error::internal(format!(
            "{} nodes reachable from the root but {expected} non-empty cells",
            builder.nodes.len()
        )));
    }
    let Builder {
        extended_nodes,
        nodes,
        leaf_counts,
        ..
    } = builder;

    let to_targets = |levels: Vec<Vec<u32>>| -> Vec<Vec<TargetCell>> {
        levels
            .into_iter()
            .map(|l| l.into_iter().map(TargetCell).collect())
            .collect()
    };
    let extended = extended
        .into_iter()
        .zip(extended_nodes)
        .map(|(ext, node)| {
            Ok(ExtendedTargets {
                anchor_depth: ext.anchor_depth,
                anchor: ext.anchor,
                node: node.ok_or_else(|| Error::internal("unreachable extended pyramid"))?,
                levels: to_targets(ext.levels),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(extended
        .iter()
        .all(|e| e.levels[e.depth() as usize].len() == cells_at(e.depth())));

    Ok(Skeleton {
        nodes,
        targets: TargetPyramid {
            main: to_targets(pyramid.levels),
            extended,
        },
        leaf_counts,
    })
}

/// Appends every point to its leaf, preserving input order within each leaf.
pub fn insert(points: &[Point], skeleton: &mut Skeleton, bounds: &Aabb<f64>) -> Result<()> {
    insert_reads(points, skeleton, bounds).map(|_| ())
}

pub(crate) fn insert_reads(
    points: &[Point],
    skeleton: &mut Skeleton,
    bounds: &Aabb<f64>,
) -> Result<u64> {
    let targets = &skeleton.targets;
    let leaf_of: Vec<NodeId> = points
        .par_iter()
        .map(|p| targets.resolve(bounds.unit_coords(p.position())))
        .collect::<Result<_>>()?;

    for (p, id) in points.iter().zip(&leaf_of) {
        match &mut skeleton.nodes[id.index()].content {
            NodeContent::Leaf { points } => points.push(*p),
            NodeContent::Inner { .. } => {
                return Err(Error::internal("point resolved to an inner node"));
            }
        }
    }
    for (node, &expected) in skeleton.nodes.iter().zip(&skeleton.leaf_counts) {
        if node.is_leaf() && node.points().len() != expected as usize {
            return Err(Error::internal(format!(
                "leaf {} received {} points, expected {expected}",
                node.path,
                node.points().len()
            )));
        }
    }
    Ok(leaf_of.len() as u64)
}
