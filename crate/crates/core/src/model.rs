//! Core domain types: points, voxels, node addressing and the octree itself.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{child_bounds, Aabb};

/// Deepest supported node path.
pub const MAX_TREE_DEPTH: usize = 16;

/// Side length of the per-node voxel sampling grid.
pub const GRID_SIZE: u32 = 128;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct ColorRgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ColorRgb {
    /// Fallback color for inputs without color attributes.
    pub const GRAY: ColorRgb = ColorRgb::new(128, 128, 128);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    /// Reduces 16-bit channels by keeping the high byte.
    pub const fn from_u16(r: u16, g: u16, b: u16) -> Self {
        Self::new((r >> 8) as u8, (g >> 8) as u8, (b >> 8) as u8)
    }

    pub fn channels(&self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub color: ColorRgb,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, color: ColorRgb) -> Self {
        Self { x, y, z, color }
    }

    #[inline]
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Octant digits from the root down to a node.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NodePath {
    digits: [u8; MAX_TREE_DEPTH],
    len: u8,
}

impl NodePath {
    pub const fn root() -> Self {
        Self {
            digits: [0; MAX_TREE_DEPTH],
            len: 0,
        }
    }

    pub fn from_octants(octants: &[u8]) -> Result<Self> {
        if octants.len() > MAX_TREE_DEPTH {
            return Err(Error::invalid(format!(
                "path of depth {} exceeds {MAX_TREE_DEPTH}",
                octants.len()
            )));
        }
        let mut path = Self::root();
        for &o in octants {
            if o > 7 {
                return Err(Error::invalid(format!("octant {o} out of range")));
            }
            path.digits[path.len as usize] = o;
            path.len += 1;
        }
        Ok(path)
    }

    /// Child path; panics past the maximum depth.
    pub fn child(&self, octant: u8) -> Self {
        assert!(octant < 8, "octant {octant} out of range");
        assert!(
            (self.len as usize) < MAX_TREE_DEPTH,
            "path exceeds maximum depth"
        );
        let mut child = *self;
        child.digits[child.len as usize] = octant;
        child.len += 1;
        child
    }

    pub fn parent(&self) -> Option<Self> {
        if self.len == 0 {
            return None;
        }
        let mut parent = *self;
        parent.len -= 1;
        parent.digits[parent.len as usize] = 0;
        Some(parent)
    }

    pub fn depth(&self) -> usize {
        self.len as usize
    }

    pub fn is_root(&self) -> bool {
        self.len == 0
    }

    pub fn octants(&self) -> &[u8] {
        &self.digits[..self.len as usize]
    }

    pub fn last_octant(&self) -> Option<u8> {
        self.octants().last().copied()
    }

    /// Bounds reached by descending from `root` along this path.
    pub fn bounds(&self, root: &Aabb<f64>) -> Aabb<f64> {
        self.octants()
            .iter()
            .fold(*root, |b, &o| child_bounds(&b, o))
    }
}

impl Ord for NodePath {
    fn cmp(&self, other: &Self) -> Ordering {
        self.octants().cmp(other.octants())
    }
}

impl PartialOrd for NodePath {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("r")?;
        for o in self.octants() {
            write!(f, "{o}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for NodePath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Quantized sample of an inner node. Coordinates index the node's 128^3 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Voxel {
    pub x: u8,
    pub y: u8,
    pub z: u8,
    pub color: ColorRgb,
}

impl Voxel {
    pub const fn new(x: u8, y: u8, z: u8, color: ColorRgb) -> Self {
        Self { x, y, z, color }
    }

    pub fn coords(&self) -> [u8; 3] {
        [self.x, self.y, self.z]
    }

    pub fn in_grid(&self) -> bool {
        self.coords().iter().all(|&c| u32::from(c) < GRID_SIZE)
    }

    /// Octant of the node that contains this voxel.
    pub fn octant(&self) -> u8 {
        let half = (GRID_SIZE / 2) as u8;
        self.coords()
            .iter()
            .enumerate()
            .fold(0, |acc, (axis, &c)| acc | (u8::from(c >= half) << axis))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Leaf,
    Inner,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeContent {
    Leaf { points: Vec<Point> },
    Inner { voxels: Vec<Voxel> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OctreeNode {
    pub path: NodePath,
    pub bounds: Aabb<f64>,
    pub content: NodeContent,
    pub children: [Option<NodeId>; 8],
    /// Leaf that still exceeds the threshold at the maximum depth.
    pub oversized: bool,
}

impl OctreeNode {
    pub(crate) fn leaf(
        path: NodePath,
        bounds: Aabb<f64>,
        capacity: usize,
        oversized: bool,
    ) -> Self {
        Self {
            path,
            bounds,
            content: NodeContent::Leaf {
                points: Vec::with_capacity(capacity),
            },
            children: [None; 8],
            oversized,
        }
    }

    pub(crate) fn inner(path: NodePath, bounds: Aabb<f64>) -> Self {
        Self {
            path,
            bounds,
            content: NodeContent::Inner { voxels: Vec::new() },
            children: [None; 8],
            oversized: false,
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self.content {
            NodeContent::Leaf { .. } => NodeKind::Leaf,
            NodeContent::Inner { .. } => NodeKind::Inner,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.kind() == NodeKind::Leaf
    }

    pub fn depth(&self) -> usize {
        self.path.depth()
    }

    /// Points of a leaf; empty for inner nodes.
    pub fn points(&self) -> &[Point] {
        match &self.content {
            NodeContent::Leaf { points } => points,
            NodeContent::Inner { .. } => &[],
        }
    }

    /// Voxels of an inner node; empty for leaves.
    pub fn voxels(&self) -> &[Voxel] {
        match &self.content {
            NodeContent::Leaf { .. } => &[],
            NodeContent::Inner { voxels } => voxels,
        }
    }

    pub fn sample_count(&self) -> usize {
        match &self.content {
            NodeContent::Leaf { points } => points.len(),
            NodeContent::Inner { voxels } => voxels.len(),
        }
    }

    /// `(octant, child)` pairs of existing children.
    pub fn child_ids(&self) -> impl Iterator<Item = (u8, NodeId)> + '_ {
        self.children
            .iter()
            .enumerate()
            .filter_map(|(o, c)| c.map(|id| (o as u8, id)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    FirstCome,
    Random,
    Average,
    Weighted,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::FirstCome,
        Strategy::Random,
        Strategy::Average,
        Strategy::Weighted,
    ];

    pub fn code(self) -> u8 {
        match self {
            Strategy::FirstCome => 0,
            Strategy::Random => 1,
            Strategy::Average => 2,
            Strategy::Weighted => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FirstCome => "first-come",
            Strategy::Random => "random",
            Strategy::Average => "average",
            Strategy::Weighted => "weighted",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown strategy '{s}', expected one of first-come, random, average, weighted"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildConfig {
    /// Maximum number of points per leaf.
    pub threshold: u32,
    /// Depth of the main counting grid.
    pub initial_depth: u8,
    /// Levels added by each extension round.
    pub extension_depth: u8,
    pub max_depth: u8,
    pub grid_size: u32,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            threshold: 50_000,
            initial_depth: 8,
            extension_depth: 4,
            max_depth: MAX_TREE_DEPTH as u8,
            grid_size: GRID_SIZE,
            strategy: Strategy::Weighted,
            seed: 0,
        }
    }
}

impl BuildConfig {
    pub fn with_threshold(mut self, threshold: u32) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_depth(mut self, max_depth: u8) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold == 0 {
            return Err(Error::invalid("threshold must be at least 1"));
        }
        if self.max_depth as usize > MAX_TREE_DEPTH {
            return Err(Error::invalid(format!(
                "max depth {} exceeds {MAX_TREE_DEPTH}",
                self.max_depth
            )));
        }
        if self.initial_depth == 0 || self.extension_depth == 0 {
            return Err(Error::invalid("grid depths must be at least 1"));
        }
        if self.initial_depth > 10 {
            return Err(Error::invalid("initial depth above 10 is not supported"));
        }
        if self.grid_size != GRID_SIZE {
            return Err(Error::invalid(format!("grid size must be {GRID_SIZE}")));
        }
        Ok(())
    }

    /// Depth of the main counting grid after capping at `max_depth`.
    pub fn main_depth(&self) -> u8 {
        self.initial_depth.min(self.max_depth)
    }
}

/// Layered point cloud: leaves hold the original points, inner nodes hold voxels.
///
/// Nodes live in an arena in pre-order (sorted by path); index 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Octree {
    nodes: Vec<OctreeNode>,
    world_bounds: Aabb<f64>,
    config: BuildConfig,
    point_count: u64,
}

impl Octree {
    pub(crate) fn from_parts(
        nodes: Vec<OctreeNode>,
        world_bounds: Aabb<f64>,
        config: BuildConfig,
        point_count: u64,
    ) -> Self {
        debug_assert!(!nodes.is_empty() && nodes[0].path.is_root());
        Self {
            nodes,
            world_bounds,
            config,
            point_count,
        }
    }

    pub fn root(&self) -> &OctreeNode {
        &self.nodes[0]
    }

    pub fn root_id(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &OctreeNode {
        &self.nodes[id.index()]
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut OctreeNode {
        &mut self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[OctreeNode] {
        &self.nodes
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn world_bounds(&self) -> &Aabb<f64> {
        &self.world_bounds
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub(crate) fn config_mut(&mut self) -> &mut BuildConfig {
        &mut self.config
    }

    /// Number of input points the tree was built from.
    pub fn point_count(&self) -> u64 {
        self.point_count
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &OctreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn inner_nodes(&self) -> impl Iterator<Item = &OctreeNode> {
        self.nodes.iter().filter(|n| !n.is_leaf())
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth()).max().unwrap_or(0)
    }

    pub fn leaf_point_total(&self) -> u64 {
        self.leaves().map(|n| n.points().len() as u64).sum()
    }

    pub fn voxel_total(&self) -> u64 {
        self.inner_nodes().map(|n| n.voxels().len() as u64).sum()
    }

    /// Looks a node up by walking child links.
    pub fn find(&self, path: &NodePath) -> Option<NodeId> {
        let mut id = self.root_id();
        for &o in path.octants() {
            id = self.node(id).children[o as usize]?;
        }
        Some(id)
    }
}
