//! Bottom-up population of inner nodes with voxelized child samples.
//!
//! Every strategy projects the points and voxels of a node's children into a 128^3
//! sampling grid and emits one voxel per occupied cell; they differ only in the color.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ColorRgb, NodeContent, NodeId, NodePath, Octree, Strategy, Voxel, GRID_SIZE};
use crate::rng::splitmix64;

const GRID: usize = GRID_SIZE as usize;
const GRID_CELLS: usize = GRID * GRID * GRID;
const EMPTY_SLOT: u32 = u32::MAX;

/// Random sampling packs the sample ordinal into the low 20 bits of the selection key.
pub const RANDOM_INDEX_BITS: u32 = 20;
const RANDOM_INDEX_MASK: u32 = (1 << RANDOM_INDEX_BITS) - 1;
const RANDOM_VALUE_MASK: u32 = !RANDOM_INDEX_MASK;

/// A child point or voxel projected into the parent's sampling grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleView {
    /// Position in grid units, each component in `[0, 128)`.
    pub gpos: [f64; 3],
    pub color: ColorRgb,
    /// Canonical index: octants in order, then each child's samples in stored order.
    pub ordinal: u32,
}

impl SampleView {
    #[inline]
    pub fn cell(&self) -> [u32; 3] {
        [
            self.gpos[0] as u32,
            self.gpos[1] as u32,
            self.gpos[2] as u32,
        ]
    }

    #[inline]
    fn cell_index(&self) -> usize {
        let c = self.cell();
        grid_index(c)
    }
}

#[inline]
fn grid_index(c: [u32; 3]) -> usize {
    c[0] as usize + GRID * (c[1] as usize + GRID * c[2] as usize)
}

#[inline]
fn grid_cell(idx: usize) -> [u32; 3] {
    [
        (idx % GRID) as u32,
        ((idx / GRID) % GRID) as u32,
        (idx / (GRID * GRID)) as u32,
    ]
}

fn voxel_at(idx: usize, color: ColorRgb) -> Voxel {
    let c = grid_cell(idx);
    Voxel::new(c[0] as u8, c[1] as u8, c[2] as u8, color)
}

/// Largest `f64` below the grid size; leaf points on the max face clamp to it.
fn grid_upper() -> f64 {
    f64::from_bits((GRID_SIZE as f64).to_bits() - 1)
}

/// Sum per channel plus number of contributing samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccumCell {
    pub r_sum: u64,
    pub g_sum: u64,
    pub b_sum: u64,
    pub count: u64,
}

impl AccumCell {
    fn add(&mut self, c: ColorRgb) {
        self.r_sum += c.r as u64;
        self.g_sum += c.g as u64;
        self.b_sum += c.b as u64;
        self.count += 1;
    }

    /// Channel means rounded half away from zero.
    pub fn mean(&self) -> ColorRgb {
        let avg = |sum: u64| ((2 * sum + self.count) / (2 * self.count)) as u8;
        ColorRgb::new(avg(self.r_sum), avg(self.g_sum), avg(self.b_sum))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightedCell {
    pub r_sum: f64,
    pub g_sum: f64,
    pub b_sum: f64,
    pub w_sum: f64,
    /// Set when at least one sample lies inside this cell.
    pub occupied: bool,
}

impl WeightedCell {
    fn add(&mut self, c: ColorRgb, w: f64) {
        self.r_sum += w * c.r as f64;
        self.g_sum += w * c.g as f64;
        self.b_sum += w * c.b as f64;
        self.w_sum += w;
    }

    pub fn mean(&self) -> ColorRgb {
        let ch = |sum: f64| (sum / self.w_sum).round().clamp(0.0, 255.0) as u8;
        ColorRgb::new(ch(self.r_sum), ch(self.g_sum), ch(self.b_sum))
    }
}

/// Linear falloff weight with cutoff at one cell width.
#[inline]
pub fn neighbor_weight(distance: f64) -> f64 {
    (1.0 - distance).clamp(0.0, 1.0)
}

/// Reusable 128^3 slot grid. Each touched cell maps to a slot in a per-node list, and only
/// touched cells are reset between nodes.
#[derive(Debug)]
pub struct SamplingGrid {
    slots: Vec<u32>,
    touched: Vec<u32>,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self::new()
    }
}

impl SamplingGrid {
    pub fn new() -> Self {
        Self {
            slots: vec![EMPTY_SLOT; GRID_CELLS],
            touched: Vec::new(),
        }
    }

    /// Slot of a cell, allocating the next one on first touch.
    #[inline]
    fn slot(&mut self, idx: usize) -> (usize, bool) {
        let s = self.slots[idx];
        if s == EMPTY_SLOT {
            let s = self.touched.len() as u32;
            self.slots[idx] = s;
            self.touched.push(idx as u32);
            (s as usize, true)
        } else {
            (s as usize, false)
        }
    }

    #[inline]
    fn cell_of_slot(&self, slot: usize) -> usize {
        self.touched[slot] as usize
    }

    fn clear(&mut self) {
        for &idx in &self.touched {
            self.slots[idx as usize] = EMPTY_SLOT;
        }
        self.touched.clear();
    }
}

/// Projects the points and voxels of all children of an inner node into its sampling grid.
pub fn project_child_samples(tree: &Octree, id: NodeId) -> Result<Vec<SampleView>> {
    let node = tree.node(id);
    if node.is_leaf() {
        return Err(Error::invalid(format!("node {} is a leaf", node.path)));
    }
    let half = GRID_SIZE as f64 / 2.0;
    let (size, dim) = (node.bounds.size, GRID_SIZE as f64);
    let upper = grid_upper();
    let mut samples = Vec::new();
    for (octant, child_id) in node.child_ids() {
        let child = tree.node(child_id);
        let offset = [
            half * (octant & 1) as f64,
            half * ((octant >> 1) & 1) as f64,
            half * ((octant >> 2) & 1) as f64,
        ];
        let before = samples.len();
        match &child.content {
            NodeContent::Leaf { points } => {
                samples.extend(points.iter().map(|p| {
                    let pos = p.position();
                    let g = |axis: usize| {
                        ((pos[axis] - node.bounds.min[axis]) / size * dim).clamp(0.0, upper)
                    };
                    SampleView {
                        gpos: [g(0), g(1), g(2)],
                        color: p.color,
                        ordinal: 0,
                    }
                }));
            }
            NodeContent::Inner { voxels } => {
                samples.extend(voxels.iter().map(|v| {
                    let c = v.coords();
                    let g = |axis: usize| offset[axis] + (c[axis] as f64 + 0.5) / 2.0;
                    SampleView {
                        gpos: [g(0), g(1), g(2)],
                        color: v.color,
                        ordinal: 0,
                    }
                }));
            }
        }
        if samples.len() == before {
            return Err(Error::internal(format!(
                "child {} has no samples",
                child.path
            )));
        }
    }
    if samples.len() > u32::MAX as usize {
        return Err(Error::internal("sample count exceeds 32-bit ordinals"));
    }
    for (i, s) in samples.iter_mut().enumerate() {
        s.ordinal = i as u32;
    }
    Ok(samples)
}

/// Keeps the first sample (lowest ordinal) of every cell. Voxels come out in ascending
/// winner ordinal. Samples must be ordered by ordinal.
pub fn sample_first_come(samples: &[SampleView], grid: &mut SamplingGrid) -> Vec<Voxel> {
    let mut voxels = Vec::new();
    for s in samples {
        let idx = s.cell_index();
        if grid.slot(idx).1 {
            voxels.push(voxel_at(idx, s.color));
        }
    }
    grid.clear();
    voxels
}

/// Seed of the per-node random stream: a SplitMix64 fold over the octant digits.
pub fn path_hash(path: &NodePath, seed: u64) -> u64 {
    path.octants().iter().fold(seed, |key, &o| {
        splitmix64(key.wrapping_mul(8).wrapping_add(o as u64 + 1))
    })
}

/// Selection key: twelve random high bits over the 20-bit sample index.
#[inline]
pub fn random_key(rand32: u32, ordinal: u32) -> u32 {
    (rand32 & RANDOM_VALUE_MASK) | (ordinal & RANDOM_INDEX_MASK)
}

/// High 32 bits of the SplitMix64 hash for one sample of one node.
#[inline]
pub fn sample_random_bits(node_hash: u64, ordinal: u32) -> u32 {
    (splitmix64(node_hash ^ ordinal as u64) >> 32) as u32
}

/// Keeps the sample with the largest random key in every cell.
pub fn sample_random(
    samples: &[SampleView],
    path: &NodePath,
    seed: u64,
    grid: &mut SamplingGrid,
) -> Result<Vec<Voxel>> {
    if samples.len() > RANDOM_INDEX_MASK as usize {
        return Err(Error::SampleIndexOverflow(samples.len()));
    }
    let node_hash = path_hash(path, seed);
    let mut best: Vec<(u32, ColorRgb)> = Vec::new();
    for s in samples {
        let key = random_key(sample_random_bits(node_hash, s.ordinal), s.ordinal);
        let (slot, fresh) = grid.slot(s.cell_index());
        if fresh {
            best.push((key, s.color));
        } else if key > best[slot].0 {
            best[slot] = (key, s.color);
        }
    }
    let voxels = best
        .iter()
        .enumerate()
        .map(|(slot, &(_, color))| voxel_at(grid.cell_of_slot(slot), color))
        .collect();
    grid.clear();
    Ok(voxels)
}

/// Mean color of all samples in each cell.
pub fn sample_average(samples: &[SampleView], grid: &mut SamplingGrid) -> Vec<Voxel> {
    let mut cells: Vec<AccumCell> = Vec::new();
    for s in samples {
        let (slot, fresh) = grid.slot(s.cell_index());
        if fresh {
            cells.push(AccumCell::default());
        }
        cells[slot].add(s.color);
    }
    let voxels = cells
        .iter()
        .enumerate()
        .map(|(slot, acc)| voxel_at(grid.cell_of_slot(slot), acc.mean()))
        .collect();
    grid.clear();
    voxels
}

/// Distance-weighted mean over the 2x2x2 cells around each sample, emitted only for cells
/// that contain a sample.
pub fn sample_weighted(samples: &[SampleView], grid: &mut SamplingGrid) -> Vec<Voxel> {
    let mut cells: Vec<WeightedCell> = Vec::new();
    let mut occupied_order: Vec<usize> = Vec::new();
    for s in samples {
        let base = [
            (s.gpos[0] - 0.5).floor() as i64,
            (s.gpos[1] - 0.5).floor() as i64,
            (s.gpos[2] - 0.5).floor() as i64,
        ];
        for dz in 0..2 {
            for dy in 0..2 {
                for dx in 0..2 {
                    let c = [base[0] + dx, base[1] + dy, base[2] + dz];
                    if c.iter().any(|&v| v < 0 || v >= GRID as i64) {
                        continue;
                    }
                    let d = [
                        s.gpos[0] - (c[0] as f64 + 0.5),
                        s.gpos[1] - (c[1] as f64 + 0.5),
                        s.gpos[2] - (c[2] as f64 + 0.5),
                    ];
                    let w = neighbor_weight((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt());
                    if w <= 0.0 {
                        continue;
                    }
                    let (slot, fresh) =
                        grid.slot(grid_index([c[0] as u32, c[1] as u32, c[2] as u32]));
                    if fresh {
                        cells.push(WeightedCell::default());
                    }
                    cells[slot].add(s.color, w);
                }
            }
        }
        let (slot, fresh) = grid.slot(s.cell_index());
        if fresh {
            cells.push(WeightedCell::default());
        }
        if !cells[slot].occupied {
            cells[slot].occupied = true;
            occupied_order.push(slot);
        }
    }
    let voxels = occupied_order
        .iter()
        .map(|&slot| voxel_at(grid.cell_of_slot(slot), cells[slot].mean()))
        .collect();
    grid.clear();
    voxels
}

/// Runs one strategy over projected samples.
pub fn sample(
    strategy: Strategy,
    samples: &[SampleView],
    path: &NodePath,
    seed: u64,
    grid: &mut SamplingGrid,
) -> Result<Vec<Voxel>> {
    Ok(match strategy {
        Strategy::FirstCome => sample_first_come(samples, grid),
        Strategy::Random => sample_random(samples, path, seed, grid)?,
        Strategy::Average => sample_average(samples, grid),
        Strategy::Weighted => sample_weighted(samples, grid),
    })
}

/// Populates every inner node, deepest first, so each node sees finished children.
///
/// Nodes of one depth are independent and run in parallel, one sampling grid per worker.
pub fn build_lod(tree: &mut Octree, strategy: Strategy, seed: u64) -> Result<()> {
    let mut by_depth: Vec<Vec<NodeId>> = vec![Vec::new(); tree.max_depth() + 1];
    for id in tree.ids() {
        let node = tree.node(id);
        if !node.is_leaf() {
            by_depth[node.depth()].push(id);
        }
    }
    for ids in by_depth.iter().rev() {
        let shared: &Octree = tree;
        let results: Vec<(NodeId, Vec<Voxel>)> = ids
            .par_iter()
            .map_init(SamplingGrid::new, |grid, &id| {
                let samples = project_child_samples(shared, id)?;
                let voxels = sample(strategy, &samples, &shared.node(id).path, seed, grid)?;
                Ok((id, voxels))
            })
            .collect::<Result<_>>()?;
        for (id, voxels) in results {
            tree.node_mut(id).content = NodeContent::Inner { voxels };
        }
    }
    let config = tree.config_mut();
    config.strategy = strategy;
    config.seed = seed;
    Ok(())
}
