//! Counting pyramids: per-level dense grids of point counters.

use std::sync::atomic::{AtomicU32, Ordering};

use rayon::prelude::*;

use crate::geometry::{grid_coord, Aabb};
use crate::model::{BuildConfig, Point};

/// Reserved counter value for cells whose 2x2x2 group could not be merged.
pub const UNMERGEABLE: u32 = u32::MAX;
const EXTENDED_TAG: u32 = 0x8000_0000;
/// Largest plain counter value; the upper half of the range encodes references.
pub const MAX_COUNT: u32 = EXTENDED_TAG - 1;

/// Decoded view of a raw counter cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountCell {
    Count(u32),
    Unmergeable,
    /// The cell is refined by the extended pyramid with this id.
    Extended(u32),
}

impl CountCell {
    #[inline]
    pub fn decode(raw: u32) -> Self {
        if raw == UNMERGEABLE {
            CountCell::Unmergeable
        } else if raw & EXTENDED_TAG != 0 {
            CountCell::Extended(raw & !EXTENDED_TAG)
        } else {
            CountCell::Count(raw)
        }
    }

    #[inline]
    pub fn encode(self) -> u32 {
        match self {
            CountCell::Count(n) => {
                debug_assert!(n <= MAX_COUNT);
                n
            }
            CountCell::Unmergeable => UNMERGEABLE,
            CountCell::Extended(id) => {
                debug_assert!(id < MAX_COUNT);
                EXTENDED_TAG | id
            }
        }
    }
}

#[inline]
pub(crate) fn cells_at(level: u8) -> usize {
    1usize << (3 * level as usize)
}

/// Row-major index with x fastest: `x + y * dim + z * dim^2`.
#[inline]
pub(crate) fn linear_index(c: [u32; 3], level: u8) -> usize {
    let d = level as usize;
    c[0] as usize | (c[1] as usize) << d | (c[2] as usize) << (2 * d)
}

#[inline]
pub(crate) fn cell_from_index(idx: usize, level: u8) -> [u32; 3] {
    let d = level as usize;
    let mask = (1usize << d) - 1;
    [
        (idx & mask) as u32,
        ((idx >> d) & mask) as u32,
        (idx >> (2 * d)) as u32,
    ]
}

/// Cell at global `depth` for a position in world-unit coordinates.
///
/// Every level derives from the same unit coordinate, and scaling by a power of two is
/// exact, so the cell at depth `d - 1` is always the cell at depth `d` shifted right by one.
#[inline]
pub fn unit_cell(u: [f64; 3], depth: u8) -> [u32; 3] {
    let dim = 1u32 << depth;
    [
        grid_coord(u[0], dim),
        grid_coord(u[1], dim),
        grid_coord(u[2], dim),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountPyramid {
    pub(crate) levels: Vec<Vec<u32>>,
}

impl CountPyramid {
    pub fn new(depth: u8) -> Self {
        Self {
            levels: (0..=depth).map(|l| vec![0; cells_at(l)]).collect(),
        }
    }

    pub fn depth(&self) -> u8 {
        (self.levels.len() - 1) as u8
    }

    pub fn level(&self, level: u8) -> &[u32] {
        &self.levels[level as usize]
    }

    pub fn cell(&self, level: u8, c: [u32; 3]) -> CountCell {
        CountCell::decode(self.levels[level as usize][linear_index(c, level)])
    }

    pub fn set(&mut self, level: u8, c: [u32; 3], value: CountCell) {
        self.levels[level as usize][linear_index(c, level)] = value.encode();
    }

    /// Sum of plain counters on one level.
    pub fn plain_total(&self, level: u8) -> u64 {
        plain_total(&self.levels[level as usize])
    }
}

/// Four-level (or shorter, near the depth cap) pyramid refining one overfull cell.
///
/// Level 0 is the refined cell itself; level `depth()` is the finest grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedPyramid {
    /// Global depth of the refined cell.
    pub anchor_depth: u8,
    /// Global coordinates of the refined cell at `anchor_depth`.
    pub anchor: [u32; 3],
    pub(crate) levels: Vec<Vec<u32>>,
}

impl ExtendedPyramid {
    fn new(anchor_depth: u8, anchor: [u32; 3], depth: u8) -> Self {
        Self {
            anchor_depth,
            anchor,
            levels: (0..=depth).map(|l| vec![0; cells_at(l)]).collect(),
        }
    }

    pub fn depth(&self) -> u8 {
        (self.levels.len() - 1) as u8
    }

    pub fn finest_depth(&self) -> u8 {
        self.anchor_depth + self.depth()
    }

    pub fn level(&self, level: u8) -> &[u32] {
        &self.levels[level as usize]
    }

    pub fn cell(&self, level: u8, c: [u32; 3]) -> CountCell {
        CountCell::decode(self.levels[level as usize][linear_index(c, level)])
    }

    /// Index into the finest level for a unit coordinate inside the anchor cell.
    #[inline]
    pub(crate) fn finest_index(&self, u: [f64; 3]) -> usize {
        let depth = self.depth();
        let g = unit_cell(u, self.finest_depth());
        let local = [
            g[0] - (self.anchor[0] << depth),
            g[1] - (self.anchor[1] << depth),
            g[2] - (self.anchor[2] << depth),
        ];
        debug_assert!(local.iter().all(|&c| c < 1 << depth));
        linear_index(local, depth)
    }

    pub fn plain_total(&self, level: u8) -> u64 {
        plain_total(&self.levels[level as usize])
    }
}

fn plain_total(cells: &[u32]) -> u64 {
    cells
        .iter()
        .map(|&raw| match CountCell::decode(raw) {
            CountCell::Count(n) => n as u64,
            _ => 0,
        })
        .sum()
}

/// Counts points into the finest level of a fresh pyramid of the given depth.
pub fn count(points: &[Point], bounds: &Aabb<f64>, depth: u8) -> CountPyramid {
    count_reads(points, bounds, depth).0
}

pub(crate) fn count_reads(points: &[Point], bounds: &Aabb<f64>, depth: u8) -> (CountPyramid, u64) {
    let cells: Vec<AtomicU32> = (0..cells_at(depth)).map(|_| AtomicU32::new(0)).collect();
    let reads = points
        .par_iter()
        .map(|p| {
            let c = unit_cell(bounds.unit_coords(p.position()), depth);
            cells[linear_index(c, depth)].fetch_add(1, Ordering::Relaxed);
            1u64
        })
        .sum();
    let mut levels: Vec<Vec<u32>> = (0..depth).map(|l| vec![0; cells_at(l)]).collect();
    levels.push(cells.into_iter().map(AtomicU32::into_inner).collect());
    (CountPyramid { levels }, reads)
}

/// Descends from the main finest grid through extended references.
///
/// Returns the grid (`None` for the main pyramid) and the index within its finest level.
#[inline]
pub(crate) fn locate_finest(
    main: &CountPyramid,
    extended: &[ExtendedPyramid],
    u: [f64; 3],
) -> (Option<usize>, usize) {
    let depth = main.depth();
    let mut grid = None;
    let mut idx = linear_index(unit_cell(u, depth), depth);
    loop {
        let raw = match grid {
            None => main.levels[depth as usize][idx],
            Some(e) => {
                let ext: &ExtendedPyramid = &extended[e];
                ext.levels[ext.depth() as usize][idx]
            }
        };
        match CountCell::decode(raw) {
            CountCell::Extended(id) => {
                let ext = &extended[id as usize];
                idx = ext.finest_index(u);
                grid = Some(id as usize);
            }
            _ => return (grid, idx),
        }
    }
}

/// Replaces every finest-level counter above the threshold with a reference to a new
/// extended pyramid and recounts the points that fall into it.
///
/// Rounds repeat on the new pyramids until no finest cell exceeds the threshold or the
/// depth cap is reached; cells still above the threshold at the cap stay plain counters.
pub fn extend_overfull_cells(
    pyramid: &mut CountPyramid,
    points: &[Point],
    bounds: &Aabb<f64>,
    config: &BuildConfig,
) -> Vec<ExtendedPyramid> {
    extend_reads(pyramid, points, bounds, config).0
}

pub(crate) fn extend_reads(
    pyramid: &mut CountPyramid,
    points: &[Point],
    bounds: &Aabb<f64>,
    config: &BuildConfig,
) -> (Vec<ExtendedPyramid>, u64, u32) {
    let threshold = config.threshold;
    let mut extended: Vec<ExtendedPyramid> = Vec::new();
    let mut frontier: Vec<Option<usize>> = vec![None];
    let mut finest_depth = pyramid.depth();
    let mut reads = 0u64;
    let mut rounds = 0u32;

    while finest_depth < config.max_depth {
        let depth = config.extension_depth.min(config.max_depth - finest_depth);
        let first_new = extended.len();

        for &grid in &frontier {
            let (origin, local_depth) = match grid {
                None => ([0u32; 3], finest_depth),
                Some(e) => (extended[e].anchor, extended[e].depth()),
            };
            let levels = match grid {
                None => &pyramid.levels,
                Some(e) => &extended[e].levels,
            };
            let finest = levels.last().expect("pyramid has levels");
            let overfull: Vec<usize> = finest
                .iter()
                .enumerate()
                .filter(|(_, &raw)| matches!(CountCell::decode(raw), CountCell::Count(n) if n > threshold))
                .map(|(i, _)| i)
                .collect();
            let mut created = Vec::with_capacity(overfull.len());
            for idx in overfull {
                let local = cell_from_index(idx, local_depth);
                let global = [
                    (origin[0] << local_depth) + local[0],
                    (origin[1] << local_depth) + local[1],
                    (origin[2] << local_depth) + local[2],
                ];
                let id = (extended.len() + created.len()) as u32;
                created.push((idx, id, global));
            }
            let levels = match grid {
                None => &mut pyramid.levels,
                Some(e) => &mut extended[e].levels,
            };
            let finest = levels.last_mut().expect("pyramid has levels");
            for &(idx, id, _) in &created {
                finest[idx] = CountCell::Extended(id).encode();
            }
            extended.extend(
                created
                    .into_iter()
                    .map(|(_, _, global)| ExtendedPyramid::new(finest_depth, global, depth)),
            );
        }

        if extended.len() == first_new {
            break;
        }
        rounds += 1;

        // All grids of one round share a depth, so their finest levels pack into one buffer.
        let per_grid = cells_at(depth);
        let packed: Vec<AtomicU32> = (0..(extended.len() - first_new) * per_grid)
            .map(|_| AtomicU32::new(0))
            .collect();
        reads += points
            .par_iter()
            .map(|p| {
                let u = bounds.unit_coords(p.position());
                if let (Some(e), idx) = locate_finest(pyramid, &extended, u) {
                    if e >= first_new {
                        packed[(e - first_new) * per_grid + idx].fetch_add(1, Ordering::Relaxed);
                    }
                }
                1u64
            })
            .sum::<u64>();
        let mut packed = packed.into_iter().map(AtomicU32::into_inner);
        for ext in &mut extended[first_new..] {
            let finest = ext.levels.last_mut().expect("pyramid has levels");
            finest.clear();
            finest.extend(packed.by_ref().take(per_grid));
        }

        frontier = (first_new..extended.len()).map(Some).collect();
        finest_depth += depth;
    }
    (extended, reads, rounds)
}

/// Merges 2x2x2 sibling groups bottom-up.
///
/// A group of plain counters summing below the threshold moves its sum into the parent and
/// is zeroed. Any other group flags the parent unmergeable. Extended pyramids are merged
/// first; their references count as unmergeable cells in the grid they refine.
pub fn merge(pyramid: &mut CountPyramid, extended: &mut [ExtendedPyramid], threshold: u32) {
    for ext in extended.iter_mut().rev() {
        merge_levels(&mut ext.levels, threshold);
    }
    merge_levels(&mut pyramid.levels, threshold);
}

fn merge_levels(levels: &mut [Vec<u32>], threshold: u32) {
    let threshold = threshold as u64;
    for level in (1..levels.len()).rev() {
        let (coarse, fine) = levels.split_at_mut(level);
        let parent = &mut coarse[level - 1];
        let child = &mut fine[0];
        let pdim = 1usize << (level - 1);
        let cdim = pdim * 2;
        parent
            .par_chunks_mut(pdim * pdim)
            .zip(child.par_chunks_mut(2 * cdim * cdim))
            .for_each(|(pslab, cslab)| {
                for py in 0..pdim {
                    for px in 0..pdim {
                        let mut group = [0usize; 8];
                        for (o, slot) in group.iter_mut().enumerate() {
                            let cx = 2 * px + (o & 1);
                            let cy = 2 * py + ((o >> 1) & 1);
                            let cz = (o >> 2) & 1;
                            *slot = cx + cy * cdim + cz * cdim * cdim;
                        }
                        let mut sum = 0u64;
                        let mut blocked = false;
                        for &ci in &group {
                            match CountCell::decode(cslab[ci]) {
                                CountCell::Count(n) => sum += n as u64,
                                _ => blocked = true,
                            }
                        }
                        pslab[px + py * pdim] = if !blocked && sum < threshold {
                            for &ci in &group {
                                cslab[ci] = 0;
                            }
                            sum as u32
                        } else {
                            UNMERGEABLE
                        };
                    }
                }
            });
    }
}
