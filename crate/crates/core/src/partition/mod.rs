//! Splitting the input into octree leaves with a hierarchical counting sort.
//!
//! Points are counted into a 256^3 grid (depth 8), overfull cells are refined by extended
//! pyramids, small sibling groups are merged bottom-up, the surviving cells become nodes
//! and a second pass over the points moves each into its leaf.

mod pyramid;
mod targets;

pub use pyramid::{
    count, extend_overfull_cells, merge, unit_cell, CountCell, CountPyramid, ExtendedPyramid,
    MAX_COUNT, UNMERGEABLE,
};
pub use targets::{
    build_targets, insert, ExtendedTargets, Skeleton, Target, TargetCell, TargetPyramid,
};

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::model::{BuildConfig, Octree, Point};

pub(crate) const MAX_NODES: usize = (1 << 30) - 1;

/// Per-pass read counters of one partition run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartitionStats {
    pub count_reads: u64,
    pub extension_reads: u64,
    pub insert_reads: u64,
    pub extension_rounds: u32,
    pub extended_grids: usize,
}

pub fn partition(points: &[Point], config: &BuildConfig) -> Result<Octree> {
    partition_with_stats(points, config).map(|(tree, _)| tree)
}

pub fn partition_with_stats(
    points: &[Point],
    config: &BuildConfig,
) -> Result<(Octree, PartitionStats)> {
    config.validate()?;
    if points.is_empty() {
        return Err(Error::invalid("cannot partition an empty point set"));
    }
    if points.len() > MAX_COUNT as usize {
        return Err(Error::invalid(format!(
            "{} points exceed the counter capacity of {MAX_COUNT}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("non-finite point {p:?}")));
    }
    let bounds = Aabb::enclosing(points.iter().map(Point::position)).expect("non-empty input");

    let mut stats = PartitionStats::default();
    let (mut pyramid, reads) = pyramid::count_reads(points, &bounds, config.main_depth());
    stats.count_reads = reads;

    let (mut extended, reads, rounds) =
        pyramid::extend_reads(&mut pyramid, points, &bounds, config);
    stats.extension_reads = reads;
    stats.extension_rounds = rounds;
    stats.extended_grids = extended.len();

    merge(&mut pyramid, &mut extended, config.threshold);
    let mut skeleton = build_targets(pyramid, extended, &bounds, config)?;
    stats.insert_reads = targets::insert_reads(points, &mut skeleton, &bounds)?;

    Ok((
        skeleton.into_octree(bounds, *config, points.len() as u64),
        stats,
    ))
}
