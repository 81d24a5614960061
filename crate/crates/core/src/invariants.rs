//! Structural and content checks over a built octree, reported per check.

use std::collections::HashSet;

use serde::Serialize;

use crate::geometry::child_bounds;
use crate::model::{NodeContent, Octree, OctreeNode, GRID_SIZE};

/// Relative slack for leaf points: absorbs rounding of the 32-bit node-relative
/// offsets written by the codec and of the cell arithmetic during partitioning.
const OFFSET_TOLERANCE: f64 = 1.0 / (1u64 << 22) as f64;
const MAX_REPORTED: usize = 5;

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
#[serde(rename_all = "camelCase")]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub violations: u64,
    /// A few offending nodes, for diagnostics.
    pub examples: Vec<String>,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
#[serde(rename_all = "camelCase")]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

struct Check {
    name: &'static str,
    violations: u64,
    examples: Vec<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            violations: 0,
            examples: Vec::new(),
        }
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.violations += 1;
            if self.examples.len() < MAX_REPORTED {
                self.examples.push(what());
            }
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name,
            passed: self.violations == 0,
            violations: self.violations,
            examples: self.examples,
        }
    }
}

/// Runs every check. Expects a tree whose inner nodes have been populated.
pub fn validate(tree: &Octree) -> ValidationReport {
    let config = tree.config();
    let threshold = config.threshold as usize;
    let max_depth = config.max_depth as usize;
    let grid_cells = (GRID_SIZE as usize).pow(3);

    let mut structure = Check::new("structure");
    let mut conservation = Check::new("conservation");
    let mut capacity = Check::new("capacity");
    let mut oversized = Check::new("oversized-at-max-depth");
    let mut maximality = Check::new("maximality");
    let mut containment = Check::new("containment");
    let mut voxel_bounds = Check::new("voxel-bounds");
    let mut voxel_unique = Check::new("voxel-uniqueness");
    let mut inner_nonempty = Check::new("inner-non-empty");
    let mut voxel_count = Check::new("voxel-count");

    structure.expect(tree.root().path.is_root(), || {
        "first node is not the root".into()
    });
    structure.expect(tree.root().bounds == *tree.world_bounds(), || {
        "root bounds differ from world bounds".into()
    });
    let mut referenced = vec![0u32; tree.node_count()];

    for node in tree.nodes() {
        let path = node.path;
        for (octant, child_id) in node.child_ids() {
            let Some(child) = tree.nodes().get(child_id.index()) else {
                structure.expect(false, || {
                    format!("{path}: dangling child id {}", child_id.0)
                });
                continue;
            };
            referenced[child_id.index()] += 1;
            structure.expect(child.path == path.child(octant), || {
                format!("{path}: child {octant} has path {}", child.path)
            });
            structure.expect(child.bounds == child_bounds(&node.bounds, octant), || {
                format!("{}: bounds do not match parent octant", child.path)
            });
        }

        match &node.content {
            NodeContent::Leaf { points } => {
                structure.expect(node.child_ids().next().is_none(), || {
                    format!("{path}: leaf with children")
                });
                if node.oversized {
                    oversized.expect(node.depth() == max_depth, || {
                        format!("{path}: oversized leaf at depth {}", node.depth())
                    });
                } else {
                    capacity.expect(points.len() <= threshold, || {
                        format!("{path}: {} points > {threshold}", points.len())
                    });
                }
                let b = &node.bounds;
                let scale = b.min.iter().fold(b.size, |m, c| m.max(c.abs()));
                let tol = b.size * OFFSET_TOLERANCE + 4.0 * f64::EPSILON * scale;
                let outside = points
                    .iter()
                    .filter(|p| !b.contains_within(p.position(), tol))
                    .count();
                containment.expect(outside == 0, || format!("{path}: {outside} points outside"));
            }
            NodeContent::Inner { voxels } => {
                oversized.expect(!node.oversized, || {
                    format!("{path}: inner node flagged oversized")
                });
                let children: Vec<&OctreeNode> =
                    node.child_ids().map(|(_, id)| tree.node(id)).collect();
                inner_nonempty.expect(!children.is_empty() && !voxels.is_empty(), || {
                    format!(
                        "{path}: {} children, {} voxels",
                        children.len(),
                        voxels.len()
                    )
                });
                if !children.is_empty() && children.iter().all(|c| c.is_leaf()) {
                    let total: usize = children.iter().map(|c| c.sample_count()).sum();
                    maximality.expect(total >= threshold, || {
                        format!("{path}: leaf children hold only {total} points")
                    });
                }
                let bad = voxels.iter().filter(|v| !v.in_grid()).count();
                voxel_bounds.expect(bad == 0, || {
                    format!("{path}: {bad} voxels outside the grid")
                });
                let mut seen = HashSet::with_capacity(voxels.len());
                let dupes = voxels.iter().filter(|v| !seen.insert(v.coords())).count();
                voxel_unique.expect(dupes == 0, || format!("{path}: {dupes} duplicate voxels"));
                let child_samples: usize = children.iter().map(|c| c.sample_count()).sum();
                let cap = child_samples.min(grid_cells);
                voxel_count.expect(voxels.len() <= cap, || {
                    format!("{path}: {} voxels exceed bound {cap}", voxels.len())
                });
            }
        }
    }
    for (i, &n) in referenced.iter().enumerate().skip(1) {
        structure.expect(n == 1, || {
            format!("{}: referenced by {n} parents", tree.nodes()[i].path)
        });
    }

    let total = tree.leaf_point_total();
    conservation.expect(total == tree.point_count(), || {
        format!(
            "leaves hold {total} points, header says {}",
            tree.point_count()
        )
    });

    let checks: Vec<CheckResult> = [
        structure,
        conservation,
        capacity,
        oversized,
        maximality,
        containment,
        voxel_bounds,
        voxel_unique,
        inner_nonempty,
        voxel_count,
    ]
    .into_iter()
    .map(Check::finish)
    .collect();
    ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
