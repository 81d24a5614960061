//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use lodforge::{ColorRgb, NodeContent, Octree, OctreeNode, Point, Voxel};

pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Small deterministic stream for building test inputs.
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.0.wrapping_sub(0x9E37_79B9_7F4A_7C15))
    }

    pub fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn color(&mut self) -> ColorRgb {
        let v = self.next();
        ColorRgb::new(v as u8, (v >> 8) as u8, (v >> 16) as u8)
    }
}

/// Mixture of uniform noise and tight clusters, sized to trigger deep splits.
pub fn clustered_cloud(seed: u64, n: usize) -> Vec<Point> {
    let mut rng = Stream::new(seed);
    let clusters: Vec<([f64; 3], f64)> = (0..1 + rng.below(4))
        .map(|_| {
            let c = [rng.unit() * 10.0, rng.unit() * 10.0, rng.unit() * 10.0];
            let extent = 10f64.powi(-(rng.below(6) as i32));
            (c, extent)
        })
        .collect();
    (0..n)
        .map(|_| {
            let pick = rng.below(clusters.len() as u64 + 1) as usize;
            let (x, y, z) = if pick == clusters.len() {
                (rng.unit() * 10.0, rng.unit() * 10.0, rng.unit() * 10.0)
            } else {
                let (c, e) = clusters[pick];
                (
                    c[0] + rng.unit() * e,
                    c[1] + rng.unit() * e,
                    c[2] + rng.unit() * e,
                )
            };
            Point::new(x, y, z, rng.color())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefNode {
    pub leaf: bool,
    pub oversized: bool,
    pub points: Vec<Point>,
}

/// Depths at which the counting grids end: the main grid, then each extension step.
pub fn grid_floors(max_depth: u32) -> Vec<u32> {
    let mut floors = vec![max_depth.min(8)];
    while *floors.last().unwrap() < max_depth {
        let next = (floors.last().unwrap() + 4).min(max_depth);
        floors.push(next);
    }
    floors
}

/// Top-down recursive splitter. A node becomes a leaf when it reaches the depth cap,
/// when it sits on a grid floor and holds at most `t` points, or elsewhere when it
/// holds fewer than `t` points.
pub fn reference_partition(
    points: &[Point],
    t: usize,
    max_depth: u32,
) -> BTreeMap<Vec<u8>, RefNode> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for (a, v) in p.position().into_iter().enumerate() {
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    let mut size = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if size == 0.0 {
        size = 1.0;
    }
    let dim = 1u64 << max_depth;
    let cells: Vec<[u64; 3]> = points
        .iter()
        .map(|p| {
            let pos = p.position();
            let mut c = [0u64; 3];
            for a in 0..3 {
                let u = (pos[a] - lo[a]) / size;
                c[a] = ((u * dim as f64).floor() as u64).min(dim - 1);
            }
            c
        })
        .collect();
    let floors = grid_floors(max_depth);
    let mut out = BTreeMap::new();
    let all: Vec<usize> = (0..points.len()).collect();
    split(
        points,
        &cells,
        all,
        0,
        Vec::new(),
        t,
        max_depth,
        &floors,
        &mut out,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn split(
    points: &[Point],
    cells: &[[u64; 3]],
    members: Vec<usize>,
    depth: u32,
    path: Vec<u8>,
    t: usize,
    max_depth: u32,
    floors: &[u32],
    out: &mut BTreeMap<Vec<u8>, RefNode>,
) {
    let n = members.len();
    let leaf = depth == max_depth
        || if floors.contains(&depth) {
            n <= t
        } else {
            n < t
        };
    if leaf {
        out.insert(
            path,
            RefNode {
                leaf: true,
                oversized: n > t,
                points: members.iter().map(|&i| points[i]).collect(),
            },
        );
        return;
    }
    let shift = max_depth - depth - 1;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); 8];
    for &i in &members {
        let c = cells[i];
        let o = ((c[0] >> shift) & 1) | (((c[1] >> shift) & 1) << 1) | (((c[2] >> shift) & 1) << 2);
        children[o as usize].push(i);
    }
    out.insert(
        path.clone(),
        RefNode {
            leaf: false,
            oversized: false,
            points: Vec::new(),
        },
    );
    for (o, child) in children.into_iter().enumerate() {
        if !child.is_empty() {
            let mut p = path.clone();
            p.push(o as u8);
            split(
                points,
                cells,
                child,
                depth + 1,
                p,
                t,
                max_depth,
                floors,
                out,
            );
        }
    }
}

/// The tree's skeleton in the same shape as [`reference_partition`].
pub fn skeleton(tree: &Octree) -> BTreeMap<Vec<u8>, RefNode> {
    tree.nodes()
        .iter()
        .map(|n| {
            let leaf = n.is_leaf();
            (
                n.path.octants().to_vec(),
                RefNode {
                    leaf,
                    oversized: n.oversized,
                    points: if leaf {
                        n.points().to_vec()
                    } else {
                        Vec::new()
                    },
                },
            )
        })
        .collect()
}

/// A child sample placed in the parent's 128^3 grid.
#[derive(Debug, Clone, Copy)]
pub struct RefSample {
    pub g: [f64; 3],
    pub color: ColorRgb,
}

impl RefSample {
    pub fn cell(&self) -> [u8; 3] {
        self.g.map(|v| (v.floor() as i64).clamp(0, 127) as u8)
    }
}

/// Child samples of an inner node in canonical order (octant, then stored order).
pub fn reference_samples(tree: &Octree, node: &OctreeNode) -> Vec<RefSample> {
    let mut out = Vec::new();
    let below_128 = 128.0 - 128.0 * f64::EPSILON / 2.0;
    for octant in 0..8u8 {
        let Some(id) = node.children[octant as usize] else {
            continue;
        };
        let child = tree.node(id);
        let off = [
            64.0 * (octant & 1) as f64,
            64.0 * ((octant >> 1) & 1) as f64,
            64.0 * ((octant >> 2) & 1) as f64,
        ];
        match &child.content {
            NodeContent::Leaf { points } => {
                for p in points {
                    let pos = p.position();
                    let g = [0, 1, 2].map(|a| {
                        ((pos[a] - node.bounds.min[a]) / node.bounds.size * 128.0)
                            .clamp(0.0, below_128)
                    });
                    out.push(RefSample { g, color: p.color });
                }
            }
            NodeContent::Inner { voxels } => {
                for v in voxels {
                    let c = v.coords();
                    let g = [0, 1, 2].map(|a| off[a] + (c[a] as f64 + 0.5) / 2.0);
                    out.push(RefSample { g, color: v.color });
                }
            }
        }
    }
    out
}

/// Cells in order of first occupation, each with the ordinals of its samples.
fn cells_by_first_touch(samples: &[RefSample]) -> Vec<([u8; 3], Vec<usize>)> {
    let mut index: HashMap<[u8; 3], usize> = HashMap::new();
    let mut cells: Vec<([u8; 3], Vec<usize>)> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let c = s.cell();
        let slot = *index.entry(c).or_insert_with(|| {
            cells.push((c, Vec::new()));
            cells.len() - 1
        });
        cells[slot].1.push(i);
    }
    cells
}

fn voxel(c: [u8; 3], color: ColorRgb) -> Voxel {
    Voxel::new(c[0], c[1], c[2], color)
}

pub fn reference_first_come(samples: &[RefSample]) -> Vec<Voxel> {
    cells_by_first_touch(samples)
        .into_iter()
        .map(|(c, members)| voxel(c, samples[members[0]].color))
        .collect()
}

pub fn reference_node_hash(path: &[u8], seed: u64) -> u64 {
    let mut key = seed;
    for &o in path {
        key = mix64(key.wrapping_mul(8).wrapping_add(o as u64 + 1));
    }
    key
}

pub fn reference_random(samples: &[RefSample], path: &[u8], seed: u64) -> Vec<Voxel> {
    let hash = reference_node_hash(path, seed);
    cells_by_first_touch(samples)
        .into_iter()
        .map(|(c, members)| {
            let winner = members
                .iter()
                .copied()
                .max_by_key(|&i| {
                    let r = (mix64(hash ^ i as u64) >> 32) as u32;
                    (r & 0xFFF0_0000) | (i as u32 & 0x000F_FFFF)
                })
                .unwrap();
            voxel(c, samples[winner].color)
        })
        .collect()
}

pub fn reference_average(samples: &[RefSample]) -> Vec<Voxel> {
    cells_by_first_touch(samples)
        .into_iter()
        .map(|(c, members)| {
            let n = members.len() as f64;
            let mean = |ch: fn(&ColorRgb) -> u8| {
                let sum: f64 = members.iter().map(|&i| ch(&samples[i].color) as f64).sum();
                (sum / n).round() as u8
            };
            voxel(
                c,
                ColorRgb::new(mean(|c| c.r), mean(|c| c.g), mean(|c| c.b)),
            )
        })
        .collect()
}

/// For each occupied cell, sums every sample whose 2x2x2 neighbourhood contains it.
/// Samples are bucketed by cell and looked up in the 3x3x3 surroundings.
pub fn reference_weighted(samples: &[RefSample]) -> Vec<Voxel> {
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        buckets.entry(s.cell().map(i64::from)).or_default().push(i);
    }
    cells_by_first_touch(samples)
        .into_iter()
        .map(|(c, _)| {
            let ci = c.map(i64::from);
            let mut sums = [0.0f64; 4];
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let key = [ci[0] + dx, ci[1] + dy, ci[2] + dz];
                        for &i in buckets.get(&key).into_iter().flatten() {
                            let s = &samples[i];
                            let base = s.g.map(|v| (v - 0.5).floor() as i64);
                            if (0..3).any(|a| ci[a] < base[a] || ci[a] > base[a] + 1) {
                                continue;
                            }
                            let d2: f64 = (0..3)
                                .map(|a| (s.g[a] - (ci[a] as f64 + 0.5)).powi(2))
                                .sum();
                            let w = (1.0 - d2.sqrt()).clamp(0.0, 1.0);
                            sums[0] += w * s.color.r as f64;
                            sums[1] += w * s.color.g as f64;
                            sums[2] += w * s.color.b as f64;
                            sums[3] += w;
                        }
                    }
                }
            }
            let ch = |k: usize| (sums[k] / sums[3]).round().clamp(0.0, 255.0) as u8;
            voxel(c, ColorRgb::new(ch(0), ch(1), ch(2)))
        })
        .collect()
}

/// Largest per-channel difference between two voxel lists with identical coordinates,
/// or `None` when coordinates differ.
pub fn max_channel_diff(a: &[Voxel], b: &[Voxel]) -> Option<u8> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst = 0;
    for (x, y) in a.iter().zip(b) {
        if x.coords() != y.coords() {
            return None;
        }
        for (p, q) in x.color.channels().into_iter().zip(y.color.channels()) {
            worst = worst.max(p.abs_diff(q));
        }
    }
    Some(worst)
}
