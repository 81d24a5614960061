//! Headless replay of view-dependent node selection for a replacing LOD structure.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::model::{NodeId, NodeKind, NodePath, Octree};
use crate::scalar::{add3, cross3, dot3, length3, normalize3, scale3, sub3, Scalar};

/// Default expansion threshold in pixels, about the width of a node's 128^3 voxel grid.
pub const DEFAULT_THRESHOLD_PX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera<S> {
    pub eye: [S; 3],
    pub look_at: [S; 3],
    pub up: [S; 3],
    /// Vertical field of view in degrees.
    pub fov_y: S,
    pub viewport_w: u32,
    pub viewport_h: u32,
    pub near: S,
    pub far: S,
}

impl<S: Scalar> Camera<S> {
    pub fn new(
        eye: [S; 3],
        look_at: [S; 3],
        fov_y: S,
        viewport_w: u32,
        viewport_h: u32,
    ) -> Result<Self> {
        let cam = Self {
            eye,
            look_at,
            up: [S::zero(), S::zero(), S::one()],
            fov_y,
            viewport_w,
            viewport_h,
            near: S::lit(1e-3),
            far: S::lit(1e9),
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn with_up(mut self, up: [S; 3]) -> Result<Self> {
        self.up = up;
        self.validate()?;
        Ok(self)
    }

    pub fn with_clip(mut self, near: S, far: S) -> Result<Self> {
        self.near = near;
        self.far = far;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: [S; 3]| v.iter().all(|c| c.is_finite());
        if !finite(self.eye) || !finite(self.look_at) || !finite(self.up) {
            return Err(Error::invalid("camera vectors must be finite"));
        }
        if self.eye == self.look_at {
            return Err(Error::invalid("camera eye and look-at coincide"));
        }
        if !(self.fov_y > S::zero() && self.fov_y < S::lit(180.0)) {
            return Err(Error::invalid(
                "vertical field of view must lie in (0, 180) degrees",
            ));
        }
        if self.viewport_w == 0 || self.viewport_h == 0 {
            return Err(Error::invalid("viewport must be at least 1x1 pixels"));
        }
        if !(self.near > S::zero() && self.far > self.near) {
            return Err(Error::invalid("clip planes need 0 < near < far"));
        }
        if self.basis().is_none() {
            return Err(Error::invalid(
                "up vector is parallel to the view direction",
            ));
        }
        Ok(())
    }

    /// Forward, right and up unit vectors.
    fn basis(&self) -> Option<([S; 3], [S; 3], [S; 3])> {
        let forward = normalize3(sub3(self.look_at, self.eye))?;
        let right = normalize3(cross3(forward, self.up))?;
        let up = cross3(right, forward);
        Some((forward, right, up))
    }

    fn tan_half_fov(&self) -> S {
        (self.fov_y.to_radians() * S::half()).tan()
    }

    pub fn frustum(&self) -> Frustum<S> {
        Frustum::from_camera(self)
    }
}

/// Six inward-facing planes `n . x + d >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum<S> {
    planes: [([S; 3], S); 6],
}

impl<S: Scalar> Frustum<S> {
    pub fn from_camera(camera: &Camera<S>) -> Self {
        let (f, r, u) = camera.basis().expect("validated camera");
        let th = camera.tan_half_fov();
        let aspect =
            S::from_u32(camera.viewport_w).unwrap() / S::from_u32(camera.viewport_h).unwrap();
        let tw = th * aspect;
        let eye = camera.eye;
        let through_eye = |n: [S; 3]| (n, -dot3(n, eye));
        let near_point = add3(eye, scale3(f, camera.near));
        let far_point = add3(eye, scale3(f, camera.far));
        let neg_f = scale3(f, -S::one());
        Self {
            planes: [
                (f, -dot3(f, near_point)),
                (neg_f, -dot3(neg_f, far_point)),
                through_eye(add3(scale3(f, tw), r)),
                through_eye(sub3(scale3(f, tw), r)),
                through_eye(add3(scale3(f, th), u)),
                through_eye(sub3(scale3(f, th), u)),
            ],
        }
    }

    /// Conservative box test: `false` only if the box lies fully outside one plane.
    pub fn intersects(&self, bounds: &Aabb<S>) -> bool {
        let max = bounds.max();
        self.planes.iter().all(|&(n, d)| {
            let p = [
                if n[0] >= S::zero() {
                    max[0]
                } else {
                    bounds.min[0]
                },
                if n[1] >= S::zero() {
                    max[1]
                } else {
                    bounds.min[1]
                },
                if n[2] >= S::zero() {
                    max[2]
                } else {
                    bounds.min[2]
                },
            ];
            dot3(n, p) + d >= S::zero()
        })
    }
}

/// Whether a node's bounds may be visible. A box containing the eye always counts.
pub fn frustum_intersects<S: Scalar>(bounds: &Aabb<S>, camera: &Camera<S>) -> bool {
    bounds.contains(camera.eye) || camera.frustum().intersects(bounds)
}

/// On-screen diameter in pixels of the node's bounding sphere; infinite when the camera is
/// inside the sphere.
pub fn projected_size<S: Scalar>(bounds: &Aabb<S>, camera: &Camera<S>) -> S {
    let distance = length3(sub3(bounds.center(), camera.eye));
    let radius = bounds.bounding_radius();
    if distance <= radius {
        return S::infinity();
    }
    let diameter = radius * S::two();
    S::from_u32(camera.viewport_h).unwrap() * diameter
        / (S::two() * distance * camera.tan_half_fov())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectedNode {
    pub path: NodePath,
    #[serde(skip)]
    pub id: NodeId,
    pub kind: NodeKind,
    pub total_samples: usize,
    pub drawn_samples: usize,
    /// Bit `o` set when octant `o` has a selected child that replaces these voxels.
    pub discarded_octants: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionResult {
    pub items: Vec<SelectedNode>,
    pub culled_nodes: usize,
    pub threshold_px: f64,
}

/// Per-frame totals for JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FrameStats {
    pub frame: u64,
    pub nodes: usize,
    pub points_drawn: u64,
    pub voxels_drawn: u64,
    pub culled: usize,
    pub threshold_px: f64,
}

impl SelectionResult {
    pub fn frame_stats(&self, frame: u64) -> FrameStats {
        let drawn = |kind| {
            self.items
                .iter()
                .filter(|i| i.kind == kind)
                .map(|i| i.drawn_samples as u64)
                .sum()
        };
        FrameStats {
            frame,
            nodes: self.items.len(),
            points_drawn: drawn(NodeKind::Leaf),
            voxels_drawn: drawn(NodeKind::Inner),
            culled: self.culled_nodes,
            threshold_px: self.threshold_px,
        }
    }
}

/// Selects the nodes to draw for one camera.
///
/// The root is selected when visible. Selected nodes whose projected size exceeds the
/// threshold are expanded; their visible children are selected in turn. An inner node
/// draws only voxels in octants without a selected child.
pub fn select(tree: &Octree, camera: &Camera<f64>, threshold_px: f64) -> SelectionResult {
    let mut result = SelectionResult {
        items: Vec::new(),
        culled_nodes: 0,
        threshold_px,
    };
    if frustum_intersects(&tree.root().bounds, camera) {
        visit(tree, tree.root_id(), camera, threshold_px, &mut result);
    } else {
        result.culled_nodes += 1;
    }
    result
}

fn visit(
    tree: &Octree,
    id: NodeId,
    camera: &Camera<f64>,
    threshold_px: f64,
    out: &mut SelectionResult,
) {
    let node = tree.node(id);
    let slot = out.items.len();
    out.items.push(SelectedNode {
        path: node.path,
        id,
        kind: node.kind(),
        total_samples: node.sample_count(),
        drawn_samples: node.sample_count(),
        discarded_octants: 0,
    });
    if node.is_leaf() || projected_size(&node.bounds, camera) <= threshold_px {
        return;
    }
    let mut mask = 0u8;
    for (octant, child) in node.child_ids() {
        if frustum_intersects(&tree.node(child).bounds, camera) {
            mask |= 1 << octant;
            visit(tree, child, camera, threshold_px, out);
        } else {
            out.culled_nodes += 1;
        }
    }
    let drawn = node
        .voxels()
        .iter()
        .filter(|v| mask & (1 << v.octant()) == 0)
        .count();
    let item = &mut out.items[slot];
    item.discarded_octants = mask;
    item.drawn_samples = drawn;
}
