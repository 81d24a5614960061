//! Cubic bounding boxes and grid projection.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned cube: `min` corner plus a single side length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<S> {
    pub min: [S; 3],
    pub size: S,
}

impl<S: Scalar> Aabb<S> {
    pub fn new(min: [S; 3], size: S) -> Result<Self> {
        if size <= S::zero() || !size.is_finite() || min.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!(
                "cube needs finite min and positive size, got min={min:?} size={size:?}"
            )));
        }
        Ok(Self { min, size })
    }

    /// Smallest cube anchored at the component-wise minimum that covers all positions.
    ///
    /// The side is the largest axis extent; a zero extent becomes one world unit.
    pub fn enclosing<I>(positions: I) -> Option<Self>
    where
        I: IntoIterator<Item = [S; 3]>,
    {
        let mut iter = positions.into_iter();
        let first = iter.next()?;
        let (mut lo, mut hi) = (first, first);
        for p in iter {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let extent = (0..3)
            .map(|i| hi[i] - lo[i])
            .fold(S::zero(), |a, b| a.max(b));
        let size = if extent > S::zero() { extent } else { S::one() };
        Some(Self { min: lo, size })
    }

    pub fn max(&self) -> [S; 3] {
        [
            self.min[0] + self.size,
            self.min[1] + self.size,
            self.min[2] + self.size,
        ]
    }

    pub fn center(&self) -> [S; 3] {
        let h = self.size * S::half();
        [self.min[0] + h, self.min[1] + h, self.min[2] + h]
    }

    /// Radius of the circumscribed sphere.
    pub fn bounding_radius(&self) -> S {
        self.size * S::lit(3.0).sqrt() * S::half()
    }

    pub fn child(&self, octant: u8) -> Self {
        child_bounds(self, octant)
    }

    /// Closed containment test (the max faces belong to the box).
    pub fn contains(&self, p: [S; 3]) -> bool {
        self.contains_within(p, S::zero())
    }

    pub fn contains_within(&self, p: [S; 3], tolerance: S) -> bool {
        (0..3)
            .all(|i| p[i] >= self.min[i] - tolerance && p[i] <= self.min[i] + self.size + tolerance)
    }

    /// Position relative to the cube, scaled so the cube maps to `[0, 1]^3`.
    #[inline]
    pub fn unit_coords(&self, p: [S; 3]) -> [S; 3] {
        [
            (p[0] - self.min[0]) / self.size,
            (p[1] - self.min[1]) / self.size,
            (p[2] - self.min[2]) / self.size,
        ]
    }
}

/// Bounds of one of the eight children. Bit 0 of `octant` selects the upper half in x,
/// bit 1 in y and bit 2 in z.
pub fn child_bounds<S: Scalar>(parent: &Aabb<S>, octant: u8) -> Aabb<S> {
    assert!(octant < 8, "octant {octant} out of range");
    let half = parent.size * S::half();
    let mut min = parent.min;
    for (axis, m) in min.iter_mut().enumerate() {
        if (octant >> axis) & 1 == 1 {
            *m = *m + half;
        }
    }
    Aabb { min, size: half }
}

/// Grid index along one axis for a unit coordinate, clamped to `[0, dim - 1]`.
#[inline]
pub fn grid_coord<S: Scalar>(unit: S, dim: u32) -> u32 {
    let scaled = (unit * S::from_u32(dim).expect("grid dimension")).floor();
    if scaled <= S::zero() {
        0
    } else {
        scaled.to_u32().unwrap_or(u32::MAX).min(dim - 1)
    }
}

/// Cell of `p` in a `grid_dim`^3 grid laid over `bounds`.
///
/// Points on a max face clamp into the last cell. Points outside the cube are rejected.
pub fn cell_of<S: Scalar>(p: [S; 3], bounds: &Aabb<S>, grid_dim: u32) -> Result<[u32; 3]> {
    if grid_dim == 0 {
        return Err(Error::invalid("grid dimension must be at least 1"));
    }
    let u = bounds.unit_coords(p);
    if u.iter().any(|c| !(*c >= S::zero() && *c <= S::one())) {
        return Err(Error::OutOfBounds {
            x: p[0].to_f64().unwrap_or(f64::NAN),
            y: p[1].to_f64().unwrap_or(f64::NAN),
            z: p[2].to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok([
        grid_coord(u[0], grid_dim),
        grid_coord(u[1], grid_dim),
        grid_coord(u[2], grid_dim),
    ])
}
