use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{ColorRgb, Point};
use crate::rng::SplitMix64;

/// Side of the dense cluster in the stadium preset.
pub const DENSE_CUBE_SIZE: f64 = 1.0 / 512.0;
/// Lower corner of the dense cluster; offset so it sits inside one depth-8 cell.
pub const DENSE_CUBE_MIN: f64 = 0.5 + 1.0 / 1024.0;
pub const SCAN_A: ColorRgb = ColorRgb::new(200, 60, 60);
pub const SCAN_B: ColorRgb = ColorRgb::new(60, 60, 200);

const DENSE_FRACTION: f64 = 0.1;
const SCAN_JITTER: f64 = 2e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetKind {
    UniformCube,
    CheckerPlane,
    Stadium,
    TwoScans,
}

impl PresetKind {
    pub const ALL: [PresetKind; 4] = [
        PresetKind::UniformCube,
        PresetKind::CheckerPlane,
        PresetKind::Stadium,
        PresetKind::TwoScans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PresetKind::UniformCube => "uniform-cube",
            PresetKind::CheckerPlane => "checker-plane",
            PresetKind::Stadium => "stadium",
            PresetKind::TwoScans => "two-scans",
        }
    }
}

impl fmt::Display for PresetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PresetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform-cube" => Ok(PresetKind::UniformCube),
            "plane" | "checker-plane" => Ok(PresetKind::CheckerPlane),
            "stadium" => Ok(PresetKind::Stadium),
            "two-scans" => Ok(PresetKind::TwoScans),
            other => Err(Error::invalid(format!(
                "unknown preset {other:?} (expected uniform, plane, stadium or two-scans)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorPreset {
    pub kind: PresetKind,
    pub count: usize,
    pub seed: u64,
}

impl GeneratorPreset {
    pub fn new(kind: PresetKind, count: usize, seed: u64) -> Self {
        Self { kind, count, seed }
    }
}

/// Deterministic synthetic points inside the unit cube.
pub fn generate(preset: &GeneratorPreset) -> Result<Vec<Point>> {
    if preset.count == 0 {
        return Err(Error::invalid("point count must be at least 1"));
    }
    let mut rng = SplitMix64::new(preset.seed);
    let n = preset.count;
    Ok(match preset.kind {
        PresetKind::UniformCube => (0..n).map(|_| uniform_point(&mut rng)).collect(),
        PresetKind::CheckerPlane => checker_plane(&mut rng, n),
        PresetKind::Stadium => (0..n)
            .map(|_| {
                if rng.next_f64() < DENSE_FRACTION {
                    let mut c = || DENSE_CUBE_MIN + rng.next_f64() * DENSE_CUBE_SIZE;
                    let (x, y, z) = (c(), c(), c());
                    Point::new(x, y, z, random_color(&mut rng))
                } else {
                    uniform_point(&mut rng)
                }
            })
            .collect(),
        PresetKind::TwoScans => two_scans(&mut rng, n),
    })
}

fn random_color(rng: &mut SplitMix64) -> ColorRgb {
    let (r, g, b) = (rng.next_u8(), rng.next_u8(), rng.next_u8());
    ColorRgb::new(r, g, b)
}

fn uniform_point(rng: &mut SplitMix64) -> Point {
    let (x, y, z) = (rng.next_f64(), rng.next_f64(), rng.next_f64());
    Point::new(x, y, z, random_color(rng))
}

/// Stratified jittered samples of the z = 0 plane: one point per cell of a
/// `side x side` raster, filled row by row.
fn checker_plane(rng: &mut SplitMix64, n: usize) -> Vec<Point> {
    let side = (n as f64).sqrt().ceil() as usize;
    (0..n)
        .map(|i| {
            let (cx, cy) = ((i % side) as f64, (i / side) as f64);
            let x = (cx + rng.next_f64()) / side as f64;
            let y = (cy + rng.next_f64()) / side as f64;
            let square = (x * 8.0) as usize + (y * 8.0) as usize;
            let color = if square.is_multiple_of(2) {
                ColorRgb::new(255, 255, 255)
            } else {
                ColorRgb::new(0, 0, 0)
            };
            Point::new(x, y, 0.0, color)
        })
        .collect()
}

/// Two noisy captures of one wavy surface, interleaved A, B, A, B.
fn two_scans(rng: &mut SplitMix64, n: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (sx, sy) = (rng.next_f64(), rng.next_f64());
        let sz = 0.5 + 0.25 * (TAU * sx).sin() * (TAU * sy).cos();
        for color in [SCAN_A, SCAN_B] {
            if out.len() == n {
                break;
            }
            let mut j = |v: f64| (v + (rng.next_f64() * 2.0 - 1.0) * SCAN_JITTER).clamp(0.0, 1.0);
            let (x, y, z) = (j(sx), j(sy), j(sz));
            out.push(Point::new(x, y, z, color));
        }
    }
    out
}
