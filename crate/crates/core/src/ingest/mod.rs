//! Point cloud input: LAS and PLY readers, a PLY writer and synthetic generators.

mod generate;
mod las;
mod ply;

use std::path::Path;

pub use generate::{
    generate, GeneratorPreset, PresetKind, DENSE_CUBE_MIN, DENSE_CUBE_SIZE, SCAN_A, SCAN_B,
};
pub use las::{read_las, read_las_from};
pub use ply::{read_ply, read_ply_from, write_ply, write_ply_to};

use crate::error::{Error, Result};
use crate::model::Point;

/// Dispatches on the file extension (`.las` or `.ply`, case-insensitive).
pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("las") => read_las(path),
        Some("ply") => read_ply(path),
        Some("laz") => Err(Error::Unsupported("compressed LAS (LAZ) input".into())),
        _ => Err(Error::Unsupported(format!(
            "unknown input extension for {}",
            path.display()
        ))),
    }
}
