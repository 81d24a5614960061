use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::model::{ColorRgb, Point};

const MIN_HEADER: usize = 227;
const COUNT_64_OFFSET: usize = 247;

pub fn read_las(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    read_las_from(BufReader::new(File::open(path)?))
}

/// Reads uncompressed LAS 1.2 to 1.4, point formats 0-3 and 6-8.
pub fn read_las_from<R: Read>(mut r: R) -> Result<Vec<Point>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != b"LASF" {
        return Err(Error::format("missing LASF signature"));
    }
    let mut head = vec![0u8; MIN_HEADER];
    head[..4].copy_from_slice(&magic);
    r.read_exact(&mut head[4..])?;

    let (major, minor) = (head[24], head[25]);
    if major != 1 || !(2..=4).contains(&minor) {
        return Err(Error::Unsupported(format!("LAS version {major}.{minor}")));
    }
    let header_size = LittleEndian::read_u16(&head[94..]) as usize;
    let data_offset = LittleEndian::read_u32(&head[96..]) as usize;
    let raw_format = head[104];
    let record_len = LittleEndian::read_u16(&head[105..]) as usize;
    let legacy_count = LittleEndian::read_u32(&head[107..]) as u64;
    let scale = read3(&head[131..]);
    let offset = read3(&head[155..]);

    if raw_format & 0xC0 != 0 {
        return Err(Error::Unsupported("compressed LAS point records".into()));
    }
    let (min_len, rgb_at) = match raw_format {
        0 => (20, None),
        1 => (28, None),
        2 => (26, Some(20)),
        3 => (34, Some(28)),
        6 => (30, None),
        7 => (36, Some(30)),
        8 => (38, Some(30)),
        f => return Err(Error::Unsupported(format!("LAS point format {f}"))),
    };
    if record_len < min_len {
        return Err(Error::format(format!(
            "point record length {record_len} too short for format {raw_format}"
        )));
    }
    if header_size < MIN_HEADER || data_offset < header_size {
        return Err(Error::format("inconsistent LAS header sizes"));
    }

    // Everything between the fixed header prefix and the first record.
    let mut rest = vec![0u8; data_offset - MIN_HEADER];
    r.read_exact(&mut rest)?;
    let mut count = legacy_count;
    if minor >= 4 && legacy_count == 0 && header_size >= COUNT_64_OFFSET + 8 {
        let at = COUNT_64_OFFSET - MIN_HEADER;
        count = LittleEndian::read_u64(&rest[at..]);
    }

    let count = usize::try_from(count).map_err(|_| Error::format("point count overflow"))?;
    let mut points = Vec::with_capacity(count.min(1 << 26));
    let mut rec = vec![0u8; record_len];
    for _ in 0..count {
        r.read_exact(&mut rec)?;
        let xi = LittleEndian::read_i32(&rec[0..]) as f64;
        let yi = LittleEndian::read_i32(&rec[4..]) as f64;
        let zi = LittleEndian::read_i32(&rec[8..]) as f64;
        let color = match rgb_at {
            Some(at) => ColorRgb::from_u16(
                LittleEndian::read_u16(&rec[at..]),
                LittleEndian::read_u16(&rec[at + 2..]),
                LittleEndian::read_u16(&rec[at + 4..]),
            ),
            None => ColorRgb::GRAY,
        };
        points.push(Point::new(
            xi * scale[0] + offset[0],
            yi * scale[1] + offset[1],
            zi * scale[2] + offset[2],
            color,
        ));
    }
    Ok(points)
}

fn read3(b: &[u8]) -> [f64; 3] {
    [
        LittleEndian::read_f64(b),
        LittleEndian::read_f64(&b[8..]),
        LittleEndian::read_f64(&b[16..]),
    ]
}
