use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::{ColorRgb, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            other => return Err(Error::format(format!("unknown PLY type {other:?}"))),
        })
    }

    fn read_le<R: Read>(self, r: &mut R) -> Result<f64> {
        Ok(match self {
            Self::I8 => r.read_i8()? as f64,
            Self::U8 => r.read_u8()? as f64,
            Self::I16 => r.read_i16::<LittleEndian>()? as f64,
            Self::U16 => r.read_u16::<LittleEndian>()? as f64,
            Self::I32 => r.read_i32::<LittleEndian>()? as f64,
            Self::U32 => r.read_u32::<LittleEndian>()? as f64,
            Self::F32 => r.read_f32::<LittleEndian>()? as f64,
            Self::F64 => r.read_f64::<LittleEndian>()?,
        })
    }
}

#[derive(Debug, Clone)]
enum Property {
    Value(String, Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<Vec<Point>> {
    read_ply_from(BufReader::new(File::open(path)?))
}

/// Reads the `vertex` element of an ascii or binary little-endian PLY stream.
pub fn read_ply_from<R: BufRead>(mut r: R) -> Result<Vec<Point>> {
    let header = read_header(&mut r)?;
    let mut points = Vec::new();
    for element in &header.elements {
        let vertex = element.name == "vertex";
        let layout = if vertex {
            Some(VertexLayout::of(element)?)
        } else {
            None
        };
        match header.format {
            Format::BinaryLe => {
                let mut values = Vec::with_capacity(element.props.len());
                for _ in 0..element.count {
                    values.clear();
                    for prop in &element.props {
                        match *prop {
                            Property::Value(_, ty) => values.push(ty.read_le(&mut r)?),
                            Property::List(count_ty, item_ty) => {
                                let n = count_ty.read_le(&mut r)? as usize;
                                for _ in 0..n {
                                    item_ty.read_le(&mut r)?;
                                }
                                values.push(f64::NAN);
                            }
                        }
                    }
                    if let Some(layout) = &layout {
                        points.push(layout.point(&values));
                    }
                }
            }
            Format::Ascii => {
                let mut line = String::new();
                let mut values = Vec::with_capacity(element.props.len());
                for _ in 0..element.count {
                    line.clear();
                    if r.read_line(&mut line)? == 0 {
                        return Err(Error::Io(std::io::ErrorKind::UnexpectedEof.into()));
                    }
                    values.clear();
                    let mut tokens = line.split_ascii_whitespace();
                    let mut next = || -> Result<f64> {
                        let tok = tokens
                            .next()
                            .ok_or_else(|| Error::format("PLY row has too few values"))?;
                        tok.parse::<f64>()
                            .map_err(|_| Error::format(format!("bad PLY value {tok:?}")))
                    };
                    for prop in &element.props {
                        match prop {
                            Property::Value(..) => values.push(next()?),
                            Property::List(..) => {
                                let n = next()? as usize;
                                for _ in 0..n {
                                    next()?;
                                }
                                values.push(f64::NAN);
                            }
                        }
                    }
                    if let Some(layout) = &layout {
                        points.push(layout.point(&values));
                    }
                }
            }
        }
        if vertex {
            return Ok(points);
        }
    }
    Err(Error::format("PLY file has no vertex element"))
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<([usize; 3], Scalar)>,
}

impl VertexLayout {
    fn of(element: &Element) -> Result<Self> {
        let find = |name: &str| {
            element
                .props
                .iter()
                .position(|p| matches!(p, Property::Value(n, _) if n == name))
        };
        let axis = |name: &str| {
            find(name).ok_or_else(|| Error::format(format!("PLY vertex lacks property {name}")))
        };
        let xyz = [axis("x")?, axis("y")?, axis("z")?];
        let rgb = match (find("red"), find("green"), find("blue")) {
            (Some(r), Some(g), Some(b)) => {
                let Property::Value(_, ty) = element.props[r] else {
                    unreachable!()
                };
                Some(([r, g, b], ty))
            }
            _ => None,
        };
        Ok(Self { xyz, rgb })
    }

    fn point(&self, v: &[f64]) -> Point {
        let color = match self.rgb {
            Some(([r, g, b], Scalar::U16)) => {
                ColorRgb::from_u16(v[r] as u16, v[g] as u16, v[b] as u16)
            }
            Some(([r, g, b], _)) => {
                let c = |x: f64| x.clamp(0.0, 255.0) as u8;
                ColorRgb::new(c(v[r]), c(v[g]), c(v[b]))
            }
            None => ColorRgb::GRAY,
        };
        Point::new(v[self.xyz[0]], v[self.xyz[1]], v[self.xyz[2]], color)
    }
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::format("missing \"ply\" signature"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::format("PLY header not terminated by end_header"));
        }
        let words: Vec<&str> = line.split_ascii_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => format = Some(Format::Ascii),
            ["format", "binary_little_endian", _] => format = Some(Format::BinaryLe),
            ["format", other, ..] => {
                return Err(Error::Unsupported(format!("PLY format {other}")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(format!("bad element count {count:?}")))?,
                props: Vec::new(),
            }),
            ["property", "list", count_ty, item_ty, _] => {
                let prop = Property::List(Scalar::parse(count_ty)?, Scalar::parse(item_ty)?);
                current(&mut elements)?.props.push(prop);
            }
            ["property", ty, name] => {
                let prop = Property::Value(name.to_string(), Scalar::parse(ty)?);
                current(&mut elements)?.props.push(prop);
            }
            _ => {
                return Err(Error::format(format!(
                    "bad PLY header line {:?}",
                    line.trim_end()
                )))
            }
        }
    }
    let format = format.ok_or_else(|| Error::format("PLY header lacks a format line"))?;
    Ok(Header { format, elements })
}

fn current(elements: &mut [Element]) -> Result<&mut Element> {
    elements
        .last_mut()
        .ok_or_else(|| Error::format("PLY property before any element"))
}

pub fn write_ply(path: impl AsRef<Path>, points: &[Point]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply_to(&mut w, points)?;
    w.flush()?;
    Ok(())
}

/// Binary little-endian PLY with double coordinates and 8-bit color.
pub fn write_ply_to<W: Write>(mut w: W, points: &[Point]) -> Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    )?;
    for p in points {
        w.write_f64::<LittleEndian>(p.x)?;
        w.write_f64::<LittleEndian>(p.y)?;
        w.write_f64::<LittleEndian>(p.z)?;
        w.write_all(&p.color.channels())?;
    }
    Ok(())
}
