//! Vector files: `fvecs` / `bvecs` (little-endian `i32` dimension followed by
//! that many `f32` or `u8` values, per record) and headerless CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::metric::Points;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecFormat {
    Fvecs,
    Bvecs,
    Csv,
}

impl VecFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

impl FromStr for VecFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvecs" => Ok(Self::Fvecs),
            "bvecs" => Ok(Self::Bvecs),
            "csv" => Ok(Self::Csv),
            _ => Err(Error::arg(format!("unknown vector format {s:?}"))),
        }
    }
}

fn parse_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

pub fn load_vectors(path: &Path, format: VecFormat) -> Result<Points> {
    let file = BufReader::new(File::open(path)?);
    read_vectors(file, format)
}

pub fn read_vectors<R: Read>(reader: R, format: VecFormat) -> Result<Points> {
    match format {
        VecFormat::Fvecs => read_binary(reader, 4),
        VecFormat::Bvecs => read_binary(reader, 1),
        VecFormat::Csv => read_csv(reader),
    }
}

fn read_binary<R: Read>(mut reader: R, width: u64) -> Result<Points> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let total = bytes.len() as u64;
    let mut cur = std::io::Cursor::new(&bytes[..]);
    let mut out: Option<Points> = None;
    while cur.position() < total {
        let start = cur.position();
        let dim = cur
            .read_i32::<LittleEndian>()
            .map_err(|_| parse_err(start, "truncated dimension header"))?;
        if dim < 1 {
            return Err(parse_err(
                start,
                format!("record dimension {dim} must be positive"),
            ));
        }
        let dim = dim as usize;
        let points = out.get_or_insert_with(|| Points::new(dim));
        if points.dim() != dim {
            return Err(parse_err(
                start,
                format!("record dimension {dim} differs from {}", points.dim()),
            ));
        }
        if total - cur.position() < dim as u64 * width {
            return Err(parse_err(
                start,
                format!("record of dimension {dim} is truncated"),
            ));
        }
        let row: Vec<f64> = if width == 4 {
            (0..dim)
                .map(|_| cur.read_f32::<LittleEndian>().map(f64::from))
                .collect::<std::io::Result<_>>()?
        } else {
            (0..dim)
                .map(|_| cur.read_u8().map(f64::from))
                .collect::<std::io::Result<_>>()?
        };
        points.push(&row);
    }
    out.ok_or_else(|| parse_err(0, "file holds no records"))
}

fn read_csv<R: Read>(reader: R) -> Result<Points> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out: Option<Points> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let offset = e.position().map(|p| p.byte()).unwrap_or(0);
            parse_err(offset, e.to_string())
        })?;
        let offset = rec.position().map(|p| p.byte()).unwrap_or(0);
        let row = rec
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| parse_err(offset, format!("not a number: {c:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let points = out.get_or_insert_with(|| Points::new(row.len()));
        if row.len() != points.dim() {
            return Err(parse_err(
                offset,
                format!("row has {} values, expected {}", row.len(), points.dim()),
            ));
        }
        points.push(&row);
    }
    out.ok_or_else(|| parse_err(0, "file holds no records"))
}

pub fn save_vectors(path: &Path, points: &Points, format: VecFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vectors(&mut w, points, format)?;
    w.flush()?;
    Ok(())
}

/// Writes `points`; `fvecs` narrows to `f32`, `bvecs` requires integers in `0..=255`.
pub fn write_vectors<W: Write>(w: &mut W, points: &Points, format: VecFormat) -> Result<()> {
    let dim = i32::try_from(points.dim()).map_err(|_| Error::dim("dimension exceeds i32"))?;
    match format {
        VecFormat::Fvecs => {
            for row in points.rows() {
                w.write_i32::<LittleEndian>(dim)?;
                for &x in row {
                    w.write_f32::<LittleEndian>(x as f32)?;
                }
            }
        }
        VecFormat::Bvecs => {
            for row in points.rows() {
                w.write_i32::<LittleEndian>(dim)?;
                for &x in row {
                    if !(0.0..=255.0).contains(&x) || x.fract() != 0.0 {
                        return Err(Error::arg(format!("bvecs value {x} is not a byte")));
                    }
                    w.write_u8(x as u8)?;
                }
            }
        }
        VecFormat::Csv => {
            let mut cw = csv::Writer::from_writer(w);
            for row in points.rows() {
                cw.write_record(row.iter().map(|x| x.to_string()))
                    .map_err(|e| Error::Io(e.into()))?;
            }
            cw.flush()?;
        }
    }
    Ok(())
}
