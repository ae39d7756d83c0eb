//! On-disk formats for features, costs, plans and reports.
//!
//! Dense matrices use a flat little-endian binary layout: a 17-byte header
//! (`u32` rows, `u32` cols, `u32` radial bins, `u32` angular bins, `u8`
//! dtype) followed by the row-major payload. Raw-pixel features carry zero
//! radial and angular bins. Every writer goes through [`write_atomic`], so
//! an interrupted run never leaves a half-written artifact behind.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};

pub const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
    pub radial_bins: usize,
    pub angular_bins: usize,
    pub dtype: Dtype,
}

impl MatrixHeader {
    fn encode(&self) -> Result<[u8; HEADER_LEN]> {
        let mut out = [0u8; HEADER_LEN];
        let fields = [self.rows, self.cols, self.radial_bins, self.angular_bins];
        for (slot, value) in out.chunks_exact_mut(4).zip(fields) {
            let v = u32::try_from(value)
                .map_err(|_| Error::InvalidParameter(format!("{value} does not fit the u32 header")))?;
            slot.copy_from_slice(&v.to_le_bytes());
        }
        out[16] = self.dtype as u8;
        Ok(out)
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let dtype = match bytes[16] {
            0 => Dtype::F32,
            1 => Dtype::F64,
            other => return Err(Error::Format(format!("unknown dtype tag {other}"))),
        };
        Ok(Self {
            rows: word(0),
            cols: word(1),
            radial_bins: word(2),
            angular_bins: word(3),
            dtype,
        })
    }
}

/// Write `bytes` to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::file(&tmp, e))?;
    f.sync_all().map_err(|e| Error::file(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::file(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::file(path, e))
}

/// Feature matrix (`f32` payload) tagged with the polar grid it came from.
pub fn write_features(path: &Path, x: &Array2<f32>, radial_bins: usize, angular_bins: usize) -> Result<()> {
    let header = MatrixHeader {
        rows: x.nrows(),
        cols: x.ncols(),
        radial_bins,
        angular_bins,
        dtype: Dtype::F32,
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * x.len());
    bytes.extend_from_slice(&header.encode()?);
    for v in x.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

/// Cost or plan matrix (`f64` payload).
pub fn write_matrix(path: &Path, x: ArrayView2<'_, f64>) -> Result<()> {
    let header = MatrixHeader {
        rows: x.nrows(),
        cols: x.ncols(),
        radial_bins: 0,
        angular_bins: 0,
        dtype: Dtype::F64,
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8 * x.len());
    bytes.extend_from_slice(&header.encode()?);
    for v in x.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

fn payload(bytes: &[u8], expected: Dtype) -> Result<(MatrixHeader, &[u8])> {
    let header = MatrixHeader::decode(bytes)?;
    if header.dtype != expected {
        return Err(Error::Format(format!("expected {expected:?} payload, found {:?}", header.dtype)));
    }
    let need = header
        .rows
        .checked_mul(header.cols)
        .and_then(|n| n.checked_mul(header.dtype.width()))
        .ok_or_else(|| Error::Format("matrix dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < need {
        return Err(Error::Truncated {
            expected: need,
            found: body.len(),
        });
    }
    if body.len() > need {
        return Err(Error::Format(format!("{} trailing bytes after payload", body.len() - need)));
    }
    Ok((header, body))
}

pub fn read_features(path: &Path) -> Result<(MatrixHeader, Array2<f32>)> {
    let bytes = read_bytes(path)?;
    let (header, body) = payload(&bytes, Dtype::F32)?;
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let x = Array2::from_shape_vec((header.rows, header.cols), values).expect("length checked");
    Ok((header, x))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let bytes = read_bytes(path)?;
    let (header, body) = payload(&bytes, Dtype::F64)?;
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((header.rows, header.cols), values).expect("length checked"))
}

/// Comma-separated rows with an optional header line. Values use Rust's
/// shortest round-trip formatting, so output is reproducible bit for bit.
pub fn matrix_csv(x: ArrayView2<'_, f64>, header: Option<&[&str]>) -> String {
    let mut out = String::new();
    if let Some(names) = header {
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for row in x.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, x: ArrayView2<'_, f64>, header: Option<&[&str]>) -> Result<()> {
    write_atomic(path, matrix_csv(x, header).as_bytes())
}

pub fn read_csv(path: &Path, has_header: bool) -> Result<Array2<f64>> {
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(usize::from(has_header)) {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!("{}:{}: bad number {f:?}", path.display(), line_no + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!("{}:{}: ragged row", path.display(), line_no + 1)));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), cols), flat).expect("rows checked"))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::from("label\n");
    for l in labels {
        writeln!(out, "{l}").unwrap();
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad label {l:?}", path.display())))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Format(format!("cannot serialize {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Binary PGM (`P5`, maxval 255), min-max scaled; a constant matrix maps
/// to black.
pub fn pgm_bytes(x: ArrayView2<'_, f64>) -> Vec<u8> {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let mut out = format!("P5\n{} {}\n255\n", x.ncols(), x.nrows()).into_bytes();
    out.extend(x.iter().map(|&v| {
        if span > 0.0 {
            (255.0 * (v - lo) / span).round() as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_pgm(path: &Path, x: ArrayView2<'_, f64>) -> Result<()> {
    write_atomic(path, &pgm_bytes(x))
}
