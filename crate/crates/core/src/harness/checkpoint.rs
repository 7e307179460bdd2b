//! `.ssae` checkpoints: a trained pilot matrix, decoder and threshold.
//!
//! Layout, all little-endian: `SSAE1`, then `version`, `N`, `L`, `Q` as u32,
//! then `Re A`, `Im A` (L x N), `theta1` (Q x 2L), `b1`, `theta2` (Q x Q),
//! `b2`, `theta3` (N x Q), `b3` as row-major f64, then `r_star` as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::autoencoder::{AutoencoderParams, DecoderParams};
use crate::error::{Error, Result};
use crate::model::MeasurementMatrix;

const MAGIC: &[u8; 5] = b"SSAE1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: AutoencoderParams,
    pub r_star: f64,
}

impl Checkpoint {
    /// `(N, L, Q)`
    pub fn shape(&self) -> (usize, usize, usize) {
        let (l, q, n) = self.params.w.dims();
        (n, l, q)
    }

    /// Reject a checkpoint trained for other dimensions.
    pub fn expect_shape(&self, n: usize, l: usize, q: usize) -> Result<()> {
        let got = self.shape();
        let fields = [("N", got.0, n), ("L", got.1, l), ("Q", got.2, q)];
        for (field, have, want) in fields {
            if have != want {
                return Err(Error::Parse {
                    format: "SSAE1",
                    field,
                    reason: format!("checkpoint has {have}, expected {want}"),
                });
            }
        }
        Ok(())
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &AutoencoderParams, r_star: f64) -> Result<()> {
    let (l, q, n) = params.w.dims();
    if params.a.rows() != l || params.a.cols() != n {
        return Err(Error::InvalidInput(format!(
            "pilot matrix {}x{} does not match decoder (L={l}, N={n})",
            params.a.rows(),
            params.a.cols()
        )));
    }
    w.write_all(MAGIC)?;
    for v in [VERSION, n as u32, l as u32, q as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::new();
    for block in params.slices() {
        buf.clear();
        for v in block {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.write_all(&r_star.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

fn parse_err(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Parse {
        format: "SSAE1",
        field,
        reason: reason.into(),
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], field: &'static str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => parse_err(field, "file is truncated"),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, field: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, field)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize, field: &'static str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    read_exact(r, &mut bytes, field)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize, field: &'static str) -> Result<Array2<f64>> {
    let data = read_f64s(r, rows * cols, field)?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked by the read"))
}

fn read_vector<R: Read>(r: &mut R, len: usize, field: &'static str) -> Result<Array1<f64>> {
    Ok(Array1::from(read_f64s(r, len, field)?))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 5];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(parse_err("magic", format!("expected SSAE1, found {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(parse_err("version", format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r, "N")? as usize;
    let l = read_u32(&mut r, "L")? as usize;
    let q = read_u32(&mut r, "Q")? as usize;
    for (field, v) in [("N", n), ("L", l), ("Q", q)] {
        if v == 0 {
            return Err(parse_err(field, "must be positive"));
        }
    }
    if l >= n {
        return Err(parse_err("L", format!("L={l} must be below N={n}")));
    }
    // guards the allocations below against garbage headers
    if n.saturating_mul(q).max(q.saturating_mul(q)) > 1 << 28 {
        return Err(parse_err("Q", format!("implausible dimensions N={n}, Q={q}")));
    }

    let a = MeasurementMatrix::new(
        read_matrix(&mut r, l, n, "a_re")?,
        read_matrix(&mut r, l, n, "a_im")?,
    )?;
    let w = DecoderParams {
        theta1: read_matrix(&mut r, q, 2 * l, "theta1")?,
        b1: read_vector(&mut r, q, "b1")?,
        theta2: read_matrix(&mut r, q, q, "theta2")?,
        b2: read_vector(&mut r, q, "b2")?,
        theta3: read_matrix(&mut r, n, q, "theta3")?,
        b3: read_vector(&mut r, n, "b3")?,
    };
    let r_star = read_f64s(&mut r, 1, "r_star")?[0];
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(parse_err("r_star", "unexpected bytes after the last field"));
    }
    Ok(Checkpoint {
        params: AutoencoderParams { a, w },
        r_star,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &AutoencoderParams, r_star: f64) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path)?), params, r_star)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
