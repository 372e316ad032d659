//! Field serialization.
//!
//! Both encodings store `n_h`, `n_v`, the dealias fraction and the coefficients
//! in row-major `k` order (`k1` outer, `k2` inner), interleaved per wavenumber as
//! `re(u1), im(u1), re(u2), im(u2)`.
//!
//! Binary layout, little-endian:
//! `b"SNSF"`, `u32 version`, `u32 n_h`, `u32 n_v`, `f64 dealias_fraction`,
//! `u32 count`, then `count` fields of `4 * (n_h+1) * (n_v+1)` `f64` each.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Grid, SpectralField};
use crate::error::{Error, Result};

pub const FIELD_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SNSF";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub version: u32,
    pub n_h: usize,
    pub n_v: usize,
    pub dealias_fraction: f64,
    pub coefficients: Vec<f64>,
}

impl From<&SpectralField> for FieldRecord {
    fn from(f: &SpectralField) -> Self {
        let g = f.grid();
        FieldRecord {
            version: FIELD_FORMAT_VERSION,
            n_h: g.n_h,
            n_v: g.n_v,
            dealias_fraction: g.dealias_fraction,
            coefficients: interleave(f),
        }
    }
}

impl TryFrom<&FieldRecord> for SpectralField {
    type Error = Error;

    fn try_from(r: &FieldRecord) -> Result<Self> {
        if r.version != FIELD_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported field version {}", r.version)));
        }
        let grid = Grid::with_dealias(r.n_h, r.n_v, r.dealias_fraction)?;
        deinterleave(grid, &r.coefficients)
    }
}

fn interleave(f: &SpectralField) -> Vec<f64> {
    f.coeffs()
        .iter()
        .flat_map(|c| [c[0].re, c[0].im, c[1].re, c[1].im])
        .collect()
}

fn deinterleave(grid: Grid, data: &[f64]) -> Result<SpectralField> {
    if data.len() != 4 * grid.len() {
        return Err(Error::DimensionMismatch {
            expected: 4 * grid.len(),
            actual: data.len(),
        });
    }
    let coeffs = data
        .chunks_exact(4)
        .map(|c| [Complex64::new(c[0], c[1]), Complex64::new(c[2], c[3])])
        .collect();
    SpectralField::from_coeffs(grid, coeffs)
}

/// Writes fields sharing one grid.
pub fn write_fields_binary<W: Write>(mut w: W, fields: &[SpectralField]) -> Result<()> {
    let grid = match fields.first() {
        Some(f) => *f.grid(),
        None => return Err(Error::Format("no fields to write".into())),
    };
    for f in fields {
        grid.ensure_same(f.grid())?;
    }
    w.write_all(MAGIC)?;
    w.write_all(&FIELD_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(grid.n_h as u32).to_le_bytes())?;
    w.write_all(&(grid.n_v as u32).to_le_bytes())?;
    w.write_all(&grid.dealias_fraction.to_le_bytes())?;
    w.write_all(&(fields.len() as u32).to_le_bytes())?;
    for f in fields {
        for x in interleave(f) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_fields_binary<R: Read>(mut r: R) -> Result<Vec<SpectralField>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a field file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != FIELD_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported field version {version}")));
    }
    let n_h = read_u32(&mut r)? as usize;
    let n_v = read_u32(&mut r)? as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let grid = Grid::with_dealias(n_h, n_v, f64::from_le_bytes(b8))?;
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    let mut data = vec![0.0; 4 * grid.len()];
    for _ in 0..count {
        for x in data.iter_mut() {
            r.read_exact(&mut b8)?;
            *x = f64::from_le_bytes(b8);
        }
        out.push(deinterleave(grid, &data)?);
    }
    Ok(out)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
