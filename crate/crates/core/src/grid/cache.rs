//! Binary field format: magic `CLAB`, u16 version, u16 dimension, u32 N,
//! f64 L, then the values as little-endian complex128 in row-major order.

use std::io::{Read, Write};

use num_complex::Complex64 as C64;

use super::{GridSpec, ScalarField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CLAB";
pub const VERSION: u16 = 1;

pub fn write_field(mut w: impl Write, f: &ScalarField) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 16 * f.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(f.grid.dim as u16).to_le_bytes());
    buf.extend_from_slice(&(f.grid.nodes as u32).to_le_bytes());
    buf.extend_from_slice(&f.grid.half_period.to_le_bytes());
    for v in &f.values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field(mut r: impl Read) -> Result<ScalarField> {
    let mut head = [0u8; 20];
    r.read_exact(&mut head)
        .map_err(|e| Error::Cache(format!("truncated header: {e}")))?;
    if &head[0..4] != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != VERSION {
        return Err(Error::Cache(format!("unsupported version {version}")));
    }
    let dim = u16::from_le_bytes([head[6], head[7]]) as usize;
    let nodes = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let half_period = f64::from_le_bytes(head[12..20].try_into().unwrap());
    let grid = GridSpec::new(dim, half_period, nodes)?;
    let mut body = vec![0u8; 16 * grid.len()];
    r.read_exact(&mut body)
        .map_err(|e| Error::Cache(format!("truncated body: {e}")))?;
    let values = body
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    ScalarField::from_values(grid, values)
}
