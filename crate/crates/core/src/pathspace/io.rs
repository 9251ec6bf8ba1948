//! Flat little-endian layout for caching ensembles.
//!
//! Header: `T: f64`, `n_steps: u64`, `d: u64`, `n_paths: u64`, `seed: u64`,
//! followed by the increments as `f64`, row-major `[path][step][component]`.
//! Only uniform grids round-trip.

use std::io::{Read, Write};

use super::{make_grid, WienerEnsemble, PathSource};
use crate::error::{Error, Result};

const HEADER_LEN: usize = 40;

pub fn write_ensemble<W: Write>(ensemble: &WienerEnsemble, mut out: W) -> Result<()> {
    let g = ensemble.grid();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * ensemble.raw_increments().len());
    buf.extend_from_slice(&g.horizon().to_le_bytes());
    buf.extend_from_slice(&(g.n_steps() as u64).to_le_bytes());
    buf.extend_from_slice(&(ensemble.dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(ensemble.n_paths() as u64).to_le_bytes());
    buf.extend_from_slice(&ensemble.seed().to_le_bytes());
    for v in ensemble.raw_increments() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(|e| Error::Format(e.to_string()))
}

pub fn to_bytes(ensemble: &WienerEnsemble) -> Vec<u8> {
    let mut v = Vec::new();
    write_ensemble(ensemble, &mut v).expect("writing to a Vec cannot fail");
    v
}

pub fn read_ensemble<R: Read>(mut input: R) -> Result<WienerEnsemble> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(e.to_string()))?;
    from_bytes(&bytes)
}

pub fn from_bytes(bytes: &[u8]) -> Result<WienerEnsemble> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated header".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().unwrap() };
    let horizon = f64::from_le_bytes(word(0));
    let to_usize = |v: u64| usize::try_from(v).map_err(|_| Error::Format("header field too large".into()));
    let n_steps = to_usize(u64::from_le_bytes(word(1)))?;
    let dim = to_usize(u64::from_le_bytes(word(2)))?;
    let n_paths = to_usize(u64::from_le_bytes(word(3)))?;
    let seed = u64::from_le_bytes(word(4));
    let count = n_paths
        .checked_mul(n_steps)
        .and_then(|v| v.checked_mul(dim))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * count {
        return Err(Error::Format(format!(
            "expected {} bytes of increments, found {}",
            8 * count,
            body.len()
        )));
    }
    let increments = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let grid = make_grid(horizon, n_steps).map_err(|e| Error::Format(e.to_string()))?;
    WienerEnsemble::from_increments(&grid, dim, n_paths, seed, increments)
}
