//! Binary factor snapshots.
//!
//! Layout (little-endian): 8-byte magic `PSLFSNAP`, `u32` version, then `u64`
//! num_users, num_items, dim and seed, followed by the row-major `f64` values.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::FactorState;

pub const MAGIC: &[u8; 8] = b"PSLFSNAP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 * 8;

pub fn write_snapshot<W: Write>(state: &FactorState, mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + state.values().len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for field in [
        state.num_users() as u64,
        state.num_items() as u64,
        state.dim() as u64,
        state.seed(),
    ] {
        buf.extend_from_slice(&field.to_le_bytes());
    }
    for v in state.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<FactorState> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Snapshot("missing magic header".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let field = |k: usize| {
        let at = 12 + 8 * k;
        u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
    };
    let (num_users, num_items, dim, seed) = (field(0), field(1), field(2), field(3));
    let count = num_users
        .checked_add(num_items)
        .and_then(|r| r.checked_mul(dim))
        .ok_or_else(|| Error::Snapshot("header sizes overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() as u64 != count * 8 {
        return Err(Error::Snapshot(format!(
            "expected {} value bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FactorState::from_values(
        num_users as usize,
        num_items as usize,
        dim as usize,
        seed,
        values,
    )
    .map_err(|e| Error::Snapshot(e.to_string()))
}
