//! Binary cache files.
//!
//! Every file starts with a 4-byte magic and a little-endian u64 `limit`,
//! followed by `limit` entries per array:
//!
//! * `RST1`: tau(1..=limit) as 128-bit little-endian two's complement.
//! * `RSC1`: lambda, then c, then prefix sums, each as IEEE-754 LE doubles.
//! * `RSD4`: d4(1..=limit) as LE u64, then prefix sums as LE doubles.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::coefficients::{CoefficientTable, TauTable};
use crate::d4::D4Table;
use crate::{Error, Result};

pub const TAU_MAGIC: &[u8; 4] = b"RST1";
pub const COEFF_MAGIC: &[u8; 4] = b"RSC1";
pub const D4_MAGIC: &[u8; 4] = b"RSD4";

const HEADER: usize = 12;

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CacheCorrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn write_file(path: &Path, magic: &[u8; 4], limit: usize, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    // Write to a sibling and rename so a crash never leaves a torn cache.
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(magic)?;
        w.write_all(&(limit as u64).to_le_bytes())?;
        body(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a file and validates magic and total length; returns (limit, body).
fn read_checked(path: &Path, magic: &[u8; 4], bytes_per_entry: usize) -> Result<(usize, Vec<u8>)> {
    let data = fs::read(path)?;
    if data.len() < HEADER {
        return Err(corrupt(path, "file shorter than header"));
    }
    if &data[..4] != magic {
        return Err(corrupt(
            path,
            format!(
                "magic {:?}, expected {:?}",
                String::from_utf8_lossy(&data[..4]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let limit = u64::from_le_bytes(data[4..12].try_into().unwrap()) as usize;
    let expected = limit
        .checked_mul(bytes_per_entry)
        .and_then(|b| b.checked_add(HEADER))
        .ok_or_else(|| corrupt(path, "limit overflows file size"))?;
    if data.len() != expected {
        return Err(corrupt(
            path,
            format!("length {} bytes, expected {} for limit {}", data.len(), expected, limit),
        ));
    }
    if limit == 0 {
        return Err(corrupt(path, "limit is zero"));
    }
    Ok((limit, data))
}

fn f64s(bytes: &[u8]) -> impl Iterator<Item = f64> + '_ {
    bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
}

/// Leading zero entry followed by `limit` doubles.
fn indexed_f64s(bytes: &[u8]) -> Vec<f64> {
    std::iter::once(0.0).chain(f64s(bytes)).collect()
}

pub fn write_tau(path: &Path, table: &TauTable) -> Result<()> {
    write_file(path, TAU_MAGIC, table.limit(), |w| {
        for v in table.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_tau(path: &Path) -> Result<TauTable> {
    let (limit, data) = read_checked(path, TAU_MAGIC, 16)?;
    let values = data[HEADER..]
        .chunks_exact(16)
        .map(|b| i128::from_le_bytes(b.try_into().unwrap()))
        .collect::<Vec<_>>();
    debug_assert_eq!(values.len(), limit);
    if values[0] != 1 {
        return Err(corrupt(path, "tau(1) != 1"));
    }
    Ok(TauTable::from_values(values))
}

pub fn write_coefficients(path: &Path, table: &CoefficientTable) -> Result<()> {
    write_file(path, COEFF_MAGIC, table.limit(), |w| {
        for arr in [table.lambdas(), table.cs(), table.prefixes()] {
            for v in &arr[1..] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn read_coefficients(path: &Path) -> Result<CoefficientTable> {
    let (limit, data) = read_checked(path, COEFF_MAGIC, 24)?;
    let body = &data[HEADER..];
    let span = 8 * limit;
    let lambda = indexed_f64s(&body[..span]);
    let c = indexed_f64s(&body[span..2 * span]);
    let prefix = indexed_f64s(&body[2 * span..]);
    Ok(CoefficientTable::from_arrays(lambda, c, prefix))
}

pub fn write_d4(path: &Path, table: &D4Table) -> Result<()> {
    write_file(path, D4_MAGIC, table.limit(), |w| {
        for v in &table.values()[1..] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &table.prefixes()[1..] {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    })
}

pub fn read_d4(path: &Path) -> Result<D4Table> {
    let (limit, data) = read_checked(path, D4_MAGIC, 16)?;
    let body = &data[HEADER..];
    let span = 8 * limit;
    let d4: Vec<u64> = std::iter::once(0)
        .chain(
            body[..span]
                .chunks_exact(8)
                .map(|b| u64::from_le_bytes(b.try_into().unwrap())),
        )
        .collect();
    let prefix = indexed_f64s(&body[span..]);
    if d4[1] != 1 {
        return Err(corrupt(path, "d4(1) != 1"));
    }
    Ok(D4Table::from_arrays(d4, prefix))
}
