//! Binary and CSV persistence of collision matrices.
//!
//! Layout (little endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "BPDGKMAT"
//! 8       4     format version (u32)
//! 12      4     provenance code (u32; 0 oracle, 1 Monte Carlo)
//! 16      8     N (u64)
//! 24      32    SHA-256 of the payload
//! 56      ...   payload: K row-major (N² f64), then ∫Γ per cell (N f64)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::collision::{CollisionMatrix, Provenance};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"BPDGKMAT";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 56;

fn payload(kmat: &CollisionMatrix) -> Vec<u8> {
    let n = kmat.len();
    let mut out = Vec::with_capacity(8 * n * (n + 1));
    for v in kmat.k.iter().chain(kmat.gamma_int.iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode(kmat: &CollisionMatrix) -> Vec<u8> {
    let body = payload(kmat);
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&kmat.provenance.code().to_le_bytes());
    out.extend_from_slice(&(kmat.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&body));
    out.extend_from_slice(&body);
    out
}

pub fn decode(bytes: &[u8]) -> Result<CollisionMatrix> {
    let bad = |m: &str| Error::MatrixFormat(m.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("wrong magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(Error::MatrixFormat(format!("unsupported version {version}")));
    }
    let provenance = Provenance::from_code(u32_at(12))
        .ok_or_else(|| Error::MatrixFormat(format!("unknown provenance {}", u32_at(12))))?;
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let n = usize::try_from(n).map_err(|_| bad("N does not fit in memory"))?;
    let body = &bytes[HEADER_LEN..];
    let expected = n
        .checked_mul(n + 1)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| bad("N overflows"))?;
    if body.len() != expected {
        return Err(Error::MatrixFormat(format!(
            "payload is {} bytes, expected {expected} for N = {n}",
            body.len()
        )));
    }
    if Sha256::digest(body).as_slice() != &bytes[24..56] {
        return Err(bad("checksum mismatch"));
    }
    let mut vals = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let k: Vec<f64> = vals.by_ref().take(n * n).collect();
    let gamma: Vec<f64> = vals.collect();
    let k = Array2::from_shape_vec((n, n), k).expect("length checked");
    CollisionMatrix::new(k, gamma, provenance)
}

pub fn write_kmatrix(path: &Path, kmat: &CollisionMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(kmat))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_kmatrix(path: &Path) -> Result<CollisionMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Long-format CSV: one row per entry, then the Γ integrals with `beta`
/// left empty.
pub fn write_kmatrix_csv<W: Write>(kmat: &CollisionMatrix, mut w: W) -> std::io::Result<()> {
    writeln!(w, "alpha,beta,value")?;
    for ((a, b), v) in kmat.k.indexed_iter() {
        writeln!(w, "{a},{b},{v:.14e}")?;
    }
    for (a, v) in kmat.gamma_int.iter().enumerate() {
        writeln!(w, "{a},,{v:.14e}")?;
    }
    Ok(())
}
