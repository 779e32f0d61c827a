//! Binary matrix files: `RFGN`, u32 version, u64 rows, u64 columns, then the
//! row-major entries as little-endian f64.

use std::fs;
use std::io;
use std::path::Path;

use rfgn_core::Embeddings;

pub const MAGIC: &[u8; 4] = b"RFGN";
pub const VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 8 + 8;

pub fn encode(m: &Embeddings) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 8 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u64).to_le_bytes());
    for x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn invalid(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

pub fn decode(bytes: &[u8]) -> io::Result<Embeddings> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(invalid("not an RFGN matrix file".into()));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(invalid(format!("unsupported RFGN version {version}")));
    }
    let (rows, dim) = (word(8) as usize, word(16) as usize);
    let body = &bytes[HEADER..];
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| invalid("matrix shape overflows".into()))?;
    if body.len() != expected {
        return Err(invalid(format!(
            "expected {expected} payload bytes for {rows}x{dim}, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Embeddings::from_vec(rows, dim, data).map_err(|e| invalid(e.to_string()))
}

pub fn write(path: &Path, m: &Embeddings) -> io::Result<()> {
    fs::write(path, encode(m))
}

pub fn read(path: &Path) -> io::Result<Embeddings> {
    decode(&fs::read(path)?)
}
