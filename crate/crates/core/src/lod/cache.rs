//! Binary cache of corrected bases and three-tensors.
//!
//! Layout (little endian): magic `LODC`, format version, key string, then the
//! basis matrix in CSR form and the tensor arrays. Values are stored as raw
//! IEEE bit patterns so a round trip is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::fem::SparseMatrix;
use crate::tritensor::TriTensor;
use crate::{Error, Result};

pub const CACHE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LODC";

fn put_u64s(w: &mut impl Write, xs: &[usize]) -> Result<()> {
    w.write_all(&(xs.len() as u64).to_le_bytes())?;
    for &x in xs {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    Ok(())
}

fn put_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    w.write_all(&(xs.len() as u64).to_le_bytes())?;
    for &x in xs {
        w.write_all(&x.to_bits().to_le_bytes())?;
    }
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_len(r: &mut impl Read) -> Result<usize> {
    let n = get_u64(r)? as usize;
    if n > (1usize << 40) {
        return Err(Error::Cache("implausible array length".into()));
    }
    Ok(n)
}

fn get_u64s(r: &mut impl Read) -> Result<Vec<usize>> {
    let n = get_len(r)?;
    (0..n).map(|_| get_u64(r).map(|x| x as usize)).collect()
}

fn get_f64s(r: &mut impl Read) -> Result<Vec<f64>> {
    let n = get_len(r)?;
    (0..n).map(|_| get_u64(r).map(f64::from_bits)).collect()
}

pub fn save_cache(path: &Path, key: &str, phi: &SparseMatrix, omega: &TriTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(key.len() as u64).to_le_bytes())?;
    w.write_all(key.as_bytes())?;
    put_u64s(&mut w, &[phi.nrows(), phi.ncols()])?;
    put_u64s(&mut w, phi.row_ptr())?;
    put_u64s(&mut w, phi.col_idx())?;
    put_f64s(&mut w, phi.values())?;
    let (iptr, jidx, jptr, kidx, vals) = omega.raw_parts();
    put_u64s(&mut w, &[omega.n()])?;
    put_u64s(&mut w, iptr)?;
    put_u64s(&mut w, jidx)?;
    put_u64s(&mut w, jptr)?;
    put_u64s(&mut w, kidx)?;
    put_f64s(&mut w, vals)?;
    w.flush()?;
    Ok(())
}

/// Load a cache file; fails if the header or key does not match.
pub fn load_cache(path: &Path, key: &str) -> Result<(SparseMatrix, TriTensor)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Cache("not a cache file".into()));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    if u32::from_le_bytes(v) != CACHE_VERSION {
        return Err(Error::Cache(format!("unsupported cache version {}", u32::from_le_bytes(v))));
    }
    let klen = get_len(&mut r)?;
    let mut kb = vec![0u8; klen];
    r.read_exact(&mut kb)?;
    if kb != key.as_bytes() {
        return Err(Error::Cache("cache key mismatch".into()));
    }
    let shape = get_u64s(&mut r)?;
    if shape.len() != 2 {
        return Err(Error::Cache("corrupt shape".into()));
    }
    let row_ptr = get_u64s(&mut r)?;
    let col_idx = get_u64s(&mut r)?;
    let values = get_f64s(&mut r)?;
    let phi = SparseMatrix::from_csr(shape[0], shape[1], row_ptr, col_idx, values)
        .map_err(|e| Error::Cache(e.to_string()))?;
    let n = get_u64s(&mut r)?;
    let iptr = get_u64s(&mut r)?;
    let jidx = get_u64s(&mut r)?;
    let jptr = get_u64s(&mut r)?;
    let kidx = get_u64s(&mut r)?;
    let vals = get_f64s(&mut r)?;
    let omega = TriTensor::from_raw_parts(n.first().copied().unwrap_or(0), iptr, jidx, jptr, kidx, vals)
        .map_err(|e| Error::Cache(e.to_string()))?;
    Ok((phi, omega))
}
