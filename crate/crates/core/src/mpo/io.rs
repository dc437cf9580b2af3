//! Flat binary MPO checkpoints: a length-prefixed JSON header followed by the
//! raw site tensors, row-major, little-endian, two f64 per complex entry.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array4;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::Mpo;
use crate::error::{Error, Result};

const DTYPE: &str = "complex128";
const INDEX_ORDER: &str = "LBKR";

#[derive(Serialize, Deserialize)]
struct Header {
    n: usize,
    bond_dims: Vec<usize>,
    dtype: String,
    index_order: String,
}

pub fn save_mpo(path: &Path, mpo: &Mpo) -> Result<()> {
    let header = Header {
        n: mpo.n_sites(),
        bond_dims: mpo.bond_dims(),
        dtype: DTYPE.to_string(),
        index_order: INDEX_ORDER.to_string(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for site in mpo.sites() {
        for z in site.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_mpo(path: &Path) -> Result<Mpo> {
    let mut r = BufReader::new(File::open(path)?);
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)
        .map_err(|_| Error::BadCheckpoint("missing header length".into()))?;
    let header_len = u32::from_le_bytes(len_buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|_| Error::BadCheckpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::BadCheckpoint(format!("bad header JSON: {e}")))?;
    if header.dtype != DTYPE {
        return Err(Error::BadCheckpoint(format!(
            "unsupported dtype {}",
            header.dtype
        )));
    }
    if header.index_order != INDEX_ORDER {
        return Err(Error::BadCheckpoint(format!(
            "unsupported index order {}",
            header.index_order
        )));
    }
    if header.bond_dims.len() != header.n + 1
        || header.n == 0
        || header.bond_dims[0] != 1
        || header.bond_dims[header.n] != 1
    {
        return Err(Error::BadCheckpoint("inconsistent bond dimensions".into()));
    }
    let mut sites = Vec::with_capacity(header.n);
    for i in 0..header.n {
        let (l, rr) = (header.bond_dims[i], header.bond_dims[i + 1]);
        let count = l * 4 * rr;
        let mut buf = vec![0u8; count * 16];
        r.read_exact(&mut buf)
            .map_err(|_| Error::BadCheckpoint(format!("truncated tensor data at site {i}")))?;
        let data: Vec<C64> = buf
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                )
            })
            .collect();
        let site = Array4::from_shape_vec((l, 2, 2, rr), data)
            .map_err(|e| Error::BadCheckpoint(e.to_string()))?;
        sites.push(site);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::BadCheckpoint("trailing bytes".into()));
    }
    Mpo::new(sites)
}
