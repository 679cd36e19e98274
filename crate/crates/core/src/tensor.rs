//! The FDT1 tensor file format.
//!
//! Little-endian throughout: magic `"FDT1"`, `u32` rank, `rank` x `u32` dims,
//! `u32` half-support, then the f32 payload in row-major order. For image
//! grids the payload order is `(h, w, channel)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FDT1";

/// A raw tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub dims: Vec<u32>,
    pub half_support: u32,
    pub values: Vec<f32>,
}

impl TensorData {
    pub fn new(dims: Vec<u32>, half_support: u32, values: Vec<f32>) -> Result<Self> {
        let expect: usize = dims.iter().map(|&d| d as usize).product();
        if expect != values.len() {
            return Err(Error::TensorFormat(format!(
                "dims {:?} imply {} values, got {}",
                dims,
                expect,
                values.len()
            )));
        }
        Ok(Self {
            dims,
            half_support,
            values,
        })
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

pub fn write_tensor(mut w: impl Write, t: &TensorData) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
    for d in &t.dims {
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&t.half_support.to_le_bytes())?;
    for v in &t.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor(mut r: impl Read) -> Result<TensorData> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::TensorFormat(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let rank = read_u32(&mut r, "rank")?;
    if rank == 0 || rank > 8 {
        return Err(Error::TensorFormat(format!("unreasonable rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        dims.push(read_u32(&mut r, "dims")?);
    }
    let half_support = read_u32(&mut r, "half-support")?;
    let count: usize = dims.iter().map(|&d| d as usize).product();
    let mut payload = vec![0u8; count * 4];
    read_exact(&mut r, &mut payload, "payload")?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    // Reject trailing garbage so truncated/concatenated files fail loudly.
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => TensorData::new(dims, half_support, values),
        _ => Err(Error::TensorFormat("trailing bytes after payload".into())),
    }
}

/// Reads one tensor from a stream that may contain more data after it.
pub fn read_tensor_embedded(mut r: impl Read) -> Result<TensorData> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(Error::TensorFormat(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let rank = read_u32(&mut r, "rank")?;
    if rank == 0 || rank > 8 {
        return Err(Error::TensorFormat(format!("unreasonable rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        dims.push(read_u32(&mut r, "dims")?);
    }
    let half_support = read_u32(&mut r, "half-support")?;
    let count: usize = dims.iter().map(|&d| d as usize).product();
    let mut payload = vec![0u8; count * 4];
    read_exact(&mut r, &mut payload, "payload")?;
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    TensorData::new(dims, half_support, values)
}

pub fn save_tensor(path: impl AsRef<Path>, t: &TensorData) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    write_tensor(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<TensorData> {
    let f = File::open(path)?;
    read_tensor(BufReader::new(f))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::TensorFormat(format!("truncated while reading {what}")))
}
