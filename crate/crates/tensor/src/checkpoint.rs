//! Binary parameter checkpoints.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic      8 bytes   b"PRCLCKPT"
//! version    u32       1
//! meta_len   u32       length of the metadata blob
//! meta       bytes     UTF-8, opaque to this crate (callers store JSON)
//! count      u32       number of tensors
//! count x {
//!   name_len u32
//!   name     bytes     UTF-8
//!   rank     u32
//!   dims     u64 x rank
//!   values   f64 x product(dims), row-major, IEEE-754 bit patterns
//! }
//! ```
//!
//! Tensors are written in name order, so equal stores produce equal files.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PRCLCKPT";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamStore, meta: &str) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_len(&mut w, meta.len())?;
    w.write_all(meta.as_bytes())?;
    write_len(&mut w, params.len())?;
    for (name, t) in params.iter() {
        write_len(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        write_len(&mut w, t.rank())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ParamStore, String)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let meta = read_string(&mut r)?;
    let count = read_u32(&mut r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name = read_string(&mut r)?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        let t = Tensor::new(shape, data)
            .map_err(|e| TensorError::Checkpoint(format!("`{name}`: {e}")))?;
        if params.insert(name.clone(), t).is_some() {
            return Err(TensorError::Checkpoint(format!("duplicate tensor `{name}`")));
        }
    }
    Ok((params, meta))
}

pub fn save(path: impl AsRef<Path>, params: &ParamStore, meta: &str) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(f), params, meta)
}

pub fn load(path: impl AsRef<Path>) -> Result<(ParamStore, String)> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}

fn write_len<W: Write>(w: &mut W, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| TensorError::Checkpoint("length overflows u32".into()))?;
    w.write_all(&n.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| TensorError::Checkpoint(e.to_string()))
}
