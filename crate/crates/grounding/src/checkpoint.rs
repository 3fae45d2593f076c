//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//! `VDGPTCKP` | version u32 | count u32 | per tensor:
//! name length u32 | name (UTF-8) | rank u32 | dims u64 × rank | f64 × product(dims).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::params::{NamedTensor, Parameters};
use crate::GroundingError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VDGPTCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> GroundingError {
    GroundingError::Checkpoint(e.to_string())
}

pub fn write_checkpoint(w: &mut impl Write, tensors: &[NamedTensor]) -> Result<(), GroundingError> {
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io_err)?;
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.data.len() {
            return Err(GroundingError::Checkpoint(format!(
                "tensor {} has {} values for shape {:?}",
                t.name,
                t.data.len(),
                t.shape
            )));
        }
        w.write_all(&(t.name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(t.name.as_bytes()).map_err(io_err)?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes()).map_err(io_err)?;
        for d in &t.shape {
            w.write_all(&(*d as u64).to_le_bytes()).map_err(io_err)?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], GroundingError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| GroundingError::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(b)
}

fn read_u32(r: &mut impl Read) -> Result<u32, GroundingError> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

const MAX_VALUES: u64 = 1 << 28;

pub fn read_checkpoint(r: &mut impl Read) -> Result<Vec<NamedTensor>, GroundingError> {
    if &read_array::<8>(r)? != CHECKPOINT_MAGIC {
        return Err(GroundingError::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(GroundingError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(r)?;
    let mut out = Vec::with_capacity(count.min(1024) as usize);
    for _ in 0..count {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len.min(4096)];
        if len > 4096 {
            return Err(GroundingError::Checkpoint("tensor name too long".into()));
        }
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| GroundingError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read_u32(r)?;
        if rank > 8 {
            return Err(GroundingError::Checkpoint(format!("tensor {name}: rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut total: u64 = 1;
        for _ in 0..rank {
            let d = u64::from_le_bytes(read_array(r)?);
            total = total.saturating_mul(d);
            shape.push(d as usize);
        }
        if total > MAX_VALUES {
            return Err(GroundingError::Checkpoint(format!("tensor {name} is too large")));
        }
        let mut data = Vec::with_capacity(total as usize);
        for _ in 0..total {
            data.push(f64::from_le_bytes(read_array(r)?));
        }
        out.push(NamedTensor { name, shape, data });
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, params: &dyn Parameters) -> Result<(), GroundingError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write_checkpoint(&mut w, &params.to_tensors())?;
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path, params: &mut dyn Parameters) -> Result<(), GroundingError> {
    let mut r = BufReader::new(File::open(path).map_err(io_err)?);
    let tensors = read_checkpoint(&mut r)?;
    params.load_tensors(&tensors)
}
