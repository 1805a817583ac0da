//! Binary container for named f32 tensors.
//!
//! Layout, all integers little-endian: magic `SDOK`, version u32, tensor
//! count u32; then per tensor a u16 name length, the UTF-8 name, a u8 rank,
//! one u64 per dimension and the f32 values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::NumericsError;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SDOK";
pub const VERSION: u32 = 1;

pub type NamedTensor = (String, Tensor<f32>);

fn bad(msg: impl Into<String>) -> NumericsError {
    NumericsError::Checkpoint(msg.into())
}

pub fn write_tensors<W: Write>(mut w: W, tensors: &[NamedTensor]) -> Result<(), NumericsError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = u32::try_from(tensors.len()).map_err(|_| bad("too many tensors"))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| bad(format!("name too long: {name}")))?;
        let rank = u8::try_from(t.rank()).map_err(|_| bad(format!("rank too high: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], NumericsError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| bad(format!("truncated container: {e}")))?;
    Ok(b)
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<NamedTensor>, NumericsError> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(bad("missing SDOK magic"));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(bad(format!("unsupported container version {version}")));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut out = Vec::with_capacity(count.min(4096) as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| bad(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
        let rank = read_array::<1, _>(&mut r)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = u64::from_le_bytes(read_array(&mut r)?);
            shape.push(usize::try_from(d).map_err(|_| bad("dimension overflows usize"))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad(format!("tensor {name} is too large")))?;
        let mut bytes = Vec::new();
        (&mut r)
            .take(numel as u64 * 4)
            .read_to_end(&mut bytes)?;
        if bytes.len() != numel * 4 {
            return Err(bad(format!("truncated data for tensor {name}")));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::new(&shape, data)?));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Ok(out)
}

pub fn save(path: &Path, tensors: &[NamedTensor]) -> Result<(), NumericsError> {
    write_tensors(BufWriter::new(File::create(path)?), tensors)
}

pub fn load(path: &Path) -> Result<Vec<NamedTensor>, NumericsError> {
    read_tensors(BufReader::new(File::open(path)?))
}
