//! Big-endian IDX containers with unsigned byte payloads.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Type code for unsigned 8-bit payloads.
pub const IDX_UBYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        if n != Some(data.len()) {
            return Err(Error::dim(format!("{} bytes for dims {dims:?}", data.len())));
        }
        Ok(Self { dims, data })
    }

    /// Element `i` along the first axis.
    pub fn item(&self, i: usize) -> &[u8] {
        let n: usize = self.dims[1..].iter().product();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0, 0, IDX_UBYTE, self.dims.len() as u8];
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated { expected: 4, actual: bytes.len() });
        }
        if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_UBYTE {
            return Err(Error::format(
                path,
                format!("bad IDX magic {:02x} {:02x} {:02x} {:02x}", bytes[0], bytes[1], bytes[2], bytes[3]),
            ));
        }
        let rank = bytes[3] as usize;
        if rank == 0 {
            return Err(Error::format(path, "IDX rank 0"));
        }
        let header = 4 + 4 * rank;
        if bytes.len() < header {
            return Err(Error::Truncated { expected: header, actual: bytes.len() });
        }
        let dims: Vec<usize> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
            .collect();
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .and_then(|n| n.checked_add(header))
            .ok_or_else(|| Error::format(path, format!("IDX dims {dims:?} overflow")))?;
        if bytes.len() < n {
            return Err(Error::Truncated { expected: n, actual: bytes.len() });
        }
        Ok(Self { dims, data: bytes[header..n].to_vec() })
    }
}

pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxArray> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    IdxArray::from_bytes(&bytes, path)
}

pub fn write_idx(array: &IdxArray, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, array.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
