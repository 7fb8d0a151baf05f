//! Weight file layout:
//!
//! ```text
//! "STMW1"
//! u32 LE   header length in bytes
//! [u8]     JSON architecture header
//! repeated per blob, in declaration order:
//!   u32 LE   element count
//!   [f32 LE] values
//! ```

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"STMW1";

fn io_err(e: std::io::Error) -> Error {
    Error::format("checkpoint", e.to_string())
}

pub fn write_checkpoint<W: Write, H: Serialize>(mut w: W, header: &H, blobs: &[&[f64]]) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&(json.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&json).map_err(io_err)?;
    for blob in blobs {
        w.write_all(&(blob.len() as u32).to_le_bytes()).map_err(io_err)?;
        let mut bytes = Vec::with_capacity(blob.len() * 4);
        for &v in blob.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&bytes).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn read_u32<R: Read>(r: &mut R) -> Result<Option<u32>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut buf[filled..]).map_err(io_err)?;
        if n == 0 {
            return if filled == 0 {
                Ok(None)
            } else {
                Err(Error::format("checkpoint", "truncated length field"))
            };
        }
        filled += n;
    }
    Ok(Some(u32::from_le_bytes(buf)))
}

pub fn read_checkpoint<R: Read, H: DeserializeOwned>(mut r: R) -> Result<(H, Vec<Vec<f64>>)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let len = read_u32(&mut r)?.ok_or_else(|| Error::format("checkpoint", "missing header"))?;
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(io_err)?;
    let header = serde_json::from_slice(&json)?;

    let mut blobs = Vec::new();
    while let Some(count) = read_u32(&mut r)? {
        let mut bytes = vec![0u8; count as usize * 4];
        r.read_exact(&mut bytes).map_err(io_err)?;
        blobs.push(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect(),
        );
    }
    Ok((header, blobs))
}
