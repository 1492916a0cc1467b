//! Binary layout shared by checkpoints and embedding files:
//!
//! ```text
//! magic (8 bytes) | version u32 LE | header length u64 LE | header JSON | f64 LE payload
//! ```

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

pub(crate) const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("payload holds {found} values, header describes {expected}")]
    PayloadLength { expected: usize, found: usize },
}

pub(crate) fn write<W: Write, H: Serialize>(
    mut w: W,
    magic: &[u8; 8],
    header: &H,
    payload: impl Iterator<Item = f64>,
) -> Result<(), ContainerError> {
    let header = serde_json::to_vec(header)?;
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for v in payload {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read<R: Read, H: DeserializeOwned>(
    mut r: R,
    magic: &[u8; 8],
    expected_values: impl FnOnce(&H) -> usize,
) -> Result<(H, Vec<f64>), ContainerError> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(ContainerError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(ContainerError::Version(version));
    }
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    let mut header = vec![0u8; u64::from_le_bytes(n) as usize];
    r.read_exact(&mut header)?;
    let header: H = serde_json::from_slice(&header)?;

    let expected = expected_values(&header);
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() != expected * 8 {
        return Err(ContainerError::PayloadLength {
            expected,
            found: rest.len() / 8,
        });
    }
    let payload = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, payload))
}
