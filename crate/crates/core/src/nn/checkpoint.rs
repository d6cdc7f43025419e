//! Binary parameter file:
//!
//! ```text
//! magic "PEGQNET\0" | u32 version | u32 len + architecture descriptor |
//! u64 action-table hash | u64 value count | f32 values (little-endian)
//! ```

use thiserror::Error;

use super::{Architecture, DuelingNet};

pub const MAGIC: &[u8; 8] = b"PEGQNET\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("architecture mismatch: file has {found}, expected {expected}")]
    Architecture { found: String, expected: String },
    #[error("action table mismatch: file hash {found:#018x}, expected {expected:#018x}")]
    ActionTable { found: u64, expected: u64 },
    #[error("truncated or malformed checkpoint: {0}")]
    Truncated(&'static str),
}

pub fn save_params(net: &DuelingNet<f32>, action_hash: u64) -> Vec<u8> {
    let desc = net.architecture().descriptor();
    let mut out = Vec::with_capacity(32 + desc.len() + 4 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    out.extend_from_slice(&action_hash.to_le_bytes());
    out.extend_from_slice(&(net.num_params() as u64).to_le_bytes());
    for v in net.params() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Loads parameters, requiring the expected architecture and action table.
pub fn load_params(
    bytes: &[u8],
    expected: &Architecture,
    action_hash: u64,
) -> Result<DuelingNet<f32>, CheckpointError> {
    let mut r = Reader { buf: bytes };
    if r.take(MAGIC.len(), "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let len = r.u32("descriptor length")? as usize;
    let desc = std::str::from_utf8(r.take(len, "descriptor")?).map_err(|_| CheckpointError::Truncated("descriptor"))?;
    if desc != expected.descriptor() {
        return Err(CheckpointError::Architecture { found: desc.to_string(), expected: expected.descriptor() });
    }
    let hash = r.u64("action hash")?;
    if hash != action_hash {
        return Err(CheckpointError::ActionTable { found: hash, expected: action_hash });
    }
    let mut net = DuelingNet::<f32>::zeros(expected);
    let count = r.u64("value count")?;
    if count != net.num_params() as u64 {
        return Err(CheckpointError::Truncated("value count"));
    }
    let body = r.take(4 * net.num_params(), "values")?;
    if !r.buf.is_empty() {
        return Err(CheckpointError::Truncated("trailing bytes"));
    }
    for (p, chunk) in net.params_mut().zip(body.chunks_exact(4)) {
        *p = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
    }
    Ok(net)
}
