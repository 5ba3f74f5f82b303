//! Binary weight container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "DVPCKPT\0"
//! version    u32       1
//! meta_len   u32       length of the UTF-8 JSON metadata that follows
//! meta       bytes     network spec (or extractor description) as JSON
//! seed       u64
//! count      u32       number of arrays
//! per array:
//!   name_len u16, name bytes (UTF-8)
//!   ndim     u8, dims u32 * ndim
//!   data     f32 * prod(dims)
//! checksum   u64       FNV-1a over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::net::ConsistencyNet;
use super::spec::NetSpec;
use crate::error::{DvpError, Result};
use crate::nn::{ParamSet, Scalar};

pub const MAGIC: &[u8; 8] = b"DVPCKPT\0";
pub const VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Serializes named arrays with free-form JSON metadata.
pub fn encode_container<T: Scalar>(meta: &str, seed: u64, params: &ParamSet<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + params.scalar_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, shape, values) in params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| DvpError::CorruptCheckpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Parses a container produced by [`encode_container`].
pub fn decode_container<T: Scalar>(bytes: &[u8]) -> Result<(String, u64, ParamSet<T>)> {
    let corrupt = |m: &str| DvpError::CorruptCheckpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 8 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic header"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let mut r = Reader { bytes: body, pos: 8 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if stored != fnv1a(body) {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }
    let meta_len = r.u32()? as usize;
    let meta = std::str::from_utf8(r.take(meta_len)?)
        .map_err(|_| corrupt("metadata is not UTF-8"))?
        .to_string();
    let seed = r.u64()?;
    let count = r.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| corrupt("array name is not UTF-8"))?
            .to_string();
        let ndim = r.u8()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| corrupt("array too large"))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| T::of(f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))))
            .collect();
        params.push(name, shape, values);
    }
    if r.pos != body.len() {
        return Err(corrupt("trailing bytes after arrays"));
    }
    Ok((meta, seed, params))
}

pub fn save_checkpoint<T: Scalar>(net: &ConsistencyNet<T>, path: &Path) -> Result<()> {
    let meta = serde_json::to_string(net.spec()).expect("spec serializes");
    let bytes = encode_container(&meta, net.seed(), net.params());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| DvpError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| DvpError::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ConsistencyNet<T>> {
    let bytes = fs::read(path).map_err(|e| DvpError::io(path, e))?;
    let (meta, seed, params) = decode_container(&bytes)?;
    let spec: NetSpec = serde_json::from_str(&meta)
        .map_err(|e| DvpError::CorruptCheckpoint(format!("bad spec metadata: {e}")))?;
    ConsistencyNet::from_parts(spec, seed, params)
}

/// Loads a checkpoint to resume or initialize a run that expects `expected`.
pub fn load_checkpoint_for<T: Scalar>(path: &Path, expected: &NetSpec) -> Result<ConsistencyNet<T>> {
    let net = load_checkpoint(path)?;
    if net.spec() != expected {
        return Err(DvpError::CheckpointMismatch(format!(
            "checkpoint holds {:?} but the run expects {:?}",
            net.spec(),
            expected
        )));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Backbone;
    use crate::video::Frame;

    fn small() -> NetSpec {
        NetSpec::image(3, 3).with_width(2, 4)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = ConsistencyNet::<f32>::build(small(), 9).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let back: ConsistencyNet<f32> = load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        let probe = Frame::from_fn(16, 16, 3, |y, x, c| ((y + 2 * x + c) % 5) as f64 / 5.0);
        assert_eq!(back.forward(&probe).unwrap(), net.forward(&probe).unwrap());
    }

    #[test]
    fn mismatched_spec_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = ConsistencyNet::<f32>::build(small(), 9).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let other = NetSpec {
            backbone: Backbone::Resunet,
            ..small()
        };
        let err = load_checkpoint_for::<f32>(&path, &other).unwrap_err();
        assert!(matches!(err, DvpError::CheckpointMismatch(_)));

        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_checkpoint::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("corrupt checkpoint"), "{err}");
    }
}
