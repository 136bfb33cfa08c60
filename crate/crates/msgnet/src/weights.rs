//! The MSGW binary container: an ordered map of named f32 tensors plus a
//! trailing UTF-8 `key=value` metadata block.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "MSGW" | u32 version | u32 tensor count
//! per tensor:  u16 name length | name bytes | u8 ndim | u32 dims... | f32 payload
//! remainder:   UTF-8 "key=value\n" lines (architecture and provenance)
//! ```
//!
//! The same container carries network weights, style embeddings and training
//! checkpoints; serialization round-trips bit-exactly.

use crate::error::{Error, Result};
use crate::tensor::{numel, Tensor};

pub const MSGW_MAGIC: &[u8; 4] = b"MSGW";
pub const MSGW_VERSION: u32 = 1;

/// Ordered named-tensor container with metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkWeights {
    tensors: Vec<(String, Tensor)>,
    meta: Vec<(String, String)>,
}

impl NetworkWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.iter().any(|(n, _)| *n == name) {
            return Err(Error::format(format!("duplicate tensor name {name:?}")));
        }
        self.tensors.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::format(format!("missing tensor {name:?}")))
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) -> Result<()> {
        let (key, value) = (key.into(), value.into());
        if key.contains('=') || key.contains('\n') || value.contains('\n') {
            return Err(Error::format(format!(
                "metadata key/value may not contain '=' or newlines: {key:?}"
            )));
        }
        if let Some(slot) = self.meta.iter_mut().find(|(k, _)| *k == key) {
            slot.1 = value;
        } else {
            self.meta.push((key, value));
        }
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::format(format!("missing metadata key {key:?}")))
    }

    pub fn meta_entries(&self) -> &[(String, String)] {
        &self.meta
    }

    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MSGW_MAGIC);
        out.extend_from_slice(&MSGW_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.shape().len() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (k, v) in &self.meta {
            out.extend_from_slice(k.as_bytes());
            out.push(b'=');
            out.extend_from_slice(v.as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor.take(4, "magic")?;
        if magic != MSGW_MAGIC {
            return Err(Error::format(format!(
                "bad magic {:?}, expected \"MSGW\"",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = cursor.u32("version")?;
        if version != MSGW_VERSION {
            return Err(Error::format(format!(
                "unsupported container version {version}, expected {MSGW_VERSION}"
            )));
        }
        let count = cursor.u32("tensor count")? as usize;
        let mut weights = NetworkWeights::new();
        for i in 0..count {
            let name_len = cursor.u16(&format!("tensor {i} name length"))? as usize;
            let name = std::str::from_utf8(cursor.take(name_len, "tensor name")?)
                .map_err(|_| Error::format(format!("tensor {i} name is not UTF-8")))?
                .to_string();
            let ndim = cursor.take(1, "ndim")?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cursor.u32("dimension")? as usize);
            }
            let n = numel(&shape);
            let payload = cursor.take(4 * n, &format!("payload of {name:?}"))?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(format!(
                    "tensor {name:?} contains non-finite values"
                )));
            }
            let tensor = Tensor::new(shape, data)
                .map_err(|e| Error::format(format!("tensor {name:?}: {e}")))?;
            weights.insert(name, tensor)?;
        }
        let rest = &bytes[cursor.pos..];
        if !rest.is_empty() {
            let text = std::str::from_utf8(rest)
                .map_err(|_| Error::format("metadata block is not UTF-8"))?;
            for line in text.lines() {
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::format(format!("metadata line without '=': {line:?}"))
                })?;
                weights.set_meta(k, v)?;
            }
        }
        Ok(weights)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(format!(
                "truncated container: expected {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn sample() -> NetworkWeights {
        let mut rng = Prng::new(123);
        let mut w = NetworkWeights::new();
        w.insert("a.weight", Tensor::rand_uniform(vec![2, 3], &mut rng, -1.0, 1.0))
            .unwrap();
        w.insert("a.bias", Tensor::rand_uniform(vec![3], &mut rng, -1.0, 1.0))
            .unwrap();
        w.set_meta("arch.base_width", "8").unwrap();
        w.set_meta("format", "test").unwrap();
        w
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let w = sample();
        let bytes = w.save();
        let loaded = NetworkWeights::load(&bytes).unwrap();
        assert_eq!(loaded, w);
        assert_eq!(loaded.save(), bytes);
    }

    #[test]
    fn empty_tensor_list_is_valid() {
        let mut w = NetworkWeights::new();
        w.set_meta("kind", "empty").unwrap();
        let loaded = NetworkWeights::load(&w.save()).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(loaded.meta("kind"), Some("empty"));
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut bytes = sample().save();
        bytes[0] = b'X';
        assert!(matches!(
            NetworkWeights::load(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn truncation_rejected() {
        let bytes = sample().save();
        for cut in [3, 7, 11, bytes.len() / 2] {
            assert!(
                matches!(NetworkWeights::load(&bytes[..cut]), Err(Error::Format(_))),
                "cut at {cut} should fail"
            );
        }
    }

    #[test]
    fn bad_version_rejected() {
        let mut bytes = sample().save();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(
            NetworkWeights::load(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut w = NetworkWeights::new();
        w.insert("x", Tensor::scalar(1.0)).unwrap();
        assert!(w.insert("x", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn non_finite_payload_rejected() {
        let mut w = NetworkWeights::new();
        w.insert("x", Tensor::scalar(1.0)).unwrap();
        let mut bytes = w.save();
        // Overwrite the payload with NaN (payload is the last 4 bytes here).
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            NetworkWeights::load(&bytes),
            Err(Error::Format(_))
        ));
    }
}
