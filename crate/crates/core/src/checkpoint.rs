//! Versioned binary checkpoints bundling encoder weights with the vocab.
//!
//! The format is fully deterministic — identical parameters and vocab
//! always serialize to identical bytes — so artifact equality can be
//! asserted at the file level. All integers are little-endian; tensor
//! values are raw `f64` little-endian in named-tensor order.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::encoder::{EncoderConfig, EncoderParams, TensorSet};
use crate::error::CoreError;
use crate::vocab::Vocab;

/// Leading bytes of every checkpoint file.
pub const MAGIC: &[u8; 8] = b"TREBLCKP";
/// Current format version.
pub const VERSION: u32 = 1;

/// A deserialized checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub vocab: Vocab,
}

fn err(msg: impl Into<String>) -> CoreError {
    CoreError::Checkpoint(msg.into())
}

/// Serialize `params` and `vocab` to the v1 byte format.
pub fn to_bytes(params: &EncoderParams, vocab: &Vocab) -> Result<Vec<u8>, CoreError> {
    let cfg = &params.config;
    if vocab.len() != cfg.vocab_size {
        return Err(CoreError::InvalidConfig(format!(
            "vocab has {} entries but config expects {}",
            vocab.len(),
            cfg.vocab_size
        )));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        cfg.dim as u64,
        cfg.layers as u64,
        cfg.heads as u64,
        cfg.max_seq_len as u64,
        cfg.vocab_size as u64,
        cfg.seed,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let tokens = vocab.tokens();
    out.extend_from_slice(&(tokens.len() as u64).to_le_bytes());
    for token in tokens {
        out.extend_from_slice(&(token.len() as u64).to_le_bytes());
        out.extend_from_slice(token.as_bytes());
    }
    let named = params.tensors.named_tensors();
    out.extend_from_slice(&(named.len() as u64).to_le_bytes());
    for (name, _, data) in named {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(data.len() as u64).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CoreError> {
        if self.pos + n > self.buf.len() {
            return Err(err(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, CoreError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| err(format!("length {v} does not fit in usize")))
    }

    fn string(&mut self) -> Result<String, CoreError> {
        let len = self.usize()?;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| err("non-UTF-8 string in checkpoint"))
    }
}

/// Deserialize and validate a v1 checkpoint.
pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CoreError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(err("not a checkpoint file (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(err(format!(
            "unsupported checkpoint version {version}, this build reads {VERSION}"
        )));
    }
    let dim = r.usize()?;
    let layers = r.usize()?;
    let heads = r.usize()?;
    let max_seq_len = r.usize()?;
    let vocab_size = r.usize()?;
    let seed = r.u64()?;
    let config = EncoderConfig {
        dim,
        layers,
        heads,
        max_seq_len,
        vocab_size,
        seed,
    };
    config.validate()?;

    // The file stores only non-reserved tokens; `Vocab::len` adds the
    // reserved CLS/UNK/PAD slots back.
    let token_count = r.usize()?;
    if token_count + crate::vocab::RESERVED as usize != vocab_size {
        return Err(err(format!(
            "checkpoint stores {token_count} vocab entries but config says {vocab_size}"
        )));
    }
    let mut tokens = Vec::with_capacity(token_count);
    for _ in 0..token_count {
        tokens.push(r.string()?);
    }
    let vocab = Vocab::from_tokens(tokens);
    if vocab.len() != vocab_size {
        return Err(err("duplicate tokens in checkpoint vocab"));
    }

    let mut tensors = TensorSet::zeros(&config);
    let tensor_count = r.usize()?;
    {
        let mut views = tensors.named_tensors_mut();
        if tensor_count != views.len() {
            return Err(err(format!(
                "checkpoint stores {tensor_count} tensors but this architecture has {}",
                views.len()
            )));
        }
        let mut filled = vec![false; views.len()];
        for _ in 0..tensor_count {
            let name = r.string()?;
            let len = r.usize()?;
            let slot = views
                .iter_mut()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| err(format!("unknown tensor `{name}` in checkpoint")))?;
            if filled[slot] {
                return Err(err(format!("tensor `{name}` appears twice")));
            }
            filled[slot] = true;
            let dst = &mut views[slot].1;
            if dst.len() != len {
                return Err(err(format!(
                    "tensor `{name}` has {len} values, expected {}",
                    dst.len()
                )));
            }
            let raw = r.take(len * 8)?;
            for (i, chunk) in raw.chunks_exact(8).enumerate() {
                dst[i] = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(err(format!(
            "{} trailing bytes after checkpoint payload",
            bytes.len() - r.pos
        )));
    }
    if let Some(name) = tensors.find_non_finite() {
        return Err(err(format!("tensor `{name}` contains non-finite values")));
    }
    Ok(Checkpoint {
        params: EncoderParams { config, tensors },
        vocab,
    })
}

/// Write a checkpoint file.
pub fn save(path: &Path, params: &EncoderParams, vocab: &Vocab) -> Result<(), CoreError> {
    let bytes = to_bytes(params, vocab)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Read a checkpoint file.
pub fn load(path: &Path) -> Result<Checkpoint, CoreError> {
    let bytes = fs::read(path)?;
    from_bytes(&bytes)
}

/// SHA-256 of the serialized checkpoint, as lowercase hex. Two models share
/// a digest exactly when their weights, config, and vocab all match.
pub fn digest(params: &EncoderParams, vocab: &Vocab) -> Result<String, CoreError> {
    let bytes = to_bytes(params, vocab)?;
    let hash = Sha256::digest(&bytes);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocab;

    fn setup() -> (EncoderParams, Vocab) {
        let vocab = Vocab::build(["synapse dendrite axon myelin"]);
        let config = EncoderConfig {
            dim: 8,
            layers: 2,
            heads: 2,
            max_seq_len: 16,
            vocab_size: vocab.len(),
            seed: 42,
        };
        (EncoderParams::init(&config).unwrap(), vocab)
    }

    #[test]
    fn round_trip_preserves_everything() {
        let (params, vocab) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &params, &vocab).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.params, params);
        assert_eq!(loaded.vocab, vocab);
    }

    #[test]
    fn serialization_is_byte_deterministic() {
        let (params, vocab) = setup();
        let a = to_bytes(&params, &vocab).unwrap();
        let b = to_bytes(&params, &vocab).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let (params, vocab) = setup();
        let mut bytes = to_bytes(&params, &vocab).unwrap();
        bytes[0] = b'X';
        let e = from_bytes(&bytes).unwrap_err();
        assert!(e.to_string().contains("magic"), "{e}");
    }

    #[test]
    fn future_version_is_rejected() {
        let (params, vocab) = setup();
        let mut bytes = to_bytes(&params, &vocab).unwrap();
        bytes[8..12].copy_from_slice(&(VERSION + 1).to_le_bytes());
        let e = from_bytes(&bytes).unwrap_err();
        assert!(e.to_string().contains("version"), "{e}");
    }

    #[test]
    fn truncation_is_rejected() {
        let (params, vocab) = setup();
        let bytes = to_bytes(&params, &vocab).unwrap();
        let e = from_bytes(&bytes[..bytes.len() - 9]).unwrap_err();
        assert!(e.to_string().contains("truncated"), "{e}");
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let (params, vocab) = setup();
        let mut bytes = to_bytes(&params, &vocab).unwrap();
        bytes.push(0);
        let e = from_bytes(&bytes).unwrap_err();
        assert!(e.to_string().contains("trailing"), "{e}");
    }

    #[test]
    fn vocab_config_mismatch_is_rejected_on_save() {
        let (params, _) = setup();
        let tiny = Vocab::build(["synapse"]);
        assert!(to_bytes(&params, &tiny).is_err());
    }

    #[test]
    fn digest_tracks_weight_changes() {
        let (params, vocab) = setup();
        let base = digest(&params, &vocab).unwrap();
        assert_eq!(base.len(), 64);
        assert_eq!(digest(&params, &vocab).unwrap(), base);
        let mut nudged = params.clone();
        nudged.tensors.named_tensors_mut()[0].1[0] += 1e-9;
        assert_ne!(digest(&nudged, &vocab).unwrap(), base);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let e = load(&dir.path().join("nope.ckpt")).unwrap_err();
        assert!(matches!(e, CoreError::Io(_)));
    }
}
