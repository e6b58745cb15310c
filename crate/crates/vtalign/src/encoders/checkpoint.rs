//! Checkpoint container: named f64 tensor blobs behind a JSON manifest.
//!
//! ```text
//! magic    "LVCK" (4 bytes)
//! version  u32 = 1
//! manifest length u32, then that many JSON bytes
//! blobs    count u32, then per blob:
//!          name length u32, name bytes,
//!          rank u32, dims u32 each, f64 data little-endian
//! ```
//!
//! Writes go through a temp file plus rename so a crash never leaves a torn
//! checkpoint behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffmath::Tensor;

pub const MAGIC: &[u8; 4] = b"LVCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum CheckpointError {
    Io(std::io::Error),
    BadMagic,
    UnsupportedVersion { found: u32 },
    Truncated,
    Manifest(String),
    /// Stored dims or parameter shapes disagree with what the caller expects.
    DimMismatch(String),
    /// The manifest's config hash does not match the active configuration.
    ConfigHashMismatch { expected: u64, found: u64 },
}

impl std::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint i/o: {e}"),
            CheckpointError::BadMagic => write!(f, "checkpoint: bad magic bytes (expected LVCK)"),
            CheckpointError::UnsupportedVersion { found } => {
                write!(f, "checkpoint: unsupported version {found} (expected 1)")
            }
            CheckpointError::Truncated => write!(f, "checkpoint: truncated payload"),
            CheckpointError::Manifest(msg) => write!(f, "checkpoint manifest: {msg}"),
            CheckpointError::DimMismatch(msg) => write!(f, "checkpoint dims: {msg}"),
            CheckpointError::ConfigHashMismatch { expected, found } => write!(
                f,
                "checkpoint refused: config hash {found:#018x} does not match active config {expected:#018x}"
            ),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

/// Everything a resume needs besides the tensor blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Epochs completed so far.
    pub epoch: u64,
    pub raw_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// FNV-1a hash of the canonical training config text.
    pub config_hash: u64,
    /// PRNG stream states captured at the checkpoint boundary.
    pub prng_states: BTreeMap<String, u64>,
}

/// Serialize manifest plus named blobs to `path` atomically.
pub fn write_checkpoint(
    path: &Path,
    manifest: &Manifest,
    blobs: &[(String, Tensor)],
) -> Result<(), CheckpointError> {
    let manifest_json = serde_json::to_string(manifest)
        .map_err(|e| CheckpointError::Manifest(format!("encode: {e}")))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(manifest_json.as_bytes());
    buf.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for (name, tensor) in blobs {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
        for &d in tensor.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a checkpoint back; blobs come out keyed by name.
pub fn read_checkpoint(path: &Path) -> Result<(Manifest, BTreeMap<String, Tensor>), CheckpointError> {
    let bytes = fs::read(path)?;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        if *at + n > bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    if take(&mut at, 4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }
    let mlen = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let manifest: Manifest = serde_json::from_slice(take(&mut at, mlen)?)
        .map_err(|e| CheckpointError::Manifest(format!("decode: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: manifest.format_version,
        });
    }
    let count = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let mut blobs = BTreeMap::new();
    for _ in 0..count {
        let nlen = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut at, nlen)?.to_vec())
            .map_err(|_| CheckpointError::Manifest("non-utf8 blob name".into()))?;
        let rank = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        if rank > 8 {
            return Err(CheckpointError::DimMismatch(format!(
                "blob {name}: rank {rank} is implausible"
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        if numel.saturating_mul(8) > bytes.len() {
            return Err(CheckpointError::Truncated);
        }
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()));
        }
        blobs.insert(name, Tensor::new(shape, data));
    }
    if at != bytes.len() {
        return Err(CheckpointError::Manifest("trailing bytes".into()));
    }
    Ok((manifest, blobs))
}

/// Refuse a manifest whose config hash differs from the active config.
pub fn verify_config_hash(manifest: &Manifest, expected: u64) -> Result<(), CheckpointError> {
    if manifest.config_hash != expected {
        return Err(CheckpointError::ConfigHashMismatch {
            expected,
            found: manifest.config_hash,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::init_params;
    use std::path::PathBuf;

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("vtalign-ckpt-{tag}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn manifest() -> Manifest {
        let mut prng = BTreeMap::new();
        prng.insert("shuffle".to_string(), 123u64);
        prng.insert("offsets".to_string(), u64::MAX - 5);
        Manifest {
            format_version: FORMAT_VERSION,
            step: 42,
            epoch: 3,
            raw_dim: 8,
            hidden_dim: 6,
            embed_dim: 4,
            config_hash: 0xDEAD_BEEF_u64,
            prng_states: prng,
        }
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let dir = tmpdir("rt");
        let p1 = dir.join("a.lvck");
        let p2 = dir.join("b.lvck");
        let params = init_params(5, 8, 6, 4);
        let blobs: Vec<(String, Tensor)> = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        write_checkpoint(&p1, &manifest(), &blobs).unwrap();
        let (m, loaded) = read_checkpoint(&p1).unwrap();
        assert_eq!(m, manifest());
        let blobs2: Vec<(String, Tensor)> = loaded.into_iter().collect();
        write_checkpoint(&p2, &m, &blobs2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let dir = tmpdir("hdr");
        let p = dir.join("c.lvck");
        write_checkpoint(&p, &manifest(), &[]).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'Z';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(CheckpointError::BadMagic)));
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'L';
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            read_checkpoint(&p),
            Err(CheckpointError::UnsupportedVersion { found: 9 })
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let dir = tmpdir("tr");
        let p = dir.join("d.lvck");
        let params = init_params(5, 8, 6, 4);
        let blobs: Vec<(String, Tensor)> = params
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        write_checkpoint(&p, &manifest(), &blobs).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(read_checkpoint(&p), Err(CheckpointError::Truncated)));
    }

    #[test]
    fn config_hash_mismatch_is_refused() {
        let m = manifest();
        assert!(verify_config_hash(&m, m.config_hash).is_ok());
        assert!(matches!(
            verify_config_hash(&m, 1),
            Err(CheckpointError::ConfigHashMismatch { .. })
        ));
    }
}
