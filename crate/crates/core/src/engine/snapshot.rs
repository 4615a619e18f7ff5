//! Snapshot container.
//!
//! Layout: 8-byte magic, u32 LE format version, u64 LE payload length,
//! 32-byte SHA-256 of the payload, then the bincode payload.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Engine, EngineConfig};
use crate::extract::SemanticMetadata;
use crate::graph::{CategoryIndex, SemanticGraph};

pub const MAGIC: &[u8; 8] = b"SEMCSNAP";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 32;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("snapshot truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("snapshot content hash mismatch")]
    HashMismatch,
    #[error("snapshot payload: {0}")]
    Codec(String),
}

#[derive(Serialize)]
struct PayloadRef<'a> {
    config: &'a EngineConfig,
    metadata: &'a [SemanticMetadata],
    titles: Option<&'a [String]>,
    index: &'a CategoryIndex,
    graph: &'a SemanticGraph,
}

#[derive(Deserialize)]
struct Payload {
    config: EngineConfig,
    metadata: Vec<SemanticMetadata>,
    titles: Option<Vec<String>>,
    index: CategoryIndex,
    graph: SemanticGraph,
}

fn payload(engine: &Engine) -> Vec<u8> {
    let p = PayloadRef {
        config: &engine.config,
        metadata: &engine.metadata,
        titles: engine.titles.as_deref(),
        index: &engine.index,
        graph: &engine.graph,
    };
    bincode::serialize(&p).expect("in-memory serialization cannot fail")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(super) fn content_hash(engine: &Engine) -> String {
    hex(&Sha256::digest(payload(engine)))
}

/// Full file image of `engine`.
pub fn encode(engine: &Engine) -> Vec<u8> {
    let body = payload(engine);
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&Sha256::digest(&body));
    out.extend_from_slice(&body);
    out
}

pub fn decode(bytes: &[u8]) -> Result<Engine, SnapshotError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(SnapshotError::Truncated { expected: HEADER_LEN as u64, found: bytes.len() as u64 });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(SnapshotError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    if (body.len() as u64) < len {
        return Err(SnapshotError::Truncated { expected: HEADER_LEN as u64 + len, found: bytes.len() as u64 });
    }
    let body = &body[..len as usize];
    let digest = Sha256::digest(body);
    if digest.as_slice() != &bytes[20..HEADER_LEN] {
        return Err(SnapshotError::HashMismatch);
    }
    let p: Payload = bincode::deserialize(body).map_err(|e| SnapshotError::Codec(e.to_string()))?;
    Ok(Engine::assemble(p.config, p.index, p.graph, p.metadata, p.titles, hex(&digest)))
}

impl Engine {
    /// Writes the snapshot atomically (temp file in the target directory,
    /// then rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SnapshotError> {
        let path = path.as_ref();
        let io = |source| SnapshotError::Io { path: path.to_path_buf(), source };
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(&encode(self)).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Engine, SnapshotError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })?;
        decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{generate_synthetic_catalog, SynthConfig};
    use crate::extract::{RuleExtractor, Taxonomy};

    fn small_engine() -> Engine {
        let cat = generate_synthetic_catalog(&SynthConfig { ads: 40, topics: 5, ..Default::default() }, 3).unwrap();
        Engine::from_catalog(
            &cat,
            &RuleExtractor::new(Taxonomy::builtin()),
            EngineConfig { k_default: 10, ..Default::default() },
            crate::graph::GraphParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_results_and_hash() {
        let e = small_engine();
        let bytes = encode(&e);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.snapshot_hash(), e.snapshot_hash());
        assert_eq!(encode(&back), bytes);
        for id in e.graph().nodes() {
            assert_eq!(back.retrieve(id, 10).unwrap(), e.retrieve(id, 10).unwrap());
            assert_eq!(back.baseline_retrieve(id, 10).unwrap(), e.baseline_retrieve(id, 10).unwrap());
        }
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = encode(&small_engine());
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x40;
        assert!(matches!(decode(&flipped), Err(SnapshotError::HashMismatch)));

        let mut old = bytes.clone();
        old[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&old), Err(SnapshotError::VersionMismatch { found: 0, expected: FORMAT_VERSION })));

        assert!(matches!(decode(&bytes[..bytes.len() - 10]), Err(SnapshotError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..30]), Err(SnapshotError::Truncated { .. })));
        assert!(matches!(decode(b"{\"json\": 1}"), Err(SnapshotError::BadMagic)));
    }

    #[test]
    fn save_and_load_file() {
        let e = small_engine();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        e.save(&path).unwrap();
        let back = Engine::load(&path).unwrap();
        assert_eq!(back.snapshot_hash(), e.snapshot_hash());
        assert!(matches!(Engine::load(dir.path().join("missing")), Err(SnapshotError::Io { .. })));
    }
}
