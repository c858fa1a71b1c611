//! Output manifest: every file under the output directory with its SHA-256
//! digest, plus the config echo and run metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST: &str = "manifest.json";
pub const RNG: &str = "ChaCha20 (rand_chacha), one stream per founding household";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
    /// Data rows, for CSV files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub versions: BTreeMap<String, String>,
    pub rng: String,
    pub config: serde_json::Value,
    /// Stage name to its own metadata (row counts, warnings).
    pub stages: BTreeMap<String, serde_json::Value>,
    pub files: BTreeMap<String, FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Digest every file under `root` except the manifest itself.
pub fn scan(root: &Path) -> Result<BTreeMap<String, FileEntry>> {
    let mut paths = Vec::new();
    walk(root, &mut paths)?;
    let mut files = BTreeMap::new();
    for p in paths {
        let key = relative(root, &p);
        if key == MANIFEST {
            continue;
        }
        let bytes = std::fs::read(&p)?;
        let rows = key
            .ends_with(".csv")
            .then(|| bytes.iter().filter(|&&b| b == b'\n').count().saturating_sub(1));
        files.insert(key, FileEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, rows });
    }
    Ok(files)
}

pub fn read(root: &Path) -> Result<Option<Manifest>> {
    let path = root.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&std::fs::read(path)?)?))
}

/// Rescan the directory and record `stage` metadata.
pub fn update(root: &Path, config: serde_json::Value, stage: &str, meta: serde_json::Value) -> Result<Manifest> {
    let mut stages = read(root)?.map(|m| m.stages).unwrap_or_default();
    stages.insert(stage.to_string(), meta);
    let manifest = Manifest {
        versions: BTreeMap::from([
            ("pfs-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("pfs-core".to_string(), pfs_core::VERSION.to_string()),
        ]),
        rng: RNG.to_string(),
        config,
        stages,
        files: scan(root)?,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(root.join(MANIFEST), bytes)?;
    Ok(manifest)
}

/// Files whose digest no longer matches, or that are missing from the
/// manifest or from disk.
pub fn verify(root: &Path, manifest: &Manifest) -> Result<Vec<String>> {
    let now = scan(root)?;
    let mut problems = Vec::new();
    for (k, e) in &manifest.files {
        match now.get(k) {
            None => problems.push(format!("{k}: listed but missing")),
            Some(f) if f.sha256 != e.sha256 => problems.push(format!("{k}: digest mismatch")),
            _ => {}
        }
    }
    for k in now.keys().filter(|k| !manifest.files.contains_key(*k)) {
        problems.push(format!("{k}: not in manifest"));
    }
    Ok(problems)
}
