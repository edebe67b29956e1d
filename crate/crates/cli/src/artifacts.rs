//! Atomic artifact writing and the content-hashed output manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    pub command: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ArtifactEntry>,
    /// Figure inputs for the plotting adapter: figure kind -> artifact key.
    #[serde(default)]
    pub figures: BTreeMap<String, String>,
    #[serde(default)]
    pub complete: bool,
}

impl Manifest {
    pub fn load(out_dir: &Path) -> Result<Manifest> {
        let path = out_dir.join(MANIFEST);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        write_atomic(&out_dir.join(MANIFEST), json.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write via a sibling temporary file and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Collects the artifacts of one command and merges them into the manifest.
pub struct ArtifactWriter {
    out_dir: PathBuf,
    command: String,
    written: BTreeMap<String, ArtifactEntry>,
    figures: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(out_dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(ArtifactWriter {
            out_dir: out_dir.to_path_buf(),
            command: command.to_string(),
            written: BTreeMap::new(),
            figures: BTreeMap::new(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn write(&mut self, key: &str, rel_path: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(rel_path);
        write_atomic(&path, bytes)?;
        self.written.insert(
            key.to_string(),
            ArtifactEntry {
                path: rel_path.to_string(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
                command: self.command.clone(),
            },
        );
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, key: &str, rel_path: &str, value: &T) -> Result<PathBuf> {
        let mut json = serde_json::to_string_pretty(value).expect("artifact serializes");
        json.push('\n');
        self.write(key, rel_path, json.as_bytes())
    }

    /// Mark an artifact as the input of a figure kind.
    pub fn figure(&mut self, kind: &str, key: &str) {
        self.figures.insert(kind.to_string(), key.to_string());
    }

    /// Replace this command's previous manifest entries with the new ones.
    pub fn finish(self) -> Result<Manifest> {
        let mut m = Manifest::load(&self.out_dir)?;
        m.artifacts.retain(|_, e| e.command != self.command);
        m.artifacts.extend(self.written);
        m.figures.extend(self.figures);
        m.complete = false;
        m.save(&self.out_dir)?;
        Ok(m)
    }
}

/// Check every manifest entry against the file on disk; returns mismatching keys.
pub fn verify(out_dir: &Path, manifest: &Manifest) -> Vec<String> {
    manifest
        .artifacts
        .iter()
        .filter(|(_, e)| match fs::read(out_dir.join(&e.path)) {
            Ok(bytes) => sha256_hex(&bytes) != e.sha256,
            Err(_) => true,
        })
        .map(|(k, _)| k.clone())
        .collect()
}
