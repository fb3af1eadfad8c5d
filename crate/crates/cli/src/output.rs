//! Artifact files and the hash manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is plain data")
    }
}

/// Writes files under an optional directory and records their hashes.
/// Without a directory nothing touches the disk but hashes are still kept.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: Option<PathBuf>,
    entries: Vec<ManifestEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: Option<&Path>) -> std::io::Result<Self> {
        if let Some(d) = dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self { dir: dir.map(Path::to_path_buf), entries: Vec::new() })
    }

    /// `name` uses `/` separators and is relative to the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    pub fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> std::io::Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    /// Writes the manifest (entries sorted by path) and returns it.
    pub fn finish(mut self, scenario: &str) -> std::io::Result<Manifest> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest { scenario: scenario.to_string(), files: self.entries };
        if let Some(d) = &self.dir {
            std::fs::write(d.join(MANIFEST_NAME), manifest.to_toml())?;
        }
        Ok(manifest)
    }
}
