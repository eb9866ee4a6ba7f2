use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::CliError;

/// Content hash in git's object format: SHA-256 over `blob <len>\0<bytes>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("sha256:{}", hex::encode(h.finalize()))
}

/// Record of one stage run. Contains no timestamps, so identical inputs give
/// an identical manifest.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Manifest {
            command: command.into(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            details: serde_json::Value::Null,
        }
    }

    fn hash_into(map: &mut BTreeMap<String, String>, root: &Path, path: &Path) -> Result<(), CliError> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .map_err(|e| CliError::pipeline(format!("{}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .collect();
            entries.sort();
            for p in entries {
                Self::hash_into(map, root, &p)?;
            }
            return Ok(());
        }
        let bytes = std::fs::read(path).map_err(|e| CliError::pipeline(format!("{}: {e}", path.display())))?;
        map.insert(display_path(root, path), blob_hash(&bytes));
        Ok(())
    }

    pub fn input(&mut self, root: &Path, path: &Path) -> Result<(), CliError> {
        Self::hash_into(&mut self.inputs, root, path)
    }

    pub fn output(&mut self, root: &Path, path: &Path) -> Result<(), CliError> {
        Self::hash_into(&mut self.outputs, root, path)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("in-memory serialization");
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

/// `path` relative to `root` when it lies inside it.
pub fn display_path(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::pipeline(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::pipeline(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn git_style_hash() {
        // `git hash-object --object-format=sha256` of an empty file.
        assert_eq!(blob_hash(b""), "sha256:473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }
}
