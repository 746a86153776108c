//! Output directory handling and the run manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one command invocation and everything it wrote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_path: Option<PathBuf>,
    /// Hash of the configuration file bytes, when a file was given.
    pub config_sha256: Option<String>,
    /// Hash of the resolved parameters as compact JSON.
    pub resolved_config_sha256: String,
    pub resolved_config: serde_json::Value,
    pub output_dir: PathBuf,
    /// Paths relative to `output_dir`, in write order, ending with the
    /// manifest itself.
    pub artifacts: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, config_path: Option<&Path>, config_text: &str, resolved: &serde_json::Value, output_dir: &Path) -> Self {
        let compact = serde_json::to_string(resolved).expect("json value serializes");
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: config_path.map(Path::to_path_buf),
            config_sha256: config_path.map(|_| sha256_hex(config_text.as_bytes())),
            resolved_config_sha256: sha256_hex(compact.as_bytes()),
            resolved_config: resolved.clone(),
            output_dir: output_dir.to_path_buf(),
            artifacts: Vec::new(),
        }
    }
}

pub struct OutputDir {
    path: PathBuf,
}

impl OutputDir {
    pub fn create(path: &Path) -> io::Result<Self> {
        fs::create_dir_all(path)?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes `bytes` to `relative` inside the directory and records it.
    pub fn write(&self, manifest: &mut Manifest, relative: impl AsRef<Path>, bytes: &[u8]) -> io::Result<()> {
        let relative = relative.as_ref();
        debug_assert!(relative.is_relative() && !relative.components().any(|c| c == std::path::Component::ParentDir));
        let target = self.path.join(relative);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&target, bytes)?;
        manifest.artifacts.push(relative.to_path_buf());
        Ok(())
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> io::Result<()> {
        let mut m = manifest.clone();
        m.artifacts.push(PathBuf::from("manifest.json"));
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
        fs::write(self.path.join("manifest.json"), json)
    }
}
