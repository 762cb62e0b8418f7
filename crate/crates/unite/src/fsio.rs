//! Atomic writes, content hashes and stage manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::FormatError;

/// Write `bytes` to a temporary file beside `path`, then rename it over
/// `path`. Readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| FormatError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| FormatError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| FormatError::io(path, e))?;
    tmp.persist(path).map_err(|e| FormatError::io(path, e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of_file(path: &Path) -> Result<Self, FormatError> {
        let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
        Ok(Self::of_bytes(path.display().to_string(), &bytes))
    }

    pub fn of_bytes(path: String, bytes: &[u8]) -> Self {
        Self {
            path,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        }
    }
}

/// `<stage>.manifest.json`: what a stage read, what it wrote, and the full
/// configuration it ran with. Feeding `config` back through `--config`
/// re-runs the stage.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub stage: &'a str,
    pub tool_version: &'a str,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config: &'a C,
}

/// Collects a stage's outputs, writes them atomically, then writes the
/// manifest last.
#[derive(Debug)]
pub struct StageWriter {
    dir: PathBuf,
    stage: &'static str,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl StageWriter {
    pub fn new(dir: &Path, stage: &'static str) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stage,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Record an input file by content hash.
    pub fn input(&mut self, path: &Path) -> Result<(), FormatError> {
        self.inputs.push(FileDigest::of_file(path)?);
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, FormatError> {
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        self.outputs.push(FileDigest::of_bytes(name.to_string(), bytes));
        Ok(path)
    }

    /// Record a file some other writer already placed in the output dir.
    pub fn output_written(&mut self, name: &str) -> Result<(), FormatError> {
        let mut digest = FileDigest::of_file(&self.path(name))?;
        digest.path = name.to_string();
        self.outputs.push(digest);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, FormatError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| FormatError::invalid(&self.path(name), e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish<C: Serialize>(self, config: &C) -> Result<PathBuf, FormatError> {
        let name = format!("{}.manifest.json", self.stage);
        let manifest = Manifest {
            stage: self.stage,
            tool_version: env!("CARGO_PKG_VERSION"),
            inputs: self.inputs,
            outputs: self.outputs,
            config,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
