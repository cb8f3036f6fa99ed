use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    /// Absolute for inputs, relative to the run directory for outputs.
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance record of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<FileRecord>,
    pub config: RunConfig,
    pub outcome: String,
    pub exit_code: i32,
    /// Wall-clock seconds per phase.
    pub timings_s: BTreeMap<String, f64>,
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an input file and records its hash.
pub fn hash_input(role: &str, path: &Path) -> Result<(FileRecord, Vec<u8>)> {
    let bytes = read(path)?;
    let abs = fs::canonicalize(path).map_err(|e| Error::io(path, e))?;
    Ok((
        FileRecord {
            role: role.to_string(),
            path: abs,
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        },
        bytes,
    ))
}

fn verify(rec: &FileRecord, path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    let found = sha256_hex(&bytes);
    if found != rec.sha256 {
        return Err(Error::HashMismatch {
            path: path.to_path_buf(),
            recorded: rec.sha256.clone(),
            found,
        });
    }
    Ok(bytes)
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl RunManifest {
    pub fn new(command: &str, config: RunConfig) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs: Vec::new(),
            config,
            outcome: String::new(),
            exit_code: 0,
            timings_s: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn input(&self, role: &str) -> Option<&FileRecord> {
        self.inputs.iter().find(|r| r.role == role)
    }

    pub fn output(&self, name: &str) -> Option<&FileRecord> {
        self.outputs.iter().find(|r| r.path == Path::new(name))
    }

    /// Re-hashes every recorded input.
    pub fn verify_inputs(&self) -> Result<()> {
        for rec in &self.inputs {
            verify(rec, &rec.path)?;
        }
        Ok(())
    }

    /// Reads a recorded output of the run in `dir`, checking its hash.
    pub fn read_output(&self, dir: &Path, name: &str) -> Result<Vec<u8>> {
        let rec = self
            .output(name)
            .ok_or_else(|| Error::schema(MANIFEST, format!("run has no {name}")))?;
        verify(rec, &dir.join(&rec.path))
    }

    pub fn verify_outputs(&self, dir: &Path) -> Result<()> {
        for rec in &self.outputs {
            verify(rec, &dir.join(&rec.path))?;
        }
        Ok(())
    }
}

/// Output directory whose files are written atomically and recorded for the
/// manifest.
pub struct RunDir {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    pub fn create(dir: &Path, manifest: RunManifest) -> Result<RunDir> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(RunDir { dir: dir.to_path_buf(), manifest })
    }

    pub fn write(&mut self, role: &str, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        let rec = FileRecord {
            role: role.to_string(),
            path: PathBuf::from(name),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        match self.manifest.outputs.iter_mut().find(|r| r.path == rec.path) {
            Some(r) => *r = rec,
            None => self.manifest.outputs.push(rec),
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, role: &str, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(role, name, text.as_bytes())
    }

    pub fn finish(mut self, outcome: &str, exit_code: i32) -> Result<()> {
        self.manifest.outcome = outcome.to_string();
        self.manifest.exit_code = exit_code;
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST), text.as_bytes())
    }
}
