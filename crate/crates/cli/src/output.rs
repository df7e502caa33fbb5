use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    argv: Vec<String>,
    config: &'a serde_json::Value,
    seed: Option<u64>,
    artifacts: &'a [ArtifactRecord],
    duration_secs: f64,
}

/// Collects artifacts of one run and writes the manifest last.
pub struct Run {
    started: Instant,
    config: serde_json::Value,
    seed: Option<u64>,
    artifacts: Vec<ArtifactRecord>,
}

impl Run {
    pub fn new(config: serde_json::Value, seed: Option<u64>) -> Self {
        Self {
            started: Instant::now(),
            config,
            seed,
            artifacts: Vec::new(),
        }
    }

    /// Adds resolved inputs (model or spec contents) to the recorded config.
    pub fn record_input(&mut self, key: &str, value: serde_json::Value) {
        if let serde_json::Value::Object(map) = &mut self.config {
            map.insert(key.to_owned(), value);
        }
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(path, bytes)?;
        self.artifacts.push(ArtifactRecord {
            path: path.to_owned(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        eprintln!("wrote {}", path.display());
        Ok(())
    }

    /// Writes `<first artifact>.manifest.json`. Runs without artifacts
    /// have no manifest.
    pub fn finish(self) -> Result<(), CliError> {
        let Some(first) = self.artifacts.first() else {
            return Ok(());
        };
        let mut path = first.path.clone().into_os_string();
        path.push(".manifest.json");
        let manifest = Manifest {
            tool: "seqrisk",
            version: env!("CARGO_PKG_VERSION"),
            argv: std::env::args().collect(),
            config: &self.config,
            seed: self.seed,
            artifacts: &self.artifacts,
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(Path::new(&path), text.as_bytes())
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Prints to stdout. A closed pipe (e.g. `| head`) is not an error.
pub fn emit(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}
