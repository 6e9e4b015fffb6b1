//! Artifact persistence: CSV files with a `# manifest:` cross-reference and a
//! single header row, JSON reports, and the run manifest with content
//! digests. Data files carry no timestamps so identical configurations yield
//! byte-identical artifacts; the wall time lives only in the manifest.

use crate::config::RunConfig;
use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub wall_time_ms: u128,
    pub config: RunConfig,
    pub checks: Vec<CheckSummary>,
    pub files: Vec<FileDigest>,
}

/// Accumulates artifacts for one run and finalises the manifest.
pub struct ArtifactSink {
    dir: PathBuf,
    files: Vec<FileDigest>,
    checks: Vec<CheckSummary>,
    started: std::time::Instant,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        let _ = write!(s, "{b:02x}");
    }
    s
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            checks: Vec::new(),
            started: std::time::Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(FileDigest {
            name: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// CSV with the manifest cross-reference comment and one header line.
    pub fn write_csv(
        &mut self,
        name: &str,
        header: &str,
        rows: impl IntoIterator<Item = String>,
    ) -> Result<(), CliError> {
        let mut text = String::new();
        let _ = writeln!(text, "# manifest: {MANIFEST_NAME}");
        let _ = writeln!(text, "{header}");
        for row in rows {
            let _ = writeln!(text, "{row}");
        }
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("cannot serialise {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckSummary {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Write the manifest last so it can reference every emitted file.
    pub fn finish(self, command: &str, config: &RunConfig) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            wall_time_ms: self.started.elapsed().as_millis(),
            config: config.clone(),
            checks: self.checks.clone(),
            files: self.files.clone(),
        };
        let path = self.dir.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Io(format!("cannot serialise manifest: {e}")))?;
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

/// Digest verification used by tests and `verify`: every file listed in a
/// manifest must hash to its recorded digest.
pub fn verify_digests(dir: &Path) -> Result<Vec<(String, bool)>, CliError> {
    let path = dir.join(MANIFEST_NAME);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("bad manifest {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for f in &manifest.files {
        let bytes = std::fs::read(dir.join(&f.name))
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", f.name)))?;
        out.push((f.name.clone(), sha256_hex(&bytes) == f.sha256));
    }
    Ok(out)
}
