//! Output directories, artifact hashing and run manifests.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{Preset, TaskConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.json";

pub fn version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("CVQNN_GIT_DESCRIBE"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects files written under one run directory.
pub struct OutputDir {
    pub root: PathBuf,
    pub artifacts: Vec<Artifact>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    /// Writes `name` through `fill` and records its hash.
    pub fn write<F>(&mut self, name: &str, fill: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> CliResult<()>,
    {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        fill(&mut w)?;
        w.flush()?;
        drop(w);
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_file(&path)?,
            bytes: std::fs::metadata(&path)?.len(),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub task: String,
    pub preset: Preset,
    pub seed: u64,
    /// The fully resolved configuration; `cvqnn run` accepts it back.
    pub config: TaskConfig,
    pub artifacts: Vec<Artifact>,
    pub elapsed_s: f64,
}

impl Manifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }
}

/// Problems found when checking a manifest against its directory.
pub fn verify(manifest_path: &Path) -> CliResult<Vec<String>> {
    let manifest = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut problems = Vec::new();
    for a in &manifest.artifacts {
        let p = dir.join(&a.path);
        if !p.is_file() {
            problems.push(format!("{}: missing", a.path));
            continue;
        }
        let h = sha256_file(&p)?;
        if h != a.sha256 {
            problems.push(format!("{}: sha256 {h}, manifest has {}", a.path, a.sha256));
        }
    }
    Ok(problems)
}
