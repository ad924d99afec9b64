//! Run manifests: everything needed to repeat a run and check that it
//! produced the same bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::EnvOverrides;
use crate::error::{exit, CliError};

pub const MANIFEST_FORMAT: &str = "sdcd-manifest";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Directory that relative paths in `argv` resolve against.
    pub cwd: PathBuf,
    #[serde(default)]
    pub env: EnvOverrides,
    /// Resolved configuration with every default filled in.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// What a command reports back so its manifest can be written.
#[derive(Debug, Default)]
pub struct RunRecord {
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Where the manifest goes; `None` when the run wrote no files.
    pub manifest_path: Option<PathBuf>,
    pub exit_code: u8,
}

impl RunRecord {
    pub fn new(config: impl Serialize) -> Self {
        Self {
            config: serde_json::to_value(config).expect("config serializes"),
            ..Self::default()
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }
}

/// `<output>.manifest.json` next to a single-file output.
pub fn sidecar(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn digest_all(paths: &[PathBuf]) -> Result<Vec<FileDigest>, CliError> {
    let mut seen = std::collections::BTreeSet::new();
    paths.iter().filter(|p| seen.insert(p.to_path_buf())).map(|p| digest_file(p)).collect()
}

/// Files under `dir` in sorted order, skipping `manifest.json`.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| CliError::io(&d, e))? {
            let path = entry.map_err(|e| CliError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

impl RunManifest {
    pub fn build(command: &str, argv: Vec<String>, cwd: PathBuf, env: &EnvOverrides, record: &RunRecord) -> Result<Self, CliError> {
        Ok(Self {
            format: MANIFEST_FORMAT.into(),
            tool: "sdcd".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv,
            cwd,
            env: env.clone(),
            config: record.config.clone(),
            seeds: record.seeds.clone(),
            inputs: digest_all(&record.inputs)?,
            outputs: digest_all(&record.outputs)?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
        if m.format != MANIFEST_FORMAT {
            return Err(CliError::io(path, format!("not a run manifest (format `{}`)", m.format)));
        }
        Ok(m)
    }

    /// Inputs whose current digest differs from the recorded one.
    pub fn changed_inputs(&self) -> Result<Vec<PathBuf>, CliError> {
        let mut changed = Vec::new();
        for d in &self.inputs {
            let now = digest_file(&self.cwd.join(&d.path)).map_err(|e| CliError::new(exit::PRECONDITION, e.message))?;
            if now.sha256 != d.sha256 {
                changed.push(d.path.clone());
            }
        }
        Ok(changed)
    }
}
