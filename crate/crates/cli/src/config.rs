//! Layered configuration: command-line flags, then environment overrides,
//! then the TOML config file, then built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use serde::{Deserialize, Serialize};

use sdcd_core::backend::{LogitBackend, RemoteBackend, SyntheticBackend, SyntheticSceneSpec};
use sdcd_core::decoding::{DecodingConfig, NegativeViewKind, SamplingMode};

use crate::error::{exit, CliError};

pub const BACKEND_ENV: &str = "SDCD_BACKEND";
pub const WORKERS_ENV: &str = "SDCD_WORKERS";

/// Environment values that override the config file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvOverrides {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vars: BTreeMap<String, String>,
}

impl EnvOverrides {
    pub fn from_process() -> Self {
        let vars = [BACKEND_ENV, WORKERS_ENV]
            .iter()
            .filter_map(|k| std::env::var(k).ok().filter(|v| !v.is_empty()).map(|v| (k.to_string(), v)))
            .collect();
        Self { vars }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.vars.get(key).map(String::as_str)
    }
}

/// Contents of a `--config` file. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<String>,
    pub workers: Option<usize>,
    pub dataset: Option<PathBuf>,
    pub items: Option<PathBuf>,
    /// Sweep grid: alphas or shuffle sizes.
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub decoding: Option<DecodingConfig>,
    #[serde(skip)]
    pub base: PathBuf,
    /// Whether the file chose a sampling mode explicitly.
    #[serde(skip)]
    pub mode_set: bool,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: Self = toml::from_str(&text).map_err(|e| CliError::new(exit::PRECONDITION, format!("{}: {e}", path.display())))?;
        config.mode_set = toml::from_str::<toml::Table>(&text)
            .ok()
            .and_then(|t| t.get("decoding").and_then(|d| d.as_table()).map(|d| d.contains_key("mode")))
            .unwrap_or(false);
        config.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = config.base.clone();
        for p in [&mut config.dataset, &mut config.items].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(b) = config.backend.as_mut() {
            if let Some(rest) = b.strip_prefix("synthetic:") {
                if Path::new(rest).is_relative() {
                    *b = format!("synthetic:{}", base.join(rest).display());
                }
            }
        }
        Ok(config)
    }

    pub fn backend(&self, flag: Option<&str>, env: &EnvOverrides) -> Option<String> {
        flag.map(str::to_string)
            .or_else(|| env.get(BACKEND_ENV).map(str::to_string))
            .or_else(|| self.backend.clone())
    }

    pub fn workers(&self, flag: Option<usize>, env: &EnvOverrides) -> Result<usize, CliError> {
        let from_env = env
            .get(WORKERS_ENV)
            .map(|v| v.parse::<usize>().map_err(|_| CliError::usage(format!("{WORKERS_ENV}={v} is not a worker count"))))
            .transpose()?;
        let n = flag
            .or(from_env)
            .or(self.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if n == 0 {
            return Err(CliError::usage("worker count must be >= 1"));
        }
        Ok(n)
    }

    pub fn decoding(&self, flags: &DecodeFlags) -> Result<DecodingConfig, CliError> {
        self.decoding_for(flags, false)
    }

    /// Binary probes decode greedily unless a flag or the file picks a mode:
    /// the answer is then the most probable token rather than a draw.
    pub fn decoding_for(&self, flags: &DecodeFlags, binary_probe: bool) -> Result<DecodingConfig, CliError> {
        let mut config = self.decoding.clone().unwrap_or_default();
        if binary_probe && !self.mode_set {
            config.mode = SamplingMode::Greedy;
        }
        flags.apply(&mut config);
        config.validate()?;
        Ok(config)
    }
}

/// Per-field decoding overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct DecodeFlags {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Do not apply the attention boost to the negative view.
    #[arg(long)]
    pub no_negative_boost: bool,
    /// greedy or nucleus.
    #[arg(long)]
    pub sampling: Option<SamplingMode>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    /// Sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shuffle_size: Option<usize>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    /// shuffle, noise or none.
    #[arg(long)]
    pub negative_view: Option<NegativeViewKind>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

impl DecodeFlags {
    pub fn apply(&self, c: &mut DecodingConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() {
                    c.$field = v;
                })*
            };
        }
        set!(alpha, beta, gamma, temperature, top_p, max_new_tokens, seed, shuffle_size, shuffle_seed, negative_view, noise_sigma);
        if let Some(m) = self.sampling {
            c.mode = m;
        }
        if self.no_negative_boost {
            c.boost_negative_view = false;
        }
    }
}

/// An opened backend plus the local files it was built from.
pub struct OpenedBackend {
    pub backend: Arc<dyn LogitBackend>,
    pub inputs: Vec<PathBuf>,
}

/// `synthetic:<scene.json>` or an `http(s)://` bridge endpoint.
pub fn open_backend(spec: &str) -> Result<OpenedBackend, CliError> {
    if let Some(path) = spec.strip_prefix("synthetic:") {
        let path = PathBuf::from(path);
        let scene = SyntheticSceneSpec::load(&path)?;
        let backend = SyntheticBackend::new(scene).map_err(|e| CliError::new(exit::PRECONDITION, e.to_string()))?;
        return Ok(OpenedBackend {
            backend: Arc::new(backend),
            inputs: vec![path],
        });
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(OpenedBackend {
            backend: Arc::new(RemoteBackend::connect(spec)?),
            inputs: vec![],
        });
    }
    Err(CliError::usage(format!(
        "unrecognized backend `{spec}` (expected synthetic:<scene.json> or an http:// endpoint)"
    )))
}
