//! The `sdcd` command-line tool: view transforms, generation, scoring,
//! probes and sweeps, each run leaving a manifest that can repeat it.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sdcd_core::view::ResizePolicy;

pub use config::{DecodeFlags, EnvOverrides, FileConfig};
pub use error::{exit, CliError};
pub use manifest::{RunManifest, RunRecord};

#[derive(Debug, Parser)]
#[command(name = "sdcd", version, about = "Structure-disrupted contrastive decoding toolkit")]
pub struct Cli {
    /// Write the run manifest here instead of next to the primary output.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Patch-shuffle an image and write its shuffle spec sidecar.
    Shuffle(ShuffleArgs),
    /// Add seeded Gaussian noise to an image.
    Noise(NoiseArgs),
    /// Decode from a backend with or without the contrastive view.
    Generate(GenerateArgs),
    /// Score pre-generated answers or captions.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Structure-sensitivity and bag-of-patches probes.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Hyper-parameter sweeps over binary probe items.
    Sweep(SweepArgs),
    /// Write a synthetic probe dataset.
    Dataset(DatasetArgs),
    /// Re-derive the tokens of a stored trace from its logits.
    Replay(ReplayArgs),
    /// Repeat a run from its manifest and compare output digests.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct ShuffleArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Patch side S in pixels.
    #[arg(long, short = 's', default_value_t = 14)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bring non-divisible images to an S multiple instead of failing.
    #[arg(long)]
    pub resize: Option<ResizePolicy>,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
    /// Standard deviation in intensity units.
    #[arg(long, default_value_t = 64.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Sdcd,
    Regular,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// synthetic:<scene.json> or http(s)://host:port of a bridge.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub image: PathBuf,
    /// Free-text prompt; defaults to the captioning prompt.
    #[arg(long, conflicts_with_all = ["probe", "prompt_tokens"])]
    pub prompt: Option<String>,
    /// Ask the binary existence question about this object.
    #[arg(long, conflicts_with = "prompt_tokens")]
    pub probe: Option<String>,
    /// Pre-tokenized prompt, for backends without a tokenizer.
    #[arg(long, value_delimiter = ',')]
    pub prompt_tokens: Option<Vec<u32>>,
    #[arg(long, value_enum, default_value_t = DecodeMode::Sdcd)]
    pub mode: DecodeMode,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub decoding: DecodeFlags,
    /// Write the generation trace (JSON lines).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Store masks sparsely in the trace.
    #[arg(long)]
    pub compact_trace: bool,
    /// Also write the rendered output to this file.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Accuracy, precision, recall and F1 per sampling setting.
    Pope {
        /// JSON lines of {id, image, object, ground_truth, stratum}.
        #[arg(long)]
        items: PathBuf,
        /// JSON lines of {id, answer}.
        #[arg(long)]
        answers: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Sentence- and instance-level hallucination rates.
    Chair {
        /// JSON lines of {image, caption}.
        #[arg(long)]
        captions: PathBuf,
        /// JSON lines of {image, objects}.
        #[arg(long)]
        annotations: PathBuf,
        /// JSON lines of {canonical, surface_forms}.
        #[arg(long)]
        synonyms: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
}

/// Where probe items come from.
#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Directory written by `sdcd dataset`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Probe items answered by `--backend`; images resolve against the file.
    #[arg(long, conflicts_with = "dataset")]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Texture,
    Boundary,
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Margin shift under patch shuffling, split by ground truth.
    Ssd {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, short = 's', default_value_t = 14)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.6)]
        gamma: f64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Embedding similarity between images and their shuffles per S.
    Bop {
        /// Dataset directory; scene images are embedded, labelled by object.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Loose images (unlabelled).
        #[arg(long, num_args = 1.., conflicts_with = "dataset")]
        images: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = EmbedderKind::Boundary)]
        embedder: EmbedderKind,
        #[arg(long, value_delimiter = ',', default_value = "14,28,56,112,224")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepTarget {
    Alpha,
    Size,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub target: SweepTarget,
    /// Sweep spec (same format as --config).
    #[arg(long, conflicts_with = "config")]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Grid values; defaults to 0,0.4,...,2.0 for alpha and 14,28,56 for S.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub decoding: DecodeFlags,
    /// JSON lines report.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Also write the text table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long, short)]
    pub output: PathBuf,
    /// JSON dataset config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Only check input digests; do not execute.
    #[arg(long)]
    pub check_only: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Shuffle(_) => "shuffle",
            Self::Noise(_) => "noise",
            Self::Generate(_) => "generate",
            Self::Eval(EvalCommand::Pope { .. }) => "eval pope",
            Self::Eval(EvalCommand::Chair { .. }) => "eval chair",
            Self::Probe(ProbeCommand::Ssd { .. }) => "probe ssd",
            Self::Probe(ProbeCommand::Bop { .. }) => "probe bop",
            Self::Sweep(a) => match a.target {
                SweepTarget::Alpha => "sweep alpha",
                SweepTarget::Size => "sweep size",
            },
            Self::Dataset(_) => "dataset",
            Self::Replay(_) => "replay",
            Self::Rerun(_) => "rerun",
        }
    }
}

/// Parses `args` (program name first), runs the command and writes its
/// manifest. Returns the exit code on success paths, including partial
/// sweep failures.
pub fn run<I, T>(args: I, env: &EnvOverrides) -> Result<u8, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return Ok(code);
        }
    };
    if let Command::Rerun(r) = &cli.command {
        return commands::rerun(r);
    }
    let command = cli.command.name();
    let record = commands::dispatch(&cli.command, env)?;
    if let Some(path) = cli.manifest.clone().or_else(|| record.manifest_path.clone()) {
        let argv = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
        let cwd = std::env::current_dir().map_err(|e| CliError::new(exit::IO, format!("current directory: {e}")))?;
        RunManifest::build(command, argv, cwd, env, &record)?.write(&path)?;
    }
    Ok(record.exit_code)
}
