//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use sdcd_core::analysis::bop::{bop_probe, BoundaryAwareEmbedder, Embedder, TextureSignatureEmbedder};
use sdcd_core::analysis::dataset::cases_from_items;
use sdcd_core::analysis::report::{bop_table, ssd_summary, sweep_jsonl, sweep_table};
use sdcd_core::analysis::{alpha_sweep, shuffle_size_sweep, ssd_probe, DatasetConfig, EvalCase, SyntheticDataset};
use sdcd_core::backend::{LogitBackend, TokenId};
use sdcd_core::decoding::{generate, regular_generate, GenerationTrace};
use sdcd_core::metrics::io::{load_synonyms, read_jsonl, score_chair, score_pope, AnswerRecord, CaptionRecord, PopeItemRecord};
use sdcd_core::metrics::{ChairAnnotation, PopeItem};
use sdcd_core::prompt::{binary_probe, CAPTION_PROMPT};
use sdcd_core::view::{gaussian_noise_view, preprocess_to_grid, shuffle_patches, ShuffleSpec};
use sdcd_core::ImageGrid;

use crate::config::{open_backend, EnvOverrides, FileConfig};
use crate::error::{exit, CliError};
use crate::manifest::{list_files, sidecar, RunManifest, RunRecord};
use crate::{
    Command, DecodeMode, DatasetArgs, EmbedderKind, EvalCommand, GenerateArgs, NoiseArgs, ProbeCommand, ReplayArgs, RerunArgs,
    ShuffleArgs, SourceArgs, SweepArgs, SweepTarget,
};

pub const ALPHA_GRID: [f64; 6] = [0.0, 0.4, 0.8, 1.2, 1.6, 2.0];
pub const SIZE_GRID: [f64; 3] = [14.0, 28.0, 56.0];

pub fn dispatch(command: &Command, env: &EnvOverrides) -> Result<RunRecord, CliError> {
    match command {
        Command::Shuffle(a) => shuffle(a),
        Command::Noise(a) => noise(a),
        Command::Generate(a) => generate_cmd(a, env),
        Command::Eval(e) => eval(e),
        Command::Probe(p) => probe(p, env),
        Command::Sweep(a) => sweep(a, env),
        Command::Dataset(a) => dataset(a),
        Command::Replay(a) => replay(a),
        Command::Rerun(_) => unreachable!("rerun is handled before dispatch"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"))
}

fn with_pool<T>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::new(exit::PRECONDITION, format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// `<output>.shuffle.json`.
pub fn spec_sidecar(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".shuffle.json");
    output.with_file_name(name)
}

fn shuffle(a: &ShuffleArgs) -> Result<RunRecord, CliError> {
    let mut image = ImageGrid::read(&a.input)?;
    if let Some(policy) = a.resize {
        image = preprocess_to_grid(&image, a.size, policy)?;
    }
    let spec = ShuffleSpec::for_image(&image, a.size, a.seed)?;
    shuffle_patches(&image, &spec)?.write(&a.output)?;
    let spec_path = spec_sidecar(&a.output);
    write_text(&spec_path, &(spec.to_json() + "\n"))?;
    let mut record = RunRecord::new(json!({"size": a.size, "seed": a.seed, "resize": a.resize})).seed("shuffle", a.seed);
    record.inputs = vec![a.input.clone()];
    record.outputs = vec![a.output.clone(), spec_path];
    record.manifest_path = Some(sidecar(&a.output));
    Ok(record)
}

fn noise(a: &NoiseArgs) -> Result<RunRecord, CliError> {
    let image = ImageGrid::read(&a.input)?;
    gaussian_noise_view(&image, a.sigma, a.seed)?.write(&a.output)?;
    let mut record = RunRecord::new(json!({"sigma": a.sigma, "seed": a.seed})).seed("noise", a.seed);
    record.inputs = vec![a.input.clone()];
    record.outputs = vec![a.output.clone()];
    record.manifest_path = Some(sidecar(&a.output));
    Ok(record)
}

/// Detokenized text, or space-separated ids when the backend has no tokenizer.
pub fn render(backend: &dyn LogitBackend, tokens: &[TokenId]) -> String {
    backend
        .detokenize(tokens)
        .unwrap_or_else(|_| tokens.iter().map(u32::to_string).collect::<Vec<_>>().join(" "))
}

fn no_backend() -> CliError {
    CliError::usage(format!(
        "no backend: pass --backend, set {} or set `backend` in the config file",
        crate::config::BACKEND_ENV
    ))
}

fn generate_cmd(a: &GenerateArgs, env: &EnvOverrides) -> Result<RunRecord, CliError> {
    let file = FileConfig::load(a.config.as_deref())?;
    let config = file.decoding_for(&a.decoding, a.probe.is_some())?;
    let spec = file.backend(a.backend.as_deref(), env).ok_or_else(no_backend)?;
    let image = ImageGrid::read(&a.image)?;
    let opened = open_backend(&spec)?;
    let backend = opened.backend.as_ref();
    let prompt_text = match (&a.prompt, &a.probe) {
        _ if a.prompt_tokens.is_some() => None,
        (Some(p), _) => Some(p.clone()),
        (None, Some(object)) => Some(binary_probe(object)),
        (None, None) => Some(CAPTION_PROMPT.to_string()),
    };
    let prompt = match (&a.prompt_tokens, &prompt_text) {
        (Some(tokens), _) => tokens.clone(),
        (None, Some(text)) => backend.tokenize(text)?,
        (None, None) => unreachable!("a prompt source always exists"),
    };
    let generation = match a.mode {
        DecodeMode::Sdcd => generate(backend, &image, &prompt, &config)?,
        DecodeMode::Regular => regular_generate(backend, &image, &prompt, &config)?,
    };
    let text = render(backend, &generation.tokens);
    println!("{text}");

    let mut record = RunRecord::new(json!({
        "backend": spec,
        "mode": a.mode,
        "prompt": prompt_text,
        "prompt_tokens": prompt,
        "decoding": config,
        "compact_trace": a.compact_trace,
    }))
    .seed("sampling", config.seed)
    .seed("shuffle", config.shuffle_seed);
    record.inputs.push(a.image.clone());
    record.inputs.extend(opened.inputs);
    record.inputs.extend(a.config.clone());
    if let Some(path) = &a.output {
        write_text(path, &format!("{text}\n"))?;
        record.outputs.push(path.clone());
    }
    if let Some(path) = &a.trace {
        generation.trace.save(path, a.compact_trace)?;
        record.outputs.push(path.clone());
    }
    record.manifest_path = record.outputs.first().map(|p| sidecar(p));
    Ok(record)
}

fn eval(e: &EvalCommand) -> Result<RunRecord, CliError> {
    match e {
        EvalCommand::Pope { items, answers, output } => {
            let item_records: Vec<PopeItemRecord> = read_jsonl(items)?;
            let answer_records: Vec<AnswerRecord> = read_jsonl(answers)?;
            let parsed: Vec<PopeItem> = item_records.into_iter().map(PopeItem::from).collect();
            let report = score_pope(&parsed, &answer_records)?;
            write_json(output, &report)?;
            print!("{}", report.to_table());
            let mut record = RunRecord::new(json!({"metric": "pope"}));
            record.inputs = vec![items.clone(), answers.clone()];
            record.outputs = vec![output.clone()];
            record.manifest_path = Some(sidecar(output));
            Ok(record)
        }
        EvalCommand::Chair {
            captions,
            annotations,
            synonyms,
            output,
        } => {
            let caption_records: Vec<CaptionRecord> = read_jsonl(captions)?;
            let annotation_records: Vec<ChairAnnotation> = read_jsonl(annotations)?;
            let map = load_synonyms(synonyms)?;
            let report = score_chair(&caption_records, &annotation_records, &map)?;
            write_json(output, &report)?;
            print!("{}", report.to_table());
            let mut record = RunRecord::new(json!({"metric": "chair"}));
            record.inputs = vec![captions.clone(), annotations.clone(), synonyms.clone()];
            record.outputs = vec![output.clone()];
            record.manifest_path = Some(sidecar(output));
            Ok(record)
        }
    }
}

struct LoadedCases {
    cases: Vec<EvalCase>,
    inputs: Vec<PathBuf>,
    source: serde_json::Value,
}

fn load_cases(source: &SourceArgs, file: &FileConfig, env: &EnvOverrides) -> Result<LoadedCases, CliError> {
    let dataset = source.dataset.clone().or_else(|| file.dataset.clone());
    let items = source.items.clone().or_else(|| file.items.clone());
    if let Some(dir) = dataset.filter(|_| source.items.is_none()) {
        let cases = SyntheticDataset::load(&dir)?.cases()?;
        return Ok(LoadedCases {
            cases,
            inputs: list_files(&dir)?,
            source: json!({"dataset": dir}),
        });
    }
    let Some(items) = items else {
        return Err(CliError::usage("no probe items: pass --dataset or --items (or set them in the config file)"));
    };
    let spec = file.backend(source.backend.as_deref(), env).ok_or_else(no_backend)?;
    let records: Vec<PopeItemRecord> = read_jsonl(&items)?;
    let parsed: Vec<PopeItem> = records.into_iter().map(PopeItem::from).collect();
    let opened = open_backend(&spec)?;
    let base = items.parent().map(Path::to_path_buf).unwrap_or_default();
    let cases = cases_from_items(&parsed, &base, opened.backend)?;
    let mut inputs = vec![items.clone()];
    inputs.extend(parsed.iter().map(|i| base.join(&i.image)));
    inputs.extend(opened.inputs);
    Ok(LoadedCases {
        cases,
        inputs,
        source: json!({"items": items, "backend": spec}),
    })
}

fn probe(p: &ProbeCommand, env: &EnvOverrides) -> Result<RunRecord, CliError> {
    match p {
        ProbeCommand::Ssd {
            source,
            size,
            seed,
            gamma,
            output,
        } => {
            let file = FileConfig::load(source.config.as_deref())?;
            let workers = file.workers(source.workers, env)?;
            let loaded = load_cases(source, &file, env)?;
            let report = with_pool(workers, || ssd_probe(&loaded.cases, *size, *seed, *gamma))??;
            write_json(output, &report)?;
            print!("{}", ssd_summary(&report));
            let mut record = RunRecord::new(json!({"source": loaded.source, "size": size, "seed": seed, "gamma": gamma})).seed("shuffle", *seed);
            record.inputs = loaded.inputs;
            record.inputs.extend(source.config.clone());
            record.outputs = vec![output.clone()];
            record.manifest_path = Some(sidecar(output));
            Ok(record)
        }
        ProbeCommand::Bop {
            dataset,
            images,
            embedder,
            sizes,
            seeds,
            workers,
            output,
        } => {
            let (grids, labels, inputs) = match dataset {
                Some(dir) => {
                    let data = SyntheticDataset::load(dir)?;
                    let labels: Vec<String> = data.scenes.iter().map(|s| s.real_object().name.clone()).collect();
                    let grids = data.scenes.into_iter().map(|s| s.image).collect::<Vec<_>>();
                    (grids, Some(labels), list_files(dir)?)
                }
                None => {
                    let grids = images.iter().map(ImageGrid::read).collect::<Result<Vec<_>, _>>()?;
                    (grids, None, images.clone())
                }
            };
            let chosen: Box<dyn Embedder> = match embedder {
                EmbedderKind::Texture => Box::new(TextureSignatureEmbedder::default()),
                EmbedderKind::Boundary => Box::new(BoundaryAwareEmbedder::default()),
            };
            let workers = FileConfig::default().workers(*workers, &EnvOverrides::default())?;
            let curve = with_pool(workers, || bop_probe(chosen.as_ref(), &grids, labels.as_deref(), sizes, seeds))??;
            write_json(output, &curve)?;
            print!("{}", bop_table(&curve));
            let mut record = RunRecord::new(json!({"embedder": embedder, "sizes": sizes, "seeds": seeds, "labelled": labels.is_some()}));
            for (i, s) in seeds.iter().enumerate() {
                record.seeds.insert(format!("shuffle_{i}"), *s);
            }
            record.inputs = inputs;
            record.outputs = vec![output.clone()];
            record.manifest_path = Some(sidecar(output));
            Ok(record)
        }
    }
}

fn sizes_from(grid: &[f64]) -> Result<Vec<usize>, CliError> {
    grid.iter()
        .map(|&g| {
            if g >= 1.0 && g.fract() == 0.0 && g <= usize::MAX as f64 {
                Ok(g as usize)
            } else {
                Err(CliError::usage(format!("shuffle size must be a positive integer, got {g}")))
            }
        })
        .collect()
}

fn sweep(a: &SweepArgs, env: &EnvOverrides) -> Result<RunRecord, CliError> {
    let spec_path = a.spec.clone().or_else(|| a.source.config.clone());
    let file = FileConfig::load(spec_path.as_deref())?;
    let config = file.decoding_for(&a.decoding, true)?;
    let workers = file.workers(a.source.workers, env)?;
    let grid = a.grid.clone().or_else(|| file.grid.clone()).unwrap_or_else(|| match a.target {
        SweepTarget::Alpha => ALPHA_GRID.to_vec(),
        SweepTarget::Size => SIZE_GRID.to_vec(),
    });
    let loaded = load_cases(&a.source, &file, env)?;
    let report = match a.target {
        SweepTarget::Alpha => with_pool(workers, || alpha_sweep(&loaded.cases, &grid, &config))??,
        SweepTarget::Size => {
            let sizes = sizes_from(&grid)?;
            with_pool(workers, || shuffle_size_sweep(&loaded.cases, &sizes, &config))??
        }
    };
    write_text(&a.output, &sweep_jsonl(&report))?;
    let table = sweep_table(&report);
    print!("{table}");
    let mut record = RunRecord::new(json!({
        "target": a.target,
        "grid": grid,
        "source": loaded.source,
        "decoding": config,
    }))
    .seed("sampling", config.seed)
    .seed("shuffle", config.shuffle_seed);
    record.inputs = loaded.inputs;
    record.inputs.extend(spec_path);
    record.outputs.push(a.output.clone());
    if let Some(path) = &a.table {
        write_text(path, &table)?;
        record.outputs.push(path.clone());
    }
    record.manifest_path = Some(sidecar(&a.output));
    let failed = report.failed_cells();
    if failed > 0 {
        eprintln!("error: {failed} of {} sweep cells failed", report.cells.len());
        record.exit_code = exit::PRECONDITION;
    }
    Ok(record)
}

fn dataset(a: &DatasetArgs) -> Result<RunRecord, CliError> {
    let mut config = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<DatasetConfig>(&text).map_err(|e| CliError::new(exit::PRECONDITION, format!("{}: {e}", path.display())))?
        }
        None => DatasetConfig::default(),
    };
    if let Some(n) = a.scenes {
        config.scenes = n;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(s) = a.size {
        config.size = s;
    }
    let data = SyntheticDataset::generate(config.clone())?;
    data.save(&a.output)?;
    println!("wrote {} scenes to {}", data.scenes.len(), a.output.display());
    let mut record = RunRecord::new(&config).seed("dataset", config.seed);
    record.inputs.extend(a.config.clone());
    record.outputs = list_files(&a.output)?;
    record.manifest_path = Some(a.output.join("manifest.json"));
    Ok(record)
}

fn replay(a: &ReplayArgs) -> Result<RunRecord, CliError> {
    let trace = GenerationTrace::load(&a.trace)?;
    let tokens = trace.replay()?;
    if tokens != trace.tokens() {
        return Err(CliError::new(exit::MISMATCH, "replayed tokens differ from the stored ones"));
    }
    println!("{}", tokens.iter().map(u32::to_string).collect::<Vec<_>>().join(" "));
    Ok(RunRecord::new(json!({"trace": a.trace})))
}

/// Repeats a recorded run in its original directory and environment, then
/// compares every output digest.
pub fn rerun(a: &RerunArgs) -> Result<u8, CliError> {
    let manifest = RunManifest::load(&a.manifest)?;
    let changed = manifest.changed_inputs()?;
    if !changed.is_empty() {
        let list = changed.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ");
        return Err(CliError::new(exit::PRECONDITION, format!("inputs changed since the recorded run: {list}")));
    }
    if a.check_only {
        println!("inputs match ({} files)", manifest.inputs.len());
        return Ok(exit::OK);
    }
    std::env::set_current_dir(&manifest.cwd).map_err(|e| CliError::io(&manifest.cwd, e))?;
    let argv = std::iter::once("sdcd".to_string()).chain(manifest.argv.iter().cloned());
    let code = crate::run(argv, &manifest.env)?;
    let mut mismatched = Vec::new();
    for d in &manifest.outputs {
        let now = crate::manifest::digest_file(&d.path)?;
        if now.sha256 != d.sha256 {
            mismatched.push(d.path.display().to_string());
        }
    }
    if !mismatched.is_empty() {
        eprintln!("error: outputs differ from the recorded run: {}", mismatched.join(", "));
        return Ok(exit::MISMATCH);
    }
    eprintln!("rerun reproduced {} outputs", manifest.outputs.len());
    Ok(code)
}
