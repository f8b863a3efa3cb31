//! End-to-end commands behind the CLI: run manifests, report tables, and
//! the build-okr → compile → train → finetune → evaluate chain.

pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_model::{hex_digest, load_task_dataset, RawSample, TaskConfig, Vocabulary};
use crate::error::{Error, Result};
use crate::ksmlm::{synthesize_corpus, AltPolicy, MaskMode};
use crate::okr::{
    build_okr, extract_candidates, load_embeddings, load_tagged_corpus, OkrRepository,
};
use crate::pov_engine::{
    compile_ensemble, compile_sample, compile_sample_without_options, parse_options,
    parse_template, render_multiple_choice, AugmentedSample, Verbalizer,
};
use crate::sampler::{draw_batch, few_shot_split, FewShotSpec, KsmlmMix, MixMode, SamplerPlan};
use crate::seeded_rng;
use crate::tiny_mlm::{
    evaluate, grad_check, loss_and_grads, Adam, CurvePoint, GradCheckReport, ModelConfig, TinyMlm,
    TrainConfig,
};

// ---- manifests ----

/// Provenance record written next to every command's main output.
///
/// Manifests carry wall-clock timestamps, so they are metadata rather than
/// artifacts: determinism guarantees apply to every other output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Input path → SHA-256 of the file bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// SHA-256 hex digest of a file's bytes.
pub fn digest_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_digest(hasher))
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn record_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.inputs
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: impl AsRef<Path>) {
        self.outputs.push(path.as_ref().display().to_string());
    }

    /// Writes the manifest as `<output>.manifest.json`.
    pub fn finish(mut self, primary_output: impl AsRef<Path>) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let path = manifest_path(primary_output.as_ref());
        let text = serde_json::to_string_pretty(&self)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    name.push_str(".manifest.json");
    output.with_file_name(name)
}

// ---- reports ----

/// One aggregated result line: a task/mode pair with per-seed accuracies.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub task_name: String,
    pub mode: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over the per-seed accuracies.
    pub std: f64,
}

impl ReportRow {
    pub fn new(task_name: &str, mode: &str, seeds: Vec<u64>, accuracies: Vec<f64>) -> Self {
        assert!(
            !accuracies.is_empty() && seeds.len() == accuracies.len(),
            "report rows need one accuracy per seed"
        );
        let n = accuracies.len() as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies
            .iter()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n;
        ReportRow {
            task_name: task_name.to_string(),
            mode: mode.to_string(),
            seeds,
            accuracies,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Machine-readable report: one row per task/mode.
pub fn write_report_csv(path: impl AsRef<Path>, rows: &[ReportRow]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "task,mode,n_seeds,mean,std,accuracies").map_err(|e| Error::io(path, e))?;
    for r in rows {
        let accs: Vec<String> = r.accuracies.iter().map(|a| a.to_string()).collect();
        writeln!(
            file,
            "{},{},{},{},{},{}",
            r.task_name,
            r.mode,
            r.seeds.len(),
            r.mean,
            r.std,
            accs.join(" ")
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Human-readable aligned table. Std is the population standard deviation;
/// single-seed rows are flagged.
pub fn render_report_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let task_w = rows
        .iter()
        .map(|r| r.task_name.len())
        .chain(["task".len()])
        .max()
        .unwrap();
    let mode_w = rows
        .iter()
        .map(|r| r.mode.len())
        .chain(["mode".len()])
        .max()
        .unwrap();
    let _ = writeln!(
        out,
        "{:<task_w$}  {:<mode_w$}  {:>8}  {:>8}  {:>6}",
        "task", "mode", "mean", "std", "seeds"
    );
    let _ = writeln!(out, "{}", "-".repeat(task_w + mode_w + 30));
    for r in rows {
        let flag = if r.seeds.len() == 1 { " (n=1)" } else { "" };
        let _ = writeln!(
            out,
            "{:<task_w$}  {:<mode_w$}  {:>8.4}  {:>8.4}  {:>6}{}",
            r.task_name,
            r.mode,
            r.mean,
            r.std,
            r.seeds.len(),
            flag
        );
    }
    out.push_str("std = population standard deviation over seeds\n");
    out
}

// ---- compiled-sample files ----

/// First line of every compiled-sample file; ties the samples to the
/// vocabulary they were compiled against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompiledHeader {
    pub format: String,
    pub vocab_hash: String,
    pub task: String,
    pub mode: String,
}

pub const COMPILED_FORMAT: &str = "upt-compiled-v1";

pub fn save_compiled<T: Serialize>(
    path: impl AsRef<Path>,
    header: &CompiledHeader,
    samples: &[T],
) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{}", serde_json::to_string(header)?).map_err(|e| Error::io(path, e))?;
    for s in samples {
        writeln!(file, "{}", serde_json::to_string(s)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn load_compiled(path: impl AsRef<Path>) -> Result<(CompiledHeader, Vec<AugmentedSample>)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::validation(format!("{}: empty compiled file", path.display())))?;
    let header: CompiledHeader = serde_json::from_str(first).map_err(|e| Error::Record {
        path: path.to_path_buf(),
        line: 1,
        msg: format!("bad header: {e}"),
    })?;
    if header.format != COMPILED_FORMAT {
        return Err(Error::validation(format!(
            "{}: unknown compiled format {:?}",
            path.display(),
            header.format
        )));
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        samples.push(serde_json::from_str(line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: e.to_string(),
        })?);
    }
    Ok((header, samples))
}

fn check_vocab_hash(header: &CompiledHeader, hash: &str, what: &str) -> Result<()> {
    if header.vocab_hash != hash {
        return Err(Error::validation(format!(
            "vocabulary hash mismatch: {what} was compiled against {} but the current vocabulary is {}",
            header.vocab_hash, hash
        )));
    }
    Ok(())
}

// ---- build-okr ----

#[derive(Debug, Clone, Serialize)]
pub struct BuildOkrArgs {
    pub corpus: PathBuf,
    pub embeddings: PathBuf,
    pub output: PathBuf,
    pub clusters: usize,
    pub min_freq: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub normalize: bool,
    pub seed: u64,
}

pub fn cmd_build_okr(args: &BuildOkrArgs) -> Result<()> {
    let mut manifest = RunManifest::new("build-okr", args.seed, serde_json::to_value(args)?);
    manifest.record_input(&args.corpus)?;
    manifest.record_input(&args.embeddings)?;

    let corpus = load_tagged_corpus(&args.corpus)?;
    let embeddings = load_embeddings(&args.embeddings)?;
    let candidates =
        extract_candidates(corpus.iter().flat_map(|s| s.tokens.iter()), args.min_freq)?;
    let words: Vec<String> = candidates.iter().map(|(w, _)| w.clone()).collect();
    let (repo, stats) = build_okr(
        &words,
        &embeddings,
        args.clusters,
        args.seed,
        args.max_iters,
        args.tol,
        args.normalize,
    )?;
    repo.save(&args.output)?;

    println!(
        "{} adjectives in {} clusters ({} lacked embeddings, {} iterations, SSE {:.6})",
        repo.entries.len(),
        repo.k,
        stats.words_without_embedding,
        stats.iterations,
        stats.final_sse
    );
    for (c, size) in repo.cluster_sizes().iter().enumerate() {
        println!("cluster {c:>3}: {size:>5} {}", "#".repeat((*size).min(60)));
    }

    manifest.record_output(&args.output);
    manifest.finish(&args.output)
}

// ---- compile ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompileMode {
    Supervised,
    Ksmlm,
    Ensemble,
    MultipleChoice,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompileArgs {
    pub mode: CompileMode,
    /// Task config for prompt modes; unused for KSMLM.
    pub task_config: Option<PathBuf>,
    /// JSONL dataset for prompt modes; tagged corpus for KSMLM.
    pub dataset: PathBuf,
    pub vocab: PathBuf,
    pub output: PathBuf,
    /// Build the vocabulary from this dataset and config, writing it to
    /// `vocab`, before compiling.
    pub build_vocab: bool,
    pub template_index: usize,
    pub option_index: usize,
    pub verbalizer_index: usize,
    /// Compile prompts without the option expression (ablation).
    pub no_options: bool,
    /// KSMLM: pick alternatives uniformly instead of from the dissimilar
    /// cluster (ablation).
    pub no_okr: bool,
    pub okr: Option<PathBuf>,
    pub mask_mode: MaskMode,
    pub budget: Option<usize>,
    pub weight: f64,
    pub seed: u64,
}

fn indexed<'a, T>(items: &'a [T], idx: usize, what: &str) -> Result<&'a T> {
    items.get(idx).ok_or_else(|| {
        Error::validation(format!(
            "{what} index {idx} out of range ({} available)",
            items.len()
        ))
    })
}

pub fn cmd_compile(args: &CompileArgs) -> Result<()> {
    let mut manifest = RunManifest::new("compile", args.seed, serde_json::to_value(args)?);
    manifest.record_input(&args.dataset)?;

    match args.mode {
        CompileMode::Ksmlm => compile_ksmlm(args, &mut manifest)?,
        _ => compile_prompts(args, &mut manifest)?,
    }
    manifest.record_input(&args.vocab)?;
    manifest.record_output(&args.output);
    manifest.finish(&args.output)
}

fn compile_prompts(args: &CompileArgs, manifest: &mut RunManifest) -> Result<()> {
    let config_path = args
        .task_config
        .as_ref()
        .ok_or_else(|| Error::validation("prompt compilation needs --task-config"))?;
    manifest.record_input(config_path)?;
    let config = TaskConfig::load(config_path)?;
    let samples = load_task_dataset(&args.dataset, &config)?;
    let vocab = if args.build_vocab {
        let vocab = build_vocab_for(&config, &samples)?;
        vocab.save(&args.vocab)?;
        vocab
    } else {
        Vocabulary::load(&args.vocab)?
    };

    let template = parse_template(indexed(&config.templates, args.template_index, "template")?)?;
    let options = parse_options(
        indexed(&config.options, args.option_index, "option")?,
        config.num_classes(),
    )?;
    let verbalizer = Verbalizer::new(
        indexed(&config.verbalizers, args.verbalizer_index, "verbalizer")?,
        &config.class_labels,
    )?;

    let mut compiled = Vec::new();
    let mut rng = seeded_rng(args.seed);
    for (i, sample) in samples.iter().enumerate() {
        let result = match args.mode {
            CompileMode::Supervised => {
                if args.no_options {
                    compile_sample_without_options(
                        sample,
                        &template,
                        &verbalizer,
                        &config,
                        &vocab,
                        args.weight,
                    )
                    .map(|s| vec![s])
                } else {
                    compile_sample(
                        sample,
                        &template,
                        &options,
                        &verbalizer,
                        &config,
                        &vocab,
                        args.weight,
                    )
                    .map(|s| vec![s])
                }
            }
            CompileMode::Ensemble => {
                compile_ensemble(sample, &config, &vocab, args.weight, &mut rng)
            }
            CompileMode::MultipleChoice => {
                render_multiple_choice(sample, &config, &verbalizer, &vocab).map(|s| vec![s])
            }
            CompileMode::Ksmlm => unreachable!("dispatched in cmd_compile"),
        };
        compiled.extend(result.map_err(|e| {
            Error::validation(format!("sample {i} of {}: {e}", args.dataset.display()))
        })?);
    }

    let header = CompiledHeader {
        format: COMPILED_FORMAT.to_string(),
        vocab_hash: vocab.hash(),
        task: config.task_name.clone(),
        mode: mode_label(args),
    };
    save_compiled(&args.output, &header, &compiled)?;
    println!(
        "compiled {} samples for task {} -> {}",
        compiled.len(),
        config.task_name,
        args.output.display()
    );
    Ok(())
}

fn mode_label(args: &CompileArgs) -> String {
    let base = match args.mode {
        CompileMode::Supervised => "supervised",
        CompileMode::Ksmlm => "ksmlm",
        CompileMode::Ensemble => "ensemble",
        CompileMode::MultipleChoice => "multiple-choice",
    };
    if args.no_options {
        format!("{base}+no-options")
    } else {
        base.to_string()
    }
}

fn build_vocab_for(config: &TaskConfig, samples: &[RawSample]) -> Result<Vocabulary> {
    use crate::data_model::{build_vocabulary, DatasetEntry, DatasetRegistry, DatasetRole};
    let registry = DatasetRegistry {
        entries: vec![DatasetEntry {
            config: config.clone(),
            samples: samples.to_vec(),
            role: DatasetRole::Source,
        }],
    };
    build_vocabulary(&registry, &[config], std::iter::empty::<&str>(), 1)
}

fn compile_ksmlm(args: &CompileArgs, manifest: &mut RunManifest) -> Result<()> {
    let okr_path = args
        .okr
        .as_ref()
        .ok_or_else(|| Error::validation("KSMLM compilation needs --okr"))?;
    manifest.record_input(okr_path)?;
    let repo = OkrRepository::load(okr_path)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    let sentences = load_tagged_corpus(&args.dataset)?;
    let policy = if args.no_okr {
        AltPolicy::Uniform
    } else {
        AltPolicy::Dissimilar
    };
    let (examples, counts) = synthesize_corpus(
        &sentences,
        &repo,
        &vocab,
        args.mask_mode,
        policy,
        args.seed,
        args.budget.unwrap_or(usize::MAX),
    )?;
    let header = CompiledHeader {
        format: COMPILED_FORMAT.to_string(),
        vocab_hash: vocab.hash(),
        task: crate::ksmlm::KSMLM_DATASET.to_string(),
        mode: mode_label(args),
    };
    save_compiled(&args.output, &header, &examples)?;
    println!(
        "synthesized {} examples ({} no-adjective, {} out-of-vocabulary, {} no-alternative)",
        counts.synthesized,
        counts.skipped_no_adjective,
        counts.skipped_oov,
        counts.skipped_no_alternative
    );
    Ok(())
}

// ---- train-multitask ----

#[derive(Debug, Clone, Serialize)]
pub struct TrainMultitaskArgs {
    pub pools: Vec<PathBuf>,
    pub ksmlm_pool: Option<PathBuf>,
    pub vocab: PathBuf,
    pub output: PathBuf,
    pub curve: Option<PathBuf>,
    pub model: ModelShape,
    pub train: TrainConfig,
    pub gamma: f64,
    pub mix_mode: MixMode,
    pub ksmlm_share: Option<f64>,
}

/// Architecture knobs exposed on the CLI (vocab size comes from the
/// vocabulary file).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub tie_output: bool,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::new(1);
        ModelShape {
            dim: d.dim,
            layers: d.layers,
            heads: d.heads,
            max_len: d.max_len,
            tie_output: d.tie_output,
        }
    }
}

impl ModelShape {
    pub fn config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            dim: self.dim,
            layers: self.layers,
            heads: self.heads,
            max_len: self.max_len,
            tie_output: self.tie_output,
        }
    }
}

pub fn write_curve_csv(path: impl AsRef<Path>, curve: &[CurvePoint]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "step,L_supervised,L_KSMLM,L_total").map_err(|e| Error::io(path, e))?;
    for p in curve {
        writeln!(
            file,
            "{},{},{},{}",
            p.step,
            p.l_supervised,
            p.l_ksmlm.unwrap_or(0.0),
            p.l_total
        )
        .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn cmd_train_multitask(args: &TrainMultitaskArgs) -> Result<()> {
    let mut manifest = RunManifest::new(
        "train-multitask",
        args.train.seed,
        serde_json::to_value(args)?,
    );
    manifest.record_input(&args.vocab)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    let hash = vocab.hash();

    let mut names = Vec::new();
    let mut pools = Vec::new();
    for path in &args.pools {
        manifest.record_input(path)?;
        let (header, samples) = load_compiled(path)?;
        check_vocab_hash(&header, &hash, &path.display().to_string())?;
        names.push(header.task);
        pools.push(samples);
    }
    let sizes: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    let plan = SamplerPlan::new(names, sizes, args.gamma, args.mix_mode)?;
    manifest.config["weights"] = serde_json::to_value(&plan.weights)?;

    let ksmlm_pool = match &args.ksmlm_pool {
        Some(path) if args.train.lambda > 0.0 => {
            manifest.record_input(path)?;
            let (header, samples) = load_compiled(path)?;
            check_vocab_hash(&header, &hash, &path.display().to_string())?;
            samples
        }
        _ => Vec::new(),
    };
    let ksmlm_mix = match args.ksmlm_share {
        Some(share) => KsmlmMix::Share(share),
        None => KsmlmMix::LossMultiplier,
    };

    let mut model = TinyMlm::init(args.model.config(vocab.len()), args.train.seed)?;
    let curve = crate::tiny_mlm::train(
        &mut model,
        &pools,
        &ksmlm_pool,
        &plan,
        ksmlm_mix,
        &args.train,
    )?;
    model.save(&args.output, &hash)?;
    manifest.record_output(&args.output);
    if let Some(curve_path) = &args.curve {
        write_curve_csv(curve_path, &curve)?;
        manifest.record_output(curve_path);
    }
    if let Some(last) = curve.last() {
        println!(
            "trained {} steps; final L_total {:.4} -> {}",
            curve.len(),
            last.l_total,
            args.output.display()
        );
    }
    manifest.finish(&args.output)
}

// ---- finetune ----

#[derive(Debug, Clone, Serialize)]
pub struct FinetuneArgs {
    pub task_config: PathBuf,
    pub dataset: PathBuf,
    pub vocab: PathBuf,
    pub from_checkpoint: Option<PathBuf>,
    pub output: PathBuf,
    pub curve: Option<PathBuf>,
    pub k_shots: usize,
    pub template_index: usize,
    pub option_index: usize,
    pub verbalizer_index: usize,
    pub no_options: bool,
    pub eval_every: usize,
    pub model: ModelShape,
    pub train: TrainConfig,
}

/// The dev-selected checkpoint of a fine-tuning run.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionOutcome {
    pub step: usize,
    pub dev_accuracy: f64,
}

/// Compiles raw samples under one fixed template/option/verbalizer choice.
pub fn compile_pool(
    samples: &[RawSample],
    config: &TaskConfig,
    vocab: &Vocabulary,
    template_index: usize,
    option_index: usize,
    verbalizer_index: usize,
    no_options: bool,
) -> Result<Vec<AugmentedSample>> {
    let template = parse_template(indexed(&config.templates, template_index, "template")?)?;
    let options = parse_options(
        indexed(&config.options, option_index, "option")?,
        config.num_classes(),
    )?;
    let verbalizer = Verbalizer::new(
        indexed(&config.verbalizers, verbalizer_index, "verbalizer")?,
        &config.class_labels,
    )?;
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let compiled = if no_options {
                compile_sample_without_options(s, &template, &verbalizer, config, vocab, 1.0)
            } else {
                compile_sample(s, &template, &options, &verbalizer, config, vocab, 1.0)
            };
            compiled.map_err(|e| Error::validation(format!("sample {i}: {e}")))
        })
        .collect()
}

/// Training loop with periodic dev evaluation; keeps the parameters of the
/// best dev step (ties go to the earlier step). Evaluations happen every
/// `eval_every` steps and after the final step.
pub fn train_selecting(
    model: &mut TinyMlm,
    pools: &[Vec<AugmentedSample>],
    plan: &SamplerPlan,
    cfg: &TrainConfig,
    dev: &[AugmentedSample],
    eval_every: usize,
) -> Result<(Vec<CurvePoint>, SelectionOutcome)> {
    cfg.validate()?;
    if eval_every == 0 {
        return Err(Error::validation("eval_every must be positive"));
    }
    let weighted = plan.mode == MixMode::LossWeighted;
    let mut rng = seeded_rng(cfg.seed);
    let mut adam = Adam::new(model.params.len(), cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    let mut curve = Vec::with_capacity(cfg.steps);
    let mut best: Option<SelectionOutcome> = None;
    let mut best_params = model.params.clone();
    for step in 0..cfg.steps {
        let batch = draw_batch(
            pools,
            &[],
            plan,
            KsmlmMix::LossMultiplier,
            cfg.batch_size,
            &mut rng,
        )?;
        let (report, mut grads) = loss_and_grads(model, &batch.supervised, &[], 0.0, weighted)?;
        if !report.l_total.is_finite() {
            return Err(Error::Numeric(format!(
                "loss diverged at step {step}: {}",
                report.l_total
            )));
        }
        if let Some(max_norm) = cfg.grad_clip {
            crate::tiny_mlm::clip_global_norm(&mut grads, max_norm);
        }
        adam.step(&mut model.params, &grads, cfg.learning_rate);
        curve.push(CurvePoint {
            step,
            l_supervised: report.l_supervised,
            l_ksmlm: None,
            l_total: report.l_total,
        });
        let done = step + 1 == cfg.steps;
        if (step + 1) % eval_every == 0 || done {
            let acc = evaluate(model, dev)?.accuracy;
            if best.as_ref().is_none_or(|b| acc > b.dev_accuracy) {
                best = Some(SelectionOutcome {
                    step: step + 1,
                    dev_accuracy: acc,
                });
                best_params.copy_from_slice(&model.params);
            }
        }
    }
    let outcome = best.unwrap_or(SelectionOutcome {
        step: 0,
        dev_accuracy: evaluate(model, dev)?.accuracy,
    });
    model.params.copy_from_slice(&best_params);
    Ok((curve, outcome))
}

pub fn cmd_finetune(args: &FinetuneArgs) -> Result<()> {
    let mut manifest = RunManifest::new("finetune", args.train.seed, serde_json::to_value(args)?);
    manifest.record_input(&args.task_config)?;
    manifest.record_input(&args.dataset)?;
    manifest.record_input(&args.vocab)?;

    let config = TaskConfig::load(&args.task_config)?;
    let samples = load_task_dataset(&args.dataset, &config)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    let hash = vocab.hash();

    let spec = FewShotSpec {
        n: config.num_classes(),
        k: args.k_shots,
        seed: args.train.seed,
    };
    let (train_raw, dev_raw) = few_shot_split(&samples, &config.class_labels, &spec)?;
    let train_pool = compile_pool(
        &train_raw,
        &config,
        &vocab,
        args.template_index,
        args.option_index,
        args.verbalizer_index,
        args.no_options,
    )?;
    let dev_pool = compile_pool(
        &dev_raw,
        &config,
        &vocab,
        args.template_index,
        args.option_index,
        args.verbalizer_index,
        args.no_options,
    )?;
    manifest.config["train_size"] = serde_json::json!(train_pool.len());
    manifest.config["dev_size"] = serde_json::json!(dev_pool.len());

    let mut model = match &args.from_checkpoint {
        Some(path) => {
            manifest.record_input(path)?;
            let (model, ckpt_hash) = TinyMlm::load(path)?;
            if ckpt_hash != hash {
                return Err(Error::validation(format!(
                    "vocabulary hash mismatch: checkpoint {} was trained against {ckpt_hash} but the current vocabulary is {hash}",
                    path.display()
                )));
            }
            model
        }
        None => TinyMlm::init(args.model.config(vocab.len()), args.train.seed)?,
    };

    let plan = SamplerPlan::new(
        vec![config.task_name.clone()],
        vec![train_pool.len()],
        1.0,
        MixMode::Stratified,
    )?;
    let (curve, outcome) = train_selecting(
        &mut model,
        &[train_pool],
        &plan,
        &args.train,
        &dev_pool,
        args.eval_every,
    )?;
    manifest.config["selected"] = serde_json::to_value(&outcome)?;

    model.save(&args.output, &hash)?;
    manifest.record_output(&args.output);
    if let Some(curve_path) = &args.curve {
        write_curve_csv(curve_path, &curve)?;
        manifest.record_output(curve_path);
    }
    println!(
        "fine-tuned {} steps; selected step {} (dev accuracy {:.4}) -> {}",
        curve.len(),
        outcome.step,
        outcome.dev_accuracy,
        args.output.display()
    );
    manifest.finish(&args.output)
}

// ---- evaluate ----

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateArgs {
    pub checkpoints: Vec<PathBuf>,
    pub data: PathBuf,
    pub mode_label: String,
    pub zero_shot: bool,
    pub seeds: Option<Vec<u64>>,
    pub csv: Option<PathBuf>,
    pub seed: u64,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<ReportRow> {
    if args.checkpoints.is_empty() {
        return Err(Error::validation("at least one checkpoint required"));
    }
    let mut manifest = RunManifest::new("evaluate", args.seed, serde_json::to_value(args)?);
    manifest.record_input(&args.data)?;
    let (header, samples) = load_compiled(&args.data)?;

    let mut accuracies = Vec::new();
    for path in &args.checkpoints {
        manifest.record_input(path)?;
        let (model, ckpt_hash) = TinyMlm::load(path)?;
        check_vocab_hash(&header, &ckpt_hash, &args.data.display().to_string())?;
        let report = evaluate(&model, &samples)?;
        accuracies.push(report.accuracy);
    }
    let seeds = args
        .seeds
        .clone()
        .unwrap_or_else(|| (0..accuracies.len() as u64).collect());
    if seeds.len() != accuracies.len() {
        return Err(Error::validation(format!(
            "{} seeds given for {} checkpoints",
            seeds.len(),
            accuracies.len()
        )));
    }
    let label = if args.zero_shot {
        "zero-shot"
    } else {
        &args.mode_label
    };
    let row = ReportRow::new(&header.task, label, seeds, accuracies);
    print!("{}", render_report_table(std::slice::from_ref(&row)));
    if let Some(csv) = &args.csv {
        write_report_csv(csv, std::slice::from_ref(&row))?;
        manifest.record_output(csv);
        manifest.finish(csv)?;
    }
    Ok(row)
}

// ---- gradcheck ----

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckArgs {
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub batch: usize,
    pub epsilon: f64,
    pub subset: usize,
    pub seed: u64,
}

impl Default for GradCheckArgs {
    fn default() -> Self {
        GradCheckArgs {
            vocab_size: 60,
            dim: 32,
            layers: 2,
            heads: 2,
            seq_len: 12,
            batch: 3,
            epsilon: 1e-5,
            subset: 600,
            seed: 0,
        }
    }
}

/// A synthetic batch of well-formed masked sequences over an abstract
/// vocabulary, for gradient checking.
pub fn synthetic_gradcheck_batch(
    vocab_size: usize,
    seq_len: usize,
    batch: usize,
    seed: u64,
) -> Vec<AugmentedSample> {
    use rand::Rng;
    let mut rng = seeded_rng(seed);
    (0..batch)
        .map(|_| {
            let mut ids: Vec<usize> = vec![3];
            for _ in 0..seq_len.saturating_sub(3) {
                ids.push(rng.gen_range(5..vocab_size));
            }
            let mask_index = rng.gen_range(1..ids.len() + 1);
            ids.insert(mask_index, 2);
            ids.push(4);
            let a = rng.gen_range(5..vocab_size);
            let b = (a + 1 - 5) % (vocab_size - 5) + 5;
            let gold = rng.gen_range(0..2);
            let cands = vec![a, b];
            AugmentedSample {
                target_word_id: cands[gold],
                token_ids: ids,
                mask_index,
                candidate_word_ids: cands,
                gold_label_index: gold,
                source_dataset: "gradcheck".to_string(),
                weight: 1.0,
            }
        })
        .collect()
}

pub fn cmd_gradcheck(args: &GradCheckArgs) -> Result<GradCheckReport> {
    let config = ModelConfig {
        vocab_size: args.vocab_size,
        dim: args.dim,
        layers: args.layers,
        heads: args.heads,
        max_len: args.seq_len + 4,
        tie_output: true,
    };
    let model = TinyMlm::init(config, args.seed)?;
    let batch = synthetic_gradcheck_batch(args.vocab_size, args.seq_len, args.batch, args.seed + 1);
    let report = grad_check(&model, &batch, args.epsilon, args.subset, args.seed + 2)?;
    println!(
        "checked {} parameters: max relative error {:.3e} (worst {} [{}])",
        report.checked, report.max_rel_err, report.worst_span, report.worst_index
    );
    Ok(report)
}
