//! `upt-forge`: compile prompt-options-verbalizer datasets, mine the
//! options knowledge repository, train and fine-tune the bundled masked
//! language model, and run the synthetic transfer benchmark.
//!
//! Every subcommand accepts `--config <file.json>` whose keys mirror the
//! long flag names (kebab-case flags map to snake_case keys); explicit
//! flags override file values. `UPT_FORGE_SEED` supplies the default seed
//! and `UPT_FORGE_THREADS` caps benchmark parallelism.
//!
//! Exit codes: 0 on success, 2 for usage or validation errors, 1 for
//! runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use upt_core::error::{Error, Result};
use upt_core::ksmlm::MaskMode;
use upt_core::pipeline::synthetic::{cmd_synthetic_benchmark, BenchMode, SyntheticArgs};
use upt_core::pipeline::{
    cmd_build_okr, cmd_compile, cmd_evaluate, cmd_finetune, cmd_gradcheck, cmd_train_multitask,
    BuildOkrArgs, CompileArgs, CompileMode, EvaluateArgs, FinetuneArgs, GradCheckArgs, ModelShape,
    TrainMultitaskArgs,
};
use upt_core::sampler::MixMode;
use upt_core::tiny_mlm::TrainConfig;

#[derive(Parser)]
#[command(name = "upt-forge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine adjectives from a tagged corpus and cluster their embeddings.
    BuildOkr(BuildOkrCli),
    /// Compile a dataset into masked cloze sequences.
    Compile(CompileCli),
    /// Train the model on several source pools plus an optional KSMLM pool.
    TrainMultitask(TrainMultitaskCli),
    /// Few-shot fine-tune on a target task with dev-based step selection.
    Finetune(FinetuneCli),
    /// Score checkpoints on a compiled evaluation set.
    Evaluate(EvaluateCli),
    /// Verify analytic gradients against central finite differences.
    Gradcheck(GradcheckCli),
    /// Generate synthetic tasks and run the full transfer comparison.
    SyntheticBenchmark(SyntheticCli),
}

fn env_seed() -> u64 {
    std::env::var("UPT_FORGE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn env_threads() -> usize {
    std::env::var("UPT_FORGE_THREADS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(1)
}

fn load_file_cfg<T: for<'de> Deserialize<'de> + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(path) => {
            if !path.exists() {
                return Err(Error::MissingInput(path.clone()));
            }
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::validation(format!("{}: {e}", path.display())))
        }
    }
}

fn req<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::validation(format!("missing required value for --{flag}")))
}

fn parse_mix_mode(s: &str) -> Result<MixMode> {
    match s {
        "stratified" => Ok(MixMode::Stratified),
        "loss-weighted" => Ok(MixMode::LossWeighted),
        other => Err(Error::validation(format!(
            "unknown mix mode {other:?} (expected stratified or loss-weighted)"
        ))),
    }
}

fn parse_mask_mode(s: &str) -> Result<MaskMode> {
    match s {
        "in-situ" => Ok(MaskMode::InSitu),
        "appended" => Ok(MaskMode::Appended),
        other => Err(Error::validation(format!(
            "unknown mask mode {other:?} (expected in-situ or appended)"
        ))),
    }
}

fn parse_compile_mode(s: &str) -> Result<CompileMode> {
    match s {
        "supervised" => Ok(CompileMode::Supervised),
        "ksmlm" => Ok(CompileMode::Ksmlm),
        "ensemble" => Ok(CompileMode::Ensemble),
        "multiple-choice" => Ok(CompileMode::MultipleChoice),
        other => Err(Error::validation(format!(
            "unknown compile mode {other:?} (expected supervised, ksmlm, ensemble, or multiple-choice)"
        ))),
    }
}

// ---- build-okr ----

#[derive(Args)]
struct BuildOkrCli {
    /// JSON config whose keys mirror the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tagged corpus (JSONL of {sentence_id, tokens:[{t, p}]}).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Embedding table ("word v1 .. vd" per line).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Repository output path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Number of clusters K.
    #[arg(long)]
    clusters: Option<usize>,
    /// Minimum adjective frequency.
    #[arg(long)]
    min_freq: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Skip L2 normalization before clustering.
    #[arg(long)]
    no_normalize: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct BuildOkrFile {
    corpus: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    output: Option<PathBuf>,
    clusters: Option<usize>,
    min_freq: Option<usize>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    no_normalize: Option<bool>,
    seed: Option<u64>,
}

fn run_build_okr(cli: BuildOkrCli) -> Result<()> {
    let file: BuildOkrFile = load_file_cfg(&cli.config)?;
    let args = BuildOkrArgs {
        corpus: req(cli.corpus.or(file.corpus), "corpus")?,
        embeddings: req(cli.embeddings.or(file.embeddings), "embeddings")?,
        output: req(cli.output.or(file.output), "output")?,
        clusters: cli.clusters.or(file.clusters).unwrap_or(16),
        min_freq: cli.min_freq.or(file.min_freq).unwrap_or(1),
        max_iters: cli.max_iters.or(file.max_iters).unwrap_or(100),
        tol: cli.tol.or(file.tol).unwrap_or(1e-6),
        normalize: !(cli.no_normalize || file.no_normalize.unwrap_or(false)),
        seed: cli.seed.or(file.seed).unwrap_or_else(env_seed),
    };
    cmd_build_okr(&args)
}

// ---- compile ----

#[derive(Args)]
struct CompileCli {
    #[arg(long)]
    config: Option<PathBuf>,
    /// supervised | ksmlm | ensemble | multiple-choice
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    task_config: Option<PathBuf>,
    /// JSONL dataset (tagged corpus for ksmlm mode).
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Build the vocabulary from this dataset first, writing it to --vocab.
    #[arg(long)]
    build_vocab: bool,
    #[arg(long)]
    template_index: Option<usize>,
    #[arg(long)]
    option_index: Option<usize>,
    #[arg(long)]
    verbalizer_index: Option<usize>,
    /// Compile prompts without the option expression (ablation).
    #[arg(long)]
    no_options: bool,
    /// KSMLM: draw alternatives uniformly instead of by dissimilarity.
    #[arg(long)]
    no_okr: bool,
    #[arg(long)]
    okr: Option<PathBuf>,
    /// in-situ | appended
    #[arg(long)]
    mask_mode: Option<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    weight: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CompileFile {
    mode: Option<String>,
    task_config: Option<PathBuf>,
    dataset: Option<PathBuf>,
    vocab: Option<PathBuf>,
    output: Option<PathBuf>,
    build_vocab: Option<bool>,
    template_index: Option<usize>,
    option_index: Option<usize>,
    verbalizer_index: Option<usize>,
    no_options: Option<bool>,
    no_okr: Option<bool>,
    okr: Option<PathBuf>,
    mask_mode: Option<String>,
    budget: Option<usize>,
    weight: Option<f64>,
    seed: Option<u64>,
}

fn run_compile(cli: CompileCli) -> Result<()> {
    let file: CompileFile = load_file_cfg(&cli.config)?;
    let mode = parse_compile_mode(
        &cli.mode
            .or(file.mode)
            .unwrap_or_else(|| "supervised".to_string()),
    )?;
    let mask_mode = match cli.mask_mode.or(file.mask_mode) {
        Some(s) => parse_mask_mode(&s)?,
        None => MaskMode::InSitu,
    };
    let args = CompileArgs {
        mode,
        task_config: cli.task_config.or(file.task_config),
        dataset: req(cli.dataset.or(file.dataset), "dataset")?,
        vocab: req(cli.vocab.or(file.vocab), "vocab")?,
        output: req(cli.output.or(file.output), "output")?,
        build_vocab: cli.build_vocab || file.build_vocab.unwrap_or(false),
        template_index: cli.template_index.or(file.template_index).unwrap_or(0),
        option_index: cli.option_index.or(file.option_index).unwrap_or(0),
        verbalizer_index: cli.verbalizer_index.or(file.verbalizer_index).unwrap_or(0),
        no_options: cli.no_options || file.no_options.unwrap_or(false),
        no_okr: cli.no_okr || file.no_okr.unwrap_or(false),
        okr: cli.okr.or(file.okr),
        mask_mode,
        budget: cli.budget.or(file.budget),
        weight: cli.weight.or(file.weight).unwrap_or(1.0),
        seed: cli.seed.or(file.seed).unwrap_or_else(env_seed),
    };
    cmd_compile(&args)
}

// ---- shared training knobs ----

#[derive(Args)]
struct TrainKnobs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Use a separate output projection instead of tying it to the token
    /// embeddings.
    #[arg(long)]
    untied: bool,
}

#[derive(Deserialize, Default)]
struct TrainKnobsFile {
    steps: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    lambda: Option<f64>,
    grad_clip: Option<f64>,
    seed: Option<u64>,
    dim: Option<usize>,
    layers: Option<usize>,
    heads: Option<usize>,
    max_len: Option<usize>,
    untied: Option<bool>,
}

fn resolve_train(
    cli: &TrainKnobs,
    file: &TrainKnobsFile,
    default_steps: usize,
    default_lambda: f64,
) -> (TrainConfig, ModelShape) {
    let seed = cli.seed.or(file.seed).unwrap_or_else(env_seed);
    let mut train = TrainConfig::new(cli.steps.or(file.steps).unwrap_or(default_steps), seed);
    if let Some(b) = cli.batch_size.or(file.batch_size) {
        train.batch_size = b;
    }
    if let Some(lr) = cli.learning_rate.or(file.learning_rate) {
        train.learning_rate = lr;
    }
    train.lambda = cli.lambda.or(file.lambda).unwrap_or(default_lambda);
    train.grad_clip = cli.grad_clip.or(file.grad_clip);
    let mut shape = ModelShape::default();
    if let Some(d) = cli.dim.or(file.dim) {
        shape.dim = d;
    }
    if let Some(l) = cli.layers.or(file.layers) {
        shape.layers = l;
    }
    if let Some(h) = cli.heads.or(file.heads) {
        shape.heads = h;
    }
    if let Some(m) = cli.max_len.or(file.max_len) {
        shape.max_len = m;
    }
    if cli.untied || file.untied.unwrap_or(false) {
        shape.tie_output = false;
    }
    (train, shape)
}

// ---- train-multitask ----

#[derive(Args)]
struct TrainMultitaskCli {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Compiled source pool; repeat per dataset.
    #[arg(long = "pool")]
    pools: Vec<PathBuf>,
    #[arg(long)]
    ksmlm_pool: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Loss-curve CSV path.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    /// stratified | loss-weighted
    #[arg(long)]
    mix_mode: Option<String>,
    /// KSMLM sub-batch share of the batch (default: equal extra sub-batch).
    #[arg(long)]
    ksmlm_share: Option<f64>,
    #[command(flatten)]
    knobs: TrainKnobs,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainMultitaskFile {
    pools: Option<Vec<PathBuf>>,
    ksmlm_pool: Option<PathBuf>,
    vocab: Option<PathBuf>,
    output: Option<PathBuf>,
    curve: Option<PathBuf>,
    gamma: Option<f64>,
    mix_mode: Option<String>,
    ksmlm_share: Option<f64>,
    #[serde(flatten)]
    knobs: TrainKnobsFile,
}

fn run_train_multitask(cli: TrainMultitaskCli) -> Result<()> {
    let file: TrainMultitaskFile = load_file_cfg(&cli.config)?;
    let (train, model) = resolve_train(&cli.knobs, &file.knobs, 300, 0.1);
    let pools = if cli.pools.is_empty() {
        file.pools.unwrap_or_default()
    } else {
        cli.pools
    };
    if pools.is_empty() {
        return Err(Error::validation("at least one --pool required"));
    }
    let mix_mode = match cli.mix_mode.or(file.mix_mode) {
        Some(s) => parse_mix_mode(&s)?,
        None => MixMode::Stratified,
    };
    let args = TrainMultitaskArgs {
        pools,
        ksmlm_pool: cli.ksmlm_pool.or(file.ksmlm_pool),
        vocab: req(cli.vocab.or(file.vocab), "vocab")?,
        output: req(cli.output.or(file.output), "output")?,
        curve: cli.curve.or(file.curve),
        model,
        train,
        gamma: cli.gamma.or(file.gamma).unwrap_or(0.001),
        mix_mode,
        ksmlm_share: cli.ksmlm_share.or(file.ksmlm_share),
    };
    cmd_train_multitask(&args)
}

// ---- finetune ----

#[derive(Args)]
struct FinetuneCli {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task_config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Start from this checkpoint; omit for a scratch-initialized model.
    #[arg(long)]
    from_checkpoint: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    curve: Option<PathBuf>,
    /// K examples per class for both the train and dev splits.
    #[arg(long)]
    k_shots: Option<usize>,
    #[arg(long)]
    template_index: Option<usize>,
    #[arg(long)]
    option_index: Option<usize>,
    #[arg(long)]
    verbalizer_index: Option<usize>,
    #[arg(long)]
    no_options: bool,
    /// Dev evaluation interval for checkpoint selection.
    #[arg(long)]
    eval_every: Option<usize>,
    #[command(flatten)]
    knobs: TrainKnobs,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FinetuneFile {
    task_config: Option<PathBuf>,
    dataset: Option<PathBuf>,
    vocab: Option<PathBuf>,
    from_checkpoint: Option<PathBuf>,
    output: Option<PathBuf>,
    curve: Option<PathBuf>,
    k_shots: Option<usize>,
    template_index: Option<usize>,
    option_index: Option<usize>,
    verbalizer_index: Option<usize>,
    no_options: Option<bool>,
    eval_every: Option<usize>,
    #[serde(flatten)]
    knobs: TrainKnobsFile,
}

fn run_finetune(cli: FinetuneCli) -> Result<()> {
    let file: FinetuneFile = load_file_cfg(&cli.config)?;
    let (train, model) = resolve_train(&cli.knobs, &file.knobs, 160, 0.0);
    let args = FinetuneArgs {
        task_config: req(cli.task_config.or(file.task_config), "task-config")?,
        dataset: req(cli.dataset.or(file.dataset), "dataset")?,
        vocab: req(cli.vocab.or(file.vocab), "vocab")?,
        from_checkpoint: cli.from_checkpoint.or(file.from_checkpoint),
        output: req(cli.output.or(file.output), "output")?,
        curve: cli.curve.or(file.curve),
        k_shots: cli.k_shots.or(file.k_shots).unwrap_or(16),
        template_index: cli.template_index.or(file.template_index).unwrap_or(0),
        option_index: cli.option_index.or(file.option_index).unwrap_or(0),
        verbalizer_index: cli.verbalizer_index.or(file.verbalizer_index).unwrap_or(0),
        no_options: cli.no_options || file.no_options.unwrap_or(false),
        eval_every: cli.eval_every.or(file.eval_every).unwrap_or(10),
        model,
        train,
    };
    cmd_finetune(&args)
}

// ---- evaluate ----

#[derive(Args)]
struct EvaluateCli {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to score; repeat for seed averaging.
    #[arg(long = "checkpoint")]
    checkpoints: Vec<PathBuf>,
    /// Compiled evaluation set.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Row label in the report (e.g. UPT, UPT-Single).
    #[arg(long)]
    mode_label: Option<String>,
    /// Label the row zero-shot (multi-task checkpoint, no fine-tuning).
    #[arg(long)]
    zero_shot: bool,
    /// Seed labels matching the checkpoints, for the report.
    #[arg(long = "seeds", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Report CSV output path.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvaluateFile {
    checkpoints: Option<Vec<PathBuf>>,
    data: Option<PathBuf>,
    mode_label: Option<String>,
    zero_shot: Option<bool>,
    seeds: Option<Vec<u64>>,
    csv: Option<PathBuf>,
    seed: Option<u64>,
}

fn run_evaluate(cli: EvaluateCli) -> Result<()> {
    let file: EvaluateFile = load_file_cfg(&cli.config)?;
    let checkpoints = if cli.checkpoints.is_empty() {
        file.checkpoints.unwrap_or_default()
    } else {
        cli.checkpoints
    };
    let seeds = if cli.seeds.is_empty() {
        file.seeds
    } else {
        Some(cli.seeds)
    };
    let args = EvaluateArgs {
        checkpoints,
        data: req(cli.data.or(file.data), "data")?,
        mode_label: cli
            .mode_label
            .or(file.mode_label)
            .unwrap_or_else(|| "model".to_string()),
        zero_shot: cli.zero_shot || file.zero_shot.unwrap_or(false),
        seeds,
        csv: cli.csv.or(file.csv),
        seed: cli.seed.or(file.seed).unwrap_or_else(env_seed),
    };
    cmd_evaluate(&args).map(|_| ())
}

// ---- gradcheck ----

#[derive(Args)]
struct GradcheckCli {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of parameters to probe (stratified over parameter blocks).
    #[arg(long)]
    subset: Option<usize>,
    /// Maximum acceptable relative error.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GradcheckFile {
    vocab_size: Option<usize>,
    dim: Option<usize>,
    layers: Option<usize>,
    heads: Option<usize>,
    seq_len: Option<usize>,
    batch: Option<usize>,
    epsilon: Option<f64>,
    subset: Option<usize>,
    tolerance: Option<f64>,
    seed: Option<u64>,
}

fn run_gradcheck(cli: GradcheckCli) -> Result<()> {
    let file: GradcheckFile = load_file_cfg(&cli.config)?;
    let defaults = GradCheckArgs::default();
    let args = GradCheckArgs {
        vocab_size: cli
            .vocab_size
            .or(file.vocab_size)
            .unwrap_or(defaults.vocab_size),
        dim: cli.dim.or(file.dim).unwrap_or(defaults.dim),
        layers: cli.layers.or(file.layers).unwrap_or(defaults.layers),
        heads: cli.heads.or(file.heads).unwrap_or(defaults.heads),
        seq_len: cli.seq_len.or(file.seq_len).unwrap_or(defaults.seq_len),
        batch: cli.batch.or(file.batch).unwrap_or(defaults.batch),
        epsilon: cli.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
        subset: cli.subset.or(file.subset).unwrap_or(defaults.subset),
        seed: cli.seed.or(file.seed).unwrap_or_else(env_seed),
    };
    let tolerance = cli.tolerance.or(file.tolerance).unwrap_or(1e-4);
    let report = cmd_gradcheck(&args)?;
    if report.max_rel_err < tolerance {
        println!("PASS (tolerance {tolerance:e})");
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed: max relative error {:.3e} >= tolerance {tolerance:e}",
            report.max_rel_err
        )))
    }
}

// ---- synthetic-benchmark ----

#[derive(Args)]
struct SyntheticCli {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seeds to average over.
    #[arg(long = "seeds", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Modes to run (upt, upt-single, wo-pov, wo-ksmlm, wo-okr, zero-shot);
    /// default: all.
    #[arg(long = "mode")]
    modes: Vec<String>,
    /// Concurrent seeds; defaults to UPT_FORGE_THREADS or 1.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    multitask_steps: Option<usize>,
    #[arg(long)]
    finetune_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    k_shots: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SyntheticFile {
    out_dir: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    modes: Option<Vec<String>>,
    threads: Option<usize>,
    multitask_steps: Option<usize>,
    finetune_steps: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    k_shots: Option<usize>,
    lambda: Option<f64>,
    gamma: Option<f64>,
    dim: Option<usize>,
    layers: Option<usize>,
    heads: Option<usize>,
}

fn run_synthetic(cli: SyntheticCli) -> Result<()> {
    let file: SyntheticFile = load_file_cfg(&cli.config)?;
    let defaults = SyntheticArgs::default();
    let mode_strings = if cli.modes.is_empty() {
        file.modes.unwrap_or_default()
    } else {
        cli.modes
    };
    let modes: Vec<BenchMode> = mode_strings
        .iter()
        .map(|s| BenchMode::parse(s))
        .collect::<Result<_>>()?;
    let seeds = if cli.seeds.is_empty() {
        file.seeds.unwrap_or(defaults.seeds)
    } else {
        cli.seeds
    };
    let args = SyntheticArgs {
        out_dir: cli.out_dir.or(file.out_dir).unwrap_or(defaults.out_dir),
        seeds,
        modes,
        threads: cli.threads.or(file.threads).unwrap_or_else(env_threads),
        multitask_steps: cli
            .multitask_steps
            .or(file.multitask_steps)
            .unwrap_or(defaults.multitask_steps),
        finetune_steps: cli
            .finetune_steps
            .or(file.finetune_steps)
            .unwrap_or(defaults.finetune_steps),
        batch_size: cli
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults.batch_size),
        learning_rate: cli
            .learning_rate
            .or(file.learning_rate)
            .unwrap_or(defaults.learning_rate),
        k_shots: cli.k_shots.or(file.k_shots).unwrap_or(defaults.k_shots),
        lambda: cli.lambda.or(file.lambda).unwrap_or(defaults.lambda),
        gamma: cli.gamma.or(file.gamma).unwrap_or(defaults.gamma),
        dim: cli.dim.or(file.dim).unwrap_or(defaults.dim),
        layers: cli.layers.or(file.layers).unwrap_or(defaults.layers),
        heads: cli.heads.or(file.heads).unwrap_or(defaults.heads),
    };
    cmd_synthetic_benchmark(&args).map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildOkr(args) => run_build_okr(args),
        Command::Compile(args) => run_compile(args),
        Command::TrainMultitask(args) => run_train_multitask(args),
        Command::Finetune(args) => run_finetune(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Gradcheck(args) => run_gradcheck(args),
        Command::SyntheticBenchmark(args) => run_synthetic(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
