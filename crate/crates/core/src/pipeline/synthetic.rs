//! Self-contained synthetic benchmark: generates a small family of
//! sentiment-style tasks over a shared adjective vocabulary, then runs the
//! full transfer pipeline (multi-task training, few-shot fine-tuning,
//! ablations, zero-shot) over several seeds and reports per-mode accuracy.
//!
//! The generator is built so that prompting structure transfers: all tasks
//! share template and option shapes, label words for every task come from
//! the same positive/negative adjective pools, and the masking corpus uses
//! those same adjectives in context.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{
    build_vocabulary, DatasetEntry, DatasetRegistry, DatasetRole, RawSample, TaskConfig, Vocabulary,
};
use crate::error::{Error, Result};
use crate::ksmlm::{synthesize_corpus, AltPolicy, MaskMode};
use crate::okr::{build_okr, extract_candidates, OkrRepository, TaggedSentence, TaggedToken};
use crate::pipeline::{
    compile_pool, render_report_table, train_selecting, write_report_csv, ReportRow, RunManifest,
};
use crate::pov_engine::{
    compile_sample, compile_sample_without_options, parse_options, parse_template, AugmentedSample,
    Verbalizer,
};
use crate::sampler::{few_shot_split, FewShotSpec, KsmlmMix, MixMode, SamplerPlan};
use crate::tiny_mlm::{evaluate, train, ModelConfig, TinyMlm, TrainConfig};
use crate::{derive_seed, seeded_rng};

pub const POS_ADJ: [&str; 8] = [
    "wonderful",
    "great",
    "solid",
    "fine",
    "superb",
    "lovely",
    "exquisite",
    "neat",
];
pub const NEG_ADJ: [&str; 8] = [
    "bad",
    "terrible",
    "horrible",
    "silly",
    "poor",
    "awful",
    "pathetic",
    "pointless",
];

const WORLD_SEED: u64 = 42;
const EMBED_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMode {
    Upt,
    UptSingle,
    WoPov,
    WoKsmlm,
    WoOkr,
    ZeroShot,
}

impl BenchMode {
    pub const ALL: [BenchMode; 6] = [
        BenchMode::Upt,
        BenchMode::UptSingle,
        BenchMode::WoPov,
        BenchMode::WoKsmlm,
        BenchMode::WoOkr,
        BenchMode::ZeroShot,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BenchMode::Upt => "UPT",
            BenchMode::UptSingle => "UPT-Single",
            BenchMode::WoPov => "w/o POV",
            BenchMode::WoKsmlm => "w/o KSMLM",
            BenchMode::WoOkr => "w/o OKR",
            BenchMode::ZeroShot => "zero-shot",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "upt" => Ok(BenchMode::Upt),
            "upt-single" | "single" => Ok(BenchMode::UptSingle),
            "wo-pov" | "w/o-pov" | "w/o pov" | "no-pov" => Ok(BenchMode::WoPov),
            "wo-ksmlm" | "w/o-ksmlm" | "w/o ksmlm" | "no-ksmlm" => Ok(BenchMode::WoKsmlm),
            "wo-okr" | "w/o-okr" | "w/o okr" | "no-okr" => Ok(BenchMode::WoOkr),
            "zero-shot" | "zeroshot" => Ok(BenchMode::ZeroShot),
            other => Err(Error::validation(format!(
                "unknown benchmark mode {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticArgs {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    /// Modes to run; empty means all.
    pub modes: Vec<BenchMode>,
    /// Cap on concurrently running seeds.
    pub threads: usize,
    pub multitask_steps: usize,
    pub finetune_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub k_shots: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
}

impl Default for SyntheticArgs {
    fn default() -> Self {
        SyntheticArgs {
            out_dir: PathBuf::from("synthetic-benchmark"),
            seeds: vec![0, 1, 2, 3, 4],
            modes: Vec::new(),
            threads: 1,
            multitask_steps: 2000,
            finetune_steps: 160,
            batch_size: 8,
            learning_rate: 1e-3,
            k_shots: 16,
            lambda: 0.1,
            gamma: 0.001,
            dim: 32,
            layers: 2,
            heads: 2,
        }
    }
}

pub struct TaskData {
    pub config: TaskConfig,
    pub train: Vec<RawSample>,
    pub test: Vec<RawSample>,
}

/// The generated universe shared by every seed and mode.
pub struct World {
    pub sources: Vec<TaskData>,
    pub target: TaskData,
    pub corpus: Vec<TaggedSentence>,
    pub vocab: Vocabulary,
    pub repo: OkrRepository,
}

fn pair_map(neg_word: &str, pos_word: &str) -> std::collections::BTreeMap<String, String> {
    let mut verbalizer = std::collections::BTreeMap::new();
    verbalizer.insert("negative".to_string(), neg_word.to_string());
    verbalizer.insert("positive".to_string(), pos_word.to_string());
    verbalizer
}

fn make_config(name: &str, pairs: &[(String, String)]) -> TaskConfig {
    TaskConfig {
        task_name: name.to_string(),
        class_labels: vec!["negative".to_string(), "positive".to_string()],
        templates: vec![
            "[<s1>]. It was [MASK].".to_string(),
            "[<s1>]. All in all, it was [MASK].".to_string(),
        ],
        options: vec![
            "Is it <x1> or <x2>?".to_string(),
            "<x1> or <x2>?".to_string(),
        ],
        verbalizers: pairs.iter().map(|(n, p)| pair_map(n, p)).collect(),
    }
}

/// Random label-word pairs from the shared pools, skipping the target
/// task's own pair so transfer stays honest.
fn gen_pairs(rng: &mut impl Rng, primary: (&str, &str), n_extra: usize) -> Vec<(String, String)> {
    let mut pairs = vec![(primary.0.to_string(), primary.1.to_string())];
    while pairs.len() < n_extra + 1 {
        let neg = NEG_ADJ[rng.gen_range(0..NEG_ADJ.len())];
        let pos = POS_ADJ[rng.gen_range(0..POS_ADJ.len())];
        let pair = (neg.to_string(), pos.to_string());
        if (neg, pos) != ("horrible", "superb") && !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    pairs
}

fn gen_text(rng: &mut impl Rng, positive: bool, nouns: &[&str]) -> String {
    let dets = ["a", "the", "this"];
    let tails = [
        "overall",
        "in every way",
        "by any measure",
        "through and through",
        "",
    ];
    let pool: &[&str] = if positive { &POS_ADJ } else { &NEG_ADJ };
    let det = dets[rng.gen_range(0..dets.len())];
    let noun = nouns[rng.gen_range(0..nouns.len())];
    let adj = pool[rng.gen_range(0..pool.len())];
    let tail = tails[rng.gen_range(0..tails.len())];
    let core = if rng.gen_bool(0.3) {
        let adj2 = pool[rng.gen_range(0..pool.len())];
        format!("{det} {adj} and {adj2} {noun}")
    } else {
        format!("{det} {adj} {noun}")
    };
    if tail.is_empty() {
        core
    } else {
        format!("{core} {tail}")
    }
}

fn gen_samples(rng: &mut impl Rng, nouns: &[&str], n: usize) -> Vec<RawSample> {
    (0..n)
        .map(|i| {
            let positive = i % 2 == 1;
            RawSample {
                text_a: gen_text(rng, positive, nouns),
                text_b: None,
                label: if positive { "positive" } else { "negative" }.to_string(),
            }
        })
        .collect()
}

fn gen_corpus(rng: &mut impl Rng, all_nouns: &[&str], n: usize) -> Vec<TaggedSentence> {
    (0..n as u64)
        .map(|sentence_id| {
            let positive = rng.gen_bool(0.5);
            let pool: &[&str] = if positive { &POS_ADJ } else { &NEG_ADJ };
            let det = ["a", "the", "this"][rng.gen_range(0..3)];
            let adj = pool[rng.gen_range(0..pool.len())];
            // A second same-polarity adjective keeps the sentence's polarity
            // readable after either one is masked.
            let adj2 = loop {
                let cand = pool[rng.gen_range(0..pool.len())];
                if cand != adj {
                    break cand;
                }
            };
            let noun = all_nouns[rng.gen_range(0..all_nouns.len())];
            let verb = ["works", "reads", "feels", "looks"][rng.gen_range(0..4)];
            let adv = ["nicely", "poorly", "today", "somehow"][rng.gen_range(0..4)];
            let tokens = vec![
                TaggedToken {
                    surface: det.to_string(),
                    pos: "DET".to_string(),
                },
                TaggedToken {
                    surface: adj.to_string(),
                    pos: "ADJ".to_string(),
                },
                TaggedToken {
                    surface: adj2.to_string(),
                    pos: "ADJ".to_string(),
                },
                TaggedToken {
                    surface: noun.to_string(),
                    pos: "NOUN".to_string(),
                },
                TaggedToken {
                    surface: verb.to_string(),
                    pos: "VERB".to_string(),
                },
                TaggedToken {
                    surface: adv.to_string(),
                    pos: "ADV".to_string(),
                },
            ];
            TaggedSentence {
                sentence_id,
                tokens,
            }
        })
        .collect()
}

/// Synthetic polarity embeddings: positive adjectives sit near +e1,
/// negative ones near -e1, so 2-means separates the pools.
fn gen_embeddings(rng: &mut impl Rng) -> HashMap<String, Vec<f64>> {
    let mut out = HashMap::new();
    for (pool, sign) in [(POS_ADJ, 1.0), (NEG_ADJ, -1.0)] {
        for word in pool {
            let mut v = vec![0.0; EMBED_DIM];
            v[0] = sign;
            for x in v.iter_mut() {
                *x += 0.05 * (rng.gen::<f64>() - 0.5);
            }
            out.insert(word.to_string(), v);
        }
    }
    out
}

/// Builds the deterministic benchmark universe.
pub fn build_world() -> Result<World> {
    let mut rng = seeded_rng(WORLD_SEED);
    let source_specs = [
        (
            "film-reviews",
            vec!["film", "movie", "picture"],
            "terrible",
            "great",
        ),
        (
            "product-reviews",
            vec!["product", "device", "gadget"],
            "bad",
            "wonderful",
        ),
        (
            "food-reviews",
            vec!["meal", "dish", "dinner"],
            "awful",
            "lovely",
        ),
    ];
    let target_spec = (
        "book-reviews",
        vec!["book", "novel", "story"],
        "horrible",
        "superb",
    );

    let mut sources = Vec::new();
    let mut all_nouns: Vec<&str> = Vec::new();
    for (name, nouns, neg, pos) in &source_specs {
        all_nouns.extend(nouns.iter().copied());
        let pairs = gen_pairs(&mut rng, (neg, pos), 20);
        sources.push(TaskData {
            config: make_config(name, &pairs),
            train: gen_samples(&mut rng, nouns, 150),
            test: Vec::new(),
        });
    }
    all_nouns.extend(target_spec.1.iter().copied());
    let target_pair = [(target_spec.2.to_string(), target_spec.3.to_string())];
    let target = TaskData {
        config: make_config(target_spec.0, &target_pair),
        train: gen_samples(&mut rng, &target_spec.1, 80),
        test: gen_samples(&mut rng, &target_spec.1, 120),
    };

    let corpus = gen_corpus(&mut rng, &all_nouns, 240);
    let embeddings = gen_embeddings(&mut rng);

    let mut registry = DatasetRegistry::default();
    for task in &sources {
        registry.entries.push(DatasetEntry {
            config: task.config.clone(),
            samples: task.train.clone(),
            role: DatasetRole::Source,
        });
    }
    registry.entries.push(DatasetEntry {
        config: target.config.clone(),
        samples: target.train.iter().chain(&target.test).cloned().collect(),
        role: DatasetRole::Target,
    });
    let configs: Vec<&TaskConfig> = registry.entries.iter().map(|e| &e.config).collect();
    let corpus_tokens: Vec<String> = corpus
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.surface.to_lowercase()))
        .collect();
    let vocab = build_vocabulary(&registry, &configs, corpus_tokens.iter(), 1)?;

    let candidates = extract_candidates(corpus.iter().flat_map(|s| s.tokens.iter()), 1)?;
    let words: Vec<String> = candidates.iter().map(|(w, _)| w.clone()).collect();
    let (repo, _) = build_okr(&words, &embeddings, 2, WORLD_SEED, 100, 1e-6, true)?;

    Ok(World {
        sources,
        target,
        corpus,
        vocab,
        repo,
    })
}

/// Compiles raw samples with a template/option/verbalizer choice drawn
/// uniformly at random per sample, so source training covers the whole
/// prompting space instead of memorizing one fixed triple.
fn compile_varied(
    samples: &[RawSample],
    config: &TaskConfig,
    vocab: &Vocabulary,
    no_options: bool,
    seed: u64,
) -> Result<Vec<AugmentedSample>> {
    let templates = config
        .templates
        .iter()
        .map(|t| parse_template(t))
        .collect::<Result<Vec<_>>>()?;
    let options = config
        .options
        .iter()
        .map(|o| parse_options(o, config.num_classes()))
        .collect::<Result<Vec<_>>>()?;
    let verbalizers = config
        .verbalizers
        .iter()
        .map(|v| Verbalizer::new(v, &config.class_labels))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seeded_rng(seed);
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = &templates[rng.gen_range(0..templates.len())];
            let o = &options[rng.gen_range(0..options.len())];
            let v = &verbalizers[rng.gen_range(0..verbalizers.len())];
            let compiled = if no_options {
                compile_sample_without_options(s, t, v, config, vocab, 1.0)
            } else {
                compile_sample(s, t, o, v, config, vocab, 1.0)
            };
            compiled.map_err(|e| Error::validation(format!("sample {i}: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Flavor {
    Full,
    WoPov,
    WoKsmlm,
    WoOkr,
}

fn model_config(world: &World, args: &SyntheticArgs) -> ModelConfig {
    ModelConfig {
        vocab_size: world.vocab.len(),
        dim: args.dim,
        layers: args.layers,
        heads: args.heads,
        max_len: 48,
        tie_output: true,
    }
}

fn train_multitask_flavor(
    world: &World,
    args: &SyntheticArgs,
    seed: u64,
    flavor: Flavor,
) -> Result<TinyMlm> {
    let no_options = flavor == Flavor::WoPov;
    let mut names = Vec::new();
    let mut pools = Vec::new();
    for (t_idx, task) in world.sources.iter().enumerate() {
        names.push(task.config.task_name.clone());
        pools.push(compile_varied(
            &task.train,
            &task.config,
            &world.vocab,
            no_options,
            derive_seed(seed, 11 + t_idx as u64),
        )?);
    }
    let sizes: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    let plan = SamplerPlan::new(names, sizes, args.gamma, MixMode::Stratified)?;

    let (ksmlm_pool, lambda) = if flavor == Flavor::WoKsmlm {
        (Vec::new(), 0.0)
    } else {
        let policy = if flavor == Flavor::WoOkr {
            AltPolicy::Uniform
        } else {
            AltPolicy::Dissimilar
        };
        let (examples, _) = synthesize_corpus(
            &world.corpus,
            &world.repo,
            &world.vocab,
            MaskMode::InSitu,
            policy,
            derive_seed(seed, 17),
            400,
        )?;
        (
            examples.into_iter().map(|e| e.sample).collect(),
            args.lambda,
        )
    };

    let mut model = TinyMlm::init(model_config(world, args), derive_seed(seed, 1))?;
    let mut cfg = TrainConfig::new(args.multitask_steps, derive_seed(seed, 2));
    cfg.batch_size = args.batch_size;
    cfg.learning_rate = args.learning_rate;
    cfg.lambda = lambda;
    cfg.grad_clip = Some(5.0);
    train(
        &mut model,
        &pools,
        &ksmlm_pool,
        &plan,
        KsmlmMix::LossMultiplier,
        &cfg,
    )?;
    Ok(model)
}

fn finetune_and_eval(
    world: &World,
    args: &SyntheticArgs,
    seed: u64,
    base: Option<&TinyMlm>,
    no_options: bool,
) -> Result<f64> {
    let target = &world.target;
    let spec = FewShotSpec {
        n: target.config.num_classes(),
        k: args.k_shots,
        seed: derive_seed(seed, 3),
    };
    let (train_raw, dev_raw) = few_shot_split(&target.train, &target.config.class_labels, &spec)?;
    let train_pool = compile_pool(
        &train_raw,
        &target.config,
        &world.vocab,
        0,
        0,
        0,
        no_options,
    )?;
    let dev_pool = compile_pool(&dev_raw, &target.config, &world.vocab, 0, 0, 0, no_options)?;
    let test_pool = compile_pool(
        &target.test,
        &target.config,
        &world.vocab,
        0,
        0,
        0,
        no_options,
    )?;

    let mut model = match base {
        Some(m) => m.clone(),
        None => TinyMlm::init(model_config(world, args), derive_seed(seed, 4))?,
    };
    let plan = SamplerPlan::new(
        vec![target.config.task_name.clone()],
        vec![train_pool.len()],
        args.gamma,
        MixMode::Stratified,
    )?;
    let mut cfg = TrainConfig::new(args.finetune_steps, derive_seed(seed, 5));
    cfg.batch_size = args.batch_size;
    cfg.learning_rate = args.learning_rate;
    cfg.lambda = 0.0;
    cfg.grad_clip = Some(5.0);
    train_selecting(&mut model, &[train_pool], &plan, &cfg, &dev_pool, 20)?;
    Ok(evaluate(&model, &test_pool)?.accuracy)
}

fn zero_shot_eval(world: &World, model: &TinyMlm) -> Result<f64> {
    let test_pool = compile_pool(
        &world.target.test,
        &world.target.config,
        &world.vocab,
        0,
        0,
        0,
        false,
    )?;
    Ok(evaluate(model, &test_pool)?.accuracy)
}

/// Runs every requested mode for one seed.
fn run_seed(
    world: &World,
    args: &SyntheticArgs,
    seed: u64,
    modes: &[BenchMode],
) -> Result<BTreeMap<BenchMode, f64>> {
    let mut flavors: BTreeMap<Flavor, TinyMlm> = BTreeMap::new();
    let need = |flavors: &mut BTreeMap<Flavor, TinyMlm>, flavor: Flavor| -> Result<TinyMlm> {
        if let std::collections::btree_map::Entry::Vacant(slot) = flavors.entry(flavor) {
            slot.insert(train_multitask_flavor(world, args, seed, flavor)?);
        }
        Ok(flavors[&flavor].clone())
    };
    let mut out = BTreeMap::new();
    for &mode in modes {
        let acc = match mode {
            BenchMode::Upt => {
                let base = need(&mut flavors, Flavor::Full)?;
                finetune_and_eval(world, args, seed, Some(&base), false)?
            }
            BenchMode::UptSingle => finetune_and_eval(world, args, seed, None, false)?,
            BenchMode::WoPov => {
                let base = need(&mut flavors, Flavor::WoPov)?;
                finetune_and_eval(world, args, seed, Some(&base), true)?
            }
            BenchMode::WoKsmlm => {
                let base = need(&mut flavors, Flavor::WoKsmlm)?;
                finetune_and_eval(world, args, seed, Some(&base), false)?
            }
            BenchMode::WoOkr => {
                let base = need(&mut flavors, Flavor::WoOkr)?;
                finetune_and_eval(world, args, seed, Some(&base), false)?
            }
            BenchMode::ZeroShot => {
                let base = need(&mut flavors, Flavor::Full)?;
                zero_shot_eval(world, &base)?
            }
        };
        out.insert(mode, acc);
    }
    Ok(out)
}

/// Runs the benchmark and writes `report.csv` and `report.txt` into the
/// output directory. Returns the mode rows plus a trailing analytic
/// `random` baseline row.
pub fn cmd_synthetic_benchmark(args: &SyntheticArgs) -> Result<Vec<ReportRow>> {
    if args.seeds.is_empty() {
        return Err(Error::validation("at least one seed required"));
    }
    let modes: Vec<BenchMode> = if args.modes.is_empty() {
        BenchMode::ALL.to_vec()
    } else {
        let mut m = args.modes.clone();
        m.sort();
        m.dedup();
        m
    };
    let threads = args.threads.max(1);
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let manifest = RunManifest::new(
        "synthetic-benchmark",
        args.seeds[0],
        serde_json::to_value(args)?,
    );

    let world = build_world()?;
    let mut per_seed: Vec<(u64, BTreeMap<BenchMode, f64>)> = Vec::new();
    let world_ref = &world;
    let modes_ref = &modes;
    for chunk in args.seeds.chunks(threads) {
        let results: Vec<Result<BTreeMap<BenchMode, f64>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| scope.spawn(move || run_seed(world_ref, args, seed, modes_ref)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("benchmark worker panicked"))
                .collect()
        });
        for (&seed, result) in chunk.iter().zip(results) {
            per_seed.push((seed, result?));
        }
    }

    let task = world.target.config.task_name.clone();
    let mut rows = Vec::new();
    for &mode in &modes {
        let accs: Vec<f64> = per_seed.iter().map(|(_, m)| m[&mode]).collect();
        rows.push(ReportRow::new(
            &task,
            mode.label(),
            args.seeds.clone(),
            accs,
        ));
    }
    let chance = 1.0 / world.target.config.num_classes() as f64;
    rows.push(ReportRow::new(
        &task,
        "random",
        args.seeds.clone(),
        vec![chance; args.seeds.len()],
    ));

    let csv_path = args.out_dir.join("report.csv");
    write_report_csv(&csv_path, &rows)?;
    let table = render_report_table(&rows);
    let table_path = args.out_dir.join("report.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    print!("{table}");
    manifest.finish(&csv_path)?;
    Ok(rows)
}
