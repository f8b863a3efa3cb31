//! End-to-end acceptance suite: nine numbered checks covering the weight
//! formula, mixture sampling, gradient fidelity, loss identities, repository
//! queries, synthesized-example well-formedness, golden compilation output,
//! the synthetic transfer benchmark, and artifact determinism.
//!
//! Each check prints one `acceptance N/9 ...: PASS` line on success (visible
//! with `--nocapture`); a failed assertion marks the corresponding check as
//! failed.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use upt_core::data_model::{build_vocabulary, DatasetRegistry};
use upt_core::ksmlm::{synthesize, AltPolicy, MaskMode, SynthOutcome};
use upt_core::okr::{build_okr, cosine, query_dissimilar, OkrEntry, TaggedSentence, TaggedToken};
use upt_core::pipeline::synthetic::{cmd_synthetic_benchmark, BenchMode, SyntheticArgs};
use upt_core::pipeline::{synthetic_gradcheck_batch, GradCheckArgs};
use upt_core::sampler::{dataset_weights, draw_batch, KsmlmMix, MixMode, SamplerPlan};
use upt_core::tiny_mlm::{
    combine_losses, grad_check, grad_check_scaled, loss_supervised, total_loss,
};
use upt_core::{seeded_rng, AugmentedSample, ModelConfig, OkrRepository, TinyMlm, Vocabulary};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_upt-forge")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn assert_within(start: Instant, budget: Duration, what: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed < budget,
        "{what} took {elapsed:?}, budget {budget:?}"
    );
}

// ---- 1: weight formula ----

#[test]
fn acceptance_1_weight_formula() {
    let start = Instant::now();

    // Oracle computed independently with 40-digit arbitrary-precision
    // arithmetic: w = (ln s_k + gamma) / (M gamma + sum ln s_j). The extra
    // digits are deliberate; they round to the nearest f64.
    #[allow(clippy::excessive_precision)]
    let oracle = [0.2500542750245660693747742, 0.7499457249754339306252258];
    let w = dataset_weights(&[10, 1000], 0.001).unwrap();
    assert!((w[0] - oracle[0]).abs() < 1e-12);
    assert!((w[1] - oracle[1]).abs() < 1e-12);
    assert!((w[0] - 0.25005).abs() < 1e-4);
    assert!((w[1] - 0.74995).abs() < 1e-4);

    let mut rng = seeded_rng(1);
    for case in 0..1000 {
        let m = rng.gen_range(1..=10);
        let sizes: Vec<usize> = (0..m).map(|_| rng.gen_range(1..1_000_000)).collect();
        let gamma = 10f64.powf(rng.gen_range(-4.0..1.0));
        let w = dataset_weights(&sizes, gamma).unwrap();
        let sum: f64 = w.iter().sum();
        assert!(
            (sum - 1.0).abs() < 1e-9,
            "case {case}: weights sum to {sum}"
        );
        // element-wise against a direct re-evaluation of the formula
        let denom = m as f64 * gamma + sizes.iter().map(|&s| (s as f64).ln()).sum::<f64>();
        for (k, &wk) in w.iter().enumerate() {
            let expect = ((sizes[k] as f64).ln() + gamma) / denom;
            assert!((wk - expect).abs() < 1e-12);
        }
    }

    assert_within(start, Duration::from_secs(1), "weight formula check");
    println!("acceptance 1/9 (dataset weight formula vs arbitrary-precision oracle): PASS");
}

// ---- 2: stratified sampling ----

fn dummy_sample(dataset: &str) -> AugmentedSample {
    AugmentedSample {
        token_ids: vec![3, 2, 4],
        mask_index: 1,
        candidate_word_ids: vec![5, 6],
        target_word_id: 5,
        gold_label_index: 0,
        source_dataset: dataset.to_string(),
        weight: 1.0,
    }
}

#[test]
fn acceptance_2_stratified_sampling_frequencies() {
    let start = Instant::now();
    let sizes = [50usize, 500, 5000];
    let names: Vec<String> = (0..3).map(|i| format!("d{i}")).collect();
    let pools: Vec<Vec<AugmentedSample>> = names
        .iter()
        .zip(sizes)
        .map(|(n, s)| vec![dummy_sample(n); s])
        .collect();
    let plan = SamplerPlan::new(names.clone(), sizes.to_vec(), 0.001, MixMode::Stratified).unwrap();

    let n_draws = 100_000usize;
    let mut counts = [0usize; 3];
    let mut rng = seeded_rng(7);
    for _ in 0..(n_draws / 1000) {
        let batch =
            draw_batch(&pools, &[], &plan, KsmlmMix::LossMultiplier, 1000, &mut rng).unwrap();
        for s in &batch.supervised {
            let i = names.iter().position(|n| *n == s.source_dataset).unwrap();
            counts[i] += 1;
        }
    }
    assert_eq!(counts.iter().sum::<usize>(), n_draws);

    let mut chi2 = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let p = plan.weights[i];
        let expect = n_draws as f64 * p;
        let sigma = (n_draws as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (c as f64 - expect).abs() <= 3.0 * sigma,
            "dataset {i}: {c} draws, expected {expect:.1} +- {:.1}",
            3.0 * sigma
        );
        chi2 += (c as f64 - expect) * (c as f64 - expect) / expect;
    }
    let p_value = 1.0 - ChiSquared::new(2.0).unwrap().cdf(chi2);
    assert!(p_value > 0.001, "chi-square {chi2:.3} -> p {p_value:.5}");

    assert_within(start, Duration::from_secs(10), "stratified sampling check");
    println!("acceptance 2/9 (stratified mixture frequencies, 3-sigma + chi-square): PASS");
}

// ---- 3: gradient fidelity ----

#[test]
fn acceptance_3_gradient_fidelity_and_fault_detection() {
    let start = Instant::now();
    let args = GradCheckArgs::default();
    assert_eq!((args.vocab_size, args.dim, args.layers), (60, 32, 2));
    let config = ModelConfig {
        vocab_size: args.vocab_size,
        dim: args.dim,
        layers: args.layers,
        heads: args.heads,
        max_len: args.seq_len + 4,
        tie_output: true,
    };
    let model = TinyMlm::init(config, args.seed).unwrap();
    let batch = synthetic_gradcheck_batch(args.vocab_size, args.seq_len, args.batch, args.seed + 1);

    let report = grad_check(&model, &batch, args.epsilon, args.subset, args.seed + 2).unwrap();
    assert!(
        report.max_rel_err < 1e-4,
        "max relative error {:.3e} (worst {} [{}])",
        report.max_rel_err,
        report.worst_span,
        report.worst_index
    );

    let faulty = grad_check_scaled(
        &model,
        &batch,
        args.epsilon,
        args.subset,
        args.seed + 2,
        2.0,
    )
    .unwrap();
    assert!(
        faulty.max_rel_err > 0.1,
        "2x-scaled gradients went undetected: {:.3e}",
        faulty.max_rel_err
    );

    assert_within(start, Duration::from_secs(60), "gradient check");
    println!("acceptance 3/9 (analytic vs central-difference gradients + fault detection): PASS");
}

// ---- 4: loss identities ----

#[test]
fn acceptance_4_loss_identities() {
    let config = ModelConfig {
        vocab_size: 40,
        dim: 16,
        layers: 1,
        heads: 2,
        max_len: 16,
        tie_output: true,
    };
    let model = TinyMlm::init(config, 5).unwrap();
    let supervised = synthetic_gradcheck_batch(40, 8, 4, 6);
    let ksmlm = synthetic_gradcheck_batch(40, 8, 4, 7);

    // lambda = 0 is bit-equal to the supervised loss alone
    let l_sup = loss_supervised(&model, &supervised, false).unwrap();
    let report = total_loss(&model, &supervised, &ksmlm, 0.0, false).unwrap();
    assert_eq!(report.l_total.to_bits(), l_sup.to_bits());

    // hand-set terms
    assert!((combine_losses(1.0, Some(2.0), 0.1) - 1.2).abs() < 1e-12);

    // uniform weights 1/M scale the unweighted loss by 1/M
    let m = 4.0;
    let mut uniform = supervised.clone();
    for s in uniform.iter_mut() {
        s.weight = 1.0 / m;
    }
    let weighted = loss_supervised(&model, &uniform, true).unwrap();
    let unweighted = loss_supervised(&model, &uniform, false).unwrap();
    assert!((weighted - unweighted / m).abs() < 1e-9);

    println!("acceptance 4/9 (combined-loss identities): PASS");
}

// ---- 5: repository correctness ----

fn random_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn acceptance_5_okr_queries_and_clustering() {
    let start = Instant::now();

    // query_dissimilar vs an exhaustive cosine scan on 1,000 random repos
    let mut rng = seeded_rng(21);
    for case in 0..1000 {
        let k = rng.gen_range(2..=5);
        let dim = rng.gen_range(2..=5);
        let n = rng.gen_range(k..=16);
        let centroids: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, dim)).collect();
        let entries: Vec<OkrEntry> = (0..n)
            .map(|i| OkrEntry {
                word: format!("w{i}"),
                vector: random_vec(&mut rng, dim),
                cluster: rng.gen_range(0..k),
            })
            .collect();
        let repo = OkrRepository {
            k,
            dim,
            normalized: false,
            build_seed: 0,
            centroids: centroids.clone(),
            entries: entries.clone(),
        };
        let word = format!("w{}", rng.gen_range(0..n));
        let got = query_dissimilar(&repo, &word).unwrap();
        let vector = &entries.iter().find(|e| e.word == word).unwrap().vector;
        let sims: Vec<f64> = centroids.iter().map(|c| cosine(vector, c)).collect();
        let expect = sims
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .unwrap()
            .0;
        assert_eq!(got, expect, "case {case}: {sims:?}");
    }

    // SSE monotone over the iteration budget (same seed, same init)
    let mut rng = seeded_rng(22);
    let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
    let embeddings: HashMap<String, Vec<f64>> = words
        .iter()
        .map(|w| (w.clone(), random_vec(&mut rng, 4)))
        .collect();
    let mut prev = f64::INFINITY;
    for iters in 1..=8 {
        let (_, stats) = build_okr(&words, &embeddings, 3, 9, iters, 1e-12, false).unwrap();
        assert!(
            stats.final_sse <= prev + 1e-9,
            "SSE rose from {prev} to {} at {iters} iterations",
            stats.final_sse
        );
        prev = stats.final_sse;
    }

    // fixed point: converged assignments agree with a fresh nearest-centroid pass
    let (repo, _) = build_okr(&words, &embeddings, 3, 9, 200, 1e-9, false).unwrap();
    for entry in &repo.entries {
        let nearest = repo
            .centroids
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da: f64 = a
                    .iter()
                    .zip(&entry.vector)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                let db: f64 = b
                    .iter()
                    .zip(&entry.vector)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
            .0;
        assert_eq!(
            entry.cluster, nearest,
            "word {} not at fixed point",
            entry.word
        );
    }

    // 4-point / k=2 oracle: the brute-force best partition is {a,b} | {c,d}
    let words: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
    let embeddings: HashMap<String, Vec<f64>> = [
        ("a", vec![0.0, 0.0]),
        ("b", vec![0.1, 0.0]),
        ("c", vec![10.0, 10.0]),
        ("d", vec![10.1, 10.0]),
    ]
    .iter()
    .map(|(w, v)| (w.to_string(), v.clone()))
    .collect();
    let (repo, _) = build_okr(&words, &embeddings, 2, 3, 100, 1e-9, false).unwrap();
    let cluster_of = |w: &str| repo.entry(w).unwrap().cluster;
    assert_eq!(cluster_of("a"), cluster_of("b"));
    assert_eq!(cluster_of("c"), cluster_of("d"));
    assert_ne!(cluster_of("a"), cluster_of("c"));

    assert_within(start, Duration::from_secs(30), "repository check");
    println!("acceptance 5/9 (dissimilar-cluster queries + k-means invariants): PASS");
}

// ---- 6: synthesized-example well-formedness ----

const POS: [&str; 6] = ["good", "great", "fine", "solid", "lovely", "neat"];
const NEG: [&str; 6] = ["bad", "poor", "awful", "dull", "weak", "bleak"];

fn polarity_repo_and_vocab() -> (OkrRepository, Vocabulary) {
    let mut rng = seeded_rng(31);
    let mut embeddings = HashMap::new();
    for (pool, sign) in [(POS, 1.0), (NEG, -1.0)] {
        for w in pool {
            let mut v = vec![sign, 0.0, 0.0];
            for x in v.iter_mut() {
                *x += 0.01 * (rng.gen::<f64>() - 0.5);
            }
            embeddings.insert(w.to_string(), v);
        }
    }
    let words: Vec<String> = POS
        .iter()
        .chain(NEG.iter())
        .map(|s| s.to_string())
        .collect();
    let (repo, _) = build_okr(&words, &embeddings, 2, 31, 100, 1e-9, true).unwrap();

    let registry = DatasetRegistry::default();
    let fillers = [
        "the", "a", "movie", "book", "meal", "it", "is", "or", "?", ".",
    ];
    let vocab = build_vocabulary(
        &registry,
        &[],
        words.iter().map(|s| s.as_str()).chain(fillers),
        1,
    )
    .unwrap();
    (repo, vocab)
}

#[test]
fn acceptance_6_ksmlm_well_formedness() {
    let start = Instant::now();
    let (repo, vocab) = polarity_repo_and_vocab();
    let nouns = ["movie", "book", "meal"];
    let dets = ["the", "a"];

    let mut rng = seeded_rng(32);
    let mut gold_zero = 0usize;
    let n_examples = 10_000usize;
    for i in 0..n_examples {
        let pool = if rng.gen_bool(0.5) { POS } else { NEG };
        let adj = pool[rng.gen_range(0..pool.len())];
        let sentence = TaggedSentence {
            sentence_id: i as u64,
            tokens: vec![
                TaggedToken {
                    surface: dets[rng.gen_range(0..dets.len())].into(),
                    pos: "DET".into(),
                },
                TaggedToken {
                    surface: adj.into(),
                    pos: "ADJ".into(),
                },
                TaggedToken {
                    surface: nouns[rng.gen_range(0..nouns.len())].into(),
                    pos: "NOUN".into(),
                },
            ],
        };
        let mode = if i % 2 == 0 {
            MaskMode::InSitu
        } else {
            MaskMode::Appended
        };
        let outcome = synthesize(
            &sentence,
            &repo,
            &vocab,
            mode,
            AltPolicy::Dissimilar,
            &mut rng,
        )
        .unwrap();
        let example = match outcome {
            SynthOutcome::Example(e) => e,
            other => panic!("sentence {i} produced no example: {other:?}"),
        };
        let s = &example.sample;

        // exactly one mask, at the recorded index
        let masks: Vec<usize> = s
            .token_ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == vocab.mask_id())
            .map(|(p, _)| p)
            .collect();
        assert_eq!(masks, vec![s.mask_index], "example {i}");

        // target among the two candidates, gold index consistent
        assert_eq!(s.candidate_word_ids.len(), 2);
        assert!(s.candidate_word_ids.contains(&s.target_word_id));
        assert_eq!(s.candidate_word_ids[s.gold_label_index], s.target_word_id);

        // leak-freedom: the true word appears exactly once, and only in the
        // option expression after the mask
        let occurrences: Vec<usize> = s
            .token_ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == s.target_word_id)
            .map(|(p, _)| p)
            .collect();
        assert_eq!(occurrences.len(), 1, "example {i}: true word leaked");
        assert!(
            occurrences[0] > s.mask_index,
            "example {i}: true word before mask"
        );

        if s.gold_label_index == 0 {
            gold_zero += 1;
        }
    }

    // slot balance: 0.5 within 3 sigma over 10,000 draws
    let sigma = (n_examples as f64 * 0.25).sqrt();
    let expect = n_examples as f64 * 0.5;
    assert!(
        (gold_zero as f64 - expect).abs() <= 3.0 * sigma,
        "true word took slot 1 in {gold_zero} of {n_examples} examples"
    );

    assert_within(start, Duration::from_secs(30), "well-formedness check");
    println!("acceptance 6/9 (synthesized cloze well-formedness + slot balance): PASS");
}

// ---- 7: golden compilation output ----

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("failed to launch upt-forge");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn acceptance_7_golden_compilation() {
    let dir = tempfile::tempdir().unwrap();
    let vocab_path = dir.path().join("vocab.json");
    let compiled = dir.path().join("compiled.jsonl");
    let no_options = dir.path().join("no_options.jsonl");

    run_ok(Command::new(bin()).args([
        "compile",
        "--task-config",
        fixture("sst2_task.json").to_str().unwrap(),
        "--dataset",
        fixture("sst2_train.jsonl").to_str().unwrap(),
        "--vocab",
        vocab_path.to_str().unwrap(),
        "--build-vocab",
        "--output",
        compiled.to_str().unwrap(),
        "--seed",
        "0",
    ]));
    run_ok(Command::new(bin()).args([
        "compile",
        "--task-config",
        fixture("sst2_task.json").to_str().unwrap(),
        "--dataset",
        fixture("sst2_train.jsonl").to_str().unwrap(),
        "--vocab",
        vocab_path.to_str().unwrap(),
        "--output",
        no_options.to_str().unwrap(),
        "--no-options",
        "--seed",
        "0",
    ]));

    for (got, want) in [
        (&vocab_path, "golden/sst2_vocab.json"),
        (&compiled, "golden/sst2_compiled.jsonl"),
        (&no_options, "golden/sst2_compiled_no_options.jsonl"),
    ] {
        let got_bytes = std::fs::read(got).unwrap();
        let want_bytes = std::fs::read(fixture(want)).unwrap();
        assert_eq!(
            got_bytes, want_bytes,
            "{want} differs from the fresh output"
        );
    }

    // the no-options sequences contain no option text and no label words
    let vocab = Vocabulary::load(&vocab_path).unwrap();
    let option_ids: Vec<usize> = ["or", "?"].iter().filter_map(|t| vocab.id(t)).collect();
    let text = std::fs::read_to_string(&no_options).unwrap();
    for line in text.lines().skip(1) {
        let s: AugmentedSample = serde_json::from_str(line).unwrap();
        for &id in &s.token_ids {
            assert!(
                !option_ids.contains(&id),
                "option token in no-options output"
            );
            assert!(
                !s.candidate_word_ids.contains(&id),
                "label word in no-options output"
            );
        }
    }

    println!("acceptance 7/9 (byte-exact golden compilation + option-free ablation): PASS");
}

// ---- 8: synthetic transfer benchmark ----

#[test]
fn acceptance_8_synthetic_transfer_benchmark() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let args = SyntheticArgs {
        out_dir: dir.path().to_path_buf(),
        modes: vec![BenchMode::Upt, BenchMode::UptSingle, BenchMode::ZeroShot],
        ..SyntheticArgs::default()
    };
    let rows = cmd_synthetic_benchmark(&args).unwrap();
    let mean = |label: &str| {
        rows.iter()
            .find(|r| r.mode == label)
            .unwrap_or_else(|| panic!("missing row {label}"))
            .mean
    };
    let upt = mean("UPT");
    let single = mean("UPT-Single");
    let zero_shot = mean("zero-shot");
    let random = mean("random");

    assert!((random - 0.5).abs() < 1e-12);
    assert!(
        upt >= single && single >= random,
        "ordering violated: UPT {upt:.4}, UPT-Single {single:.4}, random {random:.4}"
    );
    assert!(
        zero_shot >= random + 0.10,
        "zero-shot {zero_shot:.4} not 10 points over chance {random:.4}"
    );

    // regression floors pinned from the first verified run (5 seeds, default
    // configuration: 0.9817 / 0.9267 / 0.8133); the pipeline is seed-
    // deterministic, so genuine changes are the only way to move these.
    assert!(upt >= 0.97, "UPT regressed: {upt:.4}");
    assert!(single >= 0.91, "UPT-Single regressed: {single:.4}");
    assert!(
        upt >= single + 0.04,
        "UPT lead regressed: {upt:.4} vs {single:.4}"
    );
    assert!(zero_shot >= 0.78, "zero-shot regressed: {zero_shot:.4}");

    assert_within(start, Duration::from_secs(600), "synthetic benchmark");
    println!(
        "acceptance 8/9 (transfer ordering + zero-shot margin on the synthetic benchmark): PASS"
    );
}

// ---- 9: determinism ----

fn write_fixture_corpus(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let corpus = dir.join("corpus.jsonl");
    let embeddings = dir.join("embeddings.txt");
    let dataset = dir.join("train.jsonl");
    let task = dir.join("task.json");

    let mut rng = seeded_rng(41);
    let mut corpus_lines = String::new();
    let nouns = ["movie", "book", "meal"];
    for i in 0..60u64 {
        let pool = if rng.gen_bool(0.5) { POS } else { NEG };
        let sentence = TaggedSentence {
            sentence_id: i,
            tokens: vec![
                TaggedToken {
                    surface: "the".into(),
                    pos: "DET".into(),
                },
                TaggedToken {
                    surface: pool[rng.gen_range(0..pool.len())].into(),
                    pos: "ADJ".into(),
                },
                TaggedToken {
                    surface: nouns[rng.gen_range(0..nouns.len())].into(),
                    pos: "NOUN".into(),
                },
            ],
        };
        corpus_lines.push_str(&serde_json::to_string(&sentence).unwrap());
        corpus_lines.push('\n');
    }
    std::fs::write(&corpus, corpus_lines).unwrap();

    let mut emb_lines = String::new();
    for (pool, sign) in [(POS, 1.0f64), (NEG, -1.0)] {
        for w in pool {
            emb_lines.push_str(&format!(
                "{w} {:.6} {:.6} {:.6}\n",
                sign,
                0.01 * rng.gen::<f64>(),
                0.01 * rng.gen::<f64>()
            ));
        }
    }
    std::fs::write(&embeddings, emb_lines).unwrap();

    let mut data_lines = String::new();
    for i in 0..16 {
        let positive = i % 2 == 0;
        let pool = if positive { POS } else { NEG };
        let label = if positive { "positive" } else { "negative" };
        data_lines.push_str(&format!(
            "{{\"text_a\": \"the {} {}\", \"label\": \"{label}\"}}\n",
            pool[i % pool.len()],
            nouns[i % nouns.len()]
        ));
    }
    std::fs::write(&dataset, data_lines).unwrap();

    std::fs::write(
        &task,
        r#"{
  "task_name": "toy",
  "class_labels": ["negative", "positive"],
  "templates": ["[<s1>]. It was [MASK]."],
  "options": ["Is it <x1> or <x2>?"],
  "verbalizers": [{ "negative": "bad", "positive": "good" }]
}"#,
    )
    .unwrap();
    (corpus, embeddings, dataset, task)
}

fn run_chain(dir: &Path, inputs: &(PathBuf, PathBuf, PathBuf, PathBuf)) -> Vec<PathBuf> {
    let (corpus, embeddings, dataset, task) = inputs;
    std::fs::create_dir_all(dir).unwrap();
    let p = |name: &str| dir.join(name);

    run_ok(Command::new(bin()).args([
        "build-okr",
        "--corpus",
        corpus.to_str().unwrap(),
        "--embeddings",
        embeddings.to_str().unwrap(),
        "--output",
        p("okr.json").to_str().unwrap(),
        "--clusters",
        "2",
        "--seed",
        "5",
    ]));
    run_ok(Command::new(bin()).args([
        "compile",
        "--task-config",
        task.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--vocab",
        p("vocab.json").to_str().unwrap(),
        "--build-vocab",
        "--output",
        p("pool.jsonl").to_str().unwrap(),
        "--seed",
        "5",
    ]));
    run_ok(Command::new(bin()).args([
        "compile",
        "--mode",
        "ksmlm",
        "--dataset",
        corpus.to_str().unwrap(),
        "--okr",
        p("okr.json").to_str().unwrap(),
        "--vocab",
        p("vocab.json").to_str().unwrap(),
        "--output",
        p("ksmlm.jsonl").to_str().unwrap(),
        "--budget",
        "40",
        "--seed",
        "5",
    ]));
    run_ok(Command::new(bin()).args([
        "train-multitask",
        "--pool",
        p("pool.jsonl").to_str().unwrap(),
        "--ksmlm-pool",
        p("ksmlm.jsonl").to_str().unwrap(),
        "--vocab",
        p("vocab.json").to_str().unwrap(),
        "--output",
        p("multitask.json").to_str().unwrap(),
        "--curve",
        p("multitask_curve.csv").to_str().unwrap(),
        "--steps",
        "8",
        "--batch-size",
        "4",
        "--dim",
        "16",
        "--layers",
        "1",
        "--heads",
        "2",
        "--seed",
        "5",
    ]));
    run_ok(Command::new(bin()).args([
        "finetune",
        "--task-config",
        task.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--vocab",
        p("vocab.json").to_str().unwrap(),
        "--from-checkpoint",
        p("multitask.json").to_str().unwrap(),
        "--output",
        p("finetuned.json").to_str().unwrap(),
        "--curve",
        p("finetune_curve.csv").to_str().unwrap(),
        "--k-shots",
        "2",
        "--steps",
        "6",
        "--batch-size",
        "4",
        "--eval-every",
        "3",
        "--seed",
        "5",
    ]));
    run_ok(Command::new(bin()).args([
        "evaluate",
        "--checkpoint",
        p("finetuned.json").to_str().unwrap(),
        "--data",
        p("pool.jsonl").to_str().unwrap(),
        "--mode-label",
        "toy",
        "--csv",
        p("report.csv").to_str().unwrap(),
        "--seed",
        "5",
    ]));

    [
        "okr.json",
        "vocab.json",
        "pool.jsonl",
        "ksmlm.jsonl",
        "multitask.json",
        "multitask_curve.csv",
        "finetuned.json",
        "finetune_curve.csv",
        "report.csv",
    ]
    .iter()
    .map(|n| p(n))
    .collect()
}

#[test]
fn acceptance_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = write_fixture_corpus(dir.path());
    let first = run_chain(&dir.path().join("run1"), &inputs);
    let second = run_chain(&dir.path().join("run2"), &inputs);

    // manifests carry timestamps and are metadata; every other artifact must
    // be byte-identical
    for (a, b) in first.iter().zip(&second) {
        let ba = std::fs::read(a).unwrap();
        let bb = std::fs::read(b).unwrap();
        assert_eq!(
            ba,
            bb,
            "artifact {} differs between identical runs",
            a.file_name().unwrap().to_string_lossy()
        );
    }

    println!("acceptance 9/9 (byte-identical artifacts across repeated runs): PASS");
}
