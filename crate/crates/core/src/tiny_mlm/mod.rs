//! A small trainable masked language model: pre-norm transformer encoder,
//! flat `f64` parameter storage, hand-written backward pass, Adam, and a
//! finite-difference gradient checker.

mod net;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::Vocabulary;
use crate::error::{Error, Result};
use crate::okr::save_embeddings;
use crate::pov_engine::AugmentedSample;
use crate::sampler::{draw_batch, KsmlmMix, MixMode, SamplerPlan};
use crate::seeded_rng;

pub use net::Layout;

fn default_dim() -> usize {
    64
}
fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    2
}
fn default_max_len() -> usize {
    128
}
fn default_tie() -> bool {
    true
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_tie")]
    pub tie_output: bool,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            dim: default_dim(),
            layers: default_layers(),
            heads: default_heads(),
            max_len: default_max_len(),
            tie_output: default_tie(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::validation("vocab_size must be positive"));
        }
        if self.max_len == 0 {
            return Err(Error::validation("max_len must be positive"));
        }
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::validation(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Scores and normalized probabilities over the full vocabulary at the mask
/// position.
#[derive(Debug, Clone)]
pub struct PredictionDistribution {
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// The model: config, layout, and one flat parameter vector.
#[derive(Debug, Clone)]
pub struct TinyMlm {
    pub config: ModelConfig,
    layout: Layout,
    pub params: Vec<f64>,
}

const INIT_STD: f64 = 0.02;

impl TinyMlm {
    /// Fresh model with seeded Gaussian(0, 0.02) weight matrices and
    /// embeddings, zero biases, and unit layer-norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config)?;
        let mut rng = seeded_rng(seed);
        let mut params = vec![0.0; layout.total];
        let mut fill_normal = |slice: std::ops::Range<usize>, params: &mut [f64]| {
            for p in &mut params[slice] {
                *p = INIT_STD * normal_sample(&mut rng);
            }
        };
        for (name, range) in layout.spans() {
            let leaf = name.rsplit('.').next().unwrap();
            match leaf {
                "tok_emb" | "pos_emb" | "wq" | "wk" | "wv" | "wo" | "w1" | "w2" | "out_w" => {
                    fill_normal(range, &mut params)
                }
                "ln1_g" | "ln2_g" | "lnf_g" => {
                    for p in &mut params[range] {
                        *p = 1.0;
                    }
                }
                _ => {} // biases stay zero
            }
        }
        Ok(TinyMlm {
            config,
            layout,
            params,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Predicts the full-vocabulary distribution at a sample's mask slot.
    pub fn forward(&self, sample: &AugmentedSample) -> Result<PredictionDistribution> {
        if sample.mask_index >= sample.token_ids.len() {
            return Err(Error::validation(format!(
                "mask index {} out of range for sequence of length {}",
                sample.mask_index,
                sample.token_ids.len()
            )));
        }
        let cache = net::forward_hidden(&self.layout, &self.params, &sample.token_ids)?;
        let scores = net::scores_at(&self.layout, &self.params, &cache, sample.mask_index);
        let probs = softmax(&scores);
        Ok(PredictionDistribution { scores, probs })
    }

    /// Token-embedding rows for every content token, in vocabulary order,
    /// written in the plain-text embedding format.
    pub fn export_embeddings(&self, vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
        if vocab.len() != self.config.vocab_size {
            return Err(Error::validation(format!(
                "vocabulary size {} does not match model vocab_size {}",
                vocab.len(),
                self.config.vocab_size
            )));
        }
        let d = self.config.dim;
        let rows: Vec<(String, Vec<f64>)> = vocab
            .content_tokens()
            .map(|(id, tok)| {
                let at = self.layout.tok_emb + id * d;
                (tok.to_string(), self.params[at..at + d].to_vec())
            })
            .collect();
        save_embeddings(path, &rows)
    }

    pub fn save(&self, path: impl AsRef<Path>, vocab_hash: &str) -> Result<()> {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab_hash: vocab_hash.to_string(),
            params: self.params.clone(),
        };
        let path = path.as_ref();
        let json = serde_json::to_string(&ckpt)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint, returning the model and the vocabulary hash it
    /// was trained against.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::validation(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.config.validate()?;
        let layout = Layout::new(&ckpt.config)?;
        if ckpt.params.len() != layout.total {
            return Err(Error::validation(format!(
                "checkpoint holds {} parameters, layout expects {}",
                ckpt.params.len(),
                layout.total
            )));
        }
        Ok((
            TinyMlm {
                config: ckpt.config,
                layout,
                params: ckpt.params,
            },
            ckpt.vocab_hash,
        ))
    }
}

fn normal_sample(rng: &mut impl Rng) -> f64 {
    // Box-Muller; keeps rand_chacha the only RNG dependency.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    vocab_hash: String,
    params: Vec<f64>,
}

// ---- losses ----

/// Per-batch loss decomposition.
#[derive(Debug, Clone, Copy)]
pub struct LossReport {
    pub l_supervised: f64,
    /// Absent when no KSMLM examples entered the step.
    pub l_ksmlm: Option<f64>,
    pub l_total: f64,
}

/// `L_sup + lambda * L_ksmlm`; with `lambda == 0` or no KSMLM term the
/// result is bit-identical to the supervised loss alone.
pub fn combine_losses(l_supervised: f64, l_ksmlm: Option<f64>, lambda: f64) -> f64 {
    match l_ksmlm {
        Some(lk) if lambda != 0.0 => l_supervised + lambda * lk,
        _ => l_supervised,
    }
}

/// Mean masked-prediction cross-entropy over a batch; with `weighted`, each
/// term is scaled by the sample's mixture weight.
pub fn loss_supervised(model: &TinyMlm, batch: &[AugmentedSample], weighted: bool) -> Result<f64> {
    batch_loss(&model.layout, &model.params, batch, weighted, 1.0, None)
}

/// Mean cross-entropy over KSMLM examples (always unweighted: synthesized
/// examples carry weight 1).
pub fn loss_ksmlm(model: &TinyMlm, batch: &[AugmentedSample]) -> Result<f64> {
    batch_loss(&model.layout, &model.params, batch, false, 1.0, None)
}

/// Combined objective for one step.
pub fn total_loss(
    model: &TinyMlm,
    supervised: &[AugmentedSample],
    ksmlm: &[AugmentedSample],
    lambda: f64,
    weighted: bool,
) -> Result<LossReport> {
    let l_sup = loss_supervised(model, supervised, weighted)?;
    let l_ks = if ksmlm.is_empty() {
        None
    } else {
        Some(loss_ksmlm(model, ksmlm)?)
    };
    Ok(LossReport {
        l_supervised: l_sup,
        l_ksmlm: l_ks,
        l_total: combine_losses(l_sup, l_ks, lambda),
    })
}

/// Loss over a batch; when `grads` is given, also accumulates
/// `scale * d(loss)/d(params)` into it.
fn batch_loss(
    layout: &Layout,
    params: &[f64],
    batch: &[AugmentedSample],
    weighted: bool,
    scale: f64,
    mut grads: Option<&mut [f64]>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for sample in batch {
        if sample.target_word_id >= layout.vocab {
            return Err(Error::validation(format!(
                "target word id {} outside vocabulary of size {}",
                sample.target_word_id, layout.vocab
            )));
        }
        let w = if weighted { sample.weight } else { 1.0 };
        let cache = net::forward_hidden(layout, params, &sample.token_ids)?;
        let scores = net::scores_at(layout, params, &cache, sample.mask_index);
        let probs = softmax(&scores);
        let p = probs[sample.target_word_id];
        loss += w * inv_b * -(p.max(f64::MIN_POSITIVE)).ln();
        if let Some(g) = grads.as_deref_mut() {
            let coeff = scale * w * inv_b;
            let mut dscores = probs;
            dscores[sample.target_word_id] -= 1.0;
            for ds in dscores.iter_mut() {
                *ds *= coeff;
            }
            net::backward_from_scores(layout, params, &cache, sample.mask_index, &dscores, g);
        }
    }
    Ok(loss)
}

/// One training step's loss report plus the analytic gradient of the
/// combined objective.
pub fn loss_and_grads(
    model: &TinyMlm,
    supervised: &[AugmentedSample],
    ksmlm: &[AugmentedSample],
    lambda: f64,
    weighted: bool,
) -> Result<(LossReport, Vec<f64>)> {
    let mut grads = vec![0.0; model.params.len()];
    let l_sup = batch_loss(
        &model.layout,
        &model.params,
        supervised,
        weighted,
        1.0,
        Some(&mut grads),
    )?;
    let l_ks = if ksmlm.is_empty() || lambda == 0.0 {
        None
    } else {
        Some(batch_loss(
            &model.layout,
            &model.params,
            ksmlm,
            false,
            lambda,
            Some(&mut grads),
        )?)
    };
    Ok((
        LossReport {
            l_supervised: l_sup,
            l_ksmlm: l_ks,
            l_total: combine_losses(l_sup, l_ks, lambda),
        },
        grads,
    ))
}

// ---- gradient checking ----

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub worst_span: String,
    pub worst_index: usize,
}

/// Central-difference gradient check of the supervised loss on a seeded,
/// span-stratified parameter subset. Returns the worst relative error
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    model: &TinyMlm,
    batch: &[AugmentedSample],
    epsilon: f64,
    subset: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    grad_check_scaled(model, batch, epsilon, subset, seed, 1.0)
}

/// Like [`grad_check`] but scales the analytic gradients first; scales
/// other than 1 should blow up the reported error, which verifies the
/// checker can actually detect a wrong gradient.
pub fn grad_check_scaled(
    model: &TinyMlm,
    batch: &[AugmentedSample],
    epsilon: f64,
    subset: usize,
    seed: u64,
    analytic_scale: f64,
) -> Result<GradCheckReport> {
    if subset == 0 {
        return Err(Error::validation("gradient-check subset must be positive"));
    }
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::validation(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let (_, grads) = loss_and_grads(model, batch, &[], 0.0, false)?;
    let spans = model.layout.spans();
    let total = model.params.len();
    let mut rng = seeded_rng(seed);
    // Per-span quota proportional to size, at least 2 (or the whole span).
    let mut picks: Vec<(usize, usize)> = Vec::new(); // (span idx, param idx)
    for (si, (_, range)) in spans.iter().enumerate() {
        let len = range.len();
        let quota = ((subset as f64 * len as f64 / total as f64).round() as usize)
            .max(2)
            .min(len);
        for off in rand::seq::index::sample(&mut rng, len, quota) {
            picks.push((si, range.start + off));
        }
    }
    let mut params = model.params.clone();
    let mut worst = GradCheckReport {
        max_rel_err: 0.0,
        checked: picks.len(),
        worst_span: String::new(),
        worst_index: 0,
    };
    for (si, idx) in picks {
        let orig = params[idx];
        params[idx] = orig + epsilon;
        let up = batch_loss(&model.layout, &params, batch, false, 1.0, None)?;
        params[idx] = orig - epsilon;
        let down = batch_loss(&model.layout, &params, batch, false, 1.0, None)?;
        params[idx] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let analytic = grads[idx] * analytic_scale;
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        if rel > worst.max_rel_err {
            worst.max_rel_err = rel;
            worst.worst_span = spans[si].0.clone();
            worst.worst_index = idx;
        }
    }
    Ok(worst)
}

// ---- optimizer and training ----

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_lambda() -> f64 {
    0.1
}
fn default_batch() -> usize {
    16
}

/// Optimization hyperparameters for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_epsilon: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        TrainConfig {
            steps,
            batch_size: default_batch(),
            learning_rate: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_epsilon: default_adam_eps(),
            lambda: default_lambda(),
            grad_clip: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be positive"));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::validation("learning_rate must be positive"));
        }
        if self.lambda < 0.0 {
            return Err(Error::validation("lambda must be non-negative"));
        }
        if let Some(c) = self.grad_clip {
            if c <= 0.0 {
                return Err(Error::validation("grad_clip must be positive"));
            }
        }
        Ok(())
    }
}

/// Adam with bias correction on flat vectors.
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub l_supervised: f64,
    pub l_ksmlm: Option<f64>,
    pub l_total: f64,
}

/// Clips the gradient to a maximum global L2 norm; returns the pre-clip
/// norm.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= s;
        }
    }
    norm
}

/// Trains in place over batches drawn from the mixture; returns the loss
/// curve. Deterministic given identical inputs and config.
pub fn train(
    model: &mut TinyMlm,
    pools: &[Vec<AugmentedSample>],
    ksmlm_pool: &[AugmentedSample],
    plan: &SamplerPlan,
    ksmlm_mix: KsmlmMix,
    cfg: &TrainConfig,
) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    let weighted = plan.mode == MixMode::LossWeighted;
    let mut rng = seeded_rng(cfg.seed);
    let mut adam = Adam::new(model.params.len(), cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = draw_batch(pools, ksmlm_pool, plan, ksmlm_mix, cfg.batch_size, &mut rng)?;
        let (report, mut grads) =
            loss_and_grads(model, &batch.supervised, &batch.ksmlm, cfg.lambda, weighted)?;
        if !report.l_total.is_finite() {
            return Err(Error::Numeric(format!(
                "loss diverged at step {step}: {}",
                report.l_total
            )));
        }
        if let Some(max_norm) = cfg.grad_clip {
            clip_global_norm(&mut grads, max_norm);
        }
        adam.step(&mut model.params, &grads, cfg.learning_rate);
        curve.push(CurvePoint {
            step,
            l_supervised: report.l_supervised,
            l_ksmlm: report.l_ksmlm,
            l_total: report.l_total,
        });
    }
    Ok(curve)
}

// ---- evaluation ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassCount {
    pub gold_label_index: usize,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_class: Vec<ClassCount>,
}

/// Restricted-candidate classification accuracy.
pub fn evaluate(model: &TinyMlm, samples: &[AugmentedSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::validation("empty evaluation set"));
    }
    let n_classes = samples
        .iter()
        .map(|s| s.gold_label_index + 1)
        .max()
        .unwrap_or(0);
    let mut per_class: Vec<ClassCount> = (0..n_classes)
        .map(|i| ClassCount {
            gold_label_index: i,
            correct: 0,
            total: 0,
        })
        .collect();
    let mut correct = 0usize;
    for sample in samples {
        let dist = model.forward(sample)?;
        let pred = crate::pov_engine::classify(&dist.probs, &sample.candidate_word_ids);
        per_class[sample.gold_label_index].total += 1;
        if pred == sample.gold_label_index {
            correct += 1;
            per_class[sample.gold_label_index].correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / samples.len() as f64,
        correct,
        total: samples.len(),
        per_class,
    })
}
