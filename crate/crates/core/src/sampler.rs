//! Dataset mixing weights, multi-task batch formation, and N-way-K-shot
//! splits.
//!
//! The mixing weight of dataset k is `(ln|D_k| + gamma) / (M*gamma + sum_j
//! ln|D_j|)` with natural logarithm; the weights sum to 1 by construction.
//! Exactly one weighting mechanism is active per run: either the weights
//! drive stratified dataset selection (samples carry weight 1), or samples
//! are drawn uniformly and carry their dataset's weight into the loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::RawSample;
use crate::error::{Error, Result};
use crate::pov_engine::AugmentedSample;

/// How dataset weights are realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixMode {
    /// Weights drive per-slot dataset selection; samples carry weight 1.
    Stratified,
    /// Uniform draws from the concatenated pool; samples carry their
    /// dataset's weight into the loss.
    LossWeighted,
}

/// How the KSMLM sub-batch is sized relative to the supervised batch.
#[derive(Debug, Default, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KsmlmMix {
    /// Equal sub-batch; lambda acts purely as a loss multiplier (default).
    #[default]
    LossMultiplier,
    /// Sub-batch of `round(share * batch_size)` slots.
    Share(f64),
}

/// Resolved mixing plan over the source datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerPlan {
    pub dataset_names: Vec<String>,
    pub sizes: Vec<usize>,
    pub gamma: f64,
    pub weights: Vec<f64>,
    pub mode: MixMode,
}

impl SamplerPlan {
    pub fn new(
        dataset_names: Vec<String>,
        sizes: Vec<usize>,
        gamma: f64,
        mode: MixMode,
    ) -> Result<Self> {
        if dataset_names.len() != sizes.len() {
            return Err(Error::validation("dataset_names and sizes length mismatch"));
        }
        let weights = dataset_weights(&sizes, gamma)?;
        Ok(SamplerPlan {
            dataset_names,
            sizes,
            gamma,
            weights,
            mode,
        })
    }
}

/// Smoothed log-size mixing weights. Natural logarithm; sums to 1.
pub fn dataset_weights(sizes: &[usize], gamma: f64) -> Result<Vec<f64>> {
    if gamma <= 0.0 {
        return Err(Error::validation(format!("gamma must be > 0, got {gamma}")));
    }
    if sizes.is_empty() {
        return Err(Error::validation("need at least one dataset"));
    }
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::validation(format!("dataset {i} has size 0")));
    }
    let logs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let denom = sizes.len() as f64 * gamma + logs.iter().sum::<f64>();
    Ok(logs.iter().map(|l| (l + gamma) / denom).collect())
}

/// An N-way-K-shot split request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSpec {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
}

impl FewShotSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.k < 1 {
            return Err(Error::validation(format!(
                "few-shot spec needs N >= 2 and K >= 1, got N={}, K={}",
                self.n, self.k
            )));
        }
        Ok(())
    }
}

/// Per-class sampling of 2K instances without replacement: the first K per
/// class form the training split, the next K the development split.
pub fn few_shot_split(
    samples: &[RawSample],
    class_labels: &[String],
    spec: &FewShotSpec,
) -> Result<(Vec<RawSample>, Vec<RawSample>)> {
    spec.validate()?;
    if class_labels.len() != spec.n {
        return Err(Error::validation(format!(
            "spec says {} classes but task has {}",
            spec.n,
            class_labels.len()
        )));
    }
    let mut rng = crate::seeded_rng(spec.seed);
    let mut train = Vec::with_capacity(spec.n * spec.k);
    let mut dev = Vec::with_capacity(spec.n * spec.k);
    for label in class_labels {
        let indices: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| &s.label == label)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < 2 * spec.k {
            return Err(Error::validation(format!(
                "class {label:?} has {} samples, need at least {}",
                indices.len(),
                2 * spec.k
            )));
        }
        let chosen = rand::seq::index::sample(&mut rng, indices.len(), 2 * spec.k);
        for (pos, idx) in chosen.iter().enumerate() {
            let sample = samples[indices[idx]].clone();
            if pos < spec.k {
                train.push(sample);
            } else {
                dev.push(sample);
            }
        }
    }
    Ok((train, dev))
}

/// A drawn multi-task batch: a supervised part and a KSMLM sub-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub supervised: Vec<AugmentedSample>,
    pub ksmlm: Vec<AugmentedSample>,
}

/// Draws one batch from the per-dataset pools (order matching
/// `plan.dataset_names`) plus an optional KSMLM pool.
pub fn draw_batch(
    pools: &[Vec<AugmentedSample>],
    ksmlm_pool: &[AugmentedSample],
    plan: &SamplerPlan,
    ksmlm_mix: KsmlmMix,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if batch_size < 1 {
        return Err(Error::validation("batch_size must be >= 1"));
    }
    if pools.len() != plan.weights.len() {
        return Err(Error::validation("pool count does not match plan"));
    }
    for (i, pool) in pools.iter().enumerate() {
        if pool.is_empty() && plan.weights[i] > 0.0 {
            return Err(Error::validation(format!(
                "dataset {} has weight {} but an empty pool",
                plan.dataset_names[i], plan.weights[i]
            )));
        }
    }
    let mut supervised = Vec::with_capacity(batch_size);
    match plan.mode {
        MixMode::Stratified => {
            for _ in 0..batch_size {
                let k = pick_weighted(&plan.weights, rng);
                let pool = &pools[k];
                let mut sample = pool[rng.gen_range(0..pool.len())].clone();
                sample.weight = 1.0;
                supervised.push(sample);
            }
        }
        MixMode::LossWeighted => {
            let total: usize = pools.iter().map(Vec::len).sum();
            if total == 0 {
                return Err(Error::validation("all pools are empty"));
            }
            for _ in 0..batch_size {
                let mut idx = rng.gen_range(0..total);
                for (k, pool) in pools.iter().enumerate() {
                    if idx < pool.len() {
                        let mut sample = pool[idx].clone();
                        sample.weight = plan.weights[k];
                        supervised.push(sample);
                        break;
                    }
                    idx -= pool.len();
                }
            }
        }
    }

    let ksmlm_size = match ksmlm_mix {
        KsmlmMix::LossMultiplier => batch_size,
        KsmlmMix::Share(share) => (share * batch_size as f64).round() as usize,
    };
    let mut ksmlm = Vec::new();
    if !ksmlm_pool.is_empty() {
        for _ in 0..ksmlm_size {
            ksmlm.push(ksmlm_pool[rng.gen_range(0..ksmlm_pool.len())].clone());
        }
    }
    Ok(Batch { supervised, ksmlm })
}

fn pick_weighted(weights: &[f64], rng: &mut impl Rng) -> usize {
    let mut target: f64 = rng.gen();
    for (i, &w) in weights.iter().enumerate() {
        if target < w {
            return i;
        }
        target -= w;
    }
    weights.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_dataset_weight_is_one() {
        assert_eq!(dataset_weights(&[37], 0.001).unwrap(), vec![1.0]);
    }

    #[test]
    fn equal_sizes_give_equal_weights() {
        let w = dataset_weights(&[100, 100], 0.001).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weight_formula_matches_independent_evaluation() {
        // (ln 10 + 0.001) / (2*0.001 + ln 10 + ln 1000) computed with an
        // arbitrary-precision calculator: 0.2500545, 0.7499455.
        let w = dataset_weights(&[10, 1000], 0.001).unwrap();
        assert!((w[0] - 0.25005).abs() < 1e-4, "w0 = {}", w[0]);
        assert!((w[1] - 0.74995).abs() < 1e-4, "w1 = {}", w[1]);
    }

    #[test]
    fn weights_reject_bad_inputs() {
        assert!(dataset_weights(&[0, 10], 0.001).is_err());
        assert!(dataset_weights(&[10, 10], 0.0).is_err());
        assert!(dataset_weights(&[10, 10], -1.0).is_err());
    }

    #[test]
    fn large_gamma_approaches_uniform() {
        let w = dataset_weights(&[10, 1000, 50], 1e6).unwrap();
        for &wi in &w {
            assert!((wi - 1.0 / 3.0).abs() < 1e-3, "{w:?}");
        }
    }

    fn dummy_sample(dataset: &str) -> AugmentedSample {
        AugmentedSample {
            token_ids: vec![3, 2, 4],
            mask_index: 1,
            candidate_word_ids: vec![5, 6],
            target_word_id: 5,
            gold_label_index: 0,
            source_dataset: dataset.into(),
            weight: 1.0,
        }
    }

    #[test]
    fn stratified_draws_follow_weights() {
        let plan = SamplerPlan::new(
            vec!["a".into(), "b".into()],
            vec![500, 500],
            0.001,
            MixMode::Stratified,
        )
        .unwrap();
        let pools = vec![vec![dummy_sample("a")], vec![dummy_sample("b")]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000usize;
        let mut from_a = 0usize;
        for _ in 0..draws / 100 {
            let batch = draw_batch(&pools, &[], &plan, KsmlmMix::default(), 100, &mut rng).unwrap();
            from_a += batch
                .supervised
                .iter()
                .filter(|s| s.source_dataset == "a")
                .count();
        }
        let sigma3 = 3.0 * (draws as f64 * 0.25).sqrt();
        assert!(
            (from_a as f64 - draws as f64 / 2.0).abs() < sigma3,
            "a drawn {from_a} of {draws}"
        );
    }

    #[test]
    fn loss_weighted_samples_carry_dataset_weight() {
        let plan = SamplerPlan::new(
            vec!["a".into(), "b".into()],
            vec![10, 1000],
            0.001,
            MixMode::LossWeighted,
        )
        .unwrap();
        let pools = vec![vec![dummy_sample("a")], vec![dummy_sample("b")]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = draw_batch(&pools, &[], &plan, KsmlmMix::default(), 64, &mut rng).unwrap();
        for s in &batch.supervised {
            let expected = if s.source_dataset == "a" {
                0.25005
            } else {
                0.74995
            };
            assert!((s.weight - expected).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_size_one_and_empty_pool_error() {
        let plan =
            SamplerPlan::new(vec!["a".into()], vec![10], 0.001, MixMode::Stratified).unwrap();
        let pools = vec![vec![dummy_sample("a")]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = draw_batch(&pools, &[], &plan, KsmlmMix::default(), 1, &mut rng).unwrap();
        assert_eq!(batch.supervised.len(), 1);
        let empty: Vec<Vec<AugmentedSample>> = vec![vec![]];
        assert!(draw_batch(&empty, &[], &plan, KsmlmMix::default(), 1, &mut rng).is_err());
    }

    #[test]
    fn ksmlm_share_mode_sizes_the_sub_batch() {
        let plan =
            SamplerPlan::new(vec!["a".into()], vec![10], 0.001, MixMode::Stratified).unwrap();
        let pools = vec![vec![dummy_sample("a")]];
        let kpool = vec![dummy_sample("__ksmlm__")];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = draw_batch(&pools, &kpool, &plan, KsmlmMix::Share(0.25), 16, &mut rng).unwrap();
        assert_eq!(batch.ksmlm.len(), 4);
        let batch = draw_batch(
            &pools,
            &kpool,
            &plan,
            KsmlmMix::LossMultiplier,
            16,
            &mut rng,
        )
        .unwrap();
        assert_eq!(batch.ksmlm.len(), 16);
    }

    fn labeled(label: &str, i: usize) -> RawSample {
        RawSample {
            text_a: format!("sample {i}"),
            text_b: None,
            label: label.into(),
        }
    }

    #[test]
    fn few_shot_split_is_disjoint_and_sized() {
        let mut samples = Vec::new();
        for i in 0..50 {
            samples.push(labeled("negative", i));
            samples.push(labeled("positive", i + 50));
        }
        let labels = vec!["negative".to_string(), "positive".to_string()];
        let spec = FewShotSpec {
            n: 2,
            k: 16,
            seed: 11,
        };
        let (train, dev) = few_shot_split(&samples, &labels, &spec).unwrap();
        assert_eq!(train.len(), 32);
        assert_eq!(dev.len(), 32);
        let train_set: std::collections::HashSet<&str> =
            train.iter().map(|s| s.text_a.as_str()).collect();
        assert!(dev.iter().all(|s| !train_set.contains(s.text_a.as_str())));
        for label in &labels {
            assert_eq!(train.iter().filter(|s| &s.label == label).count(), 16);
            assert_eq!(dev.iter().filter(|s| &s.label == label).count(), 16);
        }
    }

    #[test]
    fn few_shot_split_errors_on_thin_class() {
        let samples: Vec<RawSample> = (0..40)
            .map(|i| labeled("positive", i))
            .chain((0..10).map(|i| labeled("negative", i + 100)))
            .collect();
        let labels = vec!["negative".to_string(), "positive".to_string()];
        let spec = FewShotSpec {
            n: 2,
            k: 16,
            seed: 0,
        };
        let err = few_shot_split(&samples, &labels, &spec).unwrap_err();
        assert!(err.to_string().contains("negative"), "{err}");
    }

    #[test]
    fn few_shot_split_is_deterministic() {
        let mut samples = Vec::new();
        for i in 0..80 {
            samples.push(labeled(if i % 2 == 0 { "negative" } else { "positive" }, i));
        }
        let labels = vec!["negative".to_string(), "positive".to_string()];
        let spec = FewShotSpec {
            n: 2,
            k: 8,
            seed: 77,
        };
        let a = few_shot_split(&samples, &labels, &spec).unwrap();
        let b = few_shot_split(&samples, &labels, &spec).unwrap();
        assert_eq!(a, b);
    }
}
