//! Knowledge-enhanced selective MLM synthesis: mask an adjective, mine a
//! maximally dissimilar alternative from the options repository, and emit a
//! two-candidate cloze example with the fixed option expression
//! `Is it <x1> or <x2>?`.
//!
//! Two masking modes exist because the fixed prompt `It is [MASK].` and the
//! one-mask constraint cannot both hold while the in-sentence adjective stays
//! visible. `InSitu` (default) replaces the occurrence inside the sentence;
//! `Appended` deletes the occurrence and appends the fixed prompt. The true
//! word never remains visible in the sentence part under either mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::Vocabulary;
use crate::error::Result;
use crate::okr::{self, OkrRepository, TaggedSentence, TaggedToken};
use crate::pov_engine::AugmentedSample;

/// The `source_dataset` marker carried by every synthesized example.
pub const KSMLM_DATASET: &str = "__ksmlm__";

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Replace the adjective occurrence with the mask inside the sentence.
    #[default]
    InSitu,
    /// Delete the occurrence and append the fixed prompt `it is [MASK] .`.
    Appended,
}

/// Where alternative label words come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AltPolicy {
    /// Uniform draw from the most dissimilar cluster (the knowledge path).
    Dissimilar,
    /// Uniform draw over the whole adjective repository (the no-knowledge
    /// ablation).
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sentence_id: u64,
    pub masked_position_in_sentence: usize,
    pub true_word: String,
    pub alternative_word: String,
}

/// A synthesized example: a compiled two-candidate cloze instance plus where
/// it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsmlmExample {
    #[serde(flatten)]
    pub sample: AugmentedSample,
    pub provenance: Provenance,
}

/// Positions whose token is an adjective present in the repository, in
/// sentence order.
pub fn select_maskable(sentence: &[TaggedToken], repo: &OkrRepository) -> Vec<usize> {
    sentence
        .iter()
        .enumerate()
        .filter(|(_, t)| t.is_adjective() && repo.contains(&t.surface.to_lowercase()))
        .map(|(i, _)| i)
        .collect()
}

/// Why a sentence produced no example.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthOutcome {
    Example(Box<KsmlmExample>),
    NoMaskable,
    OutOfVocabulary,
    NoAlternative,
}

/// Synthesizes one example from a tagged sentence: a uniformly chosen
/// maskable position, an alternative word per the policy, and a randomized
/// candidate order.
pub fn synthesize(
    sentence: &TaggedSentence,
    repo: &OkrRepository,
    vocab: &Vocabulary,
    mode: MaskMode,
    policy: AltPolicy,
    rng: &mut impl Rng,
) -> Result<SynthOutcome> {
    let maskable = select_maskable(&sentence.tokens, repo);
    if maskable.is_empty() {
        return Ok(SynthOutcome::NoMaskable);
    }
    let position = maskable[rng.gen_range(0..maskable.len())];
    let true_word = sentence.tokens[position].surface.to_lowercase();
    let true_id = match vocab.id(&true_word) {
        Some(id) => id,
        None => return Ok(SynthOutcome::OutOfVocabulary),
    };

    let alternative = match policy {
        AltPolicy::Dissimilar => match okr::sample_alternative(repo, &true_word, rng) {
            Ok(word) => word,
            Err(_) => return Ok(SynthOutcome::NoAlternative),
        },
        AltPolicy::Uniform => {
            let others: Vec<&str> = repo
                .entries
                .iter()
                .map(|e| e.word.as_str())
                .filter(|w| *w != true_word)
                .collect();
            if others.is_empty() {
                return Ok(SynthOutcome::NoAlternative);
            }
            others[rng.gen_range(0..others.len())].to_string()
        }
    };
    let alt_id = match vocab.id(&alternative) {
        Some(id) => id,
        None => return Ok(SynthOutcome::OutOfVocabulary),
    };

    // Sentence tokens, dropping every other visible occurrence of the true
    // word so it cannot leak.
    let mut token_ids = vec![vocab.bos_id()];
    let mut mask_index = None;
    for (i, tagged) in sentence.tokens.iter().enumerate() {
        if i == position {
            if mode == MaskMode::InSitu {
                mask_index = Some(token_ids.len());
                token_ids.push(vocab.mask_id());
            }
            continue;
        }
        for tok in crate::data_model::tokenize(&tagged.surface) {
            if tok == true_word {
                continue;
            }
            token_ids.push(vocab.id_or_unk(&tok));
        }
    }
    match mode {
        MaskMode::InSitu => {
            // close the sentence before the options unless already punctuated
            let last = vocab.token(*token_ids.last().unwrap());
            if !matches!(last, "." | "!" | "?") {
                token_ids.push(vocab.id_or_unk("."));
            }
        }
        MaskMode::Appended => {
            token_ids.extend([vocab.id_or_unk("it"), vocab.id_or_unk("is")]);
            mask_index = Some(token_ids.len());
            token_ids.push(vocab.mask_id());
            token_ids.push(vocab.id_or_unk("."));
        }
    }
    let mask_index = mask_index.expect("mask inserted in both modes");

    // fixed option expression, candidate order randomized
    let true_first = rng.gen::<bool>();
    let (first, second) = if true_first {
        (true_id, alt_id)
    } else {
        (alt_id, true_id)
    };
    token_ids.extend([vocab.id_or_unk("is"), vocab.id_or_unk("it")]);
    token_ids.push(first);
    token_ids.push(vocab.id_or_unk("or"));
    token_ids.push(second);
    token_ids.push(vocab.id_or_unk("?"));
    token_ids.push(vocab.eos_id());

    let sample = AugmentedSample {
        token_ids,
        mask_index,
        candidate_word_ids: vec![first, second],
        target_word_id: true_id,
        gold_label_index: if true_first { 0 } else { 1 },
        source_dataset: KSMLM_DATASET.to_string(),
        weight: 1.0,
    };
    Ok(SynthOutcome::Example(Box::new(KsmlmExample {
        sample,
        provenance: Provenance {
            sentence_id: sentence.sentence_id,
            masked_position_in_sentence: position,
            true_word,
            alternative_word: alternative,
        },
    })))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCounts {
    pub synthesized: usize,
    pub skipped_no_adjective: usize,
    pub skipped_oov: usize,
    pub skipped_no_alternative: usize,
}

/// Runs [`synthesize`] over a corpus in order, stopping at `budget` emitted
/// examples. Each sentence gets its own RNG stream derived from
/// `(seed, sentence_id)`, so output is independent of chunking.
pub fn synthesize_corpus(
    sentences: &[TaggedSentence],
    repo: &OkrRepository,
    vocab: &Vocabulary,
    mode: MaskMode,
    policy: AltPolicy,
    seed: u64,
    budget: usize,
) -> Result<(Vec<KsmlmExample>, SynthCounts)> {
    let mut out = Vec::new();
    let mut counts = SynthCounts::default();
    for sentence in sentences {
        if out.len() >= budget {
            break;
        }
        let mut rng = crate::seeded_rng(crate::derive_seed(seed, sentence.sentence_id));
        match synthesize(sentence, repo, vocab, mode, policy, &mut rng)? {
            SynthOutcome::Example(example) => {
                counts.synthesized += 1;
                out.push(*example);
            }
            SynthOutcome::NoMaskable => counts.skipped_no_adjective += 1,
            SynthOutcome::OutOfVocabulary => counts.skipped_oov += 1,
            SynthOutcome::NoAlternative => counts.skipped_no_alternative += 1,
        }
    }
    Ok((out, counts))
}
