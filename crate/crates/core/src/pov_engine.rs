//! Prompt template and option-expression parsing, sample binding, and the
//! compiled cloze instance every downstream consumer works with.
//!
//! A template holds exactly one `[MASK]` slot plus sentence slots `[<s1>]`
//! and `[<s2>]`; an option expression holds word slots `<x1>..<xN>`, one per
//! class. Binding a labeled sample to a (template, options, verbalizer)
//! triple yields an [`AugmentedSample`]: the token id sequence, the mask
//! position, the ordered candidate label-word ids, and the gold target.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{tokenize, RawSample, TaskConfig, Vocabulary};
use crate::error::{Error, Result};

/// One piece of a parsed prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateSegment {
    Literal(Vec<String>),
    /// `[<s1>]` or `[<s2>]`.
    SentenceSlot(u8),
    /// The single `[MASK]` slot.
    MaskSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateAst {
    pub segments: Vec<TemplateSegment>,
}

impl TemplateAst {
    pub fn references_sentence(&self, index: u8) -> bool {
        self.segments
            .iter()
            .any(|s| matches!(s, TemplateSegment::SentenceSlot(i) if *i == index))
    }

    pub fn literal_tokens(&self) -> impl Iterator<Item = &str> {
        self.segments
            .iter()
            .flat_map(|s| match s {
                TemplateSegment::Literal(toks) => toks.as_slice(),
                _ => &[],
            })
            .map(String::as_str)
    }
}

/// One piece of a parsed option expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptionSegment {
    Literal(Vec<String>),
    /// `<xk>`, 1-based class index.
    WordSlot(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionExpr {
    pub segments: Vec<OptionSegment>,
}

impl OptionExpr {
    pub fn literal_tokens(&self) -> impl Iterator<Item = &str> {
        self.segments
            .iter()
            .flat_map(|s| match s {
                OptionSegment::Literal(toks) => toks.as_slice(),
                _ => &[],
            })
            .map(String::as_str)
    }
}

/// Bijection between class labels and single-token label words. Words are
/// lowercased to match the tokenizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalizer {
    forward: BTreeMap<String, String>,
    inverse: BTreeMap<String, String>,
}

impl Verbalizer {
    pub fn new(mapping: &BTreeMap<String, String>, class_labels: &[String]) -> Result<Self> {
        let mut forward = BTreeMap::new();
        let mut inverse = BTreeMap::new();
        for label in class_labels {
            let word = mapping.get(label).ok_or_else(|| {
                Error::validation(format!("verbalizer misses class label {label:?}"))
            })?;
            let word = word.to_lowercase();
            if inverse.insert(word.clone(), label.clone()).is_some() {
                return Err(Error::validation(format!(
                    "verbalizer reuses label word {word:?}"
                )));
            }
            forward.insert(label.clone(), word);
        }
        Ok(Verbalizer { forward, inverse })
    }

    pub fn word_for(&self, class_label: &str) -> Option<&str> {
        self.forward.get(class_label).map(String::as_str)
    }

    pub fn class_for(&self, word: &str) -> Option<&str> {
        self.inverse.get(word).map(String::as_str)
    }
}

/// A compiled cloze instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSample {
    pub token_ids: Vec<usize>,
    pub mask_index: usize,
    /// Candidate label-word ids, in class-label order.
    pub candidate_word_ids: Vec<usize>,
    pub target_word_id: usize,
    pub gold_label_index: usize,
    pub source_dataset: String,
    pub weight: f64,
}

impl AugmentedSample {
    /// Checks the structural invariants every compiled sample must satisfy.
    pub fn check(&self, vocab: &Vocabulary) -> Result<()> {
        let mask_id = vocab.mask_id();
        let masks = self.token_ids.iter().filter(|&&id| id == mask_id).count();
        if masks != 1 || self.token_ids[self.mask_index] != mask_id {
            return Err(Error::validation(format!(
                "expected exactly one mask at index {}, found {masks} mask tokens",
                self.mask_index
            )));
        }
        if self.candidate_word_ids.get(self.gold_label_index) != Some(&self.target_word_id) {
            return Err(Error::validation(
                "target_word_id does not sit at gold_label_index".to_string(),
            ));
        }
        if !(self.weight > 0.0 && self.weight <= 1.0) {
            return Err(Error::validation(format!(
                "weight {} outside (0, 1]",
                self.weight
            )));
        }
        Ok(())
    }
}

/// Parses a prompt template. Placeholders `[<s1>]`, `[<s2>]` and `[MASK]`
/// are recognized exactly; everything else is literal text, tokenized.
pub fn parse_template(s: &str) -> Result<TemplateAst> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut rest = s;
    let flush = |literal: &mut String, segments: &mut Vec<TemplateSegment>| {
        let toks = tokenize(literal);
        if !toks.is_empty() {
            segments.push(TemplateSegment::Literal(toks));
        }
        literal.clear();
    };
    while let Some(open) = rest.find('[') {
        let before = &rest[..open];
        if let Some(stray) = before.find(']') {
            return Err(Error::parse(format!(
                "unbalanced ']' at offset {} in template {s:?}",
                s.len() - rest.len() + stray
            )));
        }
        literal.push_str(before);
        let after = &rest[open..];
        let close = after
            .find(']')
            .ok_or_else(|| Error::parse(format!("unbalanced '[' in template {s:?}")))?;
        let body = &after[1..close];
        let segment = match body {
            "<s1>" => TemplateSegment::SentenceSlot(1),
            "<s2>" => TemplateSegment::SentenceSlot(2),
            "MASK" => TemplateSegment::MaskSlot,
            other => {
                return Err(Error::parse(format!(
                    "unknown placeholder [{other}] in template {s:?}"
                )))
            }
        };
        flush(&mut literal, &mut segments);
        segments.push(segment);
        rest = &after[close + 1..];
    }
    if rest.contains(']') {
        return Err(Error::parse(format!("unbalanced ']' in template {s:?}")));
    }
    literal.push_str(rest);
    flush(&mut literal, &mut segments);

    let masks = segments
        .iter()
        .filter(|seg| matches!(seg, TemplateSegment::MaskSlot))
        .count();
    match masks {
        0 => Err(Error::parse(format!("no [MASK] in template {s:?}"))),
        1 => Ok(TemplateAst { segments }),
        n => Err(Error::parse(format!(
            "multiple [MASK] ({n}) in template {s:?}"
        ))),
    }
}

/// Parses an option expression with exactly the word slots `<x1>..<xN>`.
pub fn parse_options(s: &str, n: usize) -> Result<OptionExpr> {
    if n < 2 {
        return Err(Error::validation(format!(
            "option expression needs at least 2 classes, got {n}"
        )));
    }
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut seen = vec![false; n];
    let mut chars = s.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        if ch == '<' {
            // try to match <x\d+>
            if let Some(close) = s[i..].find('>') {
                let body = &s[i + 1..i + close];
                if let Some(digits) = body.strip_prefix('x') {
                    if let Ok(k) = digits.parse::<usize>() {
                        if k == 0 || k > n {
                            return Err(Error::parse(format!(
                                "option slot <x{k}> exceeds class count {n} in {s:?}"
                            )));
                        }
                        if seen[k - 1] {
                            return Err(Error::parse(format!(
                                "duplicated option slot <x{k}> in {s:?}"
                            )));
                        }
                        seen[k - 1] = true;
                        let toks = tokenize(&literal);
                        if !toks.is_empty() {
                            segments.push(OptionSegment::Literal(toks));
                        }
                        literal.clear();
                        segments.push(OptionSegment::WordSlot(k));
                        // skip the consumed placeholder characters
                        while let Some(&(j, _)) = chars.peek() {
                            if j <= i + close {
                                chars.next();
                            } else {
                                break;
                            }
                        }
                        continue;
                    }
                }
            }
            literal.push(ch);
        } else {
            literal.push(ch);
        }
    }
    let toks = tokenize(&literal);
    if !toks.is_empty() {
        segments.push(OptionSegment::Literal(toks));
    }
    if let Some(k) = seen.iter().position(|&b| !b) {
        return Err(Error::parse(format!(
            "missing option slot <x{}> in {s:?}",
            k + 1
        )));
    }
    Ok(OptionExpr { segments })
}

/// Binds one sample to a (template, options, verbalizer) triple, producing
/// the compiled token sequence `BOS + template + options + EOS`.
///
/// Out-of-vocabulary content tokens map to UNK; label words must be in the
/// vocabulary.
pub fn compile_sample(
    sample: &RawSample,
    template: &TemplateAst,
    options: &OptionExpr,
    verbalizer: &Verbalizer,
    config: &TaskConfig,
    vocab: &Vocabulary,
    weight: f64,
) -> Result<AugmentedSample> {
    compile_with(
        sample,
        template,
        Some(options),
        verbalizer,
        config,
        vocab,
        weight,
    )
}

/// [`compile_sample`] minus the option expression: prompt-only sequences
/// for the no-options ablation.
pub fn compile_sample_without_options(
    sample: &RawSample,
    template: &TemplateAst,
    verbalizer: &Verbalizer,
    config: &TaskConfig,
    vocab: &Vocabulary,
    weight: f64,
) -> Result<AugmentedSample> {
    compile_with(sample, template, None, verbalizer, config, vocab, weight)
}

#[allow(clippy::too_many_arguments)]
fn compile_with(
    sample: &RawSample,
    template: &TemplateAst,
    options: Option<&OptionExpr>,
    verbalizer: &Verbalizer,
    config: &TaskConfig,
    vocab: &Vocabulary,
    weight: f64,
) -> Result<AugmentedSample> {
    if !(weight > 0.0 && weight <= 1.0) {
        return Err(Error::validation(format!("weight {weight} outside (0, 1]")));
    }
    let gold_label_index = config
        .class_labels
        .iter()
        .position(|l| l == &sample.label)
        .ok_or_else(|| {
            Error::validation(format!(
                "label {:?} not in task {}'s class labels",
                sample.label, config.task_name
            ))
        })?;

    let mut token_ids = vec![vocab.bos_id()];
    let mut mask_index = None;
    for segment in &template.segments {
        match segment {
            TemplateSegment::Literal(toks) => {
                token_ids.extend(toks.iter().map(|t| vocab.id_or_unk(t)));
            }
            TemplateSegment::SentenceSlot(1) => {
                token_ids.extend(tokenize(&sample.text_a).iter().map(|t| vocab.id_or_unk(t)));
            }
            TemplateSegment::SentenceSlot(_) => {
                let text_b = sample.text_b.as_deref().ok_or_else(|| {
                    Error::validation(format!(
                        "template references [<s2>] but sample {:?} has no text_b",
                        sample.text_a
                    ))
                })?;
                token_ids.extend(tokenize(text_b).iter().map(|t| vocab.id_or_unk(t)));
            }
            TemplateSegment::MaskSlot => {
                mask_index = Some(token_ids.len());
                token_ids.push(vocab.mask_id());
            }
        }
    }
    let mask_index = mask_index.expect("validated template has one mask");

    let candidate_word_ids = candidate_ids(config, verbalizer, vocab)?;
    if let Some(options) = options {
        for segment in &options.segments {
            match segment {
                OptionSegment::Literal(toks) => {
                    token_ids.extend(toks.iter().map(|t| vocab.id_or_unk(t)));
                }
                OptionSegment::WordSlot(k) => {
                    token_ids.push(candidate_word_ids[*k - 1]);
                }
            }
        }
    }
    token_ids.push(vocab.eos_id());

    Ok(AugmentedSample {
        token_ids,
        mask_index,
        target_word_id: candidate_word_ids[gold_label_index],
        candidate_word_ids,
        gold_label_index,
        source_dataset: config.task_name.clone(),
        weight,
    })
}

fn candidate_ids(
    config: &TaskConfig,
    verbalizer: &Verbalizer,
    vocab: &Vocabulary,
) -> Result<Vec<usize>> {
    config
        .class_labels
        .iter()
        .map(|label| {
            let word = verbalizer
                .word_for(label)
                .ok_or_else(|| Error::validation(format!("no label word for class {label:?}")))?;
            vocab
                .id(word)
                .ok_or_else(|| Error::validation(format!("label word {word:?} not in vocabulary")))
        })
        .collect()
}

/// Compiles one sample under every template of the config, selecting one
/// option expression and one verbalizer uniformly at random per template.
pub fn compile_ensemble(
    sample: &RawSample,
    config: &TaskConfig,
    vocab: &Vocabulary,
    weight: f64,
    rng: &mut impl Rng,
) -> Result<Vec<AugmentedSample>> {
    if config.templates.is_empty() {
        return Err(Error::validation(format!(
            "task {} has no templates",
            config.task_name
        )));
    }
    let mut out = Vec::with_capacity(config.templates.len());
    for template_str in &config.templates {
        let template = parse_template(template_str)?;
        let option_str = &config.options[rng.gen_range(0..config.options.len())];
        let options = parse_options(option_str, config.num_classes())?;
        let mapping = &config.verbalizers[rng.gen_range(0..config.verbalizers.len())];
        let verbalizer = Verbalizer::new(mapping, &config.class_labels)?;
        out.push(compile_sample(
            sample,
            &template,
            &options,
            &verbalizer,
            config,
            vocab,
            weight,
        )?);
    }
    Ok(out)
}

/// Renders a sample in the enumerated multiple-choice layout: the sentence,
/// lettered choices `a . <word1> ; b . <word2> ; ...`, and the fixed closing
/// prompt `it is [MASK] .`. Candidates are the letter tokens.
pub fn render_multiple_choice(
    sample: &RawSample,
    config: &TaskConfig,
    verbalizer: &Verbalizer,
    vocab: &Vocabulary,
) -> Result<AugmentedSample> {
    let n = config.num_classes();
    if n > 26 {
        return Err(Error::validation(format!(
            "multiple-choice rendering supports at most 26 classes, got {n}"
        )));
    }
    let gold_label_index = config
        .class_labels
        .iter()
        .position(|l| l == &sample.label)
        .ok_or_else(|| Error::validation(format!("unknown label {:?}", sample.label)))?;

    let mut token_ids = vec![vocab.bos_id()];
    token_ids.extend(tokenize(&sample.text_a).iter().map(|t| vocab.id_or_unk(t)));
    if let Some(b) = &sample.text_b {
        token_ids.extend(tokenize(b).iter().map(|t| vocab.id_or_unk(t)));
    }
    let mut candidate_word_ids = Vec::with_capacity(n);
    let dot = vocab.id_or_unk(".");
    let semi = vocab.id_or_unk(";");
    for (i, label) in config.class_labels.iter().enumerate() {
        let letter = ((b'a' + i as u8) as char).to_string();
        let letter_id = vocab.id(&letter).ok_or_else(|| {
            Error::validation(format!("letter token {letter:?} not in vocabulary"))
        })?;
        let word = verbalizer
            .word_for(label)
            .ok_or_else(|| Error::validation(format!("no label word for class {label:?}")))?;
        token_ids.extend([letter_id, dot, vocab.id_or_unk(word), semi]);
        candidate_word_ids.push(letter_id);
    }
    token_ids.extend([vocab.id_or_unk("it"), vocab.id_or_unk("is")]);
    let mask_index = token_ids.len();
    token_ids.push(vocab.mask_id());
    token_ids.extend([dot, vocab.eos_id()]);

    Ok(AugmentedSample {
        token_ids,
        mask_index,
        target_word_id: candidate_word_ids[gold_label_index],
        candidate_word_ids,
        gold_label_index,
        source_dataset: config.task_name.clone(),
        weight: 1.0,
    })
}

/// Restricted argmax over candidate positions of a full-vocabulary
/// distribution; ties break to the lowest class index.
pub fn classify(distribution: &[f64], candidates: &[usize]) -> usize {
    debug_assert!(
        (distribution.iter().sum::<f64>() - 1.0).abs() < 1e-6,
        "distribution must sum to 1"
    );
    let mut best = 0;
    for (i, &cand) in candidates.iter().enumerate().skip(1) {
        if distribution[cand] > distribution[candidates[best]] {
            best = i;
        }
    }
    best
}

/// Writes compiled samples in the JSON-lines interchange format.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for record in records {
        let line = serde_json::to_string(record)?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Reads a JSON-lines file of compiled samples.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: format!("malformed record: {e}"),
        })?);
    }
    Ok(out)
}
