//! Datasets, task configurations, vocabulary, and their on-disk formats.
//!
//! Everything here is immutable after construction and safe to share across
//! threads. Tokenization is deliberately word-level (lowercasing, punctuation
//! detached): subword schemes would add complexity without exercising any of
//! the mechanisms the rest of the toolkit cares about.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pov_engine;

/// The literal mask token, preserved un-split by [`tokenize`].
pub const MASK_TOKEN: &str = "[MASK]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const BOS_TOKEN: &str = "[BOS]";
pub const EOS_TOKEN: &str = "[EOS]";

/// Special tokens in id order: ids 0..5 are fixed.
pub const SPECIAL_TOKENS: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN, BOS_TOKEN, EOS_TOKEN];

/// Deterministic word-level tokenizer: lowercases, splits on whitespace,
/// detaches every non-alphanumeric character as its own token, and keeps the
/// literal `[MASK]` token intact.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        tokenize_word(word, &mut out);
    }
    out
}

fn tokenize_word(word: &str, out: &mut Vec<String>) {
    let mut rest = word;
    while let Some(pos) = rest.find(MASK_TOKEN) {
        tokenize_plain(&rest[..pos], out);
        out.push(MASK_TOKEN.to_string());
        rest = &rest[pos + MASK_TOKEN.len()..];
    }
    tokenize_plain(rest, out);
}

fn tokenize_plain(chunk: &str, out: &mut Vec<String>) {
    let mut run = String::new();
    for ch in chunk.chars() {
        if ch.is_alphanumeric() {
            run.extend(ch.to_lowercase());
        } else {
            if !run.is_empty() {
                out.push(std::mem::take(&mut run));
            }
            out.push(ch.to_lowercase().collect());
        }
    }
    if !run.is_empty() {
        out.push(run);
    }
}

/// One labeled input sample: a sentence (or pair) with a class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    pub text_a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_b: Option<String>,
    pub label: String,
}

/// A task's class labels, prompt templates, option expressions, and
/// verbalizers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task_name: String,
    /// Ordered class labels; the order fixes the candidate order of every
    /// compiled sample.
    pub class_labels: Vec<String>,
    pub templates: Vec<String>,
    pub options: Vec<String>,
    /// Each verbalizer maps every class label to exactly one label word.
    pub verbalizers: Vec<BTreeMap<String, String>>,
}

impl TaskConfig {
    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    /// Checks every structural invariant: N >= 2, non-empty template/option/
    /// verbalizer lists, verbalizer bijectivity, and parseable templates and
    /// options.
    pub fn validate(&self) -> Result<()> {
        let n = self.class_labels.len();
        if n < 2 {
            return Err(Error::validation(format!(
                "task {}: need at least 2 class labels, got {n}",
                self.task_name
            )));
        }
        if self.templates.is_empty() || self.options.is_empty() || self.verbalizers.is_empty() {
            return Err(Error::validation(format!(
                "task {}: templates, options and verbalizers must all be non-empty",
                self.task_name
            )));
        }
        for t in &self.templates {
            pov_engine::parse_template(t)?;
        }
        for o in &self.options {
            pov_engine::parse_options(o, n)?;
        }
        for (vi, v) in self.verbalizers.iter().enumerate() {
            for label in &self.class_labels {
                if !v.contains_key(label) {
                    return Err(Error::validation(format!(
                        "task {}: verbalizer {vi} misses label {label:?}",
                        self.task_name
                    )));
                }
            }
            if v.len() != n {
                return Err(Error::validation(format!(
                    "task {}: verbalizer {vi} maps {} labels, expected {n}",
                    self.task_name,
                    v.len()
                )));
            }
            let mut seen = std::collections::HashSet::new();
            for word in v.values() {
                if !seen.insert(word.to_lowercase()) {
                    return Err(Error::validation(format!(
                        "task {}: verbalizer {vi} reuses label word {word:?}",
                        self.task_name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: TaskConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    Source,
    Target,
}

#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub config: TaskConfig,
    pub samples: Vec<RawSample>,
    pub role: DatasetRole,
}

/// The set of source datasets plus at most one target dataset.
#[derive(Debug, Clone, Default)]
pub struct DatasetRegistry {
    pub entries: Vec<DatasetEntry>,
}

impl DatasetRegistry {
    pub fn validate(&self) -> Result<()> {
        let targets = self
            .entries
            .iter()
            .filter(|e| e.role == DatasetRole::Target)
            .count();
        if targets > 1 {
            return Err(Error::validation(format!(
                "registry has {targets} target entries; at most one is allowed"
            )));
        }
        for e in &self.entries {
            if e.role == DatasetRole::Source && e.samples.is_empty() {
                return Err(Error::validation(format!(
                    "source dataset {} has no samples",
                    e.config.task_name
                )));
            }
        }
        Ok(())
    }

    pub fn sources(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries
            .iter()
            .filter(|e| e.role == DatasetRole::Source)
    }
}

/// Loads a JSON-lines dataset (keys `text_a`, optional `text_b`, `label`) and
/// validates every record against the task's class labels. Record order is
/// preserved.
pub fn load_task_dataset(path: impl AsRef<Path>, config: &TaskConfig) -> Result<Vec<RawSample>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: RawSample = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: idx + 1,
            msg: format!("malformed record: {e}"),
        })?;
        if sample.text_a.trim().is_empty() {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "text_a is empty".into(),
            });
        }
        if !config.class_labels.contains(&sample.label) {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("unknown label {:?}", sample.label),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabularyFile {
    tokens: Vec<String>,
    specials: BTreeMap<String, String>,
}

/// Bijection between tokens and ids `0..len`. Ids 0..5 are the special
/// tokens, in [`SPECIAL_TOKENS`] order; content tokens follow in descending
/// frequency with lexicographic tie-break.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(content_tokens: Vec<String>) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(content_tokens);
        let mut index = HashMap::new();
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::validation(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pad_id(&self) -> usize {
        0
    }
    pub fn unk_id(&self) -> usize {
        1
    }
    pub fn mask_id(&self) -> usize {
        2
    }
    pub fn bos_id(&self) -> usize {
        3
    }
    pub fn eos_id(&self) -> usize {
        4
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or_else(|| self.unk_id())
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Content (non-special) tokens with their ids.
    pub fn content_tokens(&self) -> impl Iterator<Item = (usize, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .skip(SPECIAL_TOKENS.len())
            .map(|(id, t)| (id, t.as_str()))
    }

    fn to_file(&self) -> VocabularyFile {
        VocabularyFile {
            tokens: self.tokens[SPECIAL_TOKENS.len()..].to_vec(),
            specials: [
                ("pad", PAD_TOKEN),
                ("unk", UNK_TOKEN),
                ("mask", MASK_TOKEN),
                ("bos", BOS_TOKEN),
                ("eos", EOS_TOKEN),
            ]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_file())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: VocabularyFile = serde_json::from_str(&text)?;
        Vocabulary::from_tokens(file.tokens)
    }

    /// Stable content hash, used to refuse mixing artifacts compiled against
    /// different vocabularies.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for tok in &self.tokens {
            hasher.update(tok.as_bytes());
            hasher.update([0u8]);
        }
        hex_digest(hasher)
    }
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    let bytes = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Builds the vocabulary from dataset texts plus an auxiliary corpus.
///
/// Content tokens pass a `min_count` frequency filter; template and option
/// literal tokens and verbalizer label words are always included (label words
/// bypass the filter entirely). A label word that tokenizes to more than one
/// token is rejected.
pub fn build_vocabulary<I, S>(
    registry: &DatasetRegistry,
    configs: &[&TaskConfig],
    corpus_tokens: I,
    min_count: usize,
) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if min_count < 1 {
        return Err(Error::validation("min_count must be >= 1"));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let bump = |tok: &str, counts: &mut HashMap<String, u64>| {
        if !SPECIAL_TOKENS.contains(&tok) {
            *counts.entry(tok.to_string()).or_insert(0) += 1;
        }
    };
    for entry in &registry.entries {
        for sample in &entry.samples {
            for tok in tokenize(&sample.text_a) {
                bump(&tok, &mut counts);
            }
            if let Some(b) = &sample.text_b {
                for tok in tokenize(b) {
                    bump(&tok, &mut counts);
                }
            }
        }
    }
    for word in corpus_tokens {
        for tok in tokenize(word.as_ref()) {
            bump(&tok, &mut counts);
        }
    }

    // Template/option literals and label words are forced in regardless of
    // frequency.
    let mut forced: Vec<String> = Vec::new();
    for config in configs {
        for t in &config.templates {
            let ast = pov_engine::parse_template(t)?;
            forced.extend(ast.literal_tokens().map(str::to_string));
        }
        for o in &config.options {
            let expr = pov_engine::parse_options(o, config.num_classes())?;
            forced.extend(expr.literal_tokens().map(str::to_string));
        }
        for v in &config.verbalizers {
            for word in v.values() {
                let toks = tokenize(word);
                if toks.len() != 1 {
                    return Err(Error::validation(format!(
                        "task {}: label word {word:?} tokenizes to {} tokens; \
                         single-token label words are required",
                        config.task_name,
                        toks.len()
                    )));
                }
                forced.push(toks.into_iter().next().unwrap());
            }
        }
    }

    let forced_set: std::collections::HashSet<String> = forced
        .into_iter()
        .filter(|t| !SPECIAL_TOKENS.contains(&t.as_str()))
        .collect();
    let mut selected: Vec<(String, u64)> = Vec::new();
    for (tok, &count) in &counts {
        if count as usize >= min_count || forced_set.contains(tok) {
            selected.push((tok.clone(), count));
        }
    }
    for tok in &forced_set {
        if !counts.contains_key(tok) {
            selected.push((tok.clone(), 0));
        }
    }
    selected.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    Vocabulary::from_tokens(selected.into_iter().map(|(t, _)| t).collect())
}
