//! The Options Knowledge Repository: adjective mining over a pre-tagged
//! corpus, seeded K-Means clustering of word vectors, and the
//! dissimilar-cluster query that supplies alternative label words.
//!
//! Part-of-speech tagging is external; this module consumes a tagged-corpus
//! file produced upstream. Vectors are L2-normalized before clustering by
//! default so Euclidean K-Means approximates the cosine geometry used by the
//! query; a flag disables this.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The coarse part-of-speech tag that marks maskable words.
pub const ADJECTIVE_TAG: &str = "ADJ";

/// One token of the pre-tagged corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    /// Surface form.
    #[serde(rename = "t")]
    pub surface: String,
    /// Coarse POS tag, e.g. `ADJ`.
    #[serde(rename = "p")]
    pub pos: String,
}

impl TaggedToken {
    pub fn is_adjective(&self) -> bool {
        self.pos.eq_ignore_ascii_case(ADJECTIVE_TAG)
    }
}

/// One sentence of the tagged corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub sentence_id: u64,
    pub tokens: Vec<TaggedToken>,
}

/// Loads a tagged-corpus file: JSON-lines, one sentence per line.
pub fn load_tagged_corpus(path: impl AsRef<Path>) -> Result<Vec<TaggedSentence>> {
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
            msg: format!("malformed tagged sentence: {e}"),
        })?);
    }
    Ok(out)
}

/// A word-vector table, one line per word: `word v1 v2 ... vd`.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut table = HashMap::new();
    let mut dim = None;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts
            .next()
            .ok_or_else(|| Error::Record {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "empty embedding row".into(),
            })?
            .to_lowercase();
        let vector: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Record {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("bad float: {e}"),
            })?;
        if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "embedding must be a non-empty finite vector".into(),
            });
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(Error::Record {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("dimension {} differs from {}", vector.len(), d),
                })
            }
            _ => {}
        }
        table.insert(word, vector);
    }
    Ok(table)
}

/// Writes a word-vector table in the same format, rows sorted by word for
/// determinism. Values are printed with 6 decimals.
pub fn save_embeddings(path: impl AsRef<Path>, table: &[(String, Vec<f64>)]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for (word, vector) in table {
        let mut line = word.clone();
        for v in vector {
            line.push_str(&format!(" {v:.6}"));
        }
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// The triple (word, vector, cluster).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OkrEntry {
    pub word: String,
    pub vector: Vec<f64>,
    pub cluster: usize,
}

/// The clustered repository of candidate label words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OkrRepository {
    pub k: usize,
    pub dim: usize,
    pub normalized: bool,
    pub build_seed: u64,
    pub centroids: Vec<Vec<f64>>,
    pub entries: Vec<OkrEntry>,
}

impl OkrRepository {
    pub fn contains(&self, word: &str) -> bool {
        self.entries.iter().any(|e| e.word == word)
    }

    pub fn entry(&self, word: &str) -> Option<&OkrEntry> {
        self.entries.iter().find(|e| e.word == word)
    }

    /// Members of one cluster, in entry order.
    pub fn cluster_members(&self, cluster: usize) -> impl Iterator<Item = &OkrEntry> {
        self.entries.iter().filter(move |e| e.cluster == cluster)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for e in &self.entries {
            sizes[e.cluster] += 1;
        }
        sizes
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Collects lowercased adjectives with frequency >= `min_freq`, sorted by
/// descending count then lexicographic.
pub fn extract_candidates<'a, I>(corpus: I, min_freq: usize) -> Result<Vec<(String, usize)>>
where
    I: IntoIterator<Item = &'a TaggedToken>,
{
    if min_freq < 1 {
        return Err(Error::validation("min_freq must be >= 1"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for token in corpus {
        if token.is_adjective() && !token.surface.is_empty() {
            *counts.entry(token.surface.to_lowercase()).or_insert(0) += 1;
        }
    }
    let mut out: Vec<(String, usize)> =
        counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
    out.sort_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));
    Ok(out)
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Cosine similarity, with zero vectors defined as similarity 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Summary of a repository build.
#[derive(Debug, Clone, Default)]
pub struct BuildStats {
    pub words_without_embedding: usize,
    pub iterations: usize,
    pub final_sse: f64,
}

/// Clusters the given words with seeded Lloyd's K-Means (k-means++-style
/// initialization, Euclidean distance). Words lacking an embedding are
/// dropped and counted. Deterministic for a fixed seed.
#[allow(clippy::too_many_arguments)]
pub fn build_okr(
    words: &[String],
    embeddings: &HashMap<String, Vec<f64>>,
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
    normalize: bool,
) -> Result<(OkrRepository, BuildStats)> {
    if tol <= 0.0 {
        return Err(Error::validation("tol must be > 0"));
    }
    let mut stats = BuildStats::default();
    let mut usable: Vec<(String, Vec<f64>)> = Vec::new();
    for word in words {
        let word = word.to_lowercase();
        match embeddings.get(&word) {
            Some(v) => {
                let mut v = v.clone();
                if normalize {
                    let n = l2_norm(&v);
                    if n == 0.0 {
                        return Err(Error::validation(format!(
                            "word {word:?} has a zero vector; cannot normalize"
                        )));
                    }
                    v.iter_mut().for_each(|x| *x /= n);
                }
                usable.push((word, v));
            }
            None => stats.words_without_embedding += 1,
        }
    }
    if k < 2 || k > usable.len() {
        return Err(Error::validation(format!(
            "k = {k} outside [2, {}] (usable words)",
            usable.len()
        )));
    }
    let dim = usable[0].1.len();
    let first = &usable[0].1;
    if usable.iter().all(|(_, v)| v == first) {
        return Err(Error::validation(
            "degenerate clustering input: all vectors identical",
        ));
    }

    let points: Vec<&Vec<f64>> = usable.iter().map(|(_, v)| v).collect();
    let mut rng = crate::seeded_rng(seed);
    let mut centroids = kmeans_pp_init(&points, k, &mut rng);

    let mut assignments = vec![0usize; points.len()];
    let mut prev_sse = f64::INFINITY;
    for iter in 0..max_iters {
        // assignment step
        let mut sse = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, d) = nearest_centroid(p, &centroids);
            assignments[i] = best;
            sse += d;
        }
        debug_assert!(
            sse <= prev_sse + 1e-9,
            "K-Means SSE increased: {prev_sse} -> {sse}"
        );
        prev_sse = sse;
        stats.final_sse = sse;
        stats.iterations = iter + 1;

        // update step
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assignments[i]] += 1;
            for (s, &x) in sums[assignments[i]].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        // An emptied cluster takes over the point farthest from its centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centroids[assignments[i]])))
                    .max_by(|(ia, da), (ib, db)| {
                        da.partial_cmp(db).unwrap().then_with(|| ia.cmp(ib))
                    })
                    .unwrap();
                let old = assignments[far];
                counts[old] -= 1;
                for (s, &x) in sums[old].iter_mut().zip(points[far].iter()) {
                    *s -= x;
                }
                assignments[far] = c;
                counts[c] = 1;
                sums[c] = points[far].clone();
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }
        if shift < tol {
            // one last assignment pass against the final centroids
            for (i, p) in points.iter().enumerate() {
                assignments[i] = nearest_centroid(p, &centroids).0;
            }
            break;
        }
    }

    let entries = usable
        .into_iter()
        .zip(&assignments)
        .map(|((word, vector), &cluster)| OkrEntry {
            word,
            vector,
            cluster,
        })
        .collect();
    Ok((
        OkrRepository {
            k,
            dim,
            normalized: normalize,
            build_seed: seed,
            centroids,
            entries,
        },
        stats,
    ))
}

fn nearest_centroid(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = sq_dist(p, &centroids[0]);
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    (best, best_d)
}

fn kmeans_pp_init(points: &[&Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());
    let mut dists: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in dists.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (d, p) in dists.iter_mut().zip(points.iter()) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// Returns the cluster whose centroid is least cosine-similar to the word's
/// vector; ties break to the lowest cluster index. The word's own cluster is
/// not excluded.
pub fn query_dissimilar(repo: &OkrRepository, word: &str) -> Result<usize> {
    let entry = repo
        .entry(word)
        .ok_or_else(|| Error::validation(format!("word {word:?} not in repository")))?;
    let mut best = 0;
    let mut best_sim = cosine(&entry.vector, &repo.centroids[0]);
    for (c, centroid) in repo.centroids.iter().enumerate().skip(1) {
        let sim = cosine(&entry.vector, centroid);
        if sim < best_sim {
            best = c;
            best_sim = sim;
        }
    }
    Ok(best)
}

/// Draws a uniform alternative word from the dissimilar cluster, excluding
/// the query word itself.
pub fn sample_alternative(repo: &OkrRepository, word: &str, rng: &mut impl Rng) -> Result<String> {
    let cluster = query_dissimilar(repo, word)?;
    let members: Vec<&str> = repo
        .cluster_members(cluster)
        .map(|e| e.word.as_str())
        .filter(|w| *w != word)
        .collect();
    if members.is_empty() {
        return Err(Error::validation(format!(
            "no alternative available: dissimilar cluster of {word:?} contains only the word itself"
        )));
    }
    Ok(members[rng.gen_range(0..members.len())].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tok(surface: &str, pos: &str) -> TaggedToken {
        TaggedToken {
            surface: surface.into(),
            pos: pos.into(),
        }
    }

    #[test]
    fn extract_candidates_filters_pos_and_frequency() {
        let corpus: Vec<TaggedToken> = std::iter::repeat_n(tok("good", "ADJ"), 3)
            .chain(std::iter::repeat_n(tok("run", "VERB"), 5))
            .chain(std::iter::once(tok("bad", "ADJ")))
            .collect();
        assert_eq!(
            extract_candidates(&corpus, 2).unwrap(),
            vec![("good".to_string(), 3)]
        );
        assert_eq!(
            extract_candidates(&corpus, 1).unwrap(),
            vec![("good".to_string(), 3), ("bad".to_string(), 1)]
        );
        let verbs: Vec<TaggedToken> = vec![tok("run", "VERB"), tok("walk", "VERB")];
        assert!(extract_candidates(&verbs, 1).unwrap().is_empty());
    }

    fn square_embeddings() -> HashMap<String, Vec<f64>> {
        HashMap::from([
            ("p00".to_string(), vec![0.0, 0.0]),
            ("p01".to_string(), vec![0.0, 1.0]),
            ("p10".to_string(), vec![10.0, 0.0]),
            ("p11".to_string(), vec![10.0, 1.0]),
        ])
    }

    /// Brute-force oracle: the 2-partition of 4 points minimizing
    /// within-cluster SSE.
    fn brute_force_two_partition(points: &[Vec<f64>]) -> (f64, Vec<usize>) {
        let n = points.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let assign: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut sse = 0.0;
            for c in 0..2 {
                let members: Vec<&Vec<f64>> = points
                    .iter()
                    .zip(&assign)
                    .filter(|(_, a)| **a == c)
                    .map(|(p, _)| p)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let dim = points[0].len();
                let mut mean = vec![0.0; dim];
                for m in &members {
                    for (s, x) in mean.iter_mut().zip(m.iter()) {
                        *s += x;
                    }
                }
                mean.iter_mut().for_each(|s| *s /= members.len() as f64);
                for m in &members {
                    sse += sq_dist(m, &mean);
                }
            }
            if sse < best.0 {
                best = (sse, assign);
            }
        }
        best
    }

    #[test]
    fn kmeans_matches_brute_force_partition_on_four_points() {
        let words: Vec<String> = ["p00", "p01", "p10", "p11"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let emb = square_embeddings();
        let (repo, _) = build_okr(&words, &emb, 2, 17, 100, 1e-9, false).unwrap();
        // points in word order
        let points: Vec<Vec<f64>> = words.iter().map(|w| emb[w].clone()).collect();
        let (_, oracle) = brute_force_two_partition(&points);
        let got: Vec<usize> = words
            .iter()
            .map(|w| repo.entry(w).unwrap().cluster)
            .collect();
        // compare up to relabeling
        let same = got == oracle || got.iter().zip(&oracle).all(|(g, o)| *g == 1 - *o);
        assert!(same, "got {got:?}, oracle {oracle:?}");
        // centroids are the member means
        for c in 0..2 {
            let members: Vec<&OkrEntry> = repo.cluster_members(c).collect();
            let mut mean = [0.0; 2];
            for m in &members {
                for (s, x) in mean.iter_mut().zip(m.vector.iter()) {
                    *s += x;
                }
            }
            mean.iter_mut().for_each(|s| *s /= members.len() as f64);
            for (a, b) in mean.iter().zip(&repo.centroids[c]) {
                assert!((a - b).abs() < 1e-6);
            }
        }
        let mut sizes = repo.cluster_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2]);
    }

    #[test]
    fn kmeans_k_equals_points_is_a_fixed_point() {
        let words: Vec<String> = ["p00", "p01", "p10", "p11"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let emb = square_embeddings();
        let (repo, _) = build_okr(&words, &emb, 4, 3, 100, 1e-9, false).unwrap();
        assert_eq!(repo.cluster_sizes(), vec![1, 1, 1, 1]);
        for e in &repo.entries {
            for (a, b) in e.vector.iter().zip(&repo.centroids[e.cluster]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kmeans_is_deterministic_per_seed() {
        let words: Vec<String> = ["p00", "p01", "p10", "p11"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let emb = square_embeddings();
        let (repo1, _) = build_okr(&words, &emb, 2, 42, 100, 1e-9, false).unwrap();
        let (repo2, _) = build_okr(&words, &emb, 2, 42, 100, 1e-9, false).unwrap();
        assert_eq!(repo1, repo2);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("r1.json");
        let p2 = dir.path().join("r2.json");
        repo1.save(&p1).unwrap();
        repo2.save(&p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn kmeans_rejects_degenerate_input() {
        let words: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let emb = HashMap::from([
            ("a".to_string(), vec![1.0, 1.0]),
            ("b".to_string(), vec![1.0, 1.0]),
            ("c".to_string(), vec![1.0, 1.0]),
        ]);
        let err = build_okr(&words, &emb, 2, 0, 10, 1e-6, false).unwrap_err();
        assert!(err.to_string().contains("degenerate"), "{err}");
        assert!(build_okr(&words, &emb, 5, 0, 10, 1e-6, false).is_err());
    }

    fn hand_repo() -> OkrRepository {
        OkrRepository {
            k: 3,
            dim: 2,
            normalized: false,
            build_seed: 0,
            centroids: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]],
            entries: vec![
                OkrEntry {
                    word: "east".into(),
                    vector: vec![1.0, 0.0],
                    cluster: 0,
                },
                OkrEntry {
                    word: "north".into(),
                    vector: vec![0.0, 1.0],
                    cluster: 1,
                },
                OkrEntry {
                    word: "west".into(),
                    vector: vec![-1.0, 0.0],
                    cluster: 2,
                },
                OkrEntry {
                    word: "farwest".into(),
                    vector: vec![-1.0, -0.1],
                    cluster: 2,
                },
            ],
        }
    }

    #[test]
    fn query_dissimilar_picks_antipodal_centroid() {
        let repo = hand_repo();
        assert_eq!(query_dissimilar(&repo, "east").unwrap(), 2);
    }

    #[test]
    fn query_dissimilar_tie_breaks_to_lowest_cluster() {
        let repo = OkrRepository {
            k: 2,
            dim: 2,
            normalized: false,
            build_seed: 0,
            centroids: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            entries: vec![OkrEntry {
                word: "diag".into(),
                vector: vec![1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()],
                cluster: 0,
            }],
        };
        assert_eq!(query_dissimilar(&repo, "diag").unwrap(), 0);
    }

    #[test]
    fn query_dissimilar_unknown_word_errors() {
        assert!(query_dissimilar(&hand_repo(), "nowhere").is_err());
    }

    #[test]
    fn sample_alternative_singleton_cluster_returns_its_member() {
        let repo = hand_repo();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // east's dissimilar cluster is 2 = {west, farwest}
        let alt = sample_alternative(&repo, "east", &mut rng).unwrap();
        assert!(alt == "west" || alt == "farwest");
        // north's dissimilar cluster: cos with (1,0)=0, (0,1)=1, (-1,0)=0 -> tie 0 vs 2 -> 0 = {east}
        let alt = sample_alternative(&repo, "north", &mut rng).unwrap();
        assert_eq!(alt, "east");
    }

    #[test]
    fn sample_alternative_errors_when_only_self_remains() {
        let mut repo = hand_repo();
        repo.entries
            .retain(|e| e.word != "farwest" && e.word != "west");
        repo.entries.push(OkrEntry {
            word: "east2".into(),
            vector: vec![1.0, 0.0],
            cluster: 2,
        });
        // east2's most dissimilar centroid is cluster 2, whose only member is east2
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_alternative(&repo, "east2", &mut rng).unwrap_err();
        assert!(err.to_string().contains("no alternative"), "{err}");
    }

    #[test]
    fn sample_alternative_is_roughly_uniform() {
        let repo = hand_repo();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let draws = 10_000;
        let mut west = 0u32;
        for _ in 0..draws {
            if sample_alternative(&repo, "east", &mut rng).unwrap() == "west" {
                west += 1;
            }
        }
        // Binomial(10000, 0.5): 3 sigma = 150
        let sigma3 = 3.0 * (draws as f64 * 0.25).sqrt();
        assert!(
            (west as f64 - draws as f64 / 2.0).abs() < sigma3,
            "west drawn {west} times"
        );
    }

    #[test]
    fn repository_save_load_save_is_byte_identical() {
        let repo = hand_repo();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.json");
        let p2 = dir.path().join("b.json");
        repo.save(&p1).unwrap();
        let loaded = OkrRepository::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn embeddings_round_trip_through_text_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let rows = vec![
            ("alpha".to_string(), vec![0.125, -3.5]),
            ("beta".to_string(), vec![1.0, 2.0]),
        ];
        save_embeddings(&path, &rows).unwrap();
        let table = load_embeddings(&path).unwrap();
        for (word, vector) in &rows {
            let got = &table[word];
            for (a, b) in got.iter().zip(vector) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normalization_produces_unit_vectors() {
        let words: Vec<String> = ["p01", "p10", "p11"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let emb = square_embeddings();
        let (repo, _) = build_okr(&words, &emb, 2, 9, 100, 1e-9, true).unwrap();
        for e in &repo.entries {
            assert!((l2_norm(&e.vector) - 1.0).abs() < 1e-6);
        }
    }
}
