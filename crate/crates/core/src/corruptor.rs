//! Synthetic transcript corruption: deletions, soundalike / spelled-like
//! substitutions, repetitions, and timestamp-edge errors, in random and full
//! modes, plus corpus-level interpolation of corrupted and gold utterances.
//!
//! All randomness comes from per-utterance keyed streams, so corrupting a
//! corpus is deterministic regardless of worker count, and corrupting any
//! sub-corpus reproduces the full-corpus outputs utterance by utterance.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Utterance;
use crate::rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorruptorError {
    #[error("word {0:?} contains characters outside the charset")]
    InvalidCharset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionMode {
    /// Sparse stochastic mistakes with at least one per corrupted sentence.
    Random,
    /// Every word is misspelled or deleted; the rest follows random mode.
    Full,
}

impl std::fmt::Display for CorruptionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CorruptionMode::Random => write!(f, "random"),
            CorruptionMode::Full => write!(f, "full"),
        }
    }
}

/// Per-word and per-sentence corruption probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionConfig {
    pub mode: CorruptionMode,
    /// Per-word deletion probability.
    pub p_delete: f64,
    /// Per-word substitution probability (random mode; full mode always
    /// substitutes surviving words).
    pub p_substitute: f64,
    /// Per-word repetition probability, applied to the surviving word.
    pub p_repeat: f64,
    /// Per-sentence probability of timestamp-edge corruption.
    pub p_timestamp: f64,
    /// Words dropped or inserted per affected edge: uniform in this range.
    pub edge_words_min: usize,
    pub edge_words_max: usize,
    /// Probability that a substitution is phonetic rather than orthographic.
    pub substitute_soundalike_ratio: f64,
    /// Random mode only: force one substitution when the stochastic pass
    /// leaves the utterance unchanged. Disabled only by tests that need the
    /// raw Bernoulli behaviour.
    pub min_one_mistake: bool,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            mode: CorruptionMode::Random,
            p_delete: 0.05,
            p_substitute: 0.20,
            p_repeat: 0.05,
            p_timestamp: 0.50,
            edge_words_min: 1,
            edge_words_max: 3,
            substitute_soundalike_ratio: 0.5,
            min_one_mistake: true,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("p_delete", self.p_delete),
            ("p_substitute", self.p_substitute),
            ("p_repeat", self.p_repeat),
            ("p_timestamp", self.p_timestamp),
            (
                "substitute_soundalike_ratio",
                self.substitute_soundalike_ratio,
            ),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if self.edge_words_min > self.edge_words_max {
            return Err(format!(
                "edge_words_min {} > edge_words_max {}",
                self.edge_words_min, self.edge_words_max
            ));
        }
        Ok(())
    }
}

/// Counters for the stochastic corruption pass. Rates are per mechanism:
/// `deleted / words_seen`, `substituted / substitution_attempts` (attempts =
/// words surviving deletion with a Bernoulli draw, i.e. random mode),
/// `repeated / repeat_attempts`, `timestamp_corrupted / sentences_seen`.
/// Forced minimum-one-mistake substitutions are counted separately and do
/// not enter the substitution rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorruptionStats {
    pub words_seen: usize,
    pub deleted: usize,
    pub substitution_attempts: usize,
    pub substituted: usize,
    pub repeat_attempts: usize,
    pub repeated: usize,
    pub sentences_seen: usize,
    pub timestamp_corrupted: usize,
    pub forced_substitutions: usize,
    pub degenerate_refills: usize,
}

impl CorruptionStats {
    pub fn merge(&mut self, other: &CorruptionStats) {
        self.words_seen += other.words_seen;
        self.deleted += other.deleted;
        self.substitution_attempts += other.substitution_attempts;
        self.substituted += other.substituted;
        self.repeat_attempts += other.repeat_attempts;
        self.repeated += other.repeated;
        self.sentences_seen += other.sentences_seen;
        self.timestamp_corrupted += other.timestamp_corrupted;
        self.forced_substitutions += other.forced_substitutions;
        self.degenerate_refills += other.degenerate_refills;
    }
}

/// Soundex-style phonetic key: uppercased first letter plus up to three
/// digits from the standard consonant classes, with vowels, h, and w skipped
/// and adjacent duplicate digits collapsed, zero-padded to four characters.
pub fn phonetic_key(word: &str) -> Result<String, CorruptorError> {
    let invalid = || CorruptorError::InvalidCharset(word.to_owned());
    let mut chars = word.chars();
    let first = chars.next().ok_or_else(invalid)?;
    if !word.chars().all(|c| c.is_ascii_lowercase() || c == '\'') {
        return Err(invalid());
    }

    let digit = |c: char| -> Option<u8> {
        match c {
            'b' | 'f' | 'p' | 'v' => Some(1),
            'c' | 'g' | 'j' | 'k' | 'q' | 's' | 'x' | 'z' => Some(2),
            'd' | 't' => Some(3),
            'l' => Some(4),
            'm' | 'n' => Some(5),
            'r' => Some(6),
            _ => None, // vowels, h, w, apostrophe
        }
    };

    let mut key = String::with_capacity(4);
    key.push(first.to_ascii_uppercase());
    let mut prev = digit(first);
    for c in word.chars().skip(1) {
        // vowels/h/w are skipped entirely and do not break duplicate runs
        if let Some(d) = digit(c) {
            if prev != Some(d) {
                key.push(char::from(b'0' + d));
                if key.len() == 4 {
                    break;
                }
            }
            prev = Some(d);
        }
    }
    while key.len() < 4 {
        key.push('0');
    }
    Ok(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborKind {
    Soundalike,
    SpelledLike,
}

/// Offline neighbor lookup: phonetic buckets for soundalikes and a
/// first-letter index for spelled-like candidates within Damerau-Levenshtein
/// distance two. Immutable after construction and safe to share.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    words: Vec<String>,
    phonetic: HashMap<String, Vec<u32>>,
    by_first_letter: HashMap<char, Vec<u32>>,
}

impl NeighborIndex {
    /// Build from a vocabulary. Words are deduplicated and sorted so every
    /// candidate list is deterministic. Words that fail the charset check
    /// get no phonetic bucket but still participate in spelled-like lookup.
    pub fn build(vocab: &[String]) -> Self {
        let mut words: Vec<String> = vocab.to_vec();
        words.sort();
        words.dedup();

        let mut phonetic: HashMap<String, Vec<u32>> = HashMap::new();
        let mut by_first_letter: HashMap<char, Vec<u32>> = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if let Ok(key) = phonetic_key(w) {
                phonetic.entry(key).or_default().push(i as u32);
            }
            if let Some(first) = w.chars().next() {
                by_first_letter.entry(first).or_default().push(i as u32);
            }
        }
        NeighborIndex {
            words,
            phonetic,
            by_first_letter,
        }
    }

    pub fn vocab(&self) -> &[String] {
        &self.words
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn random_word(&self, rng: &mut ChaCha8Rng) -> Option<&str> {
        if self.words.is_empty() {
            return None;
        }
        Some(self.words[rng.random_range(0..self.words.len())].as_str())
    }
}

/// Candidate replacements for `word`, never containing `word` itself.
///
/// Soundalike: vocabulary words sharing the phonetic key. Spelled-like:
/// vocabulary words within Damerau-Levenshtein distance two that share the
/// first letter. When the vocabulary yields nothing, rule-based mutations
/// (duplicate a letter, drop a letter, swap adjacent letters, toggle a final
/// 'e' or 's') guarantee at least one candidate.
pub fn neighbors(word: &str, index: &NeighborIndex, kind: NeighborKind) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    match kind {
        NeighborKind::Soundalike => {
            if let Ok(key) = phonetic_key(word) {
                if let Some(bucket) = index.phonetic.get(&key) {
                    out.extend(
                        bucket
                            .iter()
                            .map(|&i| index.words[i as usize].clone())
                            .filter(|w| w != word),
                    );
                }
            }
        }
        NeighborKind::SpelledLike => {
            if let Some(first) = word.chars().next() {
                if let Some(bucket) = index.by_first_letter.get(&first) {
                    for &i in bucket {
                        let cand = &index.words[i as usize];
                        if cand == word {
                            continue;
                        }
                        if cand.len().abs_diff(word.len()) <= 2
                            && damerau_levenshtein(word, cand) <= 2
                        {
                            out.push(cand.clone());
                        }
                    }
                }
            }
        }
    }
    if out.is_empty() {
        out = rule_based_mutations(word);
    }
    out
}

/// Damerau-Levenshtein distance (adjacent transposition counted as one).
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let mut d = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        d[idx(i, 0)] = i;
    }
    for j in 0..=m {
        d[idx(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[idx(i - 1, j)] + 1)
                .min(d[idx(i, j - 1)] + 1)
                .min(d[idx(i - 1, j - 1)] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[idx(i - 2, j - 2)] + 1);
            }
            d[idx(i, j)] = best;
        }
    }
    d[idx(n, m)]
}

/// Deterministic mutation fallback. Always yields at least one nonempty
/// candidate different from the input (duplicating the first letter never
/// reproduces the input).
fn rule_based_mutations(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out: Vec<String> = Vec::new();
    let push = |cand: String, out: &mut Vec<String>| {
        if !cand.is_empty() && cand != word && !out.contains(&cand) {
            out.push(cand);
        }
    };
    for i in 0..chars.len() {
        let mut c = chars.clone();
        c.insert(i, chars[i]);
        push(c.into_iter().collect(), &mut out);
    }
    for i in 0..chars.len() {
        let mut c = chars.clone();
        c.remove(i);
        push(c.into_iter().collect(), &mut out);
    }
    for i in 0..chars.len().saturating_sub(1) {
        let mut c = chars.clone();
        c.swap(i, i + 1);
        push(c.into_iter().collect(), &mut out);
    }
    for suffix in ['e', 's'] {
        if chars.last() == Some(&suffix) {
            push(word[..word.len() - 1].to_owned(), &mut out);
        } else {
            push(format!("{word}{suffix}"), &mut out);
        }
    }
    out
}

fn substitute_word(
    word: &str,
    cfg: &CorruptionConfig,
    index: &NeighborIndex,
    rng: &mut ChaCha8Rng,
) -> String {
    let kind = if rng.random::<f64>() < cfg.substitute_soundalike_ratio {
        NeighborKind::Soundalike
    } else {
        NeighborKind::SpelledLike
    };
    let cands = neighbors(word, index, kind);
    cands[rng.random_range(0..cands.len())].clone()
}

enum Edge {
    Head,
    Tail,
}

fn corrupt_edge(
    tokens: &mut Vec<String>,
    edge: Edge,
    cfg: &CorruptionConfig,
    index: &NeighborIndex,
    rng: &mut ChaCha8Rng,
) {
    let drop = rng.random::<f64>() < 0.5;
    let k = rng.random_range(cfg.edge_words_min..=cfg.edge_words_max);
    if drop {
        let k = k.min(tokens.len());
        match edge {
            Edge::Head => {
                tokens.drain(..k);
            }
            Edge::Tail => {
                tokens.truncate(tokens.len() - k);
            }
        }
    } else {
        for offset in 0..k {
            let Some(w) = index.random_word(rng) else {
                break;
            };
            match edge {
                Edge::Head => tokens.insert(offset, w.to_owned()),
                Edge::Tail => tokens.push(w.to_owned()),
            }
        }
    }
}

/// Corrupt one utterance, accumulating mechanism counters into `stats`.
///
/// Per word, in draw order: delete, substitute (random mode: Bernoulli; full
/// mode: always), repeat the surviving word. Then, with `p_timestamp`, drop
/// or insert words at the head and/or tail. Random mode forces a
/// substitution if the output still equals the input; an emptied utterance
/// is refilled with a single substituted vocabulary word.
pub fn corrupt_utterance_with_stats(
    utt: &Utterance,
    cfg: &CorruptionConfig,
    index: &NeighborIndex,
    rng: &mut ChaCha8Rng,
    stats: &mut CorruptionStats,
) -> Utterance {
    let words = utt.text.tokens();
    stats.sentences_seen += 1;

    let mut out: Vec<String> = Vec::with_capacity(words.len());
    for word in words {
        stats.words_seen += 1;
        if rng.random::<f64>() < cfg.p_delete {
            stats.deleted += 1;
            continue;
        }
        let mut w = word.clone();
        match cfg.mode {
            CorruptionMode::Random => {
                stats.substitution_attempts += 1;
                if rng.random::<f64>() < cfg.p_substitute {
                    w = substitute_word(&w, cfg, index, rng);
                    stats.substituted += 1;
                }
            }
            CorruptionMode::Full => {
                w = substitute_word(&w, cfg, index, rng);
            }
        }
        out.push(w.clone());
        stats.repeat_attempts += 1;
        if rng.random::<f64>() < cfg.p_repeat {
            out.push(w);
            stats.repeated += 1;
        }
    }

    if rng.random::<f64>() < cfg.p_timestamp {
        stats.timestamp_corrupted += 1;
        let mut head = rng.random::<f64>() < 0.5;
        let mut tail = rng.random::<f64>() < 0.5;
        if !head && !tail {
            if rng.random::<f64>() < 0.5 {
                head = true;
            } else {
                tail = true;
            }
        }
        if head {
            corrupt_edge(&mut out, Edge::Head, cfg, index, rng);
        }
        if tail {
            corrupt_edge(&mut out, Edge::Tail, cfg, index, rng);
        }
    }

    if out.is_empty() {
        stats.degenerate_refills += 1;
        if let Some(w) = index.random_word(rng).map(str::to_owned) {
            out.push(substitute_word(&w, cfg, index, rng));
        }
    }

    if cfg.mode == CorruptionMode::Random && cfg.min_one_mistake && out == words && !out.is_empty()
    {
        let i = rng.random_range(0..out.len());
        out[i] = substitute_word(&out[i], cfg, index, rng);
        stats.forced_substitutions += 1;
    }

    Utterance {
        id: utt.id.clone(),
        text: out.into_iter().collect(),
        start_s: utt.start_s,
        end_s: utt.end_s,
    }
}

/// Corrupt one utterance with a stream keyed by `(seed, utterance id)`.
pub fn corrupt_utterance(
    utt: &Utterance,
    cfg: &CorruptionConfig,
    index: &NeighborIndex,
    seed: u64,
) -> Utterance {
    let mut rng = rng::stream(seed, &["corrupt-utt", &utt.id]);
    let mut stats = CorruptionStats::default();
    corrupt_utterance_with_stats(utt, cfg, index, &mut rng, &mut stats)
}

/// Select `k` of `n` indices uniformly without replacement (partial
/// Fisher-Yates), returned as a sorted membership mask.
fn sample_without_replacement(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut indices: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    let mut mask = vec![false; n];
    for &i in &indices[..k] {
        mask[i] = true;
    }
    mask
}

/// Corrupt exactly `round(fraction * N)` utterances, chosen by seeded uniform
/// sampling without replacement. Order is preserved; untouched utterances
/// are returned as-is. Each corrupted utterance uses an independent stream
/// keyed by `(seed, utterance id)`.
pub fn corrupt_corpus(
    corpus: &[Utterance],
    cfg: &CorruptionConfig,
    index: &NeighborIndex,
    fraction: f64,
    seed: u64,
) -> (Vec<Utterance>, CorruptionStats) {
    let n = corpus.len();
    let k = (fraction * n as f64).round() as usize;
    let mask = sample_without_replacement(n, k, &mut rng::stream(seed, &["corrupt-select"]));

    let results: Vec<(Utterance, CorruptionStats)> = corpus
        .par_iter()
        .zip(mask.par_iter())
        .map(|(utt, &selected)| {
            if selected {
                let mut rng = rng::stream(seed, &["corrupt-utt", &utt.id]);
                let mut stats = CorruptionStats::default();
                let corrupted = corrupt_utterance_with_stats(utt, cfg, index, &mut rng, &mut stats);
                (corrupted, stats)
            } else {
                (utt.clone(), CorruptionStats::default())
            }
        })
        .collect();

    let mut stats = CorruptionStats::default();
    let mut out = Vec::with_capacity(n);
    for (utt, s) in results {
        stats.merge(&s);
        out.push(utt);
    }
    (out, stats)
}
