//! Text normalization, minimal edit-distance alignment, and word error rate.
//!
//! Every experiment in the workbench is scored through this module, and the
//! error-analysis reports are built from its alignments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextkitError {
    #[error("reference is empty; WER is undefined")]
    EmptyReference,
    #[error("corpus contains no scorable pairs")]
    EmptyCorpus,
}

/// An ordered sequence of lowercase word tokens. No casing, no punctuation
/// beyond intra-word apostrophes, no empty tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty()));
        TokenSeq(tokens)
    }

    /// Parse a previously serialized token sequence (whitespace separated).
    pub fn parse(s: &str) -> Self {
        TokenSeq(s.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, token: String) {
        debug_assert!(!token.is_empty());
        self.0.push(token);
    }
}

impl std::fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0.join(" "))
    }
}

impl FromIterator<String> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<&'a str> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().map(str::to_owned).collect())
    }
}

/// Lowercase, strip punctuation (keeping intra-word apostrophes), and split
/// on whitespace. Digits pass through as tokens; they are not spelled out.
pub fn normalize(raw: &str) -> TokenSeq {
    let mut cleaned = String::with_capacity(raw.len());
    for c in raw.chars() {
        if c.is_ascii_alphanumeric() {
            cleaned.push(c.to_ascii_lowercase());
        } else if c == '\'' {
            cleaned.push('\'');
        } else {
            cleaned.push(' ');
        }
    }
    cleaned
        .split_whitespace()
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// One step of a token alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EditOp {
    Match(String),
    Substitute { ref_tok: String, hyp_tok: String },
    Delete(String),
    Insert(String),
}

/// A minimal-cost alignment between a reference and a hypothesis under unit
/// edit costs. Replaying the ref side reconstructs the reference; the hyp
/// side reconstructs the hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
}

impl Alignment {
    pub fn cost(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| !matches!(op, EditOp::Match(_)))
            .count()
    }

    pub fn counts(&self) -> (usize, usize, usize, usize) {
        let (mut m, mut s, mut d, mut i) = (0, 0, 0, 0);
        for op in &self.ops {
            match op {
                EditOp::Match(_) => m += 1,
                EditOp::Substitute { .. } => s += 1,
                EditOp::Delete(_) => d += 1,
                EditOp::Insert(_) => i += 1,
            }
        }
        (m, s, d, i)
    }

    /// Reconstruct the reference from the ref-side ops.
    pub fn replay_ref(&self) -> TokenSeq {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Match(t) | EditOp::Delete(t) => Some(t.clone()),
                EditOp::Substitute { ref_tok, .. } => Some(ref_tok.clone()),
                EditOp::Insert(_) => None,
            })
            .collect()
    }

    /// Reconstruct the hypothesis from the hyp-side ops.
    pub fn replay_hyp(&self) -> TokenSeq {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Match(t) | EditOp::Insert(t) => Some(t.clone()),
                EditOp::Substitute { hyp_tok, .. } => Some(hyp_tok.clone()),
                EditOp::Delete(_) => None,
            })
            .collect()
    }
}

/// Substitution/deletion/insertion counts and the derived word error rate.
/// `wer` may exceed 1.0 when the hypothesis inserts words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub n_ref: usize,
    pub subs: usize,
    pub dels: usize,
    pub ins: usize,
    pub wer: f64,
}

impl WerReport {
    fn from_counts(n_ref: usize, subs: usize, dels: usize, ins: usize) -> Self {
        WerReport {
            n_ref,
            subs,
            dels,
            ins,
            wer: (subs + dels + ins) as f64 / n_ref as f64,
        }
    }
}

/// Minimal-cost alignment via dynamic programming over unit costs.
///
/// Ties in the traceback are broken deterministically with the preference
/// order match > substitute > delete > insert, so error-type breakdowns are
/// reproducible.
pub fn align(reference: &TokenSeq, hypothesis: &TokenSeq) -> Alignment {
    let r = reference.tokens();
    let h = hypothesis.tokens();
    let (n, m) = (r.len(), h.len());

    let mut cost = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        cost[idx(i, 0)] = i;
    }
    for j in 0..=m {
        cost[idx(0, j)] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[idx(i - 1, j - 1)] + usize::from(r[i - 1] != h[j - 1]);
            let del = cost[idx(i - 1, j)] + 1;
            let ins = cost[idx(i, j - 1)] + 1;
            cost[idx(i, j)] = diag.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let c = cost[idx(i, j)];
        if i > 0 && j > 0 && r[i - 1] == h[j - 1] && c == cost[idx(i - 1, j - 1)] {
            ops.push(EditOp::Match(r[i - 1].clone()));
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && c == cost[idx(i - 1, j - 1)] + 1 {
            ops.push(EditOp::Substitute {
                ref_tok: r[i - 1].clone(),
                hyp_tok: h[j - 1].clone(),
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && c == cost[idx(i - 1, j)] + 1 {
            ops.push(EditOp::Delete(r[i - 1].clone()));
            i -= 1;
        } else {
            ops.push(EditOp::Insert(h[j - 1].clone()));
            j -= 1;
        }
    }
    ops.reverse();
    Alignment { ops }
}

/// WER of a single utterance. Errors when the reference is empty.
pub fn wer(reference: &TokenSeq, hypothesis: &TokenSeq) -> Result<WerReport, TextkitError> {
    if reference.is_empty() {
        return Err(TextkitError::EmptyReference);
    }
    let (_, s, d, i) = align(reference, hypothesis).counts();
    Ok(WerReport::from_counts(reference.len(), s, d, i))
}

/// Pooled corpus WER: summed counts over all pairs divided by summed
/// reference length, not the mean of per-utterance rates.
pub fn corpus_wer<'a, I>(pairs: I) -> Result<WerReport, TextkitError>
where
    I: IntoIterator<Item = (&'a TokenSeq, &'a TokenSeq)>,
{
    let (mut n_ref, mut subs, mut dels, mut ins) = (0usize, 0usize, 0usize, 0usize);
    for (r, h) in pairs {
        let (_, s, d, i) = align(r, h).counts();
        n_ref += r.len();
        subs += s;
        dels += d;
        ins += i;
    }
    if n_ref == 0 {
        return Err(TextkitError::EmptyCorpus);
    }
    Ok(WerReport::from_counts(n_ref, subs, dels, ins))
}
