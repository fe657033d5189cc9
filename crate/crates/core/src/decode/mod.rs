//! CTC decoding: greedy best-path collapse and prefix beam search with
//! shallow n-gram LM fusion.

mod lm;

pub use lm::{train_lm, LmContext, LmError, NgramLm, BOUNDARY, LM_VOCAB};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::charset::Charset;
use crate::mat::{logsumexp2, Mat};
use crate::textkit::{self, TokenSeq};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub beam_width: usize,
    /// Shallow-fusion LM weight (alpha).
    pub lm_weight: f64,
    /// Per-emitted-character bonus (beta).
    pub insertion_bonus: f64,
    /// Skip character extensions whose frame log posterior is below this.
    pub prune_logp_threshold: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            beam_width: 64,
            lm_weight: 1.2,
            insertion_bonus: 0.5,
            prune_logp_threshold: -12.0,
        }
    }
}

/// CTC collapse: merge adjacent repeats, then delete blanks (index 0).
/// Symbols are output-layer indices; the result maps to charset characters.
pub fn collapse(path: &[usize]) -> String {
    let mut out = String::new();
    let mut prev = usize::MAX;
    for &p in path {
        if p != prev && p != 0 {
            out.push(Charset::char_at(p - 1));
        }
        prev = p;
    }
    out
}

/// Per-frame argmax (ties break to the lowest index), collapsed to a string.
pub fn greedy_decode_chars(log_post: &Mat) -> String {
    let mut path = Vec::with_capacity(log_post.rows());
    for t in 0..log_post.rows() {
        let row = log_post.row(t);
        let mut best = 0usize;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        path.push(best);
    }
    collapse(&path)
}

/// Greedy decode normalized to a token sequence.
pub fn greedy_decode(log_post: &Mat) -> TokenSeq {
    textkit::normalize(&greedy_decode_chars(log_post))
}

#[derive(Clone, Copy)]
struct BeamEntry {
    log_p_blank: f64,
    log_p_nonblank: f64,
}

impl BeamEntry {
    fn empty() -> Self {
        BeamEntry {
            log_p_blank: f64::NEG_INFINITY,
            log_p_nonblank: f64::NEG_INFINITY,
        }
    }

    fn total(&self) -> f64 {
        logsumexp2(self.log_p_blank, self.log_p_nonblank)
    }
}

/// Prefix trie node: prefixes are interned so beam bookkeeping hashes small
/// integer ids instead of strings.
struct PrefixNode {
    parent: u32,
    /// Charset symbol appended by this node; root holds none.
    symbol: Option<u8>,
    lm_context: LmContext,
    /// Accumulated fusion score: sum of alpha*logP(c|ctx) + beta over the
    /// prefix. A function of the prefix alone.
    lm_accum: f64,
}

struct PrefixTrie {
    nodes: Vec<PrefixNode>,
    children: HashMap<(u32, u8), u32>,
}

impl PrefixTrie {
    fn new(root_context: LmContext) -> Self {
        PrefixTrie {
            nodes: vec![PrefixNode {
                parent: 0,
                symbol: None,
                lm_context: root_context,
                lm_accum: 0.0,
            }],
            children: HashMap::new(),
        }
    }

    fn child(&mut self, node: u32, sym: u8, lm: &NgramLm, cfg: &DecoderConfig) -> u32 {
        if let Some(&c) = self.children.get(&(node, sym)) {
            return c;
        }
        let parent = &self.nodes[node as usize];
        let lm_score = if cfg.lm_weight == 0.0 {
            0.0
        } else {
            cfg.lm_weight * lm.log_prob(parent.lm_context, sym as usize)
        };
        let new = PrefixNode {
            parent: node,
            symbol: Some(sym),
            lm_context: lm.extend_context(parent.lm_context, sym as usize),
            lm_accum: parent.lm_accum + lm_score + cfg.insertion_bonus,
        };
        let id = self.nodes.len() as u32;
        self.nodes.push(new);
        self.children.insert((node, sym), id);
        id
    }

    fn materialize(&self, mut node: u32) -> String {
        let mut symbols = Vec::new();
        while let Some(sym) = self.nodes[node as usize].symbol {
            symbols.push(sym);
            node = self.nodes[node as usize].parent;
        }
        symbols.reverse();
        symbols
            .into_iter()
            .map(|s| Charset::char_at(s as usize))
            .collect()
    }
}

/// CTC prefix beam search with shallow LM fusion.
///
/// Per prefix, blank-terminated and symbol-terminated log masses are kept
/// separately; extending a prefix by character `c` adds
/// `alpha * log P_lm(c | context) + beta` to its score. Returns the
/// highest-scoring prefix as a raw character string plus its score.
pub fn beam_decode_chars(log_post: &Mat, lm: &NgramLm, cfg: &DecoderConfig) -> (String, f64) {
    assert!(cfg.beam_width >= 1);
    let n_chars = log_post.cols() - 1; // output 0 is blank
    let mut trie = PrefixTrie::new(lm.start_context());
    // (node id, masses), kept sorted by node id for deterministic iteration
    let mut beams: Vec<(u32, BeamEntry)> = vec![(
        0,
        BeamEntry {
            log_p_blank: 0.0,
            log_p_nonblank: f64::NEG_INFINITY,
        },
    )];

    let mut next: HashMap<u32, BeamEntry> = HashMap::new();
    for t in 0..log_post.rows() {
        let row = log_post.row(t);
        next.clear();
        for &(node, entry) in &beams {
            let total = entry.total();
            let node_sym = trie.nodes[node as usize].symbol;

            // stay on this prefix via blank
            let e = next.entry(node).or_insert_with(BeamEntry::empty);
            e.log_p_blank = logsumexp2(e.log_p_blank, total + row[0]);

            // stay via a repeated final symbol (no new character emitted)
            if let Some(sym) = node_sym {
                let lp = row[sym as usize + 1];
                let e = next.entry(node).or_insert_with(BeamEntry::empty);
                e.log_p_nonblank = logsumexp2(e.log_p_nonblank, entry.log_p_nonblank + lp);
            }

            // extend by each character
            for c in 0..n_chars {
                let lp = row[c + 1];
                if lp < cfg.prune_logp_threshold {
                    continue;
                }
                let sym = c as u8;
                // extending by the final symbol again requires a blank in
                // between, so only the blank mass flows
                let mass = if node_sym == Some(sym) {
                    entry.log_p_blank
                } else {
                    total
                };
                if mass == f64::NEG_INFINITY {
                    continue;
                }
                let child = trie.child(node, sym, lm, cfg);
                let e = next.entry(child).or_insert_with(BeamEntry::empty);
                e.log_p_nonblank = logsumexp2(e.log_p_nonblank, mass + lp);
            }
        }

        beams = next.drain().collect();
        beams.sort_by(|(ida, a), (idb, b)| {
            let sa = a.total() + trie.nodes[*ida as usize].lm_accum;
            let sb = b.total() + trie.nodes[*idb as usize].lm_accum;
            sb.partial_cmp(&sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ida.cmp(idb))
        });
        beams.truncate(cfg.beam_width);
        beams.sort_by_key(|&(id, _)| id);
    }

    let (best_id, best_score) = beams
        .iter()
        .map(|&(id, e)| (id, e.total() + trie.nodes[id as usize].lm_accum))
        .max_by(|(ida, sa), (idb, sb)| {
            sa.partial_cmp(sb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(idb.cmp(ida))
        })
        .expect("beam never empties");
    (trie.materialize(best_id), best_score)
}

/// Beam decode normalized to a token sequence.
pub fn beam_decode(log_post: &Mat, lm: &NgramLm, cfg: &DecoderConfig) -> TokenSeq {
    textkit::normalize(&beam_decode_chars(log_post, lm, cfg).0)
}
