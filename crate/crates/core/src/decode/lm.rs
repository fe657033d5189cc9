//! Add-k smoothed character n-gram language model over the charset plus a
//! sentence-boundary marker.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::charset::{Charset, N_SYMBOLS};
use crate::textkit::TokenSeq;

/// Symbol id of the sentence-boundary marker.
pub const BOUNDARY: usize = N_SYMBOLS;
/// Smoothing vocabulary size: charset symbols, the boundary marker, and one
/// reserved slot (the model-side blank, which never occurs in text but keeps
/// the smoothing denominator aligned with the 29-way output alphabet).
pub const LM_VOCAB: usize = N_SYMBOLS + 2;

/// Rendering of the boundary marker in the LM file format.
const BOUNDARY_CHAR: char = '$';

#[derive(Debug, Error)]
pub enum LmError {
    #[error("cannot train a language model on an empty corpus")]
    EmptyCorpus,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: bad language model file: {reason}")]
    BadFile {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Rolling left context of the last `n-1` symbols, encoded base-31.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LmContext(u64);

#[derive(Debug, Clone)]
struct CtxCounts {
    counts: [u32; LM_VOCAB],
    total: u32,
}

impl Default for CtxCounts {
    fn default() -> Self {
        CtxCounts {
            counts: [0; LM_VOCAB],
            total: 0,
        }
    }
}

/// Character n-gram model with add-k smoothing:
/// `P(c | ctx) = (count(ctx, c) + k) / (total(ctx) + k * |V|)` with
/// `|V| = 30`. Probabilities over the vocabulary sum to one for every
/// context, including unseen ones (uniform `1/|V|`).
#[derive(Debug, Clone)]
pub struct NgramLm {
    n: usize,
    k: f64,
    counts: HashMap<u64, CtxCounts>,
    ctx_modulus: u64,
}

impl NgramLm {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn add_k(&self) -> f64 {
        self.k
    }

    /// Context at the start of a sentence: n-1 boundary markers.
    pub fn start_context(&self) -> LmContext {
        let mut ctx = LmContext(0);
        for _ in 0..self.n - 1 {
            ctx = self.extend_context(ctx, BOUNDARY);
        }
        ctx
    }

    /// Shift `symbol` into the context window.
    pub fn extend_context(&self, ctx: LmContext, symbol: usize) -> LmContext {
        debug_assert!(
            symbol < LM_VOCAB - 1,
            "reserved symbol never occurs in text"
        );
        LmContext((ctx.0 * 31 + symbol as u64) % self.ctx_modulus)
    }

    /// `log P(symbol | ctx)` under add-k smoothing.
    pub fn log_prob(&self, ctx: LmContext, symbol: usize) -> f64 {
        debug_assert!(symbol < LM_VOCAB);
        let (count, total) = match self.counts.get(&ctx.0) {
            Some(c) => {
                debug_assert_eq!(
                    c.counts.iter().sum::<u32>(),
                    c.total,
                    "context counts out of sync with total"
                );
                (c.counts[symbol], c.total)
            }
            None => (0, 0),
        };
        ((f64::from(count) + self.k) / (f64::from(total) + self.k * LM_VOCAB as f64)).ln()
    }

    fn record(&mut self, ctx: LmContext, symbol: usize) {
        let e = self.counts.entry(ctx.0).or_default();
        e.counts[symbol] += 1;
        e.total += 1;
    }

    /// Write the canonical line-based format: a header
    /// `wsplm v1 n=<n> k=<k>`, then `context<TAB>char<TAB>count` rows sorted
    /// lexicographically. The boundary marker renders as `$`.
    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let io_err = |source| LmError::Io {
            path: path.to_owned(),
            source,
        };
        let render = |sym: usize| -> char {
            if sym == BOUNDARY {
                BOUNDARY_CHAR
            } else {
                Charset::char_at(sym)
            }
        };
        let mut rows: Vec<(String, char, u32)> = Vec::new();
        for (&code, counts) in &self.counts {
            let ctx_str: String = self.decode_context(code).into_iter().map(render).collect();
            for (sym, &count) in counts.counts.iter().enumerate() {
                if count > 0 {
                    rows.push((ctx_str.clone(), render(sym), count));
                }
            }
        }
        rows.sort();
        let mut out = String::new();
        out.push_str(&format!("wsplm v1 n={} k={}\n", self.n, self.k));
        for (ctx, ch, count) in rows {
            out.push_str(&format!("{ctx}\t{ch}\t{count}\n"));
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(out.as_bytes()).map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let content = fs::read_to_string(path).map_err(|source| LmError::Io {
            path: path.to_owned(),
            source,
        })?;
        let bad = |line: usize, reason: String| LmError::BadFile {
            path: path.to_owned(),
            line,
            reason,
        };
        let mut lines = content.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(0, "empty file".into()))?;
        let mut n = None;
        let mut k = None;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("wsplm") || parts.next() != Some("v1") {
            return Err(bad(1, format!("bad header {header:?}")));
        }
        for part in parts {
            if let Some(v) = part.strip_prefix("n=") {
                n = v.parse::<usize>().ok();
            } else if let Some(v) = part.strip_prefix("k=") {
                k = v.parse::<f64>().ok();
            }
        }
        let (n, k) = match (n, k) {
            (Some(n), Some(k)) if n >= 1 => (n, k),
            _ => return Err(bad(1, format!("bad header {header:?}"))),
        };

        let mut lm = NgramLm::empty(n, k);
        let parse_sym = |c: char| -> Option<usize> {
            if c == BOUNDARY_CHAR {
                Some(BOUNDARY)
            } else {
                Charset::index_of(c)
            }
        };
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (ctx_str, ch_str, count_str) =
                match (fields.next(), fields.next(), fields.next(), fields.next()) {
                    (Some(a), Some(b), Some(c), None) => (a, b, c),
                    _ => return Err(bad(i + 1, "expected three tab-separated fields".into())),
                };
            let mut ctx = LmContext(0);
            let mut ctx_len = 0usize;
            for c in ctx_str.chars() {
                let sym =
                    parse_sym(c).ok_or_else(|| bad(i + 1, format!("bad context symbol {c:?}")))?;
                ctx = lm.extend_context(ctx, sym);
                ctx_len += 1;
            }
            if ctx_len != n - 1 {
                return Err(bad(
                    i + 1,
                    format!("context length {ctx_len}, expected {}", n - 1),
                ));
            }
            let mut chars = ch_str.chars();
            let (ch, extra) = (chars.next(), chars.next());
            let sym = match (ch.and_then(parse_sym), extra) {
                (Some(s), None) => s,
                _ => return Err(bad(i + 1, format!("bad symbol field {ch_str:?}"))),
            };
            let count: u32 = count_str
                .parse()
                .map_err(|_| bad(i + 1, format!("bad count {count_str:?}")))?;
            let e = lm.counts.entry(ctx.0).or_default();
            e.counts[sym] += count;
            e.total += count;
        }
        Ok(lm)
    }

    fn empty(n: usize, k: f64) -> Self {
        assert!(n >= 1, "order must be >= 1");
        assert!(k > 0.0, "add-k constant must be positive");
        let ctx_modulus = 31u64
            .checked_pow((n - 1) as u32)
            .expect("order too large for the context encoding")
            .max(1);
        NgramLm {
            n,
            k,
            counts: HashMap::new(),
            ctx_modulus,
        }
    }

    fn decode_context(&self, code: u64) -> Vec<usize> {
        let mut syms = vec![0usize; self.n - 1];
        let mut rest = code;
        for slot in (0..self.n - 1).rev() {
            syms[slot] = (rest % 31) as usize;
            rest /= 31;
        }
        syms
    }
}

/// Train an add-k character n-gram model over the serialized transcripts,
/// with boundary padding at the start and a boundary count at the end of
/// every sentence.
pub fn train_lm(texts: &[TokenSeq], n: usize, k: f64) -> Result<NgramLm, LmError> {
    if texts.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let mut lm = NgramLm::empty(n, k);
    for text in texts {
        let serialized = text.to_string();
        let mut ctx = lm.start_context();
        for c in serialized.chars() {
            let sym = Charset::index_of(c)
                .unwrap_or_else(|| panic!("transcript contains non-charset char {c:?}"));
            lm.record(ctx, sym);
            ctx = lm.extend_context(ctx, sym);
        }
        lm.record(ctx, BOUNDARY);
    }
    Ok(lm)
}
