//! CTC loss via the forward-backward recursion over the blank-augmented
//! trellis, entirely in log space, with the exact analytic gradient with
//! respect to the pre-softmax logits.

use crate::charset::Charset;
use crate::mat::{logsumexp2, logsumexp3, Mat};
use crate::textkit::TokenSeq;

use super::AcousticError;

/// Map a transcript to output-layer label indices (charset index + 1; blank
/// is 0 and never appears in a label). `None` if any character is outside
/// the charset. An empty transcript maps to an empty label.
pub fn label_indices(text: &TokenSeq) -> Option<Vec<usize>> {
    let serialized = text.to_string();
    Charset::encode(&serialized).map(|v| v.into_iter().map(|i| i as usize + 1).collect())
}

/// Minimum number of frames that can emit `label`: its length plus one
/// separating blank per adjacent repeat.
pub fn min_frames_for_label(label: &[usize]) -> usize {
    label.len() + label.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Blank-augmented forward/backward log probabilities for one utterance.
///
/// Both passes include the emission at their own frame, so the total path
/// log-likelihood is recoverable from either end and
/// `alpha[t][s] + beta[t][s] - log_post[t][ext[s]]` is the log mass of all
/// paths through state `s` at frame `t`.
pub struct CtcTrellis {
    /// Extended label: blanks interleaved, length 2L+1.
    pub ext: Vec<usize>,
    pub log_alpha: Mat,
    pub log_beta: Mat,
}

impl CtcTrellis {
    pub fn build(log_post: &Mat, label: &[usize]) -> Result<CtcTrellis, AcousticError> {
        let t_len = log_post.rows();
        let required = min_frames_for_label(label);
        if required > t_len {
            return Err(AcousticError::LabelTooLong {
                required,
                available: t_len,
            });
        }
        debug_assert!(label.iter().all(|&l| l >= 1 && l < log_post.cols()));

        let mut ext = Vec::with_capacity(2 * label.len() + 1);
        ext.push(0);
        for &l in label {
            ext.push(l);
            ext.push(0);
        }
        let s_len = ext.len();

        // Skip from s-2 is allowed when s is a non-blank different from the
        // non-blank two states back.
        let can_skip: Vec<bool> = (0..s_len)
            .map(|s| ext[s] != 0 && s >= 2 && ext[s] != ext[s - 2])
            .collect();

        let mut log_alpha = Mat::zeros(t_len, s_len);
        log_alpha.fill(f64::NEG_INFINITY);
        log_alpha.set(0, 0, log_post.get(0, ext[0]));
        if s_len > 1 {
            log_alpha.set(0, 1, log_post.get(0, ext[1]));
        }
        for t in 1..t_len {
            for s in 0..s_len {
                let stay = log_alpha.get(t - 1, s);
                let step = if s >= 1 {
                    log_alpha.get(t - 1, s - 1)
                } else {
                    f64::NEG_INFINITY
                };
                let skip = if can_skip[s] {
                    log_alpha.get(t - 1, s - 2)
                } else {
                    f64::NEG_INFINITY
                };
                let total = logsumexp3(stay, step, skip);
                if total != f64::NEG_INFINITY {
                    log_alpha.set(t, s, total + log_post.get(t, ext[s]));
                }
            }
        }

        let mut log_beta = Mat::zeros(t_len, s_len);
        log_beta.fill(f64::NEG_INFINITY);
        log_beta.set(
            t_len - 1,
            s_len - 1,
            log_post.get(t_len - 1, ext[s_len - 1]),
        );
        if s_len > 1 {
            log_beta.set(
                t_len - 1,
                s_len - 2,
                log_post.get(t_len - 1, ext[s_len - 2]),
            );
        }
        for t in (0..t_len - 1).rev() {
            for s in 0..s_len {
                let stay = log_beta.get(t + 1, s);
                let step = if s + 1 < s_len {
                    log_beta.get(t + 1, s + 1)
                } else {
                    f64::NEG_INFINITY
                };
                let skip = if s + 2 < s_len && can_skip[s + 2] {
                    log_beta.get(t + 1, s + 2)
                } else {
                    f64::NEG_INFINITY
                };
                let total = logsumexp3(stay, step, skip);
                if total != f64::NEG_INFINITY {
                    log_beta.set(t, s, total + log_post.get(t, ext[s]));
                }
            }
        }

        Ok(CtcTrellis {
            ext,
            log_alpha,
            log_beta,
        })
    }

    /// Total log-likelihood from the forward pass (last two states).
    pub fn forward_total(&self) -> f64 {
        let t = self.log_alpha.rows() - 1;
        let s_len = self.ext.len();
        let last = self.log_alpha.get(t, s_len - 1);
        let prev = if s_len > 1 {
            self.log_alpha.get(t, s_len - 2)
        } else {
            f64::NEG_INFINITY
        };
        logsumexp2(last, prev)
    }

    /// Total log-likelihood from the backward pass (first two states).
    pub fn backward_total(&self) -> f64 {
        let first = self.log_beta.get(0, 0);
        let second = if self.ext.len() > 1 {
            self.log_beta.get(0, 1)
        } else {
            f64::NEG_INFINITY
        };
        logsumexp2(first, second)
    }
}

/// CTC loss `-log P(label | posteriors)` summed over all valid
/// blank-augmented paths, plus the exact gradient w.r.t. pre-softmax logits.
pub fn ctc_loss(log_post: &Mat, label: &[usize]) -> Result<(f64, Mat), AcousticError> {
    let trellis = CtcTrellis::build(log_post, label)?;
    let total = trellis.forward_total();
    debug_assert!(
        (total - trellis.backward_total()).abs() < 1e-6,
        "alpha/beta disagree: {} vs {}",
        total,
        trellis.backward_total()
    );

    let t_len = log_post.rows();
    let n_out = log_post.cols();
    let s_len = trellis.ext.len();

    // grad[t][k] = softmax[t][k] - (1/P) sum_{s: ext[s]=k} alpha*beta/y
    let mut grad = Mat::zeros(t_len, n_out);
    let mut occ = vec![f64::NEG_INFINITY; n_out];
    for t in 0..t_len {
        occ.fill(f64::NEG_INFINITY);
        for s in 0..s_len {
            let ab = trellis.log_alpha.get(t, s) + trellis.log_beta.get(t, s);
            if ab == f64::NEG_INFINITY {
                continue;
            }
            let k = trellis.ext[s];
            occ[k] = logsumexp2(occ[k], ab - log_post.get(t, k));
        }
        let g = grad.row_mut(t);
        let post = log_post.row(t);
        for k in 0..n_out {
            let expected = if occ[k] == f64::NEG_INFINITY {
                0.0
            } else {
                (occ[k] - total).exp()
            };
            g[k] = post[k].exp() - expected;
        }
    }
    Ok((-total, grad))
}
