//! Forced alignment: constrained Viterbi over the blank-augmented trellis,
//! assigning time spans to a known transcript.

use crate::charset::Charset;
use crate::mat::Mat;

use super::ctc::min_frames_for_label;
use super::AcousticError;

/// Frames where one transcript character was emitted on the best path
/// (inclusive bounds). Blank frames belong to no character, so consecutive
/// spans need not touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedChar {
    pub ch: char,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Viterbi best path through the blank-augmented trellis for `label`
/// (output-layer indices), reporting each character's emission span.
///
/// Ties prefer staying in a state, then the single step, then the skip, so
/// alignments are deterministic.
pub fn forced_align(log_post: &Mat, label: &[usize]) -> Result<Vec<AlignedChar>, AcousticError> {
    let t_len = log_post.rows();
    let required = min_frames_for_label(label);
    if required > t_len {
        return Err(AcousticError::LabelTooLong {
            required,
            available: t_len,
        });
    }

    let mut ext = Vec::with_capacity(2 * label.len() + 1);
    ext.push(0usize);
    for &l in label {
        ext.push(l);
        ext.push(0);
    }
    let s_len = ext.len();
    let can_skip: Vec<bool> = (0..s_len)
        .map(|s| ext[s] != 0 && s >= 2 && ext[s] != ext[s - 2])
        .collect();

    let mut score = Mat::zeros(t_len, s_len);
    score.fill(f64::NEG_INFINITY);
    let mut back = vec![0u8; t_len * s_len]; // 0 = stay, 1 = step, 2 = skip
    score.set(0, 0, log_post.get(0, ext[0]));
    if s_len > 1 {
        score.set(0, 1, log_post.get(0, ext[1]));
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut best = score.get(t - 1, s);
            let mut arg = 0u8;
            if s >= 1 && score.get(t - 1, s - 1) > best {
                best = score.get(t - 1, s - 1);
                arg = 1;
            }
            if can_skip[s] && score.get(t - 1, s - 2) > best {
                best = score.get(t - 1, s - 2);
                arg = 2;
            }
            if best != f64::NEG_INFINITY {
                score.set(t, s, best + log_post.get(t, ext[s]));
                back[t * s_len + s] = arg;
            }
        }
    }

    let mut s = s_len - 1;
    if s_len > 1 && score.get(t_len - 1, s_len - 2) > score.get(t_len - 1, s_len - 1) {
        s = s_len - 2;
    }
    let mut states = vec![0usize; t_len];
    states[t_len - 1] = s;
    for t in (1..t_len).rev() {
        s -= usize::from(back[t * s_len + s]);
        states[t - 1] = s;
    }

    let mut spans: Vec<AlignedChar> = Vec::with_capacity(label.len());
    for (t, &st) in states.iter().enumerate() {
        if ext[st] == 0 {
            continue;
        }
        let char_pos = (st - 1) / 2;
        debug_assert!(char_pos <= spans.len());
        if char_pos == spans.len() {
            spans.push(AlignedChar {
                ch: Charset::char_at(ext[st] - 1),
                start_frame: t,
                end_frame: t,
            });
        } else {
            spans[char_pos].end_frame = t;
        }
    }
    debug_assert_eq!(spans.len(), label.len(), "every character must be visited");
    Ok(spans)
}
