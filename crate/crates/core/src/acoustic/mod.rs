//! The trainable frame classifier and its CTC machinery.
//!
//! A context-stacked feed-forward rectifier network emits per-frame log
//! posteriors over blank + 28 charset symbols. It stands in for large
//! pretrained acoustic models: the phenomena studied here are label-side, so
//! the smallest model that can learn the synthetic task keeps every
//! experiment at desk scale.

mod align;
mod ctc;
mod train;

pub use align::{forced_align, AlignedChar};
pub use ctc::{ctc_loss, label_indices, min_frames_for_label, CtcTrellis};
pub use train::{
    grad_check, train, EvalExample, EvalPoint, TrainConfig, TrainExample, TrainOutcome, Trainer,
};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::charset::N_OUTPUTS;
use crate::mat::Mat;
use crate::rng;
use crate::synth::Features;

const CKPT_MAGIC: &[u8; 4] = b"WSPM";
const CKPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AcousticError {
    #[error("feature dim {got} does not match model dim {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label needs at least {required} frames but only {available} are available")]
    LabelTooLong { required: usize, available: usize },
    #[error("non-finite loss at step {step} (utterance {utterance_id:?})")]
    NonFiniteLoss { step: usize, utterance_id: String },
    #[error("training corpus is empty (all utterances skipped or none given)")]
    EmptyCorpus,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic (not a checkpoint)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported checkpoint version {version}")]
    BadVersion { path: PathBuf, version: u32 },
    #[error("{path}: truncated checkpoint")]
    Truncated { path: PathBuf },
}

/// Frame classifier: input is `dim * (2*context + 1)` stacked features, one
/// rectifier hidden layer, and a log-softmax output with blank at index 0.
///
/// Parameters live in one flat vector, ordered W1, b1, W2, b2, which is also
/// the checkpoint layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub context: usize,
    pub dim: usize,
    pub hidden: usize,
    params: Vec<f64>,
}

impl AcousticModel {
    pub fn new(context: usize, dim: usize, hidden: usize) -> Self {
        let in_dim = dim * (2 * context + 1);
        let n = hidden * in_dim + hidden + N_OUTPUTS * hidden + N_OUTPUTS;
        AcousticModel {
            context,
            dim,
            hidden,
            params: vec![0.0; n],
        }
    }

    /// Seeded uniform init with per-layer fan scaling; biases start at zero.
    pub fn init_random(context: usize, dim: usize, hidden: usize, seed: u64) -> Self {
        let mut model = Self::new(context, dim, hidden);
        let mut stream = rng::stream(seed, &["model-init"]);
        let in_dim = model.in_dim();
        let a1 = (6.0 / (in_dim + hidden) as f64).sqrt();
        let a2 = (6.0 / (hidden + N_OUTPUTS) as f64).sqrt();
        let (w1_len, b1_len, w2_len) = (hidden * in_dim, hidden, N_OUTPUTS * hidden);
        for i in 0..w1_len {
            model.params[i] = (stream.random::<f64>() * 2.0 - 1.0) * a1;
        }
        for i in 0..w2_len {
            model.params[w1_len + b1_len + i] = (stream.random::<f64>() * 2.0 - 1.0) * a2;
        }
        model
    }

    pub fn in_dim(&self) -> usize {
        self.dim * (2 * self.context + 1)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1_end = self.hidden * self.in_dim();
        let b1_end = w1_end + self.hidden;
        let w2_end = b1_end + N_OUTPUTS * self.hidden;
        (w1_end, b1_end, w2_end)
    }

    /// Log posteriors (T x 29); each row is an exact log-softmax. Edge
    /// frames see zero padding for the missing context.
    pub fn forward(&self, features: &Features) -> Result<Mat, AcousticError> {
        Ok(self.forward_cached(features)?.log_post)
    }

    pub(crate) fn forward_cached(
        &self,
        features: &Features,
    ) -> Result<ForwardCache, AcousticError> {
        if features.dim() != self.dim {
            return Err(AcousticError::DimensionMismatch {
                expected: self.dim,
                got: features.dim(),
            });
        }
        let t_len = features.len();
        let in_dim = self.in_dim();
        let (w1_end, b1_end, w2_end) = self.offsets();
        let w1 = &self.params[..w1_end];
        let b1 = &self.params[w1_end..b1_end];
        let w2 = &self.params[b1_end..w2_end];
        let b2 = &self.params[w2_end..];

        let mut xs = vec![0.0f64; t_len * in_dim];
        let mut hs = vec![0.0f64; t_len * self.hidden];
        let mut log_post = Mat::zeros(t_len, N_OUTPUTS);

        for t in 0..t_len {
            let x = &mut xs[t * in_dim..(t + 1) * in_dim];
            for (slot, off) in (-(self.context as isize)..=self.context as isize).enumerate() {
                let src = t as isize + off;
                if src >= 0 && (src as usize) < t_len {
                    let frame = features.frame(src as usize);
                    for d in 0..self.dim {
                        x[slot * self.dim + d] = f64::from(frame[d]);
                    }
                }
            }
            let h = &mut hs[t * self.hidden..(t + 1) * self.hidden];
            for j in 0..self.hidden {
                let row = &w1[j * in_dim..(j + 1) * in_dim];
                let mut acc = b1[j];
                for (w, xv) in row.iter().zip(x.iter()) {
                    acc += w * xv;
                }
                h[j] = acc.max(0.0);
            }
            let out = log_post.row_mut(t);
            for k in 0..N_OUTPUTS {
                let row = &w2[k * self.hidden..(k + 1) * self.hidden];
                let mut acc = b2[k];
                for (w, hv) in row.iter().zip(h.iter()) {
                    acc += w * hv;
                }
                out[k] = acc;
            }
            let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + out.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in out.iter_mut() {
                *v -= lse;
            }
        }
        Ok(ForwardCache { xs, hs, log_post })
    }

    /// Backpropagate a loss gradient w.r.t. the pre-softmax logits into a
    /// flat parameter gradient (same layout as `params`).
    pub(crate) fn backward(&self, cache: &ForwardCache, grad_logits: &Mat) -> Vec<f64> {
        let t_len = cache.log_post.rows();
        let in_dim = self.in_dim();
        let (w1_end, b1_end, w2_end) = self.offsets();
        let w2 = &self.params[b1_end..w2_end];

        let mut grads = vec![0.0f64; self.params.len()];
        let mut dh = vec![0.0f64; self.hidden];
        for t in 0..t_len {
            let g = grad_logits.row(t);
            let h = &cache.hs[t * self.hidden..(t + 1) * self.hidden];
            let x = &cache.xs[t * in_dim..(t + 1) * in_dim];

            dh.fill(0.0);
            for k in 0..N_OUTPUTS {
                let gk = g[k];
                if gk == 0.0 {
                    continue;
                }
                let w2_row = &w2[k * self.hidden..(k + 1) * self.hidden];
                let dw2_row = &mut grads[b1_end + k * self.hidden..b1_end + (k + 1) * self.hidden];
                for j in 0..self.hidden {
                    dw2_row[j] += gk * h[j];
                    dh[j] += gk * w2_row[j];
                }
                grads[w2_end + k] += gk;
            }
            for j in 0..self.hidden {
                if h[j] <= 0.0 {
                    continue; // rectifier gate
                }
                let dj = dh[j];
                let dw1_row = &mut grads[j * in_dim..(j + 1) * in_dim];
                for d in 0..in_dim {
                    dw1_row[d] += dj * x[d];
                }
                grads[w1_end + j] += dj;
            }
        }
        grads
    }

    pub fn save(&self, path: &Path) -> Result<(), AcousticError> {
        let io_err = |source| AcousticError::Io {
            path: path.to_owned(),
            source,
        };
        let mut buf = Vec::with_capacity(24 + self.params.len() * 4);
        buf.extend_from_slice(CKPT_MAGIC);
        buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        for v in [
            self.context as u32,
            self.dim as u32,
            self.hidden as u32,
            N_OUTPUTS as u32,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.params {
            buf.extend_from_slice(&(*p as f32).to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(&buf).map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AcousticError> {
        let bytes = fs::read(path).map_err(|source| AcousticError::Io {
            path: path.to_owned(),
            source,
        })?;
        if bytes.len() < 24 {
            return Err(AcousticError::Truncated {
                path: path.to_owned(),
            });
        }
        if &bytes[0..4] != CKPT_MAGIC {
            return Err(AcousticError::BadMagic {
                path: path.to_owned(),
            });
        }
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != CKPT_VERSION {
            return Err(AcousticError::BadVersion {
                path: path.to_owned(),
                version,
            });
        }
        let (context, dim, hidden, n_out) = (
            u32_at(8) as usize,
            u32_at(12) as usize,
            u32_at(16) as usize,
            u32_at(20) as usize,
        );
        if n_out != N_OUTPUTS {
            return Err(AcousticError::Truncated {
                path: path.to_owned(),
            });
        }
        let mut model = Self::new(context, dim, hidden);
        if bytes.len() != 24 + model.params.len() * 4 {
            return Err(AcousticError::Truncated {
                path: path.to_owned(),
            });
        }
        for (i, chunk) in bytes[24..].chunks_exact(4).enumerate() {
            model.params[i] = f64::from(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        Ok(model)
    }
}

pub(crate) struct ForwardCache {
    pub xs: Vec<f64>,
    pub hs: Vec<f64>,
    pub log_post: Mat,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_features(t: usize, dim: usize, seed: u64) -> Features {
        let mut r = rng::stream(seed, &["feat"]);
        let data: Vec<f32> = (0..t * dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                z as f32
            })
            .collect();
        Features::new(dim, data)
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = AcousticModel::new(2, 4, 8);
        let feats = random_features(6, 4, 1);
        let post = model.forward(&feats).unwrap();
        let expected = -(N_OUTPUTS as f64).ln();
        for t in 0..post.rows() {
            for k in 0..N_OUTPUTS {
                assert!((post.get(t, k) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_are_log_softmax() {
        let model = AcousticModel::init_random(2, 4, 8, 3);
        let feats = random_features(10, 4, 2);
        let post = model.forward(&feats).unwrap();
        for t in 0..post.rows() {
            let sum: f64 = post.row(t).iter().map(|v| v.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-6, "row {t} sums to {sum}");
        }
    }

    #[test]
    fn perturbation_is_local_in_context() {
        let model = AcousticModel::init_random(2, 4, 8, 4);
        let feats = random_features(12, 4, 5);
        let base = model.forward(&feats).unwrap();

        let mut bumped = feats.clone();
        let perturbed_t = 6;
        let raw = {
            let mut data: Vec<f32> = (0..bumped.len())
                .flat_map(|t| bumped.frame(t).to_vec())
                .collect();
            for d in 0..4 {
                data[perturbed_t * 4 + d] += 1.0;
            }
            data
        };
        bumped = Features::new(4, raw);
        let changed = model.forward(&bumped).unwrap();
        for t in 0..base.rows() {
            let differs = base.row(t) != changed.row(t);
            let within = (t as isize - perturbed_t as isize).unsigned_abs() <= 2;
            if !within {
                assert!(!differs, "row {t} changed outside the context window");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = AcousticModel::new(2, 4, 8);
        let feats = random_features(5, 3, 6);
        assert!(matches!(
            model.forward(&feats),
            Err(AcousticError::DimensionMismatch {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.wspm");
        let model = AcousticModel::init_random(2, 4, 8, 7);
        model.save(&path).unwrap();
        let back = AcousticModel::load(&path).unwrap();
        assert_eq!(back.context, model.context);
        assert_eq!(back.dim, model.dim);
        assert_eq!(back.hidden, model.hidden);
        // storage is f32; loading twice is stable
        back.save(&path).unwrap();
        let again = AcousticModel::load(&path).unwrap();
        assert_eq!(again.params(), back.params());

        std::fs::write(&path, b"XXXX-definitely-not-a-checkpoint").unwrap();
        assert!(matches!(
            AcousticModel::load(&path),
            Err(AcousticError::BadMagic { .. })
        ));
        std::fs::write(&path, b"WSPM").unwrap();
        assert!(matches!(
            AcousticModel::load(&path),
            Err(AcousticError::Truncated { .. })
        ));
    }
}
