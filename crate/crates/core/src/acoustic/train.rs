//! Training loop: Adam with global-norm clipping over CTC gradients,
//! seeded shuffles, periodic dev evaluation with greedy WER, and early
//! stopping on the best dev checkpoint.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode;

use crate::rng;
use crate::synth::Features;
use crate::textkit::{self, TokenSeq};

use super::{ctc, AcousticError, AcousticModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip_norm: f64,
    pub max_epochs: usize,
    /// Early-stop patience, counted in dev evaluations without improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip_norm: 5.0,
            max_epochs: 20,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The fine-tuning variant: same optimizer at a tenth of the rate.
    pub fn fine_tune(mut self) -> Self {
        self.learning_rate = 1e-4;
        self
    }
}

/// One training utterance: features plus the output-layer label indices.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub id: String,
    pub features: Features,
    pub label: Vec<usize>,
}

/// One evaluation utterance: features plus the gold transcript.
#[derive(Debug, Clone)]
pub struct EvalExample {
    pub id: String,
    pub features: Features,
    pub gold: TokenSeq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub train_loss: f64,
    pub dev_wer: f64,
}

/// Single-writer parameter updates over concurrently computed per-utterance
/// gradients, reduced in batch order so results are independent of worker
/// count.
pub struct Trainer {
    pub model: AcousticModel,
    pub config: TrainConfig,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    steps: usize,
}

impl Trainer {
    pub fn new(model: AcousticModel, config: TrainConfig) -> Self {
        let n = model.n_params();
        Trainer {
            model,
            config,
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One Adam update on the mean CTC gradient of the batch.
    pub fn step(&mut self, batch: &[&TrainExample]) -> Result<f64, AcousticError> {
        assert!(!batch.is_empty(), "batch must be nonempty");
        let per_item: Vec<Result<(f64, Vec<f64>), AcousticError>> = batch
            .par_iter()
            .map(|ex| {
                let cache = self.model.forward_cached(&ex.features)?;
                let (loss, grad_logits) = ctc::ctc_loss(&cache.log_post, &ex.label)?;
                Ok((loss, self.model.backward(&cache, &grad_logits)))
            })
            .collect();

        let mut grads = vec![0.0f64; self.model.n_params()];
        let mut mean_loss = 0.0;
        for (item, ex) in per_item.into_iter().zip(batch) {
            let (loss, g) = item?;
            if !loss.is_finite() {
                return Err(AcousticError::NonFiniteLoss {
                    step: self.steps,
                    utterance_id: ex.id.clone(),
                });
            }
            mean_loss += loss;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        mean_loss *= scale;
        for g in grads.iter_mut() {
            *g *= scale;
        }

        let norm: f64 = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(AcousticError::NonFiniteLoss {
                step: self.steps,
                utterance_id: batch[0].id.clone(),
            });
        }
        if norm > self.config.grad_clip_norm {
            let s = self.config.grad_clip_norm / norm;
            for g in grads.iter_mut() {
                *g *= s;
            }
        }

        self.steps += 1;
        let t = self.steps as f64;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        let params = self.model.params_mut();
        for i in 0..params.len() {
            let g = grads[i];
            self.adam_m[i] = c.beta1 * self.adam_m[i] + (1.0 - c.beta1) * g;
            self.adam_v[i] = c.beta2 * self.adam_v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.adam_m[i] / bc1;
            let v_hat = self.adam_v[i] / bc2;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(mean_loss)
    }
}

/// Result of a training run.
pub struct TrainOutcome {
    pub model: AcousticModel,
    pub history: Vec<EvalPoint>,
    /// Utterances excluded because their label cannot fit in their frames.
    pub skipped_utts: usize,
}

/// Pooled greedy WER of `model` on `dev`; decoding runs per utterance in
/// parallel.
pub fn evaluate_greedy(model: &AcousticModel, dev: &[EvalExample]) -> Result<f64, AcousticError> {
    let hyps: Vec<Result<TokenSeq, AcousticError>> = dev
        .par_iter()
        .map(|ex| Ok(decode::greedy_decode(&model.forward(&ex.features)?)))
        .collect();
    let mut pairs: Vec<(&TokenSeq, TokenSeq)> = Vec::with_capacity(dev.len());
    for (ex, hyp) in dev.iter().zip(hyps) {
        pairs.push((&ex.gold, hyp?));
    }
    Ok(textkit::corpus_wer(pairs.iter().map(|(r, h)| (*r, h)))
        .map(|r| r.wer)
        .unwrap_or(0.0))
}

/// Train over seeded epoch shuffles with one dev evaluation per epoch.
///
/// Utterances violating the CTC length precondition are skipped up front
/// (counted in the outcome). Returns the best-dev checkpoint, or the final
/// model when `dev` is empty (evaluation skipped, empty history).
pub fn train(
    model_init: AcousticModel,
    corpus: &[TrainExample],
    dev: &[EvalExample],
    config: &TrainConfig,
) -> Result<TrainOutcome, AcousticError> {
    let usable: Vec<&TrainExample> = corpus
        .iter()
        .filter(|ex| ctc::min_frames_for_label(&ex.label) <= ex.features.len())
        .collect();
    let skipped_utts = corpus.len() - usable.len();
    if usable.is_empty() {
        return Err(AcousticError::EmptyCorpus);
    }
    if skipped_utts > 0 {
        eprintln!("warning: skipping {skipped_utts} utterances whose labels exceed their frames");
    }

    let mut trainer = Trainer::new(model_init, config.clone());
    let mut history = Vec::new();
    let mut best: Option<(f64, AcousticModel)> = None;
    let mut evals_since_best = 0usize;

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..usable.len()).collect();
        let mut shuffle_rng = rng::stream(config.seed, &["shuffle", &epoch.to_string()]);
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainExample> = chunk.iter().map(|&i| usable[i]).collect();
            epoch_loss += trainer.step(&batch)?;
            batches += 1;
        }
        epoch_loss /= batches.max(1) as f64;

        if !dev.is_empty() {
            let dev_wer = evaluate_greedy(&trainer.model, dev)?;
            history.push(EvalPoint {
                step: trainer.steps(),
                train_loss: epoch_loss,
                dev_wer,
            });
            let improved = best.as_ref().is_none_or(|(w, _)| dev_wer < *w);
            if improved {
                best = Some((dev_wer, trainer.model.clone()));
                evals_since_best = 0;
            } else {
                evals_since_best += 1;
                if evals_since_best >= config.patience {
                    break;
                }
            }
        }
    }

    let model = match best {
        Some((_, m)) => m,
        None => trainer.model,
    };
    Ok(TrainOutcome {
        model,
        history,
        skipped_utts,
    })
}

/// Compare the analytic gradient against central finite differences on
/// `n_params` randomly chosen parameters. Returns the maximum relative
/// error, with a small absolute floor so near-zero gradients don't blow up
/// the ratio.
pub fn grad_check(
    model: &AcousticModel,
    sample: &TrainExample,
    epsilon: f64,
    n_params: usize,
    seed: u64,
) -> Result<f64, AcousticError> {
    let cache = model.forward_cached(&sample.features)?;
    let (_, grad_logits) = ctc::ctc_loss(&cache.log_post, &sample.label)?;
    let analytic = model.backward(&cache, &grad_logits);

    let loss_at = |m: &AcousticModel| -> Result<f64, AcousticError> {
        let post = m.forward(&sample.features)?;
        Ok(ctc::ctc_loss(&post, &sample.label)?.0)
    };

    let mut pick_rng = rng::stream(seed, &["grad-check"]);
    let total = model.n_params();
    let mut max_rel = 0.0f64;
    let mut probe = model.clone();
    for _ in 0..n_params.min(total) {
        let i = pick_rng.random_range(0..total);
        let original = probe.params()[i];
        probe.params_mut()[i] = original + epsilon;
        let plus = loss_at(&probe)?;
        probe.params_mut()[i] = original - epsilon;
        let minus = loss_at(&probe)?;
        probe.params_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-6);
        if rel.is_nan() {
            return Ok(f64::NAN);
        }
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
