//! Experiment cells: the four training regimes, their evaluation, and the
//! persisted per-cell artifacts (checkpoint, hypotheses, result rows).
//!
//! A cell is identified by (regime, corruption, seed) plus a digest of every
//! config section that can affect its outcome, so completed cells are safely
//! reusable across sweep reruns and stale ones are recomputed.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use wsp_core::acoustic::{train, AcousticModel, EvalExample, TrainExample};
use wsp_core::corruptor::{
    corrupt_corpus, CorruptionConfig, CorruptionMode, CorruptionStats, NeighborIndex,
};
use wsp_core::decode::{beam_decode, greedy_decode, NgramLm};
use wsp_core::rng;
use wsp_core::textkit::{self, TokenSeq, WerReport};
use wsp_core::Utterance;

use crate::config::{Config, DecodeKind, Regime};
use crate::corpora::{stable_hash, CorpusBundle};
use crate::results::{HypRecord, ResultRow};

/// One sweep cell. Regimes that never touch corrupted transcripts carry no
/// corruption coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellSpec {
    pub regime: Regime,
    pub corruption: Option<(CorruptionMode, f64)>,
    pub seed: u64,
}

impl CellSpec {
    pub fn weak_only(mode: CorruptionMode, fraction: f64, seed: u64) -> Self {
        CellSpec {
            regime: Regime::WeakOnly,
            corruption: Some((canonical_mode(mode, fraction), fraction)),
            seed,
        }
    }

    pub fn wsp_ft(mode: CorruptionMode, fraction: f64, seed: u64) -> Self {
        CellSpec {
            regime: Regime::WspFt,
            corruption: Some((canonical_mode(mode, fraction), fraction)),
            seed,
        }
    }

    pub fn direct_ft(seed: u64) -> Self {
        CellSpec {
            regime: Regime::DirectFt,
            corruption: None,
            seed,
        }
    }

    pub fn self_training(seed: u64) -> Self {
        CellSpec {
            regime: Regime::SelfTraining,
            corruption: None,
            seed,
        }
    }

    fn label(&self) -> String {
        match self.corruption {
            Some((mode, fraction)) => {
                format!("{}-{}-{:.2}-s{}", self.regime, mode, fraction, self.seed)
            }
            None => format!("{}-s{}", self.regime, self.seed),
        }
    }
}

/// At fraction zero nothing is corrupted, so both modes denote the same
/// cell; random is the canonical spelling.
pub fn canonical_mode(mode: CorruptionMode, fraction: f64) -> CorruptionMode {
    if fraction == 0.0 {
        CorruptionMode::Random
    } else {
        mode
    }
}

pub struct Workbench {
    pub config: Config,
    pub out_dir: PathBuf,
    vocab: Vec<(String, f64)>,
    index: NeighborIndex,
    config_digest: String,
    corpora_lock: Mutex<()>,
}

impl Workbench {
    pub fn new(config: Config, out_dir: &Path) -> anyhow::Result<Self> {
        config.validate()?;
        let vocab = config.vocabulary()?;
        let words: Vec<String> = vocab.iter().map(|(w, _)| w.clone()).collect();
        let index = NeighborIndex::build(&words);
        // everything that can change a cell's outcome, minus the sweep grid
        let config_digest = stable_hash(&(
            &config.corpus,
            &config.corruption,
            &config.model,
            &config.train,
            &config.decode,
            &config.experiment,
            &vocab,
        ));
        fs::create_dir_all(out_dir.join("cells"))?;
        fs::create_dir_all(out_dir.join("corpora"))?;
        Ok(Workbench {
            config,
            out_dir: out_dir.to_owned(),
            vocab,
            index,
            config_digest,
            corpora_lock: Mutex::new(()),
        })
    }

    pub fn neighbor_index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn bundle(&self, seed: u64) -> anyhow::Result<CorpusBundle> {
        let _guard = self.corpora_lock.lock().unwrap();
        CorpusBundle::ensure(
            &self.config,
            &self.vocab,
            &self.out_dir.join("corpora"),
            seed,
        )
    }

    pub fn cell_dir(&self, spec: &CellSpec) -> PathBuf {
        let digest = stable_hash(&(spec, &self.config_digest));
        self.out_dir
            .join("cells")
            .join(format!("{}-{}", spec.label(), &digest[..8]))
    }

    pub fn checkpoint_path(&self, spec: &CellSpec) -> PathBuf {
        self.cell_dir(spec).join("model.wspm")
    }

    /// Run one cell, reusing its persisted rows when the same spec and
    /// config already completed.
    pub fn run_cell(&self, spec: &CellSpec) -> anyhow::Result<Vec<ResultRow>> {
        let dir = self.cell_dir(spec);
        let rows_path = dir.join("rows.json");
        if rows_path.exists() {
            let text = fs::read_to_string(&rows_path)?;
            let rows: Vec<ResultRow> = serde_json::from_str(&text)
                .with_context(|| format!("parsing cached rows {}", rows_path.display()))?;
            return Ok(rows);
        }
        fs::create_dir_all(&dir)?;
        let started = Instant::now();
        let (model, skipped_utts, history) = self.train_for(spec)?;
        model.save(&dir.join("model.wspm"))?;
        fs::write(
            dir.join("history.json"),
            serde_json::to_string_pretty(&history)?,
        )?;

        let bundle = self.bundle(spec.seed)?;
        let test = bundle.eval_examples("test")?;
        let lm = bundle.gold_lm(self.config.decode.lm_order, self.config.decode.lm_k)?;
        let evals = evaluate(
            &model,
            &test,
            &lm,
            &self.config.decode.decoder,
            &self.config.experiment.decode.kinds(),
        )?;
        let wall_time_s = started.elapsed().as_secs_f64();

        let mut rows = Vec::new();
        for eval in &evals {
            crate::results::write_hyps(
                &dir.join(format!("hyps_{}.jsonl", eval.decode)),
                &eval.hyps,
            )?;
            rows.push(ResultRow {
                regime: spec.regime,
                mode: spec.corruption.map(|(m, _)| m),
                fraction: spec.corruption.map(|(_, f)| f),
                decode: eval.decode,
                seed: spec.seed,
                pooled_wer: eval.report.wer,
                subs: eval.report.subs,
                dels: eval.report.dels,
                ins: eval.report.ins,
                n_ref: eval.report.n_ref,
                skipped_utts,
                wall_time_s,
                flagged: eval.report.wer >= self.config.experiment.non_convergence_wer,
            });
        }
        let tmp = dir.join("rows.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&rows)?)?;
        fs::rename(&tmp, &rows_path)?;
        Ok(rows)
    }

    fn train_for(
        &self,
        spec: &CellSpec,
    ) -> anyhow::Result<(AcousticModel, usize, Vec<wsp_core::acoustic::EvalPoint>)> {
        match spec.regime {
            Regime::WeakOnly => self.train_weak_only(spec),
            Regime::WspFt => self.train_wsp_ft(spec),
            Regime::DirectFt => self.train_direct_ft(spec),
            Regime::SelfTraining => self.train_self_training(spec),
        }
    }

    fn init_model(&self, seed: u64) -> AcousticModel {
        AcousticModel::init_random(
            self.config.model.context,
            self.config.corpus.voice.dim,
            self.config.model.hidden,
            seed,
        )
    }

    /// Corrupt the gold training transcripts at this cell's coordinates.
    pub fn weak_texts(
        &self,
        gold: &[Utterance],
        mode: CorruptionMode,
        fraction: f64,
        seed: u64,
    ) -> (Vec<TokenSeq>, CorruptionStats) {
        let cfg = CorruptionConfig {
            mode,
            ..self.config.corruption.clone()
        };
        let (corrupted, stats) = corrupt_corpus(gold, &cfg, &self.index, fraction, seed);
        (corrupted.into_iter().map(|u| u.text).collect(), stats)
    }

    fn train_weak_only(
        &self,
        spec: &CellSpec,
    ) -> anyhow::Result<(AcousticModel, usize, Vec<wsp_core::acoustic::EvalPoint>)> {
        let (mode, fraction) = spec
            .corruption
            .context("weak_only needs corruption coordinates")?;
        let bundle = self.bundle(spec.seed)?;
        let gold = bundle.train_utterances();
        let (texts, _) = self.weak_texts(&gold, mode, fraction, spec.seed);
        let corpus = bundle.train_examples(&texts)?;
        let dev = bundle.eval_examples("dev")?;
        let cfg = wsp_core::acoustic::TrainConfig {
            seed: spec.seed,
            ..self.config.train.pretrain.clone()
        };
        let outcome = train(self.init_model(spec.seed), &corpus, &dev, &cfg)?;
        Ok((outcome.model, outcome.skipped_utts, outcome.history))
    }

    fn train_wsp_ft(
        &self,
        spec: &CellSpec,
    ) -> anyhow::Result<(AcousticModel, usize, Vec<wsp_core::acoustic::EvalPoint>)> {
        let (mode, fraction) = spec
            .corruption
            .context("wsp_ft needs corruption coordinates")?;
        let weak_spec = CellSpec::weak_only(mode, fraction, spec.seed);
        let ckpt = self.checkpoint_path(&weak_spec);
        anyhow::ensure!(
            ckpt.exists(),
            "missing weak-only checkpoint {} (run the {} cell first)",
            ckpt.display(),
            weak_spec.label()
        );
        let model = AcousticModel::load(&ckpt)?;
        let n = self.config.experiment.clean_subset_size;
        if n == 0 {
            // degenerate contract: evaluate the pretrained model as-is
            return Ok((model, 0, Vec::new()));
        }
        let bundle = self.bundle(spec.seed)?;
        let clean = bundle.clean_subset(n)?;
        let dev = bundle.eval_examples("dev")?;
        let cfg = wsp_core::acoustic::TrainConfig {
            seed: spec.seed,
            ..self.config.train.finetune.clone()
        };
        let outcome = train(model, &clean, &dev, &cfg)?;
        Ok((outcome.model, outcome.skipped_utts, outcome.history))
    }

    fn train_direct_ft(
        &self,
        spec: &CellSpec,
    ) -> anyhow::Result<(AcousticModel, usize, Vec<wsp_core::acoustic::EvalPoint>)> {
        let bundle = self.bundle(spec.seed)?;
        let clean = bundle.clean_subset(self.config.experiment.clean_subset_size)?;
        let dev = bundle.eval_examples("dev")?;
        let cfg = wsp_core::acoustic::TrainConfig {
            seed: spec.seed,
            ..self.config.train.direct.clone()
        };
        let outcome = train(self.init_model(spec.seed), &clean, &dev, &cfg)?;
        Ok((outcome.model, outcome.skipped_utts, outcome.history))
    }

    /// The teacher cell self-training reads its pseudo-labeling model from.
    pub fn teacher_spec(&self, seed: u64) -> CellSpec {
        match self.config.experiment.teacher {
            Regime::WspFt => CellSpec::wsp_ft(
                self.config.experiment.comparison_mode,
                self.config.experiment.comparison_fraction,
                seed,
            ),
            Regime::WeakOnly => CellSpec::weak_only(
                self.config.experiment.comparison_mode,
                self.config.experiment.comparison_fraction,
                seed,
            ),
            _ => CellSpec::direct_ft(seed),
        }
    }

    fn train_self_training(
        &self,
        spec: &CellSpec,
    ) -> anyhow::Result<(AcousticModel, usize, Vec<wsp_core::acoustic::EvalPoint>)> {
        let teacher_spec = self.teacher_spec(spec.seed);
        let ckpt = self.checkpoint_path(&teacher_spec);
        anyhow::ensure!(
            ckpt.exists(),
            "missing teacher checkpoint {} (run the {} cell first)",
            ckpt.display(),
            teacher_spec.label()
        );
        let teacher = AcousticModel::load(&ckpt)?;

        let bundle = self.bundle(spec.seed)?;
        let n_clean = self.config.experiment.clean_subset_size;
        let clean = bundle.clean_subset(n_clean)?;
        let gold: Vec<TokenSeq> = bundle
            .train
            .iter()
            .map(|e| TokenSeq::parse(&e.text))
            .collect();
        let all_train = bundle.train_examples(&gold)?;

        // pool: seeded sample from the weak remainder, disjoint from the
        // clean subset
        let remainder: Vec<usize> = (n_clean.min(all_train.len())..all_train.len()).collect();
        let pool_size = (self.config.experiment.self_training_pool_fraction
            * bundle.train.len() as f64)
            .round() as usize;
        let picked = sample_indices(&remainder, pool_size, spec.seed, "self-training-pool");

        let lm = bundle.gold_lm(self.config.decode.lm_order, self.config.decode.lm_k)?;
        let decoder = &self.config.decode.decoder;
        let teacher_decode = self.config.experiment.teacher_decode;
        let pseudo: Vec<TrainExample> = picked
            .par_iter()
            .map(|&i| {
                let ex = &all_train[i];
                let post = teacher.forward(&ex.features)?;
                let text = match teacher_decode {
                    DecodeKind::Greedy => greedy_decode(&post),
                    DecodeKind::Lm => beam_decode(&post, &lm, decoder),
                };
                let label = wsp_core::acoustic::label_indices(&text)
                    .context("decoded pseudo-label outside charset")?;
                Ok(TrainExample {
                    id: format!("pseudo-{}", ex.id),
                    features: ex.features.clone(),
                    label,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;

        let mut merged = clean;
        merged.extend(pseudo);
        let dev = bundle.eval_examples("dev")?;
        let cfg = wsp_core::acoustic::TrainConfig {
            seed: spec.seed,
            ..self.config.train.pretrain.clone()
        };
        let outcome = train(self.init_model(spec.seed), &merged, &dev, &cfg)?;
        Ok((outcome.model, outcome.skipped_utts, outcome.history))
    }
}

/// Seeded uniform sample of `k` values from `candidates` without
/// replacement, in stable order.
pub fn sample_indices(candidates: &[usize], k: usize, seed: u64, key: &str) -> Vec<usize> {
    let mut pool: Vec<usize> = candidates.to_vec();
    let mut stream = rng::stream(seed, &[key]);
    let k = k.min(pool.len());
    for i in 0..k {
        let j = stream.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut picked = pool[..k].to_vec();
    picked.sort_unstable();
    picked
}

pub struct Evaluation {
    pub decode: DecodeKind,
    pub report: WerReport,
    pub hyps: Vec<HypRecord>,
}

/// Decode `test` with each requested decode (sharing one forward pass per
/// utterance) and pool WER over the corpus.
pub fn evaluate(
    model: &AcousticModel,
    test: &[EvalExample],
    lm: &NgramLm,
    decoder: &wsp_core::decode::DecoderConfig,
    kinds: &[DecodeKind],
) -> anyhow::Result<Vec<Evaluation>> {
    let decoded: Vec<anyhow::Result<Vec<(DecodeKind, TokenSeq)>>> = test
        .par_iter()
        .map(|ex| {
            let post = model.forward(&ex.features)?;
            let mut hyps = Vec::with_capacity(kinds.len());
            for &kind in kinds {
                let hyp = match kind {
                    DecodeKind::Greedy => greedy_decode(&post),
                    DecodeKind::Lm => beam_decode(&post, lm, decoder),
                };
                hyps.push((kind, hyp));
            }
            Ok(hyps)
        })
        .collect();

    let mut evals = Vec::with_capacity(kinds.len());
    for (slot, &kind) in kinds.iter().enumerate() {
        let mut hyps = Vec::with_capacity(test.len());
        let mut pairs: Vec<(TokenSeq, TokenSeq)> = Vec::with_capacity(test.len());
        for (ex, result) in test.iter().zip(&decoded) {
            let per_utt = match result {
                Ok(v) => v,
                Err(e) => anyhow::bail!("decoding {}: {e}", ex.id),
            };
            let (k, hyp) = &per_utt[slot];
            debug_assert_eq!(*k, kind);
            hyps.push(HypRecord {
                id: ex.id.clone(),
                reference: ex.gold.to_string(),
                hypothesis: hyp.to_string(),
            });
            pairs.push((ex.gold.clone(), hyp.clone()));
        }
        let report = textkit::corpus_wer(pairs.iter().map(|(r, h)| (r, h)))?;
        evals.push(Evaluation {
            decode: kind,
            report,
            hyps,
        });
    }
    Ok(evals)
}
