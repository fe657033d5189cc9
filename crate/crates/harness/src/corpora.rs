//! Per-seed corpus bundles: train/dev/test splits generated once and cached
//! on disk, plus loaders that pair stored features with whichever labels an
//! experiment assigns to them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use wsp_core::acoustic::{label_indices, EvalExample, TrainExample};
use wsp_core::corpus::ManifestEntry;
use wsp_core::decode::{train_lm, NgramLm};
use wsp_core::synth::{generate_corpus, read_features, CorpusSpec};
use wsp_core::textkit::TokenSeq;
use wsp_core::Utterance;

use crate::config::Config;

/// Stable content hash of any serializable value (FNV-1a over its canonical
/// JSON), used for corpus caching and sweep cell identity.
pub fn stable_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("hash inputs serialize infallibly");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// One seed's generated corpora.
pub struct CorpusBundle {
    pub seed: u64,
    pub dir: PathBuf,
    pub train: Vec<ManifestEntry>,
    pub dev: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl CorpusBundle {
    /// Generate (or reuse cached) train/dev/test splits under
    /// `root/seed-<seed>/`. The cache key covers the corpus config, the
    /// vocabulary, and the seed.
    pub fn ensure(
        config: &Config,
        vocab: &[(String, f64)],
        root: &Path,
        seed: u64,
    ) -> anyhow::Result<Self> {
        let dir = root.join(format!("seed-{seed}"));
        let key = stable_hash(&(
            &config.corpus,
            config.experiment.clean_subset_size,
            vocab,
            seed,
        ));
        let key_path = dir.join("corpus.hash");

        let cached = fs::read_to_string(&key_path)
            .map(|existing| existing == key)
            .unwrap_or(false);
        if !cached {
            if dir.exists() {
                fs::remove_dir_all(&dir)
                    .with_context(|| format!("clearing stale corpus dir {}", dir.display()))?;
            }
            fs::create_dir_all(&dir)?;
            for (split, n, split_seed) in [
                ("train", config.corpus.n_train, seed),
                ("dev", config.corpus.n_dev, seed ^ 0x6465_7600),
                ("test", config.corpus.n_test, seed ^ 0x7465_7374),
            ] {
                let spec = CorpusSpec {
                    n_utts: n,
                    len_min: config.corpus.len_min,
                    len_max: config.corpus.len_max,
                    vocab: vocab.to_vec(),
                    voice: config.corpus.voice.clone(),
                    seed: split_seed,
                    id_prefix: split.to_string(),
                };
                generate_corpus(&spec, &dir.join(split))
                    .with_context(|| format!("generating {split} split"))?;
            }
            // out-of-domain clean subset: same text distribution, a second
            // voice (different prototype seed = domain mismatch)
            if let Some(voice_seed) = config.corpus.clean_subset_voice_seed {
                let spec = CorpusSpec {
                    n_utts: config.experiment.clean_subset_size.max(1),
                    len_min: config.corpus.len_min,
                    len_max: config.corpus.len_max,
                    vocab: vocab.to_vec(),
                    voice: wsp_core::synth::VoiceProfileConfig {
                        seed: voice_seed,
                        ..config.corpus.voice.clone()
                    },
                    seed: seed ^ 0x636c_6561_6e00,
                    id_prefix: "clean".to_string(),
                };
                generate_corpus(&spec, &dir.join("clean"))
                    .with_context(|| "generating out-of-domain clean split".to_string())?;
            }
            fs::write(&key_path, &key)?;
        }

        let read = |split: &str| -> anyhow::Result<Vec<ManifestEntry>> {
            Ok(wsp_core::corpus::read_manifest(
                &dir.join(split).join("manifest.jsonl"),
            )?)
        };
        let (train, dev, test) = (read("train")?, read("dev")?, read("test")?);
        Ok(CorpusBundle {
            seed,
            dir,
            train,
            dev,
            test,
        })
    }

    pub fn split_dir(&self, split: &str) -> PathBuf {
        self.dir.join(split)
    }

    /// Gold utterances of the training split.
    pub fn train_utterances(&self) -> Vec<Utterance> {
        self.train.iter().map(ManifestEntry::utterance).collect()
    }

    /// Training examples for the stored train features labeled with `texts`
    /// (one per train entry, in order).
    pub fn train_examples(&self, texts: &[TokenSeq]) -> anyhow::Result<Vec<TrainExample>> {
        assert_eq!(texts.len(), self.train.len());
        self.load_examples("train", &self.train, texts)
    }

    /// The clean subset: the first `n` training utterances with gold
    /// labels, or the dedicated out-of-domain split when one was generated.
    pub fn clean_subset(&self, n: usize) -> anyhow::Result<Vec<TrainExample>> {
        if self.split_dir("clean").join("manifest.jsonl").exists() {
            let entries =
                wsp_core::corpus::read_manifest(&self.split_dir("clean").join("manifest.jsonl"))?;
            let entries = &entries[..n.min(entries.len())];
            let texts: Vec<TokenSeq> = entries.iter().map(|e| TokenSeq::parse(&e.text)).collect();
            return self.load_examples("clean", entries, &texts);
        }
        let entries = &self.train[..n.min(self.train.len())];
        let texts: Vec<TokenSeq> = entries.iter().map(|e| TokenSeq::parse(&e.text)).collect();
        self.load_examples("train", entries, &texts)
    }

    fn load_examples(
        &self,
        split: &str,
        entries: &[ManifestEntry],
        texts: &[TokenSeq],
    ) -> anyhow::Result<Vec<TrainExample>> {
        let base = self.split_dir(split);
        entries
            .par_iter()
            .zip(texts.par_iter())
            .map(|(entry, text)| {
                let features = read_features(&base.join(&entry.audio_path))?;
                let label = label_indices(text).ok_or_else(|| {
                    anyhow::anyhow!("utterance {}: label outside charset: {text}", entry.id)
                })?;
                Ok(TrainExample {
                    id: entry.id.clone(),
                    features,
                    label,
                })
            })
            .collect()
    }

    pub fn eval_examples(&self, split: &str) -> anyhow::Result<Vec<EvalExample>> {
        let entries = match split {
            "dev" => &self.dev,
            "test" => &self.test,
            other => anyhow::bail!("unknown eval split {other:?}"),
        };
        let base = self.split_dir(split);
        entries
            .par_iter()
            .map(|entry| {
                let features = read_features(&base.join(&entry.audio_path))?;
                Ok(EvalExample {
                    id: entry.id.clone(),
                    features,
                    gold: TokenSeq::parse(&entry.text),
                })
            })
            .collect()
    }

    /// The gold-text character LM for this bundle, also written to
    /// `lm.wsplm` for inspection.
    pub fn gold_lm(&self, order: usize, k: f64) -> anyhow::Result<NgramLm> {
        let texts: Vec<TokenSeq> = self
            .train
            .iter()
            .map(|e| TokenSeq::parse(&e.text))
            .collect();
        let lm = train_lm(&texts, order, k)?;
        let path = self.dir.join("lm.wsplm");
        if !path.exists() {
            lm.save(&path)?;
        }
        Ok(lm)
    }
}
