//! The single JSON config file shared by every subcommand: corpus shape,
//! corruption knobs, model and training budgets, decoding, and the sweep
//! grid. Every field has a default, so `{}` is a runnable config.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use wsp_core::acoustic::TrainConfig;
use wsp_core::corruptor::{CorruptionConfig, CorruptionMode};
use wsp_core::decode::DecoderConfig;
use wsp_core::synth::VoiceProfileConfig;

/// Words for the built-in synthetic vocabulary, most-frequent first; the
/// sampler weights them by inverse rank. A vocabulary file overrides this.
const DEFAULT_VOCAB: &[&str] = &[
    "the",
    "of",
    "and",
    "to",
    "a",
    "in",
    "is",
    "you",
    "that",
    "it",
    "he",
    "was",
    "for",
    "on",
    "are",
    "as",
    "with",
    "his",
    "they",
    "at",
    "be",
    "this",
    "have",
    "from",
    "or",
    "one",
    "had",
    "by",
    "word",
    "but",
    "not",
    "what",
    "all",
    "were",
    "we",
    "when",
    "your",
    "can",
    "said",
    "there",
    "use",
    "an",
    "each",
    "which",
    "she",
    "do",
    "how",
    "their",
    "if",
    "will",
    "up",
    "other",
    "about",
    "out",
    "many",
    "then",
    "them",
    "these",
    "so",
    "some",
    "her",
    "would",
    "make",
    "like",
    "him",
    "into",
    "time",
    "has",
    "look",
    "two",
    "more",
    "write",
    "go",
    "see",
    "number",
    "no",
    "way",
    "could",
    "people",
    "my",
    "than",
    "first",
    "water",
    "been",
    "call",
    "who",
    "oil",
    "its",
    "now",
    "find",
    "long",
    "down",
    "day",
    "did",
    "get",
    "come",
    "made",
    "may",
    "part",
    "over",
    "new",
    "sound",
    "take",
    "only",
    "little",
    "work",
    "know",
    "place",
    "year",
    "live",
    "me",
    "back",
    "give",
    "most",
    "very",
    "after",
    "thing",
    "our",
    "just",
    "name",
    "good",
    "sentence",
    "man",
    "think",
    "say",
    "great",
    "where",
    "help",
    "through",
    "much",
    "before",
    "line",
    "right",
    "too",
    "mean",
    "old",
    "any",
    "same",
    "tell",
    "boy",
    "follow",
    "came",
    "want",
    "show",
    "also",
    "around",
    "form",
    "three",
    "small",
    "set",
    "put",
    "end",
    "does",
    "another",
    "well",
    "large",
    "must",
    "big",
    "even",
    "such",
    "because",
    "turn",
    "here",
    "why",
    "ask",
    "went",
    "men",
    "read",
    "need",
    "land",
    "different",
    "home",
    "us",
    "move",
    "try",
    "kind",
    "hand",
    "picture",
    "again",
    "change",
    "off",
    "play",
    "spell",
    "air",
    "away",
    "animal",
    "house",
    "point",
    "page",
    "letter",
    "mother",
    "answer",
    "found",
    "study",
    "still",
    "learn",
    "world",
    "high",
    "every",
    "near",
    "add",
    "food",
    "between",
    "own",
    "below",
    "country",
    "plant",
    "last",
    "school",
    "father",
    "keep",
    "tree",
    "never",
    "start",
    "city",
    "earth",
    "eye",
    "light",
    "thought",
    "head",
    "under",
    "story",
    "saw",
    "left",
    "don't",
    "few",
    "while",
    "along",
    "might",
    "close",
    "something",
    "seem",
    "next",
    "hard",
    "open",
    "example",
    "begin",
    "life",
    "always",
    "those",
    "both",
    "paper",
    "together",
    "got",
    "group",
    "often",
    "run",
    "important",
    "until",
    "children",
    "side",
    "feet",
    "car",
    "mile",
    "night",
    "walk",
    "white",
    "sea",
    "began",
    "grow",
    "took",
    "river",
    "four",
    "carry",
    "state",
    "once",
    "book",
    "hear",
    "stop",
    "without",
    "second",
    "later",
    "miss",
    "idea",
    "enough",
    "eat",
    "face",
    "watch",
    "far",
    "real",
    "almost",
    "let",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub len_min: usize,
    pub len_max: usize,
    /// Plain-text vocabulary file, one lowercase word per line; the built-in
    /// list when absent.
    pub vocab_file: Option<PathBuf>,
    pub voice: VoiceProfileConfig,
    /// Prototype seed for an out-of-domain clean subset; same voice when
    /// absent.
    pub clean_subset_voice_seed: Option<u64>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_train: 2000,
            n_dev: 200,
            n_test: 200,
            len_min: 3,
            len_max: 8,
            vocab_file: None,
            voice: VoiceProfileConfig::default(),
            clean_subset_voice_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub context: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context: 2,
            hidden: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    /// From-scratch training on a full-size corpus (weak-only pretraining
    /// and self-training students).
    pub pretrain: TrainConfig,
    /// Fine-tuning from a checkpoint on the clean subset.
    pub finetune: TrainConfig,
    /// From-scratch training on the small clean subset alone (the direct_ft
    /// regime); epoch counts are per-pass over that tiny corpus.
    pub direct: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            pretrain: TrainConfig::default(),
            finetune: TrainConfig {
                max_epochs: 10,
                ..TrainConfig::default().fine_tune()
            },
            direct: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderSection {
    pub decoder: DecoderConfig,
    pub lm_order: usize,
    pub lm_k: f64,
}

impl Default for DecoderSection {
    fn default() -> Self {
        DecoderSection {
            decoder: DecoderConfig::default(),
            lm_order: 4,
            lm_k: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    WeakOnly,
    WspFt,
    DirectFt,
    SelfTraining,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::WeakOnly => "weak_only",
            Regime::WspFt => "wsp_ft",
            Regime::DirectFt => "direct_ft",
            Regime::SelfTraining => "self_training",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weak_only" => Ok(Regime::WeakOnly),
            "wsp_ft" => Ok(Regime::WspFt),
            "direct_ft" => Ok(Regime::DirectFt),
            "self_training" => Ok(Regime::SelfTraining),
            other => Err(format!("unknown regime {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeKind {
    Greedy,
    Lm,
}

impl std::fmt::Display for DecodeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecodeKind::Greedy => write!(f, "greedy"),
            DecodeKind::Lm => write!(f, "lm"),
        }
    }
}

/// Which decodes an experiment cell evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeChoice {
    Greedy,
    Lm,
    Both,
}

impl DecodeChoice {
    pub fn kinds(self) -> Vec<DecodeKind> {
        match self {
            DecodeChoice::Greedy => vec![DecodeKind::Greedy],
            DecodeChoice::Lm => vec![DecodeKind::Lm],
            DecodeChoice::Both => vec![DecodeKind::Greedy, DecodeKind::Lm],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// The extreme-low-resource clean set carved from the head of the
    /// training corpus (or generated separately when
    /// `corpus.clean_subset_voice_seed` is set).
    pub clean_subset_size: usize,
    /// Decodes evaluated per cell.
    pub decode: DecodeChoice,
    /// Share of the weak pool pseudo-labeled for self-training.
    pub self_training_pool_fraction: f64,
    /// Teacher regime for self-training.
    pub teacher: Regime,
    /// Decode used to produce pseudo-labels.
    pub teacher_decode: DecodeKind,
    /// Weak pool used by the fixed-regime comparison (wsp_ft vs direct_ft vs
    /// self_training): corruption mode and fraction.
    pub comparison_mode: CorruptionMode,
    pub comparison_fraction: f64,
    /// A weak-only result at or above this WER is flagged as non-converged.
    pub non_convergence_wer: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            clean_subset_size: 50,
            decode: DecodeChoice::Both,
            self_training_pool_fraction: 0.4,
            teacher: Regime::DirectFt,
            teacher_decode: DecodeKind::Lm,
            comparison_mode: CorruptionMode::Random,
            comparison_fraction: 1.0,
            non_convergence_wer: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub modes: Vec<CorruptionMode>,
    pub fractions: Vec<f64>,
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            modes: vec![CorruptionMode::Random, CorruptionMode::Full],
            fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            regimes: vec![
                Regime::WeakOnly,
                Regime::WspFt,
                Regime::DirectFt,
                Regime::SelfTraining,
            ],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub corruption: CorruptionConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub decode: DecoderSection,
    pub experiment: ExperimentConfig,
    pub sweep: SweepConfig,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Config = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.corruption
            .validate()
            .map_err(|e| anyhow::anyhow!("corruption config: {e}"))?;
        anyhow::ensure!(
            self.corpus.len_min >= 1 && self.corpus.len_min <= self.corpus.len_max,
            "corpus: need 1 <= len_min <= len_max"
        );
        anyhow::ensure!(self.decode.lm_order >= 1, "decode: lm_order must be >= 1");
        anyhow::ensure!(self.decode.lm_k > 0.0, "decode: lm_k must be positive");
        for f in &self.sweep.fractions {
            anyhow::ensure!(
                (0.0..=1.0).contains(f),
                "sweep: fraction {f} outside [0, 1]"
            );
        }
        anyhow::ensure!(
            (0.0..=1.0).contains(&self.experiment.self_training_pool_fraction),
            "experiment: self_training_pool_fraction outside [0, 1]"
        );
        Ok(())
    }

    /// The weighted vocabulary: inverse-rank weights over either the config's
    /// vocabulary file or the built-in list.
    pub fn vocabulary(&self) -> anyhow::Result<Vec<(String, f64)>> {
        let words: Vec<String> = match &self.corpus.vocab_file {
            Some(path) => wsp_core::corpus::read_vocab_file(path)
                .with_context(|| format!("reading vocabulary {}", path.display()))?,
            None => DEFAULT_VOCAB.iter().map(|w| w.to_string()).collect(),
        };
        anyhow::ensure!(!words.is_empty(), "vocabulary is empty");
        Ok(words
            .into_iter()
            .enumerate()
            .map(|(i, w)| (w, 1.0 / (i + 1) as f64))
            .collect())
    }
}
