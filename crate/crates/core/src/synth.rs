//! Synthetic paired (feature-sequence, gold-transcript) corpora.
//!
//! Characters are emitted as a per-symbol prototype vector plus Gaussian
//! noise and a per-utterance channel offset, with a random duration per
//! character. Deliberately minimal acoustics: the workbench studies
//! transcript quality, not audio realism, but durations, noise, and channel
//! offsets keep the CTC task nontrivial.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charset::Charset;
use crate::corpus::ManifestEntry;
use crate::rng;
use crate::textkit::TokenSeq;

/// Nominal frame rate used to derive manifest time spans.
pub const FRAMES_PER_SECOND: f64 = 100.0;

const MAGIC: &[u8; 4] = b"WSPF";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("vocabulary is empty or has no positive weight")]
    EmptyVocab,
    #[error("text contains characters outside the charset: {0:?}")]
    CharsetViolation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic (not a feature file)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported format version {version}")]
    BadVersion { path: PathBuf, version: u32 },
    #[error("{path}: truncated feature file")]
    Truncated { path: PathBuf },
    #[error("{path}: invalid shape: {reason}")]
    InvalidShape { path: PathBuf, reason: String },
}

/// A T x dim frame matrix. Values are stored as f32, exactly as they live on
/// disk, so write/read round trips are bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    dim: usize,
    data: Vec<f32>,
}

impl Features {
    pub fn new(dim: usize, data: Vec<f32>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        Features { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }
}

/// A feature sequence paired with its gold transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub utterance_id: String,
    pub gold: TokenSeq,
    pub features: Features,
}

/// Emission model parameters. Prototypes are drawn once from a seeded
/// standard normal and re-drawn (with a bumped sub-seed) if any pair lands
/// close enough to threaten frame separability at the configured noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoiceProfileConfig {
    pub dim: usize,
    pub noise_sigma: f64,
    pub dur_min: usize,
    pub dur_max: usize,
    pub channel_sigma: f64,
    pub crossfade: bool,
    pub seed: u64,
}

impl Default for VoiceProfileConfig {
    fn default() -> Self {
        VoiceProfileConfig {
            dim: 16,
            noise_sigma: 0.3,
            dur_min: 2,
            dur_max: 5,
            channel_sigma: 0.05,
            crossfade: false,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VoiceProfile {
    pub config: VoiceProfileConfig,
    /// One prototype vector per charset symbol, row-major 28 x dim.
    prototypes: Vec<f64>,
}

impl VoiceProfile {
    pub fn build(config: &VoiceProfileConfig) -> Self {
        assert!(config.dim >= 1, "feature dim must be >= 1");
        assert!(
            config.dur_min >= 1 && config.dur_min <= config.dur_max,
            "need 1 <= dur_min <= dur_max"
        );
        assert!(config.noise_sigma >= 0.0 && config.channel_sigma >= 0.0);

        for attempt in 0..64u64 {
            let mut stream = rng::stream(config.seed, &["voice-prototypes", &attempt.to_string()]);
            let n = Charset::symbols().len();
            let mut prototypes = vec![0.0f64; n * config.dim];
            for v in prototypes.iter_mut() {
                *v = StandardNormal.sample(&mut stream);
            }
            let profile = VoiceProfile {
                config: config.clone(),
                prototypes,
            };
            if profile.empirical_frame_accuracy(&mut stream) >= 0.97 {
                return profile;
            }
        }
        panic!(
            "could not draw separable prototypes for dim={} noise_sigma={}",
            config.dim, config.noise_sigma
        );
    }

    /// Seeded Monte-Carlo estimate of nearest-prototype frame accuracy under
    /// the configured noise and channel offset.
    fn empirical_frame_accuracy(&self, stream: &mut ChaCha8Rng) -> f64 {
        let cfg = &self.config;
        let n = Charset::symbols().len();
        let per_symbol = 60;
        let mut correct = 0usize;
        let mut frame = vec![0.0f32; cfg.dim];
        for sym in 0..n {
            for _ in 0..per_symbol {
                let proto = self.prototype(sym);
                for d in 0..cfg.dim {
                    let noise: f64 = StandardNormal.sample(stream);
                    let channel: f64 = StandardNormal.sample(stream);
                    frame[d] =
                        (proto[d] + noise * cfg.noise_sigma + channel * cfg.channel_sigma) as f32;
                }
                if self.nearest_prototype(&frame) == sym {
                    correct += 1;
                }
            }
        }
        correct as f64 / (n * per_symbol) as f64
    }

    /// Same prototypes, different emission noise. Lets tests and alignment
    /// checks render noiseless features for a profile a model was trained
    /// on.
    pub fn with_emission_noise(mut self, noise_sigma: f64, channel_sigma: f64) -> Self {
        self.config.noise_sigma = noise_sigma;
        self.config.channel_sigma = channel_sigma;
        self
    }

    pub fn prototype(&self, symbol: usize) -> &[f64] {
        &self.prototypes[symbol * self.config.dim..(symbol + 1) * self.config.dim]
    }

    /// Index of the nearest prototype to `frame` (squared Euclidean).
    pub fn nearest_prototype(&self, frame: &[f32]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for s in 0..Charset::symbols().len() {
            let p = self.prototype(s);
            let d: f64 = p
                .iter()
                .zip(frame)
                .map(|(a, &b)| (a - f64::from(b)).powi(2))
                .sum();
            if d < best_d {
                best_d = d;
                best = s;
            }
        }
        best
    }
}

/// Sample a sentence of uniform length in `[len_min, len_max]` with words
/// drawn i.i.d. from the weight distribution.
pub fn sample_sentence(
    vocab: &[(String, f64)],
    len_min: usize,
    len_max: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TokenSeq, SynthError> {
    assert!(1 <= len_min && len_min <= len_max);
    let total: f64 = vocab.iter().map(|(_, w)| w.max(0.0)).sum();
    if vocab.is_empty() || total <= 0.0 {
        return Err(SynthError::EmptyVocab);
    }
    let len = rng.random_range(len_min..=len_max);
    let mut tokens = Vec::with_capacity(len);
    for _ in 0..len {
        let mut target = rng.random::<f64>() * total;
        let mut picked = vocab.len() - 1;
        for (i, (_, w)) in vocab.iter().enumerate() {
            let w = w.max(0.0);
            if target < w {
                picked = i;
                break;
            }
            target -= w;
        }
        tokens.push(vocab[picked].0.clone());
    }
    Ok(tokens.into_iter().collect())
}

/// True character span in frames, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharSpan {
    pub symbol: usize,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// Render a transcript to frames and report the true per-character spans.
///
/// The text is serialized with single spaces between words; each character
/// emits `D ~ Uniform{dur_min..dur_max}` frames of `prototype + noise +
/// channel offset`. With crossfade on, the first frame of each character is
/// averaged with the last frame of the previous one.
pub fn render_features_with_spans(
    text: &TokenSeq,
    voice: &VoiceProfile,
    rng: &mut ChaCha8Rng,
) -> Result<(Features, Vec<CharSpan>), SynthError> {
    let serialized = text.to_string();
    if serialized.is_empty() {
        return Err(SynthError::CharsetViolation(String::new()));
    }
    let symbols = Charset::encode(&serialized)
        .ok_or_else(|| SynthError::CharsetViolation(serialized.clone()))?;

    let cfg = &voice.config;
    let mut channel = vec![0.0f64; cfg.dim];
    for v in channel.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = z * cfg.channel_sigma;
    }

    let mut data: Vec<f32> = Vec::with_capacity(symbols.len() * cfg.dur_max * cfg.dim);
    let mut spans = Vec::with_capacity(symbols.len());
    let mut t = 0usize;
    for &sym in &symbols {
        let dur = rng.random_range(cfg.dur_min..=cfg.dur_max);
        let proto = voice.prototype(sym as usize);
        let start = t;
        for frame_i in 0..dur {
            let base = data.len();
            for d in 0..cfg.dim {
                let z: f64 = StandardNormal.sample(rng);
                data.push((proto[d] + z * cfg.noise_sigma + channel[d]) as f32);
            }
            if cfg.crossfade && frame_i == 0 && t > 0 {
                for d in 0..cfg.dim {
                    let prev = data[base - cfg.dim + d];
                    data[base + d] = (data[base + d] + prev) / 2.0;
                }
            }
            t += 1;
        }
        spans.push(CharSpan {
            symbol: sym as usize,
            start_frame: start,
            end_frame: t - 1,
        });
    }
    Ok((Features::new(cfg.dim, data), spans))
}

pub fn render_features(
    text: &TokenSeq,
    voice: &VoiceProfile,
    rng: &mut ChaCha8Rng,
) -> Result<Features, SynthError> {
    render_features_with_spans(text, voice, rng).map(|(f, _)| f)
}

/// Corpus generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_utts: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub vocab: Vec<(String, f64)>,
    pub voice: VoiceProfileConfig,
    pub seed: u64,
    pub id_prefix: String,
}

/// Generate `n_utts` (features, gold transcript) pairs under `out_dir`.
///
/// Writes `out_dir/feats/<id>.wspf` plus `out_dir/manifest.jsonl` and
/// returns the manifest entries. Deterministic under the spec's seed; every
/// utterance uses streams keyed by its id.
pub fn generate_corpus(
    spec: &CorpusSpec,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>, SynthError> {
    assert!(spec.n_utts >= 1, "n_utts must be >= 1");
    let voice = VoiceProfile::build(&spec.voice);
    let feats_dir = out_dir.join("feats");
    fs::create_dir_all(&feats_dir).map_err(|source| SynthError::Io {
        path: feats_dir.clone(),
        source,
    })?;

    let rendered: Vec<Result<(ManifestEntry, Features), SynthError>> = (0..spec.n_utts)
        .into_par_iter()
        .map(|i| {
            let id = format!("{}-{i:06}", spec.id_prefix);
            let mut sent_rng = rng::stream(spec.seed, &["sentence", &id]);
            let text = sample_sentence(&spec.vocab, spec.len_min, spec.len_max, &mut sent_rng)?;
            let mut feat_rng = rng::stream(spec.seed, &["features", &id]);
            let features = render_features(&text, &voice, &mut feat_rng)?;
            let entry = ManifestEntry {
                audio_path: format!("feats/{id}.wspf"),
                text: text.to_string(),
                start_s: 0.0,
                end_s: features.len() as f64 / FRAMES_PER_SECOND,
                id,
            };
            Ok((entry, features))
        })
        .collect();

    let mut entries = Vec::with_capacity(spec.n_utts);
    for r in rendered {
        let (entry, features) = r?;
        write_features(&out_dir.join(&entry.audio_path), &features)?;
        entries.push(entry);
    }
    crate::corpus::write_manifest(&out_dir.join("manifest.jsonl"), &entries).map_err(
        |e| match e {
            crate::corpus::CorpusError::Io { path, source } => SynthError::Io { path, source },
            other => SynthError::InvalidShape {
                path: out_dir.join("manifest.jsonl"),
                reason: other.to_string(),
            },
        },
    )?;
    Ok(entries)
}

/// Write the binary feature format: magic "WSPF", version u32, T u32,
/// dim u32, then T*dim little-endian f32 values row-major.
pub fn write_features(path: &Path, features: &Features) -> Result<(), SynthError> {
    let io_err = |source| SynthError::Io {
        path: path.to_owned(),
        source,
    };
    let t = features.len();
    let mut buf = Vec::with_capacity(16 + features.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(t as u32).to_le_bytes());
    buf.extend_from_slice(&(features.dim as u32).to_le_bytes());
    for v in &features.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&buf).map_err(io_err)?;
    Ok(())
}

pub fn read_features(path: &Path) -> Result<Features, SynthError> {
    let bytes = fs::read(path).map_err(|source| SynthError::Io {
        path: path.to_owned(),
        source,
    })?;
    if bytes.len() < 16 {
        return Err(SynthError::Truncated {
            path: path.to_owned(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(SynthError::BadMagic {
            path: path.to_owned(),
        });
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(SynthError::BadVersion {
            path: path.to_owned(),
            version,
        });
    }
    let t = u32_at(8) as usize;
    let dim = u32_at(12) as usize;
    if t == 0 || dim == 0 {
        return Err(SynthError::InvalidShape {
            path: path.to_owned(),
            reason: format!("T={t} dim={dim}, need T >= 1 and dim >= 1"),
        });
    }
    let expected = 16 + 4 * t * dim;
    if bytes.len() < expected {
        return Err(SynthError::Truncated {
            path: path.to_owned(),
        });
    }
    if bytes.len() > expected {
        return Err(SynthError::InvalidShape {
            path: path.to_owned(),
            reason: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let mut data = Vec::with_capacity(t * dim);
    for chunk in bytes[16..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(Features::new(dim, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_vocab() -> Vec<(String, f64)> {
        ["the", "cat", "dog", "sat", "on", "a", "mat", "talks"]
            .iter()
            .map(|w| (w.to_string(), 1.0))
            .collect()
    }

    #[test]
    fn sample_sentence_contracts() {
        let mut r = rng::stream(1, &["t"]);
        let single = vec![("word".to_string(), 1.0)];
        let s = sample_sentence(&single, 1, 1, &mut r).unwrap();
        assert_eq!(s.to_string(), "word");

        for _ in 0..200 {
            let s = sample_sentence(&test_vocab(), 3, 10, &mut r).unwrap();
            assert!((3..=10).contains(&s.len()));
        }

        assert!(matches!(
            sample_sentence(&[], 1, 2, &mut r),
            Err(SynthError::EmptyVocab)
        ));
    }

    #[test]
    fn sample_sentence_respects_weights() {
        let vocab = vec![("a".to_string(), 1.0), ("b".to_string(), 1.0)];
        let mut r = rng::stream(2, &["weights"]);
        let mut count_a = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let s = sample_sentence(&vocab, 1, 1, &mut r).unwrap();
            if s.tokens()[0] == "a" {
                count_a += 1;
            }
        }
        let freq = count_a as f64 / n as f64;
        assert!((0.48..=0.52).contains(&freq), "freq {freq}");
    }

    #[test]
    fn noiseless_render_is_exact_prototypes() {
        let cfg = VoiceProfileConfig {
            noise_sigma: 0.0,
            channel_sigma: 0.0,
            dur_min: 1,
            dur_max: 1,
            ..VoiceProfileConfig::default()
        };
        let voice = VoiceProfile::build(&cfg);
        let mut r = rng::stream(3, &["render"]);
        let text = TokenSeq::parse("ab");
        let feats = render_features(&text, &voice, &mut r).unwrap();
        assert_eq!(feats.len(), 2);
        let a = Charset::index_of('a').unwrap();
        let b = Charset::index_of('b').unwrap();
        for d in 0..cfg.dim {
            assert_eq!(feats.frame(0)[d], voice.prototype(a)[d] as f32);
            assert_eq!(feats.frame(1)[d], voice.prototype(b)[d] as f32);
        }
    }

    #[test]
    fn render_duration_bounds() {
        let voice = VoiceProfile::build(&VoiceProfileConfig::default());
        let mut r = rng::stream(4, &["dur"]);
        // "ab cd" = 5 characters including the space
        let feats = render_features(&TokenSeq::parse("ab cd"), &voice, &mut r).unwrap();
        assert!((10..=25).contains(&feats.len()), "T = {}", feats.len());
    }

    #[test]
    fn nearest_prototype_recovers_noiseless_text() {
        let cfg = VoiceProfileConfig {
            noise_sigma: 0.0,
            channel_sigma: 0.0,
            ..VoiceProfileConfig::default()
        };
        let voice = VoiceProfile::build(&cfg);
        let mut r = rng::stream(5, &["recover"]);
        let text = TokenSeq::parse("the cat talks");
        let (feats, spans) = render_features_with_spans(&text, &voice, &mut r).unwrap();
        let mut recovered = String::new();
        for span in &spans {
            for t in span.start_frame..=span.end_frame {
                assert_eq!(voice.nearest_prototype(feats.frame(t)), span.symbol);
            }
            recovered.push(Charset::char_at(span.symbol));
        }
        assert_eq!(recovered, "the cat talks");
    }

    #[test]
    fn noisy_frames_still_separable() {
        let voice = VoiceProfile::build(&VoiceProfileConfig::default());
        let mut r = rng::stream(6, &["sep"]);
        let text = TokenSeq::parse("the cat sat on a mat");
        let (feats, spans) = render_features_with_spans(&text, &voice, &mut r).unwrap();
        let mut correct = 0usize;
        let mut total = 0usize;
        for span in &spans {
            for t in span.start_frame..=span.end_frame {
                total += 1;
                if voice.nearest_prototype(feats.frame(t)) == span.symbol {
                    correct += 1;
                }
            }
        }
        let acc = correct as f64 / total as f64;
        assert!(acc > 0.95, "frame accuracy {acc}");
    }

    #[test]
    fn feature_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wspf");
        let feats = Features::new(3, vec![1.0, -2.5, 0.0, 4.25, f32::MIN_POSITIVE, -0.0]);
        write_features(&path, &feats).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back, feats);

        fs::write(&path, b"NOPE\x01\x00\x00\x00").unwrap();
        assert!(matches!(
            read_features(&path),
            Err(SynthError::Truncated { .. })
        ));
        fs::write(&path, b"NOPExxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(
            read_features(&path),
            Err(SynthError::BadMagic { .. })
        ));

        // T=0 header
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&4u32.to_le_bytes());
        fs::write(&path, &buf).unwrap();
        assert!(matches!(
            read_features(&path),
            Err(SynthError::InvalidShape { .. })
        ));
    }

    #[test]
    fn single_utterance_corpus_round_trips() {
        let spec = CorpusSpec {
            n_utts: 1,
            len_min: 2,
            len_max: 4,
            vocab: test_vocab(),
            voice: VoiceProfileConfig::default(),
            seed: 10,
            id_prefix: "utt".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let entries = generate_corpus(&spec, dir.path()).unwrap();
        assert_eq!(entries.len(), 1);
        let path = dir.path().join(&entries[0].audio_path);
        let feats = read_features(&path).unwrap();
        let copy = dir.path().join("copy.wspf");
        write_features(&copy, &feats).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&copy).unwrap());
    }

    #[test]
    fn generate_corpus_is_deterministic() {
        let spec = CorpusSpec {
            n_utts: 4,
            len_min: 2,
            len_max: 4,
            vocab: test_vocab(),
            voice: VoiceProfileConfig::default(),
            seed: 11,
            id_prefix: "utt".into(),
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = generate_corpus(&spec, dir_a.path()).unwrap();
        let b = generate_corpus(&spec, dir_b.path()).unwrap();
        assert_eq!(a, b);
        for entry in &a {
            let fa = fs::read(dir_a.path().join(&entry.audio_path)).unwrap();
            let fb = fs::read(dir_b.path().join(&entry.audio_path)).unwrap();
            assert_eq!(fa, fb);
            assert!(!entry.text.is_empty());
        }
        let ma = fs::read(dir_a.path().join("manifest.jsonl")).unwrap();
        let mb = fs::read(dir_b.path().join("manifest.jsonl")).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn corpus_duration_expectation() {
        let spec = CorpusSpec {
            n_utts: 200,
            len_min: 3,
            len_max: 8,
            vocab: test_vocab(),
            voice: VoiceProfileConfig::default(),
            seed: 12,
            id_prefix: "utt".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let entries = generate_corpus(&spec, dir.path()).unwrap();
        let mut total_chars = 0usize;
        let mut total_frames = 0usize;
        for e in &entries {
            total_chars += e.text.chars().count();
            total_frames += read_features(&dir.path().join(&e.audio_path))
                .unwrap()
                .len();
        }
        let ratio = total_frames as f64 / total_chars as f64;
        assert!((2.0..=5.0).contains(&ratio), "frames per char {ratio}");
    }
}
