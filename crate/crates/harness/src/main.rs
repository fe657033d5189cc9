//! The `wsp` command line: corpus synthesis, transcript corruption,
//! training, decoding, scoring, sweeps, and reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 sweep completed
//! with flagged (non-converged) cells.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use wsp_core::acoustic::{
    label_indices, train, AcousticModel, EvalExample, TrainConfig, TrainExample,
};
use wsp_core::corpus::{read_manifest, write_manifest, ManifestEntry};
use wsp_core::corruptor::{corrupt_corpus, CorruptionConfig, CorruptionMode, NeighborIndex};
use wsp_core::decode::{beam_decode, greedy_decode, NgramLm};
use wsp_core::synth::read_features;
use wsp_core::textkit::{self, TokenSeq};

use wsp_harness::config::Config;
use wsp_harness::corpora::CorpusBundle;
use wsp_harness::report::render_report;
use wsp_harness::results::{read_hyps, read_results_csv, write_hyps, HypRecord};
use wsp_harness::{run_sweep, Workbench};

#[derive(Parser)]
#[command(name = "wsp", version, about = "Weak-supervision ASR workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the seed (for sweeps: replaces the seed list).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "wsp-out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/dev/test corpora.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Corrupt the transcripts of a manifest (audio untouched).
    Corrupt {
        #[command(flatten)]
        common: Common,
        /// Input manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest path.
        #[arg(long)]
        out: PathBuf,
        /// Corruption mode override: random or full.
        #[arg(long)]
        mode: Option<String>,
        /// Fraction of utterances to corrupt.
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Train an acoustic model on a manifest.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Dev manifest for early stopping (greedy WER).
        #[arg(long)]
        dev_manifest: Option<PathBuf>,
        /// Checkpoint to initialize from (otherwise random init).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Use the fine-tuning budget and learning rate.
        #[arg(long)]
        finetune: bool,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a manifest with a trained model.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Language model file; greedy decoding when omitted.
        #[arg(long)]
        lm: Option<PathBuf>,
        /// Output hypotheses (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score hypotheses against a reference manifest.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
    },
    /// Run the full experiment grid from the config.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Render a markdown report from a results table.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        results: PathBuf,
        /// Hypotheses file to draw sample diffs from.
        #[arg(long)]
        hyps: Option<PathBuf>,
        /// Number of sample diffs.
        #[arg(long, default_value_t = 10)]
        samples: usize,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> anyhow::Result<Config> {
    match &common.config {
        Some(path) => Config::load(path),
        None => Ok(Config::default()),
    }
}

fn load_examples(manifest_path: &Path) -> anyhow::Result<(Vec<TrainExample>, Vec<EvalExample>)> {
    let entries = read_manifest(manifest_path)?;
    let base = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut train_examples = Vec::with_capacity(entries.len());
    let mut eval_examples = Vec::with_capacity(entries.len());
    for entry in &entries {
        let features = read_features(&base.join(&entry.audio_path))?;
        let text = TokenSeq::parse(&entry.text);
        let label = label_indices(&text)
            .with_context(|| format!("utterance {}: transcript outside charset", entry.id))?;
        train_examples.push(TrainExample {
            id: entry.id.clone(),
            features: features.clone(),
            label,
        });
        eval_examples.push(EvalExample {
            id: entry.id.clone(),
            features,
            gold: text,
        });
    }
    Ok((train_examples, eval_examples))
}

fn run(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Synth { common } => {
            let config = load_config(&common)?;
            let seed = common.seed.unwrap_or(1);
            let vocab = config.vocabulary()?;
            let bundle = CorpusBundle::ensure(&config, &vocab, &common.out_dir, seed)?;
            println!(
                "generated {} train / {} dev / {} test utterances under {}",
                bundle.train.len(),
                bundle.dev.len(),
                bundle.test.len(),
                bundle.dir.display()
            );
            Ok(0)
        }
        Command::Corrupt {
            common,
            manifest,
            out,
            mode,
            fraction,
        } => {
            let mut config = load_config(&common)?;
            if let Some(mode) = mode {
                config.corruption.mode = match mode.as_str() {
                    "random" => CorruptionMode::Random,
                    "full" => CorruptionMode::Full,
                    other => anyhow::bail!("unknown corruption mode {other:?}"),
                };
            }
            let fraction = fraction.unwrap_or(1.0);
            anyhow::ensure!((0.0..=1.0).contains(&fraction), "fraction outside [0, 1]");
            let seed = common.seed.unwrap_or(1);

            let entries = read_manifest(&manifest)?;
            let utterances: Vec<_> = entries.iter().map(ManifestEntry::utterance).collect();
            let vocab = config.vocabulary()?;
            let words: Vec<String> = vocab.into_iter().map(|(w, _)| w).collect();
            let index = NeighborIndex::build(&words);
            let cfg = CorruptionConfig {
                mode: config.corruption.mode,
                ..config.corruption.clone()
            };
            let (corrupted, stats) = corrupt_corpus(&utterances, &cfg, &index, fraction, seed);
            let out_entries: Vec<ManifestEntry> = entries
                .iter()
                .zip(&corrupted)
                .map(|(entry, utt)| ManifestEntry {
                    text: utt.text.to_string(),
                    ..entry.clone()
                })
                .collect();
            write_manifest(&out, &out_entries)?;
            println!(
                "corrupted {} of {} utterances ({} words deleted, {} substituted, {} repeated)",
                corrupted
                    .iter()
                    .zip(&utterances)
                    .filter(|(a, b)| a.text != b.text)
                    .count(),
                corrupted.len(),
                stats.deleted,
                stats.substituted,
                stats.repeated,
            );
            Ok(0)
        }
        Command::Train {
            common,
            manifest,
            dev_manifest,
            init,
            finetune,
            out,
        } => {
            let config = load_config(&common)?;
            let (corpus, _) = load_examples(&manifest)?;
            anyhow::ensure!(!corpus.is_empty(), "training manifest is empty");
            let dev = match &dev_manifest {
                Some(path) => load_examples(path)?.1,
                None => Vec::new(),
            };
            let model = match &init {
                Some(path) => AcousticModel::load(path)?,
                None => AcousticModel::init_random(
                    config.model.context,
                    corpus[0].features.dim(),
                    config.model.hidden,
                    common.seed.unwrap_or(1),
                ),
            };
            let base = if finetune {
                config.train.finetune.clone()
            } else {
                config.train.pretrain.clone()
            };
            let cfg = TrainConfig {
                seed: common.seed.unwrap_or(base.seed),
                ..base
            };
            let outcome = train(model, &corpus, &dev, &cfg)?;
            outcome.model.save(&out)?;
            if let Some(last) = outcome.history.last() {
                println!(
                    "trained {} steps, final dev WER {:.2}%, skipped {} utterances",
                    last.step,
                    last.dev_wer * 100.0,
                    outcome.skipped_utts
                );
            } else {
                println!(
                    "trained (no dev evaluation), skipped {} utterances",
                    outcome.skipped_utts
                );
            }
            println!("checkpoint written to {}", out.display());
            Ok(0)
        }
        Command::Decode {
            common,
            model,
            manifest,
            lm,
            out,
        } => {
            let config = load_config(&common)?;
            let model = AcousticModel::load(&model)?;
            let (_, eval) = load_examples(&manifest)?;
            let lm = lm.map(|path| NgramLm::load(&path)).transpose()?;
            let records: Vec<HypRecord> = eval
                .iter()
                .map(|ex| {
                    let post = model.forward(&ex.features)?;
                    let hyp = match &lm {
                        Some(lm) => beam_decode(&post, lm, &config.decode.decoder),
                        None => greedy_decode(&post),
                    };
                    Ok(HypRecord {
                        id: ex.id.clone(),
                        reference: ex.gold.to_string(),
                        hypothesis: hyp.to_string(),
                    })
                })
                .collect::<anyhow::Result<_>>()?;
            write_hyps(&out, &records)?;
            println!("decoded {} utterances to {}", records.len(), out.display());
            Ok(0)
        }
        Command::Score { refs, hyps, .. } => {
            let entries = read_manifest(&refs)?;
            let records = read_hyps(&hyps)?;
            let by_id: HashMap<&str, &ManifestEntry> =
                entries.iter().map(|e| (e.id.as_str(), e)).collect();
            let mut pairs: Vec<(TokenSeq, TokenSeq)> = Vec::with_capacity(records.len());
            for r in &records {
                let entry = by_id
                    .get(r.id.as_str())
                    .with_context(|| format!("hypothesis {} not in reference manifest", r.id))?;
                pairs.push((TokenSeq::parse(&entry.text), TokenSeq::parse(&r.hypothesis)));
            }
            let report = textkit::corpus_wer(pairs.iter().map(|(r, h)| (r, h)))?;
            println!(
                "WER {:.2}% (S={} D={} I={} / N={})",
                report.wer * 100.0,
                report.subs,
                report.dels,
                report.ins,
                report.n_ref
            );
            Ok(0)
        }
        Command::Sweep { common } => {
            let mut config = load_config(&common)?;
            if let Some(seed) = common.seed {
                config.sweep.seeds = vec![seed];
            }
            let wb = Workbench::new(config, &common.out_dir)?;
            let outcome = run_sweep(&wb)?;
            println!(
                "sweep complete: {} rows written to {}",
                outcome.rows.len(),
                outcome.results_path.display()
            );
            if !outcome.failures.is_empty() {
                println!(
                    "{} cell(s) failed; see {}",
                    outcome.failures.len(),
                    wb.out_dir.join("failures.log").display()
                );
            }
            if outcome.any_flagged {
                println!("sweep completed with flagged cells");
                return Ok(3);
            }
            Ok(0)
        }
        Command::Report {
            common: _,
            results,
            hyps,
            samples,
            out,
        } => {
            let rows = read_results_csv(&results)?;
            let records = match &hyps {
                Some(path) => read_hyps(path)?,
                None => Vec::new(),
            };
            let report = render_report(&rows, &records, samples);
            match out {
                Some(path) => {
                    std::fs::write(&path, &report)?;
                    println!("report written to {}", path.display());
                }
                None => print!("{report}"),
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with status 0
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
