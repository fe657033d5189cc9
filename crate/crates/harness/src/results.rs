//! Result rows and the CSV results table: one row per (cell, decode, seed).

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use wsp_core::corruptor::CorruptionMode;
use wsp_core::textkit::WerReport;

use crate::config::{DecodeKind, Regime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub regime: Regime,
    /// Corruption mode of the weak pool; empty for regimes that never see
    /// corrupted transcripts (direct_ft, self_training).
    pub mode: Option<CorruptionMode>,
    pub fraction: Option<f64>,
    pub decode: DecodeKind,
    pub seed: u64,
    pub pooled_wer: f64,
    pub subs: usize,
    pub dels: usize,
    pub ins: usize,
    pub n_ref: usize,
    pub skipped_utts: usize,
    pub wall_time_s: f64,
    pub flagged: bool,
}

impl ResultRow {
    pub fn wer_report(&self) -> WerReport {
        WerReport {
            n_ref: self.n_ref,
            subs: self.subs,
            dels: self.dels,
            ins: self.ins,
            wer: self.pooled_wer,
        }
    }

    /// Equality ignoring wall time, for determinism checks.
    pub fn same_outcome(&self, other: &ResultRow) -> bool {
        let a = (
            self.regime,
            self.mode,
            self.fraction,
            self.decode,
            self.seed,
        );
        let b = (
            other.regime,
            other.mode,
            other.fraction,
            other.decode,
            other.seed,
        );
        a == b
            && self.pooled_wer == other.pooled_wer
            && (self.subs, self.dels, self.ins, self.n_ref)
                == (other.subs, other.dels, other.ins, other.n_ref)
            && self.skipped_utts == other.skipped_utts
            && self.flagged == other.flagged
    }

    /// Sort key giving the table a stable order.
    pub fn sort_key(&self) -> (String, String, String, String, u64) {
        (
            self.regime.to_string(),
            self.mode.map(|m| m.to_string()).unwrap_or_default(),
            self.fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
            self.decode.to_string(),
            self.seed,
        )
    }
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating results table {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading results table {}", path.display()))?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}

/// One persisted hypothesis: reference and decoded text for an utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypRecord {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
}

pub fn write_hyps(path: &Path, records: &[HypRecord]) -> anyhow::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing hypotheses {}", path.display()))?;
    Ok(())
}

pub fn read_hyps(path: &Path) -> anyhow::Result<Vec<HypRecord>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading hypotheses {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: HypRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: bad hypothesis record", path.display(), i + 1))?;
        records.push(r);
    }
    Ok(records)
}
