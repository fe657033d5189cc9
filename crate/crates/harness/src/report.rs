//! Markdown reports: WER tables in "greedy/LM" form, per-regime error-type
//! breakdowns, and aligned sample diffs with per-sample WER in parentheses.

use std::collections::BTreeMap;

use wsp_core::corruptor::CorruptionMode;
use wsp_core::textkit::{self, EditOp, TokenSeq};

use crate::config::{DecodeKind, Regime};
use crate::results::{HypRecord, ResultRow};

pub fn median(values: &mut Vec<f64>) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn cell_median(
    rows: &[ResultRow],
    regime: Regime,
    mode: Option<CorruptionMode>,
    fraction: Option<f64>,
    decode: DecodeKind,
) -> Option<f64> {
    let mut values: Vec<f64> = rows
        .iter()
        .filter(|r| {
            r.regime == regime
                && r.decode == decode
                && r.mode == mode
                && match (r.fraction, fraction) {
                    (Some(a), Some(b)) => (a - b).abs() < 1e-9,
                    (None, None) => true,
                    _ => false,
                }
        })
        .map(|r| r.pooled_wer)
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(median(&mut values))
    }
}

fn greedy_lm_cell(
    rows: &[ResultRow],
    regime: Regime,
    mode: Option<CorruptionMode>,
    fraction: Option<f64>,
) -> String {
    let g = cell_median(rows, regime, mode, fraction, DecodeKind::Greedy);
    let l = cell_median(rows, regime, mode, fraction, DecodeKind::Lm);
    match (g, l) {
        (Some(g), Some(l)) => format!("{:.2}/{:.2}", g * 100.0, l * 100.0),
        (Some(g), None) => format!("{:.2}/-", g * 100.0),
        (None, Some(l)) => format!("-/{:.2}", l * 100.0),
        (None, None) => "-".to_string(),
    }
}

/// Render the full report. `samples` are persisted hypotheses to show as
/// aligned diffs; per-sample WER is recomputed from the stored text.
pub fn render_report(rows: &[ResultRow], samples: &[HypRecord], max_samples: usize) -> String {
    let mut out = String::new();
    out.push_str("# wsp experiment report\n\n");

    let seeds: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
    out.push_str(&format!(
        "Cells show pooled test WER in percent as greedy/LM, median over {} seed(s).\n\n",
        seeds.len()
    ));

    // corruption-sweep tables
    for regime in [Regime::WeakOnly, Regime::WspFt] {
        let mut fractions: Vec<f64> = rows
            .iter()
            .filter(|r| r.regime == regime)
            .filter_map(|r| r.fraction)
            .collect();
        fractions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        fractions.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        if fractions.is_empty() {
            continue;
        }
        out.push_str(&format!("## {regime}\n\n"));
        out.push_str("| % corrupted | random | full |\n|---:|---:|---:|\n");
        for &fraction in &fractions {
            let label = format!("{:.0}", fraction * 100.0);
            if fraction == 0.0 {
                // fraction zero is mode-independent; one canonical cell
                let cell = greedy_lm_cell(rows, regime, Some(CorruptionMode::Random), Some(0.0));
                out.push_str(&format!("| {label} | {cell} | {cell} |\n"));
            } else {
                let random =
                    greedy_lm_cell(rows, regime, Some(CorruptionMode::Random), Some(fraction));
                let full = greedy_lm_cell(rows, regime, Some(CorruptionMode::Full), Some(fraction));
                out.push_str(&format!("| {label} | {random} | {full} |\n"));
            }
        }
        out.push('\n');
    }

    // fixed-regime comparison
    let fixed: Vec<Regime> = [Regime::DirectFt, Regime::SelfTraining]
        .into_iter()
        .filter(|r| rows.iter().any(|row| row.regime == *r))
        .collect();
    if !fixed.is_empty() {
        out.push_str("## regimes without a corruption sweep\n\n");
        out.push_str("| regime | greedy/LM |\n|---|---:|\n");
        for regime in fixed {
            let cell = greedy_lm_cell(rows, regime, None, None);
            out.push_str(&format!("| {regime} | {cell} |\n"));
        }
        out.push('\n');
    }

    // error-type breakdown: pooled counts over all seeds per (regime, decode)
    out.push_str("## error types (pooled over seeds)\n\n");
    out.push_str("| regime | decode | sub % | del % | ins % |\n|---|---|---:|---:|---:|\n");
    let mut grouped: BTreeMap<(String, String), (usize, usize, usize, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.regime.to_string(), r.decode.to_string());
        let e = grouped.entry(key).or_insert((0, 0, 0, 0));
        e.0 += r.subs;
        e.1 += r.dels;
        e.2 += r.ins;
        e.3 += r.n_ref;
    }
    for ((regime, decode), (s, d, i, n)) in grouped {
        if n == 0 {
            continue;
        }
        out.push_str(&format!(
            "| {regime} | {decode} | {:.2} | {:.2} | {:.2} |\n",
            100.0 * s as f64 / n as f64,
            100.0 * d as f64 / n as f64,
            100.0 * i as f64 / n as f64,
        ));
    }
    out.push('\n');

    if !samples.is_empty() && max_samples > 0 {
        out.push_str("## sample transcriptions\n\n");
        for record in samples.iter().take(max_samples) {
            out.push_str(&render_sample(record));
            out.push('\n');
        }
    }

    let flagged = rows.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        out.push_str(&format!(
            "**{flagged} result row(s) flagged as non-converged (WER at or above the flag threshold).**\n"
        ));
    }
    out
}

/// One aligned ref/hyp diff. Per-sample WER is printed in parentheses after
/// the hypothesis; the ops line marks matches (`=`), substitutions (`S`),
/// deletions (`D`), and insertions (`I`).
pub fn render_sample(record: &HypRecord) -> String {
    let reference = TokenSeq::parse(&record.reference);
    let hypothesis = TokenSeq::parse(&record.hypothesis);
    let wer_note = match textkit::wer(&reference, &hypothesis) {
        Ok(report) => format!(" ({:.2}%)", report.wer * 100.0),
        Err(_) => String::new(),
    };
    let ops: String = textkit::align(&reference, &hypothesis)
        .ops
        .iter()
        .map(|op| match op {
            EditOp::Match(_) => '=',
            EditOp::Substitute { .. } => 'S',
            EditOp::Delete(_) => 'D',
            EditOp::Insert(_) => 'I',
        })
        .collect();
    format!(
        "- `{}`\n  - ref: {}\n  - hyp: {}{}\n  - ops: `{}`\n",
        record.id, record.reference, record.hypothesis, wer_note, ops
    )
}
