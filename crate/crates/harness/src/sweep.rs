//! Sweep execution: expand the config grid into cells, run them in
//! dependency stages (pretraining before fine-tuning, teachers before
//! students), and merge one results table.

use std::collections::HashSet;
use std::path::PathBuf;

use rayon::prelude::*;

use wsp_core::corruptor::CorruptionMode;

use crate::config::Regime;
use crate::experiment::{CellSpec, Workbench};
use crate::results::{write_results_csv, ResultRow};

pub struct SweepOutcome {
    pub rows: Vec<ResultRow>,
    pub any_flagged: bool,
    pub results_path: PathBuf,
    /// Cells that errored, with their messages. The sweep keeps going; a
    /// nonempty list makes the sweep exit flagged.
    pub failures: Vec<(String, String)>,
}

/// Cells in dependency stages. Prerequisite cells (weak-only checkpoints for
/// wsp_ft, the teacher for self-training) are included even when their
/// regime was not requested; only requested regimes contribute rows.
pub fn plan_stages(wb: &Workbench) -> Vec<Vec<CellSpec>> {
    let sweep = &wb.config.sweep;
    let requested: HashSet<Regime> = sweep.regimes.iter().copied().collect();

    let corruption_grid: Vec<(CorruptionMode, f64)> = {
        let mut seen = HashSet::new();
        let mut grid = Vec::new();
        for &fraction in &sweep.fractions {
            for &mode in &sweep.modes {
                let mode = crate::experiment::canonical_mode(mode, fraction);
                if seen.insert((mode, (fraction * 10_000.0) as u64)) {
                    grid.push((mode, fraction));
                }
            }
        }
        grid
    };

    let teacher = wb.config.experiment.teacher;
    let self_training = requested.contains(&Regime::SelfTraining);
    let need_weak = requested.contains(&Regime::WeakOnly)
        || requested.contains(&Regime::WspFt)
        || (self_training && matches!(teacher, Regime::WeakOnly | Regime::WspFt));
    let need_direct =
        requested.contains(&Regime::DirectFt) || (self_training && teacher == Regime::DirectFt);
    let need_wsp =
        requested.contains(&Regime::WspFt) || (self_training && teacher == Regime::WspFt);

    let mut stage0 = Vec::new();
    let mut stage1 = Vec::new();
    let mut stage2 = Vec::new();
    for &seed in &sweep.seeds {
        if need_weak {
            for &(mode, fraction) in &corruption_grid {
                stage0.push(CellSpec::weak_only(mode, fraction, seed));
            }
        }
        if need_direct {
            stage0.push(CellSpec::direct_ft(seed));
        }
        if need_wsp {
            for &(mode, fraction) in &corruption_grid {
                stage1.push(CellSpec::wsp_ft(mode, fraction, seed));
            }
        }
        if self_training {
            // the teacher spec may name a wsp_ft cell outside the grid
            let t = wb.teacher_spec(seed);
            match t.regime {
                Regime::WeakOnly if !stage0.contains(&t) => stage0.push(t),
                Regime::WspFt if !stage1.contains(&t) => {
                    if let Some((m, f)) = t.corruption {
                        let prereq = CellSpec::weak_only(m, f, seed);
                        if !stage0.contains(&prereq) {
                            stage0.push(prereq);
                        }
                    }
                    stage1.push(t);
                }
                _ => {}
            }
            stage2.push(CellSpec::self_training(seed));
        }
    }
    [stage0, stage1, stage2]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect()
}

/// Run every cell in the sweep (resuming completed ones), then write the
/// merged `results.csv` in the workbench output directory.
pub fn run_sweep(wb: &Workbench) -> anyhow::Result<SweepOutcome> {
    let requested: HashSet<Regime> = wb.config.sweep.regimes.iter().copied().collect();
    let stages = plan_stages(wb);

    let mut rows: Vec<ResultRow> = Vec::new();
    let mut failures: Vec<(String, String)> = Vec::new();
    for stage in stages {
        let stage_rows: Vec<(String, anyhow::Result<Vec<ResultRow>>)> = stage
            .par_iter()
            .map(|spec| (format!("{spec:?}"), wb.run_cell(spec)))
            .collect();
        for (label, result) in stage_rows {
            match result {
                Ok(cell_rows) => rows.extend(
                    cell_rows
                        .into_iter()
                        .filter(|r| requested.contains(&r.regime)),
                ),
                // a failed cell is recorded and the sweep continues;
                // dependents of a missing checkpoint fail the same way
                Err(e) => {
                    eprintln!("cell {label} failed: {e:#}");
                    failures.push((label, format!("{e:#}")));
                }
            }
        }
    }

    rows.sort_by_key(|r| r.sort_key());
    let results_path = wb.out_dir.join("results.csv");
    write_results_csv(&results_path, &rows)?;
    if !failures.is_empty() {
        let log: String = failures
            .iter()
            .map(|(label, e)| format!("{label}: {e}\n"))
            .collect();
        std::fs::write(wb.out_dir.join("failures.log"), log)?;
    }
    let any_flagged = rows.iter().any(|r| r.flagged) || !failures.is_empty();
    Ok(SweepOutcome {
        rows,
        any_flagged,
        results_path,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    #[test]
    fn plan_covers_grid_without_duplicates() {
        let mut config = Config::default();
        config.sweep.seeds = vec![1];
        let dir = tempfile::tempdir().unwrap();
        let wb = Workbench::new(config, dir.path()).unwrap();
        let stages = plan_stages(&wb);
        // stage 0: weak_only over 9 deduped (mode, fraction) cells + direct_ft
        assert_eq!(stages[0].len(), 9 + 1);
        // stage 1: wsp_ft mirror of the corruption grid (the comparison cell
        // random/1.0 is already in it)
        assert_eq!(stages[1].len(), 9);
        // stage 2: self-training
        assert_eq!(stages[2].len(), 1);

        let mut labels = HashSet::new();
        for stage in &stages {
            for cell in stage {
                assert!(labels.insert(format!("{cell:?}")), "duplicate {cell:?}");
            }
        }
    }

    #[test]
    fn fraction_zero_appears_once() {
        let mut config = Config::default();
        config.sweep.seeds = vec![1];
        config.sweep.regimes = vec![Regime::WeakOnly];
        let dir = tempfile::tempdir().unwrap();
        let wb = Workbench::new(config, dir.path()).unwrap();
        let stages = plan_stages(&wb);
        let zeros: Vec<_> = stages[0]
            .iter()
            .filter(|c| c.corruption.map(|(_, f)| f) == Some(0.0))
            .collect();
        assert_eq!(zeros.len(), 1);
        assert_eq!(zeros[0].corruption.unwrap().0, CorruptionMode::Random);
    }
}
