//! Score every checkpoint against the fixed test candidates and assemble the
//! comparison table (plus the labeled ALS placeholder the table always
//! carries).

use std::path::Path;

use nhr_core::baselines::{Bpr, PopRank};
use nhr_core::evaluation::{evaluate, verify_coverage, HrMode, Scorer};
use nhr_core::models::checkpoint::{
    load_checkpoint, peek_kind, KIND_BPR, KIND_POPRANK,
};
use nhr_core::sampling::Holdout;
use nhr_core::{Error, Result};

use crate::commands::open_ingested;
use crate::config::ExperimentConfig;
use crate::table::{ComparisonTable, RowGroup, TableRow};
use crate::OutputFormat;

fn load_scorer(path: &Path) -> Result<(Box<dyn Scorer>, RowGroup)> {
    match peek_kind(path)? {
        KIND_POPRANK => Ok((Box::new(PopRank::load(path)?), RowGroup::Baseline)),
        KIND_BPR => Ok((Box::new(Bpr::load(path)?), RowGroup::Baseline)),
        _ => {
            let model = load_checkpoint(path)?;
            let group = if !model.is_fused() {
                RowGroup::Neural
            } else if model.uses_features() {
                RowGroup::Hybrid
            } else {
                RowGroup::Fusion
            };
            Ok((Box::new(model), group))
        }
    }
}

/// Fixed presentation order: PopRank, BPR, ALS, then the neural single
/// models, fusions, and hybrids, each alphabetical.
fn row_rank(row: &TableRow) -> (u8, u8, String) {
    let group = match row.group {
        RowGroup::Baseline => 0,
        RowGroup::Neural => 1,
        RowGroup::Fusion => 2,
        RowGroup::Hybrid => 3,
    };
    let within = match row.model.as_str() {
        "poprank" => 0,
        "bpr" => 1,
        "als" => 2,
        _ => 3,
    };
    (group, within, row.model.clone())
}

pub fn run(
    cfg: &ExperimentConfig,
    format: OutputFormat,
    hr_mode: HrMode,
    per_user: bool,
) -> Result<()> {
    let (out, _manifest, data) = open_ingested(cfg)?;
    let test = crate::artifacts::load_candidates(&out, Holdout::Test)?;
    verify_coverage(&test, &data.split.test)?;

    let mut stems: Vec<String> = Vec::new();
    let dir = out.checkpoints_dir();
    if dir.is_dir() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("nhr") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    stems.push(stem.to_string());
                }
            }
        }
    }
    stems.sort();
    if stems.is_empty() {
        return Err(Error::State(format!(
            "no checkpoints under {} — run `nhr pretrain` (and `nhr baseline`, `nhr fuse`) first",
            dir.display()
        )));
    }

    let mut rows = Vec::new();
    for stem in &stems {
        let path = out.checkpoint(stem);
        let (scorer, group) = load_scorer(&path)?;
        let report = evaluate(
            &*scorer,
            stem,
            &test,
            &data.store,
            cfg.eval.k,
            hr_mode,
            per_user,
        )?;
        std::fs::write(out.eval_report(stem), report.to_json())?;
        rows.push(TableRow::from_report(&report, group));
    }
    rows.push(TableRow::placeholder("als", RowGroup::Baseline, "out of scope"));
    rows.sort_by_key(row_rank);

    let table = ComparisonTable::build(cfg.eval.k, rows);
    std::fs::write(out.comparison("json"), table.to_json())?;
    std::fs::write(out.comparison("txt"), table.to_text())?;
    match format {
        OutputFormat::Table => print!("{}", table.to_text()),
        OutputFormat::Json => print!("{}", table.to_json()),
    }
    Ok(())
}
