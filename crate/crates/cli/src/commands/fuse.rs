//! Load pretrained component checkpoints, pick fusion weights (grid search
//! unless given explicitly), fuse, optionally fine-tune, and checkpoint the
//! result.

use serde::Serialize;

use nhr_core::models::checkpoint::{load_checkpoint, save_checkpoint};
use nhr_core::models::ScorerModel;
use nhr_core::rng::RngState;
use nhr_core::sampling::Holdout;
use nhr_core::training::{finetune_fused, fuse_components, search_fusion_weights};
use nhr_core::{Error, Result};

use crate::artifacts::load_candidates;
use crate::commands::{open_ingested, stderr_progress};
use crate::config::{ExperimentConfig, FusionSection};

#[derive(Serialize)]
struct FusionReport<'a> {
    name: &'a str,
    components: &'a [String],
    weights: &'a [f64],
    searched: bool,
    grid_points: usize,
    search_val_hr: Option<f64>,
    finetuned: bool,
    frozen_bodies: bool,
}

pub fn parse_weights(s: &str, arity: usize) -> Result<Vec<f64>> {
    let weights: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse --weights {s:?}")))?;
    if weights.len() != arity {
        return Err(Error::Config(format!(
            "--weights has {} entries for {} components",
            weights.len(),
            arity
        )));
    }
    Ok(weights)
}

fn run_one(
    cfg: &ExperimentConfig,
    fu: &FusionSection,
    weights_override: Option<&str>,
) -> Result<()> {
    let (out, _manifest, data) = open_ingested(cfg)?;
    let val = load_candidates(&out, Holdout::Val)?;
    let tc = cfg.train_config();
    let mut progress = stderr_progress();

    let mut components: Vec<ScorerModel> = Vec::with_capacity(fu.components.len());
    for name in &fu.components {
        let path = out.checkpoint(name);
        if !path.is_file() {
            return Err(Error::State(format!(
                "component {name:?} has no checkpoint at {} — run `nhr pretrain` first",
                path.display()
            )));
        }
        components.push(load_checkpoint(&path)?);
    }
    let refs: Vec<&ScorerModel> = components.iter().collect();

    let explicit = match weights_override {
        Some(s) => Some(parse_weights(s, refs.len())?),
        None => fu.weights.clone(),
    };
    let (weights, searched, grid_points, search_val_hr) = match explicit {
        Some(w) => (w, false, 0, None),
        None => {
            let found = search_fusion_weights(
                &refs,
                &val,
                &data.store,
                fu.step,
                tc.eval_k,
                &mut progress,
            )?;
            (found.weights, true, found.points, Some(found.val_hr))
        }
    };

    let mut fused = fuse_components(&fu.name, &refs, &weights)?;
    if fu.finetune {
        let mut rng = RngState::derive(tc.seed, &format!("finetune/{}", fu.name));
        let report = finetune_fused(
            &mut fused,
            &data.split,
            &data.store,
            &val,
            &tc,
            fu.freeze_bodies,
            &mut rng,
            &mut progress,
        )?;
        std::fs::write(out.train_report(&fu.name), report.to_jsonl())?;
    }

    let ckpt = out.checkpoint(&fu.name);
    save_checkpoint(&fused, &ckpt)?;
    let report = FusionReport {
        name: &fu.name,
        components: &fu.components,
        weights: &weights,
        searched,
        grid_points,
        search_val_hr,
        finetuned: fu.finetune,
        frozen_bodies: fu.freeze_bodies,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    std::fs::write(out.fusion_report(&fu.name), json)?;

    let weights_str: Vec<String> = weights.iter().map(|w| format!("{w:.3}")).collect();
    println!(
        "{}: weights [{}]{}, checkpoint {}",
        fu.name,
        weights_str.join(", "),
        if searched { " (searched)" } else { " (given)" },
        ckpt.display()
    );
    Ok(())
}

pub fn run(
    cfg: &ExperimentConfig,
    only: Option<&str>,
    weights_override: Option<&str>,
) -> Result<()> {
    if cfg.fusions.is_empty() {
        return Err(Error::Config(
            "no [[fusion]] sections declared — nothing to fuse".into(),
        ));
    }
    let selected: Vec<&FusionSection> = cfg
        .fusions
        .iter()
        .filter(|f| only.is_none_or(|name| f.name == name))
        .collect();
    if selected.is_empty() {
        return Err(Error::Config(format!(
            "--name {:?} matches no declared fusion",
            only.unwrap_or_default()
        )));
    }
    if weights_override.is_some() && selected.len() > 1 {
        return Err(Error::Config(
            "--weights needs --name to pick a single fusion".into(),
        ));
    }
    for fu in selected {
        run_one(cfg, fu, weights_override)?;
    }
    Ok(())
}
