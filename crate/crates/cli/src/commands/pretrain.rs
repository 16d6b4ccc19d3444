//! Train every declared component model from scratch against the ingested
//! artifacts, checkpointing each and recording its epoch log.

use nhr_core::models::checkpoint::save_checkpoint;
use nhr_core::sampling::Holdout;
use nhr_core::training::{build_component, train, ComponentPlan};
use nhr_core::rng::RngState;
use nhr_core::{Error, Result};

use crate::artifacts::load_candidates;
use crate::commands::{open_ingested, stderr_progress};
use crate::config::ExperimentConfig;

pub fn run(cfg: &ExperimentConfig, only: Option<&str>) -> Result<()> {
    if cfg.models.is_empty() {
        return Err(Error::Config(
            "no [[model]] sections declared — nothing to pretrain".into(),
        ));
    }
    let (out, _manifest, data) = open_ingested(cfg)?;
    let val = load_candidates(&out, Holdout::Val)?;
    let tc = cfg.train_config();
    let plans: Vec<ComponentPlan> = cfg
        .component_plans()
        .into_iter()
        .filter(|p| only.is_none_or(|name| p.name() == name))
        .collect();
    if plans.is_empty() {
        return Err(Error::Config(format!(
            "--model {:?} matches no declared model",
            only.unwrap_or_default()
        )));
    }

    let mut progress = stderr_progress();
    for plan in &plans {
        let mut model = build_component(plan, &data.split, &data.store, &tc)?;
        let mut rng = RngState::derive(tc.seed, &format!("train/{}", plan.name()));
        progress(&format!("pretraining {}", plan.name()));
        let report = train(
            &mut model,
            &data.split,
            &data.store,
            &val,
            &tc,
            &mut rng,
            &mut progress,
        )?;
        let ckpt = out.checkpoint(&model.name);
        save_checkpoint(&model, &ckpt)?;
        std::fs::write(out.train_report(&model.name), report.to_jsonl())?;
        println!(
            "{}: best epoch {} (val HR@{} {:.4}), checkpoint {}",
            model.name,
            report.best_epoch,
            tc.eval_k,
            report.best_val_hr,
            ckpt.display()
        );
    }
    Ok(())
}
