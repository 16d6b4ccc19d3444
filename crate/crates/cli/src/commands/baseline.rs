//! Fit the non-neural reference scorers (PopRank, BPR) on the ingested train
//! split and checkpoint them next to the neural models.

use nhr_core::baselines::{Bpr, BprConfig, PopRank};
use nhr_core::rng::RngState;
use nhr_core::Result;

use crate::commands::open_ingested;
use crate::config::ExperimentConfig;

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let (out, _manifest, data) = open_ingested(cfg)?;

    let pop = PopRank::fit(&data.split.train);
    let pop_path = out.checkpoint("poprank");
    pop.save(&pop_path)?;
    println!("poprank: {} item counts, checkpoint {}", pop.num_items(), pop_path.display());

    let bc = &cfg.baselines.bpr;
    let bpr_cfg = BprConfig {
        d: bc.d.unwrap_or(cfg.pf),
        lr: bc.lr,
        reg: bc.reg,
        epochs: bc.epochs,
        triples_per_epoch: bc.triples_per_epoch,
    };
    let mut rng = RngState::derive(cfg.seed, "baseline/bpr");
    let (bpr, fit) = Bpr::fit(
        &data.split.train,
        &data.split.positives_by_user,
        &bpr_cfg,
        &mut rng,
    )?;
    let bpr_path = out.checkpoint("bpr");
    bpr.save(&bpr_path)?;

    let mut log = String::new();
    for (i, loss) in fit.epoch_loss.iter().enumerate() {
        log.push_str(&format!(
            "{}\n",
            serde_json::json!({"epoch": i + 1, "mean_triple_loss": loss})
        ));
    }
    std::fs::write(out.train_report("bpr"), log)?;
    println!(
        "bpr: d={}, {} epochs (final mean loss {:.4}), checkpoint {}",
        bpr_cfg.d,
        bpr_cfg.epochs,
        fit.epoch_loss.last().copied().unwrap_or(f64::NAN),
        bpr_path.display()
    );
    Ok(())
}
