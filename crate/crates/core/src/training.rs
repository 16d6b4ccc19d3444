//! Epoch loop, early stopping, and the pretrain → fuse → fine-tune pipeline.
//!
//! Each epoch: resample negatives, shuffle, run minibatch Adam on the summed
//! binary cross-entropy, then score validation HR@k over the fixed candidate
//! sets. The best-validation parameter snapshot is kept (later epochs win
//! ties, so the retained weights come from the longest-trained equal-best
//! epoch) and restored at the end. Training stops after `patience` epochs
//! without strict improvement, or at `max_epochs`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::features::FeatureStore;
use crate::data::interactions::SplitDataset;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, HrMode};
use crate::graph::Graph;
use crate::models::{fuse, validate_weights, ScorerModel};
use crate::param::AdamConfig;
use crate::rng::RngState;
use crate::sampling::{sample_epoch, EvalCandidates};

/// The predictive-factor sizes studied in the reference experiments.
pub const STUDIED_PF: [u32; 4] = [8, 16, 32, 64];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub pf: u32,
    pub lr: f32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Default minibatch size; models touching text features drop to
    /// `text_batch_size`.
    pub batch_size: usize,
    pub text_batch_size: usize,
    pub negative_ratio: u32,
    pub max_epochs: u32,
    /// Epochs without strict validation improvement before stopping.
    pub patience: u32,
    pub eval_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pf: 8,
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 128,
            text_batch_size: 32,
            negative_ratio: 4,
            max_epochs: 30,
            patience: 5,
            eval_k: 10,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pf < 1 {
            return Err(Error::Config("pf must be >= 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size < 1 || self.text_batch_size < 1 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.negative_ratio < 1 {
            return Err(Error::Config("negative ratio must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if self.eval_k < 1 {
            return Err(Error::Config("eval k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Batch size for a concrete model: text-consuming models use the
    /// smaller batch.
    pub fn effective_batch(&self, model: &ScorerModel) -> usize {
        if model.uses_text() {
            self.batch_size.min(self.text_batch_size)
        } else {
            self.batch_size
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    /// Summed BCE over all instances of the epoch (the optimization
    /// objective) plus the per-instance mean for cross-dataset comparison.
    pub train_loss_sum: f64,
    pub train_loss_mean: f64,
    pub val_hr: f64,
    pub val_ndcg: f64,
    /// Wall-clock is observational only and deliberately kept out of the
    /// serialized reports so that identical runs produce identical bytes;
    /// it still reaches stderr via the progress log.
    #[serde(skip)]
    pub wall_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: u32,
    pub best_val_hr: f64,
    pub stop_reason: String,
}

impl TrainReport {
    /// JSON-lines form: one epoch per line, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "model": self.model,
            "best_epoch": self.best_epoch,
            "best_val_hr": self.best_val_hr,
            "stop_reason": self.stop_reason,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Run one minibatch: accumulate gradients over the batch's instances and
/// take a single Adam step on the summed loss. Returns the batch loss sum.
fn run_batch(
    model: &mut ScorerModel,
    store: &FeatureStore,
    instances: &[crate::sampling::TrainInstance],
    batch: &[u32],
    adam: &AdamConfig,
) -> Result<f64> {
    model.params.zero_grads();
    let mut loss = 0.0f64;
    for &idx in batch {
        let inst = &instances[idx as usize];
        let mut g = Graph::new();
        model.forward_graph(&mut g, inst.user, inst.item, store)?;
        loss += g.backward_bce(&mut model.params, inst.label as f32)?;
    }
    model.params.adam_step(adam)?;
    Ok(loss)
}

/// Train until validation HR@k stops improving. `progress` receives one line
/// per epoch (pass `|_| {}` to silence).
pub fn train(
    model: &mut ScorerModel,
    split: &SplitDataset,
    store: &FeatureStore,
    val_candidates: &EvalCandidates,
    cfg: &TrainConfig,
    rng: &mut RngState,
    progress: &mut dyn FnMut(&str),
) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate_store(store)?;
    let adam = cfg.adam();
    let batch_size = cfg.effective_batch(model);

    let mut report = TrainReport {
        model: model.name.clone(),
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_hr: f64::NEG_INFINITY,
        stop_reason: String::new(),
    };
    let mut best_snapshot = model.params.snapshot();
    let mut since_improvement = 0u32;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let plan = sample_epoch(
            &split.train,
            &split.positives_by_user,
            cfg.negative_ratio,
            batch_size,
            rng,
        )?;
        let mut loss_sum = 0.0f64;
        for (batch_idx, batch) in plan.batches().enumerate() {
            let batch_loss =
                run_batch(model, store, &plan.instances, batch, &adam).map_err(|e| match e {
                    Error::State(_) => Error::NonFiniteLoss {
                        epoch: epoch as usize,
                        batch: batch_idx,
                        lr: cfg.lr,
                    },
                    other => other,
                })?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch as usize,
                    batch: batch_idx,
                    lr: cfg.lr,
                });
            }
            loss_sum += batch_loss;
        }

        let val = evaluate(
            &*model,
            &model.name,
            val_candidates,
            store,
            cfg.eval_k,
            HrMode::Indicator,
            false,
        )?;
        let record = EpochRecord {
            epoch,
            train_loss_sum: loss_sum,
            train_loss_mean: loss_sum / plan.len().max(1) as f64,
            val_hr: val.hr,
            val_ndcg: val.ndcg,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        progress(&format!(
            "epoch {epoch:>3}  loss {:.5}  val HR@{} {:.4}  NDCG@{} {:.4}  ({:.2}s)",
            record.train_loss_mean, cfg.eval_k, val.hr, cfg.eval_k, val.ndcg, record.wall_secs
        ));

        if val.hr > report.best_val_hr {
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        // ties keep the later epoch's weights (trained longer at equal HR)
        if val.hr >= report.best_val_hr {
            report.best_val_hr = val.hr;
            report.best_epoch = epoch;
            best_snapshot = model.params.snapshot();
        }
        report.epochs.push(record);

        if since_improvement >= cfg.patience {
            report.stop_reason = format!(
                "no validation improvement for {} epochs",
                cfg.patience
            );
            break;
        }
    }
    if report.stop_reason.is_empty() {
        report.stop_reason = format!("reached max_epochs {}", cfg.max_epochs);
    }
    model.params.restore(&best_snapshot)?;
    Ok(report)
}

/// What to pretrain. Aux components name the features they consume (which
/// must all exist in the store).
#[derive(Clone, Debug, PartialEq)]
pub enum ComponentPlan {
    Gmf { name: String },
    Mlp { name: String },
    Aux { name: String, features: Vec<String> },
}

impl ComponentPlan {
    pub fn name(&self) -> &str {
        match self {
            ComponentPlan::Gmf { name }
            | ComponentPlan::Mlp { name }
            | ComponentPlan::Aux { name, .. } => name,
        }
    }
}

/// Build one component at Xavier init, with its own derived seed.
pub fn build_component(
    plan: &ComponentPlan,
    split: &SplitDataset,
    store: &FeatureStore,
    cfg: &TrainConfig,
) -> Result<ScorerModel> {
    let mut rng = RngState::derive(cfg.seed, &format!("init/{}", plan.name()));
    match plan {
        ComponentPlan::Gmf { name } => ScorerModel::gmf(
            name,
            split.train.num_users,
            split.train.num_items,
            cfg.pf,
            &mut rng,
        ),
        ComponentPlan::Mlp { name } => ScorerModel::mlp(
            name,
            split.train.num_users,
            split.train.num_items,
            cfg.pf,
            &mut rng,
        ),
        ComponentPlan::Aux { name, features } => {
            let mut specs = Vec::with_capacity(features.len());
            for f in features {
                let table = store.get(f).ok_or_else(|| {
                    Error::Config(format!(
                        "component {name:?} wants feature {f:?} which is not ingested"
                    ))
                })?;
                specs.push(table.spec.clone());
            }
            ScorerModel::aux(name, &specs, cfg.pf, &mut rng)
        }
    }
}

/// Train every component independently from scratch. Each gets disjoint
/// init/train seed streams derived from `cfg.seed` and its name, so the set
/// is reproducible as a whole or one component at a time.
pub fn pretrain_all(
    plans: &[ComponentPlan],
    split: &SplitDataset,
    store: &FeatureStore,
    val_candidates: &EvalCandidates,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<(ScorerModel, TrainReport)>> {
    let mut out = Vec::with_capacity(plans.len());
    for plan in plans {
        let mut model = build_component(plan, split, store, cfg)?;
        let mut rng = RngState::derive(cfg.seed, &format!("train/{}", plan.name()));
        progress(&format!("pretraining {}", plan.name()));
        let report = train(&mut model, split, store, val_candidates, cfg, &mut rng, progress)?;
        out.push((model, report));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSearchResult {
    pub weights: Vec<f64>,
    pub val_hr: f64,
    pub points: usize,
}

fn simplex_grid(parts: usize, units: u32) -> Vec<Vec<u32>> {
    fn rec(parts: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in 0..=left {
            prefix.push(take);
            rec(parts - 1, left - take, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, units, &mut Vec::new(), &mut out);
    out
}

fn squared_distance_to_uniform(w: &[f64]) -> f64 {
    let u = 1.0 / w.len() as f64;
    w.iter().map(|&x| (x - u) * (x - u)).sum()
}

/// Exhaustively score the probability simplex at resolution `step` and pick
/// the weights with the best validation HR@k.
///
/// Grid points are scored without materializing a fused model: right after
/// `fuse`, the fused logit equals the weight-blended component logits, so
/// per-candidate component logits are computed once and mixed per point.
/// Ties prefer the point closest to uniform weighting, then the
/// lexicographically smallest vector.
pub fn search_fusion_weights(
    components: &[&ScorerModel],
    val_candidates: &EvalCandidates,
    store: &FeatureStore,
    step: f64,
    k: usize,
    progress: &mut dyn FnMut(&str),
) -> Result<WeightSearchResult> {
    if components.len() < 2 {
        return Err(Error::Config(
            "fusion weight search needs at least two components".into(),
        ));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Config(format!("bad grid step {step}")));
    }
    let units_f = 1.0 / step;
    let units = units_f.round();
    if (units_f - units).abs() > 1e-9 || units < 1.0 {
        return Err(Error::Config(format!(
            "grid step {step} must divide 1 evenly"
        )));
    }
    let units = units as u32;
    let grid = simplex_grid(components.len(), units);
    if grid.is_empty() {
        return Err(Error::Config("empty fusion weight grid".into()));
    }

    // component logits per (user, candidate), computed once
    use rayon::prelude::*;
    let entries: Vec<(u32, &crate::sampling::CandidateSet)> = val_candidates.iter().collect();
    let logits: Vec<Vec<(u32, Vec<f64>)>> = entries
        .par_iter()
        .map(|&(user, cands)| -> Result<Vec<(u32, Vec<f64>)>> {
            let mut per_candidate = Vec::with_capacity(cands.len());
            for item in cands.items() {
                let mut zs = Vec::with_capacity(components.len());
                for comp in components {
                    zs.push(comp.logit(user, item, store)? as f64);
                }
                per_candidate.push((item, zs));
            }
            Ok(per_candidate)
        })
        .collect::<Result<_>>()?;

    let n_users = entries.len();
    if n_users == 0 {
        return Err(Error::Protocol("no validation users".into()));
    }

    let mut best: Option<(f64, f64, Vec<f64>)> = None; // (hr, dist_to_uniform, weights)
    for counts in &grid {
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / units as f64).collect();
        let hr = grid_point_hr(&entries, &logits, &weights, k);
        let dist = squared_distance_to_uniform(&weights);
        let better = match &best {
            None => true,
            Some((bhr, bdist, bw)) => {
                hr > *bhr
                    || (hr == *bhr && dist < *bdist)
                    || (hr == *bhr && dist == *bdist && weights < *bw)
            }
        };
        if better {
            best = Some((hr, dist, weights));
        }
    }
    let (hr, _, weights) = best.expect("grid is non-empty");
    validate_weights(&weights)?;
    progress(&format!(
        "weight search over {} points: best val HR@{k} {:.4} at {:?}",
        grid.len(),
        hr,
        weights
    ));
    Ok(WeightSearchResult {
        weights,
        val_hr: hr,
        points: grid.len(),
    })
}

fn grid_point_hr(
    entries: &[(u32, &crate::sampling::CandidateSet)],
    logits: &[Vec<(u32, Vec<f64>)>],
    weights: &[f64],
    k: usize,
) -> f64 {
    let mut hits = 0usize;
    for (&(_, cands), per_candidate) in entries.iter().zip(logits) {
        let mut scored: Vec<(u32, f64)> = per_candidate
            .iter()
            .map(|(item, zs)| {
                let z: f64 = zs.iter().zip(weights).map(|(a, b)| a * b).sum();
                (*item, z)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        if scored
            .iter()
            .take(k)
            .any(|&(item, _)| item == cands.target)
        {
            hits += 1;
        }
    }
    hits as f64 / entries.len() as f64
}

/// Fine-tune a fused model with the standard loop. `freeze_bodies` restricts
/// training to the fused output head.
#[allow(clippy::too_many_arguments)]
pub fn finetune_fused(
    fused: &mut ScorerModel,
    split: &SplitDataset,
    store: &FeatureStore,
    val_candidates: &EvalCandidates,
    cfg: &TrainConfig,
    freeze_bodies: bool,
    rng: &mut RngState,
    progress: &mut dyn FnMut(&str),
) -> Result<TrainReport> {
    if !fused.is_fused() {
        return Err(Error::Config(format!(
            "model {:?} is not a fused model",
            fused.name
        )));
    }
    if freeze_bodies {
        fused.freeze_bodies();
    }
    fused.params.reset_optimizer();
    train(fused, split, store, val_candidates, cfg, rng, progress)
}

/// Convenience used by tests and the CLI: fuse with searched-or-given
/// weights.
pub fn fuse_components(
    name: &str,
    components: &[&ScorerModel],
    weights: &[f64],
) -> Result<ScorerModel> {
    fuse(name, components, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_eval_candidates, Holdout};
    use crate::synth::{generate, SynthConfig};

    fn fixture() -> (crate::synth::SynthData, EvalCandidates) {
        let data = generate(SynthConfig::default()).unwrap();
        let cands =
            sample_eval_candidates(&data.split, Holdout::Val, 8, &mut RngState::new(99)).unwrap();
        (data, cands)
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            max_epochs: 6,
            patience: 6,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_over_early_epochs() {
        let (data, cands) = fixture();
        let cfg = quick_cfg();
        let mut model = build_component(
            &ComponentPlan::Gmf { name: "gmf".into() },
            &data.split,
            &data.store,
            &cfg,
        )
        .unwrap();
        let mut rng = RngState::derive(cfg.seed, "train/gmf");
        let report = train(
            &mut model,
            &data.split,
            &data.store,
            &cands,
            &cfg,
            &mut rng,
            &mut |_| {},
        )
        .unwrap();
        // negatives are resampled each epoch so the sum oscillates; require
        // an overall decline from the first epoch instead of monotonicity
        let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss_sum).collect();
        let first = losses[0];
        let later_mean: f64 =
            losses[2..].iter().sum::<f64>() / (losses.len() - 2) as f64;
        assert!(later_mean < first, "losses {losses:?}");
        let min = losses[1..].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min < first, "losses {losses:?}");
    }

    #[test]
    fn one_small_step_on_fixed_batch_reduces_loss() {
        let (data, _) = fixture();
        let cfg = TrainConfig {
            lr: 1e-4,
            ..TrainConfig::default()
        };
        let mut model = ScorerModel::gmf(
            "g",
            data.split.train.num_users,
            data.split.train.num_items,
            8,
            &mut RngState::new(5),
        )
        .unwrap();
        let mut rng = RngState::new(6);
        let plan = sample_epoch(
            &data.split.train,
            &data.split.positives_by_user,
            2,
            64,
            &mut rng,
        )
        .unwrap();
        let batch: Vec<u32> = plan.batches().next().unwrap().to_vec();

        let loss_of = |m: &ScorerModel| -> f64 {
            batch
                .iter()
                .map(|&i| {
                    let inst = &plan.instances[i as usize];
                    let p = m.score(inst.user, inst.item, &data.store).unwrap();
                    crate::tensor::bce_loss(p, inst.label as f32)
                })
                .sum()
        };
        let before = loss_of(&model);
        run_batch(&mut model, &data.store, &plan.instances, &batch, &cfg.adam()).unwrap();
        let after = loss_of(&model);
        assert!(after < before, "loss {before} -> {after}");
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (data, cands) = fixture();
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let run = || {
            let mut model = build_component(
                &ComponentPlan::Mlp { name: "mlp".into() },
                &data.split,
                &data.store,
                &cfg,
            )
            .unwrap();
            let mut rng = RngState::derive(cfg.seed, "train/mlp");
            let report = train(
                &mut model,
                &data.split,
                &data.store,
                &cands,
                &cfg,
                &mut rng,
                &mut |_| {},
            )
            .unwrap();
            (report.to_jsonl(), model.params.snapshot())
        };
        let (ra, pa) = run();
        let (rb, pb) = run();
        assert_eq!(ra, rb);
        for (a, b) in pa.iter().zip(&pb) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn best_epoch_has_max_val_hr() {
        let (data, cands) = fixture();
        let cfg = TrainConfig {
            max_epochs: 8,
            patience: 3,
            ..TrainConfig::default()
        };
        let mut model = build_component(
            &ComponentPlan::Gmf { name: "g".into() },
            &data.split,
            &data.store,
            &cfg,
        )
        .unwrap();
        let mut rng = RngState::derive(7, "t");
        let report = train(
            &mut model,
            &data.split,
            &data.store,
            &cands,
            &cfg,
            &mut rng,
            &mut |_| {},
        )
        .unwrap();
        let max = report
            .epochs
            .iter()
            .map(|e| e.val_hr)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.best_val_hr, max);
        let best = report
            .epochs
            .iter()
            .find(|e| e.epoch == report.best_epoch)
            .unwrap();
        assert_eq!(best.val_hr, max);
        assert!(!report.stop_reason.is_empty());
    }

    #[test]
    fn pretrain_all_trains_each_plan() {
        let (data, cands) = fixture();
        let cfg = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::default()
        };
        let plans = vec![
            ComponentPlan::Gmf { name: "gmf".into() },
            ComponentPlan::Aux {
                name: "aux".into(),
                features: vec!["group".into(), "genre".into()],
            },
        ];
        let out = pretrain_all(&plans, &data.split, &data.store, &cands, &cfg, &mut |_| {})
            .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].0.name, "gmf");
        assert_eq!(out[1].0.kind(), crate::models::ModelKind::Aux);
        assert_eq!(out[1].1.epochs.len(), 2);

        let missing = ComponentPlan::Aux {
            name: "aux".into(),
            features: vec!["nope".into()],
        };
        assert!(build_component(&missing, &data.split, &data.store, &cfg).is_err());
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 10).len(), 11);
        assert_eq!(simplex_grid(3, 2).len(), 6);
        let g = simplex_grid(3, 2);
        assert!(g.contains(&vec![2, 0, 0]));
        assert!(g.contains(&vec![1, 1, 0]));
        assert!(g.contains(&vec![0, 0, 2]));
        for point in &g {
            assert_eq!(point.iter().sum::<u32>(), 2);
        }
    }

    #[test]
    fn weight_search_prefers_the_dominant_component() {
        let (data, cands) = fixture();
        let cfg = quick_cfg();
        // train one real component; pair it with an untrained one
        let mut good = build_component(
            &ComponentPlan::Gmf { name: "good".into() },
            &data.split,
            &data.store,
            &cfg,
        )
        .unwrap();
        let mut rng = RngState::derive(cfg.seed, "train/good");
        train(
            &mut good,
            &data.split,
            &data.store,
            &cands,
            &cfg,
            &mut rng,
            &mut |_| {},
        )
        .unwrap();
        let noise = ScorerModel::mlp(
            "noise",
            data.split.train.num_users,
            data.split.train.num_items,
            8,
            &mut RngState::new(1234),
        )
        .unwrap();
        let result = search_fusion_weights(
            &[&good, &noise],
            &cands,
            &data.store,
            0.1,
            10,
            &mut |_| {},
        )
        .unwrap();
        assert_eq!(result.points, 11);
        assert!(
            result.weights[0] >= 0.5,
            "dominant component got weight {:?}",
            result.weights
        );
        assert!(validate_weights(&result.weights).is_ok());
    }

    #[test]
    fn weight_search_grid_matches_fused_at_init() {
        // the shortcut scoring must agree with actually fusing at each point
        let (data, cands) = fixture();
        let mut rng = RngState::new(31);
        let a = ScorerModel::gmf("a", data.split.train.num_users, data.split.train.num_items, 8, &mut rng).unwrap();
        let b = ScorerModel::mlp("b", data.split.train.num_users, data.split.train.num_items, 8, &mut rng).unwrap();
        for weights in [[0.3, 0.7], [1.0, 0.0], [0.5, 0.5]] {
            let fused = fuse("f", &[&a, &b], &weights).unwrap();
            let report = evaluate(
                &fused,
                "f",
                &cands,
                &data.store,
                10,
                HrMode::Indicator,
                false,
            )
            .unwrap();
            let entries: Vec<_> = cands.iter().collect();
            let logits: Vec<Vec<(u32, Vec<f64>)>> = entries
                .iter()
                .map(|&(user, c)| {
                    c.items()
                        .map(|item| {
                            (
                                item,
                                vec![
                                    a.logit(user, item, &data.store).unwrap() as f64,
                                    b.logit(user, item, &data.store).unwrap() as f64,
                                ],
                            )
                        })
                        .collect()
                })
                .collect();
            let hr = grid_point_hr(&entries, &logits, &weights, 10);
            assert!(
                (hr - report.hr).abs() < 1e-12,
                "weights {weights:?}: shortcut {hr} vs fused {}",
                report.hr
            );
        }
    }

    #[test]
    fn bad_grid_steps_are_rejected() {
        let (data, cands) = fixture();
        let mut rng = RngState::new(1);
        let a = ScorerModel::gmf("a", 50, 20, 8, &mut rng).unwrap();
        let b = ScorerModel::gmf("b", 50, 20, 8, &mut rng).unwrap();
        for bad in [0.0, -0.1, 0.3, 1.5] {
            assert!(
                search_fusion_weights(&[&a, &b], &cands, &data.store, bad, 10, &mut |_| {})
                    .is_err(),
                "step {bad} accepted"
            );
        }
    }

    #[test]
    fn finetune_does_not_destroy_the_ensemble() {
        let (data, cands) = fixture();
        let cfg = TrainConfig {
            max_epochs: 4,
            ..TrainConfig::default()
        };
        let plans = vec![
            ComponentPlan::Gmf { name: "gmf".into() },
            ComponentPlan::Mlp { name: "mlp".into() },
        ];
        let pre = pretrain_all(&plans, &data.split, &data.store, &cands, &cfg, &mut |_| {})
            .unwrap();
        let comps: Vec<&ScorerModel> = pre.iter().map(|(m, _)| m).collect();
        let mut fused = fuse("nhr", &comps, &[0.5, 0.5]).unwrap();
        let init_hr = evaluate(
            &fused,
            "nhr",
            &cands,
            &data.store,
            10,
            HrMode::Indicator,
            false,
        )
        .unwrap()
        .hr;
        let mut rng = RngState::derive(cfg.seed, "finetune");
        let report = finetune_fused(
            &mut fused,
            &data.split,
            &data.store,
            &cands,
            &cfg,
            false,
            &mut rng,
            &mut |_| {},
        )
        .unwrap();
        assert!(
            report.best_val_hr >= init_hr - 0.005,
            "fine-tuning regressed: {init_hr} -> {}",
            report.best_val_hr
        );
    }

    #[test]
    fn frozen_bodies_only_move_the_head() {
        let (data, cands) = fixture();
        let cfg = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let mut rng = RngState::new(77);
        let a = ScorerModel::gmf("a", data.split.train.num_users, data.split.train.num_items, 8, &mut rng).unwrap();
        let b = ScorerModel::mlp("b", data.split.train.num_users, data.split.train.num_items, 8, &mut rng).unwrap();
        let mut fused = fuse("f", &[&a, &b], &[0.5, 0.5]).unwrap();
        let before = fused.params.snapshot();
        let head_w = fused.out_w;
        let mut trng = RngState::new(78);
        finetune_fused(
            &mut fused,
            &data.split,
            &data.store,
            &cands,
            &cfg,
            true,
            &mut trng,
            &mut |_| {},
        )
        .unwrap();
        for (id, p) in fused.params.iter() {
            let changed = p.value.data() != before[id.index()].data();
            if id == head_w || id == fused.out_b {
                assert!(changed, "head parameter {} did not train", p.name);
            } else {
                assert!(!changed, "frozen parameter {} moved", p.name);
            }
        }
        // plain simple models cannot be "fine-tuned as fused"
        let mut simple = a.clone();
        assert!(finetune_fused(
            &mut simple,
            &data.split,
            &data.store,
            &cands,
            &cfg,
            false,
            &mut RngState::new(1),
            &mut |_| {},
        )
        .is_err());
    }
}
