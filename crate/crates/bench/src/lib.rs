//! Shared fixture for the criterion benches: a planted-cluster dataset and
//! freshly initialized scorers. Hot-path timing depends on shapes and code
//! paths, not on weight quality, so nothing here is trained.

use nhr_core::models::{fuse, ScorerModel};
use nhr_core::rng::RngState;
use nhr_core::sampling::{sample_eval_candidates, EvalCandidates, Holdout};
use nhr_core::synth::{generate, SynthConfig, SynthData};

pub struct BenchSet {
    pub data: SynthData,
    pub gmf: ScorerModel,
    pub mlp: ScorerModel,
    pub aux: ScorerModel,
    pub fused: ScorerModel,
    /// Standard-protocol candidates: 100 sampled negatives per user.
    pub candidates: EvalCandidates,
    /// Small candidate sets for benches where per-epoch evaluation would
    /// otherwise dominate the measurement.
    pub light_candidates: EvalCandidates,
}

pub fn bench_set(pf: u32) -> BenchSet {
    let data = generate(SynthConfig {
        users: 200,
        items: 120,
        per_user: 8,
        ..SynthConfig::default()
    })
    .expect("synthetic dataset");
    let (num_users, num_items) = (data.log.num_users, data.log.num_items);
    let specs = [data.user_feature.clone(), data.item_feature.clone()];

    let mut rng = RngState::new(4242);
    let gmf = ScorerModel::gmf("gmf", num_users, num_items, pf, &mut rng).unwrap();
    let mlp = ScorerModel::mlp("mlp", num_users, num_items, pf, &mut rng).unwrap();
    let aux = ScorerModel::aux("aux", &specs, pf, &mut rng).unwrap();
    let fused = fuse("nhr", &[&gmf, &mlp, &aux], &[0.25, 0.25, 0.5]).unwrap();

    let mut cand_rng = RngState::new(7);
    let candidates = sample_eval_candidates(&data.split, Holdout::Val, 100, &mut cand_rng).unwrap();
    let light_candidates =
        sample_eval_candidates(&data.split, Holdout::Val, 10, &mut cand_rng).unwrap();
    BenchSet {
        data,
        gmf,
        mlp,
        aux,
        fused,
        candidates,
        light_candidates,
    }
}
