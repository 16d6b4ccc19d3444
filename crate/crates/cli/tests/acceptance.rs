//! Acceptance gate for the whole pipeline. Each test checks one release
//! criterion and prints a single labeled verdict line (visible with
//! `cargo test --test acceptance -- --nocapture`):
//!
//!   1. analytic gradients match 64-bit central finite differences
//!   2. GMF overfits the planted-cluster toy set
//!   3. a uniform-random scorer hits at the analytic rate
//!   4. HR/NDCG agree with a brute-force full-sort recomputation
//!   5. the fused-at-init logit is the weighted component blend
//!   6. negative sampling is collision-free and uniform
//!   7. feature fusion beats GMF alone on planted signal
//!   8. repeated commands reproduce reports byte for byte

mod common;

use std::collections::BTreeMap;

use nhr_core::data::features::{
    build_categorical_table, CategoricalVocab, Entity, FeatureSpec, FeatureStore,
};
use nhr_core::data::interactions::parse_interactions;
use nhr_core::data::interactions::LogFormat;
use nhr_core::error::{Error, Result};
use nhr_core::evaluation::{evaluate, hr_at_k, ndcg_at_k, rank_candidates, HrMode, Scorer};
use nhr_core::graph::Graph;
use nhr_core::models::{fuse, validate_weights, BodyArch, ScorerModel};
use nhr_core::param::ParamId;
use nhr_core::rng::RngState;
use nhr_core::sampling::{sample_epoch, sample_eval_candidates, EvalCandidates, Holdout};
use nhr_core::synth::{generate, SynthConfig};
use nhr_core::training::{
    build_component, fuse_components, pretrain_all, search_fusion_weights, train, ComponentPlan,
    TrainConfig,
};

fn verdict(criterion: u32, label: &str, detail: &str) {
    println!("[acceptance] {criterion}. {label}: PASS  ({detail})");
}

// --- criterion 1: gradient oracle -----------------------------------------
//
// The engine stores parameters and activations in f32, so a finite-difference
// check inside the engine would drown in cancellation noise. Instead the test
// carries an independent f64 re-implementation of the forward pass (embedding
// lookup, masked average, elementwise product, affine, ReLU, logit BCE) and
// differences that, at the exact parameter point the f32 model holds.

/// f64 mirror of every parameter tensor, indexed by `ParamId::index()`.
struct Mirror {
    values: Vec<Vec<f64>>,
}

impl Mirror {
    fn of(model: &ScorerModel) -> Mirror {
        Mirror {
            values: model
                .params
                .iter()
                .map(|(_, p)| p.value.data().iter().map(|&v| v as f64).collect())
                .collect(),
        }
    }

    fn row<'a>(&'a self, model: &ScorerModel, id: ParamId, row: usize) -> &'a [f64] {
        let cols = model.params.get(id).value.shape()[1];
        &self.values[id.index()][row * cols..(row + 1) * cols]
    }

    fn affine(&self, model: &ScorerModel, w: ParamId, b: ParamId, x: &[f64]) -> Vec<f64> {
        let rows = model.params.get(w).value.shape()[0];
        let wv = &self.values[w.index()];
        let bv = &self.values[b.index()];
        (0..rows)
            .map(|r| {
                let mut acc = bv[r];
                for (c, &xc) in x.iter().enumerate() {
                    acc += wv[r * x.len() + c] * xc;
                }
                acc
            })
            .collect()
    }

    /// Final hidden vector of one body; records every pre-ReLU activation's
    /// magnitude so callers can reject examples too close to the kink.
    fn body(
        &self,
        model: &ScorerModel,
        body_idx: usize,
        user: u32,
        item: u32,
        store: &FeatureStore,
        min_preact: &mut f64,
    ) -> Vec<f64> {
        let mut tower = |mut h: Vec<f64>, layers: &[(ParamId, ParamId)]| -> Vec<f64> {
            for &(w, b) in layers {
                h = self.affine(model, w, b, &h);
                for &v in &h {
                    *min_preact = min_preact.min(v.abs());
                }
                for v in &mut h {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            h
        };
        match &model.bodies[body_idx].arch {
            BodyArch::Gmf {
                user_table,
                item_table,
            } => {
                let p = self.row(model, *user_table, user as usize);
                let q = self.row(model, *item_table, item as usize);
                p.iter().zip(q).map(|(a, b)| a * b).collect()
            }
            BodyArch::Mlp {
                user_table,
                item_table,
                layers,
            } => {
                let mut h = self.row(model, *user_table, user as usize).to_vec();
                h.extend_from_slice(self.row(model, *item_table, item as usize));
                tower(h, layers)
            }
            BodyArch::Aux { features, layers } => {
                let mut h = Vec::new();
                for f in features {
                    let table = store.get(&f.spec.name).expect("feature table");
                    let entity = match f.spec.entity {
                        Entity::User => user,
                        Entity::Item => item,
                    };
                    let (indices, mask) = table.row(entity).expect("feature row");
                    let dim = model.params.get(f.table).value.shape()[1];
                    let mut pooled = vec![0.0f64; dim];
                    let mut live = 0usize;
                    for (&ix, &m) in indices.iter().zip(mask) {
                        if m == 0 {
                            continue;
                        }
                        live += 1;
                        for (a, &v) in pooled.iter_mut().zip(self.row(model, f.table, ix as usize))
                        {
                            *a += v;
                        }
                    }
                    if live > 0 {
                        for a in &mut pooled {
                            *a /= live as f64;
                        }
                    }
                    h.extend(pooled);
                }
                tower(h, layers)
            }
        }
    }

    fn logit(
        &self,
        model: &ScorerModel,
        user: u32,
        item: u32,
        store: &FeatureStore,
        min_preact: &mut f64,
    ) -> f64 {
        let mut joined = Vec::new();
        for b in 0..model.bodies.len() {
            joined.extend(self.body(model, b, user, item, store, min_preact));
        }
        let w = &self.values[model.out_w.index()];
        let b = self.values[model.out_b.index()][0];
        joined.iter().zip(w).map(|(x, wx)| x * wx).sum::<f64>() + b
    }
}

/// BCE of a logit: softplus(z) - y z, computed without forming sigmoid(z).
fn bce_from_logit(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

fn example_loss(
    mirror: &Mirror,
    model: &ScorerModel,
    store: &FeatureStore,
    (u, i, y): (u32, u32, f32),
) -> f64 {
    let mut ignore = f64::INFINITY;
    bce_from_logit(mirror.logit(model, u, i, store, &mut ignore), y as f64)
}

/// Item genres (multi-label, with one single-label and one all-padding row)
/// plus user groups — enough shape variety to exercise every pooling path.
fn gradient_check_store(num_users: usize, num_items: usize) -> (FeatureStore, Vec<FeatureSpec>) {
    let genres = ["act", "com", "dra"];
    let genre_vocab = CategoricalVocab::build(genres);
    let mut item_values: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for i in 0..num_items as u32 {
        if i == 7 {
            continue; // cold item: all-padding feature row
        }
        let mut labels = vec![genres[i as usize % 3].to_string()];
        if i != 3 {
            labels.push(genres[(i as usize + 1) % 3].to_string());
        }
        item_values.insert(i, labels);
    }
    let genre = build_categorical_table(
        "genre",
        Entity::Item,
        num_items,
        &item_values,
        &genre_vocab,
        None,
        6,
    )
    .unwrap();
    let group_vocab = CategoricalVocab::build(["g0", "g1"]);
    let mut user_values: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for u in 0..num_users as u32 {
        user_values.insert(u, vec![format!("g{}", u % 2)]);
    }
    let group = build_categorical_table(
        "group",
        Entity::User,
        num_users,
        &user_values,
        &group_vocab,
        Some(1),
        6,
    )
    .unwrap();
    let specs = vec![group.spec.clone(), genre.spec.clone()];
    let mut store = FeatureStore::new();
    store.push(group).unwrap();
    store.push(genre).unwrap();
    (store, specs)
}

fn max_gradient_error(
    model: &mut ScorerModel,
    store: &FeatureStore,
    examples: &[(u32, u32, f32)],
) -> (f64, String) {
    const H: f64 = 1e-3;
    let mut mirror = Mirror::of(model);

    // A +-H nudge of any single parameter moves a pre-activation by at most
    // H times the magnitude of the activations/weights on one path (all well
    // under 1.5 here), so examples whose smallest |pre-activation| clears
    // 3e-3 keep their ReLU pattern fixed across the difference quotient.
    // Saturated outputs are excluded too: there the f32 tape underflows
    // before the f64 mirror does.
    let usable: Vec<(u32, u32, f32)> = examples
        .iter()
        .copied()
        .filter(|&(u, i, _)| {
            let mut min_preact = f64::INFINITY;
            let z = mirror.logit(model, u, i, store, &mut min_preact);
            min_preact > 3e-3 && z.abs() < 6.0
        })
        .collect();
    assert!(
        usable.len() >= 6,
        "model {}: only {} of {} probe examples usable",
        model.name,
        usable.len(),
        examples.len()
    );

    // per-example comparison: summing losses first would let f32 rounding of
    // partially cancelling per-example terms dominate small gradients
    let mut worst = (0.0f64, String::new());
    for &(u, i, y) in &usable {
        model.params.zero_grads();
        let mut g = Graph::new();
        model.forward_graph(&mut g, u, i, store).unwrap();
        g.backward_bce(&mut model.params, y).unwrap();

        for id in model.params.ids().collect::<Vec<_>>() {
            for k in 0..model.params.get(id).value.len() {
                let orig = mirror.values[id.index()][k];
                mirror.values[id.index()][k] = orig + H;
                let up = example_loss(&mirror, model, store, (u, i, y));
                mirror.values[id.index()][k] = orig - H;
                let down = example_loss(&mirror, model, store, (u, i, y));
                mirror.values[id.index()][k] = orig;
                let fd = (up - down) / (2.0 * H);
                let a = model.params.get(id).grad.data()[k] as f64;
                // floor of 1e-4 = absolute slack of 1e-8 at the tolerance
                // point, below the f32 tape's own noise; any wrong formula
                // still overshoots it by orders of magnitude
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
                if rel > worst.0 {
                    worst = (
                        rel,
                        format!(
                            "{}[{}] on ({u},{i},{y}): analytic {a:.3e} vs fd {fd:.3e}",
                            model.params.get(id).name,
                            k
                        ),
                    );
                }
            }
        }
    }
    worst
}

#[test]
fn c1_analytic_gradients_match_f64_central_differences() {
    let (num_users, num_items, pf) = (8usize, 10usize, 8u32);
    let (store, specs) = gradient_check_store(num_users, num_items);
    let mut rng = RngState::new(41);
    let gmf = ScorerModel::gmf("gmf", num_users, num_items, pf, &mut rng).unwrap();
    let mlp = ScorerModel::mlp("mlp", num_users, num_items, pf, &mut rng).unwrap();
    let aux = ScorerModel::aux("aux", &specs, pf, &mut rng).unwrap();
    let fused = fuse("nhr", &[&gmf, &mlp, &aux], &[0.3, 0.3, 0.4]).unwrap();

    // probe pool across users, items (incl. the cold item 7), and labels;
    // each model keeps the probes that sit clear of its ReLU kinks
    let examples: Vec<(u32, u32, f32)> = (0..24u32)
        .map(|n| ((n * 5 + 3) % 8, (n * 7 + 1) % 10, (n % 2) as f32))
        .collect();

    let mut details = Vec::new();
    for mut model in [gmf, mlp, aux, fused] {
        let (err, at) = max_gradient_error(&mut model, &store, &examples);
        assert!(
            err < 1e-4,
            "{}: max relative gradient error {err:.3e} at {at}",
            model.name
        );
        details.push(format!("{} {err:.1e}", model.name));
    }
    verdict(
        1,
        "analytic gradients match 64-bit central differences",
        &format!("h=1e-3, max rel err by model: {}", details.join(", ")),
    );
}

// --- criterion 2: toy overfit ----------------------------------------------

/// One candidate set per user whose target is a *training* item: the target
/// plus every never-interacted item.
fn train_item_candidates(data: &nhr_core::synth::SynthData) -> EvalCandidates {
    let mut first_train_item = vec![None; data.log.num_users];
    for r in &data.split.train.records {
        let slot = &mut first_train_item[r.user as usize];
        if slot.is_none() {
            *slot = Some(r.item);
        }
    }
    let mut text = String::new();
    for (u, target) in first_train_item.iter().enumerate() {
        let target = target.expect("every user keeps train records");
        let positives = &data.split.positives_by_user[u];
        let negatives: Vec<String> = (0..data.log.num_items as u32)
            .filter(|i| positives.binary_search(i).is_err())
            .map(|i| i.to_string())
            .collect();
        text.push_str(&format!("{u}\t{target},{}\n", negatives.join(",")));
    }
    EvalCandidates::read_tsv(std::io::Cursor::new(text), "<train-candidates>").unwrap()
}

#[test]
fn c2_gmf_overfits_the_planted_cluster_toy_set() {
    let data = generate(SynthConfig::default()).unwrap(); // 50 users x 20 items
    let cands = train_item_candidates(&data);
    let cfg = TrainConfig {
        lr: 0.005,
        max_epochs: 500,
        patience: 500, // run to the budget; convergence is the point here
        seed: 7,
        ..TrainConfig::default()
    };
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

    let (converged_at, best_mean) = report
        .epochs
        .iter()
        .map(|e| (e.epoch, e.train_loss_mean))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!(
        best_mean < 0.05,
        "train BCE only reached {best_mean:.4} in {} epochs",
        report.epochs.len()
    );
    let eval = evaluate(&model, "gmf", &cands, &data.store, 10, HrMode::Indicator, false).unwrap();
    assert_eq!(eval.hr, 1.0, "train-candidate HR@10 fell short");
    verdict(
        2,
        "GMF overfits the planted-cluster toy set",
        &format!("train BCE {best_mean:.4} by epoch {converged_at}, train-candidate HR@10 = 1.0"),
    );
}

// --- criterion 3: random-scorer calibration ---------------------------------

/// Deterministic "uniform" scorer: a hash of (user, item) stretched to [0, 1).
struct HashScorer(u64);

impl HashScorer {
    fn mix(mut x: u64) -> u64 {
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51afd7ed558ccd);
        x ^= x >> 33;
        x = x.wrapping_mul(0xc4ceb9fe1a85ec53);
        x ^ (x >> 33)
    }
}

impl Scorer for HashScorer {
    fn score_item(&self, user: u32, item: u32, _store: &FeatureStore) -> Result<f32> {
        let h = Self::mix(self.0 ^ ((user as u64) << 32 | item as u64));
        Ok(((h >> 11) as f64 / (1u64 << 53) as f64) as f32)
    }
}

#[test]
fn c3_random_scorer_hits_at_the_analytic_rate() {
    // 2500 users x (target + 100 negatives); a scorer with no signal should
    // land the target in the top 10 of 101 at rate 10/101 ~ 0.099
    let users = 2500usize;
    let mut text = String::new();
    let all_items: Vec<String> = (0..101u32).map(|i| i.to_string()).collect();
    for u in 0..users {
        text.push_str(&format!("{u}\t{}\n", all_items.join(",")));
    }
    let cands = EvalCandidates::read_tsv(std::io::Cursor::new(text), "<uniform>").unwrap();
    let store = FeatureStore::new();
    let report = evaluate(
        &HashScorer(0x9e3779b97f4a7c15),
        "random",
        &cands,
        &store,
        10,
        HrMode::Indicator,
        false,
    )
    .unwrap();
    assert_eq!(report.users, users);
    let expected = 10.0 / 101.0;
    assert!(
        (report.hr - expected).abs() < 0.02,
        "HR@10 {:.4} strays from {expected:.4}",
        report.hr
    );
    verdict(
        3,
        "a uniform-random scorer hits at the analytic rate",
        &format!("HR@10 {:.4} vs 10/101 = {expected:.4} over {users} users", report.hr),
    );
}

// --- criterion 4: metric oracles ---------------------------------------------

struct ListScorer(std::collections::HashMap<u32, f32>);

impl Scorer for ListScorer {
    fn score_item(&self, _user: u32, item: u32, _store: &FeatureStore) -> Result<f32> {
        Ok(self.0[&item])
    }
}

#[test]
fn c4_metrics_match_a_brute_force_rerank() {
    let store = FeatureStore::new();
    let mut rng = RngState::new(404);
    let ks = [1usize, 3, 5, 10];
    for round in 0..10_000 {
        let n = 11 + rng.next_below(91) as usize; // 11..=101 candidates
        let mut items: Vec<u32> = Vec::with_capacity(n);
        while items.len() < n {
            let cand = rng.next_below(100_000) as u32;
            if !items.contains(&cand) {
                items.push(cand);
            }
        }
        let scores: Vec<f32> = (0..n).map(|_| rng.next_f64() as f32).collect();
        let target = items[rng.next_below(n as u64) as usize];
        let k = ks[round % ks.len()];

        let map: std::collections::HashMap<u32, f32> =
            items.iter().copied().zip(scores.iter().copied()).collect();
        let cands = nhr_core::sampling::CandidateSet {
            target,
            negatives: items.iter().copied().filter(|&i| i != target).collect(),
        };
        let ranked = rank_candidates(&ListScorer(map.clone()), 0, &cands, &store).unwrap();
        let hr = hr_at_k(&ranked, target, k, HrMode::Indicator).unwrap();
        let ndcg = ndcg_at_k(&ranked, target, k).unwrap();

        // brute force: full sort by (score desc, id asc), then the closed forms
        let mut sorted: Vec<(u32, f32)> = items.iter().map(|&i| (i, map[&i])).collect();
        sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let pos = sorted.iter().position(|&(i, _)| i == target).unwrap() + 1;
        let want_hr = if pos <= k { 1.0 } else { 0.0 };
        let want_ndcg = if pos <= k {
            1.0 / ((pos + 1) as f64).log2()
        } else {
            0.0
        };
        assert!(
            (hr - want_hr).abs() < 1e-9 && (ndcg - want_ndcg).abs() < 1e-9,
            "round {round}: pos {pos} k {k}: hr {hr} vs {want_hr}, ndcg {ndcg} vs {want_ndcg}"
        );
    }

    // the closed-form anchor: a third-place target is worth exactly 1/log2(4)
    let scores: [(u32, f32); 5] = [(50, 0.9), (40, 0.8), (7, 0.7), (3, 0.6), (1, 0.5)];
    let cands = nhr_core::sampling::CandidateSet {
        target: 7,
        negatives: vec![50, 40, 3, 1],
    };
    let ranked = rank_candidates(&ListScorer(scores.into_iter().collect()), 0, &cands, &store)
        .unwrap();
    assert_eq!(ranked, vec![50, 40, 7, 3, 1]);
    assert_eq!(ndcg_at_k(&ranked, 7, 10).unwrap(), 0.5);
    verdict(
        4,
        "HR/NDCG agree with a brute-force full-sort recomputation",
        "10000 random score vectors within 1e-9; position-3 NDCG exactly 0.5",
    );
}

// --- criterion 5: fusion identity --------------------------------------------

#[test]
fn c5_fused_logit_is_the_weighted_component_blend() {
    let (num_users, num_items, pf) = (12usize, 15usize, 8u32);
    let (store, specs) = gradient_check_store(num_users, num_items);
    let mut rng = RngState::new(55);
    let gmf = ScorerModel::gmf("gmf", num_users, num_items, pf, &mut rng).unwrap();
    let mlp = ScorerModel::mlp("mlp", num_users, num_items, pf, &mut rng).unwrap();
    let aux = ScorerModel::aux("aux", &specs, pf, &mut rng).unwrap();

    let weights = [0.2f64, 0.3, 0.5];
    let fused = fuse("nhr", &[&gmf, &mlp, &aux], &weights).unwrap();
    let comps = [&gmf, &mlp, &aux];
    let mut worst = 0.0f64;
    for draw in 0..1000 {
        let _ = draw;
        let u = rng.next_below(num_users as u64) as u32;
        let i = rng.next_below(num_items as u64) as u32;
        let blended: f64 = comps
            .iter()
            .zip(&weights)
            .map(|(c, &w)| w * c.logit(u, i, &store).unwrap() as f64)
            .sum();
        let z = fused.logit(u, i, &store).unwrap() as f64;
        worst = worst.max((z - blended).abs());
    }
    assert!(worst <= 1e-6, "fused logit drifted {worst:.3e} from the blend");

    // weight vectors off the simplex are rejected outright
    for bad in [
        vec![0.6, 0.6],          // sums past 1
        vec![0.5, 0.45],         // sums short of 1
        vec![-0.1, 1.1],         // negative mass
        vec![0.5, 0.4999999],    // off by more than the tolerance
    ] {
        assert!(matches!(validate_weights(&bad), Err(Error::Config(_))));
        assert!(fuse("bad", &[&gmf, &mlp], &bad).is_err());
    }
    verdict(
        5,
        "the fused-at-init logit is the weighted component blend",
        &format!("max |fused - blended| = {worst:.2e} over 1000 inputs; off-simplex rejected"),
    );
}

// --- criterion 6: sampler soundness -------------------------------------------

#[test]
fn c6_negative_sampling_is_collision_free_and_uniform() {
    // user 0 holds 10 of 50 items, so negatives draw from 40 eligible ids;
    // a filler user pins the other 40 items into the id space
    let mut text = String::new();
    for i in 0..10 {
        text.push_str(&format!("u0\ti{i}\t{}\n", 100 + i));
    }
    for i in 10..50 {
        text.push_str(&format!("u1\ti{i}\t{}\n", 100 + i));
    }
    let log = parse_interactions(std::io::Cursor::new(text), LogFormat::Tsv, "<sampler>").unwrap();
    assert_eq!((log.num_users, log.num_items), (2, 50));
    let positives: Vec<Vec<u32>> = vec![(0..10).collect(), (10..50).collect()];

    // 10 records x ratio 10000 = 1e5 negative draws for user 0 in one epoch
    let mut rng = RngState::new(606);
    let plan = sample_epoch(&log, &positives, 10_000, 128, &mut rng).unwrap();
    let mut counts = vec![0u64; 50];
    let mut draws = 0u64;
    for inst in &plan.instances {
        if inst.user != 0 || inst.label != 0 {
            continue;
        }
        assert!(
            positives[0].binary_search(&inst.item).is_err(),
            "negative draw {} collides with a positive",
            inst.item
        );
        counts[inst.item as usize] += 1;
        draws += 1;
    }
    assert_eq!(draws, 100_000);

    let expected = draws as f64 / 40.0;
    let chi2: f64 = counts[10..]
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    // upper 1% point of chi-squared with 39 degrees of freedom
    assert!(chi2 < 62.4281210161849, "chi^2 {chi2:.2} rejects uniformity");

    // consecutive epochs draw different negative sets
    let mut rng = RngState::new(607);
    let negatives = |plan: &nhr_core::sampling::EpochBatchPlan| -> Vec<(u32, u32)> {
        let mut v: Vec<(u32, u32)> = plan
            .instances
            .iter()
            .filter(|i| i.label == 0)
            .map(|i| (i.user, i.item))
            .collect();
        v.sort_unstable();
        v
    };
    let first = negatives(&sample_epoch(&log, &positives, 4, 128, &mut rng).unwrap());
    let second = negatives(&sample_epoch(&log, &positives, 4, 128, &mut rng).unwrap());
    assert_ne!(first, second, "epochs resampled identical negatives");
    verdict(
        6,
        "negative sampling is collision-free and uniform",
        &format!("1e5 draws, 0 collisions, chi^2(39) = {chi2:.1} < 62.43; epochs differ"),
    );
}

// --- criterion 7: planted-signal hybrid gain -----------------------------------

#[test]
fn c7_feature_fusion_beats_gmf_on_planted_signal() {
    // One training interaction per user starves the interaction-only models
    // while the cluster features still name each user's preferred items, so
    // the headroom for the feature-aware fusion is structural.
    let data = generate(SynthConfig {
        users: 150,
        items: 40,
        clusters: 4,
        per_user: 3,
        noise: 0.05,
        skew: 1.0,
        feature_dim: 8,
        seed: 29,
    })
    .unwrap();
    let cfg = TrainConfig {
        max_epochs: 12,
        patience: 12,
        seed: 29,
        ..TrainConfig::default()
    };
    let val_cands = sample_eval_candidates(
        &data.split,
        Holdout::Val,
        20,
        &mut RngState::derive(cfg.seed, "candidates/val"),
    )
    .unwrap();
    let plans = vec![
        ComponentPlan::Gmf { name: "gmf".into() },
        ComponentPlan::Mlp { name: "mlp".into() },
        ComponentPlan::Aux {
            name: "aux".into(),
            features: vec!["group".into(), "genre".into()],
        },
    ];
    let trained = pretrain_all(
        &plans,
        &data.split,
        &data.store,
        &val_cands,
        &cfg,
        &mut |_| {},
    )
    .unwrap();
    let comps: Vec<&ScorerModel> = trained.iter().map(|(m, _)| m).collect();
    let search =
        search_fusion_weights(&comps, &val_cands, &data.store, 0.1, 10, &mut |_| {}).unwrap();
    let fused = fuse_components("nhr", &comps, &search.weights).unwrap();

    let gmf_hr = evaluate(
        &trained[0].0,
        "gmf",
        &val_cands,
        &data.store,
        10,
        HrMode::Indicator,
        false,
    )
    .unwrap()
    .hr;
    let fused_hr = evaluate(
        &fused,
        "nhr",
        &val_cands,
        &data.store,
        10,
        HrMode::Indicator,
        false,
    )
    .unwrap()
    .hr;
    assert!(
        fused_hr >= gmf_hr + 0.03,
        "fusion HR@10 {fused_hr:.4} vs GMF {gmf_hr:.4}: gain under 0.03"
    );
    verdict(
        7,
        "feature fusion beats GMF alone on planted signal",
        &format!(
            "val HR@10: nhr {fused_hr:.4} vs gmf {gmf_hr:.4} (weights {:?})",
            search.weights
        ),
    );
}

// --- criterion 8: determinism ---------------------------------------------------

#[test]
fn c8_repeated_commands_reproduce_reports_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    common::Fixture::default().write_all(dir.path());
    let sequence: &[&[&str]] = &[
        &["ingest"],
        &["baseline"],
        &["pretrain"],
        &["fuse"],
        &["evaluate"],
    ];
    for args in sequence {
        common::run_ok(common::nhr(dir.path()).args(*args));
    }
    let first = common::dir_snapshot(dir.path());
    for args in sequence {
        common::run_ok(common::nhr(dir.path()).args(*args));
    }
    let second = common::dir_snapshot(dir.path());

    assert_eq!(
        first.len(),
        second.len(),
        "re-running changed the artifact inventory"
    );
    let mut reports = 0usize;
    for ((path_a, bytes_a), (path_b, bytes_b)) in first.iter().zip(&second) {
        assert_eq!(path_a, path_b);
        assert_eq!(bytes_a, bytes_b, "{path_a} changed across identical runs");
        if path_a.contains("reports/") || path_a.starts_with("out/comparison") {
            reports += 1;
        }
    }
    assert!(reports >= 8, "expected the full report set, saw {reports}");
    verdict(
        8,
        "repeated commands reproduce reports byte for byte",
        &format!("{} artifacts identical, {reports} of them reports", first.len()),
    );
}
