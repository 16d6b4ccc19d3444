//! Synthetic interaction data with planted structure, for tests and benches.
//!
//! Users and items are assigned to `clusters` round-robin by their raw index.
//! Each interaction picks an item from the user's own cluster with
//! probability `1 - noise` (within the cluster, popularity follows a
//! power-law skew), otherwise uniformly at random. Two categorical features
//! expose the cluster assignments ("group" on users, "genre" on items), so
//! interaction-only models and feature-only models each see part of the
//! signal.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::features::{
    build_categorical_table, CategoricalVocab, Entity, FeatureSpec, FeatureStore,
};
use crate::data::interactions::{
    leave_one_out_split, parse_interactions, InteractionLog, LogFormat, SplitDataset,
};
use crate::error::Result;
use crate::rng::RngState;

#[derive(Clone, Copy, Debug)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    /// Distinct items drawn per user (>= 3 so every user survives the split).
    pub per_user: usize,
    /// Probability that a draw ignores the cluster preference.
    pub noise: f64,
    /// Popularity skew within a cluster: weight ∝ 1/(rank+1)^skew.
    pub skew: f64,
    pub feature_dim: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 50,
            items: 20,
            clusters: 4,
            per_user: 6,
            noise: 0.1,
            skew: 1.0,
            feature_dim: 8,
            seed: 17,
        }
    }
}

pub struct SynthData {
    pub log: InteractionLog,
    pub split: SplitDataset,
    pub store: FeatureStore,
    pub user_feature: FeatureSpec,
    pub item_feature: FeatureSpec,
    pub cfg: SynthConfig,
}

fn raw_index(raw: &str) -> usize {
    raw[1..].parse::<usize>().expect("synthetic raw id")
}

/// Draw one item index for a user in cluster `c`.
fn draw_item(cfg: &SynthConfig, c: usize, rng: &mut RngState) -> usize {
    if rng.next_f64() < cfg.noise {
        return rng.next_below(cfg.items as u64) as usize;
    }
    // items of cluster c are c, c+C, c+2C, ... ; weight by 1/(rank+1)^skew
    let count = (cfg.items - c).div_ceil(cfg.clusters);
    let weights: Vec<f64> = (0..count)
        .map(|r| 1.0 / ((r + 1) as f64).powf(cfg.skew))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut pick = rng.next_f64() * total;
    for (r, w) in weights.iter().enumerate() {
        pick -= w;
        if pick <= 0.0 {
            return c + r * cfg.clusters;
        }
    }
    c + (count - 1) * cfg.clusters
}

pub fn generate(cfg: SynthConfig) -> Result<SynthData> {
    assert!(cfg.per_user >= 3, "users need >= 3 interactions to split");
    assert!(cfg.per_user <= cfg.items, "cannot draw that many distinct items");
    assert!(cfg.clusters >= 1 && cfg.clusters <= cfg.items);
    let mut rng = RngState::derive(cfg.seed, "synth");
    let mut text = String::new();
    for u in 0..cfg.users {
        let c = u % cfg.clusters;
        let mut seen = Vec::new();
        let mut t = 0u32;
        while seen.len() < cfg.per_user {
            let item = draw_item(&cfg, c, &mut rng);
            if seen.contains(&item) {
                continue;
            }
            seen.push(item);
            let _ = writeln!(text, "u{u}\ti{item}\t{}", 1000 + t);
            t += 1;
        }
    }
    let log = parse_interactions(std::io::Cursor::new(text), LogFormat::Tsv, "<synth>")?;
    let split = leave_one_out_split(&log);

    // expose cluster assignments as categorical features, keyed by dense id
    let mut user_values: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for d in 0..log.num_users as u32 {
        let c = raw_index(log.users.raw(d).unwrap()) % cfg.clusters;
        user_values.insert(d, vec![format!("g{c}")]);
    }
    let mut item_values: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for d in 0..log.num_items as u32 {
        let c = raw_index(log.items.raw(d).unwrap()) % cfg.clusters;
        item_values.insert(d, vec![format!("c{c}")]);
    }
    let user_vocab =
        CategoricalVocab::build(user_values.values().flatten().map(|s| s.as_str()));
    let item_vocab =
        CategoricalVocab::build(item_values.values().flatten().map(|s| s.as_str()));
    let user_table = build_categorical_table(
        "group",
        Entity::User,
        log.num_users,
        &user_values,
        &user_vocab,
        Some(1),
        cfg.feature_dim,
    )?;
    let item_table = build_categorical_table(
        "genre",
        Entity::Item,
        log.num_items,
        &item_values,
        &item_vocab,
        Some(1),
        cfg.feature_dim,
    )?;
    let user_feature = user_table.spec.clone();
    let item_feature = item_table.spec.clone();
    let mut store = FeatureStore::new();
    store.push(user_table)?;
    store.push(item_table)?;
    Ok(SynthData {
        log,
        split,
        store,
        user_feature,
        item_feature,
        cfg,
    })
}
