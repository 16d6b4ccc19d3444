//! Negative sampling for training and evaluation.
//!
//! Training epochs pair every observed interaction with `ratio` fresh
//! uniform negatives, re-drawn before each epoch. Evaluation fixes one
//! candidate set per user (held-out item plus `n` distinct negatives) that
//! every compared model scores, so ranking metrics are comparable across
//! runs. Negatives never collide with a user's known positives — train, val,
//! or test — which rejection sampling guarantees by construction.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::data::interactions::{InteractionLog, SplitDataset};
use crate::error::{Error, Result};
use crate::rng::{fnv1a64, RngState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainInstance {
    pub user: u32,
    pub item: u32,
    pub label: u8,
}

/// One epoch's training instances plus a shuffled visit order.
#[derive(Clone, Debug)]
pub struct EpochBatchPlan {
    pub instances: Vec<TrainInstance>,
    pub batch_size: usize,
    order: Vec<u32>,
}

impl EpochBatchPlan {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Minibatches of instance indices, in shuffled order.
    pub fn batches(&self) -> impl Iterator<Item = &[u32]> {
        self.order.chunks(self.batch_size.max(1))
    }
}

fn draw_negative(
    rng: &mut RngState,
    num_items: usize,
    positives: &[u32],
    user: u32,
) -> Result<u32> {
    if positives.len() >= num_items {
        return Err(Error::Unsatisfiable {
            user,
            message: format!(
                "user interacted with all {num_items} items; no negative exists"
            ),
        });
    }
    loop {
        let cand = rng.next_below(num_items as u64) as u32;
        if positives.binary_search(&cand).is_err() {
            return Ok(cand);
        }
    }
}

/// Build one epoch: every train record as a positive plus `ratio` uniform
/// negatives drawn by rejection against the user's full positive set, then a
/// shuffled visit order.
pub fn sample_epoch(
    train: &InteractionLog,
    positives_by_user: &[Vec<u32>],
    ratio: u32,
    batch_size: usize,
    rng: &mut RngState,
) -> Result<EpochBatchPlan> {
    if ratio < 1 {
        return Err(Error::Config("negative ratio must be >= 1".into()));
    }
    let mut instances = Vec::with_capacity(train.records.len() * (1 + ratio as usize));
    for rec in &train.records {
        instances.push(TrainInstance {
            user: rec.user,
            item: rec.item,
            label: 1,
        });
        let positives = &positives_by_user[rec.user as usize];
        for _ in 0..ratio {
            let item = draw_negative(rng, train.num_items, positives, rec.user)?;
            instances.push(TrainInstance {
                user: rec.user,
                item,
                label: 0,
            });
        }
    }
    let mut order: Vec<u32> = (0..instances.len() as u32).collect();
    rng.shuffle(&mut order);
    Ok(EpochBatchPlan {
        instances,
        batch_size,
        order,
    })
}

/// Which held-out interaction a candidate set targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Holdout {
    Val,
    Test,
}

impl Holdout {
    pub fn name(self) -> &'static str {
        match self {
            Holdout::Val => "val",
            Holdout::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    /// The held-out item whose rank is measured.
    pub target: u32,
    /// Distinct sampled negatives, in draw order.
    pub negatives: Vec<u32>,
}

impl CandidateSet {
    /// Target first, then negatives — the order used in exports and scoring.
    pub fn items(&self) -> impl Iterator<Item = u32> + '_ {
        std::iter::once(self.target).chain(self.negatives.iter().copied())
    }

    pub fn len(&self) -> usize {
        1 + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Fixed per-user candidate sets, shared by every model under comparison.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalCandidates {
    entries: BTreeMap<u32, CandidateSet>,
}

impl EvalCandidates {
    pub fn get(&self, user: u32) -> Option<&CandidateSet> {
        self.entries.get(&user)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &CandidateSet)> {
        self.entries.iter().map(|(&u, c)| (u, c))
    }

    pub fn num_users(&self) -> usize {
        self.entries.len()
    }

    /// TSV export, `user<TAB>target,neg1,neg2,...` — first item is the
    /// held-out target.
    pub fn write_tsv(&self, w: &mut impl Write) -> Result<()> {
        for (u, c) in &self.entries {
            let items: Vec<String> = c.items().map(|i| i.to_string()).collect();
            writeln!(w, "{u}\t{}", items.join(","))?;
        }
        Ok(())
    }

    pub fn read_tsv(r: impl BufRead, path: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                path: path.to_string(),
                line: lineno + 1,
                message: m.to_string(),
            };
            let (u, rest) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected user<TAB>items"))?;
            let user: u32 = u.parse().map_err(|_| bad("bad user id"))?;
            let mut items = rest.split(',').map(|s| s.parse::<u32>());
            let target = items
                .next()
                .and_then(|r| r.ok())
                .ok_or_else(|| bad("candidate list needs at least the target"))?;
            let negatives: Vec<u32> = items
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad item id"))?;
            entries.insert(user, CandidateSet { target, negatives });
        }
        Ok(EvalCandidates { entries })
    }

    /// Stable content hash, used to verify that compared runs share the same
    /// candidate sets.
    pub fn fingerprint(&self) -> u64 {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("in-memory write");
        fnv1a64(&buf)
    }
}

/// Sample `n` distinct negatives per held-out user, excluding every one of
/// the user's positives, and attach the held-out item as the target.
pub fn sample_eval_candidates(
    split: &SplitDataset,
    holdout: Holdout,
    n: usize,
    rng: &mut RngState,
) -> Result<EvalCandidates> {
    let pairs = match holdout {
        Holdout::Val => &split.val,
        Holdout::Test => &split.test,
    };
    let num_items = split.train.num_items;
    let mut entries = BTreeMap::new();
    for &(user, target) in pairs {
        let positives = &split.positives_by_user[user as usize];
        let available = num_items - positives.len();
        if n > available {
            return Err(Error::Unsatisfiable {
                user,
                message: format!(
                    "need {n} negatives but only {available} non-positive items exist"
                ),
            });
        }
        let mut negatives = Vec::with_capacity(n);
        let mut taken: Vec<u32> = Vec::with_capacity(n);
        while negatives.len() < n {
            let cand = draw_negative(rng, num_items, positives, user)?;
            if let Err(pos) = taken.binary_search(&cand) {
                taken.insert(pos, cand);
                negatives.push(cand);
            }
        }
        entries.insert(user, CandidateSet { target, negatives });
    }
    Ok(EvalCandidates { entries })
}
