//! Non-neural reference scorers: popularity ranking and BPR matrix
//! factorization. Both speak the same [`Scorer`] interface as the neural
//! models and are evaluated on the exact same candidate sets.

use std::io::Write;
use std::path::Path;

use crate::data::features::FeatureStore;
use crate::data::interactions::InteractionLog;
use crate::error::{Error, Result};
use crate::evaluation::Scorer;
use crate::models::checkpoint::{
    kind_name, r_f32s, r_str, r_u32, r_u64, w_f32s, w_str, w_u32, w_u64, KIND_BPR, KIND_POPRANK,
    MAGIC, VERSION,
};
use crate::rng::RngState;
use crate::tensor::{xavier_fill, Tensor};

/// Items ranked by raw train interaction count; every user sees the same
/// order. Items absent from train score 0.
#[derive(Clone, Debug, PartialEq)]
pub struct PopRank {
    counts: Vec<f32>,
}

impl PopRank {
    pub fn fit(train: &InteractionLog) -> Self {
        let mut counts = vec![0.0f32; train.num_items];
        for r in &train.records {
            counts[r.item as usize] += 1.0;
        }
        PopRank { counts }
    }

    pub fn score(&self, item: u32) -> Result<f32> {
        self.counts
            .get(item as usize)
            .copied()
            .ok_or(Error::Lookup {
                what: "item count",
                index: item as usize,
                size: self.counts.len(),
            })
    }

    pub fn num_items(&self) -> usize {
        self.counts.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Vec::new();
        w.write_all(MAGIC)?;
        w_u32(&mut w, VERSION)?;
        w_u32(&mut w, KIND_POPRANK)?;
        w_str(&mut w, "poprank")?;
        w_u32(&mut w, self.counts.len() as u32)?;
        w_f32s(&mut w, &self.counts)?;
        std::fs::write(path, w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        let mut r = bytes.as_slice();
        check_header(&mut r, KIND_POPRANK)?;
        let _name = r_str(&mut r, "model name")?;
        let n = r_u32(&mut r, "item count")? as usize;
        let counts = r_f32s(&mut r, n, "counts")?;
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes in poprank file".into()));
        }
        Ok(PopRank { counts })
    }
}

impl Scorer for PopRank {
    fn score_item(&self, _user: u32, item: u32, _store: &FeatureStore) -> Result<f32> {
        self.score(item)
    }
}

fn check_header(r: &mut &[u8], want_kind: u32) -> Result<()> {
    let magic = crate::models::checkpoint::r_bytes(r, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint".into()));
    }
    let version = r_u32(r, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let kind = r_u32(r, "kind")?;
    if kind != want_kind {
        return Err(Error::Checkpoint(format!(
            "expected a {} checkpoint, found {}",
            kind_name(want_kind),
            kind_name(kind)
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BprConfig {
    /// Latent dimension; set equal to the neural models' predictive factors.
    pub d: u32,
    pub lr: f32,
    pub reg: f32,
    pub epochs: u32,
    /// Triples drawn per epoch; defaults to 4·|train| to mirror the neural
    /// models' negative exposure.
    pub triples_per_epoch: Option<usize>,
}

impl Default for BprConfig {
    fn default() -> Self {
        BprConfig {
            d: 8,
            lr: 0.01,
            reg: 0.01,
            epochs: 30,
            triples_per_epoch: None,
        }
    }
}

/// Matrix factorization trained on the pairwise ranking loss
/// −ln σ(x̂_ui − x̂_uj) with L2 regularization; x̂ = u·v_i + b_i.
#[derive(Clone, Debug, PartialEq)]
pub struct Bpr {
    pub user_factors: Tensor,
    pub item_factors: Tensor,
    pub item_bias: Tensor,
    pub d: u32,
}

/// Per-epoch mean triple loss, returned alongside the fitted model.
#[derive(Clone, Debug, Default)]
pub struct BprFitReport {
    pub epoch_loss: Vec<f64>,
}

impl Bpr {
    pub fn fit(
        train: &InteractionLog,
        positives_by_user: &[Vec<u32>],
        cfg: &BprConfig,
        rng: &mut RngState,
    ) -> Result<(Self, BprFitReport)> {
        if cfg.d < 1 {
            return Err(Error::Config("BPR latent dimension must be >= 1".into()));
        }
        if cfg.lr <= 0.0 || cfg.reg < 0.0 {
            return Err(Error::Config(format!(
                "BPR needs lr > 0 and reg >= 0 (got lr {}, reg {})",
                cfg.lr, cfg.reg
            )));
        }
        if train.records.is_empty() {
            return Err(Error::EmptyLog("BPR training set".into()));
        }
        let d = cfg.d as usize;
        let mut user_factors = Tensor::zeros(&[train.num_users, d]);
        let mut item_factors = Tensor::zeros(&[train.num_items, d]);
        xavier_fill(rng, &mut user_factors, d, 1);
        xavier_fill(rng, &mut item_factors, d, 1);
        let mut item_bias = Tensor::zeros(&[train.num_items]);

        let triples = cfg
            .triples_per_epoch
            .unwrap_or(train.records.len() * 4)
            .max(1);
        let mut report = BprFitReport::default();

        for epoch in 0..cfg.epochs {
            let mut loss_sum = 0.0f64;
            for step in 0..triples {
                let rec = &train.records[rng.next_below(train.records.len() as u64) as usize];
                let (u, i) = (rec.user as usize, rec.item as usize);
                let positives = &positives_by_user[rec.user as usize];
                if positives.len() >= train.num_items {
                    return Err(Error::Unsatisfiable {
                        user: rec.user,
                        message: "user interacted with every item; no BPR negative".into(),
                    });
                }
                let j = loop {
                    let cand = rng.next_below(train.num_items as u64) as u32;
                    if positives.binary_search(&cand).is_err() {
                        break cand as usize;
                    }
                };

                let (uf, vi, vj) = (
                    user_factors.row(u)?.to_vec(),
                    item_factors.row(i)?.to_vec(),
                    item_factors.row(j)?.to_vec(),
                );
                let mut diff = (item_bias.data()[i] - item_bias.data()[j]) as f64;
                for k in 0..d {
                    diff += uf[k] as f64 * (vi[k] - vj[k]) as f64;
                }
                // dL/ddiff = -sigma(-diff); loss = ln(1 + exp(-diff))
                let e = if diff >= 0.0 {
                    let t = (-diff).exp();
                    loss_sum += t.ln_1p();
                    t / (1.0 + t)
                } else {
                    let t = diff.exp();
                    loss_sum += (t.ln_1p()) - diff;
                    1.0 / (1.0 + t)
                };
                if !e.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch: epoch as usize,
                        batch: step,
                        lr: cfg.lr,
                    });
                }
                let e = e as f32;
                let (lr, reg) = (cfg.lr, cfg.reg);
                {
                    let urow = user_factors.row_mut(u)?;
                    for k in 0..d {
                        urow[k] += lr * (e * (vi[k] - vj[k]) - reg * uf[k]);
                    }
                }
                {
                    let virow = item_factors.row_mut(i)?;
                    for k in 0..d {
                        virow[k] += lr * (e * uf[k] - reg * vi[k]);
                    }
                }
                {
                    let vjrow = item_factors.row_mut(j)?;
                    for k in 0..d {
                        vjrow[k] += lr * (-e * uf[k] - reg * vj[k]);
                    }
                }
                let bi = item_bias.data()[i];
                let bj = item_bias.data()[j];
                item_bias.data_mut()[i] += lr * (e - reg * bi);
                item_bias.data_mut()[j] += lr * (-e - reg * bj);
            }
            let mean = loss_sum / triples as f64;
            if !mean.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch as usize,
                    batch: 0,
                    lr: cfg.lr,
                });
            }
            report.epoch_loss.push(mean);
        }
        Ok((
            Bpr {
                user_factors,
                item_factors,
                item_bias,
                d: cfg.d,
            },
            report,
        ))
    }

    pub fn score(&self, user: u32, item: u32) -> Result<f32> {
        let u = self.user_factors.row(user as usize)?;
        let v = self.item_factors.row(item as usize)?;
        let mut acc = self.item_bias.data()[item as usize] as f64;
        for (a, b) in u.iter().zip(v) {
            acc += *a as f64 * *b as f64;
        }
        Ok(acc as f32)
    }

    /// Fraction of sampled (positive, negative) pairs the model orders
    /// correctly for their user — a quick ranking sanity probe.
    pub fn pairwise_auc(
        &self,
        train: &InteractionLog,
        positives_by_user: &[Vec<u32>],
        samples: usize,
        rng: &mut RngState,
    ) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for _ in 0..samples {
            let rec = &train.records[rng.next_below(train.records.len() as u64) as usize];
            let positives = &positives_by_user[rec.user as usize];
            if positives.len() >= train.num_items {
                continue;
            }
            let j = loop {
                let cand = rng.next_below(train.num_items as u64) as u32;
                if positives.binary_search(&cand).is_err() {
                    break cand;
                }
            };
            let si = self.score(rec.user, rec.item)?;
            let sj = self.score(rec.user, j)?;
            if si > sj {
                correct += 1;
            }
            total += 1;
        }
        if total == 0 {
            return Err(Error::Protocol("no AUC pairs could be sampled".into()));
        }
        Ok(correct as f64 / total as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Vec::new();
        w.write_all(MAGIC)?;
        w_u32(&mut w, VERSION)?;
        w_u32(&mut w, KIND_BPR)?;
        w_str(&mut w, "bpr")?;
        w_u32(&mut w, self.d)?;
        w_u64(&mut w, self.user_factors.shape()[0] as u64)?;
        w_u64(&mut w, self.item_factors.shape()[0] as u64)?;
        w_f32s(&mut w, self.user_factors.data())?;
        w_f32s(&mut w, self.item_factors.data())?;
        w_f32s(&mut w, self.item_bias.data())?;
        std::fs::write(path, w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        let mut r = bytes.as_slice();
        check_header(&mut r, KIND_BPR)?;
        let _name = r_str(&mut r, "model name")?;
        let d = r_u32(&mut r, "latent dim")? as usize;
        let num_users = r_u64(&mut r, "num users")? as usize;
        let num_items = r_u64(&mut r, "num items")? as usize;
        let uf = r_f32s(&mut r, num_users * d, "user factors")?;
        let vf = r_f32s(&mut r, num_items * d, "item factors")?;
        let ib = r_f32s(&mut r, num_items, "item bias")?;
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes in bpr file".into()));
        }
        Ok(Bpr {
            user_factors: Tensor::from_vec(&[num_users, d], uf)?,
            item_factors: Tensor::from_vec(&[num_items, d], vf)?,
            item_bias: Tensor::from_vec(&[num_items], ib)?,
            d: d as u32,
        })
    }
}

impl Scorer for Bpr {
    fn score_item(&self, user: u32, item: u32, _store: &FeatureStore) -> Result<f32> {
        self.score(user, item)
    }
}
