//! Scorer families and their fusion.
//!
//! Three component architectures share one output convention — a final
//! hidden vector of `pf` "predictive factors" feeding a scalar sigmoid head:
//!
//! * GMF: element-wise product of user/item embeddings (dim `pf`).
//! * MLP: ReLU tower over concatenated embeddings (dim `2pf` each), hidden
//!   widths `4pf → 2pf → pf`.
//! * Aux: per-feature average-pooled embeddings concatenated in declaration
//!   order, tower widths `2pf → pf`; consumes only side features, so it can
//!   score entities with no interaction history.
//!
//! Fusion concatenates the components' predictive factors and initializes
//! the joint head as `[α·w¹ β·w² … γ·wⁿ]` with bias `Σ αᵢ·bᵢ`, which makes
//! the fused logit exactly the weight-blended component logits until
//! fine-tuning moves it.

pub mod checkpoint;

use std::collections::BTreeSet;

use crate::data::features::{Entity, FeatureKind, FeatureSpec, FeatureStore};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::param::{ParamId, ParamSet};
use crate::rng::RngState;
use crate::tensor::{xavier_fill, Tensor};

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Gmf,
    Mlp,
    Aux,
    Fused,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gmf => "gmf",
            ModelKind::Mlp => "mlp",
            ModelKind::Aux => "aux",
            ModelKind::Fused => "fused",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AuxFeature {
    pub spec: FeatureSpec,
    pub table: ParamId,
}

#[derive(Clone, Debug)]
pub enum BodyArch {
    Gmf {
        user_table: ParamId,
        item_table: ParamId,
    },
    Mlp {
        user_table: ParamId,
        item_table: ParamId,
        layers: Vec<(ParamId, ParamId)>,
    },
    Aux {
        features: Vec<AuxFeature>,
        layers: Vec<(ParamId, ParamId)>,
    },
}

/// One scorer body: everything up to (excluding) the output head.
#[derive(Clone, Debug)]
pub struct ComponentBody {
    pub name: String,
    pub pf: u32,
    pub arch: BodyArch,
}

impl ComponentBody {
    pub fn kind(&self) -> ModelKind {
        match self.arch {
            BodyArch::Gmf { .. } => ModelKind::Gmf,
            BodyArch::Mlp { .. } => ModelKind::Mlp,
            BodyArch::Aux { .. } => ModelKind::Aux,
        }
    }

    fn param_ids(&self) -> Vec<ParamId> {
        match &self.arch {
            BodyArch::Gmf {
                user_table,
                item_table,
            } => vec![*user_table, *item_table],
            BodyArch::Mlp {
                user_table,
                item_table,
                layers,
            } => {
                let mut ids = vec![*user_table, *item_table];
                for &(w, b) in layers {
                    ids.push(w);
                    ids.push(b);
                }
                ids
            }
            BodyArch::Aux { features, layers } => {
                let mut ids: Vec<ParamId> = features.iter().map(|f| f.table).collect();
                for &(w, b) in layers {
                    ids.push(w);
                    ids.push(b);
                }
                ids
            }
        }
    }
}

/// A trainable scorer: one body (simple model) or several pre-trained bodies
/// under a shared head (fused model).
#[derive(Clone, Debug)]
pub struct ScorerModel {
    pub name: String,
    pub pf: u32,
    pub params: ParamSet,
    pub bodies: Vec<ComponentBody>,
    /// Fusion weights (empty for simple models); kept in f64 so the simplex
    /// constraint can hold to 1e-9.
    pub weights: Vec<f64>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

fn init_embedding(ps: &mut ParamSet, rng: &mut RngState, name: String, rows: usize, dim: usize) -> ParamId {
    let mut t = Tensor::zeros(&[rows, dim]);
    // Each row acts as a rank-1 projection of dimension `dim`.
    xavier_fill(rng, &mut t, dim, 1);
    ps.add(name, t)
}

fn init_tower(
    ps: &mut ParamSet,
    rng: &mut RngState,
    prefix: &str,
    mut fan_in: usize,
    widths: &[usize],
) -> Vec<(ParamId, ParamId)> {
    let mut layers = Vec::with_capacity(widths.len());
    for (l, &out) in widths.iter().enumerate() {
        let mut w = Tensor::zeros(&[out, fan_in]);
        xavier_fill(rng, &mut w, fan_in, out);
        let wid = ps.add(format!("{prefix}layer{l}.w"), w);
        let bid = ps.add(format!("{prefix}layer{l}.b"), Tensor::zeros(&[out]));
        layers.push((wid, bid));
        fan_in = out;
    }
    layers
}

fn init_head(ps: &mut ParamSet, rng: &mut RngState, width: usize) -> (ParamId, ParamId) {
    let mut w = Tensor::zeros(&[1, width]);
    xavier_fill(rng, &mut w, width, 1);
    let out_w = ps.add("out.w".to_string(), w);
    let out_b = ps.add("out.b".to_string(), Tensor::zeros(&[1]));
    (out_w, out_b)
}

fn check_pf(pf: u32) -> Result<()> {
    if pf == 0 {
        return Err(Error::Config("predictive factors must be >= 1".into()));
    }
    Ok(())
}

impl ScorerModel {
    /// Neural matrix factorization: score = σ(w · (p_u ⊙ q_i) + b).
    pub fn gmf(name: &str, num_users: usize, num_items: usize, pf: u32, rng: &mut RngState) -> Result<Self> {
        check_pf(pf)?;
        let mut ps = ParamSet::new();
        let user_table = init_embedding(&mut ps, rng, "user_table".into(), num_users, pf as usize);
        let item_table = init_embedding(&mut ps, rng, "item_table".into(), num_items, pf as usize);
        let (out_w, out_b) = init_head(&mut ps, rng, pf as usize);
        Ok(ScorerModel {
            name: name.to_string(),
            pf,
            params: ps,
            bodies: vec![ComponentBody {
                name: name.to_string(),
                pf,
                arch: BodyArch::Gmf {
                    user_table,
                    item_table,
                },
            }],
            weights: Vec::new(),
            out_w,
            out_b,
        })
    }

    /// Deep interaction tower: embeddings of dim 2pf per side, hidden widths
    /// 4pf → 2pf → pf with ReLU.
    pub fn mlp(name: &str, num_users: usize, num_items: usize, pf: u32, rng: &mut RngState) -> Result<Self> {
        check_pf(pf)?;
        let e = 2 * pf as usize;
        let mut ps = ParamSet::new();
        let user_table = init_embedding(&mut ps, rng, "user_table".into(), num_users, e);
        let item_table = init_embedding(&mut ps, rng, "item_table".into(), num_items, e);
        let widths = [4 * pf as usize, 2 * pf as usize, pf as usize];
        let layers = init_tower(&mut ps, rng, "", 2 * e, &widths);
        let (out_w, out_b) = init_head(&mut ps, rng, pf as usize);
        Ok(ScorerModel {
            name: name.to_string(),
            pf,
            params: ps,
            bodies: vec![ComponentBody {
                name: name.to_string(),
                pf,
                arch: BodyArch::Mlp {
                    user_table,
                    item_table,
                    layers,
                },
            }],
            weights: Vec::new(),
            out_w,
            out_b,
        })
    }

    /// Side-feature scorer: per-feature average-pooled embeddings,
    /// concatenated in declaration order, tower widths 2pf → pf with ReLU.
    pub fn aux(name: &str, specs: &[FeatureSpec], pf: u32, rng: &mut RngState) -> Result<Self> {
        check_pf(pf)?;
        if specs.is_empty() {
            return Err(Error::Config(format!(
                "aux model {name:?} needs at least one feature"
            )));
        }
        let mut seen = BTreeSet::new();
        let mut ps = ParamSet::new();
        let mut features = Vec::with_capacity(specs.len());
        let mut input_width = 0usize;
        for spec in specs {
            spec.validate()?;
            if !seen.insert(spec.name.clone()) {
                return Err(Error::Config(format!(
                    "aux model {name:?}: duplicate feature {:?}",
                    spec.name
                )));
            }
            let table = init_embedding(
                &mut ps,
                rng,
                format!("feature.{}.table", spec.name),
                spec.vocab_size as usize,
                spec.embedding_dim as usize,
            );
            input_width += spec.embedding_dim as usize;
            features.push(AuxFeature {
                spec: spec.clone(),
                table,
            });
        }
        let widths = [2 * pf as usize, pf as usize];
        let layers = init_tower(&mut ps, rng, "", input_width, &widths);
        let (out_w, out_b) = init_head(&mut ps, rng, pf as usize);
        Ok(ScorerModel {
            name: name.to_string(),
            pf,
            params: ps,
            bodies: vec![ComponentBody {
                name: name.to_string(),
                pf,
                arch: BodyArch::Aux { features, layers },
            }],
            weights: Vec::new(),
            out_w,
            out_b,
        })
    }

    pub fn kind(&self) -> ModelKind {
        if self.bodies.len() > 1 {
            ModelKind::Fused
        } else {
            self.bodies[0].kind()
        }
    }

    pub fn is_fused(&self) -> bool {
        self.bodies.len() > 1
    }

    /// Total width of the concatenated predictive factors (head input).
    pub fn factor_width(&self) -> usize {
        self.bodies.iter().map(|b| b.pf as usize).sum()
    }

    /// Whether any body consumes a hashed-text feature (these models train
    /// with smaller batches).
    pub fn uses_text(&self) -> bool {
        self.bodies.iter().any(|b| match &b.arch {
            BodyArch::Aux { features, .. } => features
                .iter()
                .any(|f| f.spec.kind == FeatureKind::Text),
            _ => false,
        })
    }

    /// Whether any body reads from the feature store at all.
    pub fn uses_features(&self) -> bool {
        self.bodies
            .iter()
            .any(|b| matches!(b.arch, BodyArch::Aux { .. }))
    }

    pub fn feature_specs(&self) -> Vec<FeatureSpec> {
        let mut out = Vec::new();
        for b in &self.bodies {
            if let BodyArch::Aux { features, .. } = &b.arch {
                out.extend(features.iter().map(|f| f.spec.clone()));
            }
        }
        out
    }

    /// Verify that every feature this model consumes exists in the store
    /// with an identical spec.
    pub fn validate_store(&self, store: &FeatureStore) -> Result<()> {
        for spec in self.feature_specs() {
            match store.get(&spec.name) {
                None => {
                    return Err(Error::Config(format!(
                        "model {:?} needs feature table {:?} which the store lacks",
                        self.name, spec.name
                    )))
                }
                Some(t) if t.spec != spec => {
                    return Err(Error::Config(format!(
                        "feature table {:?} does not match the spec the model was built with",
                        spec.name
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn body_factors(
        &self,
        g: &mut Graph,
        body: &ComponentBody,
        user: u32,
        item: u32,
        store: &FeatureStore,
    ) -> Result<NodeId> {
        match &body.arch {
            BodyArch::Gmf {
                user_table,
                item_table,
            } => {
                let p = g.lookup_row(&self.params, *user_table, user as usize)?;
                let q = g.lookup_row(&self.params, *item_table, item as usize)?;
                g.mul(p, q)
            }
            BodyArch::Mlp {
                user_table,
                item_table,
                layers,
            } => {
                let p = g.lookup_row(&self.params, *user_table, user as usize)?;
                let q = g.lookup_row(&self.params, *item_table, item as usize)?;
                let mut h = g.concat(&[p, q])?;
                for &(w, b) in layers {
                    h = g.affine(&self.params, w, b, h)?;
                    h = g.relu(h);
                }
                Ok(h)
            }
            BodyArch::Aux { features, layers } => {
                let mut parts = Vec::with_capacity(features.len());
                for f in features {
                    let table = store.get(&f.spec.name).ok_or_else(|| {
                        Error::Config(format!(
                            "missing feature table {:?} for model {:?}",
                            f.spec.name, self.name
                        ))
                    })?;
                    let entity_id = match f.spec.entity {
                        Entity::User => user,
                        Entity::Item => item,
                    };
                    let (indices, mask) = table.row(entity_id)?;
                    parts.push(g.lookup_avg(&self.params, f.table, indices, mask)?);
                }
                let mut h = g.concat(&parts)?;
                for &(w, b) in layers {
                    h = g.affine(&self.params, w, b, h)?;
                    h = g.relu(h);
                }
                Ok(h)
            }
        }
    }

    /// Record the full forward pass on a tape; the returned node is the
    /// sigmoid output, ready for `backward_bce`.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        user: u32,
        item: u32,
        store: &FeatureStore,
    ) -> Result<NodeId> {
        let mut factors = Vec::with_capacity(self.bodies.len());
        for body in &self.bodies {
            factors.push(self.body_factors(g, body, user, item, store)?);
        }
        let joined = if factors.len() == 1 {
            factors[0]
        } else {
            g.concat(&factors)?
        };
        let z = g.affine(&self.params, self.out_w, self.out_b, joined)?;
        Ok(g.sigmoid(z))
    }

    /// Pre-sigmoid score.
    pub fn logit(&self, user: u32, item: u32, store: &FeatureStore) -> Result<f32> {
        let mut g = Graph::new();
        self.forward_graph(&mut g, user, item, store)?;
        g.logit()
    }

    /// Interaction probability in (0, 1).
    pub fn score(&self, user: u32, item: u32, store: &FeatureStore) -> Result<f32> {
        let mut g = Graph::new();
        let out = self.forward_graph(&mut g, user, item, store)?;
        Ok(g.value(out)[0])
    }

    /// Final hidden activation feeding the output head (length `pf` for
    /// simple models, Σ pf_i for fused ones).
    pub fn predictive_factors(
        &self,
        user: u32,
        item: u32,
        store: &FeatureStore,
    ) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let mut factors = Vec::with_capacity(self.bodies.len());
        for body in &self.bodies {
            factors.push(self.body_factors(&mut g, body, user, item, store)?);
        }
        let joined = if factors.len() == 1 {
            factors[0]
        } else {
            g.concat(&factors)?
        };
        Ok(g.value(joined).to_vec())
    }

    /// Freeze every body parameter, leaving only the output head trainable.
    pub fn freeze_bodies(&mut self) {
        let head = [self.out_w, self.out_b];
        for id in self.params.ids().collect::<Vec<_>>() {
            if !head.contains(&id) {
                self.params.set_trainable(id, false);
            }
        }
    }

    pub fn unfreeze_all(&mut self) {
        for id in self.params.ids().collect::<Vec<_>>() {
            self.params.set_trainable(id, true);
        }
    }
}

/// Validate a fusion weight vector: non-negative, summing to 1 within
/// [`WEIGHT_SUM_TOL`].
pub fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::Config(format!(
            "fusion weights must be non-negative and finite, got {weights:?}"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Config(format!(
            "fusion weights must sum to 1 (got {sum}, tolerance {WEIGHT_SUM_TOL})"
        )));
    }
    Ok(())
}

/// Fuse pre-trained simple scorers under one head. Component parameters are
/// copied in verbatim (prefixed by component name); the head starts as the
/// weighted concatenation of the component heads, so the fused logit equals
/// Σ weightᵢ · logitᵢ until fine-tuning.
pub fn fuse(name: &str, components: &[&ScorerModel], weights: &[f64]) -> Result<ScorerModel> {
    if components.len() < 2 {
        return Err(Error::Config(
            "fusion needs at least two components".into(),
        ));
    }
    if components.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} components but {} weights",
            components.len(),
            weights.len()
        )));
    }
    validate_weights(weights)?;
    let mut names = BTreeSet::new();
    for c in components {
        if c.is_fused() {
            return Err(Error::Config(format!(
                "component {:?} is already fused; fuse simple scorers only",
                c.name
            )));
        }
        if !names.insert(c.name.clone()) {
            return Err(Error::Config(format!(
                "duplicate component name {:?}",
                c.name
            )));
        }
    }

    let mut ps = ParamSet::new();
    let mut bodies = Vec::with_capacity(components.len());
    let width: usize = components.iter().map(|c| c.pf as usize).sum();
    let mut head_w = Vec::with_capacity(width);
    let mut head_b = 0.0f64;

    for (comp, &alpha) in components.iter().zip(weights) {
        let body = &comp.bodies[0];
        let prefix = format!("{}.", comp.name);
        // copy the body's parameters, re-keyed into the fused set
        let old_ids = body.param_ids();
        let mut new_ids = Vec::with_capacity(old_ids.len());
        for old in &old_ids {
            let p = comp.params.get(*old);
            new_ids.push(ps.add(format!("{prefix}{}", p.name), p.value.clone()));
        }
        let mut it = new_ids.into_iter();
        let arch = match &body.arch {
            BodyArch::Gmf { .. } => BodyArch::Gmf {
                user_table: it.next().unwrap(),
                item_table: it.next().unwrap(),
            },
            BodyArch::Mlp { layers, .. } => {
                let user_table = it.next().unwrap();
                let item_table = it.next().unwrap();
                let layers = layers
                    .iter()
                    .map(|_| (it.next().unwrap(), it.next().unwrap()))
                    .collect();
                BodyArch::Mlp {
                    user_table,
                    item_table,
                    layers,
                }
            }
            BodyArch::Aux { features, layers } => {
                let features = features
                    .iter()
                    .map(|f| AuxFeature {
                        spec: f.spec.clone(),
                        table: it.next().unwrap(),
                    })
                    .collect();
                let layers = layers
                    .iter()
                    .map(|_| (it.next().unwrap(), it.next().unwrap()))
                    .collect();
                BodyArch::Aux { features, layers }
            }
        };
        bodies.push(ComponentBody {
            name: comp.name.clone(),
            pf: comp.pf,
            arch,
        });
        for &w in comp.params.get(comp.out_w).value.data() {
            head_w.push((alpha * w as f64) as f32);
        }
        head_b += alpha * comp.params.get(comp.out_b).value.data()[0] as f64;
    }

    let out_w = ps.add(
        "out.w".to_string(),
        Tensor::from_vec(&[1, width], head_w)?,
    );
    let out_b = ps.add(
        "out.b".to_string(),
        Tensor::from_vec(&[1], vec![head_b as f32])?,
    );
    let pf = components.iter().map(|c| c.pf).max().unwrap_or(1);
    Ok(ScorerModel {
        name: name.to_string(),
        pf,
        params: ps,
        bodies,
        weights: weights.to_vec(),
        out_w,
        out_b,
    })
}
