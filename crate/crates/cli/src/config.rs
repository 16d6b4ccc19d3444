//! Experiment configuration: one TOML file describing the dataset, the
//! feature encoders, the models to pretrain, and every training / evaluation
//! hyperparameter (reference defaults built in).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use nhr_core::data::features::{Entity, FeatureKind};
use nhr_core::data::interactions::LogFormat;
use nhr_core::training::{ComponentPlan, TrainConfig};
use nhr_core::{Error, Result};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Predictive factors: the shared final-hidden-layer width.
    #[serde(default = "default_pf")]
    pub pf: u32,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub data: DataSection,
    #[serde(default, rename = "feature")]
    pub features: Vec<FeatureSection>,
    #[serde(default, rename = "model")]
    pub models: Vec<ModelSection>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default, rename = "fusion")]
    pub fusions: Vec<FusionSection>,
    #[serde(default)]
    pub baselines: BaselineSection,
}

fn default_seed() -> u64 {
    42
}
fn default_pf() -> u32 {
    8
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub interactions: PathBuf,
    /// `movielens_dat` or `tsv`.
    pub format: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSection {
    pub name: String,
    /// `user` or `item`.
    pub entity: String,
    /// `categorical` or `text`.
    pub kind: String,
    pub embedding_dim: u32,
    /// Categorical: TSV of `raw_id<TAB>feature_name<TAB>value`.
    pub values: Option<PathBuf>,
    /// Text: directory of `<raw_id>.txt` files.
    pub dir: Option<PathBuf>,
    /// Text hash space H (default 1000).
    pub hash_space: Option<u32>,
    /// Fixed sequence length; derived from the data when absent.
    pub input_length: Option<u32>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    /// `gmf`, `mlp`, or `aux`.
    pub kind: String,
    /// Aux only: names of declared features to consume.
    #[serde(default)]
    pub features: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    /// Batch size for models that touch text features.
    pub text_batch_size: usize,
    pub negative_ratio: u32,
    pub max_epochs: u32,
    pub patience: u32,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            lr: d.lr,
            beta1: d.beta1,
            beta2: d.beta2,
            eps: d.eps,
            batch_size: d.batch_size,
            text_batch_size: d.text_batch_size,
            negative_ratio: d.negative_ratio,
            max_epochs: d.max_epochs,
            patience: d.patience,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k: usize,
    /// Sampled negatives per held-out interaction.
    pub negatives: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: 10,
            negatives: 100,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    pub name: String,
    /// Pretrained model names to fuse (>= 2).
    pub components: Vec<String>,
    /// Simplex grid resolution for the weight search.
    #[serde(default = "default_step")]
    pub step: f64,
    /// Skip the search and use these weights directly.
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub finetune: bool,
    /// Fine-tune only the fused output head.
    #[serde(default)]
    pub freeze_bodies: bool,
}

fn default_step() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    #[serde(default)]
    pub bpr: BprSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BprSection {
    /// Latent dimension; defaults to pf.
    pub d: Option<u32>,
    pub lr: f32,
    pub reg: f32,
    pub epochs: u32,
    pub triples_per_epoch: Option<usize>,
}

impl Default for BprSection {
    fn default() -> Self {
        BprSection {
            d: None,
            lr: 0.01,
            reg: 0.01,
            epochs: 30,
            triples_per_epoch: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub k: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = out.clone();
        }
        if let Some(k) = overrides.k {
            cfg.eval.k = k;
        }
        // paths in the file are relative to the file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.interactions = base.join(&cfg.data.interactions);
        for f in &mut cfg.features {
            if let Some(v) = &f.values {
                f.values = Some(base.join(v));
            }
            if let Some(d) = &f.dir {
                f.dir = Some(base.join(d));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pf < 1 {
            return Err(Error::Config("pf must be >= 1".into()));
        }
        LogFormat::from_name(&self.data.format)?;
        if !self.data.interactions.exists() {
            return Err(Error::Config(format!(
                "interactions file {} does not exist",
                self.data.interactions.display()
            )));
        }

        let mut feature_names = BTreeSet::new();
        for f in &self.features {
            if !feature_names.insert(f.name.as_str()) {
                return Err(Error::Config(format!("duplicate feature {:?}", f.name)));
            }
            Entity::from_name(&f.entity)
                .map_err(|e| Error::Config(format!("feature {:?}: {e}", f.name)))?;
            let kind = FeatureKind::from_name(&f.kind)
                .map_err(|e| Error::Config(format!("feature {:?}: {e}", f.name)))?;
            if f.embedding_dim < 1 {
                return Err(Error::Config(format!(
                    "feature {:?}: embedding_dim must be >= 1",
                    f.name
                )));
            }
            match kind {
                FeatureKind::Categorical => {
                    let path = f.values.as_ref().ok_or_else(|| {
                        Error::Config(format!(
                            "categorical feature {:?} needs a `values` TSV",
                            f.name
                        ))
                    })?;
                    if !path.exists() {
                        return Err(Error::Config(format!(
                            "feature {:?}: values file {} does not exist",
                            f.name,
                            path.display()
                        )));
                    }
                    if f.dir.is_some() || f.hash_space.is_some() {
                        return Err(Error::Config(format!(
                            "feature {:?}: `dir`/`hash_space` apply to text features only",
                            f.name
                        )));
                    }
                }
                FeatureKind::Text => {
                    let dir = f.dir.as_ref().ok_or_else(|| {
                        Error::Config(format!("text feature {:?} needs a `dir`", f.name))
                    })?;
                    if !dir.is_dir() {
                        return Err(Error::Config(format!(
                            "feature {:?}: text directory {} does not exist",
                            f.name,
                            dir.display()
                        )));
                    }
                    if f.values.is_some() {
                        return Err(Error::Config(format!(
                            "feature {:?}: `values` applies to categorical features only",
                            f.name
                        )));
                    }
                    if let Some(h) = f.hash_space {
                        if h < 2 {
                            return Err(Error::Config(format!(
                                "feature {:?}: hash_space must be >= 2",
                                f.name
                            )));
                        }
                    }
                }
            }
        }

        let mut model_names = BTreeSet::new();
        for m in &self.models {
            if !model_names.insert(m.name.as_str()) {
                return Err(Error::Config(format!("duplicate model {:?}", m.name)));
            }
            match m.kind.as_str() {
                "gmf" | "mlp" => {
                    if !m.features.is_empty() {
                        return Err(Error::Config(format!(
                            "model {:?}: only aux models take features",
                            m.name
                        )));
                    }
                }
                "aux" => {
                    if m.features.is_empty() {
                        return Err(Error::Config(format!(
                            "aux model {:?} needs at least one feature",
                            m.name
                        )));
                    }
                    for f in &m.features {
                        if !feature_names.contains(f.as_str()) {
                            return Err(Error::Config(format!(
                                "model {:?} references undeclared feature {f:?}",
                                m.name
                            )));
                        }
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "model {:?}: unknown kind {other:?} (expected gmf, mlp, or aux)",
                        m.name
                    )));
                }
            }
        }

        let mut fusion_names = BTreeSet::new();
        for fu in &self.fusions {
            if !fusion_names.insert(fu.name.as_str()) || model_names.contains(fu.name.as_str()) {
                return Err(Error::Config(format!(
                    "fusion name {:?} is not unique",
                    fu.name
                )));
            }
            if fu.components.len() < 2 {
                return Err(Error::Config(format!(
                    "fusion {:?} needs at least two components",
                    fu.name
                )));
            }
            for c in &fu.components {
                if !model_names.contains(c.as_str()) {
                    return Err(Error::Config(format!(
                        "fusion {:?} references undeclared model {c:?}",
                        fu.name
                    )));
                }
            }
            if let Some(w) = &fu.weights {
                if w.len() != fu.components.len() {
                    return Err(Error::Config(format!(
                        "fusion {:?}: {} weights for {} components",
                        fu.name,
                        w.len(),
                        fu.components.len()
                    )));
                }
            }
            if !(fu.step > 0.0 && fu.step <= 1.0) {
                return Err(Error::Config(format!(
                    "fusion {:?}: bad grid step {}",
                    fu.name, fu.step
                )));
            }
        }

        if self.eval.k < 1 || self.eval.negatives < 1 {
            return Err(Error::Config("eval.k and eval.negatives must be >= 1".into()));
        }
        self.train_config().validate()
    }

    pub fn format(&self) -> LogFormat {
        LogFormat::from_name(&self.data.format).expect("validated")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            pf: self.pf,
            lr: self.train.lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            eps: self.train.eps,
            batch_size: self.train.batch_size,
            text_batch_size: self.train.text_batch_size,
            negative_ratio: self.train.negative_ratio,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            eval_k: self.eval.k,
            seed: self.seed,
        }
    }

    pub fn component_plans(&self) -> Vec<ComponentPlan> {
        self.models
            .iter()
            .map(|m| match m.kind.as_str() {
                "gmf" => ComponentPlan::Gmf {
                    name: m.name.clone(),
                },
                "mlp" => ComponentPlan::Mlp {
                    name: m.name.clone(),
                },
                _ => ComponentPlan::Aux {
                    name: m.name.clone(),
                    features: m.features.clone(),
                },
            })
            .collect()
    }
}
