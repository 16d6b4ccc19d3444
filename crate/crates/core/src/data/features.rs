//! Side-feature encoding: categorical labels and hashed text.
//!
//! Both kinds end up in the same shape — per entity, a fixed-length list of
//! embedding indices plus a validity mask — so the feature networks can treat
//! them uniformly. Index 0 is always padding and is never produced for live
//! tokens; categorical vocabularies reserve their top index for
//! unseen-at-build labels.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;

use super::interactions::IdRemap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entity {
    User,
    Item,
}

impl Entity {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "user" => Ok(Entity::User),
            "item" => Ok(Entity::Item),
            other => Err(Error::Config(format!(
                "unknown entity {other:?} (expected user or item)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Text,
}

impl FeatureKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "categorical" => Ok(FeatureKind::Categorical),
            "text" => Ok(FeatureKind::Text),
            other => Err(Error::Config(format!(
                "unknown feature kind {other:?} (expected categorical or text)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub entity: Entity,
    pub kind: FeatureKind,
    /// Embedding table height; index 0 is padding, and for categorical
    /// features index `vocab_size - 1` is the out-of-vocabulary slot.
    pub vocab_size: u32,
    pub input_length: u32,
    pub embedding_dim: u32,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config(format!(
                "feature {}: vocab_size must be >= 2 (index 0 is reserved padding)",
                self.name
            )));
        }
        if self.input_length < 1 {
            return Err(Error::Config(format!(
                "feature {}: input_length must be >= 1",
                self.name
            )));
        }
        if self.embedding_dim < 1 {
            return Err(Error::Config(format!(
                "feature {}: embedding_dim must be >= 1",
                self.name
            )));
        }
        Ok(())
    }
}

/// Frozen label → index table for categorical features. Labels are indexed
/// in sorted order starting at 1; unseen labels map to the dedicated OOV
/// index `vocab_size - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalVocab {
    map: BTreeMap<String, u32>,
    vocab_size: u32,
}

impl CategoricalVocab {
    pub fn build<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let uniq: BTreeSet<&str> = labels.into_iter().collect();
        let map: BTreeMap<String, u32> = uniq
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s.to_string(), i as u32 + 1))
            .collect();
        let vocab_size = map.len() as u32 + 2; // padding + labels + OOV
        CategoricalVocab { map, vocab_size }
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn oov_index(&self) -> u32 {
        self.vocab_size - 1
    }

    pub fn index(&self, label: &str) -> u32 {
        self.map.get(label).copied().unwrap_or(self.oov_index())
    }

    pub fn labels(&self) -> impl Iterator<Item = (&str, u32)> {
        self.map.iter().map(|(s, &i)| (s.as_str(), i))
    }
}

/// Tokenize and hash text into the feature index space [1, H).
/// Lowercased, split on runs of non-alphanumeric characters, each token
/// hashed with FNV-1a 64 and folded to `1 + (hash mod (H - 1))` so that 0
/// stays reserved for padding. Token order is preserved.
pub fn hash_text(text: &str, hash_space: u32) -> Vec<u32> {
    debug_assert!(hash_space >= 2, "hash space must leave room for padding");
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| 1 + (fnv1a64(t.as_bytes()) % (hash_space as u64 - 1)) as u32)
        .collect()
}

/// Fixed input length from observed sequence lengths: ceil(μ + σ) with the
/// population standard deviation, floored at 1.
pub fn compute_input_length(lengths: &[usize]) -> Result<u32> {
    if lengths.is_empty() {
        return Err(Error::Config(
            "cannot compute input length from zero observed values".into(),
        ));
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / n;
    let var = lengths
        .iter()
        .map(|&l| (l as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(((mean + var.sqrt()).ceil() as u32).max(1))
}

/// Pad with zeros (mask false) or keep the first `len` entries.
pub fn pad_or_truncate(seq: &[u32], len: u32) -> (Vec<u32>, Vec<u8>) {
    let len = len as usize;
    let keep = seq.len().min(len);
    let mut indices = Vec::with_capacity(len);
    let mut mask = Vec::with_capacity(len);
    indices.extend_from_slice(&seq[..keep]);
    mask.extend(std::iter::repeat_n(1u8, keep));
    indices.resize(len, 0);
    mask.resize(len, 0);
    (indices, mask)
}

/// One feature's encoded rows for every entity, flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub spec: FeatureSpec,
    num_entities: usize,
    indices: Vec<u32>,
    mask: Vec<u8>,
}

impl FeatureTable {
    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn row(&self, entity: u32) -> Result<(&[u32], &[u8])> {
        let e = entity as usize;
        if e >= self.num_entities {
            return Err(Error::Lookup {
                what: "feature row",
                index: e,
                size: self.num_entities,
            });
        }
        let w = self.spec.input_length as usize;
        Ok((&self.indices[e * w..(e + 1) * w], &self.mask[e * w..(e + 1) * w]))
    }

    fn from_rows(
        spec: FeatureSpec,
        num_entities: usize,
        rows: impl Iterator<Item = (u32, Vec<u32>)>,
    ) -> Result<Self> {
        spec.validate()?;
        let w = spec.input_length as usize;
        let mut indices = vec![0u32; num_entities * w];
        let mut mask = vec![0u8; num_entities * w];
        for (entity, seq) in rows {
            let e = entity as usize;
            if e >= num_entities {
                return Err(Error::Lookup {
                    what: "feature entity",
                    index: e,
                    size: num_entities,
                });
            }
            for &idx in &seq {
                if idx == 0 || idx >= spec.vocab_size {
                    return Err(Error::Config(format!(
                        "feature {}: index {} outside live range [1, {})",
                        spec.name, idx, spec.vocab_size
                    )));
                }
            }
            let (ind, msk) = pad_or_truncate(&seq, spec.input_length);
            indices[e * w..(e + 1) * w].copy_from_slice(&ind);
            mask[e * w..(e + 1) * w].copy_from_slice(&msk);
        }
        Ok(FeatureTable {
            spec,
            num_entities,
            indices,
            mask,
        })
    }

    /// TSV export: `dense_id<TAB>i,i,...<TAB>m,m,...`, one line per entity.
    pub fn write_tsv(&self, w: &mut impl Write) -> Result<()> {
        for e in 0..self.num_entities {
            let (ind, msk) = self.row(e as u32)?;
            let ind: Vec<String> = ind.iter().map(|i| i.to_string()).collect();
            let msk: Vec<String> = msk.iter().map(|m| m.to_string()).collect();
            writeln!(w, "{e}\t{}\t{}", ind.join(","), msk.join(","))?;
        }
        Ok(())
    }

    pub fn read_tsv(spec: FeatureSpec, num_entities: usize, r: impl BufRead) -> Result<Self> {
        spec.validate()?;
        let w = spec.input_length as usize;
        let mut indices = vec![0u32; num_entities * w];
        let mut mask = vec![0u8; num_entities * w];
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                path: format!("<feature {}>", spec.name),
                line: lineno + 1,
                message: "expected dense_id<TAB>indices<TAB>mask".into(),
            };
            let mut parts = line.split('\t');
            let e: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let ind: Vec<u32> = parts
                .next()
                .ok_or_else(bad)?
                .split(',')
                .map(|s| s.parse::<u32>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            let msk: Vec<u8> = parts
                .next()
                .ok_or_else(bad)?
                .split(',')
                .map(|s| s.parse::<u8>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if e >= num_entities || ind.len() != w || msk.len() != w {
                return Err(bad());
            }
            indices[e * w..(e + 1) * w].copy_from_slice(&ind);
            mask[e * w..(e + 1) * w].copy_from_slice(&msk);
        }
        Ok(FeatureTable {
            spec,
            num_entities,
            indices,
            mask,
        })
    }
}

/// Multi-label values keyed by dense entity id.
pub type LabelMap = BTreeMap<u32, Vec<String>>;

/// Encode categorical label lists through a frozen vocabulary. When
/// `input_length` is absent it defaults to the longest observed label list.
pub fn build_categorical_table(
    name: &str,
    entity: Entity,
    num_entities: usize,
    values: &LabelMap,
    vocab: &CategoricalVocab,
    input_length: Option<u32>,
    embedding_dim: u32,
) -> Result<FeatureTable> {
    let input_length = match input_length {
        Some(l) => l,
        None => values
            .values()
            .map(|v| v.len() as u32)
            .max()
            .unwrap_or(1)
            .max(1),
    };
    let spec = FeatureSpec {
        name: name.to_string(),
        entity,
        kind: FeatureKind::Categorical,
        vocab_size: vocab.vocab_size(),
        input_length,
        embedding_dim,
    };
    FeatureTable::from_rows(
        spec,
        num_entities,
        values
            .iter()
            .map(|(&e, labels)| (e, labels.iter().map(|l| vocab.index(l)).collect())),
    )
}

/// Hash raw texts into a fixed-length index table. When `input_length` is
/// absent it is derived from the observed token counts as ceil(μ + σ).
pub fn build_text_table(
    name: &str,
    entity: Entity,
    num_entities: usize,
    values: &BTreeMap<u32, String>,
    hash_space: u32,
    input_length: Option<u32>,
    embedding_dim: u32,
) -> Result<FeatureTable> {
    if hash_space < 2 {
        return Err(Error::Config(format!(
            "feature {name}: hash space must be >= 2"
        )));
    }
    let hashed: BTreeMap<u32, Vec<u32>> = values
        .iter()
        .map(|(&e, text)| (e, hash_text(text, hash_space)))
        .collect();
    let input_length = match input_length {
        Some(l) => l,
        None => {
            let lengths: Vec<usize> = hashed.values().map(|s| s.len()).collect();
            compute_input_length(&lengths)?
        }
    };
    let spec = FeatureSpec {
        name: name.to_string(),
        entity,
        kind: FeatureKind::Text,
        vocab_size: hash_space,
        input_length,
        embedding_dim,
    };
    FeatureTable::from_rows(spec, num_entities, hashed.into_iter())
}

/// All encoded features of an experiment, addressable by name.
#[derive(Clone, Debug, Default)]
pub struct FeatureStore {
    tables: Vec<FeatureTable>,
}

impl FeatureStore {
    pub fn new() -> Self {
        FeatureStore::default()
    }

    pub fn push(&mut self, table: FeatureTable) -> Result<()> {
        if self.get(&table.spec.name).is_some() {
            return Err(Error::Config(format!(
                "duplicate feature name {:?}",
                table.spec.name
            )));
        }
        self.tables.push(table);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&FeatureTable> {
        self.tables.iter().find(|t| t.spec.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureTable> {
        self.tables.iter()
    }

    pub fn specs(&self) -> Vec<FeatureSpec> {
        self.tables.iter().map(|t| t.spec.clone()).collect()
    }
}

/// Parse `entity_raw_id<TAB>feature_name<TAB>value` lines into per-feature
/// label lists (repeated lines accumulate multi-label values). Entities
/// absent from the remap are skipped and counted.
pub fn load_categorical_tsv(
    r: impl BufRead,
    path: &str,
    remap: &IdRemap,
) -> Result<(BTreeMap<String, LabelMap>, usize)> {
    let mut by_feature: BTreeMap<String, LabelMap> = BTreeMap::new();
    let mut skipped = 0usize;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (raw, feature, value) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) if !a.is_empty() && !b.is_empty() => (a, b, c),
            _ => {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: lineno + 1,
                    message: "expected entity_raw_id<TAB>feature_name<TAB>value".into(),
                })
            }
        };
        match remap.dense(raw) {
            Some(dense) => by_feature
                .entry(feature.to_string())
                .or_default()
                .entry(dense)
                .or_default()
                .push(value.to_string()),
            None => skipped += 1,
        }
    }
    Ok((by_feature, skipped))
}

/// Read `<raw_id>.txt` files from a directory into a per-entity text map.
/// Files whose stem is not in the remap are skipped and counted.
pub fn load_text_dir(dir: &Path, remap: &IdRemap) -> Result<(BTreeMap<u32, String>, usize)> {
    let mut out = BTreeMap::new();
    let mut skipped = 0usize;
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    for path in entries {
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let stem = match path.file_stem().and_then(|s| s.to_str()) {
            Some(s) => s,
            None => continue,
        };
        match remap.dense(stem) {
            Some(dense) => {
                out.insert(dense, std::fs::read_to_string(&path)?);
            }
            None => skipped += 1,
        }
    }
    Ok((out, skipped))
}
