//! Binary model checkpoints.
//!
//! Layout: magic `NHR1`, format version, model-kind tag, model name and pf,
//! per-body structural descriptors (kind, id-space sizes, feature specs),
//! fusion weights (f64), then one record per parameter: name, rank, dims,
//! little-endian f32 payload. Parameters are written in insertion order and
//! restored the same way, so save → load → save is byte-identical.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::features::{Entity, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};
use crate::param::ParamSet;
use crate::tensor::Tensor;

use super::{AuxFeature, BodyArch, ComponentBody, ModelKind, ScorerModel};

pub const MAGIC: &[u8; 4] = b"NHR1";
pub const VERSION: u32 = 1;

pub const KIND_GMF: u32 = 0;
pub const KIND_MLP: u32 = 1;
pub const KIND_AUX: u32 = 2;
pub const KIND_FUSED: u32 = 3;
pub const KIND_POPRANK: u32 = 4;
pub const KIND_BPR: u32 = 5;

pub(crate) fn kind_tag(kind: ModelKind) -> u32 {
    match kind {
        ModelKind::Gmf => KIND_GMF,
        ModelKind::Mlp => KIND_MLP,
        ModelKind::Aux => KIND_AUX,
        ModelKind::Fused => KIND_FUSED,
    }
}

pub(crate) fn kind_name(tag: u32) -> &'static str {
    match tag {
        KIND_GMF => "gmf",
        KIND_MLP => "mlp",
        KIND_AUX => "aux",
        KIND_FUSED => "fused",
        KIND_POPRANK => "poprank",
        KIND_BPR => "bpr",
        _ => "unknown",
    }
}

/// Kind tag of a checkpoint file without decoding the body; lets callers
/// dispatch between neural and baseline loaders.
pub fn peek_kind(path: &Path) -> Result<u32> {
    let bytes = std::fs::read(path)?;
    let mut r = bytes.as_slice();
    let magic = r_bytes(&mut r, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let kind = r_u32(&mut r, "kind")?;
    if kind > KIND_BPR {
        return Err(Error::Checkpoint(format!("unknown model kind {kind}")));
    }
    Ok(kind)
}

// --- wire helpers (shared with baseline checkpoints) ---

pub(crate) fn w_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn w_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn w_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn w_str(w: &mut impl Write, s: &str) -> Result<()> {
    w_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn w_f32s(w: &mut impl Write, vs: &[f32]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn truncated(what: &str) -> Error {
    Error::Checkpoint(format!("truncated file while reading {what}"))
}

pub(crate) fn r_bytes(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|_| truncated(what))?;
    Ok(buf)
}

pub(crate) fn r_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let b = r_bytes(r, 4, what)?;
    Ok(u32::from_le_bytes(b.try_into().unwrap()))
}

pub(crate) fn r_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let b = r_bytes(r, 8, what)?;
    Ok(u64::from_le_bytes(b.try_into().unwrap()))
}

pub(crate) fn r_f64(r: &mut impl Read, what: &str) -> Result<f64> {
    let b = r_bytes(r, 8, what)?;
    Ok(f64::from_le_bytes(b.try_into().unwrap()))
}

pub(crate) fn r_str(r: &mut impl Read, what: &str) -> Result<String> {
    let n = r_u32(r, what)? as usize;
    if n > 1 << 20 {
        return Err(Error::Checkpoint(format!(
            "implausible string length {n} while reading {what}"
        )));
    }
    let b = r_bytes(r, n, what)?;
    String::from_utf8(b)
        .map_err(|_| Error::Checkpoint(format!("non-UTF-8 string while reading {what}")))
}

pub(crate) fn r_f32s(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<f32>> {
    let b = r_bytes(r, n * 4, what)?;
    Ok(b.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub(crate) fn write_params(w: &mut impl Write, ps: &ParamSet) -> Result<()> {
    w_u32(w, ps.len() as u32)?;
    for (_, p) in ps.iter() {
        w_str(w, &p.name)?;
        w_u32(w, p.value.shape().len() as u32)?;
        for &d in p.value.shape() {
            w_u32(w, d as u32)?;
        }
        w_f32s(w, p.value.data())?;
    }
    Ok(())
}

pub(crate) fn read_params(r: &mut impl Read) -> Result<ParamSet> {
    let count = r_u32(r, "parameter count")?;
    let mut ps = ParamSet::new();
    for _ in 0..count {
        let name = r_str(r, "parameter name")?;
        let rank = r_u32(r, "parameter rank")? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!(
                "implausible rank {rank} for parameter {name}"
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r_u32(r, "parameter dims")? as usize);
        }
        let n: usize = shape.iter().product();
        if n > 1 << 28 {
            return Err(Error::Checkpoint(format!(
                "implausible size {n} for parameter {name}"
            )));
        }
        let data = r_f32s(r, n, "parameter payload")?;
        if ps.by_name(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate parameter {name}")));
        }
        ps.add(name, Tensor::from_vec(&shape, data)?);
    }
    Ok(ps)
}

fn entity_tag(e: Entity) -> u8 {
    match e {
        Entity::User => 0,
        Entity::Item => 1,
    }
}

fn feature_kind_tag(k: FeatureKind) -> u8 {
    match k {
        FeatureKind::Categorical => 0,
        FeatureKind::Text => 1,
    }
}

fn write_spec(w: &mut impl Write, s: &FeatureSpec) -> Result<()> {
    w_str(w, &s.name)?;
    w.write_all(&[entity_tag(s.entity), feature_kind_tag(s.kind)])?;
    w_u32(w, s.vocab_size)?;
    w_u32(w, s.input_length)?;
    w_u32(w, s.embedding_dim)?;
    Ok(())
}

fn read_spec(r: &mut impl Read) -> Result<FeatureSpec> {
    let name = r_str(r, "feature spec name")?;
    let tags = r_bytes(r, 2, "feature spec tags")?;
    let entity = match tags[0] {
        0 => Entity::User,
        1 => Entity::Item,
        t => return Err(Error::Checkpoint(format!("bad entity tag {t}"))),
    };
    let kind = match tags[1] {
        0 => FeatureKind::Categorical,
        1 => FeatureKind::Text,
        t => return Err(Error::Checkpoint(format!("bad feature kind tag {t}"))),
    };
    Ok(FeatureSpec {
        name,
        entity,
        kind,
        vocab_size: r_u32(r, "vocab size")?,
        input_length: r_u32(r, "input length")?,
        embedding_dim: r_u32(r, "embedding dim")?,
    })
}

struct BodyDesc {
    name: String,
    kind: u32,
    pf: u32,
    num_users: u32,
    num_items: u32,
    specs: Vec<FeatureSpec>,
}

fn body_desc(model: &ScorerModel, body: &ComponentBody) -> BodyDesc {
    let (num_users, num_items, specs) = match &body.arch {
        BodyArch::Gmf {
            user_table,
            item_table,
        }
        | BodyArch::Mlp {
            user_table,
            item_table,
            ..
        } => (
            model.params.get(*user_table).value.shape()[0] as u32,
            model.params.get(*item_table).value.shape()[0] as u32,
            Vec::new(),
        ),
        BodyArch::Aux { features, .. } => {
            (0, 0, features.iter().map(|f| f.spec.clone()).collect())
        }
    };
    BodyDesc {
        name: body.name.clone(),
        kind: kind_tag(body.kind()),
        pf: body.pf,
        num_users,
        num_items,
        specs,
    }
}

pub fn to_bytes(model: &ScorerModel) -> Result<Vec<u8>> {
    let mut w = Vec::new();
    w.write_all(MAGIC)?;
    w_u32(&mut w, VERSION)?;
    w_u32(&mut w, kind_tag(model.kind()))?;
    w_str(&mut w, &model.name)?;
    w_u32(&mut w, model.pf)?;
    w_u32(&mut w, model.bodies.len() as u32)?;
    for body in &model.bodies {
        let d = body_desc(model, body);
        w_str(&mut w, &d.name)?;
        w_u32(&mut w, d.kind)?;
        w_u32(&mut w, d.pf)?;
        w_u32(&mut w, d.num_users)?;
        w_u32(&mut w, d.num_items)?;
        w_u32(&mut w, d.specs.len() as u32)?;
        for s in &d.specs {
            write_spec(&mut w, s)?;
        }
    }
    w_u32(&mut w, model.weights.len() as u32)?;
    for &a in &model.weights {
        w_f64(&mut w, a)?;
    }
    write_params(&mut w, &model.params)?;
    Ok(w)
}

/// Look a parameter up by name and validate its shape.
fn wire_param(ps: &ParamSet, name: &str, shape: &[usize]) -> Result<crate::param::ParamId> {
    let id = ps
        .by_name(name)
        .ok_or_else(|| Error::Checkpoint(format!("checkpoint lacks parameter {name}")))?;
    let got = ps.get(id).value.shape();
    if got != shape {
        return Err(Error::Checkpoint(format!(
            "parameter {name} has shape {got:?}, expected {shape:?}"
        )));
    }
    Ok(id)
}

fn wire_tower(
    ps: &ParamSet,
    prefix: &str,
    mut fan_in: usize,
    widths: &[usize],
) -> Result<Vec<(crate::param::ParamId, crate::param::ParamId)>> {
    let mut layers = Vec::with_capacity(widths.len());
    for (l, &out) in widths.iter().enumerate() {
        let w = wire_param(ps, &format!("{prefix}layer{l}.w"), &[out, fan_in])?;
        let b = wire_param(ps, &format!("{prefix}layer{l}.b"), &[out])?;
        layers.push((w, b));
        fan_in = out;
    }
    Ok(layers)
}

fn wire_body(ps: &ParamSet, d: &BodyDesc, prefix: &str) -> Result<ComponentBody> {
    let pf = d.pf as usize;
    let arch = match d.kind {
        KIND_GMF => BodyArch::Gmf {
            user_table: wire_param(ps, &format!("{prefix}user_table"), &[d.num_users as usize, pf])?,
            item_table: wire_param(ps, &format!("{prefix}item_table"), &[d.num_items as usize, pf])?,
        },
        KIND_MLP => BodyArch::Mlp {
            user_table: wire_param(
                ps,
                &format!("{prefix}user_table"),
                &[d.num_users as usize, 2 * pf],
            )?,
            item_table: wire_param(
                ps,
                &format!("{prefix}item_table"),
                &[d.num_items as usize, 2 * pf],
            )?,
            layers: wire_tower(ps, prefix, 4 * pf, &[4 * pf, 2 * pf, pf])?,
        },
        KIND_AUX => {
            let mut features = Vec::with_capacity(d.specs.len());
            let mut width = 0usize;
            for s in &d.specs {
                let table = wire_param(
                    ps,
                    &format!("{prefix}feature.{}.table", s.name),
                    &[s.vocab_size as usize, s.embedding_dim as usize],
                )?;
                width += s.embedding_dim as usize;
                features.push(AuxFeature {
                    spec: s.clone(),
                    table,
                });
            }
            BodyArch::Aux {
                features,
                layers: wire_tower(ps, prefix, width, &[2 * pf, pf])?,
            }
        }
        other => {
            return Err(Error::Checkpoint(format!(
                "body kind tag {other} is not a scorer body"
            )))
        }
    };
    Ok(ComponentBody {
        name: d.name.clone(),
        pf: d.pf,
        arch,
    })
}

pub fn from_bytes(bytes: &[u8]) -> Result<ScorerModel> {
    let mut r = bytes;
    let magic = r_bytes(&mut r, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}; not a model checkpoint"
        )));
    }
    let version = r_u32(&mut r, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (supported: {VERSION})"
        )));
    }
    let kind = r_u32(&mut r, "model kind")?;
    if !matches!(kind, KIND_GMF | KIND_MLP | KIND_AUX | KIND_FUSED) {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds a {} model, not a scorer",
            kind_name(kind)
        )));
    }
    let name = r_str(&mut r, "model name")?;
    let pf = r_u32(&mut r, "pf")?;
    let num_bodies = r_u32(&mut r, "body count")? as usize;
    if num_bodies == 0 || num_bodies > 64 {
        return Err(Error::Checkpoint(format!(
            "implausible body count {num_bodies}"
        )));
    }
    if (kind == KIND_FUSED) != (num_bodies > 1) {
        return Err(Error::Checkpoint(format!(
            "kind {} disagrees with body count {num_bodies}",
            kind_name(kind)
        )));
    }
    let mut descs = Vec::with_capacity(num_bodies);
    for _ in 0..num_bodies {
        let name = r_str(&mut r, "body name")?;
        let kind = r_u32(&mut r, "body kind")?;
        let pf = r_u32(&mut r, "body pf")?;
        let num_users = r_u32(&mut r, "body num_users")?;
        let num_items = r_u32(&mut r, "body num_items")?;
        let num_specs = r_u32(&mut r, "body spec count")? as usize;
        if num_specs > 256 {
            return Err(Error::Checkpoint(format!(
                "implausible spec count {num_specs}"
            )));
        }
        let mut specs = Vec::with_capacity(num_specs);
        for _ in 0..num_specs {
            specs.push(read_spec(&mut r)?);
        }
        descs.push(BodyDesc {
            name,
            kind,
            pf,
            num_users,
            num_items,
            specs,
        });
    }
    let num_weights = r_u32(&mut r, "weight count")? as usize;
    let mut weights = Vec::with_capacity(num_weights);
    for _ in 0..num_weights {
        weights.push(r_f64(&mut r, "fusion weight")?);
    }
    if num_bodies > 1 && weights.len() != num_bodies {
        return Err(Error::Checkpoint(format!(
            "{num_bodies} bodies but {} fusion weights",
            weights.len()
        )));
    }
    let ps = read_params(&mut r)?;
    if !r.is_empty() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after parameters",
            r.len()
        )));
    }

    let fused = num_bodies > 1;
    let mut bodies = Vec::with_capacity(num_bodies);
    let mut expected = 2usize; // out.w, out.b
    for d in &descs {
        let prefix = if fused {
            format!("{}.", d.name)
        } else {
            String::new()
        };
        let body = wire_body(&ps, d, &prefix)?;
        expected += body.param_ids().len();
        bodies.push(body);
    }
    let width: usize = descs.iter().map(|d| d.pf as usize).sum();
    let out_w = wire_param(&ps, "out.w", &[1, width])?;
    let out_b = wire_param(&ps, "out.b", &[1])?;
    if ps.len() != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model wiring expects {expected}",
            ps.len()
        )));
    }
    let model = ScorerModel {
        name,
        pf,
        params: ps,
        bodies,
        weights,
        out_w,
        out_b,
    };
    if kind_tag(model.kind()) != kind {
        return Err(Error::Checkpoint(format!(
            "reconstructed kind {} disagrees with header {}",
            model.kind().name(),
            kind_name(kind)
        )));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &ScorerModel, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ScorerModel> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Checkpoint(format!("cannot read {}: {e}", path.display()))
    })?;
    from_bytes(&bytes)
}

/// Load and require a specific model kind (e.g. refuse a GMF checkpoint
/// where an MLP is expected).
pub fn load_checkpoint_as(path: &Path, kind: ModelKind) -> Result<ScorerModel> {
    let model = load_checkpoint(path)?;
    if model.kind() != kind {
        return Err(Error::Checkpoint(format!(
            "{}: expected a {} model, found {}",
            path.display(),
            kind.name(),
            model.kind().name()
        )));
    }
    Ok(model)
}
