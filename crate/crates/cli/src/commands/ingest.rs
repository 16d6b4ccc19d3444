//! Parse the raw interaction log, hold out val/test per user, encode the
//! declared features, sample fixed candidate sets, and write the manifest.

use std::collections::BTreeMap;
use std::io::BufReader;

use nhr_core::data::features::{
    build_categorical_table, build_text_table, load_categorical_tsv, load_text_dir,
    CategoricalVocab, Entity, FeatureKind, FeatureStore,
};
use nhr_core::data::interactions::{leave_one_out_split, load_interactions, InteractionLog};
use nhr_core::rng::RngState;
use nhr_core::sampling::{sample_eval_candidates, Holdout};
use nhr_core::{Error, Result};

use crate::artifacts::{save_candidates, save_features, save_split, OutDir};
use crate::config::{ExperimentConfig, FeatureSection};
use crate::manifest::{sha256_file, CandidateInfo, DatasetStats, Manifest, MANIFEST_VERSION};

fn build_feature(
    f: &FeatureSection,
    log: &InteractionLog,
    store: &mut FeatureStore,
) -> Result<usize> {
    let entity = Entity::from_name(&f.entity)?;
    let (remap, num_entities) = match entity {
        Entity::User => (&log.users, log.num_users),
        Entity::Item => (&log.items, log.num_items),
    };
    match FeatureKind::from_name(&f.kind)? {
        FeatureKind::Categorical => {
            let path = f.values.as_ref().expect("validated");
            let file = std::fs::File::open(path)?;
            let (by_feature, skipped) = load_categorical_tsv(
                BufReader::new(file),
                &path.display().to_string(),
                remap,
            )?;
            let values: &BTreeMap<u32, Vec<String>> =
                by_feature.get(&f.name).ok_or_else(|| {
                    Error::Config(format!(
                        "{} has no rows for feature {:?}",
                        path.display(),
                        f.name
                    ))
                })?;
            let vocab =
                CategoricalVocab::build(values.values().flatten().map(String::as_str));
            store.push(build_categorical_table(
                &f.name,
                entity,
                num_entities,
                values,
                &vocab,
                f.input_length,
                f.embedding_dim,
            )?)?;
            Ok(skipped)
        }
        FeatureKind::Text => {
            let dir = f.dir.as_ref().expect("validated");
            let (texts, skipped) = load_text_dir(dir, remap)?;
            if texts.is_empty() {
                return Err(Error::Config(format!(
                    "text feature {:?}: no usable .txt files in {}",
                    f.name,
                    dir.display()
                )));
            }
            store.push(build_text_table(
                &f.name,
                entity,
                num_entities,
                &texts,
                f.hash_space.unwrap_or(1000),
                f.input_length,
                f.embedding_dim,
            )?)?;
            Ok(skipped)
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let log = load_interactions(&cfg.data.interactions, cfg.format())?;
    let split = leave_one_out_split(&log);
    if split.val.is_empty() {
        return Err(Error::EmptyLog(format!(
            "{}: no user has the 3+ interactions needed for a split",
            cfg.data.interactions.display()
        )));
    }

    let mut store = FeatureStore::new();
    for f in &cfg.features {
        let skipped = build_feature(f, &log, &mut store)?;
        if skipped > 0 {
            eprintln!(
                "feature {:?}: skipped {skipped} entities absent from the interaction log",
                f.name
            );
        }
    }

    let mut rng = RngState::derive(cfg.seed, "candidates/val");
    let val = sample_eval_candidates(&split, Holdout::Val, cfg.eval.negatives, &mut rng)?;
    let mut rng = RngState::derive(cfg.seed, "candidates/test");
    let test = sample_eval_candidates(&split, Holdout::Test, cfg.eval.negatives, &mut rng)?;

    let out = OutDir::new(&cfg.out);
    out.ensure_layout()?;
    let mut written = save_split(&out, &split)?;
    written.extend(save_features(&out, &store)?);
    written.push(save_candidates(&out, Holdout::Val, &val)?);
    written.push(save_candidates(&out, Holdout::Test, &test)?);

    let mut artifacts = BTreeMap::new();
    for path in &written {
        artifacts.insert(out.rel(path), sha256_file(path)?);
    }
    let mut candidates = BTreeMap::new();
    for (holdout, c) in [(Holdout::Val, &val), (Holdout::Test, &test)] {
        candidates.insert(
            holdout.name().to_string(),
            CandidateInfo {
                negatives: cfg.eval.negatives,
                fingerprint: format!("{:016x}", c.fingerprint()),
            },
        );
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        stats: DatasetStats {
            users: log.num_users,
            items: log.num_items,
            records: log.records.len(),
            filtered_users: split.filtered_users,
            train_records: split.train.records.len(),
            eval_users: split.test.len(),
        },
        candidates,
        artifacts,
    };
    manifest.save(&out.manifest())?;

    println!(
        "ingested {} users, {} items, {} interactions ({} users filtered)",
        manifest.stats.users,
        manifest.stats.items,
        manifest.stats.records,
        manifest.stats.filtered_users
    );
    println!(
        "train {} records; {} eval users; candidates: val {}, test {}",
        manifest.stats.train_records,
        manifest.stats.eval_users,
        manifest.candidates["val"].fingerprint,
        manifest.candidates["test"].fingerprint
    );
    println!("wrote {}", out.manifest().display());
    Ok(())
}
