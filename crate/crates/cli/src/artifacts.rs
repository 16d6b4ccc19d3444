//! On-disk layout of an experiment directory and the load/save plumbing for
//! everything `ingest` produces:
//!
//! ```text
//! out/
//!   manifest.json
//!   remap/{users,items}.tsv
//!   split/{train,val,test}.tsv
//!   features/specs.json, features/<name>.tsv
//!   candidates/{val,test}.tsv
//!   checkpoints/<model>.nhr
//!   reports/<model>.train.jsonl, <model>.eval.json, comparison.{json,txt}
//! ```

use std::io::BufReader;
use std::path::{Path, PathBuf};

use nhr_core::data::features::{FeatureSpec, FeatureStore, FeatureTable};
use nhr_core::data::interactions::{
    read_records_tsv, IdRemap, InteractionLog, SplitDataset,
};
use nhr_core::sampling::{EvalCandidates, Holdout};
use nhr_core::{Error, Result};

#[derive(Clone, Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: &Path) -> Self {
        OutDir {
            root: root.to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn remap(&self, which: &str) -> PathBuf {
        self.root.join("remap").join(format!("{which}.tsv"))
    }

    pub fn split(&self, which: &str) -> PathBuf {
        self.root.join("split").join(format!("{which}.tsv"))
    }

    pub fn feature_specs(&self) -> PathBuf {
        self.root.join("features").join("specs.json")
    }

    pub fn feature_table(&self, name: &str) -> PathBuf {
        self.root.join("features").join(format!("{name}.tsv"))
    }

    pub fn candidates(&self, holdout: Holdout) -> PathBuf {
        self.root
            .join("candidates")
            .join(format!("{}.tsv", holdout.name()))
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.checkpoints_dir().join(format!("{name}.nhr"))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn train_report(&self, name: &str) -> PathBuf {
        self.reports_dir().join(format!("{name}.train.jsonl"))
    }

    pub fn fusion_report(&self, name: &str) -> PathBuf {
        self.reports_dir().join(format!("{name}.fusion.json"))
    }

    pub fn eval_report(&self, name: &str) -> PathBuf {
        self.reports_dir().join(format!("{name}.eval.json"))
    }

    pub fn comparison(&self, ext: &str) -> PathBuf {
        self.reports_dir().join(format!("comparison.{ext}"))
    }

    pub fn ensure_layout(&self) -> Result<()> {
        for sub in ["remap", "split", "features", "candidates", "checkpoints", "reports"] {
            std::fs::create_dir_all(self.root.join(sub))?;
        }
        Ok(())
    }

    /// Relative path of an absolute artifact path, for manifest keys.
    pub fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

/// Everything the training/evaluation commands need back off disk.
pub struct LoadedDataset {
    pub split: SplitDataset,
    pub store: FeatureStore,
}

pub fn save_split(out: &OutDir, split: &SplitDataset) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let mut buf = Vec::new();
    split.train.users.write_tsv(&mut buf)?;
    let p = out.remap("users");
    std::fs::write(&p, &buf)?;
    written.push(p);

    buf.clear();
    split.train.items.write_tsv(&mut buf)?;
    let p = out.remap("items");
    std::fs::write(&p, &buf)?;
    written.push(p);

    buf.clear();
    split.train.write_records_tsv(&mut buf)?;
    let p = out.split("train");
    std::fs::write(&p, &buf)?;
    written.push(p);

    for (which, pairs) in [("val", &split.val), ("test", &split.test)] {
        let mut text = String::new();
        for (u, i) in pairs {
            text.push_str(&format!("{u}\t{i}\n"));
        }
        let p = out.split(which);
        std::fs::write(&p, text)?;
        written.push(p);
    }
    Ok(written)
}

pub fn save_features(out: &OutDir, store: &FeatureStore) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let specs = store.specs();
    let mut json = serde_json::to_string_pretty(&specs).expect("specs serialize");
    json.push('\n');
    let p = out.feature_specs();
    std::fs::write(&p, json)?;
    written.push(p);
    for table in store.iter() {
        let mut buf = Vec::new();
        table.write_tsv(&mut buf)?;
        let p = out.feature_table(&table.spec.name);
        std::fs::write(&p, &buf)?;
        written.push(p);
    }
    Ok(written)
}

pub fn save_candidates(
    out: &OutDir,
    holdout: Holdout,
    cands: &EvalCandidates,
) -> Result<PathBuf> {
    let mut buf = Vec::new();
    cands.write_tsv(&mut buf)?;
    let p = out.candidates(holdout);
    std::fs::write(&p, &buf)?;
    Ok(p)
}

pub fn load_candidates(out: &OutDir, holdout: Holdout) -> Result<EvalCandidates> {
    let path = out.candidates(holdout);
    let file = std::fs::File::open(&path)?;
    EvalCandidates::read_tsv(BufReader::new(file), &path.display().to_string())
}

fn read_pairs(path: &Path) -> Result<Vec<(u32, u32)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let pair = line
            .split_once('\t')
            .and_then(|(u, i)| Some((u.parse().ok()?, i.parse().ok()?)))
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: "expected user<TAB>item".into(),
            })?;
        out.push(pair);
    }
    Ok(out)
}

/// Rebuild the split and feature store from an ingested directory. The
/// caller must have verified the manifest first.
pub fn load_dataset(out: &OutDir, filtered_users: usize) -> Result<LoadedDataset> {
    let users = IdRemap::read_tsv(BufReader::new(std::fs::File::open(out.remap("users"))?))?;
    let items = IdRemap::read_tsv(BufReader::new(std::fs::File::open(out.remap("items"))?))?;
    let train_path = out.split("train");
    let records = read_records_tsv(
        BufReader::new(std::fs::File::open(&train_path)?),
        &train_path.display().to_string(),
    )?;
    let val = read_pairs(&out.split("val"))?;
    let test = read_pairs(&out.split("test"))?;

    let num_users = users.len();
    let num_items = items.len();
    let mut positives_by_user: Vec<Vec<u32>> = vec![Vec::new(); num_users];
    for r in &records {
        positives_by_user[r.user as usize].push(r.item);
    }
    for &(u, i) in val.iter().chain(test.iter()) {
        positives_by_user[u as usize].push(i);
    }
    for pos in &mut positives_by_user {
        pos.sort_unstable();
        pos.dedup();
    }

    let split = SplitDataset {
        train: InteractionLog {
            records,
            num_users,
            num_items,
            users,
            items,
        },
        val,
        test,
        positives_by_user,
        filtered_users,
    };

    let specs_text = std::fs::read_to_string(out.feature_specs())?;
    let specs: Vec<FeatureSpec> = serde_json::from_str(&specs_text)
        .map_err(|e| Error::StaleArtifact(format!("features/specs.json: {e}")))?;
    let mut store = FeatureStore::new();
    for spec in specs {
        let num_entities = match spec.entity {
            nhr_core::data::features::Entity::User => num_users,
            nhr_core::data::features::Entity::Item => num_items,
        };
        let path = out.feature_table(&spec.name);
        let file = std::fs::File::open(&path)?;
        store.push(FeatureTable::read_tsv(spec, num_entities, BufReader::new(file))?)?;
    }
    Ok(LoadedDataset { split, store })
}
