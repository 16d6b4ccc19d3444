//! Content-addressed record of what `ingest` produced. Later commands verify
//! every artifact hash before trusting files on disk, so evaluating against
//! silently regenerated candidate sets is impossible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nhr_core::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    /// Distinct (user, item) interactions after de-duplication.
    pub records: usize,
    pub filtered_users: usize,
    pub train_records: usize,
    pub eval_users: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateInfo {
    pub negatives: usize,
    /// FNV-1a fingerprint of the candidate TSV, hex.
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub stats: DatasetStats,
    /// Holdout name ("val"/"test") → candidate provenance.
    pub candidates: BTreeMap<String, CandidateInfo>,
    /// Relative artifact path → SHA-256 (hex).
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| {
            Error::StaleArtifact(format!(
                "no manifest at {} — run `nhr ingest` first",
                path.display()
            ))
        })?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::StaleArtifact(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::StaleArtifact(format!(
                "manifest version {} (this build expects {MANIFEST_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    /// Check every recorded artifact against its hash.
    pub fn verify(&self, root: &Path) -> Result<()> {
        for (rel, want) in &self.artifacts {
            let path = root.join(rel);
            if !path.is_file() {
                return Err(Error::StaleArtifact(format!(
                    "{rel} is missing — re-run `nhr ingest`"
                )));
            }
            let got = sha256_file(&path)?;
            if &got != want {
                return Err(Error::StaleArtifact(format!(
                    "{rel} changed since ingest (expected {want}, found {got})"
                )));
            }
        }
        Ok(())
    }

    /// Load the manifest under `root` and verify it in one step.
    pub fn load_verified(root: &Path) -> Result<Self> {
        let m = Manifest::load(&root.join("manifest.json"))?;
        m.verify(root)?;
        Ok(m)
    }
}
