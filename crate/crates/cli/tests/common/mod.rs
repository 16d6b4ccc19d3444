//! Shared fixture for the binary-level tests: a planted-cluster dataset
//! written as the raw files the CLI ingests, plus a matching experiment
//! config.

// Each test binary includes this module and uses a different subset of it.
#![allow(dead_code)]

use std::path::Path;

use nhr_core::rng::RngState;

pub struct Fixture {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub per_user: usize,
    /// Chance that a draw ignores the user's cluster.
    pub noise: f64,
    pub seed: u64,
}

impl Default for Fixture {
    fn default() -> Self {
        Fixture {
            users: 40,
            items: 16,
            clusters: 4,
            per_user: 5,
            noise: 0.15,
            seed: 11,
        }
    }
}

impl Fixture {
    /// Write `interactions.tsv` and `features.tsv` under `dir`.
    pub fn write_data(&self, dir: &Path) {
        let mut rng = RngState::derive(self.seed, "fixture");
        let mut interactions = String::new();
        for u in 0..self.users {
            let c = u % self.clusters;
            let mut seen: Vec<usize> = Vec::new();
            let mut t = 0;
            while seen.len() < self.per_user {
                let item = if rng.next_f64() < self.noise {
                    rng.next_below(self.items as u64) as usize
                } else {
                    // in-cluster, biased toward low ranks
                    let in_cluster = (self.items - c).div_ceil(self.clusters);
                    let r = (rng.next_f64() * rng.next_f64() * in_cluster as f64) as usize;
                    c + r.min(in_cluster - 1) * self.clusters
                };
                if seen.contains(&item) {
                    continue;
                }
                seen.push(item);
                interactions.push_str(&format!("u{u}\ti{item}\t{}\n", 1_000 + t));
                t += 1;
            }
        }
        std::fs::write(dir.join("interactions.tsv"), interactions).unwrap();

        let mut features = String::new();
        for u in 0..self.users {
            features.push_str(&format!("u{u}\tgroup\tg{}\n", u % self.clusters));
        }
        for i in 0..self.items {
            features.push_str(&format!("i{i}\tgenre\tg{}\n", i % self.clusters));
        }
        std::fs::write(dir.join("features.tsv"), features).unwrap();
    }

    /// Write `experiment.toml` (paths relative to `dir`) and return its path.
    pub fn write_config(&self, dir: &Path, extra: &str) -> std::path::PathBuf {
        let config = format!(
            r#"seed = {seed}
pf = 8

[data]
interactions = "interactions.tsv"
format = "tsv"

[[feature]]
name = "group"
entity = "user"
kind = "categorical"
embedding_dim = 8
values = "features.tsv"

[[feature]]
name = "genre"
entity = "item"
kind = "categorical"
embedding_dim = 8
values = "features.tsv"

[[model]]
name = "gmf"
kind = "gmf"

[[model]]
name = "mlp"
kind = "mlp"

[[model]]
name = "aux"
kind = "aux"
features = ["group", "genre"]

[train]
max_epochs = 2
patience = 2

[eval]
negatives = 8

[[fusion]]
name = "ncf"
components = ["gmf", "mlp"]
step = 0.5

[[fusion]]
name = "nhr"
components = ["gmf", "mlp", "aux"]
step = 0.5

[baselines.bpr]
epochs = 5
{extra}"#,
            seed = self.seed,
            extra = extra
        );
        let path = dir.join("experiment.toml");
        std::fs::write(&path, config).unwrap();
        path
    }

    pub fn write_all(&self, dir: &Path) -> std::path::PathBuf {
        self.write_data(dir);
        self.write_config(dir, "")
    }
}

/// The compiled `nhr` binary, ready to run inside `dir`.
pub fn nhr(dir: &Path) -> std::process::Command {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_nhr"));
    cmd.current_dir(dir);
    cmd
}

pub fn run_ok(cmd: &mut std::process::Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

pub fn run_err(cmd: &mut std::process::Command) -> (i32, String) {
    let out = cmd.output().expect("binary runs");
    assert!(
        !out.status.success(),
        "command unexpectedly succeeded: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Every file under `root`, relative path → bytes, sorted.
pub fn dir_snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(base, &path, out);
            } else {
                let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}
