pub mod baseline;
pub mod evaluate;
pub mod fuse;
pub mod ingest;
pub mod pretrain;

use nhr_core::Result;

use crate::artifacts::{load_dataset, LoadedDataset, OutDir};
use crate::config::ExperimentConfig;
use crate::manifest::Manifest;

/// Verify the manifest and reload everything ingest wrote. The shared
/// entrypoint for every post-ingest command.
pub fn open_ingested(cfg: &ExperimentConfig) -> Result<(OutDir, Manifest, LoadedDataset)> {
    let out = OutDir::new(&cfg.out);
    let manifest = Manifest::load_verified(out.root())?;
    let data = load_dataset(&out, manifest.stats.filtered_users)?;
    Ok((out, manifest, data))
}

/// Send progress lines to stderr so stdout stays machine-readable.
pub fn stderr_progress() -> impl FnMut(&str) {
    |line: &str| eprintln!("{line}")
}

pub type CommandResult = Result<()>;
