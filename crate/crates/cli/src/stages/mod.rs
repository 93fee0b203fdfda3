//! Pipeline stages. Each reads only its upstream stage directories and the
//! corpus, and stamps its outputs with content hashes.

pub mod datagen;
pub mod encode;
pub mod optimize;
pub mod report;
pub mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{sha256_bytes, up_to_date, Stamp, Upstream};
use crate::config::RunConfig;
use crate::corpus::{load_corpus, Picture};
use crate::error::{LabError, Result};

pub const DATAGEN: &str = "datagen";
pub const TRAIN: &str = "train";
pub const OPTIMIZE: &str = "optimize";
pub const ENCODE: &str = "encode";
pub const REPORT: &str = "report";

#[derive(Clone, Debug, PartialEq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub dir: PathBuf,
    /// Inputs and settings matched the existing stamp; nothing was redone.
    pub skipped: bool,
    pub stamp: Stamp,
}

/// Hash of the settings a stage depends on.
fn settings_hash<T: Serialize>(stage: &str, settings: &T) -> String {
    let text = toml::to_string(settings).expect("settings serialize");
    sha256_bytes(format!("{stage}\n{text}").as_bytes())
}

fn skip_if_current(
    stage: &'static str,
    dir: &Path,
    config_hash: &str,
    inputs: &BTreeMap<String, String>,
) -> Option<StageOutcome> {
    let stamp = up_to_date(dir, config_hash, inputs)?;
    log::info!("{stage}: inputs unchanged, nothing to do");
    Some(StageOutcome {
        stage,
        dir: dir.to_path_buf(),
        skipped: true,
        stamp,
    })
}

fn upstream_inputs(up: &[&Upstream]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for u in up {
        for (name, hash) in &u.stamp.outputs {
            m.insert(format!("{}/{name}", u.stamp.stage), hash.clone());
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u32,
    pub path: PathBuf,
    pub sha256: String,
    pub val: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub image: Vec<ImageEntry>,
}

pub const SPLIT_FILE: &str = "split.toml";

impl SplitFile {
    pub fn load(up: &Upstream) -> Result<Self> {
        let path = up.path(SPLIT_FILE);
        let text = crate::artifact::read_to_string(&path)?;
        toml::from_str(&text).map_err(|_| LabError::Dependency {
            artifact: path,
            command: DATAGEN,
        })
    }

    pub fn is_val(&self, id: u32) -> bool {
        self.image.iter().any(|e| e.id == id && e.val)
    }

    pub fn val_ids(&self) -> Vec<u32> {
        self.image.iter().filter(|e| e.val).map(|e| e.id).collect()
    }
}

/// Corpus pictures listed in the split, checked against their recorded
/// hashes. `val_only` restricts to the validation side.
pub fn split_pictures(cfg: &RunConfig, split: &SplitFile, val_only: bool) -> Result<Vec<Picture>> {
    let pics = load_corpus(&cfg.corpus)?;
    let mut out = Vec::new();
    for e in split.image.iter().filter(|e| e.val || !val_only) {
        let p = pics
            .iter()
            .find(|p| p.path == e.path)
            .ok_or_else(|| LabError::data(format!("{} listed by datagen is no longer in the corpus", e.path.display())))?;
        if p.hash != e.sha256 {
            return Err(LabError::Dependency {
                artifact: e.path.clone(),
                command: DATAGEN,
            });
        }
        out.push(Picture {
            id: e.id,
            path: p.path.clone(),
            hash: p.hash.clone(),
            frame: p.frame.clone(),
        });
    }
    Ok(out)
}

/// Run every stage in order.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<StageOutcome>> {
    Ok(vec![
        datagen::run(cfg)?,
        train::run(cfg)?,
        optimize::run(cfg)?,
        encode::run(cfg)?,
        report::run(cfg)?,
    ])
}
