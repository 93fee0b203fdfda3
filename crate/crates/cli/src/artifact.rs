//! Content hashes and stage stamps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const STAMP_FILE: &str = "stamp.toml";
pub const CONFIG_FILE: &str = "config.toml";

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// What a stage consumed and produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Stamp {
    pub fn load(dir: &Path) -> Option<Stamp> {
        let text = std::fs::read_to_string(dir.join(STAMP_FILE)).ok()?;
        toml::from_str(&text).ok()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write(&dir.join(STAMP_FILE), toml::to_string(self).expect("stamp serializes").as_bytes())
    }

    /// Whether every listed output still has its recorded hash.
    pub fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs
            .iter()
            .all(|(name, hash)| sha256_file(&dir.join(name)).is_ok_and(|h| &h == hash))
    }
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

/// A verified upstream stage directory.
pub struct Upstream {
    pub dir: PathBuf,
    pub stamp: Stamp,
}

impl Upstream {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn hash_of(&self, name: &str) -> Option<&String> {
        self.stamp.outputs.get(name)
    }
}

/// Load a stage directory whose stamp and outputs must be intact; errors
/// name the command that produces it.
pub fn require(dir: &Path, command: &'static str) -> Result<Upstream> {
    let missing = || LabError::Dependency {
        artifact: dir.join(STAMP_FILE),
        command,
    };
    let stamp = Stamp::load(dir).ok_or_else(missing)?;
    for (name, hash) in &stamp.outputs {
        let path = dir.join(name);
        if sha256_file(&path).ok().as_ref() != Some(hash) {
            return Err(LabError::Dependency { artifact: path, command });
        }
    }
    Ok(Upstream {
        dir: dir.to_path_buf(),
        stamp,
    })
}

/// Collects outputs of a running stage, then stamps them.
pub struct StageWriter {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl StageWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        // a half-written stage must not look complete
        let stamp = dir.join(STAMP_FILE);
        if stamp.exists() {
            std::fs::remove_file(&stamp).map_err(|e| LabError::io(&stamp, e))?;
        }
        Ok(StageWriter {
            dir: dir.to_path_buf(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write(&self.dir.join(name), bytes)?;
        self.outputs.insert(name.to_string(), sha256_bytes(bytes));
        Ok(())
    }

    pub fn finish(self, stage: &str, config_hash: String, inputs: BTreeMap<String, String>, config_toml: &str) -> Result<Stamp> {
        write(&self.dir.join(CONFIG_FILE), config_toml.as_bytes())?;
        let stamp = Stamp {
            stage: stage.to_string(),
            config_hash,
            inputs,
            outputs: self.outputs,
        };
        stamp.save(&self.dir)?;
        Ok(stamp)
    }
}

/// The existing stamp when it matches and its outputs are intact.
pub fn up_to_date(dir: &Path, config_hash: &str, inputs: &BTreeMap<String, String>) -> Option<Stamp> {
    let s = Stamp::load(dir)?;
    (s.config_hash == config_hash && &s.inputs == inputs && s.outputs_intact(dir)).then_some(s)
}
