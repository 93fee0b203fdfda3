use std::path::{Path, PathBuf};

use intra_fast::ak_models::ANCHOR_QPS;
use intra_fast::dataset_gen::ExpectationTable;
use intra_fast::eotd::MoeadParams;
use intra_fast::qp_adapt::{MAX_QP, MIN_QP};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatingPoint {
    Lr,
    Ot,
    Hr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MnrcSetting {
    Off,
    Conservative,
    Aggressive,
}

impl MnrcSetting {
    pub fn table(self) -> Option<ExpectationTable> {
        match self {
            MnrcSetting::Off => None,
            MnrcSetting::Conservative => Some(ExpectationTable::CONSERVATIVE),
            MnrcSetting::Aggressive => Some(ExpectationTable::AGGRESSIVE),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodeSet {
    /// Held-out validation pictures.
    Val,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub decay_every: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Training samples per model, drawn at random when exceeded.
    pub max_samples: usize,
    pub max_val_samples: usize,
    pub th_rd: f64,
    pub w: f64,
    pub square_kernels: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 150,
            decay_every: 50,
            learning_rate: 5e-3,
            batch_size: 64,
            max_samples: 20_000,
            max_val_samples: 4_000,
            th_rd: 0.02,
            w: 0.25,
            square_kernels: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub n_sub: usize,
    pub neighborhood: usize,
    pub generations: usize,
    pub de_scale: f64,
    pub mutation_rate: f64,
    pub mutation_step: f64,
    pub stagnation: usize,
    pub archive_capacity: usize,
    /// Threshold grid step for the accuracy curves.
    pub grid_step: f64,
    /// Let the oracle apply MNRC gears (when models exist) while searching.
    pub use_gears: bool,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let p = MoeadParams::default();
        OptimizeSection {
            n_sub: p.n_sub,
            neighborhood: p.neighborhood,
            generations: p.generations,
            de_scale: p.de_scale,
            mutation_rate: p.mutation_rate,
            mutation_step: p.mutation_step,
            stagnation: p.stagnation,
            archive_capacity: p.archive_capacity,
            grid_step: 0.01,
            use_gears: true,
        }
    }
}

impl OptimizeSection {
    pub fn params(&self, seed: u64) -> MoeadParams {
        MoeadParams {
            n_sub: self.n_sub,
            neighborhood: self.neighborhood,
            generations: self.generations,
            de_scale: self.de_scale,
            mutation_rate: self.mutation_rate,
            mutation_step: self.mutation_step,
            stagnation: self.stagnation,
            archive_capacity: self.archive_capacity,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    pub set: EncodeSet,
    pub baseline_only: bool,
}

impl Default for EncodeSection {
    fn default() -> Self {
        EncodeSection {
            set: EncodeSet::Val,
            baseline_only: false,
        }
    }
}

/// Everything a run depends on. Written verbatim into each stage's output
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Picture files or directories of pictures.
    pub corpus: Vec<PathBuf>,
    /// QPs to encode at.
    pub qps: Vec<u8>,
    /// QPs with dedicated models.
    pub anchor_qps: Vec<u8>,
    pub seed: u64,
    /// Explicit thresholds; overrides `operating_point`.
    pub thresholds: Option<[f64; 4]>,
    pub operating_point: OperatingPoint,
    pub mnrc: MnrcSetting,
    pub output: PathBuf,
    pub train: TrainSection,
    pub optimize: OptimizeSection,
    pub encode: EncodeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: vec![PathBuf::from("data/corpus")],
            qps: ANCHOR_QPS.to_vec(),
            anchor_qps: ANCHOR_QPS.to_vec(),
            seed: 0,
            thresholds: None,
            operating_point: OperatingPoint::Ot,
            mnrc: MnrcSetting::Off,
            output: PathBuf::from("runs/default"),
            train: TrainSection::default(),
            optimize: OptimizeSection::default(),
            encode: EncodeSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(LabError::config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.corpus.is_empty() {
            return bad("corpus is empty".into());
        }
        if self.qps.is_empty() {
            return bad("no QPs to encode".into());
        }
        if let Some(q) = self.qps.iter().find(|q| !(MIN_QP..=MAX_QP).contains(q)) {
            return bad(format!("qp {q} outside {MIN_QP}..={MAX_QP}"));
        }
        if self.anchor_qps.is_empty() || self.anchor_qps.iter().any(|q| !ANCHOR_QPS.contains(q)) {
            return bad(format!("anchor_qps must be a nonempty subset of {ANCHOR_QPS:?}"));
        }
        if let Some(th) = self.thresholds {
            if th.iter().any(|t| !(0.5..=1.0).contains(t) && *t != intra_fast::fast_pipeline::DISABLED) {
                return bad(format!("thresholds {th:?} must lie in [0.5, 1] or be disabled (2)"));
            }
        }
        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 || t.max_samples == 0 || t.decay_every == 0 {
            return bad("train epochs, batch_size, max_samples and decay_every must be positive".into());
        }
        if !(t.learning_rate > 0.0) || !(t.w > 0.0 && t.w <= 1.0) || !(t.th_rd >= 0.0) {
            return bad("train learning_rate > 0, 0 < w ≤ 1, th_rd ≥ 0 required".into());
        }
        let o = &self.optimize;
        if o.n_sub < 4 || o.neighborhood < 2 || o.generations == 0 {
            return bad("optimize needs n_sub ≥ 4, neighborhood ≥ 2, generations ≥ 1".into());
        }
        if !(o.grid_step > 0.0 && o.grid_step <= 0.25) {
            return bad("optimize grid_step must be in (0, 0.25]".into());
        }
        if !(0.0..=1.0).contains(&o.mutation_rate) {
            return bad("optimize mutation_rate must be in [0, 1]".into());
        }
        Ok(())
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.output.join(stage)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = RunConfig::from_toml("seed = 4\nmnrc = \"conservative\"\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.mnrc, MnrcSetting::Conservative);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 64);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "qps = [50]",
            "anchor_qps = [25]",
            "thresholds = [0.4, 0.9, 0.9, 0.9]",
            "unknown = 1",
            "[optimize]\nn_sub = 2",
            "corpus = []",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(LabError::Config(_))), "{text}");
        }
        assert!(RunConfig::from_toml("thresholds = [2.0, 0.9, 0.5, 1.0]").is_ok());
    }
}
