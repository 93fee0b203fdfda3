use std::fmt::Write as _;

use intra_core::MAX_DEPTH;
use intra_fast::dataset_gen::decode_size_records;
use intra_fast::eotd::{feasible_box, moead_run, EncodeOracle, EotdError, FeasibleBox, Memo, OracleFrame, ParetoArchive, ParetoPoint};
use intra_fast::eval_harness::{curves_csv, threshold_curves, threshold_grid, CurvePoint};
use intra_fast::fast_pipeline::{decide_gears, split_probabilities, ThresholdVector};
use intra_fast::ModelBank;
use serde::{Deserialize, Serialize};

use super::datagen::size_file;
use super::train::load_bank;
use super::{
    settings_hash, skip_if_current, split_pictures, upstream_inputs, SplitFile, StageOutcome, DATAGEN, OPTIMIZE, TRAIN,
};
use crate::artifact::{require, StageWriter, Upstream};
use crate::config::{MnrcSetting, OperatingPoint, OptimizeSection, RunConfig};
use crate::error::{LabError, Result};

pub const CURVES_FILE: &str = "curves.csv";
pub const BOX_FILE: &str = "box.toml";
pub const ARCHIVE_FILE: &str = "archive.csv";
pub const POINTS_FILE: &str = "points.toml";
pub const LOG_FILE: &str = "search.txt";

#[derive(Serialize)]
struct Settings<'a> {
    optimize: &'a OptimizeSection,
    mnrc: MnrcSetting,
    anchor_qps: &'a [u8],
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub th: [f64; 4],
    pub c: f64,
    pub r: f64,
}

impl From<ParetoPoint> for PointRecord {
    fn from(p: ParetoPoint) -> Self {
        PointRecord {
            th: p.th.th,
            c: p.obj.c,
            r: p.obj.r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointsFile {
    pub lr: PointRecord,
    pub ot: PointRecord,
    pub hr: PointRecord,
}

impl PointsFile {
    pub fn load(up: &Upstream) -> Result<Self> {
        let path = up.path(POINTS_FILE);
        toml::from_str(&crate::artifact::read_to_string(&path)?).map_err(|_| LabError::Dependency {
            artifact: path,
            command: OPTIMIZE,
        })
    }

    pub fn get(&self, which: OperatingPoint) -> PointRecord {
        match which {
            OperatingPoint::Lr => self.lr,
            OperatingPoint::Ot => self.ot,
            OperatingPoint::Hr => self.hr,
        }
    }
}

/// Split probabilities of the validation samples of one depth, pooled over
/// the anchor QPs, paired with their labels.
pub fn validation_predictions(
    datagen: &Upstream,
    split: &SplitFile,
    bank: &ModelBank,
    depth: u8,
    qps: &[u8],
) -> Result<Vec<([f32; 2], u8)>> {
    let name = size_file(depth);
    let dep = || LabError::Dependency {
        artifact: datagen.path(&name),
        command: DATAGEN,
    };
    let bytes = std::fs::read(datagen.path(&name)).map_err(|_| dep())?;
    let samples = decode_size_records(&bytes).map_err(|_| dep())?;
    let mut out = Vec::new();
    for &qp in qps {
        let chosen: Vec<_> = samples.iter().filter(|s| s.qp == qp && split.is_val(s.image)).collect();
        let blocks: Vec<&[u8]> = chosen.iter().map(|s| s.block.as_slice()).collect();
        let probs = bank.classify_split(depth, &blocks, qp).map_err(|_| LabError::Dependency {
            artifact: std::path::PathBuf::from(super::train::BANK_FILE),
            command: TRAIN,
        })?;
        out.extend(probs.into_iter().zip(chosen.iter().map(|s| s.label)));
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.stage_dir(OPTIMIZE);
    let datagen = require(&cfg.stage_dir(DATAGEN), DATAGEN)?;
    let trained = require(&cfg.stage_dir(TRAIN), TRAIN)?;
    let inputs = upstream_inputs(&[&datagen, &trained]);
    let hash = settings_hash(
        OPTIMIZE,
        &Settings {
            optimize: &cfg.optimize,
            mnrc: cfg.mnrc,
            anchor_qps: &cfg.anchor_qps,
            seed: cfg.seed,
        },
    );
    if let Some(done) = skip_if_current(OPTIMIZE, &dir, &hash, &inputs) {
        return Ok(done);
    }
    let split = SplitFile::load(&datagen)?;
    let bank = load_bank(&trained)?;
    let o = &cfg.optimize;

    let grid = threshold_grid(0.5, 1.0, o.grid_step);
    let mut curves: Vec<(u8, Vec<CurvePoint>)> = Vec::new();
    for depth in 0..MAX_DEPTH {
        let preds = validation_predictions(&datagen, &split, &bank, depth, &cfg.anchor_qps)?;
        curves.push((depth, threshold_curves(&preds, &grid)));
    }
    let per_depth: [Vec<CurvePoint>; 4] = std::array::from_fn(|d| curves[d].1.clone());
    let bounds = feasible_box(&per_depth).map_err(LabError::config)?;
    log::info!("optimize: feasible box lo {:?} hi {:?}", bounds.lo, bounds.hi);

    let use_gears = o.use_gears && cfg.mnrc != MnrcSetting::Off;
    let mut frames = Vec::new();
    for pic in split_pictures(cfg, &split, true)? {
        for &qp in &cfg.anchor_qps {
            let missing = |_| LabError::Dependency {
                artifact: trained.path(super::train::BANK_FILE),
                command: TRAIN,
            };
            let probs = split_probabilities(&pic.frame, &bank, None, qp).map_err(missing)?;
            let gears = if use_gears {
                Some(decide_gears(&pic.frame, &bank, None, qp).map_err(missing)?)
            } else {
                None
            };
            frames.push(OracleFrame {
                frame: pic.frame.clone(),
                qp,
                probs,
                gears,
            });
        }
    }
    let oracle = Memo::new(EncodeOracle::new(frames).map_err(|e| match e {
        EotdError::EmptyCorpus => LabError::data("no validation pictures to optimize on"),
        other => LabError::data(other),
    })?);
    let result = moead_run(&oracle, &bounds, &o.params(cfg.seed)).map_err(LabError::data)?;
    let archive: &ParetoArchive = &result.archive;
    let points = archive.operating_points().ok_or_else(|| LabError::data("empty Pareto archive"))?;
    let points = PointsFile {
        lr: points.lr.into(),
        ot: points.ot.into(),
        hr: points.hr.into(),
    };
    log::info!(
        "optimize: {} generations, {} encodes, {} archive points",
        result.generations_run,
        oracle.misses(),
        archive.len()
    );

    let mut log_text = String::new();
    let _ = writeln!(log_text, "generations {}", result.generations_run);
    let _ = writeln!(log_text, "evaluations {}", result.evaluated.len());
    let _ = writeln!(log_text, "distinct encodes {}", oracle.misses());
    let _ = writeln!(log_text, "baseline leaf evaluations {}", oracle.inner().baseline_evals());
    let _ = writeln!(log_text, "reference point {:?}", result.z);

    let mut w = StageWriter::new(&dir)?;
    w.put(CURVES_FILE, curves_csv(&curves).as_bytes())?;
    w.put(BOX_FILE, bounds.to_toml().as_bytes())?;
    w.put(ARCHIVE_FILE, archive.to_text().as_bytes())?;
    w.put(POINTS_FILE, toml::to_string(&points).expect("points serialize").as_bytes())?;
    w.put(LOG_FILE, log_text.as_bytes())?;
    let stamp = w.finish(OPTIMIZE, hash, inputs, &cfg.to_toml())?;
    Ok(StageOutcome {
        stage: OPTIMIZE,
        dir,
        skipped: false,
        stamp,
    })
}

pub fn load_box(up: &Upstream) -> Result<FeasibleBox> {
    FeasibleBox::from_toml(&crate::artifact::read_to_string(&up.path(BOX_FILE))?).map_err(|_| LabError::Dependency {
        artifact: up.path(BOX_FILE),
        command: OPTIMIZE,
    })
}

pub fn thresholds_of(p: &PointRecord) -> ThresholdVector {
    ThresholdVector::new(p.th)
}
