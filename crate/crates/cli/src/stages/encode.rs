use std::collections::{BTreeMap, HashSet};
use std::time::Instant;

use intra_core::intra::{report_row, EncodeOptions, REPORT_HEADER};
use intra_core::metrics::psnr_from_sse;
use intra_core::{BlockRef, CostModel};
use intra_fast::eval_harness::{bd_br, cover_rate, delta_t, rd_curve_csv, summary_csv, CoverRecord, RdCurve, RdRow, RunReport};
use intra_fast::fast_pipeline::{decide_gears, decide_splits, fast_encode, inference_ratio, split_probabilities, SkipStats, ThresholdVector};
use intra_fast::qp_adapt::{AdaptError, Priors};
use serde::Serialize;

use super::datagen::PRIORS_FILE;
use super::optimize::PointsFile;
use super::train::{load_bank, BANK_FILE};
use super::{settings_hash, skip_if_current, split_pictures, upstream_inputs, SplitFile, StageOutcome, DATAGEN, ENCODE, OPTIMIZE, TRAIN};
use crate::artifact::{require, StageWriter, Upstream};
use crate::config::{EncodeSection, EncodeSet, MnrcSetting, OperatingPoint, RunConfig};
use crate::corpus::{load_corpus, Picture};
use crate::error::{LabError, Result};

pub const RD_FILE: &str = "rd_curve.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SKIP_FILE: &str = "skip.csv";
pub const FRAMES_FILE: &str = "frames.csv";

#[derive(Serialize)]
struct Settings<'a> {
    qps: &'a [u8],
    anchor_qps: &'a [u8],
    thresholds: Option<[f64; 4]>,
    operating_point: OperatingPoint,
    mnrc: MnrcSetting,
    encode: &'a EncodeSection,
    corpus: &'a [std::path::PathBuf],
}

#[derive(Default)]
struct Totals {
    per_qp: BTreeMap<u8, (u64, u64, u64)>,
    leaf_evals: u64,
    wall_ms: f64,
}

impl Totals {
    fn add(&mut self, qp: u8, bits: u64, sse: u64, pixels: u64, evals: u64, ms: f64) {
        let e = self.per_qp.entry(qp).or_default();
        e.0 += bits;
        e.1 += sse;
        e.2 += pixels;
        self.leaf_evals += evals;
        self.wall_ms += ms;
    }

    fn rows(&self, label: &str) -> Vec<RdRow> {
        self.per_qp
            .iter()
            .map(|(&qp, &(bits, sse, px))| RdRow {
                label: label.to_string(),
                qp,
                bits,
                psnr: psnr_from_sse(sse, px as usize),
            })
            .collect()
    }

    fn curve(&self) -> Option<RdCurve> {
        RdCurve::new(
            self.per_qp
                .values()
                .map(|&(bits, sse, px)| (bits as f64, psnr_from_sse(sse, px as usize)))
                .collect(),
        )
        .ok()
    }
}

fn missing_models<'a>(trained: &'a Upstream, datagen: Option<&'a Upstream>) -> impl Fn(AdaptError) -> LabError + 'a {
    move |e| match e {
        AdaptError::MissingPriors { .. } => LabError::Dependency {
            artifact: datagen.map_or_else(|| PRIORS_FILE.into(), |d| d.path(PRIORS_FILE)),
            command: DATAGEN,
        },
        AdaptError::QpOutOfRange(_) => LabError::config(e),
        _ => LabError::Dependency {
            artifact: trained.path(BANK_FILE),
            command: TRAIN,
        },
    }
}

pub fn run(cfg: &RunConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.stage_dir(ENCODE);
    let e = &cfg.encode;
    let fast = !e.baseline_only;
    let needs_priors = fast && cfg.qps.iter().any(|q| !cfg.anchor_qps.contains(q));
    let datagen = if e.set == EncodeSet::Val || needs_priors {
        Some(require(&cfg.stage_dir(DATAGEN), DATAGEN)?)
    } else {
        None
    };
    let trained = if fast { Some(require(&cfg.stage_dir(TRAIN), TRAIN)?) } else { None };
    let optimized = if fast && cfg.thresholds.is_none() {
        Some(require(&cfg.stage_dir(OPTIMIZE), OPTIMIZE)?)
    } else {
        None
    };
    let ups: Vec<&Upstream> = [datagen.as_ref(), trained.as_ref(), optimized.as_ref()].into_iter().flatten().collect();
    let mut inputs = upstream_inputs(&ups);
    let pictures: Vec<Picture> = match (&datagen, e.set) {
        (Some(d), EncodeSet::Val) => split_pictures(cfg, &SplitFile::load(d)?, true)?,
        _ => load_corpus(&cfg.corpus)?,
    };
    for p in &pictures {
        inputs.insert(format!("image:{}", p.path.display()), p.hash.clone());
    }
    let hash = settings_hash(
        ENCODE,
        &Settings {
            qps: &cfg.qps,
            anchor_qps: &cfg.anchor_qps,
            thresholds: cfg.thresholds,
            operating_point: cfg.operating_point,
            mnrc: cfg.mnrc,
            encode: e,
            corpus: &cfg.corpus,
        },
    );
    if let Some(done) = skip_if_current(ENCODE, &dir, &hash, &inputs) {
        return Ok(done);
    }

    let bank = trained.as_ref().map(load_bank).transpose()?;
    let priors = match (&datagen, needs_priors) {
        (Some(d), true) => Some(Priors::load(&d.path(PRIORS_FILE)).map_err(|_| LabError::Dependency {
            artifact: d.path(PRIORS_FILE),
            command: DATAGEN,
        })?),
        _ => None,
    };
    let th = match (cfg.thresholds, &optimized) {
        (Some(t), _) => ThresholdVector::new(t),
        (None, Some(o)) => ThresholdVector::new(PointsFile::load(o)?.get(cfg.operating_point).th),
        (None, None) => ThresholdVector::disabled(),
    };
    let use_gears = cfg.mnrc != MnrcSetting::Off;

    let mut base = Totals::default();
    let mut quick = Totals::default();
    let mut skip = SkipStats::default();
    let mut inference = [0.0; 4];
    let mut maps = 0usize;
    let mut cover = Vec::new();
    let mut frames_csv = format!("label,{REPORT_HEADER}\n");
    for &qp in &cfg.qps {
        let cost = CostModel::new(qp);
        for pic in &pictures {
            let name = pic.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let px = (pic.frame.width() * pic.frame.height()) as u64;
            let trace = fast && use_gears;
            let b = fast_encode(&pic.frame, &cost, None, None, EncodeOptions { trace }).encoding;
            base.add(qp, b.total_bits, b.sse, px, b.stats.total_leaf_evals(), b.wall_ms);
            frames_csv.push_str(&format!("baseline,{}\n", report_row(&name, qp, &b)));
            let Some(bank) = &bank else { continue };
            let trained = trained.as_ref().expect("bank implies train stage");
            let fail = missing_models(trained, datagen.as_ref());
            let start = Instant::now();
            let probs = split_probabilities(&pic.frame, bank, priors.as_ref(), qp).map_err(&fail)?;
            let splits = decide_splits(&probs, &th);
            let gears = if use_gears {
                Some(decide_gears(&pic.frame, bank, priors.as_ref(), qp).map_err(&fail)?)
            } else {
                None
            };
            let infer_ms = start.elapsed().as_secs_f64() * 1e3;
            let f = fast_encode(&pic.frame, &cost, Some(&splits), gears.as_ref(), EncodeOptions::default());
            let enc = &f.encoding;
            quick.add(qp, enc.total_bits, enc.sse, px, enc.stats.total_leaf_evals(), enc.wall_ms + infer_ms);
            frames_csv.push_str(&format!("fast,{}\n", report_row(&name, qp, enc)));
            skip.merge(&f.skip);
            let r = inference_ratio(&splits);
            for d in 0..4 {
                inference[d] += r[d];
            }
            maps += 1;
            if let Some(g) = &gears {
                let chosen: HashSet<BlockRef> = b.trees.iter().flat_map(|t| t.leaves()).map(|l| l.block).collect();
                for n in b.trace.iter().filter(|n| chosen.contains(&n.block)) {
                    if let Some(mnrc) = n.mnrc {
                        cover.push(CoverRecord {
                            depth: n.block.depth,
                            gear: *g.get(n.block),
                            mnrc,
                        });
                    }
                }
            }
        }
    }

    let mut rows = base.rows("baseline");
    let mut reports = vec![RunReport {
        label: "baseline".into(),
        bd_br_percent: 0.0,
        delta_t: 0.0,
        complexity_reduction: 0.0,
        leaf_evals: base.leaf_evals,
        wall_ms: base.wall_ms,
        cover_rate: [None; 5],
        skip_ratios: [[1.0, 0.0, 0.0]; 4],
        inference_ratio: [0.0; 4],
    }];
    if bank.is_some() {
        rows.extend(quick.rows("fast"));
        let bd = match (base.curve(), quick.curve()) {
            (Some(a), Some(t)) => bd_br(&a, &t).unwrap_or(f64::NAN),
            _ => f64::NAN,
        };
        reports.push(RunReport {
            label: "fast".into(),
            bd_br_percent: bd,
            delta_t: delta_t(base.wall_ms, quick.wall_ms).unwrap_or(f64::NAN),
            complexity_reduction: 1.0 - quick.leaf_evals as f64 / base.leaf_evals.max(1) as f64,
            leaf_evals: quick.leaf_evals,
            wall_ms: quick.wall_ms,
            cover_rate: cover_rate(&cover),
            skip_ratios: std::array::from_fn(|d| skip.ratios(d as u8)),
            inference_ratio: inference.map(|v| v / maps.max(1) as f64),
        });
    }

    let mut w = StageWriter::new(&dir)?;
    w.put(RD_FILE, rd_curve_csv(&rows).as_bytes())?;
    w.put(SUMMARY_FILE, summary_csv(&reports).as_bytes())?;
    w.put(FRAMES_FILE, frames_csv.as_bytes())?;
    if bank.is_some() {
        w.put(SKIP_FILE, skip.to_csv().as_bytes())?;
    }
    let stamp = w.finish(ENCODE, hash, inputs, &cfg.to_toml())?;
    Ok(StageOutcome {
        stage: ENCODE,
        dir,
        skipped: false,
        stamp,
    })
}

/// Reports from an encode stage directory.
pub fn load_summary(up: &Upstream) -> Result<Vec<RunReport>> {
    let text = crate::artifact::read_to_string(&up.path(SUMMARY_FILE))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(RunReport::parse_row)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| LabError::Dependency {
            artifact: up.path(SUMMARY_FILE),
            command: ENCODE,
        })
}
