use std::fmt::Write as _;

use intra_core::MAX_DEPTH;
use intra_fast::ak_models::{build_topology, normalize_block, ModelBank, Task};
use intra_fast::dataset_gen::{decode_mnrc_records, decode_size_records, ExpectationTable, MnrcSample, SizeSample};
use intra_nn::{train, Dataset, LossKind, Targets, TrainConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::datagen::{mnrc_file, size_file};
use super::{settings_hash, skip_if_current, upstream_inputs, SplitFile, StageOutcome, DATAGEN, TRAIN};
use crate::artifact::{require, StageWriter};
use crate::config::{MnrcSetting, RunConfig, TrainSection};
use crate::error::{LabError, Result};

pub const BANK_FILE: &str = "models.akcn";
pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "train_summary.txt";

#[derive(Serialize)]
struct Settings<'a> {
    train: &'a TrainSection,
    mnrc: MnrcSetting,
    anchor_qps: &'a [u8],
    seed: u64,
}

fn model_seed(seed: u64, task: Task, depth: u8, qp: u8) -> u64 {
    let t = match task {
        Task::Size => 0,
        Task::Mnrc => 1,
    };
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (t << 16 | (depth as u64) << 8 | qp as u64)
}

fn subsample<T: Clone>(mut items: Vec<T>, cap: usize, seed: u64) -> Vec<T> {
    if items.len() > cap {
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        items.truncate(cap);
    }
    items
}

pub fn size_dataset(samples: &[&SizeSample]) -> Dataset {
    Dataset {
        inputs: samples.iter().map(|s| normalize_block(&s.block)).collect(),
        targets: Targets::Class {
            labels: samples.iter().map(|s| s.label as usize).collect(),
            rd_loss: samples.iter().map(|s| s.rd_loss).collect(),
        },
    }
}

pub fn mnrc_dataset(samples: &[&MnrcSample], table: &ExpectationTable) -> Dataset {
    Dataset {
        inputs: samples.iter().map(|s| normalize_block(&s.block)).collect(),
        targets: Targets::Regression(samples.iter().map(|s| table.row(s.gear_label).to_vec()).collect()),
    }
}

/// One model's training data, already capped.
struct Job {
    task: Task,
    depth: u8,
    qp: u8,
    train: Dataset,
    val: Dataset,
}

pub fn run(cfg: &RunConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.stage_dir(TRAIN);
    let up = require(&cfg.stage_dir(DATAGEN), DATAGEN)?;
    let inputs = upstream_inputs(&[&up]);
    let hash = settings_hash(
        TRAIN,
        &Settings {
            train: &cfg.train,
            mnrc: cfg.mnrc,
            anchor_qps: &cfg.anchor_qps,
            seed: cfg.seed,
        },
    );
    if let Some(done) = skip_if_current(TRAIN, &dir, &hash, &inputs) {
        return Ok(done);
    }
    let split = SplitFile::load(&up)?;
    let t = &cfg.train;
    let dep = |name: String| LabError::Dependency {
        artifact: up.path(&name),
        command: DATAGEN,
    };

    let mut jobs = Vec::new();
    let mut summary = String::new();
    for depth in 0..MAX_DEPTH {
        let bytes = std::fs::read(up.path(&size_file(depth))).map_err(|_| dep(size_file(depth)))?;
        let samples = decode_size_records(&bytes).map_err(|_| dep(size_file(depth)))?;
        for &qp in &cfg.anchor_qps {
            let seed = model_seed(cfg.seed, Task::Size, depth, qp);
            let (val, tr): (Vec<&SizeSample>, Vec<&SizeSample>) =
                samples.iter().filter(|s| s.qp == qp).partition(|s| split.is_val(s.image));
            let mut hist = [0usize; 2];
            tr.iter().for_each(|s| hist[s.label as usize] += 1);
            let _ = writeln!(summary, "size d{depth} qp{qp}: train {} (nonsplit {}, split {}), val {}", tr.len(), hist[0], hist[1], val.len());
            if hist[0] == 0 || hist[1] == 0 {
                return Err(LabError::data(format!(
                    "split labels at depth {depth}, qp {qp} hold a single class ({} nonsplit, {} split); the corpus cannot train this classifier",
                    hist[0], hist[1]
                )));
            }
            if val.is_empty() {
                return Err(LabError::data(format!("no validation samples at depth {depth}, qp {qp}")));
            }
            jobs.push(Job {
                task: Task::Size,
                depth,
                qp,
                train: size_dataset(&subsample(tr, t.max_samples, seed)),
                val: size_dataset(&subsample(val, t.max_val_samples, seed ^ 1)),
            });
        }
    }
    if let Some(table) = cfg.mnrc.table() {
        for depth in 0..=MAX_DEPTH {
            let bytes = std::fs::read(up.path(&mnrc_file(depth))).map_err(|_| dep(mnrc_file(depth)))?;
            let samples = decode_mnrc_records(&bytes).map_err(|_| dep(mnrc_file(depth)))?;
            for &qp in &cfg.anchor_qps {
                let seed = model_seed(cfg.seed, Task::Mnrc, depth, qp);
                let (val, tr): (Vec<&MnrcSample>, Vec<&MnrcSample>) =
                    samples.iter().filter(|s| s.qp == qp).partition(|s| split.is_val(s.image));
                let mut hist = [0usize; 3];
                tr.iter().for_each(|s| hist[s.gear_label as usize - 1] += 1);
                let _ = writeln!(summary, "mnrc d{depth} qp{qp}: train {} (gears {hist:?}), val {}", tr.len(), val.len());
                if tr.is_empty() {
                    return Err(LabError::data(format!("no mode-candidate training samples at depth {depth}, qp {qp}")));
                }
                if val.is_empty() {
                    log::warn!("mnrc d{depth} qp{qp}: no validation samples, keeping the last epoch");
                }
                jobs.push(Job {
                    task: Task::Mnrc,
                    depth,
                    qp,
                    train: mnrc_dataset(&subsample(tr, t.max_samples, seed), &table),
                    val: mnrc_dataset(&subsample(val, t.max_val_samples, seed ^ 1), &table),
                });
            }
        }
    }

    let mut bank = ModelBank::new();
    let mut history = String::from("task,depth,qp,epoch,learning_rate,train_loss,val_loss,val_accuracy\n");
    for job in jobs {
        let topo = build_topology(job.depth, job.task, t.square_kernels).map_err(LabError::config)?;
        let seed = model_seed(cfg.seed, job.task, job.depth, job.qp);
        let net = topo.build_network(seed).map_err(LabError::config)?;
        let config = TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            decay_every: t.decay_every,
            batch_size: t.batch_size,
            seed,
            ..TrainConfig::default()
        };
        let loss = match job.task {
            Task::Size => LossKind::Size { th_rd: t.th_rd, w: t.w },
            Task::Mnrc => LossKind::Mnrc,
        };
        log::info!(
            "train: {} d{} qp{} on {} samples ({} val)",
            job.task,
            job.depth,
            job.qp,
            job.train.len(),
            job.val.len()
        );
        let val = (!job.val.is_empty()).then_some(&job.val);
        let out = train(net, &job.train, val, &config, loss)
            .map_err(|e| LabError::data(format!("{} d{} qp{}: {e}", job.task, job.depth, job.qp)))?;
        for m in &out.history {
            let _ = writeln!(
                history,
                "{},{},{},{},{},{},{},{}",
                job.task,
                job.depth,
                job.qp,
                m.epoch,
                m.learning_rate,
                m.train_loss,
                m.val_loss.map(|v| v.to_string()).unwrap_or_default(),
                m.val_accuracy.map(|v| v.to_string()).unwrap_or_default()
            );
        }
        let best = &out.history[out.best_epoch];
        let _ = writeln!(
            summary,
            "{} d{} qp{}: best epoch {} val loss {:.5}{}",
            job.task,
            job.depth,
            job.qp,
            out.best_epoch,
            best.val_loss.unwrap_or(f64::NAN),
            best.val_accuracy.map(|a| format!(" val accuracy {:.4}", a)).unwrap_or_default()
        );
        bank.insert(job.task, job.depth, job.qp, out.model.cast::<f32>(), t.square_kernels);
    }

    let mut w = StageWriter::new(&dir)?;
    w.put(BANK_FILE, &bank.to_bytes())?;
    w.put(HISTORY_FILE, history.as_bytes())?;
    w.put(SUMMARY_FILE, summary.as_bytes())?;
    let stamp = w.finish(TRAIN, hash, inputs, &cfg.to_toml())?;
    Ok(StageOutcome {
        stage: TRAIN,
        dir,
        skipped: false,
        stamp,
    })
}

pub fn load_bank(up: &crate::artifact::Upstream) -> Result<ModelBank> {
    ModelBank::from_bytes(&std::fs::read(up.path(BANK_FILE)).map_err(|e| LabError::io(up.path(BANK_FILE), e))?)
        .map_err(|_| LabError::Dependency {
            artifact: up.path(BANK_FILE),
            command: TRAIN,
        })
}

