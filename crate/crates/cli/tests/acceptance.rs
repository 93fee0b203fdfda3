//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use intra_core::intra::predict::RefSamples;
use intra_core::intra::rdo::rdo_leaf;
use intra_core::intra::rmd::{default_rmd_prefix, rank_modes};
use intra_core::intra::{derive_mpm, encode_frame, CandidateList, EncodeOptions};
use intra_core::{BlockRef, CostModel, IntraMode};
use intra_fast::ak_models::{build_topology, ModelBank, Task, ANCHOR_QPS};
use intra_fast::eotd::{
    archive_filter, moead_run, ContinuousToy, DiscreteToy, FeasibleBox, MoeadParams, Objectives, Oracle, ParetoPoint,
};
use intra_fast::eval_harness::{bd_br, threshold_curves, threshold_grid, RdCurve, RunReport};
use intra_fast::fast_pipeline::{
    decide_splits, fast_encode, split_probabilities, uniform_gears, BlockGrid, ThresholdVector,
};
use intra_fast::qp_adapt::{
    adapted_expectations, adapted_split_probs, coeffs_from_rates, interpolate_prediction, InterpCoeffs, Priors,
    SplittingRateTable,
};
use intra_lab::artifact::require;
use intra_lab::config::{EncodeSet, MnrcSetting, OperatingPoint};
use intra_lab::corpus::load_corpus;
use intra_lab::stages::optimize::{validation_predictions, PointsFile};
use intra_lab::stages::{self, datagen, encode, optimize, train, SplitFile};
use intra_lab::RunConfig;
use intra_nn::gradcheck::{check_network, layer_cases};
use intra_nn::{train as fit, Dataset, LossKind, Targets, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn bundled_corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/corpus")
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

fn identity_equivalence() -> Check {
    let pictures = load_corpus(&[bundled_corpus()]).map_err(|e| e.to_string())?;
    let mut encodes = 0;
    for pic in &pictures {
        // fully confident split predictions: only the disabled thresholds
        // keep them from steering the search
        let probs = BlockGrid::filled(&pic.frame, 4, [0.0f32, 1.0]);
        let splits = decide_splits(&probs, &ThresholdVector::disabled());
        let gears = uniform_gears(&pic.frame, 3);
        for qp in ANCHOR_QPS {
            let cost = CostModel::new(qp);
            let base = encode_frame(&pic.frame, &cost, None, EncodeOptions::default());
            let fast = fast_encode(&pic.frame, &cost, Some(&splits), Some(&gears), EncodeOptions::default()).encoding;
            if base.trees != fast.trees || base.total_bits != fast.total_bits || base.psnr.to_bits() != fast.psnr.to_bits() {
                return Err(format!("{} differs at qp {qp}", pic.path.display()));
            }
            if base.recon != fast.recon || base.stats.total_leaf_evals() != fast.stats.total_leaf_evals() {
                return Err(format!("{} reconstruction or work differs at qp {qp}", pic.path.display()));
            }
            encodes += 1;
        }
    }
    ensure(encodes > 0, format!("{} frames x {} QPs identical", pictures.len(), ANCHOR_QPS.len()))
}

// ---------------------------------------------------------------- 2

fn oracle_optimality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let all: Vec<IntraMode> = IntraMode::all().collect();
    let block = BlockRef::new(0, 0, 3);
    let (mut equal, total) = (0, 200);
    for i in 0..total {
        let smooth = i % 2 == 0;
        let base: i32 = rng.gen_range(20..230);
        let orig: Vec<u8> = (0..64)
            .map(|k| {
                let v = if smooth {
                    base + (k % 8) as i32 * rng.gen_range(-3..=3) + rng.gen_range(-4..=4)
                } else {
                    rng.gen_range(0..256)
                };
                v.clamp(0, 255) as u8
            })
            .collect();
        let top: Vec<i32> = (0..16).map(|_| rng.gen_range(0..256)).collect();
        let left: Vec<i32> = (0..16).map(|_| rng.gen_range(0..256)).collect();
        let refs = RefSamples::from_parts(8, rng.gen_range(0..256), &top, &left);
        let mpm = derive_mpm(IntraMode::new(rng.gen_range(0..35)), IntraMode::new(rng.gen_range(0..35)));
        let cost = CostModel::new(rng.gen_range(22..=37));
        let full = rdo_leaf(block, &orig, &refs, &CandidateList::from_modes(&all), &mpm, &cost);
        let ranking = rank_modes(&orig, &refs, &mpm, &cost);
        let list = CandidateList::build(&ranking, default_rmd_prefix(3), &mpm);
        let pipe = rdo_leaf(block, &orig, &refs, &list, &mpm, &cost);
        if full.j_rdo > pipe.j_rdo {
            return Err(format!("block {i}: full {} > pipeline {}", full.j_rdo, pipe.j_rdo));
        }
        if full.j_rdo == pipe.j_rdo {
            equal += 1;
        }
    }
    Ok(format!("{total}/{total} blocks hold, equality rate {:.1}%", 100.0 * equal as f64 / total as f64))
}

// ---------------------------------------------------------------- 3

fn gradient_checks() -> Check {
    let mut worst: f64 = 0.0;
    let mut kinds = std::collections::BTreeMap::new();
    for (kind, net, batch) in layer_cases(31) {
        let r = check_network(&net, batch, 5, 1e-5);
        worst = worst.max(r.max_rel_error);
        *kinds.entry(kind).or_insert(0) += 1;
        if !(r.max_rel_error < 1e-4) {
            return Err(format!("{kind}: max relative error {:.2e}", r.max_rel_error));
        }
    }
    ensure(
        kinds.values().all(|&n| n == 3),
        format!("{} layer kinds x 3 shapes, max relative error {worst:.2e}", kinds.len()),
    )
}

// ---------------------------------------------------------------- 4

fn exhaustive_front(toy: &DiscreteToy) -> Vec<(f64, f64)> {
    let l = toy.levels;
    let idx = |i: usize| [i % l, (i / l) % l, (i / l / l) % l, i / l / l / l];
    let objs: Vec<Objectives> = (0..l.pow(4)).map(|i| toy.objectives_of(idx(i))).collect();
    let mut front: Vec<(f64, f64)> = Vec::new();
    for o in &objs {
        let dominated = objs.iter().any(|p| p.c >= o.c && p.r <= o.r && (p.c > o.c || p.r < o.r));
        if !dominated && !front.contains(&(o.c, o.r)) {
            front.push((o.c, o.r));
        }
    }
    front.sort_by(|a, b| a.0.total_cmp(&b.0));
    front
}

/// Analytic front of the continuous toy: with m = max normalized gene,
/// C is largest when every gene equals m, so the front is C = R on [0, 1].
/// Cross-checked against a coarse grid scan.
fn continuous_front() -> Vec<(f64, f64)> {
    let step = 0.05;
    let v: Vec<f64> = (0..=10).map(|i| 0.5 + i as f64 * step).collect();
    let mut pts = Vec::new();
    for &a in &v {
        for &b in &v {
            for &c in &v {
                for &d in &v {
                    let obj = ContinuousToy.evaluate(&ThresholdVector::new([a, b, c, d])).unwrap();
                    pts.push(ParetoPoint {
                        th: ThresholdVector::new([a, b, c, d]),
                        obj,
                    });
                }
            }
        }
    }
    archive_filter(&pts).iter().map(|p| (p.obj.c, p.obj.r)).collect()
}

fn distance_to_polyline(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    line.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
        })
        .fold(f64::MAX, f64::min)
}

fn moead_toys() -> Check {
    let toy = DiscreteToy { levels: 4 };
    let front = exhaustive_front(&toy);
    let params = MoeadParams {
        n_sub: 64,
        neighborhood: 8,
        generations: 300,
        stagnation: 100,
        ..MoeadParams::default()
    };
    let run = moead_run(&toy, &FeasibleBox::uniform(0.5, 1.0), &params).map_err(|e| e.to_string())?;
    let got: Vec<(f64, f64)> = run.archive.points().iter().map(|p| (p.obj.c, p.obj.r)).collect();
    if got != front {
        return Err(format!("discrete archive {} points, exhaustive front {}", got.len(), front.len()));
    }

    let line = continuous_front();
    let diagonal = line.iter().all(|&(c, r)| (c - r).abs() < 1e-9);
    let params = MoeadParams {
        n_sub: 101,
        neighborhood: 8,
        generations: 100,
        stagnation: 20,
        archive_capacity: 128,
        ..MoeadParams::default()
    };
    let run = moead_run(&ContinuousToy, &FeasibleBox::uniform(0.5, 1.0), &params).map_err(|e| e.to_string())?;
    let worst = run
        .archive
        .points()
        .iter()
        .map(|p| (p.obj.c - p.obj.r).abs() / 2f64.sqrt())
        .fold(0.0, f64::max);
    let worst_grid = run
        .archive
        .points()
        .iter()
        .map(|p| distance_to_polyline((p.obj.c, p.obj.r), &line))
        .fold(0.0, f64::max);
    ensure(
        diagonal && worst <= 0.01 && worst_grid <= 0.01,
        format!(
            "discrete archive = exhaustive front ({} points); continuous: {} points, max distance {worst:.4} (grid check {worst_grid:.4})",
            front.len(),
            run.archive.len()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn untrained_bank() -> ModelBank {
    let mut bank = ModelBank::new();
    for qp in ANCHOR_QPS {
        for depth in 0..4u8 {
            let net = build_topology(depth, Task::Size, false).unwrap().build_network(depth as u64 * 100 + qp as u64).unwrap();
            bank.insert(Task::Size, depth, qp, net.cast::<f32>(), false);
        }
        for depth in 0..=4u8 {
            let net = build_topology(depth, Task::Mnrc, false).unwrap().build_network(7 + qp as u64).unwrap();
            bank.insert(Task::Mnrc, depth, qp, net.cast::<f32>(), false);
        }
    }
    bank
}

fn interpolation_exactness() -> Check {
    let bank = untrained_bank();
    let mut rates = SplittingRateTable::new();
    for depth in 0..4u8 {
        for qp in 22..=37u8 {
            rates.set(depth, qp, 0.9 - 0.02 * (qp - 22) as f64 - 0.1 * depth as f64);
        }
    }
    let priors = Priors::derive(rates);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut compared = 0;
    for depth in 0..=4u8 {
        let n = BlockRef::size_at(depth);
        let blocks: Vec<Vec<u8>> = (0..6).map(|_| (0..n * n).map(|_| rng.gen()).collect()).collect();
        let refs: Vec<&[u8]> = blocks.iter().map(Vec::as_slice).collect();
        for qp in ANCHOR_QPS {
            if depth < 4 {
                let direct = bank.classify_split(depth, &refs, qp).unwrap();
                let adapted = adapted_split_probs(&bank, Some(&priors), depth, &refs, qp).unwrap();
                let bits = |v: &[[f32; 2]]| v.iter().flat_map(|p| p.map(f32::to_bits)).collect::<Vec<_>>();
                if bits(&direct) != bits(&adapted) {
                    return Err(format!("split probabilities differ at depth {depth}, qp {qp}"));
                }
                let flat: Vec<f64> = direct.iter().flat_map(|p| p.map(f64::from)).collect();
                let c = priors.coeffs(depth, qp).unwrap();
                if c != InterpCoeffs::anchor(qp) || interpolate_prediction(&flat, &flat, &c).unwrap() != flat {
                    return Err(format!("anchor coefficients not the identity at depth {depth}, qp {qp}"));
                }
            }
            let direct = bank.predict_expectations(depth, &refs, qp).unwrap();
            let adapted = adapted_expectations(&bank, Some(&priors), depth, &refs, qp).unwrap();
            if direct.iter().flatten().map(|v| v.to_bits()).ne(adapted.iter().flatten().map(|v| v.to_bits())) {
                return Err(format!("expectations differ at depth {depth}, qp {qp}"));
            }
            compared += 1;
        }
    }
    let (a, b) = coeffs_from_rates(0.8, 0.6, 0.65).ok_or("no coefficients")?;
    ensure(
        a == 0.25 && b == 0.75,
        format!("{compared} anchor (depth, qp) pairs bit-identical; fixture a = {a}, b = {b}"),
    )
}

// ---------------------------------------------------------------- 6

/// Independent BD-BR: cubic through the four points by Lagrange
/// interpolation, averaged with Simpson's rule.
fn bd_br_oracle(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> f64 {
    fn lagrange(pts: &[(f64, f64)], x: f64) -> f64 {
        let mut y = 0.0;
        for (i, &(_, yi)) in pts.iter().enumerate() {
            let mut l = 1.0;
            for (j, &(xj, _)) in pts.iter().enumerate() {
                if i != j {
                    l *= (x - xj) / (pts[i].0 - xj);
                }
            }
            y += yi * l;
        }
        y
    }
    let to = |c: &[(f64, f64)]| c.iter().map(|&(rate, psnr)| (psnr, rate.ln())).collect::<Vec<_>>();
    let (a, t) = (to(anchor), to(test));
    let span = |c: &[(f64, f64)]| c.iter().fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p.0), h.max(p.0)));
    let ((la, ha), (lt, ht)) = (span(&a), span(&t));
    let (lo, hi) = (la.max(lt), ha.min(ht));
    let n = 2000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| lagrange(&t, x) - lagrange(&a, x);
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let avg = s * h / 3.0 / (hi - lo);
    (avg.exp() - 1.0) * 100.0
}

const FIXTURE_ANCHOR: [(f64, f64); 4] = [(1000.0, 30.0), (1800.0, 33.0), (3200.0, 36.0), (6000.0, 39.0)];
const FIXTURE_TEST: [(f64, f64); 4] = [(1100.0, 30.2), (1900.0, 33.1), (3500.0, 36.3), (6300.0, 39.1)];
/// The fixture's BD-BR in percent, computed offline with a numpy
/// polyfit/polyint cubic over the overlapping PSNR range.
const FIXTURE_BD_BR: f64 = 3.5209;

fn bd_br_fixtures() -> Check {
    let curve = |p: &[(f64, f64)]| RdCurve::new(p.to_vec()).unwrap();
    let a = curve(&FIXTURE_ANCHOR);
    let same = bd_br(&a, &a).map_err(|e| e.to_string())?;
    let scaled: Vec<(f64, f64)> = FIXTURE_ANCHOR.iter().map(|&(r, p)| (r * 1.10, p)).collect();
    let ten = bd_br(&a, &curve(&scaled)).map_err(|e| e.to_string())?;
    let pinned = bd_br(&a, &curve(&FIXTURE_TEST)).map_err(|e| e.to_string())?;
    let oracle = bd_br_oracle(&FIXTURE_ANCHOR, &FIXTURE_TEST);
    ensure(
        same.abs() < 0.005 && (ten - 10.0).abs() <= 0.1 && (pinned - FIXTURE_BD_BR).abs() <= 0.01 && (oracle - FIXTURE_BD_BR).abs() <= 0.01,
        format!("identical {same:.4}%, x1.10 {ten:.4}%, fixture {pinned:.4}% (oracle {oracle:.4}%, pinned {FIXTURE_BD_BR}%)"),
    )
}

// ---------------------------------------------------------------- 7

/// 16x16 blocks: flat and vertical-texture blocks are "keep", blocks made
/// of four unrelated quadrants are "split".
fn separable_corpus(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let kind = i % 3;
        let mut block = vec![0u8; 256];
        match kind {
            0 => {
                let v: i32 = rng.gen_range(30..220);
                block.iter_mut().for_each(|p| *p = (v + rng.gen_range(-2..=2)) as u8);
            }
            1 => {
                let period = rng.gen_range(2..6);
                let (lo, hi): (i32, i32) = (rng.gen_range(20..100), rng.gen_range(150..235));
                for (k, p) in block.iter_mut().enumerate() {
                    let on = (k % 16) / period % 2 == 0;
                    *p = (if on { hi } else { lo } + rng.gen_range(-2..=2)) as u8;
                }
            }
            _ => {
                let quad: Vec<(i32, bool)> = (0..4).map(|_| (rng.gen_range(20..235), rng.gen())).collect();
                for (k, p) in block.iter_mut().enumerate() {
                    let (x, y) = (k % 16, k / 16);
                    let (v, stripes) = quad[(y / 8) * 2 + x / 8];
                    let t = if stripes && (x + y) % 4 < 2 { 60 } else { 0 };
                    *p = (v + t + rng.gen_range(-2..=2)).clamp(0, 255) as u8;
                }
            }
        }
        inputs.push(intra_fast::ak_models::normalize_block(&block));
        labels.push(usize::from(kind == 2));
    }
    Dataset {
        inputs,
        targets: Targets::Class {
            rd_loss: vec![1.0; n],
            labels,
        },
    }
}

fn training_sanity() -> Check {
    let (train_set, val_set) = (separable_corpus(600, 1), separable_corpus(300, 2));
    let config = TrainConfig {
        epochs: 30,
        seed: 4,
        ..TrainConfig::default()
    };
    let run = || {
        let net = build_topology(2, Task::Size, false).unwrap().build_network(4).unwrap();
        fit(net, &train_set, Some(&val_set), &config, LossKind::Size { th_rd: 0.02, w: 0.25 }).unwrap()
    };
    let first = run();
    let second = run();
    let acc = first.history[first.best_epoch].val_accuracy.unwrap_or(0.0);
    let deterministic = first.model == second.model && first.history == second.history;
    ensure(
        acc >= 0.95 && deterministic,
        format!("best validation accuracy {:.2}% at epoch {}, rerun identical: {deterministic}", acc * 100.0, first.best_epoch),
    )
}

// ---------------------------------------------------------------- 8-10

/// The full pipeline on the bundled corpus, with the training and search
/// budget used for the desk-scale checks.
fn pipeline_config(output: PathBuf) -> RunConfig {
    let mut cfg = RunConfig {
        corpus: vec![bundled_corpus()],
        output,
        mnrc: MnrcSetting::Conservative,
        ..RunConfig::default()
    };
    cfg.train.epochs = 20;
    cfg.train.decay_every = 10;
    cfg.train.max_samples = 6000;
    cfg.train.max_val_samples = 1000;
    cfg.optimize.use_gears = false;
    cfg
}

struct Pipeline {
    cfg: RunConfig,
    points: PointsFile,
}

fn run_pipeline(cfg: RunConfig) -> Result<Pipeline, String> {
    let start = Instant::now();
    datagen::run(&cfg).map_err(|e| e.to_string())?;
    train::run(&cfg).map_err(|e| e.to_string())?;
    optimize::run(&cfg).map_err(|e| e.to_string())?;
    let opt = require(&cfg.stage_dir(stages::OPTIMIZE), "optimize").map_err(|e| e.to_string())?;
    let points = PointsFile::load(&opt).map_err(|e| e.to_string())?;
    println!("  pipeline: datagen + train + optimize in {:.1} min", start.elapsed().as_secs_f64() / 60.0);
    Ok(Pipeline { cfg, points })
}

fn encode_point(p: &Pipeline, point: OperatingPoint, mnrc: MnrcSetting) -> Result<RunReport, String> {
    let mut cfg = p.cfg.clone();
    cfg.operating_point = point;
    cfg.mnrc = mnrc;
    cfg.encode.set = EncodeSet::Val;
    encode::run(&cfg).map_err(|e| e.to_string())?;
    let enc = require(&cfg.stage_dir(stages::ENCODE), "encode").map_err(|e| e.to_string())?;
    let reports = encode::load_summary(&enc).map_err(|e| e.to_string())?;
    reports.into_iter().find(|r| r.label == "fast").ok_or_else(|| "no fast report".into())
}

fn end_to_end(p: &Pipeline) -> Check {
    for (name, rec) in [("LR", &p.points.lr), ("OT", &p.points.ot), ("HR", &p.points.hr)] {
        println!("  archive {name}: th {:?}, C {:.2}%, BD-BR {:.3}%", rec.th.map(|t| (t * 1000.0).round() / 1000.0), rec.c * 100.0, rec.r);
    }
    let ot = encode_point(p, OperatingPoint::Ot, MnrcSetting::Off)?;
    let lr = encode_point(p, OperatingPoint::Lr, MnrcSetting::Off)?;
    let detail = format!(
        "OT: reduction {:.2}% BD-BR {:.3}% (need >= 40%, <= 4.0%); LR: reduction {:.2}% BD-BR {:.3}% (need >= 15%, <= 1.0%)",
        ot.complexity_reduction * 100.0,
        ot.bd_br_percent,
        lr.complexity_reduction * 100.0,
        lr.bd_br_percent
    );
    ensure(
        ot.complexity_reduction >= 0.40 && ot.bd_br_percent <= 4.0 && lr.bd_br_percent <= 1.0 && lr.complexity_reduction >= 0.15,
        detail,
    )
}

fn monotonicity(p: &Pipeline) -> Check {
    let cfg = &p.cfg;
    let dg = require(&cfg.stage_dir(stages::DATAGEN), "datagen").map_err(|e| e.to_string())?;
    let tr = require(&cfg.stage_dir(stages::TRAIN), "train").map_err(|e| e.to_string())?;
    let split = SplitFile::load(&dg).map_err(|e| e.to_string())?;
    let bank = train::load_bank(&tr).map_err(|e| e.to_string())?;
    let grid = threshold_grid(0.5, 1.0, 0.01);
    let mut worst_drop: f64 = 0.0;
    for depth in 0..4u8 {
        let preds = validation_predictions(&dg, &split, &bank, depth, &cfg.anchor_qps).map_err(|e| e.to_string())?;
        let curve = threshold_curves(&preds, &grid);
        for w in curve.windows(2) {
            if w[1].confident_ratio > w[0].confident_ratio {
                return Err(format!("depth {depth}: confident ratio rises at th {}", w[1].threshold));
            }
            if let (Some(a), Some(b)) = (w[0].accuracy, w[1].accuracy) {
                worst_drop = worst_drop.max(a - b);
                if a - b > 0.01 {
                    let n = preds.len() as f64;
                    return Err(format!(
                        "depth {depth}: accuracy drops {:.2} pp from th {:.2} to {:.2} ({:.0} -> {:.0} of {n} validation samples confident)",
                        (a - b) * 100.0,
                        w[0].threshold,
                        w[1].threshold,
                        w[0].confident_ratio * n,
                        w[1].confident_ratio * n
                    ));
                }
            }
        }
    }

    let pictures = stages::split_pictures(cfg, &split, true).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pairs = 0;
    for pic in &pictures {
        let qp = ANCHOR_QPS[pairs % ANCHOR_QPS.len()];
        let cost = CostModel::new(qp);
        let probs = split_probabilities(&pic.frame, &bank, None, qp).map_err(|e| e.to_string())?;
        let evals = |th: [f64; 4]| {
            let map = decide_splits(&probs, &ThresholdVector::new(th));
            fast_encode(&pic.frame, &cost, Some(&map), None, EncodeOptions::default()).encoding.stats.total_leaf_evals()
        };
        for _ in 0..3 {
            let high: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.5..=1.0));
            let mut low = high;
            let d = rng.gen_range(0..4);
            low[d] = rng.gen_range(0.5..=high[d]);
            let (eh, el) = (evals(high), evals(low));
            if el > eh {
                return Err(format!("lowering th{} from {:.3} to {:.3} raised leaf evaluations {eh} -> {el}", d + 1, high[d], low[d]));
            }
            pairs += 1;
        }
    }
    Ok(format!(
        "confident ratio non-increasing, largest accuracy drop {:.2} pp, {pairs} threshold pairs monotone in leaf evaluations",
        worst_drop * 100.0
    ))
}

fn cover_rate_floor(p: &Pipeline) -> Check {
    let r = encode_point(p, OperatingPoint::Ot, MnrcSetting::Conservative)?;
    let cover: Vec<String> = r.cover_rate.iter().map(|c| c.map_or("n/a".into(), |v| format!("{:.2}%", v * 100.0))).collect();
    let ok = (2..=4).all(|d| r.cover_rate[d].is_some_and(|c| c >= 0.85));
    ensure(ok, format!("cover rate by depth 0-4: {} (need >= 85% at depths 2-4)", cover.join(", ")))
}

fn report(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(d) => println!("PASS {n:>2} {name}: {d} [{secs:.1}s]"),
        Err(d) => println!("FAIL {n:>2} {name}: {d} [{secs:.1}s]"),
    }
    result.is_ok()
}

#[test]
fn acceptance() {
    let mut passed = vec![
        report(1, "identity equivalence", identity_equivalence),
        report(2, "oracle optimality", oracle_optimality),
        report(3, "gradient checks", gradient_checks),
        report(4, "MOEA/D oracle", moead_toys),
        report(5, "interpolation exactness", interpolation_exactness),
        report(6, "BD-BR fixtures", bd_br_fixtures),
        report(7, "training sanity", training_sanity),
    ];
    let dir = tempfile::tempdir().unwrap();
    let pipeline = catch_unwind(AssertUnwindSafe(|| run_pipeline(pipeline_config(dir.path().to_path_buf()))))
        .unwrap_or_else(|_| Err("pipeline panicked".into()));
    match &pipeline {
        Ok(p) => {
            passed.push(report(8, "end-to-end trade-off", || end_to_end(p)));
            passed.push(report(9, "monotonicity", || monotonicity(p)));
            passed.push(report(10, "cover-rate floor", || cover_rate_floor(p)));
        }
        Err(e) => {
            for (n, name) in [(8, "end-to-end trade-off"), (9, "monotonicity"), (10, "cover-rate floor")] {
                passed.push(report(n, name, || Err(format!("pipeline failed: {e}"))));
            }
        }
    }
    let failed: Vec<usize> = passed.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
