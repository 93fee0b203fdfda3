use std::collections::BTreeMap;
use std::fmt::Write as _;

use intra_core::MAX_DEPTH;
use intra_fast::dataset_gen::{
    class_balance, encode_mnrc_records, encode_size_records, extract_labels, measure_rates, split_train_val,
};
use intra_fast::qp_adapt::{Priors, MAX_QP, MIN_QP};
use serde::Serialize;

use super::{settings_hash, skip_if_current, ImageEntry, SplitFile, StageOutcome, DATAGEN, SPLIT_FILE};
use crate::artifact::StageWriter;
use crate::config::RunConfig;
use crate::corpus::load_corpus;
use crate::error::{LabError, Result};

pub const PRIORS_FILE: &str = "priors.toml";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn size_file(depth: u8) -> String {
    format!("size_d{depth}.ehic")
}

pub fn mnrc_file(depth: u8) -> String {
    format!("mnrc_d{depth}.ehic")
}

#[derive(Serialize)]
struct Settings<'a> {
    anchor_qps: &'a [u8],
    seed: u64,
}

pub fn run(cfg: &RunConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    let dir = cfg.stage_dir(DATAGEN);
    let pictures = load_corpus(&cfg.corpus)?;
    let inputs: BTreeMap<String, String> = pictures
        .iter()
        .map(|p| (format!("image:{}", p.path.display()), p.hash.clone()))
        .collect();
    let hash = settings_hash(
        DATAGEN,
        &Settings {
            anchor_qps: &cfg.anchor_qps,
            seed: cfg.seed,
        },
    );
    if let Some(done) = skip_if_current(DATAGEN, &dir, &hash, &inputs) {
        return Ok(done);
    }

    let ids: Vec<u32> = pictures.iter().map(|p| p.id).collect();
    let (_, val) = split_train_val(&ids, cfg.seed).map_err(LabError::data)?;
    let split = SplitFile {
        seed: cfg.seed,
        image: pictures
            .iter()
            .map(|p| ImageEntry {
                id: p.id,
                path: p.path.clone(),
                sha256: p.hash.clone(),
                val: val.contains(&p.id),
            })
            .collect(),
    };

    log::info!("datagen: labelling {} pictures at QPs {:?}", pictures.len(), cfg.anchor_qps);
    let corpus: Vec<(u32, &intra_core::Frame)> = pictures.iter().map(|p| (p.id, &p.frame)).collect();
    let ex = extract_labels(&corpus, &cfg.anchor_qps);

    log::info!("datagen: measuring splitting rates on {} validation pictures", val.len());
    let val_frames: Vec<&intra_core::Frame> = pictures.iter().filter(|p| val.contains(&p.id)).map(|p| &p.frame).collect();
    let priors = Priors::derive(measure_rates(&val_frames, MIN_QP..=MAX_QP));

    let mut w = StageWriter::new(&dir)?;
    w.put(SPLIT_FILE, toml::to_string(&split).expect("split serializes").as_bytes())?;
    for depth in 0..MAX_DEPTH {
        w.put(&size_file(depth), &encode_size_records(depth, &ex.size))?;
    }
    for depth in 0..=MAX_DEPTH {
        w.put(&mnrc_file(depth), &encode_mnrc_records(depth, &ex.mnrc))?;
    }
    w.put(PRIORS_FILE, priors.to_toml().as_bytes())?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "# pictures (id, set, path)");
    for e in &split.image {
        let _ = writeln!(manifest, "{} {} {}", e.id, if e.val { "val" } else { "train" }, e.path.display());
    }
    let _ = writeln!(manifest, "# split labels per depth and qp: nonsplit split");
    for ((d, qp), [n, s]) in class_balance(&ex.size) {
        let _ = writeln!(manifest, "size d{d} qp{qp}: {n} {s}");
    }
    let _ = writeln!(manifest, "# gear labels per depth and qp: g1 g2 g3");
    let mut gears: BTreeMap<(u8, u8), [usize; 3]> = BTreeMap::new();
    for m in &ex.mnrc {
        gears.entry((m.depth, m.qp)).or_default()[m.gear_label as usize - 1] += 1;
    }
    for ((d, qp), g) in gears {
        let _ = writeln!(manifest, "mnrc d{d} qp{qp}: {} {} {}", g[0], g[1], g[2]);
    }
    w.put(MANIFEST_FILE, manifest.as_bytes())?;

    let stamp = w.finish(DATAGEN, hash, inputs, &cfg.to_toml())?;
    Ok(StageOutcome {
        stage: DATAGEN,
        dir,
        skipped: false,
        stamp,
    })
}
