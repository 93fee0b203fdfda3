//! Labeled samples from oracle encodes: split labels with RD-loss weights,
//! mode-candidate labels, and the binary sample file format.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use intra_core::intra::{encode_frame, EncodeOptions, NodeTrace, PartitionTree};
use intra_core::{BlockRef, CostModel, Frame, MAX_DEPTH};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ak_models::Task;
use crate::qp_adapt::{leaf_area_by_depth, splitting_rates, SplittingRateTable};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot split a corpus of {0} image(s) into training and validation")]
    TooFewImages(usize),
    #[error("not a sample file (bad magic)")]
    BadMagic,
    #[error("unsupported sample file version {0}")]
    Version(u32),
    #[error("malformed sample file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeSample {
    pub image: u32,
    pub depth: u8,
    pub qp: u8,
    /// 1 when the oracle chose to split.
    pub label: u8,
    pub rd_loss: f64,
    pub block: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MnrcSample {
    pub image: u32,
    pub depth: u8,
    pub qp: u8,
    pub mnrc: u8,
    pub gear_label: u8,
    pub block: Vec<u8>,
}

/// `|J_before − J_after| / (J_before + J_after)`.
pub fn rd_loss(j_before: f64, j_after: f64) -> f64 {
    let sum = j_before + j_after;
    if sum <= 0.0 {
        0.0
    } else {
        (j_before - j_after).abs() / sum
    }
}

/// Gear class of an MNRC value: depths 0–2 map 1, 2, ≥3; depths 3–4 map
/// ≤2, 3–5, ≥6.
pub fn gear_label(mnrc: u8, depth: u8) -> u8 {
    if depth <= 2 {
        mnrc.clamp(1, 3)
    } else if mnrc <= 2 {
        1
    } else if mnrc <= 5 {
        2
    } else {
        3
    }
}

/// Regression targets for each gear label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectationTable {
    pub p: f64,
    pub q: f64,
}

impl ExpectationTable {
    pub const CONSERVATIVE: ExpectationTable = ExpectationTable { p: 0.9, q: 0.8 };
    pub const AGGRESSIVE: ExpectationTable = ExpectationTable { p: 0.5, q: 0.25 };

    pub fn new(p: f64, q: f64) -> Option<Self> {
        (0.0 < q && q < p && p < 1.0).then_some(ExpectationTable { p, q })
    }

    pub fn row(&self, gear_label: u8) -> [f64; 3] {
        match gear_label {
            1 => [1.0, self.p, self.q],
            2 => [0.0, 1.0, self.p],
            3 => [0.0, 0.0, 1.0],
            g => panic!("gear label {g}"),
        }
    }
}

pub fn expectation_targets(sample: &MnrcSample, table: &ExpectationTable) -> [f64; 3] {
    table.row(sample.gear_label)
}

/// Samples from one traced encode. Every CU node where both alternatives
/// were costed yields a size sample; every leaf of the final trees yields
/// an MNRC sample.
pub fn samples_from_trace(
    image: u32,
    frame: &Frame,
    qp: u8,
    trace: &[NodeTrace],
    trees: &[PartitionTree],
) -> (Vec<SizeSample>, Vec<MnrcSample>) {
    let chosen: HashSet<BlockRef> = trees.iter().flat_map(|t| t.leaves()).map(|l| l.block).collect();
    let mut size = Vec::new();
    let mut mnrc = Vec::new();
    for t in trace {
        if let (Some(jl), Some(js)) = (t.j_leaf, t.j_split) {
            size.push(SizeSample {
                image,
                depth: t.block.depth,
                qp,
                label: u8::from(t.split),
                rd_loss: rd_loss(jl, js),
                block: frame.block(t.block),
            });
        }
        if let Some(r) = t.mnrc.filter(|_| chosen.contains(&t.block)) {
            mnrc.push(MnrcSample {
                image,
                depth: t.block.depth,
                qp,
                mnrc: r,
                gear_label: gear_label(r, t.block.depth),
                block: frame.block(t.block),
            });
        }
    }
    (size, mnrc)
}

#[derive(Clone, Debug, Default)]
pub struct Extraction {
    pub size: Vec<SizeSample>,
    pub mnrc: Vec<MnrcSample>,
    /// Leaf area per depth, per QP, over all encoded images.
    pub leaf_area: Vec<(u8, [u64; 5])>,
}

impl Extraction {
    pub fn splitting_rates(&self) -> SplittingRateTable {
        let mut t = SplittingRateTable::new();
        for (qp, area) in &self.leaf_area {
            for (d, p) in splitting_rates(area).into_iter().enumerate() {
                if let Some(p) = p {
                    t.set(d as u8, *qp, p);
                }
            }
        }
        t
    }
}

/// Encode each image at each QP with the baseline and collect labels.
pub fn extract_labels(corpus: &[(u32, &Frame)], qps: &[u8]) -> Extraction {
    let mut out = Extraction::default();
    for &qp in qps {
        let cost = CostModel::new(qp);
        let mut area = [0u64; 5];
        for &(id, frame) in corpus {
            let enc = encode_frame(frame, &cost, None, EncodeOptions { trace: true });
            let (s, m) = samples_from_trace(id, frame, qp, &enc.trace, &enc.trees);
            out.size.extend(s);
            out.mnrc.extend(m);
            let a = leaf_area_by_depth(&enc.trees);
            for d in 0..5 {
                area[d] += a[d];
            }
        }
        out.leaf_area.push((qp, area));
    }
    out
}

/// Splitting rates measured on `frames` at each of `qps`.
pub fn measure_rates(frames: &[&Frame], qps: impl IntoIterator<Item = u8>) -> SplittingRateTable {
    let mut t = SplittingRateTable::new();
    for qp in qps {
        let cost = CostModel::new(qp);
        let trees: Vec<_> = frames
            .iter()
            .flat_map(|f| encode_frame(f, &cost, None, EncodeOptions::default()).trees)
            .collect();
        for (d, p) in splitting_rates(&leaf_area_by_depth(&trees)).into_iter().enumerate() {
            if let Some(p) = p {
                t.set(d as u8, qp, p);
            }
        }
    }
    t
}

/// Shuffle image ids and hold out a tenth (at least one) for validation.
pub fn split_train_val(images: &[u32], seed: u64) -> Result<(Vec<u32>, Vec<u32>), DatasetError> {
    if images.len() < 2 {
        return Err(DatasetError::TooFewImages(images.len()));
    }
    let mut ids = images.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((ids.len() as f64 * 0.1).round() as usize).clamp(1, ids.len() - 1);
    let val = ids.split_off(ids.len() - n_val);
    Ok((ids, val))
}

/// Split-label counts `[non-split, split]` per (depth, qp).
pub fn class_balance(samples: &[SizeSample]) -> Vec<((u8, u8), [usize; 2])> {
    let mut m = std::collections::BTreeMap::new();
    for s in samples {
        m.entry((s.depth, s.qp)).or_insert([0usize; 2])[s.label as usize] += 1;
    }
    m.into_iter().collect()
}

const MAGIC: &[u8; 4] = b"EHIC";
const VERSION: u32 = 1;

fn record_width(task: Task, depth: u8) -> usize {
    let n = BlockRef::size_at(depth);
    // image, qp, label, extra (rd_loss or gear label), block
    4 + 1 + 1 + if task == Task::Size { 8 } else { 1 } + n * n
}

fn header(task: Task, depth: u8, count: usize) -> Vec<u8> {
    let mut h = Vec::with_capacity(14);
    h.extend_from_slice(MAGIC);
    h.extend_from_slice(&VERSION.to_le_bytes());
    h.push(match task {
        Task::Size => 0,
        Task::Mnrc => 1,
    });
    h.push(depth);
    h.extend_from_slice(&(count as u32).to_le_bytes());
    h
}

/// Size samples of one depth as fixed-width records.
pub fn encode_size_records(depth: u8, samples: &[SizeSample]) -> Vec<u8> {
    let chosen: Vec<&SizeSample> = samples.iter().filter(|s| s.depth == depth).collect();
    let mut out = header(Task::Size, depth, chosen.len());
    for s in chosen {
        out.extend_from_slice(&s.image.to_le_bytes());
        out.push(s.qp);
        out.push(s.label);
        out.extend_from_slice(&s.rd_loss.to_le_bytes());
        out.extend_from_slice(&s.block);
    }
    out
}

pub fn encode_mnrc_records(depth: u8, samples: &[MnrcSample]) -> Vec<u8> {
    let chosen: Vec<&MnrcSample> = samples.iter().filter(|s| s.depth == depth).collect();
    let mut out = header(Task::Mnrc, depth, chosen.len());
    for s in chosen {
        out.extend_from_slice(&s.image.to_le_bytes());
        out.push(s.qp);
        out.push(s.mnrc);
        out.push(s.gear_label);
        out.extend_from_slice(&s.block);
    }
    out
}

fn parse_header(bytes: &[u8], task: Task) -> Result<(u8, usize, &[u8]), DatasetError> {
    if bytes.len() < 14 {
        return Err(DatasetError::Malformed("short header".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(DatasetError::Version(version));
    }
    let want = if task == Task::Size { 0 } else { 1 };
    if bytes[8] != want {
        return Err(DatasetError::Malformed(format!("record tag {} where {want} expected", bytes[8])));
    }
    let depth = bytes[9];
    if depth > MAX_DEPTH || (task == Task::Size && depth == MAX_DEPTH) {
        return Err(DatasetError::Malformed(format!("depth {depth}")));
    }
    let count = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let body = &bytes[14..];
    if body.len() != count * record_width(task, depth) {
        return Err(DatasetError::Malformed(format!(
            "{} body bytes for {count} records of {}",
            body.len(),
            record_width(task, depth)
        )));
    }
    Ok((depth, count, body))
}

pub fn decode_size_records(bytes: &[u8]) -> Result<Vec<SizeSample>, DatasetError> {
    let (depth, _, body) = parse_header(bytes, Task::Size)?;
    Ok(body
        .chunks_exact(record_width(Task::Size, depth))
        .map(|r| SizeSample {
            image: u32::from_le_bytes(r[0..4].try_into().expect("4")),
            depth,
            qp: r[4],
            label: r[5],
            rd_loss: f64::from_le_bytes(r[6..14].try_into().expect("8")),
            block: r[14..].to_vec(),
        })
        .collect())
}

pub fn decode_mnrc_records(bytes: &[u8]) -> Result<Vec<MnrcSample>, DatasetError> {
    let (depth, _, body) = parse_header(bytes, Task::Mnrc)?;
    Ok(body
        .chunks_exact(record_width(Task::Mnrc, depth))
        .map(|r| MnrcSample {
            image: u32::from_le_bytes(r[0..4].try_into().expect("4")),
            depth,
            qp: r[4],
            mnrc: r[5],
            gear_label: r[6],
            block: r[7..].to_vec(),
        })
        .collect())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seed: usize) -> Frame {
        let luma: Vec<u8> = (0..64 * 64)
            .map(|i| {
                let (x, y) = (i % 64, i / 64);
                (100.0 + 60.0 * ((x + seed) as f64 / 6.0).sin() + if y > 30 { 40.0 } else { 0.0 }) as u8
            })
            .collect();
        Frame::from_luma(64, 64, &luma).unwrap()
    }

    #[test]
    fn rd_loss_examples() {
        assert_eq!(rd_loss(5.0, 5.0), 0.0);
        assert_eq!(rd_loss(3.0, 1.0), 0.5);
        assert_eq!(rd_loss(0.0, 0.0), 0.0);
    }

    #[test]
    fn gear_boundaries() {
        for d in 0..5 {
            assert_eq!(gear_label(1, d), 1);
        }
        assert_eq!(gear_label(2, 1), 2);
        assert_eq!(gear_label(3, 2), 3);
        assert_eq!(gear_label(2, 3), 1);
        assert_eq!(gear_label(3, 4), 2);
        assert_eq!(gear_label(5, 3), 2);
        assert_eq!(gear_label(6, 3), 3);
        assert_eq!(gear_label(8, 4), 3);
    }

    #[test]
    fn expectation_rows() {
        let t = ExpectationTable::CONSERVATIVE;
        assert_eq!(t.row(1), [1.0, 0.9, 0.8]);
        assert_eq!(t.row(2), [0.0, 1.0, 0.9]);
        assert_eq!(t.row(3), [0.0, 0.0, 1.0]);
        assert!(ExpectationTable::new(0.5, 0.6).is_none());
        assert!(ExpectationTable::new(0.5, 0.25).is_some());
    }

    #[test]
    fn labels_follow_the_trace() {
        let f = frame(0);
        let enc = encode_frame(&f, &CostModel::new(27), None, EncodeOptions { trace: true });
        let (size, mnrc) = samples_from_trace(7, &f, 27, &enc.trace, &enc.trees);
        assert_eq!(size.len(), 1 + 4 + 16 + 64);
        assert_eq!(mnrc.len(), enc.trees[0].leaves().len());
        assert!(size.iter().all(|s| (0.0..=1.0).contains(&s.rd_loss)));
        let root = size.iter().find(|s| s.depth == 0).unwrap();
        assert_eq!(root.label, u8::from(enc.trees[0].split));
        for m in &mnrc {
            let cap = if m.depth <= 2 { 3 } else { 8 };
            assert!(m.mnrc >= 1 && m.mnrc <= cap);
            assert_eq!(m.block.len(), BlockRef::size_at(m.depth).pow(2));
        }
        // re-encoding reproduces every label
        let again = encode_frame(&f, &CostModel::new(27), None, EncodeOptions { trace: true });
        assert_eq!(samples_from_trace(7, &f, 27, &again.trace, &again.trees), (size, mnrc));
    }

    #[test]
    fn split_is_image_grouped_and_seeded() {
        let ids: Vec<u32> = (0..10).collect();
        let (tr, va) = split_train_val(&ids, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (9, 1));
        assert_eq!(split_train_val(&ids, 3).unwrap(), (tr.clone(), va.clone()));
        assert!(va.iter().all(|v| !tr.contains(v)));
        assert!(matches!(split_train_val(&[4], 0), Err(DatasetError::TooFewImages(1))));
        let (tr, va) = split_train_val(&(0..50).collect::<Vec<_>>(), 1).unwrap();
        assert_eq!((tr.len(), va.len()), (45, 5));
    }

    #[test]
    fn record_files_round_trip() {
        let f = frame(3);
        let ex = extract_labels(&[(1, &f), (2, &frame(9))], &[22, 37]);
        for depth in 0..4 {
            let bytes = encode_size_records(depth, &ex.size);
            let back = decode_size_records(&bytes).unwrap();
            let want: Vec<SizeSample> = ex.size.iter().filter(|s| s.depth == depth).cloned().collect();
            assert_eq!(back, want);
        }
        for depth in 0..5 {
            let bytes = encode_mnrc_records(depth, &ex.mnrc);
            let back = decode_mnrc_records(&bytes).unwrap();
            assert_eq!(back.len(), ex.mnrc.iter().filter(|s| s.depth == depth).count());
        }
        let mut bad = encode_size_records(1, &ex.size);
        bad[0] = b'X';
        assert!(matches!(decode_size_records(&bad), Err(DatasetError::BadMagic)));
        let good = encode_size_records(1, &ex.size);
        assert!(decode_size_records(&good[..good.len() - 1]).is_err());
        assert!(decode_mnrc_records(&good).is_err());
    }

    #[test]
    fn rates_from_extraction() {
        let f = frame(1);
        let ex = extract_labels(&[(0, &f)], &[22, 37]);
        let rates = ex.splitting_rates();
        assert!(rates.get(0, 22).is_some());
        assert!(rates.iter().all(|(_, _, p)| (0.0..=1.0).contains(&p)));
        let measured = measure_rates(&[&f], [22, 37]);
        assert_eq!(measured.get(0, 22), rates.get(0, 22));
        let balance = class_balance(&ex.size);
        assert_eq!(balance.iter().map(|(_, c)| c[0] + c[1]).sum::<usize>(), ex.size.len());
    }
}
