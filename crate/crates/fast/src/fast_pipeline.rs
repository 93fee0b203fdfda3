//! Frame preprocessing into split decisions and RDO candidate gears, and
//! the encoder hooks that apply them.

use intra_core::frame::iter_blocks;
use intra_core::intra::{encode_frame, EncodeOptions, EncodeStats, FastHooks, FrameEncoding, SplitDecision};
use intra_core::{BlockRef, CostModel, Frame, MAX_DEPTH};
use serde::{Deserialize, Serialize};

use crate::ak_models::{gear_from_expectations, ModelBank, Task};
use crate::qp_adapt::{adapted_expectations, adapted_split_probs, AdaptError, Priors};

/// Threshold value that no softmax confidence can reach.
pub const DISABLED: f64 = 2.0;
pub const CLASSIFIER_DEPTHS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    /// Confidence thresholds for depths 0..=3.
    pub th: [f64; 4],
}

impl ThresholdVector {
    pub fn new(th: [f64; 4]) -> Self {
        ThresholdVector { th }
    }

    pub fn disabled() -> Self {
        ThresholdVector { th: [DISABLED; 4] }
    }

    pub fn uniform(v: f64) -> Self {
        ThresholdVector { th: [v; 4] }
    }

    pub fn is_disabled(&self, depth: u8) -> bool {
        self.th[depth as usize] > 1.0
    }
}

/// Candidate count for a gear: depths 0–2 {1, 2, 3}, depths 3–4 {2, 5, 8}.
pub fn gear_to_candidates(gear: u8, depth: u8) -> usize {
    assert!((1..=3).contains(&gear), "gear {gear}");
    let table: [usize; 3] = if depth <= 2 { [1, 2, 3] } else { [2, 5, 8] };
    table[gear as usize - 1]
}

/// One value per block for each depth, raster order within a depth.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrid<T> {
    padded_width: usize,
    padded_height: usize,
    levels: Vec<Vec<T>>,
}

impl<T: Clone> BlockGrid<T> {
    pub fn filled(frame: &Frame, depths: usize, value: T) -> Self {
        let levels = (0..depths as u8)
            .map(|d| vec![value.clone(); iter_blocks(frame, d).count()])
            .collect();
        BlockGrid {
            padded_width: frame.padded_width(),
            padded_height: frame.padded_height(),
            levels,
        }
    }

    pub fn get(&self, block: BlockRef) -> &T {
        &self.levels[block.depth as usize][block.grid_index(self.padded_width)]
    }

    pub fn set(&mut self, block: BlockRef, value: T) {
        let i = block.grid_index(self.padded_width);
        self.levels[block.depth as usize][i] = value;
    }

    pub fn level(&self, depth: u8) -> &[T] {
        &self.levels[depth as usize]
    }

    pub fn depths(&self) -> usize {
        self.levels.len()
    }

    pub fn padded_size(&self) -> (usize, usize) {
        (self.padded_width, self.padded_height)
    }

    /// Blocks of `depth` in raster order.
    pub fn blocks(&self, depth: u8) -> impl Iterator<Item = BlockRef> {
        let n = BlockRef::size_at(depth);
        let cols = self.padded_width / n;
        let rows = self.padded_height / n;
        (0..rows).flat_map(move |r| (0..cols).map(move |c| BlockRef::new(c * n, r * n, depth)))
    }
}

/// Classifier outputs `(p_nonsplit, p_split)` for every block at depths 0..=3.
pub type SplitProbabilities = BlockGrid<[f32; 2]>;

fn blocks_of(frame: &Frame, depth: u8) -> Vec<Vec<u8>> {
    iter_blocks(frame, depth).map(|b| frame.block(b)).collect()
}

/// Run the size classifiers over every block of the frame.
pub fn split_probabilities(
    frame: &Frame,
    bank: &ModelBank,
    priors: Option<&Priors>,
    qp: u8,
) -> Result<SplitProbabilities, AdaptError> {
    let mut grid = BlockGrid::filled(frame, CLASSIFIER_DEPTHS, [0.5f32, 0.5]);
    for depth in 0..MAX_DEPTH {
        let blocks = blocks_of(frame, depth);
        let refs: Vec<&[u8]> = blocks.iter().map(Vec::as_slice).collect();
        grid.levels[depth as usize] = adapted_split_probs(bank, priors, depth, &refs, qp)?;
    }
    Ok(grid)
}

pub type SplitDecisionMap = BlockGrid<SplitDecision>;

/// Adopt the classifier's argmax where its confidence reaches the depth's
/// threshold (ties go to split), otherwise leave the node to the RD check.
pub fn decide_from_probabilities(p: [f32; 2], th: f64) -> SplitDecision {
    let conf = p[0].max(p[1]) as f64;
    if conf < th {
        SplitDecision::RdCheck
    } else if p[1] >= p[0] {
        SplitDecision::EarlySplit
    } else {
        SplitDecision::EarlyTerminate
    }
}

pub fn decide_splits(probs: &SplitProbabilities, th: &ThresholdVector) -> SplitDecisionMap {
    BlockGrid {
        padded_width: probs.padded_width,
        padded_height: probs.padded_height,
        levels: probs
            .levels
            .iter()
            .enumerate()
            .map(|(d, level)| level.iter().map(|&p| decide_from_probabilities(p, th.th[d])).collect())
            .collect(),
    }
}

/// Classify and decide in one step.
pub fn decide_splits_for_frame(
    frame: &Frame,
    bank: &ModelBank,
    priors: Option<&Priors>,
    qp: u8,
    th: &ThresholdVector,
) -> Result<SplitDecisionMap, AdaptError> {
    bank.check_complete(Task::Size, 0..MAX_DEPTH)?;
    Ok(decide_splits(&split_probabilities(frame, bank, priors, qp)?, th))
}

/// Whether the search can reach `block` (no ancestor terminated early).
pub fn reachable(map: &SplitDecisionMap, block: BlockRef) -> bool {
    let mut b = block;
    while let Some(p) = b.parent() {
        if *map.get(p) == SplitDecision::EarlyTerminate {
            return false;
        }
        b = p;
    }
    true
}

/// Fraction of blocks per depth whose classifier must run when inference
/// skips descendants of early-terminated nodes.
pub fn inference_ratio(map: &SplitDecisionMap) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (d, slot) in out.iter_mut().enumerate() {
        let blocks: Vec<BlockRef> = map.blocks(d as u8).collect();
        let hit = blocks.iter().filter(|&&b| reachable(map, b)).count();
        *slot = hit as f64 / blocks.len() as f64;
    }
    out
}

/// Gear per PU for depths 0..=4.
pub type GearMap = BlockGrid<u8>;

pub fn uniform_gears(frame: &Frame, gear: u8) -> GearMap {
    BlockGrid::filled(frame, MAX_DEPTH as usize + 1, gear)
}

/// Predicted gears for every PU of every depth.
pub fn decide_gears(frame: &Frame, bank: &ModelBank, priors: Option<&Priors>, qp: u8) -> Result<GearMap, AdaptError> {
    bank.check_complete(Task::Mnrc, 0..=MAX_DEPTH)?;
    gears_for_depths(frame, bank, priors, qp, 0..=MAX_DEPTH)
}

/// Gears from the models of `depths`; other depths stay at gear 3.
pub fn gears_for_depths(
    frame: &Frame,
    bank: &ModelBank,
    priors: Option<&Priors>,
    qp: u8,
    depths: impl IntoIterator<Item = u8>,
) -> Result<GearMap, AdaptError> {
    let mut grid = uniform_gears(frame, 3);
    for depth in depths {
        let blocks = blocks_of(frame, depth);
        let refs: Vec<&[u8]> = blocks.iter().map(Vec::as_slice).collect();
        grid.levels[depth as usize] = adapted_expectations(bank, priors, depth, &refs, qp)?
            .iter()
            .map(gear_from_expectations)
            .collect();
    }
    Ok(grid)
}

/// Number of PUs per gear (index 0 = gear 1) at each depth.
pub fn gear_histogram(map: &GearMap) -> Vec<[u64; 3]> {
    map.levels
        .iter()
        .map(|level| {
            let mut h = [0; 3];
            for &g in level {
                h[g as usize - 1] += 1;
            }
            h
        })
        .collect()
}

/// Encoder hooks backed by precomputed maps. Missing maps behave as the
/// baseline.
#[derive(Clone, Copy, Default)]
pub struct FastPlan<'a> {
    pub splits: Option<&'a SplitDecisionMap>,
    pub gears: Option<&'a GearMap>,
}

impl FastHooks for FastPlan<'_> {
    fn split_decision(&self, block: BlockRef) -> SplitDecision {
        self.splits.map_or(SplitDecision::RdCheck, |m| *m.get(block))
    }

    fn rmd_prefix(&self, block: BlockRef) -> usize {
        let gear = self.gears.map_or(3, |g| *g.get(block));
        gear_to_candidates(gear, block.depth)
    }
}

/// Decision counts per depth: RD check, early termination, early split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkipStats {
    pub counts: [[u64; 3]; 4],
}

pub const SKIP_HEADER: &str = "depth,rd_check_pct,early_terminate_pct,early_split_pct";

impl SkipStats {
    pub fn from_encode(stats: &EncodeStats) -> Self {
        let mut counts = [[0; 3]; 4];
        for (d, c) in counts.iter_mut().enumerate() {
            *c = [stats.rd_check[d], stats.early_terminate[d], stats.early_split[d]];
        }
        SkipStats { counts }
    }

    pub fn merge(&mut self, other: &SkipStats) {
        for d in 0..4 {
            for k in 0..3 {
                self.counts[d][k] += other.counts[d][k];
            }
        }
    }

    /// Fractions of visited nodes per depth; all zero when none visited.
    pub fn ratios(&self, depth: u8) -> [f64; 3] {
        let c = self.counts[depth as usize];
        let total: u64 = c.iter().sum();
        if total == 0 {
            return [0.0; 3];
        }
        c.map(|v| v as f64 / total as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(SKIP_HEADER);
        s.push('\n');
        for d in 0..4u8 {
            let r = self.ratios(d);
            s.push_str(&format!("{d},{:.2},{:.2},{:.2}\n", r[0] * 100.0, r[1] * 100.0, r[2] * 100.0));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct FastEncoding {
    pub encoding: FrameEncoding,
    pub skip: SkipStats,
}

/// Encode with precomputed maps steering the quadtree search.
pub fn fast_encode(
    frame: &Frame,
    cost: &CostModel,
    splits: Option<&SplitDecisionMap>,
    gears: Option<&GearMap>,
    options: EncodeOptions,
) -> FastEncoding {
    let plan = FastPlan { splits, gears };
    let encoding = encode_frame(frame, cost, Some(&plan), options);
    FastEncoding {
        skip: SkipStats::from_encode(&encoding.stats),
        encoding,
    }
}
