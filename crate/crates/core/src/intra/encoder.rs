use std::fmt::Write as _;
use std::time::Instant;

use crate::frame::{BlockRef, Frame, CTU_SIZE, MAX_DEPTH};
use crate::metrics::psnr_from_sse;

use super::cost::{CostModel, PARTITION_FLAG_BITS};
use super::mpm::block_mpm;
use super::predict::RefSamples;
use super::rdo::{rdo_leaf, LeafResult};
use super::rmd::{default_rmd_prefix, rank_modes, CandidateList};
use super::{IntraMode, ReconState};

/// What a fast path wants done at a CU node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitDecision {
    /// Skip the leaf, go straight to the four children.
    EarlySplit,
    /// Evaluate the leaf only.
    EarlyTerminate,
    /// Evaluate both and compare.
    RdCheck,
}

/// Per-node decisions injected into the quadtree search. Implementations
/// must depend on original samples only, never on the reconstruction.
pub trait FastHooks {
    /// Called for depths 0..=3.
    fn split_decision(&self, block: BlockRef) -> SplitDecision;
    /// Number of leading RMD modes passed to RDO.
    fn rmd_prefix(&self, block: BlockRef) -> usize;
}

/// The unmodified exhaustive search.
#[derive(Clone, Copy, Debug, Default)]
pub struct Baseline;

impl FastHooks for Baseline {
    fn split_decision(&self, _block: BlockRef) -> SplitDecision {
        SplitDecision::RdCheck
    }

    fn rmd_prefix(&self, block: BlockRef) -> usize {
        default_rmd_prefix(block.depth)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncodeStats {
    /// Leaf RD evaluations per depth.
    pub leaf_evals: [u64; 5],
    /// Modes sent through RDO per depth.
    pub rdo_candidates: [u64; 5],
    pub early_split: [u64; 4],
    pub early_terminate: [u64; 4],
    pub rd_check: [u64; 4],
}

impl EncodeStats {
    pub fn total_leaf_evals(&self) -> u64 {
        self.leaf_evals.iter().sum()
    }

    pub fn total_rdo_candidates(&self) -> u64 {
        self.rdo_candidates.iter().sum()
    }

    pub fn merge(&mut self, other: &EncodeStats) {
        for d in 0..5 {
            self.leaf_evals[d] += other.leaf_evals[d];
            self.rdo_candidates[d] += other.rdo_candidates[d];
        }
        for d in 0..4 {
            self.early_split[d] += other.early_split[d];
            self.early_terminate[d] += other.early_terminate[d];
            self.rd_check[d] += other.rd_check[d];
        }
    }
}

/// What the search saw at one node, for dataset generation.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTrace {
    pub block: BlockRef,
    /// Leaf cost including signaling, if the leaf was evaluated.
    pub j_leaf: Option<f64>,
    /// Split cost including signaling, if the split was evaluated.
    pub j_split: Option<f64>,
    pub split: bool,
    /// Best mode of the evaluated leaf.
    pub leaf_mode: Option<IntraMode>,
    /// 1-based rank of `leaf_mode` in the full RMD ranking, capped at the
    /// default prefix length of the depth.
    pub mnrc: Option<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTree {
    pub block: BlockRef,
    pub split: bool,
    pub children: Vec<PartitionTree>,
    pub leaf: Option<LeafResult>,
    pub j_subtree: f64,
    /// Bits of the subtree including signaling.
    pub bits: u64,
}

impl PartitionTree {
    /// Chosen leaves in z-order.
    pub fn leaves(&self) -> Vec<&LeafResult> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a LeafResult>) {
        match &self.leaf {
            Some(l) => out.push(l),
            None => self.children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// Number of split flags / PU-size flags signaled inside the subtree.
    pub fn signaling_bits(&self) -> u64 {
        let own = if self.block.depth < MAX_DEPTH {
            PARTITION_FLAG_BITS as u64
        } else {
            0
        };
        own + self.children.iter().map(|c| c.signaling_bits()).sum::<u64>()
    }

    pub fn sse(&self) -> u64 {
        self.leaves().iter().map(|l| l.sse).sum()
    }

    /// Preorder "x y size split mode j" lines.
    pub fn dump(&self, out: &mut String) {
        let mode = match &self.leaf {
            Some(l) => l.mode.index().to_string(),
            None => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "{} {} {} {} {} {:.4}",
            self.block.x,
            self.block.y,
            self.block.size(),
            u8::from(self.split),
            mode,
            self.j_subtree
        );
        for c in &self.children {
            c.dump(out);
        }
    }

    /// Depth of the chosen CU covering each 8×8 unit, with 4 for a 4×4 PU
    /// split.
    pub fn depth_at(&self, x: usize, y: usize) -> u8 {
        if !self.split {
            return self.block.depth;
        }
        let half = self.block.size() / 2;
        let i = usize::from(x >= self.block.x + half) + 2 * usize::from(y >= self.block.y + half);
        self.children[i].depth_at(x, y)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EncodeOptions {
    /// Record a [`NodeTrace`] per evaluated node.
    pub trace: bool,
}

#[derive(Clone, Debug)]
pub struct FrameEncoding {
    pub trees: Vec<PartitionTree>,
    pub total_bits: u64,
    pub sse: u64,
    pub psnr: f64,
    pub stats: EncodeStats,
    pub wall_ms: f64,
    pub trace: Vec<NodeTrace>,
    pub recon: Frame,
}

impl FrameEncoding {
    pub fn dump_trees(&self) -> String {
        let mut s = String::new();
        for t in &self.trees {
            t.dump(&mut s);
        }
        s
    }
}

struct Search<'a> {
    frame: &'a Frame,
    cost: &'a CostModel,
    hooks: &'a dyn FastHooks,
    state: ReconState,
    stats: EncodeStats,
    trace: Option<Vec<NodeTrace>>,
}

impl Search<'_> {
    fn flag_cost(&self, depth: u8) -> (u64, f64) {
        if depth < MAX_DEPTH {
            let b = PARTITION_FLAG_BITS as u64;
            (b, self.cost.lambda() * b as f64)
        } else {
            (0, 0.0)
        }
    }

    fn evaluate_leaf(&mut self, block: BlockRef) -> (LeafResult, u8) {
        let d = block.depth as usize;
        let refs = RefSamples::gather(&self.state, block);
        let mpm = block_mpm(&self.state, block);
        let original = self.frame.block(block);
        let ranking = rank_modes(&original, &refs, &mpm, self.cost);
        let prefix = self.hooks.rmd_prefix(block).max(1);
        let candidates = CandidateList::build(&ranking, prefix, &mpm);
        let leaf = rdo_leaf(block, &original, &refs, &candidates, &mpm, self.cost);
        self.stats.leaf_evals[d] += 1;
        self.stats.rdo_candidates[d] += candidates.len() as u64;
        let cap = default_rmd_prefix(block.depth);
        let rank = ranking
            .iter()
            .position(|c| c.mode == leaf.mode)
            .expect("ranking holds every mode")
            + 1;
        (leaf, rank.min(cap) as u8)
    }

    fn node(&mut self, block: BlockRef) -> PartitionTree {
        let depth = block.depth;
        let d = depth as usize;
        let decision = if depth < MAX_DEPTH {
            let dec = self.hooks.split_decision(block);
            match dec {
                SplitDecision::EarlySplit => self.stats.early_split[d] += 1,
                SplitDecision::EarlyTerminate => self.stats.early_terminate[d] += 1,
                SplitDecision::RdCheck => self.stats.rd_check[d] += 1,
            }
            dec
        } else {
            SplitDecision::EarlyTerminate
        };
        let (flag_bits, flag_j) = self.flag_cost(depth);

        let leaf = if decision != SplitDecision::EarlySplit {
            let (leaf, mnrc) = self.evaluate_leaf(block);
            self.state.commit(block, &leaf.reconstruction, leaf.mode);
            Some((leaf, mnrc))
        } else {
            None
        };

        let children = if decision != SplitDecision::EarlyTerminate {
            if leaf.is_some() {
                self.state.uncommit(block);
            }
            let kids: Vec<PartitionTree> = block.children().into_iter().map(|c| self.node(c)).collect();
            Some(kids)
        } else {
            None
        };

        let j_leaf = leaf.as_ref().map(|(l, _)| l.j_rdo + flag_j);
        let j_split = children
            .as_ref()
            .map(|k| k.iter().map(|c| c.j_subtree).sum::<f64>() + flag_j);
        let take_split = match (j_leaf, j_split) {
            (Some(jl), Some(js)) => js < jl,
            (None, Some(_)) => true,
            _ => false,
        };

        if let Some(trace) = self.trace.as_mut() {
            trace.push(NodeTrace {
                block,
                j_leaf,
                j_split,
                split: take_split,
                leaf_mode: leaf.as_ref().map(|(l, _)| l.mode),
                mnrc: leaf.as_ref().map(|(_, r)| *r),
            });
        }

        if take_split {
            let children = children.expect("split evaluated");
            let bits = children.iter().map(|c| c.bits).sum::<u64>() + flag_bits;
            PartitionTree {
                block,
                split: true,
                children,
                leaf: None,
                j_subtree: j_split.expect("split evaluated"),
                bits,
            }
        } else {
            let (leaf, _) = leaf.expect("leaf evaluated");
            if children.is_some() {
                self.state.commit(block, &leaf.reconstruction, leaf.mode);
            }
            PartitionTree {
                block,
                split: false,
                children: Vec::new(),
                bits: leaf.r_total + flag_bits,
                j_subtree: j_leaf.expect("leaf evaluated"),
                leaf: Some(leaf),
            }
        }
    }
}

/// Exhaustive search of one CTU, committing the chosen reconstruction to
/// `state`.
pub fn encode_ctu_full(
    frame: &Frame,
    ctu: BlockRef,
    state: &mut ReconState,
    cost: &CostModel,
) -> PartitionTree {
    encode_ctu(frame, ctu, state, cost, &Baseline, &mut EncodeStats::default(), None)
}

/// One CTU under arbitrary hooks.
pub fn encode_ctu(
    frame: &Frame,
    ctu: BlockRef,
    state: &mut ReconState,
    cost: &CostModel,
    hooks: &dyn FastHooks,
    stats: &mut EncodeStats,
    trace: Option<&mut Vec<NodeTrace>>,
) -> PartitionTree {
    assert_eq!(ctu.depth, 0, "CTU root must be depth 0");
    assert!(ctu.x % CTU_SIZE == 0 && ctu.y % CTU_SIZE == 0, "unaligned CTU");
    let mut search = Search {
        frame,
        cost,
        hooks,
        state: std::mem::replace(state, ReconState::with_size(4, 4)),
        stats: std::mem::take(stats),
        trace: trace.as_ref().map(|_| Vec::new()),
    };
    let tree = search.node(ctu);
    *state = search.state;
    *stats = search.stats;
    if let (Some(t), Some(found)) = (trace, search.trace) {
        t.extend(found);
    }
    tree
}

/// Encode every CTU in raster order. `hooks = None` runs the baseline.
pub fn encode_frame(
    frame: &Frame,
    cost: &CostModel,
    hooks: Option<&dyn FastHooks>,
    options: EncodeOptions,
) -> FrameEncoding {
    let start = Instant::now();
    let hooks = hooks.unwrap_or(&Baseline);
    let mut state = ReconState::new(frame);
    let mut stats = EncodeStats::default();
    let mut trace = Vec::new();
    let mut trees = Vec::with_capacity(frame.ctu_count());
    for ctu in crate::frame::iter_blocks(frame, 0) {
        let t = encode_ctu(
            frame,
            ctu,
            &mut state,
            cost,
            hooks,
            &mut stats,
            options.trace.then_some(&mut trace),
        );
        trees.push(t);
    }
    let recon = state.to_frame(frame.width(), frame.height());
    let sse: u64 = frame
        .visible()
        .iter()
        .zip(recon.visible())
        .map(|(&a, b)| {
            let e = a as i64 - b as i64;
            (e * e) as u64
        })
        .sum();
    let total_bits = trees.iter().map(|t| t.bits).sum();
    FrameEncoding {
        total_bits,
        sse,
        psnr: psnr_from_sse(sse, frame.width() * frame.height()),
        stats,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        trace,
        recon,
        trees,
    }
}

/// CSV header of the per-(frame, QP) encoder report.
pub const REPORT_HEADER: &str = "frame,qp,bits,psnr_db,leaf_evals,wall_ms";

pub fn report_row(frame_name: &str, qp: u8, enc: &FrameEncoding) -> String {
    format!(
        "{},{},{},{:.4},{},{:.1}",
        frame_name,
        qp,
        enc.total_bits,
        enc.psnr,
        enc.stats.total_leaf_evals(),
        enc.wall_ms
    )
}
