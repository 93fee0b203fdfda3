use crate::frame::BlockRef;

use super::cost::{mode_bits, CostModel};
use super::predict::{predict, RefSamples};
use super::rmd::CandidateList;
use super::transform::{code_residual, round_half_away};
use super::IntraMode;

/// Best mode of one prediction unit under full rate-distortion search.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafResult {
    pub block: BlockRef,
    pub mode: IntraMode,
    pub j_rdo: f64,
    pub sse: u64,
    pub r_total: u64,
    /// Position of `mode` in the candidate list.
    pub position: usize,
    pub reconstruction: Vec<u8>,
}

/// Evaluate every candidate with transform coding and keep the cheapest
/// (first in list order on ties). The caller commits the reconstruction.
pub fn rdo_leaf(
    block: BlockRef,
    original: &[u8],
    refs: &RefSamples,
    candidates: &CandidateList,
    mpm: &[IntraMode; 3],
    cost: &CostModel,
) -> LeafResult {
    assert!(!candidates.is_empty(), "empty candidate list");
    let n = block.size();
    let mut pred = vec![0i32; n * n];
    let mut residual = vec![0i32; n * n];
    let mut best: Option<LeafResult> = None;
    for (position, &mode) in candidates.modes().iter().enumerate() {
        predict(refs, mode, &mut pred);
        for ((r, &o), &p) in residual.iter_mut().zip(original).zip(&pred) {
            *r = o as i32 - p;
        }
        let coded = code_residual(&residual, n, cost.qstep());
        let mut sse = 0u64;
        let mut recon = Vec::with_capacity(n * n);
        for ((&p, &d), &o) in pred.iter().zip(&coded.residual).zip(original) {
            let v = (p as f64 + round_half_away(d)).clamp(0.0, 255.0) as u8;
            let e = v as i64 - o as i64;
            sse += (e * e) as u64;
            recon.push(v);
        }
        let r_total = mode_bits(mode, mpm) as u64 + coded.bits;
        let j_rdo = cost.j_rdo(sse, r_total);
        if best.as_ref().is_none_or(|b| j_rdo < b.j_rdo) {
            best = Some(LeafResult {
                block,
                mode,
                j_rdo,
                sse,
                r_total,
                position,
                reconstruction: recon,
            });
        }
    }
    best.expect("nonempty list")
}
