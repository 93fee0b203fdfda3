use crate::frame::{BlockRef, Frame};

use super::cost::{mode_bits, CostModel, ModeCost};
use super::mpm::block_mpm;
use super::predict::{predict, RefSamples};
use super::satd::satd_between;
use super::{IntraMode, ReconState};

/// RMD prefix length used by the unmodified three-step search.
pub fn default_rmd_prefix(depth: u8) -> usize {
    if depth <= 2 {
        3
    } else {
        8
    }
}

/// Score every mode by `SATD + λ·R_mode` and sort ascending, ties by mode index.
pub fn rank_modes(
    original: &[u8],
    refs: &RefSamples,
    mpm: &[IntraMode; 3],
    cost: &CostModel,
) -> Vec<ModeCost> {
    let n = refs.size();
    let mut pred = vec![0i32; n * n];
    let mut scratch = Vec::with_capacity(n * n);
    let mut ranking: Vec<ModeCost> = IntraMode::all()
        .map(|mode| {
            predict(refs, mode, &mut pred);
            let satd = satd_between(original, &pred, n, &mut scratch);
            let r_mode = mode_bits(mode, mpm);
            ModeCost {
                mode,
                j_had: cost.j_had(satd, r_mode),
                satd,
                r_mode,
            }
        })
        .collect();
    sort_ranking(&mut ranking);
    ranking
}

pub(crate) fn sort_ranking(ranking: &mut [ModeCost]) {
    ranking.sort_by(|a, b| a.j_had.total_cmp(&b.j_had).then(a.mode.cmp(&b.mode)));
}

/// Rough mode decision for a block against the current reconstruction.
pub fn rough_mode_decision(
    original: &Frame,
    state: &ReconState,
    block: BlockRef,
    cost: &CostModel,
) -> Vec<ModeCost> {
    let refs = RefSamples::gather(state, block);
    let mpm = block_mpm(state, block);
    rank_modes(&original.block(block), &refs, &mpm, cost)
}

/// RDO candidates: an RMD prefix followed by any MPMs it lacks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateList {
    modes: Vec<IntraMode>,
    from_rmd: usize,
}

impl CandidateList {
    pub fn build(ranking: &[ModeCost], prefix: usize, mpm: &[IntraMode; 3]) -> Self {
        let prefix = prefix.min(ranking.len());
        let mut modes: Vec<IntraMode> = ranking[..prefix].iter().map(|c| c.mode).collect();
        for &m in mpm {
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
        CandidateList {
            modes,
            from_rmd: prefix,
        }
    }

    /// A list taken verbatim (duplicates removed, order kept).
    pub fn from_modes(list: &[IntraMode]) -> Self {
        let mut modes = Vec::with_capacity(list.len());
        for &m in list {
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
        CandidateList {
            from_rmd: modes.len(),
            modes,
        }
    }

    pub fn modes(&self) -> &[IntraMode] {
        &self.modes
    }

    /// How many leading entries came from the RMD ranking.
    pub fn rmd_len(&self) -> usize {
        self.from_rmd
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intra::predict::predict_block;
    use crate::intra::satd::satd;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_block_ranks_exact_predictors_first() {
        let f = Frame::filled(64, 64, 128);
        let state = ReconState::new(&f);
        let cost = CostModel::new(27);
        let ranking = rough_mode_decision(&f, &state, BlockRef::new(0, 0, 2), &cost);
        assert_eq!(ranking.len(), 35);
        // every mode predicts 128 exactly; MPMs (planar, DC, 26) are cheapest
        assert!(ranking.iter().all(|c| c.satd == 0));
        let top: Vec<u8> = ranking[..3].iter().map(|c| c.mode.index()).collect();
        assert_eq!(top, vec![0, 1, 26]);
        assert!(ranking[..3].iter().any(|c| c.mode == IntraMode::DC));
    }

    #[test]
    fn ranking_matches_independent_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let luma: Vec<u8> = (0..64 * 64).map(|_| rng.gen()).collect();
        let f = Frame::from_luma(64, 64, &luma).unwrap();
        let mut state = ReconState::new(&f);
        // give the block real neighbours
        for b in [BlockRef::new(0, 0, 3), BlockRef::new(8, 0, 3), BlockRef::new(0, 8, 3)] {
            state.commit(b, &f.block(b), IntraMode::new(rng.gen_range(0..35)).unwrap());
        }
        let block = BlockRef::new(8, 8, 3);
        let cost = CostModel::new(32);
        let ranking = rough_mode_decision(&f, &state, block, &cost);

        let orig = f.block(block);
        let mpm = block_mpm(&state, block);
        let mut oracle: Vec<(f64, u8)> = IntraMode::all()
            .map(|m| {
                let pred = predict_block(&state, block, m);
                let res: Vec<i32> = orig.iter().zip(&pred).map(|(&o, &p)| o as i32 - p).collect();
                let bits = if mpm.contains(&m) { 2.0 } else { 6.0 };
                (satd(&res, 8) as f64 + cost.lambda() * bits, m.index())
            })
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got: Vec<u8> = ranking.iter().map(|c| c.mode.index()).collect();
        let want: Vec<u8> = oracle.iter().map(|o| o.1).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn ordering_is_independent_of_evaluation_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut scores: Vec<ModeCost> = IntraMode::all()
            .map(|mode| ModeCost {
                mode,
                j_had: rng.gen_range(0..4) as f64,
                satd: 0,
                r_mode: 2,
            })
            .collect();
        let mut reference = scores.clone();
        sort_ranking(&mut reference);
        for _ in 0..20 {
            scores.shuffle(&mut rng);
            sort_ranking(&mut scores);
            assert_eq!(scores, reference);
        }
    }

    #[test]
    fn candidate_list_appends_missing_mpms() {
        let mk = |i: u8| ModeCost {
            mode: IntraMode::new(i).unwrap(),
            j_had: i as f64,
            satd: 0,
            r_mode: 6,
        };
        let ranking: Vec<ModeCost> = [5u8, 26, 7, 0, 1].iter().map(|&i| mk(i)).collect();
        let mpm = [IntraMode::PLANAR, IntraMode::DC, IntraMode::VERTICAL];
        let list = CandidateList::build(&ranking, 3, &mpm);
        let got: Vec<u8> = list.modes().iter().map(|m| m.index()).collect();
        assert_eq!(got, vec![5, 26, 7, 0, 1]);
        assert_eq!(list.rmd_len(), 3);
    }
}
