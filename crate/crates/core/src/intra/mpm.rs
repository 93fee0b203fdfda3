use crate::frame::BlockRef;

use super::{IntraMode, ReconState};

/// Three most probable modes from the left and above neighbours; absent
/// neighbours count as DC.
pub fn derive_mpm(left: Option<IntraMode>, above: Option<IntraMode>) -> [IntraMode; 3] {
    let a = left.unwrap_or(IntraMode::DC);
    let b = above.unwrap_or(IntraMode::DC);
    if a == b {
        if a.is_angular() {
            let m = a.index();
            let prev = if m == 2 { 34 } else { m - 1 };
            let next = if m == 34 { 2 } else { m + 1 };
            [a, IntraMode::new(prev).unwrap(), IntraMode::new(next).unwrap()]
        } else {
            [IntraMode::PLANAR, IntraMode::DC, IntraMode::VERTICAL]
        }
    } else {
        let third = [IntraMode::PLANAR, IntraMode::DC, IntraMode::VERTICAL]
            .into_iter()
            .find(|m| *m != a && *m != b)
            .expect("three fixed candidates cannot all collide with two modes");
        [a, b, third]
    }
}

/// MPMs for `block` from the modes already committed to `state`.
pub fn block_mpm(state: &ReconState, block: BlockRef) -> [IntraMode; 3] {
    let (x, y) = (block.x as isize, block.y as isize);
    derive_mpm(state.mode_at(x - 1, y), state.mode_at(x, y - 1))
}
