//! Planar, DC and angular prediction from neighbouring reconstructed samples.

use crate::frame::BlockRef;

use super::mode::inverse_angle;
use super::{IntraMode, ReconState};

/// Neighbouring references for an `n × n` block.
///
/// `left[0]` and `above[0]` both hold the corner sample; `left[1 + i]` is
/// the sample left of row `i` and `above[1 + i]` the sample above column
/// `i`, for `i` in `0..2n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefSamples {
    n: usize,
    left: Vec<i32>,
    above: Vec<i32>,
}

impl RefSamples {
    /// Fetch references from the reconstruction, substituting unavailable
    /// samples with the nearest available one along the scan from the
    /// bottom-left end to the top-right end, or 128 when none exist.
    pub fn gather(state: &ReconState, block: BlockRef) -> Self {
        let n = block.size();
        let (bx, by) = (block.x as isize, block.y as isize);
        // scan order: left column bottom-up, corner, top row left-to-right
        let total = 4 * n + 1;
        let mut vals = vec![0i32; total];
        let mut avail = vec![false; total];
        for k in 0..total {
            let (x, y) = if k < 2 * n {
                (bx - 1, by + (2 * n - 1 - k) as isize)
            } else if k == 2 * n {
                (bx - 1, by - 1)
            } else {
                (bx + (k - 2 * n - 1) as isize, by - 1)
            };
            if state.available(x, y) {
                avail[k] = true;
                vals[k] = state.sample(x as usize, y as usize) as i32;
            }
        }
        match avail.iter().position(|&a| a) {
            None => vals.fill(128),
            Some(first) => {
                let seed = vals[first];
                vals[..first].fill(seed);
                for k in first + 1..total {
                    if !avail[k] {
                        vals[k] = vals[k - 1];
                    }
                }
            }
        }
        let corner = vals[2 * n];
        let mut left = Vec::with_capacity(2 * n + 1);
        left.push(corner);
        left.extend((0..2 * n).map(|i| vals[2 * n - 1 - i]));
        let mut above = Vec::with_capacity(2 * n + 1);
        above.push(corner);
        above.extend_from_slice(&vals[2 * n + 1..]);
        RefSamples { n, left, above }
    }

    /// Every reference equal to `value`.
    pub fn uniform(n: usize, value: i32) -> Self {
        RefSamples {
            n,
            left: vec![value; 2 * n + 1],
            above: vec![value; 2 * n + 1],
        }
    }

    /// Assemble from explicit parts; `top` and `left` must hold `2n` samples.
    pub fn from_parts(n: usize, corner: i32, top: &[i32], left: &[i32]) -> Self {
        assert_eq!(top.len(), 2 * n);
        assert_eq!(left.len(), 2 * n);
        let mut l = vec![corner];
        l.extend_from_slice(left);
        let mut a = vec![corner];
        a.extend_from_slice(top);
        RefSamples { n, left: l, above: a }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn corner(&self) -> i32 {
        self.above[0]
    }

    /// Samples above the block, `2n` long.
    pub fn top(&self) -> &[i32] {
        &self.above[1..]
    }

    /// Samples left of the block, `2n` long.
    pub fn left(&self) -> &[i32] {
        &self.left[1..]
    }
}

/// Predict into `out` (`n × n`, row-major).
pub fn predict(refs: &RefSamples, mode: IntraMode, out: &mut [i32]) {
    let n = refs.n;
    debug_assert_eq!(out.len(), n * n);
    match mode {
        IntraMode::PLANAR => predict_planar(refs, out),
        IntraMode::DC => predict_dc(refs, out),
        _ => predict_angular(refs, mode, out),
    }
}

/// Predict `block` with `mode` from the current reconstruction.
pub fn predict_block(state: &ReconState, block: BlockRef, mode: IntraMode) -> Vec<i32> {
    let refs = RefSamples::gather(state, block);
    let mut out = vec![0; block.size() * block.size()];
    predict(&refs, mode, &mut out);
    out
}

fn log2(n: usize) -> u32 {
    n.trailing_zeros()
}

fn predict_planar(refs: &RefSamples, out: &mut [i32]) {
    let n = refs.n;
    let shift = log2(n) + 1;
    let top = refs.top();
    let left = refs.left();
    let top_right = top[n];
    let bottom_left = left[n];
    let ni = n as i32;
    for y in 0..n {
        let yi = y as i32;
        for x in 0..n {
            let xi = x as i32;
            let v = (ni - 1 - xi) * left[y]
                + (xi + 1) * top_right
                + (ni - 1 - yi) * top[x]
                + (yi + 1) * bottom_left
                + ni;
            out[y * n + x] = v >> shift;
        }
    }
}

fn predict_dc(refs: &RefSamples, out: &mut [i32]) {
    let n = refs.n;
    let sum: i32 = refs.top()[..n].iter().sum::<i32>() + refs.left()[..n].iter().sum::<i32>();
    let dc = (sum + n as i32) >> (log2(n) + 1);
    out.fill(dc);
}

fn predict_angular(refs: &RefSamples, mode: IntraMode, out: &mut [i32]) {
    let n = refs.n;
    let angle = mode.angle();
    let vertical = mode.index() >= 18;
    let (main, side) = if vertical {
        (&refs.above, &refs.left)
    } else {
        (&refs.left, &refs.above)
    };
    // reference line indexed from -n..=2n via offset n
    let mut line = vec![0i32; 3 * n + 1];
    let off = n as isize;
    for (i, &v) in main.iter().enumerate() {
        line[(off + i as isize) as usize] = v;
    }
    let last = ((n as i32) * angle) >> 5;
    if angle < 0 && last < -1 {
        let inv = inverse_angle(angle);
        for k in last..=-1 {
            let src = ((k * inv + 128) >> 8) as usize;
            line[(off + k as isize) as usize] = side[src];
        }
    }
    for j in 0..n {
        let pos = (j as i32 + 1) * angle;
        let idx = pos >> 5;
        let fact = pos & 31;
        for i in 0..n {
            let base = (off + i as isize + idx as isize + 1) as usize;
            let v = if fact != 0 {
                ((32 - fact) * line[base] + fact * line[base + 1] + 16) >> 5
            } else {
                line[base]
            };
            if vertical {
                out[j * n + i] = v;
            } else {
                out[i * n + j] = v;
            }
        }
    }
}
