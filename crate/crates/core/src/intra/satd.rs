//! Sum of absolute Hadamard-transformed differences.

#[inline]
fn butterfly4(v: &mut [i32]) {
    let (a, b) = (v[0] + v[1], v[0] - v[1]);
    let (c, d) = (v[2] + v[3], v[2] - v[3]);
    v[0] = a + c;
    v[1] = b + d;
    v[2] = a - c;
    v[3] = b - d;
}

#[inline]
fn butterfly8(v: &mut [i32]) {
    let mut t = [0i32; 8];
    for i in 0..4 {
        t[i] = v[i] + v[i + 4];
        t[i + 4] = v[i] - v[i + 4];
    }
    butterfly4(&mut t[..4]);
    butterfly4(&mut t[4..]);
    v[..8].copy_from_slice(&t);
}

fn tile_cost(tile: &mut [i32], t: usize) -> u64 {
    let bf: fn(&mut [i32]) = if t == 8 { butterfly8 } else { butterfly4 };
    for row in tile.chunks_mut(t) {
        bf(row);
    }
    let mut col = [0i32; 8];
    let mut sum = 0u64;
    for x in 0..t {
        for y in 0..t {
            col[y] = tile[y * t + x];
        }
        bf(&mut col[..t]);
        sum += col[..t].iter().map(|c| c.unsigned_abs() as u64).sum::<u64>();
    }
    sum >> (t.trailing_zeros() + 1)
}

/// SATD of an `n × n` residual, tiled into `min(n, 8)`-sized Hadamard blocks.
pub fn satd(residual: &[i32], n: usize) -> u64 {
    assert!(matches!(n, 4 | 8 | 16 | 32 | 64), "unsupported block size {n}");
    debug_assert_eq!(residual.len(), n * n);
    let t = n.min(8);
    let mut tile = [0i32; 64];
    let mut total = 0u64;
    for ty in (0..n).step_by(t) {
        for tx in (0..n).step_by(t) {
            for y in 0..t {
                tile[y * t..(y + 1) * t].copy_from_slice(&residual[(ty + y) * n + tx..][..t]);
            }
            total += tile_cost(&mut tile[..t * t], t);
        }
    }
    total
}

/// SATD between an original block and a prediction.
pub fn satd_between(original: &[u8], prediction: &[i32], n: usize, scratch: &mut Vec<i32>) -> u64 {
    scratch.clear();
    scratch.extend(original.iter().zip(prediction).map(|(&o, &p)| o as i32 - p));
    satd(scratch, n)
}
