//! Orthonormal DCT-II, scalar quantization and the coefficient rate surrogate.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::cost::coeff_bits;

fn basis(n: usize) -> &'static [f64] {
    static TABLES: [OnceLock<Vec<f64>>; 5] = [const { OnceLock::new() }; 5];
    let slot = n.trailing_zeros() as usize - 2;
    assert!(n.is_power_of_two() && (4..=64).contains(&n), "unsupported size {n}");
    TABLES[slot].get_or_init(|| {
        let nf = n as f64;
        let mut m = vec![0.0; n * n];
        for k in 0..n {
            let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                m[k * n + i] = s * (PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
            }
        }
        m
    })
}

/// `out = C · x · Cᵀ` for an `n × n` block.
pub fn forward_dct(x: &[f64], n: usize, out: &mut [f64]) {
    let c = basis(n);
    let mut tmp = vec![0.0; n * n];
    // tmp = x · Cᵀ (rows)
    for r in 0..n {
        let row = &x[r * n..][..n];
        for k in 0..n {
            let ck = &c[k * n..][..n];
            tmp[r * n + k] = row.iter().zip(ck).map(|(a, b)| a * b).sum();
        }
    }
    // out = C · tmp (columns)
    out[..n * n].fill(0.0);
    for k in 0..n {
        let ck = &c[k * n..][..n];
        let dst = &mut out[k * n..][..n];
        for (r, &w) in ck.iter().enumerate() {
            let src = &tmp[r * n..][..n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
}

/// `out = Cᵀ · y · C`.
pub fn inverse_dct(y: &[f64], n: usize, out: &mut [f64]) {
    let c = basis(n);
    let mut tmp = vec![0.0; n * n];
    // tmp = Cᵀ · y
    for k in 0..n {
        let ck = &c[k * n..][..n];
        let src = &y[k * n..][..n];
        if src.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (r, &w) in ck.iter().enumerate() {
            let dst = &mut tmp[r * n..][..n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    // out = tmp · C
    for r in 0..n {
        let row = &tmp[r * n..][..n];
        let dst = &mut out[r * n..][..n];
        dst.fill(0.0);
        for (k, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let ck = &c[k * n..][..n];
            for (d, b) in dst.iter_mut().zip(ck) {
                *d += v * b;
            }
        }
    }
}

/// Round half away from zero.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.signum() * (v.abs() + 0.5).floor()
}

#[inline]
pub fn quantize(coeff: f64, qstep: f64) -> i32 {
    round_half_away(coeff / qstep) as i32
}

/// Outcome of coding one residual block.
#[derive(Clone, Debug, PartialEq)]
pub struct CodedResidual {
    pub levels: Vec<i32>,
    pub bits: u64,
    /// Dequantized, inverse-transformed residual (unrounded).
    pub residual: Vec<f64>,
}

/// Transform, quantize, price and reconstruct a residual.
pub fn code_residual(residual: &[i32], n: usize, qstep: f64) -> CodedResidual {
    let x: Vec<f64> = residual.iter().map(|&r| r as f64).collect();
    let mut coeffs = vec![0.0; n * n];
    forward_dct(&x, n, &mut coeffs);
    let levels: Vec<i32> = coeffs.iter().map(|&c| quantize(c, qstep)).collect();
    let bits = levels.iter().map(|&l| coeff_bits(l) as u64).sum();
    let mut rec = vec![0.0; n * n];
    if levels.iter().any(|&l| l != 0) {
        let deq: Vec<f64> = levels.iter().map(|&l| l as f64 * qstep).collect();
        inverse_dct(&deq, n, &mut rec);
    }
    CodedResidual {
        levels,
        bits,
        residual: rec,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_is_orthonormal() {
        for n in [4, 8, 16, 32, 64] {
            let c = basis(n);
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..n).map(|i| c[a * n + i] * c[b * n + i]).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_matches_direct_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 8;
        let x: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let mut y = vec![0.0; n * n];
        forward_dct(&x, n, &mut y);
        let s = |k: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for u in 0..n {
            for v in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += x[i * n + j]
                            * (PI * (2 * i + 1) as f64 * u as f64 / 16.0).cos()
                            * (PI * (2 * j + 1) as f64 * v as f64 / 16.0).cos();
                    }
                }
                assert!((y[u * n + v] - s(u) * s(v) * acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn inverse_undoes_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [4, 16, 64] {
            let x: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-255.0..255.0)).collect();
            let mut y = vec![0.0; n * n];
            let mut back = vec![0.0; n * n];
            forward_dct(&x, n, &mut y);
            inverse_dct(&y, n, &mut back);
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(quantize(2.5, 1.0), 3);
        assert_eq!(quantize(-2.5, 1.0), -3);
        assert_eq!(quantize(2.49, 1.0), 2);
        assert_eq!(quantize(-0.4, 1.0), 0);
        assert_eq!(quantize(12.0, 8.0), 2);
    }

    #[test]
    fn zero_residual_costs_nothing() {
        let coded = code_residual(&[0; 16], 4, 8.0);
        assert_eq!(coded.bits, 0);
        assert!(coded.residual.iter().all(|&v| v == 0.0));
    }
}
