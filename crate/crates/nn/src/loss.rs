//! Training losses. Both return the loss and its gradient with respect to
//! the network output (logits for the size loss).

use crate::{cast, Scalar};

const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy of a softmax output against class `label`, scaled by `w`
/// when the sample's RD loss is below `th_rd`. The gradient is taken with
/// respect to the logits feeding the softmax.
pub fn loss_size<T: Scalar>(pred: &[T], label: usize, rd_loss: f64, th_rd: f64, w: f64) -> (T, Vec<T>) {
    assert!(label < pred.len(), "label {label} out of range");
    let scale: T = cast(if rd_loss < th_rd { w } else { 1.0 });
    let p = pred[label].max(cast(PROB_FLOOR));
    let loss = -p.ln() * scale;
    let grad = pred
        .iter()
        .enumerate()
        .map(|(i, &q)| (q - if i == label { T::one() } else { T::zero() }) * scale)
        .collect();
    (loss, grad)
}

/// Squared error of one prediction divided by the batch size `n`; summing
/// over a batch gives the batch mean.
pub fn loss_mnrc<T: Scalar>(pred: &[T], target: &[T], n: usize) -> (T, Vec<T>) {
    assert_eq!(pred.len(), target.len(), "length mismatch");
    let inv: T = cast(1.0 / n as f64);
    let two: T = cast(2.0);
    let loss = pred.iter().zip(target).map(|(&p, &t)| (p - t) * (p - t)).sum::<T>() * inv;
    let grad = pred.iter().zip(target).map(|(&p, &t)| two * (p - t) * inv).collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn size_loss_examples() {
        assert_eq!(loss_size(&[1.0f64, 0.0], 0, 0.0, 0.02, 0.25).0, 0.0);
        assert_eq!(loss_size(&[1.0f64, 0.0], 0, 1.0, 0.02, 0.25).0, 0.0);
        let (l, _) = loss_size(&[0.5f64, 0.5], 0, 0.5, 0.02, 0.25);
        assert!((l - 0.693147).abs() < 1e-6);
        let (l, g) = loss_size(&[0.5f64, 0.5], 0, 0.01, 0.02, 0.25);
        assert!((l - 0.173287).abs() < 1e-6);
        assert_eq!(g, vec![-0.125, 0.125]);
    }

    #[test]
    fn size_loss_survives_zero_probability() {
        let (l, _) = loss_size(&[0.0f64, 1.0], 0, 1.0, 0.02, 0.25);
        assert!(l.is_finite() && l > 27.0);
    }

    #[test]
    fn size_gradient_matches_finite_differences_through_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let z: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let label = rng.gen_range(0..2);
            let f = |z: &[f64]| {
                let mut p = z.to_vec();
                crate::layer::softmax_in_place(&mut p);
                loss_size(&p, label, 0.01, 0.02, 0.25).0
            };
            let mut p = z.clone();
            crate::layer::softmax_in_place(&mut p);
            let (_, g) = loss_size(&p, label, 0.01, 0.02, 0.25);
            for i in 0..2 {
                let mut a = z.clone();
                let mut b = z.clone();
                a[i] += 1e-5;
                b[i] -= 1e-5;
                let num = (f(&a) - f(&b)) / 2e-5;
                assert!((num - g[i]).abs() <= 1e-6 * num.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn mnrc_loss_examples() {
        assert_eq!(loss_mnrc(&[0.3f64, 0.2, 0.9], &[0.3, 0.2, 0.9], 1).0, 0.0);
        assert_eq!(loss_mnrc(&[1.0f64, 0.0, 0.0], &[0.0, 1.0, 0.0], 1).0, 2.0);
    }

    #[test]
    fn mnrc_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let (_, g) = loss_mnrc(&p, &t, 4);
            for i in 0..3 {
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += 1e-4;
                b[i] -= 1e-4;
                let num = (loss_mnrc(&a, &t, 4).0 - loss_mnrc(&b, &t, 4).0) / 2e-4;
                assert!((num - g[i]).abs() <= 1e-6 * num.abs().max(1e-6), "{num} {}", g[i]);
            }
        }
    }
}
