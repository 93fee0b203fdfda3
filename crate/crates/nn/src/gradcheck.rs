//! Central finite-difference checks of the analytic backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{LayerSpec, Network, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest relative error over every parameter and input.
    pub max_rel_error: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

const FLOOR: f64 = 1e-6;

/// Check `net` on a random batch against the scalar loss `Σ r·y` for a
/// random projection `r`. Dropout runs in training mode with a fixed
/// seed so the mask is replayed for every perturbation.
pub fn check_network(net: &Network<f64>, batch: usize, seed: u64, eps: f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c, h, w] = net.input_shape();
    let x: Vec<f64> = (0..batch * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = Tensor::from_vec(&[batch, c, h, w], x).expect("dims");
    let r: Vec<f64> = (0..batch * net.output_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r = Tensor::from_vec(&[batch, net.output_len()], r).expect("dims");
    let dseed = rng.gen();

    let loss = |n: &Network<f64>, x: &Tensor<f64>| -> f64 {
        let (y, _) = n.forward(x, true, dseed).expect("forward");
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = net.forward(&x, true, dseed).expect("forward");
    let grads = net.backward(&cache, &r).expect("backward");

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut probe = net.clone();
    for (k, g) in grads.tensors.iter().enumerate() {
        for i in 0..g.len() {
            let orig = probe.tensors_mut()[k].data()[i];
            probe.tensors_mut()[k].data_mut()[i] = orig + eps;
            let up = loss(&probe, &x);
            probe.tensors_mut()[k].data_mut()[i] = orig - eps;
            let down = loss(&probe, &x);
            probe.tensors_mut()[k].data_mut()[i] = orig;
            worst = worst.max(relative_error(g.data()[i], (up - down) / (2.0 * eps), FLOOR));
            checked += 1;
        }
    }
    let per = c * h * w;
    let out = net.output_len();
    for s in 0..batch {
        let gx = net.input_gradient(&cache, s, &r.data()[s * out..][..out]).expect("input gradient");
        for i in 0..per {
            let mut xp = x.clone();
            xp.data_mut()[s * per + i] += eps;
            let up = loss(net, &xp);
            xp.data_mut()[s * per + i] -= 2.0 * eps;
            let down = loss(net, &xp);
            worst = worst.max(relative_error(gx[i], (up - down) / (2.0 * eps), FLOOR));
            checked += 1;
        }
    }
    GradCheck {
        max_rel_error: worst,
        checked,
    }
}

/// Small networks exercising each layer kind at three random shapes:
/// `(kind, network, batch)`.
pub fn layer_cases(seed: u64) -> Vec<(&'static str, Network<f64>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    for round in 0..3u64 {
        let c = rng.gen_range(1..=3);
        let h = rng.gen_range(5..=9);
        let w = rng.gen_range(5..=9);
        let kh = rng.gen_range(1..=3);
        let kw = rng.gen_range(1..=3);
        let co = rng.gen_range(1..=3);
        let stride = rng.gen_range(1..=2);
        let width = rng.gen_range(2..=5);
        let s = seed.wrapping_add(round);
        let build = |specs: Vec<LayerSpec>, shape: [usize; 3]| Network::<f64>::build(shape, specs, s).expect("case builds");
        let conv = if round == 1 {
            LayerSpec::conv_same(kh, kw, co, stride)
        } else {
            LayerSpec::conv(kh, kw, co, stride)
        };
        cases.push(("conv", build(vec![conv], [c, h, w]), 2));
        cases.push(("fully-connected", build(vec![LayerSpec::Dense { width }], [c, h, w]), 2));
        cases.push((
            "concat",
            build(
                vec![LayerSpec::Concat(vec![
                    vec![LayerSpec::conv_same(3, 1, co, stride)],
                    vec![LayerSpec::conv_same(3, 3, 2, stride)],
                    vec![LayerSpec::conv_same(1, 3, co, stride)],
                ])],
                [c, h, w],
            ),
            2,
        ));
        cases.push((
            "leaky-relu",
            build(
                vec![LayerSpec::Dense { width: width + 3 }, LayerSpec::LeakyRelu { alpha: 0.25 }, LayerSpec::Dense { width }],
                [c, h, w],
            ),
            2,
        ));
        cases.push((
            "dropout",
            build(
                vec![LayerSpec::Dense { width: width + 3 }, LayerSpec::Dropout { rate: 0.5 }, LayerSpec::Dense { width }],
                [c, h, w],
            ),
            3,
        ));
        cases.push((
            "softmax",
            build(vec![LayerSpec::Dense { width }, LayerSpec::Softmax], [c, h, w]),
            2,
        ));
        let k = rng.gen_range(1..=3);
        cases.push((
            "average-pool",
            build(
                vec![LayerSpec::AvgPool { size: k }, LayerSpec::Dense { width }],
                [c, k * rng.gen_range(1..=3), k * rng.gen_range(1..=3)],
            ),
            2,
        ));
    }
    cases
}
