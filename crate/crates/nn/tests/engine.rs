use intra_nn::gradcheck::{check_network, layer_cases};
use intra_nn::train::evaluate;
use intra_nn::{train, Dataset, LayerSpec, LossKind, Network, Targets, TrainConfig};
use proptest::prelude::*;

/// A miniature of the classifier stack: asymmetric-kernel branches,
/// stride-2 trunk, pooling and a softmax head.
fn stack(seed: u64) -> Network<f64> {
    Network::build(
        [1, 8, 8],
        vec![
            LayerSpec::Concat(vec![
                vec![LayerSpec::conv_same(3, 1, 2, 1)],
                vec![LayerSpec::conv_same(1, 3, 2, 1)],
            ]),
            LayerSpec::LeakyRelu { alpha: 0.1 },
            LayerSpec::conv(2, 2, 3, 2),
            LayerSpec::LeakyRelu { alpha: 0.1 },
            LayerSpec::AvgPool { size: 2 },
            LayerSpec::Dense { width: 6 },
            LayerSpec::Dropout { rate: 0.3 },
            LayerSpec::Dense { width: 2 },
            LayerSpec::Softmax,
        ],
        seed,
    )
    .unwrap()
}

#[test]
fn composite_stack_gradients_match_finite_differences() {
    for seed in 0..3 {
        let r = check_network(&stack(seed), 3, seed + 10, 1e-5);
        assert!(r.max_rel_error < 1e-4, "seed {seed}: {r:?}");
        assert!(r.checked > 100);
    }
}

#[test]
fn every_layer_kind_has_three_shapes() {
    let cases = layer_cases(0);
    assert_eq!(cases.len(), 21);
    for kind in ["conv", "fully-connected", "concat", "leaky-relu", "dropout", "softmax", "average-pool"] {
        assert_eq!(cases.iter().filter(|c| c.0 == kind).count(), 3, "{kind}");
    }
}

fn stripes(n: usize) -> Dataset {
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let vertical = i % 2 == 0;
        let phase = (i / 2) % 3;
        inputs.push(
            (0..64)
                .map(|k| {
                    let t = if vertical { k % 8 } else { k / 8 };
                    if (t + phase) % 3 == 0 { 0.8 } else { -0.4 }
                })
                .collect(),
        );
        labels.push(usize::from(vertical));
    }
    Dataset {
        inputs,
        targets: Targets::Class {
            rd_loss: vec![1.0; n],
            labels,
        },
    }
}

#[test]
fn stack_learns_stripe_orientation() {
    let data = stripes(60);
    let cfg = TrainConfig {
        epochs: 40,
        decay_every: 0,
        batch_size: 8,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = train(stack(1), &data, Some(&data), &cfg, LossKind::Size { th_rd: 0.02, w: 0.25 }).unwrap();
    let (_, acc) = evaluate(&out.model, &data);
    assert_eq!(acc, Some(1.0));
    let first = out.history[0].train_loss;
    assert!(out.history.last().unwrap().train_loss < first);
}

#[test]
fn f32_inference_tracks_f64() {
    let net = stack(4);
    let lite = net.cast::<f32>();
    for x in stripes(6).inputs {
        let a = net.predict_one(&x);
        let b = lite.predict_one(&x.iter().map(|&v| v as f32).collect::<Vec<_>>());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - *q as f64).abs() < 1e-5);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_gradients_hold_for_random_geometry(
        c in 1usize..3, h in 3usize..8, w in 3usize..8,
        kh in 1usize..4, kw in 1usize..4, stride in 1usize..3, same in any::<bool>(), seed in 0u64..1000,
    ) {
        let conv = if same {
            LayerSpec::conv_same(kh, kw, 2, stride)
        } else {
            LayerSpec::conv(kh.min(h), kw.min(w), 2, stride)
        };
        let net = Network::<f64>::build([c, h, w], vec![conv, LayerSpec::LeakyRelu { alpha: 0.2 }], seed).unwrap();
        let r = check_network(&net, 2, seed, 1e-5);
        prop_assert!(r.max_rel_error < 1e-4, "{:?}", r);
    }
}
