use intra_core::Frame;
use intra_fast::ak_models::ANCHOR_QPS;
use intra_fast::eotd::{EncodeOracle, Memo, Oracle, OracleFrame};
use intra_fast::fast_pipeline::{BlockGrid, ThresholdVector};

fn textured(seed: usize) -> Frame {
    let luma: Vec<u8> = (0..64 * 64)
        .map(|i| {
            let (x, y) = (i % 64, i / 64);
            let v = if x < 32 { 60 + 2 * y } else { 90 + ((x * 7 + y * 13 + seed) % 29) * 4 };
            v.min(255) as u8
        })
        .collect();
    Frame::from_luma(64, 64, &luma).unwrap()
}

fn oracle(p_split: f32) -> EncodeOracle {
    let frames = ANCHOR_QPS
        .iter()
        .enumerate()
        .map(|(i, &qp)| {
            let frame = textured(i);
            OracleFrame {
                probs: BlockGrid::filled(&frame, 4, [1.0 - p_split, p_split]),
                frame,
                qp,
                gears: None,
            }
        })
        .collect();
    EncodeOracle::new(frames).unwrap()
}

#[test]
fn disabled_thresholds_cost_nothing_and_save_nothing() {
    let o = oracle(0.95);
    let obj = o.evaluate(&ThresholdVector::disabled()).unwrap();
    assert_eq!(obj.c, 0.0);
    assert_eq!(obj.r, 0.0);
}

#[test]
fn forced_splits_skip_work_and_cost_rate() {
    let o = oracle(0.95);
    let obj = o.evaluate(&ThresholdVector::uniform(0.6)).unwrap();
    // only the 256 smallest leaves of each 341-leaf CTU are left
    assert!((obj.c - 85.0 / 341.0).abs() < 1e-12, "{obj:?}");
    assert!(obj.r > 0.0, "{obj:?}");
    // unconfident predictions leave every node to the full check
    let unsure = oracle(0.55).evaluate(&ThresholdVector::uniform(0.6)).unwrap();
    assert_eq!((unsure.c, unsure.r), (0.0, 0.0));
}

#[test]
fn memo_forwards_each_rounded_vector_once() {
    let memo = Memo::new(oracle(0.95));
    let a = memo.evaluate(&ThresholdVector::uniform(0.7)).unwrap();
    let b = memo.evaluate(&ThresholdVector::uniform(0.7002)).unwrap();
    assert_eq!(a, b);
    assert_eq!(memo.misses(), 1);
    memo.evaluate(&ThresholdVector::uniform(0.9)).unwrap();
    assert_eq!(memo.misses(), 2);
}
