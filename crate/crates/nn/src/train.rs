//! Mini-batch Adam training with a step learning-rate schedule and
//! best-validation snapshotting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::loss::{loss_mnrc, loss_size};
use crate::{Network, NnError, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-3,
            epochs: 150,
            decay_every: 50,
            decay_factor: 0.1,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let steps = if self.decay_every == 0 { 0 } else { epoch / self.decay_every };
        self.learning_rate * self.decay_factor.powi(steps as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    /// RD-weighted cross-entropy.
    Size { th_rd: f64, w: f64 },
    /// Mean squared error against expectation vectors.
    Mnrc,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Class { labels: Vec<usize>, rd_loss: Vec<f64> },
    Regression(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn check(&self, input_len: usize) -> Result<(), NnError> {
        if self.inputs.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        let n = match &self.targets {
            Targets::Class { labels, rd_loss } => {
                if labels.len() != rd_loss.len() {
                    return Err(NnError::Shape("labels and rd_loss differ in length".into()));
                }
                labels.len()
            }
            Targets::Regression(t) => t.len(),
        };
        if n != self.inputs.len() {
            return Err(NnError::Shape(format!("{} inputs, {n} targets", self.inputs.len())));
        }
        if let Some(x) = self.inputs.iter().find(|x| x.len() != input_len) {
            return Err(NnError::Shape(format!("sample of {} values, network takes {input_len}", x.len())));
        }
        Ok(())
    }

    /// Number of samples per class, for class-target datasets.
    pub fn class_histogram(&self, classes: usize) -> Vec<usize> {
        let mut h = vec![0; classes];
        if let Targets::Class { labels, .. } = &self.targets {
            for &l in labels {
                if l < classes {
                    h[l] += 1;
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Network<f64>,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &Network<f64>) -> Self {
        let shapes: Vec<usize> = net.tensors().iter().map(|(_, t)| t.len()).collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network<f64>, grads: &[Tensor<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (k, param) in net.tensors_mut().into_iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (p, &g)) in param.data_mut().iter_mut().zip(grads[k].data()).enumerate() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g;
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g * g;
                *p -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ ((epoch as u64) << 32 | batch as u64)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Loss and (for class targets) accuracy of `net` on `data` without dropout.
pub fn evaluate(net: &Network<f64>, data: &Dataset) -> (f64, Option<f64>) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (i, x) in data.inputs.iter().enumerate() {
        let y = net.predict_one(x);
        match &data.targets {
            Targets::Class { labels, .. } => {
                loss += loss_size(&y, labels[i], 1.0, 0.0, 1.0).0;
                correct += usize::from(argmax(&y) == labels[i]);
            }
            Targets::Regression(t) => loss += loss_mnrc(&y, &t[i], 1).0,
        }
    }
    let n = data.len() as f64;
    let acc = matches!(data.targets, Targets::Class { .. }).then(|| correct as f64 / n);
    (loss / n, acc)
}

/// Train `model` and return the snapshot with the best validation score
/// (accuracy for class targets, loss for regression), or the final weights
/// when no validation set is given.
pub fn train(
    mut model: Network<f64>,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
    loss: LossKind,
) -> Result<TrainOutcome, NnError> {
    train_set.check(model.input_len())?;
    if let Some(v) = val_set {
        v.check(model.input_len())?;
    }
    match (&train_set.targets, loss) {
        (Targets::Class { .. }, LossKind::Size { .. }) | (Targets::Regression(_), LossKind::Mnrc) => {}
        _ => return Err(NnError::Shape("targets do not match the loss".into())),
    }
    if let Targets::Class { .. } = train_set.targets {
        let h = train_set.class_histogram(model.output_len());
        if h.iter().filter(|&&c| c > 0).count() < 2 {
            log::warn!("training set holds a single class: {h:?}");
        }
    }
    let batch_size = config.batch_size.max(1);
    let shape = model.input_shape();
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Network<f64>, usize)> = None;

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(batch_size).enumerate() {
            let mut data = Vec::with_capacity(chunk.len() * model.input_len());
            for &i in chunk {
                data.extend_from_slice(&train_set.inputs[i]);
            }
            let x = Tensor::from_vec(&[chunk.len(), shape[0], shape[1], shape[2]], data)?;
            let (y, cache) = model.forward(&x, true, batch_seed(config.seed, epoch, b))?;
            let out = model.output_len();
            let mut grad = Vec::with_capacity(y.len());
            let mut batch_loss = 0.0;
            let n = chunk.len();
            for (k, &i) in chunk.iter().enumerate() {
                let pred = &y.data()[k * out..][..out];
                let (l, g) = match (&train_set.targets, loss) {
                    (Targets::Class { labels, rd_loss }, LossKind::Size { th_rd, w }) => {
                        let (l, g) = loss_size(pred, labels[i], rd_loss[i], th_rd, w);
                        (l / n as f64, g.into_iter().map(|v| v / n as f64).collect())
                    }
                    (Targets::Regression(t), LossKind::Mnrc) => loss_mnrc(pred, &t[i], n),
                    _ => unreachable!("checked above"),
                };
                batch_loss += l;
                grad.extend(g);
            }
            if !batch_loss.is_finite() {
                return Err(NnError::NonFinite { epoch, batch: b });
            }
            epoch_loss += batch_loss * n as f64;
            let grad = Tensor::from_vec(&[n, out], grad)?;
            let grads = match loss {
                LossKind::Size { .. } => model.backward_logits(&cache, &grad)?,
                LossKind::Mnrc => model.backward(&cache, &grad)?,
            };
            adam.step(&mut model, &grads.tensors, lr);
        }
        let (val_loss, val_accuracy) = match val_set {
            Some(v) => {
                let (l, a) = evaluate(&model, v);
                (Some(l), a)
            }
            None => (None, None),
        };
        if let Some(vl) = val_loss {
            let score = val_accuracy.unwrap_or(-vl);
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, model.clone(), epoch));
            }
        }
        history.push(EpochMetrics {
            epoch,
            learning_rate: lr,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    let (model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => (model, config.epochs.saturating_sub(1)),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
