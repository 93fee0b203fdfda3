use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layer::{self, Layer, LayerCache, LayerSpec, Shape};
use crate::{NnError, Scalar, Tensor};

/// A sequential network with fixed input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    input: Shape,
    output: usize,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
}

/// Activations recorded by a forward pass, one entry per sample.
#[derive(Clone, Debug)]
pub struct Cache<T> {
    samples: Vec<Vec<LayerCache<T>>>,
}

impl<T> Cache<T> {
    pub fn batch_len(&self) -> usize {
        self.samples.len()
    }
}

/// Parameter gradients in the order of [`Network::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|v| v.is_zero()))
    }

    pub fn add(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, &y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl<T: Scalar> Network<T> {
    /// Build and initialize: zero biases, kernels uniform in
    /// ±sqrt(6 / (fan_in + fan_out)).
    pub fn build(input: [usize; 3], specs: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (layers, [c, h, w]) = layer::build(&specs, input, &mut rng)?;
        Ok(Network {
            input,
            output: c * h * w,
            specs,
            layers,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn ends_in_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Softmax))
    }

    /// Named parameter tensors in a fixed visiting order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        layer::params(&self.layers, "", &mut out);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        layer::params_mut(&mut self.layers, &mut out);
        out
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Replace a named tensor's values, checking dims.
    pub fn set_tensor(&mut self, name: &str, value: &Tensor<T>) -> Result<(), NnError> {
        let index = self
            .tensors()
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| NnError::UnknownTensor(name.to_string()))?;
        let slot = &mut self.tensors_mut()[index];
        if slot.dims() != value.dims() {
            return Err(NnError::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                slot.dims(),
                value.dims()
            )));
        }
        slot.data_mut().copy_from_slice(value.data());
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            tensors: self.tensors().iter().map(|(_, t)| Tensor::zeros(t.dims())).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input: self.input,
            output: self.output,
            specs: self.specs.clone(),
            layers: layer::cast_layers(&self.layers),
        }
    }

    fn batch_of(&self, input: &Tensor<T>) -> Result<usize, NnError> {
        let per = self.input_len();
        let dims = input.dims();
        let ok = match dims.len() {
            3 => dims == self.input,
            4 => dims[1..] == self.input,
            2 => dims[1] == per,
            _ => false,
        };
        if !ok {
            return Err(NnError::Shape(format!("input {dims:?} for network expecting {:?}", self.input)));
        }
        Ok(input.len() / per)
    }

    /// Batched forward pass. Dropout is active only when `training`, with
    /// masks drawn from `seed` and the sample index.
    pub fn forward(&self, input: &Tensor<T>, training: bool, seed: u64) -> Result<(Tensor<T>, Cache<T>), NnError> {
        let b = self.batch_of(input)?;
        let mut out = Vec::with_capacity(b * self.output);
        let mut samples = Vec::with_capacity(b);
        for (i, x) in input.data().chunks(self.input_len()).enumerate() {
            let mut cache = Vec::with_capacity(self.layers.len());
            let mut rng = training.then(|| sample_rng(seed, i));
            out.extend(layer::forward_seq(&self.layers, x.to_vec(), rng.as_mut(), Some(&mut cache)));
            samples.push(cache);
        }
        Ok((Tensor::from_vec(&[b, self.output], out)?, Cache { samples }))
    }

    /// Inference on a batch without recording activations.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let b = self.batch_of(input)?;
        let mut out = Vec::with_capacity(b * self.output);
        for x in input.data().chunks(self.input_len()) {
            out.extend(layer::forward_seq(&self.layers, x.to_vec(), None, None));
        }
        Tensor::from_vec(&[b, self.output], out)
    }

    /// Inference on one sample.
    pub fn predict_one(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.input_len(), "input length");
        layer::forward_seq(&self.layers, x.to_vec(), None, None)
    }

    /// Gradients of `Σ grad_output · output` summed over the batch.
    pub fn backward(&self, cache: &Cache<T>, grad_output: &Tensor<T>) -> Result<Gradients<T>, NnError> {
        self.backward_through(&self.layers, cache, grad_output, false)
    }

    /// Like [`backward`](Self::backward) but `grad_logits` is taken with
    /// respect to the input of a trailing softmax.
    pub fn backward_logits(&self, cache: &Cache<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>, NnError> {
        if !self.ends_in_softmax() {
            return self.backward(cache, grad_logits);
        }
        self.backward_through(&self.layers[..self.layers.len() - 1], cache, grad_logits, true)
    }

    fn backward_through(
        &self,
        layers: &[Layer<T>],
        cache: &Cache<T>,
        grad: &Tensor<T>,
        trim: bool,
    ) -> Result<Gradients<T>, NnError> {
        if grad.len() != cache.samples.len() * self.output {
            return Err(NnError::Shape(format!(
                "gradient of {} values for batch of {}",
                grad.len(),
                cache.samples.len()
            )));
        }
        let mut grads = self.zero_gradients();
        for (sample, g) in cache.samples.iter().zip(grad.data().chunks(self.output)) {
            let entries = if trim {
                &sample[..sample.len().saturating_sub(1)]
            } else {
                &sample[..]
            };
            layer::backward_seq(layers, entries, g.to_vec(), &mut grads.tensors, false)?;
        }
        Ok(grads)
    }

    /// Input gradient of one sample, for checks.
    pub fn input_gradient(&self, cache: &Cache<T>, sample: usize, grad_output: &[T]) -> Result<Vec<T>, NnError> {
        let entries = cache.samples.get(sample).ok_or(NnError::MissingCache)?;
        let mut scratch = self.zero_gradients();
        Ok(layer::backward_seq(&self.layers, entries, grad_output.to_vec(), &mut scratch.tensors, true)?
            .expect("input gradient requested"))
    }
}
