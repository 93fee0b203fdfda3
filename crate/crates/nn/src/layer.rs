use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{cast, NnError, Scalar, Tensor};

/// Declarative description of one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        out_channels: usize,
        stride: usize,
        pad_h: usize,
        pad_w: usize,
    },
    /// Fully connected; flattens its input.
    Dense { width: usize },
    /// Parallel branches over the same input, joined along channels.
    Concat(Vec<Vec<LayerSpec>>),
    LeakyRelu { alpha: f64 },
    Dropout { rate: f64 },
    Softmax,
    /// Non-overlapping mean pooling.
    AvgPool { size: usize },
}

impl LayerSpec {
    /// Unpadded convolution.
    pub fn conv(kernel_h: usize, kernel_w: usize, out_channels: usize, stride: usize) -> Self {
        LayerSpec::Conv {
            kernel_h,
            kernel_w,
            out_channels,
            stride,
            pad_h: 0,
            pad_w: 0,
        }
    }

    /// Convolution zero-padded by `(k - 1) / 2` on each side.
    pub fn conv_same(kernel_h: usize, kernel_w: usize, out_channels: usize, stride: usize) -> Self {
        LayerSpec::Conv {
            kernel_h,
            kernel_w,
            out_channels,
            stride,
            pad_h: (kernel_h - 1) / 2,
            pad_w: (kernel_w - 1) / 2,
        }
    }
}

/// (channels, height, width) of one sample.
pub(crate) type Shape = [usize; 3];

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Conv<T> {
    pub ci: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub ph: usize,
    pub pw: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Dense<T> {
    pub inp: usize,
    pub out: usize,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Layer<T> {
    Conv(Conv<T>),
    Dense(Dense<T>),
    Concat(Vec<Vec<Layer<T>>>, Vec<usize>),
    LeakyRelu(T),
    Dropout(f64),
    Softmax,
    AvgPool(usize, Shape),
}

#[derive(Clone, Debug)]
pub(crate) enum LayerCache<T> {
    Input(Vec<T>),
    Output(Vec<T>),
    Mask(Vec<T>),
    Concat(Vec<Vec<LayerCache<T>>>),
    Nothing,
}

fn glorot<T: Scalar>(dims: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = dims.iter().product();
    let data = (0..n).map(|_| cast(rng.gen_range(-bound..=bound))).collect();
    Tensor::from_vec(dims, data).expect("consistent dims")
}

/// Instantiate `specs` for an input of `shape`, returning the output shape.
pub(crate) fn build<T: Scalar>(
    specs: &[LayerSpec],
    mut shape: Shape,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Layer<T>>, Shape), NnError> {
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let [c, h, w] = shape;
        match spec {
            &LayerSpec::Conv {
                kernel_h,
                kernel_w,
                out_channels,
                stride,
                pad_h,
                pad_w,
            } => {
                if stride == 0 || kernel_h == 0 || kernel_w == 0 || out_channels == 0 {
                    return Err(NnError::InvalidLayer(format!("{spec:?}")));
                }
                if h + 2 * pad_h < kernel_h || w + 2 * pad_w < kernel_w {
                    return Err(NnError::Shape(format!("{kernel_h}x{kernel_w} kernel on {h}x{w} input")));
                }
                let out_h = (h + 2 * pad_h - kernel_h) / stride + 1;
                let out_w = (w + 2 * pad_w - kernel_w) / stride + 1;
                let area = kernel_h * kernel_w;
                layers.push(Layer::Conv(Conv {
                    ci: c,
                    co: out_channels,
                    kh: kernel_h,
                    kw: kernel_w,
                    stride,
                    ph: pad_h,
                    pw: pad_w,
                    in_h: h,
                    in_w: w,
                    out_h,
                    out_w,
                    weight: glorot(&[out_channels, c, kernel_h, kernel_w], c * area, out_channels * area, rng),
                    bias: Tensor::zeros(&[out_channels]),
                }));
                shape = [out_channels, out_h, out_w];
            }
            &LayerSpec::Dense { width } => {
                if width == 0 {
                    return Err(NnError::InvalidLayer("zero-width dense layer".into()));
                }
                let inp = c * h * w;
                layers.push(Layer::Dense(Dense {
                    inp,
                    out: width,
                    weight: glorot(&[width, inp], inp, width, rng),
                    bias: Tensor::zeros(&[width]),
                }));
                shape = [width, 1, 1];
            }
            LayerSpec::Concat(branches) => {
                if branches.is_empty() {
                    return Err(NnError::InvalidLayer("concat without branches".into()));
                }
                let mut built = Vec::with_capacity(branches.len());
                let mut channels = Vec::with_capacity(branches.len());
                let mut spatial = None;
                for b in branches {
                    let (layers, [bc, bh, bw]) = build(b, shape, rng)?;
                    match spatial {
                        None => spatial = Some((bh, bw)),
                        Some(s) if s != (bh, bw) => {
                            return Err(NnError::Shape(format!(
                                "concat branches disagree: {s:?} vs {:?}",
                                (bh, bw)
                            )))
                        }
                        _ => {}
                    }
                    built.push(layers);
                    channels.push(bc);
                }
                let (bh, bw) = spatial.expect("nonempty");
                shape = [channels.iter().sum(), bh, bw];
                layers.push(Layer::Concat(built, channels));
            }
            &LayerSpec::LeakyRelu { alpha } => layers.push(Layer::LeakyRelu(cast(alpha))),
            &LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(NnError::InvalidLayer(format!("dropout rate {rate}")));
                }
                layers.push(Layer::Dropout(rate));
            }
            LayerSpec::Softmax => layers.push(Layer::Softmax),
            &LayerSpec::AvgPool { size } => {
                if size == 0 || h % size != 0 || w % size != 0 {
                    return Err(NnError::Shape(format!("pool {size} on {h}x{w}")));
                }
                layers.push(Layer::AvgPool(size, shape));
                shape = [c, h / size, w / size];
            }
        }
    }
    Ok((layers, shape))
}

pub(crate) fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

impl<T: Scalar> Conv<T> {
    /// Unrolls the receptive fields into a `(ci·kh·kw) × (out_h·out_w)`
    /// matrix, zero where a tap falls in the padding.
    fn im2col(&self, x: &[T]) -> Vec<T> {
        let (s, ih, iw, oh, ow) = (self.stride, self.in_h, self.in_w, self.out_h, self.out_w);
        let plane = oh * ow;
        let mut cols = vec![T::zero(); self.ci * self.kh * self.kw * plane];
        let mut row = cols.chunks_exact_mut(plane);
        for i in 0..self.ci {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let dst = row.next().expect("row per tap");
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - self.ph as isize;
                        if iy < 0 || iy as usize >= ih {
                            continue;
                        }
                        let src = &x[(i * ih + iy as usize) * iw..][..iw];
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - self.pw as isize;
                            if ix >= 0 && (ix as usize) < iw {
                                dst[oy * ow + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adds each column-matrix entry back onto the input position it was
    /// read from.
    fn col2im(&self, cols: &[T], gx: &mut [T]) {
        let (s, ih, iw, oh, ow) = (self.stride, self.in_h, self.in_w, self.out_h, self.out_w);
        let mut row = cols.chunks_exact(oh * ow);
        for i in 0..self.ci {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let src = row.next().expect("row per tap");
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - self.ph as isize;
                        if iy < 0 || iy as usize >= ih {
                            continue;
                        }
                        let dst = &mut gx[(i * ih + iy as usize) * iw..][..iw];
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - self.pw as isize;
                            if ix >= 0 && (ix as usize) < iw {
                                dst[ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &[T]) -> Vec<T> {
        let plane = self.out_h * self.out_w;
        let k = self.ci * self.kh * self.kw;
        let cols = self.im2col(x);
        let mut out = Vec::with_capacity(self.co * plane);
        for &b in self.bias.data() {
            out.extend(std::iter::repeat_n(b, plane));
        }
        for (dst, w) in out.chunks_exact_mut(plane).zip(self.weight.data().chunks_exact(k)) {
            for (&wv, src) in w.iter().zip(cols.chunks_exact(plane)) {
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += wv * v;
                }
            }
        }
        out
    }

    fn backward(&self, x: &[T], g: &[T], gw: &mut [T], gb: &mut [T], gx: Option<&mut [T]>) {
        let plane = self.out_h * self.out_w;
        let k = self.ci * self.kh * self.kw;
        let cols = self.im2col(x);
        for (b, go) in gb.iter_mut().zip(g.chunks_exact(plane)) {
            *b += go.iter().copied().sum::<T>();
        }
        for (gw, go) in gw.chunks_exact_mut(k).zip(g.chunks_exact(plane)) {
            for (a, src) in gw.iter_mut().zip(cols.chunks_exact(plane)) {
                *a += go.iter().zip(src).map(|(&p, &q)| p * q).sum::<T>();
            }
        }
        if let Some(gx) = gx {
            let mut gcols = vec![T::zero(); cols.len()];
            for (w, go) in self.weight.data().chunks_exact(k).zip(g.chunks_exact(plane)) {
                for (&wv, dst) in w.iter().zip(gcols.chunks_exact_mut(plane)) {
                    for (d, &v) in dst.iter_mut().zip(go) {
                        *d += wv * v;
                    }
                }
            }
            self.col2im(&gcols, gx);
        }
    }
}

impl<T: Scalar> Dense<T> {
    fn forward(&self, x: &[T]) -> Vec<T> {
        let w = self.weight.data();
        self.bias
            .data()
            .iter()
            .enumerate()
            .map(|(o, &b)| b + w[o * self.inp..][..self.inp].iter().zip(x).map(|(&a, &v)| a * v).sum::<T>())
            .collect()
    }

    fn backward(&self, x: &[T], g: &[T], gw: &mut [T], gb: &mut [T], gx: Option<&mut [T]>) {
        for (o, &go) in g.iter().enumerate() {
            gb[o] += go;
            for (a, &v) in gw[o * self.inp..][..self.inp].iter_mut().zip(x) {
                *a += go * v;
            }
        }
        if let Some(gx) = gx {
            let w = self.weight.data();
            for (o, &go) in g.iter().enumerate() {
                for (d, &a) in gx.iter_mut().zip(&w[o * self.inp..][..self.inp]) {
                    *d += go * a;
                }
            }
        }
    }
}

/// Forward one sample through `layers`.
pub(crate) fn forward_seq<T: Scalar>(
    layers: &[Layer<T>],
    mut x: Vec<T>,
    dropout: Option<&mut ChaCha8Rng>,
    cache: Option<&mut Vec<LayerCache<T>>>,
) -> Vec<T> {
    let mut rng = dropout;
    let mut cache = cache;
    for layer in layers {
        let (y, entry) = match layer {
            Layer::Conv(c) => {
                let y = c.forward(&x);
                (y, LayerCache::Input(x))
            }
            Layer::Dense(d) => {
                let y = d.forward(&x);
                (y, LayerCache::Input(x))
            }
            Layer::Concat(branches, _) => {
                let mut out = Vec::new();
                let mut caches = Vec::with_capacity(branches.len());
                for b in branches {
                    let mut bc = Vec::new();
                    let y = forward_seq(
                        b,
                        x.clone(),
                        rng.as_deref_mut(),
                        cache.is_some().then_some(&mut bc),
                    );
                    out.extend(y);
                    caches.push(bc);
                }
                (out, LayerCache::Concat(caches))
            }
            &Layer::LeakyRelu(alpha) => {
                let y = x.iter().map(|&v| if v > T::zero() { v } else { v * alpha }).collect();
                (y, LayerCache::Input(x))
            }
            &Layer::Dropout(rate) => match rng.as_deref_mut() {
                Some(r) if rate > 0.0 => {
                    let keep: T = cast(1.0 / (1.0 - rate));
                    let mask: Vec<T> = (0..x.len())
                        .map(|_| if r.gen::<f64>() < rate { T::zero() } else { keep })
                        .collect();
                    let y = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    (y, LayerCache::Mask(mask))
                }
                _ => (x, LayerCache::Nothing),
            },
            Layer::Softmax => {
                let mut y = x;
                softmax_in_place(&mut y);
                (y.clone(), LayerCache::Output(y))
            }
            &Layer::AvgPool(k, [c, h, w]) => {
                let (oh, ow) = (h / k, w / k);
                let scale: T = cast(1.0 / (k * k) as f64);
                let mut y = vec![T::zero(); c * oh * ow];
                for ch in 0..c {
                    for iy in 0..h {
                        for ix in 0..w {
                            y[(ch * oh + iy / k) * ow + ix / k] += x[(ch * h + iy) * w + ix];
                        }
                    }
                }
                y.iter_mut().for_each(|v| *v *= scale);
                (y, LayerCache::Nothing)
            }
        };
        if let Some(c) = cache.as_deref_mut() {
            c.push(entry);
        }
        x = y;
    }
    x
}

/// Number of parameter tensors in `layers`.
pub(crate) fn param_count<T>(layers: &[Layer<T>]) -> usize {
    layers
        .iter()
        .map(|l| match l {
            Layer::Conv(_) | Layer::Dense(_) => 2,
            Layer::Concat(b, _) => b.iter().map(|s| param_count(s)).sum(),
            _ => 0,
        })
        .sum()
}

/// Backward one sample. `grads` holds the parameter gradients of `layers`
/// in visiting order. Returns the input gradient when `need_input`.
pub(crate) fn backward_seq<T: Scalar>(
    layers: &[Layer<T>],
    cache: &[LayerCache<T>],
    mut g: Vec<T>,
    grads: &mut [Tensor<T>],
    need_input: bool,
) -> Result<Option<Vec<T>>, NnError> {
    if cache.len() != layers.len() {
        return Err(NnError::MissingCache);
    }
    let mut offsets = Vec::with_capacity(layers.len());
    let mut at = 0;
    for l in layers {
        offsets.push(at);
        at += param_count(std::slice::from_ref(l));
    }
    for (idx, (layer, entry)) in layers.iter().zip(cache).enumerate().rev() {
        let need = need_input || idx > 0;
        let p = offsets[idx];
        g = match (layer, entry) {
            (Layer::Conv(c), LayerCache::Input(x)) => {
                let mut gx = need.then(|| vec![T::zero(); x.len()]);
                let (gw, gb) = grads[p..p + 2].split_at_mut(1);
                c.backward(x, &g, gw[0].data_mut(), gb[0].data_mut(), gx.as_deref_mut());
                gx.unwrap_or_default()
            }
            (Layer::Dense(d), LayerCache::Input(x)) => {
                let mut gx = need.then(|| vec![T::zero(); x.len()]);
                let (gw, gb) = grads[p..p + 2].split_at_mut(1);
                d.backward(x, &g, gw[0].data_mut(), gb[0].data_mut(), gx.as_deref_mut());
                gx.unwrap_or_default()
            }
            (Layer::Concat(branches, channels), LayerCache::Concat(caches)) => {
                let plane = g.len() / channels.iter().sum::<usize>();
                let mut gx: Option<Vec<T>> = None;
                let mut start = 0;
                let mut q = p;
                for ((b, bc), &ch) in branches.iter().zip(caches).zip(channels) {
                    let n = param_count(b);
                    let part = g[start..start + ch * plane].to_vec();
                    start += ch * plane;
                    if let Some(d) = backward_seq(b, bc, part, &mut grads[q..q + n], need)? {
                        match gx.as_mut() {
                            Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, &v)| *a += v),
                            None => gx = Some(d),
                        }
                    }
                    q += n;
                }
                gx.unwrap_or_default()
            }
            (&Layer::LeakyRelu(alpha), LayerCache::Input(x)) => g
                .iter()
                .zip(x)
                .map(|(&gv, &v)| if v > T::zero() { gv } else { gv * alpha })
                .collect(),
            (Layer::Dropout(_), LayerCache::Mask(m)) => g.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            (Layer::Dropout(_), LayerCache::Nothing) => g,
            (Layer::Softmax, LayerCache::Output(y)) => {
                let dot: T = g.iter().zip(y).map(|(&a, &b)| a * b).sum();
                g.iter().zip(y).map(|(&a, &b)| b * (a - dot)).collect()
            }
            (&Layer::AvgPool(k, [c, h, w]), LayerCache::Nothing) => {
                let (oh, ow) = (h / k, w / k);
                let scale: T = cast(1.0 / (k * k) as f64);
                let mut gx = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for iy in 0..h {
                        for ix in 0..w {
                            gx[(ch * h + iy) * w + ix] = g[(ch * oh + iy / k) * ow + ix / k] * scale;
                        }
                    }
                }
                gx
            }
            _ => return Err(NnError::MissingCache),
        };
    }
    Ok(need_input.then_some(g))
}

/// Mutable references to every parameter tensor in visiting order.
pub(crate) fn params_mut<'a, T>(layers: &'a mut [Layer<T>], out: &mut Vec<&'a mut Tensor<T>>) {
    for l in layers {
        match l {
            Layer::Conv(c) => {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
            Layer::Dense(d) => {
                out.push(&mut d.weight);
                out.push(&mut d.bias);
            }
            Layer::Concat(b, _) => b.iter_mut().for_each(|s| params_mut(s, out)),
            _ => {}
        }
    }
}

pub(crate) fn params<'a, T>(layers: &'a [Layer<T>], prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
    for (i, l) in layers.iter().enumerate() {
        match l {
            Layer::Conv(c) => {
                out.push((format!("{prefix}{i}.weight"), &c.weight));
                out.push((format!("{prefix}{i}.bias"), &c.bias));
            }
            Layer::Dense(d) => {
                out.push((format!("{prefix}{i}.weight"), &d.weight));
                out.push((format!("{prefix}{i}.bias"), &d.bias));
            }
            Layer::Concat(b, _) => {
                for (j, s) in b.iter().enumerate() {
                    params(s, &format!("{prefix}{i}.{j}."), out);
                }
            }
            _ => {}
        }
    }
}

pub(crate) fn cast_layers<T: Scalar, U: Scalar>(layers: &[Layer<T>]) -> Vec<Layer<U>> {
    layers
        .iter()
        .map(|l| match l {
            Layer::Conv(c) => Layer::Conv(Conv {
                ci: c.ci,
                co: c.co,
                kh: c.kh,
                kw: c.kw,
                stride: c.stride,
                ph: c.ph,
                pw: c.pw,
                in_h: c.in_h,
                in_w: c.in_w,
                out_h: c.out_h,
                out_w: c.out_w,
                weight: c.weight.cast(),
                bias: c.bias.cast(),
            }),
            Layer::Dense(d) => Layer::Dense(Dense {
                inp: d.inp,
                out: d.out,
                weight: d.weight.cast(),
                bias: d.bias.cast(),
            }),
            Layer::Concat(b, ch) => Layer::Concat(b.iter().map(|s| cast_layers(s)).collect(), ch.clone()),
            Layer::LeakyRelu(a) => Layer::LeakyRelu(U::from_f64(a.to_f64().unwrap()).unwrap()),
            Layer::Dropout(r) => Layer::Dropout(*r),
            Layer::Softmax => Layer::Softmax,
            Layer::AvgPool(k, s) => Layer::AvgPool(*k, *s),
        })
        .collect()
}
