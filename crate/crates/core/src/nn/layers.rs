//! Layer kernels with analytic backward passes.
//!
//! Activations are batched: convolutional tensors are `[N, C, H, W]`, dense
//! ones `[N, F]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{axpy, dot, sum, Real, Tensor};
use super::NnError;

pub const KERNEL: usize = 3;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;
pub const PRELU_INIT: f64 = 0.25;
pub const BIAS_INIT: f64 = 0.1;

fn shape_err(msg: impl Into<String>) -> NnError {
    NnError::Shape(msg.into())
}

fn dims4<T: Real>(x: &Tensor<T>) -> Result<(usize, usize, usize, usize), NnError> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        ref s => Err(shape_err(format!("expected [N, C, H, W], got {s:?}"))),
    }
}

fn dims2<T: Real>(x: &Tensor<T>) -> Result<(usize, usize), NnError> {
    match *x.shape() {
        [n, f] => Ok((n, f)),
        ref s => Err(shape_err(format!("expected [N, F], got {s:?}"))),
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(), NnError> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!(
            "gradient {:?} does not match {:?}",
            b.shape(),
            a.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- conv

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    /// `(out_ch, in_ch, 3, 3)`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
    /// Set on a network's first layer, whose input gradient is never used.
    pub skip_input_grad: bool,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(in_ch: usize, out_ch: usize) -> Self {
        let nw = out_ch * in_ch * KERNEL * KERNEL;
        Self {
            in_ch,
            out_ch,
            weight: vec![T::zero(); nw],
            bias: vec![T::zero(); out_ch],
            grad_weight: vec![T::zero(); nw],
            grad_bias: vec![T::zero(); out_ch],
            skip_input_grad: false,
            input: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.in_ch * KERNEL * KERNEL
    }
}

pub struct ConvGrads<T> {
    pub grad_x: Option<Tensor<T>>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
}

/// Valid, stride-1 cross-correlation summed over input channels, plus bias.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, layer: &Conv2d<T>) -> Result<Tensor<T>, NnError> {
    let (n, c, h, w) = dims4(x)?;
    if c != layer.in_ch {
        return Err(shape_err(format!("conv expects {} channels, got {c}", layer.in_ch)));
    }
    if h < KERNEL || w < KERNEL {
        return Err(shape_err(format!("conv input {h}x{w} smaller than kernel")));
    }
    let (oh, ow, oc) = (h - 2, w - 2, layer.out_ch);
    let mut out = vec![T::zero(); n * oc * oh * ow];
    let xd = x.data();
    for b in 0..n {
        for o in 0..oc {
            let plane = &mut out[(b * oc + o) * oh * ow..][..oh * ow];
            plane.fill(layer.bias[o]);
            for ci in 0..c {
                let src = &xd[(b * c + ci) * h * w..][..h * w];
                let k = &layer.weight[(o * c + ci) * 9..][..9];
                for y in 0..oh {
                    let dst = &mut plane[y * ow..][..ow];
                    for ky in 0..KERNEL {
                        let row = &src[(y + ky) * w..][..w];
                        for kx in 0..KERNEL {
                            axpy(k[ky * 3 + kx], &row[kx..kx + ow], dst);
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, oc, oh, ow], out)
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    layer: &Conv2d<T>,
    grad_out: &Tensor<T>,
    input_grad: bool,
) -> Result<ConvGrads<T>, NnError> {
    let (n, c, h, w) = dims4(x)?;
    if c != layer.in_ch || h < KERNEL || w < KERNEL {
        return Err(shape_err("conv backward input does not match layer"));
    }
    let (oh, ow, oc) = (h - 2, w - 2, layer.out_ch);
    if grad_out.shape() != [n, oc, oh, ow] {
        return Err(shape_err(format!(
            "conv grad_out {:?}, expected {:?}",
            grad_out.shape(),
            [n, oc, oh, ow]
        )));
    }
    let mut gw = vec![T::zero(); layer.weight.len()];
    let mut gb = vec![T::zero(); oc];
    let mut gx = if input_grad {
        Some(vec![T::zero(); x.len()])
    } else {
        None
    };
    let (xd, gd) = (x.data(), grad_out.data());
    for b in 0..n {
        for o in 0..oc {
            let g = &gd[(b * oc + o) * oh * ow..][..oh * ow];
            gb[o] += sum(g);
            for ci in 0..c {
                let src = &xd[(b * c + ci) * h * w..][..h * w];
                let base = (o * c + ci) * 9;
                for y in 0..oh {
                    let grow = &g[y * ow..][..ow];
                    for ky in 0..KERNEL {
                        for kx in 0..KERNEL {
                            let off = (y + ky) * w + kx;
                            gw[base + ky * 3 + kx] += dot(grow, &src[off..off + ow]);
                        }
                    }
                }
                if let Some(gx) = gx.as_mut() {
                    let k = &layer.weight[base..base + 9];
                    let dst = &mut gx[(b * c + ci) * h * w..][..h * w];
                    for y in 0..oh {
                        let grow = &g[y * ow..][..ow];
                        for ky in 0..KERNEL {
                            for kx in 0..KERNEL {
                                let off = (y + ky) * w + kx;
                                axpy(k[ky * 3 + kx], grow, &mut dst[off..off + ow]);
                            }
                        }
                    }
                }
            }
        }
    }
    let grad_x = match gx {
        Some(d) => Some(Tensor::new(x.shape().to_vec(), d)?),
        None => None,
    };
    Ok(ConvGrads {
        grad_x,
        grad_weight: gw,
        grad_bias: gb,
    })
}

// ---------------------------------------------------------------- pool

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool2d {
    pub k: usize,
    pub s: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(k: usize, s: usize) -> Self {
        Self { k, s, cache: None }
    }

    pub fn out_extent(&self, n: usize) -> Result<usize, NnError> {
        pool_extent(n, self.k, self.s)
    }
}

fn pool_extent(n: usize, k: usize, s: usize) -> Result<usize, NnError> {
    if k == 0 || s == 0 || k > n {
        return Err(shape_err(format!("pool window {k} stride {s} does not fit extent {n}")));
    }
    Ok((n - k) / s + 1)
}

/// Window maxima and, per output, the flat input index of the first maximum
/// in row-major window order.
pub fn maxpool<T: Real>(x: &Tensor<T>, k: usize, s: usize) -> Result<(Tensor<T>, Vec<usize>), NnError> {
    let (n, c, h, w) = dims4(x)?;
    let (oh, ow) = (pool_extent(h, k, s)?, pool_extent(w, k, s)?);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for p in 0..n * c {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * s * w + ox * s;
                for dy in 0..k {
                    let row = base + (oy * s + dy) * w + ox * s;
                    for i in row..row + k {
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                out.push(xd[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, arg))
}

pub fn maxpool_backward<T: Real>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if grad_out.len() != argmax.len() {
        return Err(shape_err("pool gradient does not match forward"));
    }
    let mut gx = Tensor::zeros(input_shape.to_vec());
    let d = gx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(gx)
}

// ---------------------------------------------------------------- batch norm

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<f64>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            grad_gamma: vec![T::zero(); channels],
            grad_beta: vec![T::zero(); channels],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

// (batch, channels, elements per channel per sample)
fn channel_layout<T: Real>(x: &Tensor<T>, channels: usize) -> Result<(usize, usize), NnError> {
    let s = x.shape();
    if s.len() < 2 || s[1] != channels {
        return Err(shape_err(format!("expected [N, {channels}, ...], got {s:?}")));
    }
    if s[0] == 0 {
        return Err(shape_err("empty batch"));
    }
    Ok((s[0], s[2..].iter().product()))
}

/// Normalizes with batch statistics and folds them into the running averages.
pub fn batchnorm_train<T: Real>(x: &Tensor<T>, layer: &mut BatchNorm2d<T>) -> Result<(Tensor<T>, BnCache<T>), NnError> {
    let c = layer.channels();
    let (n, sp) = channel_layout(x, c)?;
    let m = (n * sp) as f64;
    let xd = x.data();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let planes = (0..n).map(|b| (b * c + ch) * sp);
        let mut s = 0.0;
        for p in planes.clone() {
            s += xd[p..p + sp].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = s / m;
        let mut q = 0.0;
        for p in planes.clone() {
            q += xd[p..p + sp].iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
        }
        let var = q / m;
        let is = 1.0 / (var + layer.eps).sqrt();
        inv_std[ch] = is;
        let (g, bt) = (layer.gamma[ch], layer.beta[ch]);
        let (mean_t, is_t) = (T::of(mean), T::of(is));
        for p in planes {
            for i in p..p + sp {
                let xh = (xd[i] - mean_t) * is_t;
                xhat[i] = xh;
                out[i] = g * xh + bt;
            }
        }
        let mo = layer.momentum;
        layer.running_mean[ch] = T::of(mo * layer.running_mean[ch].as_f64() + (1.0 - mo) * mean);
        layer.running_var[ch] = T::of(mo * layer.running_var[ch].as_f64() + (1.0 - mo) * var);
    }
    let shape = x.shape().to_vec();
    Ok((
        Tensor::new(shape.clone(), out)?,
        BnCache {
            xhat: Tensor::new(shape, xhat)?,
            inv_std,
        },
    ))
}

/// Normalizes with the running statistics.
pub fn batchnorm_infer<T: Real>(x: &Tensor<T>, layer: &BatchNorm2d<T>) -> Result<Tensor<T>, NnError> {
    let c = layer.channels();
    let (n, sp) = channel_layout(x, c)?;
    let mut out = x.clone();
    let d = out.data_mut();
    for ch in 0..c {
        let is = 1.0 / (layer.running_var[ch].as_f64() + layer.eps).sqrt();
        let scale = T::of(layer.gamma[ch].as_f64() * is);
        let shift = layer.beta[ch] - scale * layer.running_mean[ch];
        for b in 0..n {
            let p = (b * c + ch) * sp;
            for v in &mut d[p..p + sp] {
                *v = *v * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Real>(
    layer: &BatchNorm2d<T>,
    cache: &BnCache<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>), NnError> {
    same_shape(&cache.xhat, grad_out)?;
    let c = layer.channels();
    let (n, sp) = channel_layout(grad_out, c)?;
    let m = (n * sp) as f64;
    let (xh, gd) = (cache.xhat.data(), grad_out.data());
    let mut gx = vec![T::zero(); gd.len()];
    let mut gg = vec![T::zero(); c];
    let mut gbeta = vec![T::zero(); c];
    for ch in 0..c {
        let planes = (0..n).map(|b| (b * c + ch) * sp);
        let (mut db, mut dg) = (0.0, 0.0);
        for p in planes.clone() {
            for i in p..p + sp {
                let g = gd[i].as_f64();
                db += g;
                dg += g * xh[i].as_f64();
            }
        }
        gg[ch] = T::of(dg);
        gbeta[ch] = T::of(db);
        let k = layer.gamma[ch].as_f64() * cache.inv_std[ch] / m;
        for p in planes {
            for i in p..p + sp {
                gx[i] = T::of(k * (m * gd[i].as_f64() - db - xh[i].as_f64() * dg));
            }
        }
    }
    Ok((Tensor::new(grad_out.shape().to_vec(), gx)?, gg, gbeta))
}

// ---------------------------------------------------------------- prelu

/// Parametric rectifier with one slope per channel, or a single shared slope.
#[derive(Debug, Clone, PartialEq)]
pub struct PRelu<T> {
    pub alpha: Vec<T>,
    pub grad_alpha: Vec<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> PRelu<T> {
    pub fn new(count: usize) -> Self {
        Self {
            alpha: vec![T::of(PRELU_INIT); count],
            grad_alpha: vec![T::zero(); count],
            input: None,
        }
    }
}

// slope index of every element, as (elements per slope run, number of slopes)
fn prelu_runs<T: Real>(x: &Tensor<T>, alphas: usize) -> Result<usize, NnError> {
    if alphas == 1 {
        return Ok(x.len().max(1));
    }
    let s = x.shape();
    if s.len() < 2 || s[1] != alphas {
        return Err(shape_err(format!("prelu has {alphas} slopes for input {s:?}")));
    }
    Ok(s[2..].iter().product())
}

pub fn prelu<T: Real>(x: &Tensor<T>, layer: &PRelu<T>) -> Result<Tensor<T>, NnError> {
    let na = layer.alpha.len();
    let run = prelu_runs(x, na)?;
    let mut out = x.clone();
    for (j, chunk) in out.data_mut().chunks_mut(run).enumerate() {
        let a = layer.alpha[j % na];
        for v in chunk {
            if *v < T::zero() {
                *v = a * *v;
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_alpha)`.
pub fn prelu_backward<T: Real>(
    x: &Tensor<T>,
    layer: &PRelu<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>), NnError> {
    same_shape(x, grad_out)?;
    let na = layer.alpha.len();
    let run = prelu_runs(x, na)?;
    let mut gx = grad_out.clone();
    let mut ga = vec![0.0f64; na];
    for (j, (gchunk, xchunk)) in gx.data_mut().chunks_mut(run).zip(x.data().chunks(run)).enumerate() {
        let a = layer.alpha[j % na];
        let mut acc = 0.0;
        for (g, &xv) in gchunk.iter_mut().zip(xchunk) {
            if xv < T::zero() {
                acc += (*g * xv).as_f64();
                *g = *g * a;
            }
        }
        ga[j % na] += acc;
    }
    Ok((gx, ga.into_iter().map(T::of).collect()))
}

// ---------------------------------------------------------------- dropout

#[derive(Debug, Clone, PartialEq)]
pub struct Dropout<T> {
    pub rate: f64,
    mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64) -> Result<Self, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(shape_err(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate, mask: None })
    }
}

/// Inverted-dropout mask: 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

/// Train-mode dropout; also returns the mask for the backward pass. A zero
/// rate draws nothing.
pub fn dropout<T: Real, R: Rng + ?Sized>(x: &Tensor<T>, rate: f64, rng: &mut R) -> (Tensor<T>, Option<Vec<T>>) {
    if rate == 0.0 {
        return (x.clone(), None);
    }
    let mask = dropout_mask(x.len(), rate, rng);
    let mut out = x.clone();
    for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    (out, Some(mask))
}

// ---------------------------------------------------------------- dense

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_f: usize,
    pub out_f: usize,
    /// `(out, in)`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
    input: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(in_f: usize, out_f: usize) -> Self {
        Self {
            in_f,
            out_f,
            weight: vec![T::zero(); in_f * out_f],
            bias: vec![T::zero(); out_f],
            grad_weight: vec![T::zero(); in_f * out_f],
            grad_bias: vec![T::zero(); out_f],
            input: None,
        }
    }
}

/// `y = W x + b` for every row of the batch.
pub fn fc_forward<T: Real>(x: &Tensor<T>, layer: &Linear<T>) -> Result<Tensor<T>, NnError> {
    let (n, f) = dims2(x)?;
    if f != layer.in_f {
        return Err(shape_err(format!("dense layer expects {} inputs, got {f}", layer.in_f)));
    }
    let mut out = Vec::with_capacity(n * layer.out_f);
    for b in 0..n {
        let xr = x.row(b);
        for o in 0..layer.out_f {
            out.push(layer.bias[o] + dot(&layer.weight[o * f..(o + 1) * f], xr));
        }
    }
    Tensor::new(vec![n, layer.out_f], out)
}

/// Returns `(grad_x, grad_weight, grad_bias)`.
pub fn fc_backward<T: Real>(
    x: &Tensor<T>,
    layer: &Linear<T>,
    grad_out: &Tensor<T>,
    input_grad: bool,
) -> Result<(Option<Tensor<T>>, Vec<T>, Vec<T>), NnError> {
    let (n, f) = dims2(x)?;
    if f != layer.in_f || grad_out.shape() != [n, layer.out_f] {
        return Err(shape_err("dense backward shapes do not match"));
    }
    let mut gw = vec![T::zero(); layer.weight.len()];
    let mut gb = vec![T::zero(); layer.out_f];
    let mut gx = if input_grad { Some(vec![T::zero(); n * f]) } else { None };
    for b in 0..n {
        let xr = x.row(b);
        let gr = grad_out.row(b);
        for (o, &g) in gr.iter().enumerate() {
            gb[o] += g;
            axpy(g, xr, &mut gw[o * f..(o + 1) * f]);
            if let Some(gx) = gx.as_mut() {
                axpy(g, &layer.weight[o * f..(o + 1) * f], &mut gx[b * f..(b + 1) * f]);
            }
        }
    }
    let grad_x = match gx {
        Some(d) => Some(Tensor::new(vec![n, f], d)?),
        None => None,
    };
    Ok((grad_x, gw, gb))
}

// ---------------------------------------------------------------- softmax

/// Max-shifted softmax of one vector.
pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Row-wise softmax of `[N, K]` logits.
pub fn softmax_rows<T: Real>(z: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (n, k) = dims2(z)?;
    let mut out = Vec::with_capacity(n * k);
    for b in 0..n {
        out.extend(softmax(z.row(b)));
    }
    Tensor::new(vec![n, k], out)
}

/// Vector-Jacobian product of the softmax given its output `y`.
pub fn softmax_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    same_shape(y, grad_out)?;
    let (n, _) = dims2(y)?;
    let mut gx = grad_out.clone();
    for b in 0..n {
        let yr = y.row(b);
        let s = dot(grad_out.row(b), yr);
        let k = yr.len();
        for (j, g) in gx.data_mut()[b * k..(b + 1) * k].iter_mut().enumerate() {
            *g = yr[j] * (*g - s);
        }
    }
    Ok(gx)
}

// ---------------------------------------------------------------- layer enum

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm2d<T>),
    PRelu(PRelu<T>),
    MaxPool(MaxPool2d),
    Flatten(Option<Vec<usize>>),
    Linear(Linear<T>),
    Dropout(Dropout<T>),
    Softmax(Option<Tensor<T>>),
}

/// Mutable view of one trainable tensor and its gradient.
pub struct ParamMut<'a, T> {
    pub name: &'static str,
    pub value: &'a mut [T],
    pub grad: &'a [T],
    /// Whether weight decay applies.
    pub decay: bool,
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::PRelu(_) => "prelu",
            Layer::MaxPool(_) => "maxpool",
            Layer::Flatten(_) => "flatten",
            Layer::Linear(_) => "linear",
            Layer::Dropout(_) => "dropout",
            Layer::Softmax(_) => "softmax",
        }
    }

    /// He-normal weights with `std = sqrt(2 / fan_in)`, biases 0.1, slopes
    /// 0.25, identity batch norm.
    pub fn he_init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        fn fill<T: Real, R: Rng + ?Sized>(w: &mut [T], fan_in: usize, rng: &mut R) {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for v in w {
                *v = T::of(normal.sample(rng));
            }
        }
        match self {
            Layer::Conv(c) => {
                let fan = c.fan_in();
                fill(&mut c.weight, fan, rng);
                c.bias.fill(T::of(BIAS_INIT));
            }
            Layer::Linear(l) => {
                fill(&mut l.weight, l.in_f, rng);
                l.bias.fill(T::of(BIAS_INIT));
            }
            Layer::PRelu(p) => p.alpha.fill(T::of(PRELU_INIT)),
            Layer::BatchNorm(bn) => {
                bn.gamma.fill(T::one());
                bn.beta.fill(T::zero());
                bn.running_mean.fill(T::zero());
                bn.running_var.fill(T::one());
            }
            Layer::MaxPool(_) | Layer::Flatten(_) | Layer::Dropout(_) | Layer::Softmax(_) => {}
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let bad = || shape_err(format!("{} cannot take input {input:?}", self.kind()));
        match self {
            Layer::Conv(c) => match *input {
                [ch, h, w] if ch == c.in_ch && h >= KERNEL && w >= KERNEL => Ok(vec![c.out_ch, h - 2, w - 2]),
                _ => Err(bad()),
            },
            Layer::MaxPool(p) => match *input {
                [ch, h, w] => Ok(vec![ch, p.out_extent(h)?, p.out_extent(w)?]),
                _ => Err(bad()),
            },
            Layer::BatchNorm(bn) if input.first() == Some(&bn.channels()) => Ok(input.to_vec()),
            Layer::PRelu(p) if p.alpha.len() == 1 || input.first() == Some(&p.alpha.len()) => Ok(input.to_vec()),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
            Layer::Linear(l) if input == [l.in_f] => Ok(vec![l.out_f]),
            Layer::Dropout(_) | Layer::Softmax(_) => Ok(input.to_vec()),
            _ => Err(bad()),
        }
    }

    /// Inference-mode forward; never touches layer state.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(c) => conv2d_forward(x, c),
            Layer::BatchNorm(bn) => batchnorm_infer(x, bn),
            Layer::PRelu(p) => prelu(x, p),
            Layer::MaxPool(p) => Ok(maxpool(x, p.k, p.s)?.0),
            Layer::Flatten(_) => flatten(x),
            Layer::Linear(l) => fc_forward(x, l),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Softmax(_) => softmax_rows(x),
        }
    }

    /// Training-mode forward; caches what the backward pass needs.
    pub fn forward_train<R: Rng + ?Sized>(&mut self, x: Tensor<T>, rng: &mut R) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(c) => {
                let y = conv2d_forward(&x, c)?;
                c.input = Some(x);
                Ok(y)
            }
            Layer::BatchNorm(bn) => {
                let (y, cache) = batchnorm_train(&x, bn)?;
                bn.cache = Some(cache);
                Ok(y)
            }
            Layer::PRelu(p) => {
                let y = prelu(&x, p)?;
                p.input = Some(x);
                Ok(y)
            }
            Layer::MaxPool(p) => {
                let (y, arg) = maxpool(&x, p.k, p.s)?;
                p.cache = Some((x.shape().to_vec(), arg));
                Ok(y)
            }
            Layer::Flatten(cache) => {
                *cache = Some(x.shape().to_vec());
                flatten(&x)
            }
            Layer::Linear(l) => {
                let y = fc_forward(&x, l)?;
                l.input = Some(x);
                Ok(y)
            }
            Layer::Dropout(d) => {
                let (y, mask) = dropout(&x, d.rate, rng);
                d.mask = mask;
                Ok(y)
            }
            Layer::Softmax(cache) => {
                let y = softmax_rows(&x)?;
                *cache = Some(y.clone());
                Ok(y)
            }
        }
    }

    /// Stores parameter gradients and returns the input gradient, or `None`
    /// for a convolution flagged to skip it.
    pub fn backward(&mut self, g: Tensor<T>) -> Result<Option<Tensor<T>>, NnError> {
        let missing = |kind: &str| shape_err(format!("{kind} backward without a training forward"));
        match self {
            Layer::Conv(c) => {
                let x = c.input.take().ok_or_else(|| missing("conv"))?;
                let r = conv2d_backward(&x, c, &g, !c.skip_input_grad)?;
                c.grad_weight = r.grad_weight;
                c.grad_bias = r.grad_bias;
                Ok(r.grad_x)
            }
            Layer::BatchNorm(bn) => {
                let cache = bn.cache.take().ok_or_else(|| missing("batchnorm"))?;
                let (gx, gg, gb) = batchnorm_backward(bn, &cache, &g)?;
                bn.grad_gamma = gg;
                bn.grad_beta = gb;
                Ok(Some(gx))
            }
            Layer::PRelu(p) => {
                let x = p.input.take().ok_or_else(|| missing("prelu"))?;
                let (gx, ga) = prelu_backward(&x, p, &g)?;
                p.grad_alpha = ga;
                Ok(Some(gx))
            }
            Layer::MaxPool(p) => {
                let (shape, arg) = p.cache.take().ok_or_else(|| missing("maxpool"))?;
                Ok(Some(maxpool_backward(&shape, &arg, &g)?))
            }
            Layer::Flatten(cache) => {
                let shape = cache.take().ok_or_else(|| missing("flatten"))?;
                Ok(Some(g.reshape(shape)?))
            }
            Layer::Linear(l) => {
                let x = l.input.take().ok_or_else(|| missing("linear"))?;
                let (gx, gw, gb) = fc_backward(&x, l, &g, true)?;
                l.grad_weight = gw;
                l.grad_bias = gb;
                Ok(gx)
            }
            Layer::Dropout(d) => {
                let mut g = g;
                if let Some(mask) = d.mask.take() {
                    if mask.len() != g.len() {
                        return Err(shape_err("dropout gradient does not match mask"));
                    }
                    for (v, m) in g.data_mut().iter_mut().zip(mask) {
                        *v *= m;
                    }
                }
                Ok(Some(g))
            }
            Layer::Softmax(cache) => {
                let y = cache.take().ok_or_else(|| missing("softmax"))?;
                Ok(Some(softmax_backward(&y, &g)?))
            }
        }
    }

    /// Trainable tensors with their gradients.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        match self {
            Layer::Conv(Conv2d {
                weight,
                bias,
                grad_weight,
                grad_bias,
                ..
            })
            | Layer::Linear(Linear {
                weight,
                bias,
                grad_weight,
                grad_bias,
                ..
            }) => vec![
                ParamMut {
                    name: "weight",
                    value: weight,
                    grad: grad_weight,
                    decay: true,
                },
                ParamMut {
                    name: "bias",
                    value: bias,
                    grad: grad_bias,
                    decay: true,
                },
            ],
            Layer::BatchNorm(BatchNorm2d {
                gamma,
                beta,
                grad_gamma,
                grad_beta,
                ..
            }) => vec![
                ParamMut {
                    name: "gamma",
                    value: gamma,
                    grad: grad_gamma,
                    decay: false,
                },
                ParamMut {
                    name: "beta",
                    value: beta,
                    grad: grad_beta,
                    decay: false,
                },
            ],
            Layer::PRelu(PRelu { alpha, grad_alpha, .. }) => vec![ParamMut {
                name: "alpha",
                value: alpha,
                grad: grad_alpha,
                decay: false,
            }],
            _ => Vec::new(),
        }
    }

    /// Every persisted tensor (parameters and running statistics) with its shape.
    pub fn state(&self) -> Vec<(&'static str, Vec<usize>, &[T])> {
        match self {
            Layer::Conv(c) => vec![
                ("weight", vec![c.out_ch, c.in_ch, KERNEL, KERNEL], &c.weight[..]),
                ("bias", vec![c.out_ch], &c.bias[..]),
            ],
            Layer::Linear(l) => vec![
                ("weight", vec![l.out_f, l.in_f], &l.weight[..]),
                ("bias", vec![l.out_f], &l.bias[..]),
            ],
            Layer::BatchNorm(bn) => {
                let c = vec![bn.channels()];
                vec![
                    ("gamma", c.clone(), &bn.gamma[..]),
                    ("beta", c.clone(), &bn.beta[..]),
                    ("running_mean", c.clone(), &bn.running_mean[..]),
                    ("running_var", c, &bn.running_var[..]),
                ]
            }
            Layer::PRelu(p) => vec![("alpha", vec![p.alpha.len()], &p.alpha[..])],
            _ => Vec::new(),
        }
    }

    /// Mutable counterpart of [`Layer::state`], in the same order.
    pub fn state_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv(Conv2d { weight, bias, .. }) | Layer::Linear(Linear { weight, bias, .. }) => {
                vec![weight, bias]
            }
            Layer::BatchNorm(BatchNorm2d {
                gamma,
                beta,
                running_mean,
                running_var,
                ..
            }) => vec![gamma, beta, running_mean, running_var],
            Layer::PRelu(p) => vec![&mut p.alpha[..]],
            _ => Vec::new(),
        }
    }
}

/// `[N, ...]` to `[N, prod(...)]` in (channel, row, column) order.
pub fn flatten<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let n = x.batch();
    let f = if n == 0 { 0 } else { x.len() / n };
    x.clone().reshape(vec![n, f])
}
