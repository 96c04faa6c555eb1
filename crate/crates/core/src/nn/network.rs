use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm2d, Conv2d, Dropout, Layer, Linear, MaxPool2d, PRelu, ParamMut};
use super::loss::{cross_entropy, one_hot, softmax_ce_grad};
use super::tensor::{Real, Tensor};
use super::NnError;

/// Architecture description: convolution blocks (conv, batch norm, PReLU,
/// max-pool) followed by dense blocks (linear, PReLU, dropout) and a softmax
/// classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Per-sample input `[channels, height, width]`.
    pub input: [usize; 3],
    pub conv_channels: Vec<usize>,
    /// Pool window after each convolution; the stride equals the window.
    pub pools: Vec<usize>,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub dropout: f64,
}

impl NetworkSpec {
    /// The 150x150 RGB, 100-class object identification network.
    pub fn arc() -> Self {
        Self {
            input: [3, 150, 150],
            conv_channels: vec![8, 8],
            pools: vec![4, 2],
            hidden: vec![512, 256],
            classes: 100,
            dropout: 0.1,
        }
    }

    /// Same layer chain on a 3x20x20 input with narrow dense layers.
    pub fn downsized() -> Self {
        Self {
            input: [3, 20, 20],
            conv_channels: vec![8, 8],
            pools: vec![4, 2],
            hidden: vec![16, 12],
            classes: 5,
            dropout: 0.1,
        }
    }

    pub fn with_classes(mut self, classes: usize) -> Self {
        self.classes = classes;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.conv_channels.is_empty() || self.conv_channels.len() != self.pools.len() {
            return Err(NnError::Shape("each convolution needs exactly one pool".into()));
        }
        if self.classes == 0 || self.input.contains(&0) {
            return Err(NnError::Shape("input extents and class count must be positive".into()));
        }
        if self.conv_channels.contains(&0) || self.hidden.contains(&0) {
            return Err(NnError::Shape("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Shape(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Output of a training forward and backward pass.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub loss: f64,
    pub probs: Tensor<T>,
}

impl<T: Real> StepOutput<T> {
    /// Row-wise argmax of the probabilities.
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(&self.probs)
    }
}

pub fn argmax_rows<T: Real>(p: &Tensor<T>) -> Vec<usize> {
    (0..p.batch())
        .map(|i| {
            let row = p.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
    mode: Mode,
}

impl<T: Real> Network<T> {
    /// Layer chain with zero weights and identity normalization.
    pub fn untrained(spec: NetworkSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut ch = spec.input[0];
        for (i, (&out, &pool)) in spec.conv_channels.iter().zip(&spec.pools).enumerate() {
            let mut conv = Conv2d::new(ch, out);
            conv.skip_input_grad = i == 0;
            layers.push(Layer::Conv(conv));
            layers.push(Layer::BatchNorm(BatchNorm2d::new(out)));
            layers.push(Layer::PRelu(PRelu::new(out)));
            layers.push(Layer::MaxPool(MaxPool2d::new(pool, pool)));
            ch = out;
        }
        layers.push(Layer::Flatten(None));
        let mut net = Self {
            spec: spec.clone(),
            layers,
            mode: Mode::Infer,
        };
        let mut width = net.conv_output_len()?;
        for &h in &spec.hidden {
            net.layers.push(Layer::Linear(Linear::new(width, h)));
            net.layers.push(Layer::PRelu(PRelu::new(1)));
            net.layers.push(Layer::Dropout(Dropout::new(spec.dropout)?));
            width = h;
        }
        net.layers.push(Layer::Linear(Linear::new(width, spec.classes)));
        net.layers.push(Layer::Softmax(None));
        net.shapes()?;
        Ok(net)
    }

    /// He-initialized network.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::untrained(spec)?;
        for l in &mut net.layers {
            l.he_init(rng);
        }
        Ok(net)
    }

    pub fn seeded(spec: NetworkSpec, seed: u64) -> Result<Self, NnError> {
        Self::new(spec, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn conv_output_len(&self) -> Result<usize, NnError> {
        let mut s = self.spec.input.to_vec();
        for l in &self.layers {
            s = l.output_shape(&s)?;
        }
        Ok(s.iter().product())
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Per-sample output shape of every layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut s = self.spec.input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            s = l.output_shape(&s)?;
            out.push(s.clone());
        }
        Ok(out)
    }

    /// Trainable scalar count; running statistics excluded.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv(c) => vec![c.weight.len(), c.bias.len()],
                Layer::Linear(f) => vec![f.weight.len(), f.bias.len()],
                Layer::BatchNorm(b) => vec![b.gamma.len(), b.beta.len()],
                Layer::PRelu(p) => vec![p.alpha.len()],
                _ => Vec::new(),
            })
            .sum()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        let s = x.shape();
        if s.len() != 4 || s[1..] != self.spec.input || s[0] == 0 {
            return Err(NnError::Shape(format!(
                "network expects [N, {}, {}, {}], got {s:?}",
                self.spec.input[0], self.spec.input[1], self.spec.input[2]
            )));
        }
        check_finite(&self.layers, None, x)
    }

    /// Class probabilities `[N, classes]` using running statistics and no dropout.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let mut h = self.layers[0].infer(x)?;
        check_finite(&self.layers, Some(0), &h)?;
        for (i, l) in self.layers.iter().enumerate().skip(1) {
            h = l.infer(&h)?;
            check_finite(&self.layers, Some(i), &h)?;
        }
        Ok(h)
    }

    /// Every layer's inference output, in order.
    pub fn infer_trace(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>, NnError> {
        self.check_input(x)?;
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let y = l.infer(outs.last().unwrap_or(x))?;
            check_finite(&self.layers, Some(i), &y)?;
            outs.push(y);
        }
        Ok(outs)
    }

    /// Training-mode forward: batch statistics, dropout drawn from `rng`, and
    /// cached activations for [`Network::backward`].
    pub fn forward_train<R: Rng + ?Sized>(&mut self, x: Tensor<T>, rng: &mut R) -> Result<Tensor<T>, NnError> {
        self.check_input(&x)?;
        let mut h = x;
        for i in 0..self.layers.len() {
            h = self.layers[i].forward_train(h, rng)?;
            check_finite(&self.layers, Some(i), &h)?;
        }
        Ok(h)
    }

    /// Forward according to the current mode.
    pub fn forward<R: Rng + ?Sized>(&mut self, x: Tensor<T>, rng: &mut R) -> Result<Tensor<T>, NnError> {
        match self.mode {
            Mode::Train => self.forward_train(x, rng),
            Mode::Infer => self.infer(&x),
        }
    }

    /// Back-propagates a gradient with respect to the logits (the softmax
    /// input) and stores every parameter gradient.
    pub fn backward(&mut self, grad_logits: Tensor<T>) -> Result<(), NnError> {
        let last = self.layers.len() - 1;
        if let Layer::Softmax(cache) = &mut self.layers[last] {
            *cache = None;
        }
        let mut g = Some(grad_logits);
        for i in (0..last).rev() {
            let grad = g
                .take()
                .ok_or_else(|| NnError::Shape(format!("layer {i} received no gradient")))?;
            g = self.layers[i].backward(grad)?;
        }
        Ok(())
    }

    /// Mean cross-entropy of a labelled batch, with gradients stored.
    pub fn forward_backward<R: Rng + ?Sized>(
        &mut self,
        x: Tensor<T>,
        labels: &[usize],
        rng: &mut R,
    ) -> Result<StepOutput<T>, NnError> {
        if labels.len() != x.batch() {
            return Err(NnError::Shape(format!(
                "{} labels for batch of {}",
                labels.len(),
                x.batch()
            )));
        }
        let probs = self.forward_train(x, rng)?;
        let y = one_hot(labels, self.spec.classes)?;
        let loss = cross_entropy(&probs, &y)?;
        self.backward(softmax_ce_grad(&probs, &y)?)?;
        Ok(StepOutput { loss, probs })
    }

    /// Mean cross-entropy of a labelled batch in training mode, without a
    /// backward pass.
    pub fn train_loss<R: Rng + ?Sized>(&mut self, x: Tensor<T>, labels: &[usize], rng: &mut R) -> Result<f64, NnError> {
        let probs = self.forward_train(x, rng)?;
        cross_entropy(&probs, &one_hot(labels, self.spec.classes)?)
    }

    /// Every trainable tensor named `"{layer}.{kind}.{param}"`.
    pub fn params_mut(&mut self) -> Vec<(String, ParamMut<'_, T>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let kind = l.kind();
            for p in l.params_mut() {
                out.push((format!("{i}.{kind}.{}", p.name), p));
            }
        }
        out
    }

    /// Every persisted tensor in declaration order, with name and shape.
    pub fn state(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (name, shape, data) in l.state() {
                out.push((format!("{i}.{}.{name}", l.kind()), shape, data));
            }
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| l.state_mut()).collect()
    }
}

fn check_finite<T: Real>(layers: &[Layer<T>], index: Option<usize>, t: &Tensor<T>) -> Result<(), NnError> {
    if t.all_finite() {
        return Ok(());
    }
    Err(NnError::NonFinite {
        layer: index.map_or_else(|| "input".to_string(), |i| format!("{i} ({})", layers[i].kind())),
    })
}

/// The 100-class network with He initialization from `seed`.
pub fn build_arc_network(seed: u64) -> Network<f32> {
    Network::seeded(NetworkSpec::arc(), seed).expect("reference spec is valid")
}
