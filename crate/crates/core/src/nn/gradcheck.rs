//! Central finite-difference check of every parameter gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{Network, NetworkSpec};
use super::tensor::Tensor;
use super::NnError;

/// Relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

/// Compares analytic gradients of the batch loss with central differences
/// of step `h`. Every loss evaluation replays the same dropout mask.
pub fn check_gradients(spec: NetworkSpec, seed: u64, batch: usize, h: f64) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net: Network<f64> = Network::new(spec.clone(), &mut rng)?;
    // nudge normalization and slopes off their initial values; shifts push
    // whole pooling windows below zero so the PReLU slopes receive gradient
    for (name, p) in net.params_mut() {
        if !p.decay {
            let shift = if name.ends_with(".beta") { -1.5 } else { 0.0 };
            for v in p.value.iter_mut() {
                *v += shift + rng.random_range(-0.2..0.2);
            }
        }
    }
    let [c, hh, w] = spec.input;
    let x = Tensor::from_fn(vec![batch, c, hh, w], |_| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..spec.classes)).collect();
    let mask_seed: u64 = rng.random();

    net.forward_backward(x.clone(), &labels, &mut ChaCha8Rng::seed_from_u64(mask_seed))?;
    let analytic: Vec<(String, Vec<f64>)> = net
        .params_mut()
        .into_iter()
        .map(|(name, p)| (name, p.grad.to_vec()))
        .collect();

    let loss_at =
        |net: &mut Network<f64>| net.train_loss(x.clone(), &labels, &mut ChaCha8Rng::seed_from_u64(mask_seed));
    let mut tensors = Vec::new();
    for (pi, (name, grad)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (j, &a) in grad.iter().enumerate() {
            let orig = net.params_mut()[pi].1.value[j];
            net.params_mut()[pi].1.value[j] = orig + h;
            let up = loss_at(&mut net)?;
            net.params_mut()[pi].1.value[j] = orig - h;
            let down = loss_at(&mut net)?;
            net.params_mut()[pi].1.value[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(a, numeric, REL_FLOOR));
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            len: grad.len(),
            max_rel_error: worst,
            max_abs_analytic: grad.iter().fold(0.0, |m, v| m.max(v.abs())),
        });
    }
    Ok(GradCheckReport { tensors })
}
