//! Categorical cross-entropy over softmax outputs.

use super::tensor::{Real, Tensor};
use super::NnError;

pub const PROB_FLOOR: f64 = 1e-12;

pub fn one_hot<T: Real>(labels: &[usize], classes: usize) -> Result<Tensor<T>, NnError> {
    let mut data = vec![T::zero(); labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(NnError::InvalidLabel(format!("label {l} with {classes} classes")));
        }
        data[i * classes + l] = T::one();
    }
    Tensor::new(vec![labels.len(), classes], data)
}

/// Class index of every one-hot row.
pub fn labels_of<T: Real>(y: &Tensor<T>) -> Result<Vec<usize>, NnError> {
    let (n, k) = rows(y)?;
    (0..n)
        .map(|i| {
            let row = &y.data()[i * k..(i + 1) * k];
            let ones: Vec<usize> = (0..k).filter(|&j| row[j] == T::one()).collect();
            let zeros = row.iter().filter(|&&v| v == T::zero()).count();
            if ones.len() == 1 && zeros == k - 1 {
                Ok(ones[0])
            } else {
                Err(NnError::InvalidLabel(format!("row {i} is not one-hot")))
            }
        })
        .collect()
}

fn rows<T: Real>(y: &Tensor<T>) -> Result<(usize, usize), NnError> {
    match *y.shape() {
        [k] => Ok((1, k)),
        [n, k] => Ok((n, k)),
        ref s => Err(NnError::Shape(format!("expected [K] or [N, K], got {s:?}"))),
    }
}

/// Mean over rows of `-sum_j y_j ln(max(p_j, 1e-12))`.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, y: &Tensor<T>) -> Result<f64, NnError> {
    if probs.shape() != y.shape() {
        return Err(NnError::Shape(format!(
            "probabilities {:?} vs targets {:?}",
            probs.shape(),
            y.shape()
        )));
    }
    let labels = labels_of(y)?;
    let (n, k) = rows(probs)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs.data()[i * k + l].as_f64().max(PROB_FLOOR).ln())
        .sum();
    Ok(total / n as f64)
}

/// Gradient of the batch-mean loss with respect to the logits: `(p - y) / N`.
pub fn softmax_ce_grad<T: Real>(probs: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if probs.shape() != y.shape() {
        return Err(NnError::Shape("probabilities and targets differ in shape".into()));
    }
    let (n, _) = rows(probs)?;
    let inv = T::of(1.0 / n as f64);
    let mut g = probs.clone();
    for (v, &t) in g.data_mut().iter_mut().zip(y.data()) {
        *v = (*v - t) * inv;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::super::layers::softmax;
    use super::*;

    #[test]
    fn confident_correct_is_zero() {
        let p = Tensor::<f64>::new(vec![1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        let y = one_hot::<f64>(&[1], 3).unwrap();
        assert_eq!(cross_entropy(&p, &y).unwrap(), 0.0);
    }

    #[test]
    fn uniform_is_ln_k() {
        let p = Tensor::<f64>::new(vec![100], vec![0.01; 100]).unwrap();
        let mut y = vec![0.0; 100];
        y[37] = 1.0;
        let y = Tensor::new(vec![100], y).unwrap();
        let l = cross_entropy(&p, &y).unwrap();
        assert!((l - 100f64.ln()).abs() < 1e-12);
        assert!((l - 4.60517).abs() < 1e-5);
    }

    #[test]
    fn floor_keeps_loss_finite() {
        let p = Tensor::<f64>::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let y = one_hot::<f64>(&[1], 2).unwrap();
        assert!((cross_entropy(&p, &y).unwrap() - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_one_hot() {
        let p = Tensor::<f64>::new(vec![1, 2], vec![0.5, 0.5]).unwrap();
        for bad in [vec![0.5, 0.5], vec![1.0, 1.0], vec![0.0, 0.0]] {
            let y = Tensor::new(vec![1, 2], bad).unwrap();
            assert!(matches!(cross_entropy(&p, &y), Err(NnError::InvalidLabel(_))));
        }
        assert!(one_hot::<f64>(&[2], 2).is_err());
    }

    #[test]
    fn combined_gradient_matches_finite_differences() {
        let z = [0.3f64, -1.2, 2.0, 0.7];
        let y = one_hot::<f64>(&[2], 4).unwrap();
        let loss = |z: &[f64]| {
            let p = Tensor::new(vec![1, 4], softmax(z)).unwrap();
            cross_entropy(&p, &y).unwrap()
        };
        let p = Tensor::new(vec![1, 4], softmax(&z)).unwrap();
        let g = softmax_ce_grad(&p, &y).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let (mut a, mut b) = (z, z);
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-8, "{i}: {fd} vs {}", g.data()[i]);
        }
    }
}
