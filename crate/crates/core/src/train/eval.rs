//! Top-1 accuracy and confusion matrices.

use std::io::Write;

use crate::dataset::{images_to_tensor, LabeledImage};
use crate::nn::loss::{cross_entropy, one_hot};
use crate::nn::{argmax_rows, Network, Real};

use super::TrainError;

/// `counts[t][p]`: items of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|k| self.count(k, k)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Row-normalized percentages; `None` for classes with no items.
    pub fn row_percentages(&self) -> Vec<Option<Vec<f64>>> {
        (0..self.classes)
            .map(|t| {
                let row = self.row(t);
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row.iter().map(|&c| 100.0 * c as f64 / n as f64).collect())
            })
            .collect()
    }

    /// Classes confused with another class at least once.
    pub fn confused_rows(&self) -> Vec<usize> {
        (0..self.classes)
            .filter(|&t| self.row(t).iter().enumerate().any(|(p, &c)| p != t && c > 0))
            .collect()
    }

    /// Counts as CSV with a `true\predicted` header row.
    pub fn write_counts_csv<W: Write>(&self, w: W) -> Result<(), TrainError> {
        self.write_csv(w, |t| self.row(t).iter().map(|c| c.to_string()).collect())
    }

    /// Row percentages as CSV; empty rows are left blank.
    pub fn write_percentages_csv<W: Write>(&self, w: W) -> Result<(), TrainError> {
        let pct = self.row_percentages();
        self.write_csv(w, |t| match &pct[t] {
            Some(r) => r.iter().map(|v| format!("{v:.2}")).collect(),
            None => vec![String::new(); self.classes],
        })
    }

    fn write_csv<W: Write>(&self, w: W, row: impl Fn(usize) -> Vec<String>) -> Result<(), TrainError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend((0..self.classes).map(|k| k.to_string()));
        out.write_record(&header).map_err(csv_err)?;
        for t in 0..self.classes {
            let mut rec = vec![t.to_string()];
            rec.extend(row(t));
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> TrainError {
    TrainError::Config(format!("csv: {e}"))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub matrix: ConfusionMatrix,
    pub predictions: Vec<usize>,
}

/// Inference-mode loss, accuracy and confusion matrix over `items`.
pub fn evaluate<T: Real>(net: &Network<T>, items: &[LabeledImage], batch: usize) -> Result<Evaluation, TrainError> {
    if items.is_empty() {
        return Err(TrainError::Config("cannot evaluate an empty split".into()));
    }
    let k = net.spec().classes;
    let mut matrix = ConfusionMatrix::new(k);
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch.max(1)) {
        let labels: Vec<usize> = chunk.iter().map(|e| e.label).collect();
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TrainError::Config(format!(
                "label {bad} outside the {k} network classes"
            )));
        }
        let x = images_to_tensor::<T>(&chunk.iter().map(|e| &e.image).collect::<Vec<_>>());
        let probs = net.infer(&x)?;
        loss_sum += cross_entropy(&probs, &one_hot(&labels, k)?)? * chunk.len() as f64;
        for (&t, p) in labels.iter().zip(argmax_rows(&probs)) {
            matrix.add(t, p);
            predictions.push(p);
        }
    }
    Ok(Evaluation {
        loss: loss_sum / items.len() as f64,
        accuracy: matrix.accuracy(),
        matrix,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_class_toy() {
        let mut m = ConfusionMatrix::new(2);
        m.add(0, 0);
        m.add(0, 1);
        m.add(1, 1);
        m.add(1, 1);
        assert_eq!(m.accuracy(), 0.75);
        let pct = m.row_percentages();
        assert_eq!(pct[0].as_ref().unwrap(), &vec![50.0, 50.0]);
        assert_eq!(m.confused_rows(), vec![0]);
    }

    #[test]
    fn diagonal_and_empty_rows() {
        let mut m = ConfusionMatrix::new(3);
        for k in [0, 0, 2] {
            m.add(k, k);
        }
        assert_eq!(m.accuracy(), 1.0);
        assert!(m.row_percentages()[1].is_none());
        assert!(m.confused_rows().is_empty());
    }

    #[test]
    fn csv_exports() {
        let mut m = ConfusionMatrix::new(2);
        m.add(0, 1);
        m.add(1, 1);
        m.add(1, 1);
        let mut buf = Vec::new();
        m.write_counts_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "true\\predicted,0,1\n0,0,1\n1,0,2\n");
        let mut buf = Vec::new();
        m.write_percentages_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "true\\predicted,0,1\n0,0.00,100.00\n1,0.00,100.00\n"
        );
    }
}
