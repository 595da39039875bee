//! Softmax output layer over dense vectors, trained on mini-batch
//! cross-entropy with Adam (input vectors such as mean embeddings can be
//! tiny, and a fixed step would barely move the logits). Also serves as the
//! LSTM's head.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Adam, Blocks, Prediction};
use crate::container::Container;
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::seed;

/// `e^{z_k - max z} / Σ_j e^{z_j - max z}`.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaxConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        SoftmaxConfig {
            lr: 0.01,
            epochs: 100,
            batch: 64,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    /// Output classes in ascending order.
    pub classes: Vec<SentimentLabel>,
    pub dim: usize,
    /// Row-major `classes × dim`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Gradient of the cross-entropy of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub loss: f64,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// With respect to the input vector.
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SoftmaxReport {
    /// Mean cross-entropy over the training set after each epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HeadManifest {
    classes: Vec<SentimentLabel>,
    dim: usize,
}

impl SoftmaxHead {
    pub fn zeros(classes: Vec<SentimentLabel>, dim: usize) -> Self {
        let c = classes.len();
        SoftmaxHead {
            classes,
            dim,
            w: vec![0.0; c * dim],
            b: vec![0.0; c],
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn class_index(&self, label: SentimentLabel) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == label)
            .ok_or_else(|| Error::InvalidArgument(format!("label {label} is not an output class")))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self
            .w
            .chunks(self.dim.max(1))
            .zip(&self.b)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .take(self.classes.len())
            .collect())
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// `−ln p(target | x)`.
    pub fn loss(&self, x: &[f64], target: usize) -> Result<f64> {
        let z = self.logits(x)?;
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(lse - z[target])
    }

    pub fn gradient(&self, x: &[f64], target: usize) -> Result<HeadGrad> {
        let p = self.probabilities(x)?;
        let loss = -p[target].max(f64::MIN_POSITIVE).ln();
        let mut delta = p;
        delta[target] -= 1.0;
        let mut w = vec![0.0; self.w.len()];
        let mut dx = vec![0.0; self.dim];
        for (k, dk) in delta.iter().enumerate() {
            let row = &self.w[k * self.dim..(k + 1) * self.dim];
            for j in 0..self.dim {
                w[k * self.dim + j] = dk * x[j];
                dx[j] += dk * row[j];
            }
        }
        Ok(HeadGrad {
            loss,
            w,
            b: delta,
            x: dx,
        })
    }

    /// Most probable class; ties go to the larger label.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let p = self.probabilities(x)?;
        let mut best = 0;
        for k in 1..p.len() {
            if p[k] >= p[best] {
                best = k;
            }
        }
        Ok(Prediction {
            label: self.classes[best],
            score: p[best],
        })
    }

    pub(crate) fn parts_prefixed(&self, prefix: &str) -> (serde_json::Value, Blocks) {
        let manifest = serde_json::to_value(HeadManifest {
            classes: self.classes.clone(),
            dim: self.dim,
        })
        .expect("manifest serializes");
        let blocks = vec![(format!("{prefix}w"), self.w.clone()), (format!("{prefix}b"), self.b.clone())];
        (manifest, blocks)
    }

    pub(crate) fn parts(&self) -> (serde_json::Value, Blocks) {
        self.parts_prefixed("")
    }

    pub(crate) fn from_parts(body: &serde_json::Value, c: &Container, prefix: &str) -> Result<Self> {
        let m: HeadManifest = serde_json::from_value(body.clone())?;
        let k = m.classes.len();
        Ok(SoftmaxHead {
            w: c.block_f64(&format!("{prefix}w"), k * m.dim)?,
            b: c.block_f64(&format!("{prefix}b"), k)?,
            classes: m.classes,
            dim: m.dim,
        })
    }
}

/// Fit a head on dense vectors; the output classes are the distinct
/// training labels.
pub fn train_softmax_head(
    xs: &[Vec<f64>],
    labels: &[SentimentLabel],
    config: &SoftmaxConfig,
) -> Result<(SoftmaxHead, SoftmaxReport)> {
    if xs.is_empty() {
        return Err(Error::Empty("no training vectors"));
    }
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: labels.len(),
        });
    }
    let dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let mut classes = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidArgument("training set has a single class".into()));
    }
    if config.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut head = SoftmaxHead::zeros(classes, dim);
    let targets: Vec<usize> = labels.iter().map(|&l| head.class_index(l)).collect::<Result<_>>()?;
    let mut rng = seed::rng(config.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut report = SoftmaxReport::default();
    let mut adam = Adam::new(head.w.len() + head.b.len(), config.lr, 0.9, 0.999);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch) {
            let mut grad = vec![0.0; head.w.len() + head.b.len()];
            for &i in batch {
                let g = head.gradient(&xs[i], targets[i])?;
                grad.iter_mut().zip(g.w.iter().chain(&g.b)).for_each(|(a, v)| *a += v);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let mut params: Vec<f64> = head.w.iter().chain(&head.b).copied().collect();
            adam.step(&mut params, &grad);
            let (w, b) = params.split_at(head.w.len());
            head.w.copy_from_slice(w);
            head.b.copy_from_slice(b);
        }
        let mut total = 0.0;
        for (x, &t) in xs.iter().zip(&targets) {
            total += head.loss(x, t)?;
        }
        let mean = total / xs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged("non-finite cross-entropy".into()));
        }
        report.epoch_losses.push(mean);
    }
    Ok((head, report))
}
