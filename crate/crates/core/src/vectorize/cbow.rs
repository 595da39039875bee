//! Continuous bag-of-words embeddings trained with negative sampling.
//!
//! For a target word `o` with context words `c_1..c_k`, the context vector is
//! `h = mean(V_in[c_i])` and the loss is
//! `-ln σ(U[o]·h) - Σ_neg ln σ(-U[n]·h)`, negatives drawn from the unigram
//! distribution raised to 0.75. This replaces the full softmax over `U·h`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::preprocess::TokenizedDoc;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbowConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `lr * 1e-4`.
    pub lr: f64,
    pub min_count: u32,
    pub seed: u64,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            min_count: 1,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbowModel {
    pub dim: usize,
    pub window: usize,
    pub seed: u64,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    /// `|V| x dim`, row-major.
    input: Vec<f64>,
    /// `|V| x dim`, row-major.
    output: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CbowReport {
    /// Mean per-target loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CbowManifest {
    kind: String,
    dim: usize,
    window: usize,
    seed: u64,
    vocab: Vec<String>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn log_sigmoid(x: f64) -> f64 {
    // ln σ(x) without overflow for large |x|
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Gradients of one CBOW example, in sparse form.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGradient {
    pub loss: f64,
    /// d loss / d V_in[c] for each distinct context word.
    pub input: Vec<(usize, Vec<f64>)>,
    /// d loss / d U[w] for the target and each negative.
    pub output: Vec<(usize, Vec<f64>)>,
}

impl CbowModel {
    /// Model with given matrices; used by training and for tests.
    pub fn from_parts(
        vocab: Vec<String>,
        dim: usize,
        window: usize,
        seed: u64,
        input: Vec<f64>,
        output: Vec<f64>,
    ) -> Result<Self> {
        let expected = vocab.len() * dim;
        for got in [input.len(), output.len()] {
            if got != expected {
                return Err(Error::DimensionMismatch { expected, got });
            }
        }
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(CbowModel {
            dim,
            window,
            seed,
            vocab,
            index,
            input,
            output,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| i as usize)
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        &self.output[i * self.dim..(i + 1) * self.dim]
    }

    pub fn input_matrix(&self) -> &[f64] {
        &self.input
    }

    pub fn output_matrix(&self) -> &[f64] {
        &self.output
    }

    pub fn input_matrix_mut(&mut self) -> &mut [f64] {
        &mut self.input
    }

    pub fn output_matrix_mut(&mut self) -> &mut [f64] {
        &mut self.output
    }

    /// Input (word) vector of `term`.
    pub fn vector(&self, term: &str) -> Option<&[f64]> {
        self.get(term).map(|i| self.input_row(i))
    }

    fn context_mean(&self, context: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        for &c in context {
            for (a, b) in h.iter_mut().zip(self.input_row(c)) {
                *a += b;
            }
        }
        let k = context.len().max(1) as f64;
        h.iter_mut().for_each(|a| *a /= k);
        h
    }

    /// Negative-sampling loss of one example. Negatives equal to the target
    /// are skipped.
    pub fn example_loss(&self, context: &[usize], target: usize, negatives: &[usize]) -> f64 {
        let h = self.context_mean(context);
        let dot = |w: usize| dot(self.output_row(w), &h);
        let mut loss = -log_sigmoid(dot(target));
        for &n in negatives.iter().filter(|&&n| n != target) {
            loss -= log_sigmoid(-dot(n));
        }
        loss
    }

    /// Loss and its gradient for one example.
    pub fn example_gradient(
        &self,
        context: &[usize],
        target: usize,
        negatives: &[usize],
    ) -> ExampleGradient {
        let h = self.context_mean(context);
        let mut grad_h = vec![0.0; self.dim];
        let mut output: Vec<(usize, Vec<f64>)> = Vec::with_capacity(negatives.len() + 1);
        let mut loss = 0.0;
        let samples = std::iter::once((target, 1.0))
            .chain(negatives.iter().filter(|&&n| n != target).map(|&n| (n, 0.0)));
        for (w, label) in samples {
            let u = self.output_row(w);
            let score = dot(u, &h);
            loss -= if label == 1.0 {
                log_sigmoid(score)
            } else {
                log_sigmoid(-score)
            };
            let g = sigmoid(score) - label;
            for (gh, uk) in grad_h.iter_mut().zip(u) {
                *gh += g * uk;
            }
            let gu: Vec<f64> = h.iter().map(|hk| g * hk).collect();
            match output.iter_mut().find(|(ow, _)| *ow == w) {
                Some((_, acc)) => acc.iter_mut().zip(&gu).for_each(|(a, b)| *a += b),
                None => output.push((w, gu)),
            }
        }
        let k = context.len().max(1) as f64;
        let mut input: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for &c in context {
            let acc = input.entry(c).or_insert_with(|| vec![0.0; self.dim]);
            for (a, g) in acc.iter_mut().zip(&grad_h) {
                *a += g / k;
            }
        }
        ExampleGradient {
            loss,
            input: input.into_iter().collect(),
            output,
        }
    }

    fn apply(&mut self, grad: &ExampleGradient, lr: f64) {
        let dim = self.dim;
        for (w, g) in &grad.output {
            let row = &mut self.output[w * dim..(w + 1) * dim];
            row.iter_mut().zip(g).for_each(|(r, g)| *r -= lr * g);
        }
        for (c, g) in &grad.input {
            let row = &mut self.input[c * dim..(c + 1) * dim];
            row.iter_mut().zip(g).for_each(|(r, g)| *r -= lr * g);
        }
    }

    /// Per-token input vectors (zero for unknown tokens), truncated to
    /// `max_len` without padding. Never empty: an empty document yields one
    /// zero vector.
    pub fn embed_sequence(&self, tokens: &[String], max_len: usize) -> Vec<Vec<f64>> {
        let mut seq: Vec<Vec<f64>> = tokens
            .iter()
            .take(max_len.max(1))
            .map(|t| {
                self.vector(t)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; self.dim])
            })
            .collect();
        if seq.is_empty() {
            seq.push(vec![0.0; self.dim]);
        }
        seq
    }

    /// Per-token vectors truncated or zero-padded to exactly `max_len`.
    pub fn embed_doc(&self, doc: &TokenizedDoc, max_len: usize) -> Vec<Vec<f64>> {
        let mut seq: Vec<Vec<f64>> = doc
            .tokens
            .iter()
            .take(max_len)
            .map(|t| {
                self.vector(t)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; self.dim])
            })
            .collect();
        seq.resize(max_len, vec![0.0; self.dim]);
        seq
    }

    /// Mean of the per-token vectors of `tokens`; zero for an empty document.
    pub fn mean_vector(&self, tokens: &[String]) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for t in tokens {
            if let Some(v) = self.vector(t) {
                mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
            }
        }
        if !tokens.is_empty() {
            let n = tokens.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
        }
        mean
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(&CbowManifest {
            kind: "cbow".into(),
            dim: self.dim,
            window: self.window,
            seed: self.seed,
            vocab: self.vocab.clone(),
        })?;
        c.push("input", &self.input);
        c.push("output", &self.output);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let m: CbowManifest = c.manifest_as()?;
        if m.kind != "cbow" {
            return Err(Error::Container(format!("expected cbow model, found {}", m.kind)));
        }
        let len = m.vocab.len() * m.dim;
        let input = c.block_f64("input", len)?;
        let output = c.block_f64("output", len)?;
        CbowModel::from_parts(m.vocab, m.dim, m.window, m.seed, input, output)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CbowModel::from_container(&Container::load(path)?)
    }

    /// Largest Euclidean norm over the rows of the input matrix.
    pub fn max_input_norm(&self) -> f64 {
        (0..self.vocab.len())
            .map(|i| self.input_row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Train CBOW embeddings. Single-threaded, so a fixed seed reproduces the
/// model bit for bit.
pub fn train_cbow(docs: &[TokenizedDoc], config: &CbowConfig) -> Result<(CbowModel, CbowReport)> {
    if config.dim == 0 {
        return Err(Error::InvalidArgument("embedding dim must be positive".into()));
    }
    if config.window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for d in docs {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    counts.retain(|_, &mut c| c >= config.min_count.max(1) as u64);
    if counts.is_empty() {
        return Err(Error::Empty("corpus has no tokens"));
    }
    let vocab: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let sequences: Vec<Vec<usize>> = docs
        .iter()
        .map(|d| d.tokens.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .filter(|s: &Vec<usize>| s.len() >= 2)
        .collect();
    if sequences.is_empty() {
        return Err(Error::InvalidArgument(
            "no document has two in-vocabulary tokens; nothing to predict".into(),
        ));
    }
    let noise = WeightedIndex::new(counts.values().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut rng = seed::rng(config.seed);
    let dim = config.dim;
    let v = vocab.len();
    let input: Vec<f64> = (0..v * dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let output = vec![0.0; v * dim];
    let mut model = CbowModel::from_parts(vocab, dim, config.window, config.seed, input, output)?;

    let targets_per_epoch: usize = sequences.iter().map(Vec::len).sum();
    let total = (targets_per_epoch * config.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut report = CbowReport::default();
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut negatives = Vec::with_capacity(config.negatives);
    let mut context = Vec::with_capacity(2 * config.window);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_n = 0usize;
        for &s in &order {
            let seq = &sequences[s];
            for pos in 0..seq.len() {
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(seq.len());
                context.clear();
                context.extend((lo..hi).filter(|&j| j != pos).map(|j| seq[j]));
                negatives.clear();
                negatives.extend((0..config.negatives).map(|_| noise.sample(&mut rng)));
                let lr = config.lr * (1.0 - processed as f64 / total).max(1e-4);
                let grad = model.example_gradient(&context, seq[pos], &negatives);
                if !grad.loss.is_finite() {
                    return Err(Error::Diverged("non-finite CBOW loss".into()));
                }
                epoch_loss += grad.loss;
                epoch_n += 1;
                model.apply(&grad, lr);
                processed += 1;
            }
        }
        report.epoch_losses.push(epoch_loss / epoch_n.max(1) as f64);
    }
    Ok((model, report))
}
