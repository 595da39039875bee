//! Single-layer LSTM over embedded token sequences with a softmax head on
//! the last hidden state. Trained by backpropagation through time and Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::softmax::SoftmaxHead;
use super::{binary_targets, sigmoid, Adam, Blocks, Prediction};
use crate::container::Container;
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden: usize,
    /// Sequences are cut to this many tokens before they reach the model.
    pub max_len: usize,
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Global gradient-norm clip.
    pub clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden: 128,
            max_len: 30,
            batch: 64,
            lr: 1e-3,
            epochs: 5,
            clip: 5.0,
            beta1: 0.9,
            beta2: 0.999,
            seed: 42,
        }
    }
}

/// Gate blocks are stacked `[i, f, o, c]`: rows `k*n..(k+1)*n` of `w`, `v`
/// and `b` belong to gate `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub n: usize,
    pub m: usize,
    /// Row-major `4n × m`.
    pub w: Vec<f64>,
    /// Row-major `4n × n`.
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub head: SoftmaxHead,
    pub max_len: usize,
}

/// Every intermediate of a forward pass; index `t` is step `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub i: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
    /// Cell candidate.
    pub g: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

impl LstmTrace {
    pub fn last_hidden(&self) -> &[f64] {
        self.h.last().expect("trace has at least one step")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub loss: f64,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl LstmGrads {
    fn zeros_like(model: &LstmModel) -> Self {
        LstmGrads {
            loss: 0.0,
            w: vec![0.0; model.w.len()],
            v: vec![0.0; model.v.len()],
            b: vec![0.0; model.b.len()],
            head_w: vec![0.0; model.head.w.len()],
            head_b: vec![0.0; model.head.b.len()],
        }
    }

    fn add(&mut self, other: &LstmGrads) {
        self.loss += other.loss;
        for (a, b) in self.parts_mut().into_iter().zip(other.parts()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn parts(&self) -> [&[f64]; 5] {
        [&self.w, &self.v, &self.b, &self.head_w, &self.head_b]
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [&mut self.w, &mut self.v, &mut self.b, &mut self.head_w, &mut self.head_b]
    }

    /// Same order as [`LstmModel::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.parts().concat()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LstmReport {
    /// Mean cross-entropy of the untrained model.
    pub initial_loss: f64,
    /// Mean cross-entropy over each epoch's mini-batches, measured before
    /// each batch's update.
    pub epoch_losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LstmManifest {
    n: usize,
    m: usize,
    max_len: usize,
    head: serde_json::Value,
}

fn matvec_add(out: &mut [f64], mat: &[f64], cols: usize, x: &[f64]) {
    for (o, row) in out.iter_mut().zip(mat.chunks(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl LstmModel {
    /// Weights uniform in `±1/√n`, zero biases, zero head.
    pub fn init(m: usize, n: usize, max_len: usize, seed: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("LSTM sizes must be positive".into()));
        }
        let mut rng = seed::rng(seed);
        let r = 1.0 / (n as f64).sqrt();
        let w = (0..4 * n * m).map(|_| rng.random_range(-r..r)).collect();
        let v = (0..4 * n * n).map(|_| rng.random_range(-r..r)).collect();
        Ok(LstmModel {
            n,
            m,
            w,
            v,
            b: vec![0.0; 4 * n],
            head: SoftmaxHead::zeros(vec![SentimentLabel::Negative, SentimentLabel::Positive], n),
            max_len,
        })
    }

    pub fn forward(&self, seq: &[Vec<f64>]) -> Result<LstmTrace> {
        if seq.is_empty() {
            return Err(Error::Empty("LSTM input sequence"));
        }
        let n = self.n;
        let mut trace = LstmTrace {
            i: Vec::with_capacity(seq.len()),
            f: Vec::with_capacity(seq.len()),
            o: Vec::with_capacity(seq.len()),
            g: Vec::with_capacity(seq.len()),
            c: Vec::with_capacity(seq.len()),
            h: Vec::with_capacity(seq.len()),
        };
        let mut h_prev = vec![0.0; n];
        let mut c_prev = vec![0.0; n];
        for x in seq {
            if x.len() != self.m {
                return Err(Error::DimensionMismatch {
                    expected: self.m,
                    got: x.len(),
                });
            }
            let mut a = self.b.clone();
            matvec_add(&mut a, &self.w, self.m, x);
            matvec_add(&mut a, &self.v, n, &h_prev);
            let i: Vec<f64> = a[..n].iter().map(|&z| sigmoid(z)).collect();
            let f: Vec<f64> = a[n..2 * n].iter().map(|&z| sigmoid(z)).collect();
            let o: Vec<f64> = a[2 * n..3 * n].iter().map(|&z| sigmoid(z)).collect();
            let g: Vec<f64> = a[3 * n..].iter().map(|z| z.tanh()).collect();
            let c: Vec<f64> = (0..n).map(|k| i[k] * g[k] + f[k] * c_prev[k]).collect();
            let h: Vec<f64> = (0..n).map(|k| o[k] * c[k].tanh()).collect();
            h_prev.clone_from(&h);
            c_prev.clone_from(&c);
            trace.i.push(i);
            trace.f.push(f);
            trace.o.push(o);
            trace.g.push(g);
            trace.c.push(c);
            trace.h.push(h);
        }
        Ok(trace)
    }

    pub fn predict(&self, seq: &[Vec<f64>]) -> Result<Prediction> {
        self.head.predict(self.forward(seq)?.last_hidden())
    }

    /// Cross-entropy of one labelled sequence.
    pub fn loss(&self, seq: &[Vec<f64>], target: usize) -> Result<f64> {
        self.head.loss(self.forward(seq)?.last_hidden(), target)
    }

    /// Loss and full gradient of one labelled sequence by backpropagation
    /// through time.
    pub fn backward(&self, seq: &[Vec<f64>], target: usize) -> Result<LstmGrads> {
        let n = self.n;
        let m = self.m;
        let trace = self.forward(seq)?;
        let head = self.head.gradient(trace.last_hidden(), target)?;
        let mut grads = LstmGrads::zeros_like(self);
        grads.loss = head.loss;
        grads.head_w = head.w;
        grads.head_b = head.b;
        let zeros = vec![0.0; n];
        let mut dh = head.x;
        let mut dc_next = vec![0.0; n];
        let mut da = vec![0.0; 4 * n];
        for t in (0..seq.len()).rev() {
            let (i, f, o, g, c) = (&trace.i[t], &trace.f[t], &trace.o[t], &trace.g[t], &trace.c[t]);
            let c_prev = if t > 0 { &trace.c[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &trace.h[t - 1] } else { &zeros };
            for k in 0..n {
                let tc = c[k].tanh();
                let dc = dh[k] * o[k] * (1.0 - tc * tc) + dc_next[k];
                let (di, df, d_o, dg) = (dc * g[k], dc * c_prev[k], dh[k] * tc, dc * i[k]);
                da[k] = di * i[k] * (1.0 - i[k]);
                da[n + k] = df * f[k] * (1.0 - f[k]);
                da[2 * n + k] = d_o * o[k] * (1.0 - o[k]);
                da[3 * n + k] = dg * (1.0 - g[k] * g[k]);
                dc_next[k] = dc * f[k];
            }
            let x = &seq[t];
            for (r, &d) in da.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads.b[r] += d;
                let w_row = &mut grads.w[r * m..(r + 1) * m];
                w_row.iter_mut().zip(x).for_each(|(gw, xv)| *gw += d * xv);
                let v_row = &mut grads.v[r * n..(r + 1) * n];
                v_row.iter_mut().zip(h_prev).for_each(|(gv, hv)| *gv += d * hv);
            }
            // dh_{t-1} = Vᵀ da
            let mut dh_prev = vec![0.0; n];
            for (r, &d) in da.iter().enumerate() {
                let v_row = &self.v[r * n..(r + 1) * n];
                dh_prev.iter_mut().zip(v_row).for_each(|(a, vv)| *a += d * vv);
            }
            dh = dh_prev;
        }
        Ok(grads)
    }

    /// All trainable parameters: `w, v, b, head.w, head.b`.
    pub fn params(&self) -> Vec<f64> {
        [&self.w[..], &self.v, &self.b, &self.head.w, &self.head.b].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        let total = self.params().len();
        if p.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: p.len(),
            });
        }
        let mut rest = p;
        for dst in [&mut self.w, &mut self.v, &mut self.b, &mut self.head.w, &mut self.head.b] {
            let (a, b) = rest.split_at(dst.len());
            dst.copy_from_slice(a);
            rest = b;
        }
        Ok(())
    }

    pub(crate) fn parts(&self) -> (serde_json::Value, Blocks) {
        let (head, head_blocks) = self.head.parts_prefixed("head_");
        let manifest = serde_json::to_value(LstmManifest {
            n: self.n,
            m: self.m,
            max_len: self.max_len,
            head,
        })
        .expect("manifest serializes");
        let mut blocks: Blocks = vec![
            ("w".into(), self.w.clone()),
            ("v".into(), self.v.clone()),
            ("b".into(), self.b.clone()),
        ];
        blocks.extend(head_blocks);
        (manifest, blocks)
    }

    pub(crate) fn from_parts(body: &serde_json::Value, c: &Container) -> Result<Self> {
        let mf: LstmManifest = serde_json::from_value(body.clone())?;
        let (n, m) = (mf.n, mf.m);
        Ok(LstmModel {
            n,
            m,
            w: c.block_f64("w", 4 * n * m)?,
            v: c.block_f64("v", 4 * n * n)?,
            b: c.block_f64("b", 4 * n)?,
            head: SoftmaxHead::from_parts(&mf.head, c, "head_")?,
            max_len: mf.max_len,
        })
    }
}

/// Train on embedded sequences (each already cut to `max_len`). Per-example
/// gradients run in parallel and are summed in input order, so the result
/// does not depend on the thread count.
pub fn train_lstm(
    seqs: &[Vec<Vec<f64>>],
    labels: &[SentimentLabel],
    config: &LstmConfig,
) -> Result<(LstmModel, LstmReport)> {
    if seqs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: seqs.len(),
            got: labels.len(),
        });
    }
    let y = binary_targets(labels)?;
    let m = seqs
        .iter()
        .find_map(|s| s.first().map(Vec::len))
        .ok_or(Error::Empty("every training sequence is empty"))?;
    if config.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut model = LstmModel::init(m, config.hidden, config.max_len, config.seed)?;
    let targets: Vec<usize> = y.iter().map(|&p| p as usize).collect();
    let clip = |s: &[Vec<f64>]| -> Vec<Vec<f64>> { s[..s.len().min(config.max_len)].to_vec() };
    let seqs: Vec<Vec<Vec<f64>>> = seqs.iter().map(|s| clip(s)).collect();

    let losses: Vec<f64> = seqs
        .par_iter()
        .zip(&targets)
        .map(|(s, &t)| model.loss(s, t))
        .collect::<Result<_>>()?;
    let mut report = LstmReport {
        initial_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        epoch_losses: Vec::new(),
    };

    let n_params = model.params().len();
    let mut adam = Adam::new(n_params, config.lr, config.beta1, config.beta2);
    let mut rng = seed::rng(seed::derive(config.seed, "lstm-shuffle"));
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch) {
            let per_example: Vec<LstmGrads> = batch
                .par_iter()
                .map(|&k| model.backward(&seqs[k], targets[k]))
                .collect::<Result<_>>()?;
            let mut total = LstmGrads::zeros_like(&model);
            for g in &per_example {
                total.add(g);
            }
            if !total.loss.is_finite() {
                return Err(Error::Diverged("non-finite LSTM loss".into()));
            }
            epoch_loss += total.loss;
            let scale = 1.0 / batch.len() as f64;
            let mut grad: Vec<f64> = total.flat().into_iter().map(|g| g * scale).collect();
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.clip {
                grad.iter_mut().for_each(|g| *g *= config.clip / norm);
            }
            let mut params = model.params();
            adam.step(&mut params, &grad);
            model.set_params(&params)?;
        }
        report.epoch_losses.push(epoch_loss / seqs.len() as f64);
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Diverged("non-finite LSTM parameters".into()));
    }
    Ok((model, report))
}
