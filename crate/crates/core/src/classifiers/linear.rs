//! Logistic regression, ridge (penalized log-likelihood) and a linear SVM.
//!
//! Weights are stored as `[β_0, β_1, ..., β_m]` against `x = [1] ⊕ a`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{binary_targets, check_row, label_at, sigmoid, softplus, Blocks, Prediction};
use crate::container::Container;
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::seed;
use crate::vectorize::{DocTermMatrix, SparseRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Lr,
    Ridge,
    Svm,
}

/// How the per-feature step of full-batch gradient ascent is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepScaling {
    /// Step `lr / max_i |x_ij|^2`, i.e. plain ascent on features divided by
    /// their column maximum.
    ColumnMax,
    /// Step `lr / (mean_i x_ij^2 / 4)`, the inverse of the diagonal of the
    /// log-likelihood's worst-case curvature.
    Curvature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Stop once every gradient component is below this.
    pub tol: f64,
    pub scaling: StepScaling,
    /// Ridge penalty weight.
    pub lambda: f64,
    /// SVM error-term weight.
    pub c: f64,
    pub svm_epochs: usize,
    /// SVM initial step; decays as `eta0 / (1 + eta0 * reg * t)`.
    pub svm_eta0: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        LinearConfig {
            lr: 1.0,
            epochs: 100,
            tol: 1e-4,
            scaling: StepScaling::ColumnMax,
            lambda: 1.0,
            c: 0.1,
            svm_epochs: 20,
            svm_eta0: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub kind: LinearKind,
    /// Intercept first.
    pub weights: Vec<f64>,
    pub config: LinearConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinearReport {
    pub epochs_run: usize,
    /// Objective after each epoch: log-likelihood (LR), penalized
    /// log-likelihood (ridge), or the primal SVM cost.
    pub objective: Vec<f64>,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct LinearManifest {
    linear_kind: LinearKind,
    n_features: usize,
    config: LinearConfig,
}

fn score(beta: &[f64], row: &SparseRow) -> f64 {
    beta[0] + row.iter().map(|(j, v)| beta[j + 1] * v).sum::<f64>()
}

/// `l(β) = Σ_i y_i βᵀx_i − ln(1 + e^{βᵀx_i})`, with `y ∈ {0, 1}`.
pub fn log_likelihood(beta: &[f64], rows: &[SparseRow], y: &[bool]) -> f64 {
    rows.iter()
        .zip(y)
        .map(|(row, &yi)| {
            let z = score(beta, row);
            (yi as u8 as f64) * z - softplus(z)
        })
        .sum()
}

/// `∂l/∂β = Σ_i (y_i − σ(βᵀx_i)) x_i`.
pub fn log_likelihood_grad(beta: &[f64], rows: &[SparseRow], y: &[bool]) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for (row, &yi) in rows.iter().zip(y) {
        let r = yi as u8 as f64 - sigmoid(score(beta, row));
        g[0] += r;
        for (j, v) in row.iter() {
            g[j + 1] += r * v;
        }
    }
    g
}

/// `l(β) − λ Σ_{j≥0} β_j²`; the intercept is penalized too.
pub fn ridge_objective(beta: &[f64], rows: &[SparseRow], y: &[bool], lambda: f64) -> f64 {
    log_likelihood(beta, rows, y) - lambda * beta.iter().map(|b| b * b).sum::<f64>()
}

pub fn ridge_objective_grad(beta: &[f64], rows: &[SparseRow], y: &[bool], lambda: f64) -> Vec<f64> {
    let mut g = log_likelihood_grad(beta, rows, y);
    for (gj, bj) in g.iter_mut().zip(beta) {
        *gj -= 2.0 * lambda * bj;
    }
    g
}

fn step_sizes(rows: &[SparseRow], m: usize, config: &LinearConfig) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut stat = vec![0.0; m + 1];
    match config.scaling {
        StepScaling::ColumnMax => {
            stat[0] = 1.0;
            for row in rows {
                for (j, v) in row.iter() {
                    stat[j + 1] = f64::max(stat[j + 1], v.abs());
                }
            }
            stat.iter().map(|&mx| if mx > 0.0 { config.lr / (mx * mx) } else { 0.0 }).collect()
        }
        StepScaling::Curvature => {
            stat[0] = n;
            for row in rows {
                for (j, v) in row.iter() {
                    stat[j + 1] += v * v;
                }
            }
            stat.iter()
                .map(|&s| if s > 0.0 { config.lr / (0.25 * s / n) } else { 0.0 })
                .collect()
        }
    }
}

/// Full-batch ascent on the mean (penalized) log-likelihood. The ridge
/// penalty is applied as an exact proximal step so very large `λ` stays
/// stable; a step that lowers the objective is retried at half size.
fn train_logistic(
    rows: &[SparseRow],
    y: &[bool],
    m: usize,
    lambda: f64,
    config: &LinearConfig,
) -> Result<(Vec<f64>, LinearReport)> {
    let n = rows.len() as f64;
    let eta = step_sizes(rows, m, config);
    let objective = |b: &[f64]| ridge_objective(b, rows, y, lambda) / n;
    let mut beta = vec![0.0; m + 1];
    let mut current = objective(&beta);
    let mut report = LinearReport::default();
    let mut shrink = 1.0;
    for _ in 0..config.epochs {
        let g: Vec<f64> = log_likelihood_grad(&beta, rows, y).iter().map(|v| v / n).collect();
        let full_grad_max = g
            .iter()
            .zip(&beta)
            .map(|(gj, bj)| (gj - 2.0 * lambda * bj / n).abs())
            .fold(0.0, f64::max);
        if full_grad_max < config.tol {
            report.converged = true;
            break;
        }
        loop {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(&g)
                .zip(&eta)
                .map(|((bj, gj), ej)| {
                    let e = ej * shrink;
                    (bj + e * gj) / (1.0 + 2.0 * e * lambda / n)
                })
                .collect();
            let value = objective(&candidate);
            if !value.is_finite() {
                return Err(Error::Diverged("non-finite log-likelihood; lower the learning rate".into()));
            }
            if value >= current || shrink < 1e-6 {
                beta = candidate;
                current = value;
                break;
            }
            shrink *= 0.5;
        }
        report.epochs_run += 1;
        report.objective.push(current * n);
    }
    Ok((beta, report))
}

/// Primal cost `C Σ max(0, 1 − y(wᵀx + b)) + ½‖w‖²`.
pub fn svm_objective(beta: &[f64], rows: &[SparseRow], y: &[bool], c: f64) -> f64 {
    let hinge: f64 = rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let s = if yi { 1.0 } else { -1.0 };
            (1.0 - s * score(beta, row)).max(0.0)
        })
        .sum();
    c * hinge + 0.5 * beta[1..].iter().map(|w| w * w).sum::<f64>()
}

/// Stochastic subgradient descent on the SVM cost divided by `C n`, so the
/// regularizer is `reg = 1 / (C n)`. The bias is unregularized and moves at
/// a hundredth of the weight step.
fn train_svm(rows: &[SparseRow], y: &[bool], m: usize, config: &LinearConfig) -> Result<(Vec<f64>, LinearReport)> {
    if !(config.c > 0.0) {
        return Err(Error::InvalidArgument("SVM needs C > 0".into()));
    }
    let n = rows.len();
    let reg = 1.0 / (config.c * n as f64);
    let mut rng = seed::rng(config.seed);
    // w = scale * v keeps the per-step shrink O(1)
    let mut v = vec![0.0; m];
    let mut scale = 1.0;
    let mut bias = 0.0;
    let mut t = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = LinearReport::default();
    for _ in 0..config.svm_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = config.svm_eta0 / (1.0 + config.svm_eta0 * reg * t);
            let s = if y[i] { 1.0 } else { -1.0 };
            let z = scale * rows[i].iter().map(|(j, x)| v[j] * x).sum::<f64>() + bias;
            scale *= 1.0 - eta * reg;
            if s * z < 1.0 {
                for (j, x) in rows[i].iter() {
                    v[j] += eta * s * x / scale;
                }
                bias += 0.01 * eta * s;
            }
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
            t += 1.0;
        }
        let beta: Vec<f64> = std::iter::once(bias).chain(v.iter().map(|w| w * scale)).collect();
        let cost = svm_objective(&beta, rows, y, config.c);
        if !cost.is_finite() {
            return Err(Error::Diverged("non-finite SVM cost".into()));
        }
        report.objective.push(cost);
        report.epochs_run += 1;
    }
    let beta = std::iter::once(bias).chain(v.iter().map(|w| w * scale)).collect();
    Ok((beta, report))
}

pub fn train_linear(
    matrix: &DocTermMatrix,
    labels: &[SentimentLabel],
    kind: LinearKind,
    config: &LinearConfig,
) -> Result<(LinearModel, LinearReport)> {
    if matrix.n_rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_rows(),
            got: labels.len(),
        });
    }
    let y = binary_targets(labels)?;
    let m = matrix.n_cols;
    for row in &matrix.rows {
        check_row(row, m)?;
    }
    let (weights, report) = match kind {
        LinearKind::Lr => train_logistic(&matrix.rows, &y, m, 0.0, config)?,
        LinearKind::Ridge => train_logistic(&matrix.rows, &y, m, config.lambda, config)?,
        LinearKind::Svm => train_svm(&matrix.rows, &y, m, config)?,
    };
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Diverged("non-finite weights".into()));
    }
    Ok((
        LinearModel {
            kind,
            weights,
            config: config.clone(),
        },
        report,
    ))
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len() - 1
    }

    /// `βᵀx` (or `wᵀx + b`).
    pub fn decision(&self, row: &SparseRow) -> Result<f64> {
        check_row(row, self.n_features())?;
        Ok(score(&self.weights, row))
    }

    pub fn predict(&self, row: &SparseRow) -> Result<Prediction> {
        let z = self.decision(row)?;
        let positive = z >= 0.0;
        let score = match self.kind {
            LinearKind::Svm => z,
            LinearKind::Lr | LinearKind::Ridge => {
                let p = sigmoid(z);
                if positive {
                    p
                } else {
                    1.0 - p
                }
            }
        };
        Ok(Prediction {
            label: label_at(positive),
            score,
        })
    }

    pub(crate) fn parts(&self) -> (serde_json::Value, Blocks) {
        let manifest = serde_json::to_value(LinearManifest {
            linear_kind: self.kind,
            n_features: self.n_features(),
            config: self.config.clone(),
        })
        .expect("manifest serializes");
        (manifest, vec![("weights".into(), self.weights.clone())])
    }

    pub(crate) fn from_parts(body: &serde_json::Value, c: &Container) -> Result<Self> {
        let m: LinearManifest = serde_json::from_value(body.clone())?;
        Ok(LinearModel {
            kind: m.linear_kind,
            weights: c.block_f64("weights", m.n_features + 1)?,
            config: m.config,
        })
    }
}
