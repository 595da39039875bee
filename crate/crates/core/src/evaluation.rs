//! Accuracy, precision and recall (Positive is the positive class) and
//! stratified k-fold cross-validation.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::ModelKind;
use crate::corpus::{SentimentLabel, Tweet};
use crate::ensemble::{fit_predictor, vote_columns, SentimentPredictor, TrainConfig};
use crate::error::{Error, Result};
use crate::seed;
use crate::vectorize::ExternalEmbeddings;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&self, other: &Confusion) -> Confusion {
        Confusion {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()).unwrap_or(0.0),
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            confusion: *self,
        }
    }
}

/// Undefined ratios (no positive predictions, no positive truths) are
/// `None`, never 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    #[serde(flatten)]
    pub confusion: Confusion,
}

/// Tally predictions against binary ground truth. A Neutral prediction
/// counts as "not Positive".
pub fn score(preds: &[SentimentLabel], truth: &[SentimentLabel]) -> Result<Metrics> {
    Ok(confusion(preds, truth)?.metrics())
}

pub fn confusion(preds: &[SentimentLabel], truth: &[SentimentLabel]) -> Result<Confusion> {
    if preds.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: preds.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &t) in preds.iter().zip(truth) {
        let predicted = p == SentimentLabel::Positive;
        let actual = match t {
            SentimentLabel::Positive => true,
            SentimentLabel::Negative => false,
            SentimentLabel::Neutral => {
                return Err(Error::InvalidArgument("ground truth must be Positive/Negative".into()))
            }
        };
        match (predicted, actual) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Fold index for each item. Each class is shuffled with its own seeded
/// stream and dealt round-robin, continuing the rotation across classes, so
/// fold sizes differ by at most one and class ratios are preserved.
pub fn stratified_folds(labels: &[SentimentLabel], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument("k-fold needs k >= 2".into()));
    }
    if k > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} items into {k} folds",
            labels.len()
        )));
    }
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for class in SentimentLabel::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = seed::rng(seed::derive(seed, &format!("fold-{}", class.as_str())));
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub accuracy: f64,
    /// Mean over the folds where the ratio is defined.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KFoldReport {
    pub mean: Summary,
    pub folds: Vec<Metrics>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl KFoldReport {
    pub fn from_folds(folds: Vec<Metrics>) -> Self {
        let accuracy = folds.iter().map(|m| m.accuracy).sum::<f64>() / folds.len().max(1) as f64;
        KFoldReport {
            mean: Summary {
                accuracy,
                precision: mean_defined(folds.iter().map(|m| m.precision)),
                recall: mean_defined(folds.iter().map(|m| m.recall)),
            },
            folds,
        }
    }

    pub fn pooled(&self) -> Confusion {
        self.folds.iter().fold(Confusion::default(), |acc, m| acc.merge(&m.confusion))
    }
}

/// Stratified k-fold driver. `fit_predict(train, test)` trains on the
/// `train` indices and returns one label per `test` index. Folds run in
/// parallel; results are collected in fold order.
pub fn kfold<F>(labels: &[SentimentLabel], k: usize, seed: u64, fit_predict: F) -> Result<KFoldReport>
where
    F: Fn(&[usize], &[usize]) -> Result<Vec<SentimentLabel>> + Sync,
{
    let assignment = stratified_folds(labels, k, seed)?;
    let folds: Vec<Metrics> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| assignment[i] == f);
            let preds = fit_predict(&train, &test)?;
            let truth: Vec<SentimentLabel> = test.iter().map(|&i| labels[i]).collect();
            score(&preds, &truth)
        })
        .collect::<Result<_>>()?;
    Ok(KFoldReport::from_folds(folds))
}

/// Per-model cross-validation plus the majority vote of those models, all
/// on the same folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValReport {
    pub per_model: BTreeMap<ModelKind, KFoldReport>,
    /// Present when more than one model was evaluated.
    pub ensemble: Option<KFoldReport>,
}

/// Stratified k-fold over labelled tweets: every fold trains each model in
/// `kinds` on the other folds and scores it and the per-tweet vote on the
/// held-out fold. Folds run in parallel.
pub fn cross_validate(
    kinds: &[ModelKind],
    tweets: &[&Tweet],
    labels: &[SentimentLabel],
    config: &TrainConfig,
    embeddings: Option<&ExternalEmbeddings>,
    k: usize,
    seed: u64,
) -> Result<CrossValReport> {
    if kinds.is_empty() {
        return Err(Error::Empty("no models to evaluate"));
    }
    if tweets.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: tweets.len(),
            got: labels.len(),
        });
    }
    let assignment = stratified_folds(labels, k, seed)?;
    let per_fold: Vec<(Vec<Metrics>, Metrics)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| assignment[i] == f);
            let train_tweets: Vec<&Tweet> = train.iter().map(|&i| tweets[i]).collect();
            let train_labels: Vec<SentimentLabel> = train.iter().map(|&i| labels[i]).collect();
            let truth: Vec<SentimentLabel> = test.iter().map(|&i| labels[i]).collect();
            let fold_seed = seed::derive(seed, &format!("fold-{f}"));
            let mut columns = Vec::new();
            let mut metrics = Vec::new();
            for &kind in kinds {
                let model = fit_predictor(kind, &train_tweets, &train_labels, config, embeddings, fold_seed)?;
                let spec = model.pipeline();
                let preds: Vec<SentimentLabel> = test
                    .par_iter()
                    .map(|&i| model.predict(tweets[i], &spec.apply(tweets[i]).tokens))
                    .collect::<Result<_>>()?;
                metrics.push(score(&preds, &truth)?);
                columns.push(preds);
            }
            let voted = score(&vote_columns(&columns)?, &truth)?;
            Ok((metrics, voted))
        })
        .collect::<Result<_>>()?;
    let per_model = kinds
        .iter()
        .enumerate()
        .map(|(m, &kind)| (kind, KFoldReport::from_folds(per_fold.iter().map(|(ms, _)| ms[m]).collect())))
        .collect();
    let ensemble = (kinds.len() > 1).then(|| KFoldReport::from_folds(per_fold.iter().map(|(_, v)| *v).collect()));
    Ok(CrossValReport { per_model, ensemble })
}

/// One line of the metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub dataset: String,
    pub algorithm: String,
    pub term_weight: String,
    pub pipeline: String,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// CSV with header `dataset,algorithm,term_weight,pipeline,accuracy,precision,recall`;
/// undefined ratios are empty cells.
pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}
