//! Sentiment classifiers behind one predict contract: multinomial naive
//! Bayes, logistic regression, ridge, linear SVM, a softmax head over dense
//! vectors and an LSTM over embedded token sequences.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::vectorize::SparseRow;

mod linear;
mod lstm;
mod nb;
mod softmax;

pub use linear::{
    log_likelihood, log_likelihood_grad, ridge_objective, ridge_objective_grad, svm_objective, train_linear,
    LinearConfig, LinearKind, LinearModel, LinearReport, StepScaling,
};
pub use lstm::{train_lstm, LstmConfig, LstmGrads, LstmModel, LstmReport, LstmTrace};
pub use nb::{train_nb, NbModel};
pub use softmax::{softmax, train_softmax_head, HeadGrad, SoftmaxConfig, SoftmaxHead, SoftmaxReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: SentimentLabel,
    /// Probability of `label` for probabilistic models, decision value for
    /// the SVM.
    pub score: f64,
}

/// A document in one of the three shapes the models consume.
#[derive(Debug, Clone, Copy)]
pub enum DocRepr<'a> {
    Sparse(&'a SparseRow),
    Dense(&'a [f64]),
    Sequence(&'a [Vec<f64>]),
}

impl DocRepr<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            DocRepr::Sparse(_) => "sparse row",
            DocRepr::Dense(_) => "dense vector",
            DocRepr::Sequence(_) => "sequence",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nb,
    Lr,
    Ridge,
    Svm,
    Softmax,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Nb,
        ModelKind::Lr,
        ModelKind::Ridge,
        ModelKind::Svm,
        ModelKind::Softmax,
        ModelKind::Lstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Nb => "nb",
            ModelKind::Lr => "lr",
            ModelKind::Ridge => "ridge",
            ModelKind::Svm => "svm",
            ModelKind::Softmax => "softmax",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" | "naive-bayes" => Ok(ModelKind::Nb),
            "lr" | "logistic" => Ok(ModelKind::Lr),
            "ridge" | "rc" => Ok(ModelKind::Ridge),
            "svm" => Ok(ModelKind::Svm),
            "softmax" | "perceptron" => Ok(ModelKind::Softmax),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

/// Decision-boundary rule shared by the binary models: a score exactly on
/// the threshold is Positive.
pub(crate) fn label_at(positive: bool) -> SentimentLabel {
    if positive {
        SentimentLabel::Positive
    } else {
        SentimentLabel::Negative
    }
}

/// Map labels to `true` for Positive; reject Neutral and one-class input.
pub(crate) fn binary_targets(labels: &[SentimentLabel]) -> Result<Vec<bool>> {
    if labels.is_empty() {
        return Err(Error::Empty("no training labels"));
    }
    let y = labels
        .iter()
        .map(|l| match l {
            SentimentLabel::Positive => Ok(true),
            SentimentLabel::Negative => Ok(false),
            SentimentLabel::Neutral => Err(Error::InvalidArgument(
                "binary models train on Positive/Negative labels only".into(),
            )),
        })
        .collect::<Result<Vec<bool>>>()?;
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::InvalidArgument("training set has a single class".into()));
    }
    Ok(y)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn check_row(row: &SparseRow, n_features: usize) -> Result<()> {
    match row.max_index() {
        Some(j) if j >= n_features => Err(Error::DimensionMismatch {
            expected: n_features,
            got: j + 1,
        }),
        _ => Ok(()),
    }
}

/// Adaptive-moment optimizer over a flat parameter vector.
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub(crate) fn new(n: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * grad[k];
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * grad[k] * grad[k];
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + 1e-8);
        }
    }
}

/// Any trained sentiment model.
#[derive(Debug, Clone, PartialEq)]
pub enum SentimentModel {
    Nb(NbModel),
    Linear(LinearModel),
    Softmax(SoftmaxHead),
    Lstm(LstmModel),
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    kind: ModelKind,
    vocab_hash: Option<String>,
    #[serde(flatten)]
    body: serde_json::Value,
}

impl SentimentModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SentimentModel::Nb(_) => ModelKind::Nb,
            SentimentModel::Linear(m) => match m.kind {
                LinearKind::Lr => ModelKind::Lr,
                LinearKind::Ridge => ModelKind::Ridge,
                LinearKind::Svm => ModelKind::Svm,
            },
            SentimentModel::Softmax(_) => ModelKind::Softmax,
            SentimentModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    /// The representation this model consumes.
    pub fn expects(&self) -> &'static str {
        match self {
            SentimentModel::Nb(_) | SentimentModel::Linear(_) => "sparse row",
            SentimentModel::Softmax(_) => "dense vector",
            SentimentModel::Lstm(_) => "sequence",
        }
    }

    pub fn predict(&self, doc: DocRepr<'_>) -> Result<Prediction> {
        match (self, doc) {
            (SentimentModel::Nb(m), DocRepr::Sparse(row)) => m.predict(row),
            (SentimentModel::Linear(m), DocRepr::Sparse(row)) => m.predict(row),
            (SentimentModel::Softmax(m), DocRepr::Dense(x)) => m.predict(x),
            (SentimentModel::Lstm(m), DocRepr::Sequence(seq)) => m.predict(seq),
            (model, doc) => Err(Error::Representation {
                expected: model.expects(),
                got: doc.name(),
            }),
        }
    }

    /// Parallel map of [`predict`](Self::predict); order is preserved.
    pub fn predict_batch(&self, docs: &[DocRepr<'_>]) -> Result<Vec<Prediction>> {
        docs.par_iter().map(|d| self.predict(*d)).collect()
    }

    pub fn to_container(&self, vocab_hash: Option<&str>) -> Result<Container> {
        let (body, blocks) = match self {
            SentimentModel::Nb(m) => m.parts(),
            SentimentModel::Linear(m) => m.parts(),
            SentimentModel::Softmax(m) => m.parts(),
            SentimentModel::Lstm(m) => m.parts(),
        };
        let mut c = Container::new(&ModelManifest {
            kind: self.kind(),
            vocab_hash: vocab_hash.map(String::from),
            body,
        })?;
        for (name, data) in blocks {
            c.push(&name, &data);
        }
        Ok(c)
    }

    /// Rebuild a model. When `vocab_hash` is given it must match the hash
    /// the model was saved with.
    pub fn from_container(c: &Container, vocab_hash: Option<&str>) -> Result<Self> {
        let m: ModelManifest = c.manifest_as()?;
        if let Some(supplied) = vocab_hash {
            let stored = m.vocab_hash.as_deref().unwrap_or("");
            if stored != supplied {
                return Err(Error::VocabMismatch {
                    model: stored.to_string(),
                    supplied: supplied.to_string(),
                });
            }
        }
        Ok(match m.kind {
            ModelKind::Nb => SentimentModel::Nb(NbModel::from_parts(&m.body, c)?),
            ModelKind::Lr | ModelKind::Ridge | ModelKind::Svm => {
                SentimentModel::Linear(LinearModel::from_parts(&m.body, c)?)
            }
            ModelKind::Softmax => SentimentModel::Softmax(SoftmaxHead::from_parts(&m.body, c, "")?),
            ModelKind::Lstm => SentimentModel::Lstm(LstmModel::from_parts(&m.body, c)?),
        })
    }

    /// Vocabulary hash stored in a saved model, if any.
    pub fn stored_vocab_hash(c: &Container) -> Result<Option<String>> {
        Ok(c.manifest_as::<ModelManifest>()?.vocab_hash)
    }

    pub fn save(&self, path: impl AsRef<Path>, vocab_hash: Option<&str>) -> Result<()> {
        self.to_container(vocab_hash)?.save(path)
    }

    pub fn load(path: impl AsRef<Path>, vocab_hash: Option<&str>) -> Result<Self> {
        SentimentModel::from_container(&Container::load(path)?, vocab_hash)
    }
}

/// Named parameter blocks of a model, as stored in a container.
pub(crate) type Blocks = Vec<(String, Vec<f64>)>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::WeightScheme;

    fn nb_model() -> SentimentModel {
        let m = crate::vectorize::DocTermMatrix {
            rows: vec![
                SparseRow {
                    indices: vec![0],
                    values: vec![1.0],
                },
                SparseRow {
                    indices: vec![1],
                    values: vec![1.0],
                },
            ],
            scheme: WeightScheme::RawFreq,
            n_cols: 2,
        };
        SentimentModel::Nb(train_nb(&m, &[SentimentLabel::Positive, SentimentLabel::Negative]).unwrap())
    }

    #[test]
    fn representation_mismatch_is_an_error() {
        let m = nb_model();
        assert!(matches!(
            m.predict(DocRepr::Dense(&[0.0, 1.0])),
            Err(Error::Representation { .. })
        ));
    }

    #[test]
    fn vocab_hash_is_checked() {
        let m = nb_model();
        let c = m.to_container(Some("abc")).unwrap();
        assert!(SentimentModel::from_container(&c, Some("abc")).is_ok());
        assert!(matches!(
            SentimentModel::from_container(&c, Some("xyz")),
            Err(Error::VocabMismatch { .. })
        ));
        assert_eq!(SentimentModel::stored_vocab_hash(&c).unwrap().as_deref(), Some("abc"));
    }

    fn bytes(m: &SentimentModel) -> Vec<u8> {
        let mut out = Vec::new();
        m.to_container(None).unwrap().write_to(&mut out).unwrap();
        out
    }

    #[test]
    fn every_model_survives_a_roundtrip() {
        use SentimentLabel::*;
        let lin = LinearModel {
            kind: LinearKind::Ridge,
            weights: vec![0.1, -0.7, 1.0 / 3.0],
            config: LinearConfig::default(),
        };
        let mut head = SoftmaxHead::zeros(vec![Negative, Neutral, Positive], 2);
        head.w = vec![0.5, -1.0, 0.25, 0.0, -0.3, 0.9];
        let lstm = LstmModel::init(2, 3, 10, 5).unwrap();
        let row = SparseRow {
            indices: vec![0, 1],
            values: vec![2.0, 1.0],
        };
        let x = [0.4, -0.2];
        let seq = vec![x.to_vec(), vec![1.0, 0.5]];
        let models = [
            (nb_model(), DocRepr::Sparse(&row)),
            (SentimentModel::Linear(lin), DocRepr::Sparse(&row)),
            (SentimentModel::Softmax(head), DocRepr::Dense(&x)),
            (SentimentModel::Lstm(lstm), DocRepr::Sequence(&seq)),
        ];
        for (model, doc) in &models {
            let mut buf = Vec::new();
            model.to_container(None).unwrap().write_to(&mut buf).unwrap();
            let back = SentimentModel::from_container(&Container::read_from(&buf[..]).unwrap(), None).unwrap();
            assert_eq!(back.kind(), model.kind());
            let (a, b) = (model.predict(*doc).unwrap(), back.predict(*doc).unwrap());
            assert_eq!(a.label, b.label);
            // parameters are stored as f32
            assert!((a.score - b.score).abs() < 1e-5);
            assert_eq!(bytes(&back), buf);
        }
    }

    #[test]
    fn model_kind_names() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert_eq!("RC".parse::<ModelKind>().unwrap(), ModelKind::Ridge);
    }

    #[test]
    fn binary_targets_reject_bad_sets() {
        use SentimentLabel::*;
        assert!(binary_targets(&[Positive, Positive]).is_err());
        assert!(binary_targets(&[Positive, Neutral]).is_err());
        assert!(binary_targets(&[]).is_err());
        assert_eq!(binary_targets(&[Negative, Positive]).unwrap(), [false, true]);
    }

    #[test]
    fn stable_sigmoid_and_softplus() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-9);
    }
}
