//! Multinomial naive Bayes with Laplace smoothing.

use serde::{Deserialize, Serialize};

use super::{binary_targets, check_row, label_at, Blocks, Prediction};
use crate::container::Container;
use crate::corpus::SentimentLabel;
use crate::error::{Error, Result};
use crate::vectorize::{DocTermMatrix, SparseRow, WeightScheme};

/// Class index 0 is Negative, 1 is Positive.
#[derive(Debug, Clone, PartialEq)]
pub struct NbModel {
    log_prior: [f64; 2],
    /// `log p(t_j | y)` per class.
    log_likelihood: [Vec<f64>; 2],
}

#[derive(Serialize, Deserialize)]
struct NbManifest {
    n_features: usize,
    smoothing: f64,
}

const SMOOTHING: f64 = 1.0;

pub fn train_nb(matrix: &DocTermMatrix, labels: &[SentimentLabel]) -> Result<NbModel> {
    if matrix.scheme != WeightScheme::RawFreq {
        return Err(Error::InvalidArgument(format!(
            "naive Bayes needs raw frequencies, got {}",
            matrix.scheme
        )));
    }
    if matrix.n_rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_rows(),
            got: labels.len(),
        });
    }
    let y = binary_targets(labels)?;
    let m = matrix.n_cols;
    let mut counts = [vec![0.0; m], vec![0.0; m]];
    let mut docs = [0usize; 2];
    for (row, &pos) in matrix.rows.iter().zip(&y) {
        check_row(row, m)?;
        let c = pos as usize;
        docs[c] += 1;
        for (j, f) in row.iter() {
            counts[c][j] += f;
        }
    }
    let n = y.len() as f64;
    let log_prior = [(docs[0] as f64 / n).ln(), (docs[1] as f64 / n).ln()];
    let log_likelihood = counts.map(|c| {
        let total: f64 = c.iter().sum::<f64>() + SMOOTHING * m as f64;
        c.iter().map(|&v| ((v + SMOOTHING) / total).ln()).collect()
    });
    Ok(NbModel {
        log_prior,
        log_likelihood,
    })
}

impl NbModel {
    pub fn n_features(&self) -> usize {
        self.log_likelihood[0].len()
    }

    pub fn log_prior(&self) -> [f64; 2] {
        self.log_prior
    }

    pub fn log_likelihood(&self, class: usize) -> &[f64] {
        &self.log_likelihood[class]
    }

    /// `log p(y) + Σ_j f_j log p(t_j | y)` for both classes. The multinomial
    /// coefficient is the same for every class and is left out.
    pub fn joint_log(&self, row: &SparseRow) -> Result<[f64; 2]> {
        check_row(row, self.n_features())?;
        Ok([0, 1].map(|c| self.log_prior[c] + row.dot(&self.log_likelihood[c])))
    }

    /// `p(y | d)` for both classes.
    pub fn posterior(&self, row: &SparseRow) -> Result<[f64; 2]> {
        let [a, b] = self.joint_log(row)?;
        let max = a.max(b);
        let (ea, eb) = ((a - max).exp(), (b - max).exp());
        Ok([ea / (ea + eb), eb / (ea + eb)])
    }

    pub fn predict(&self, row: &SparseRow) -> Result<Prediction> {
        let [neg, pos] = self.joint_log(row)?;
        let post = self.posterior(row)?;
        let positive = pos >= neg;
        Ok(Prediction {
            label: label_at(positive),
            score: post[positive as usize],
        })
    }

    pub(crate) fn parts(&self) -> (serde_json::Value, Blocks) {
        let manifest = serde_json::to_value(NbManifest {
            n_features: self.n_features(),
            smoothing: SMOOTHING,
        })
        .expect("manifest serializes");
        let blocks = vec![
            ("log_prior".into(), self.log_prior.to_vec()),
            ("log_likelihood_neg".into(), self.log_likelihood[0].clone()),
            ("log_likelihood_pos".into(), self.log_likelihood[1].clone()),
        ];
        (manifest, blocks)
    }

    pub(crate) fn from_parts(body: &serde_json::Value, c: &Container) -> Result<Self> {
        let m: NbManifest = serde_json::from_value(body.clone())?;
        let prior = c.block_f64("log_prior", 2)?;
        Ok(NbModel {
            log_prior: [prior[0], prior[1]],
            log_likelihood: [
                c.block_f64("log_likelihood_neg", m.n_features)?,
                c.block_f64("log_likelihood_pos", m.n_features)?,
            ],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::TokenizedDoc;
    use crate::vectorize::build_matrix;
    use proptest::prelude::*;
    use SentimentLabel::*;

    fn toy(raw: &[&str]) -> Vec<TokenizedDoc> {
        raw.iter()
            .enumerate()
            .map(|(i, s)| TokenizedDoc {
                tweet_id: i as u64,
                tokens: s.split_whitespace().map(String::from).collect(),
            })
            .collect()
    }

    #[test]
    fn separable_pair() {
        let (vocab, m) = build_matrix(&toy(&["good", "bad"]), WeightScheme::RawFreq).unwrap();
        let nb = train_nb(&m, &[Positive, Negative]).unwrap();
        let good = vocab.vectorize(&["good".into()], WeightScheme::RawFreq);
        assert_eq!(nb.predict(&good).unwrap().label, Positive);
        for (row, want) in m.rows.iter().zip([Positive, Negative]) {
            assert_eq!(nb.predict(row).unwrap().label, want);
        }
    }

    #[test]
    fn empty_doc_follows_priors() {
        let (_, m) = build_matrix(&toy(&["a", "b", "c"]), WeightScheme::RawFreq).unwrap();
        let nb = train_nb(&m, &[Negative, Negative, Positive]).unwrap();
        let p = nb.predict(&SparseRow::default()).unwrap();
        assert_eq!(p.label, Negative);
        assert!((p.score - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_matches_bayes_rule() {
        let docs = toy(&[
            "love this love",
            "great day",
            "love great fun",
            "hate this",
            "awful day hate",
            "this awful",
        ]);
        let labels = [Positive, Positive, Positive, Negative, Negative, Negative];
        let (vocab, m) = build_matrix(&docs, WeightScheme::RawFreq).unwrap();
        let nb = train_nb(&m, &labels).unwrap();
        // direct evaluation with products instead of logs
        let terms = vocab.terms();
        let prob = |class: SentimentLabel, term: &str| {
            let (mut hits, mut total) = (0.0, 0.0);
            for (d, &l) in docs.iter().zip(&labels) {
                if l == class {
                    total += d.tokens.len() as f64;
                    hits += d.tokens.iter().filter(|t| *t == term).count() as f64;
                }
            }
            (hits + 1.0) / (total + terms.len() as f64)
        };
        let test = ["love", "day", "this", "this", "awful"];
        let mut joint = [0.5, 0.5];
        for (c, class) in [Negative, Positive].into_iter().enumerate() {
            for t in test {
                joint[c] *= prob(class, t);
            }
        }
        let want_pos = joint[1] / (joint[0] + joint[1]);
        let tokens: Vec<String> = test.iter().map(|s| s.to_string()).collect();
        let post = nb.posterior(&vocab.vectorize(&tokens, WeightScheme::RawFreq)).unwrap();
        assert!((post[1] - want_pos).abs() < 1e-12);
        let sums: Vec<f64> = (0..2).map(|c| nb.log_likelihood(c).iter().map(|v| v.exp()).sum()).collect();
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_wrong_scheme_and_single_class() {
        let (_, m) = build_matrix(&toy(&["a", "b"]), WeightScheme::TfIdf).unwrap();
        assert!(train_nb(&m, &[Positive, Negative]).is_err());
        let (_, m) = build_matrix(&toy(&["a", "b"]), WeightScheme::RawFreq).unwrap();
        assert!(train_nb(&m, &[Positive, Positive]).is_err());
    }

    proptest! {
        #[test]
        fn scaling_counts_keeps_label(
            counts in prop::collection::vec(0u32..4, 5),
            k in 1u32..6,
            labels in prop::collection::vec(any::<bool>(), 8),
            seed in 0u64..1000,
        ) {
            prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
            let mut rng = crate::seed::rng(seed);
            let rows: Vec<SparseRow> = (0..8).map(|_| {
                use rand::Rng;
                let vals: Vec<f64> = (0..5).map(|_| rng.random_range(0..3) as f64).collect();
                SparseRow {
                    indices: (0..5).filter(|&j| vals[j as usize] > 0.0).collect(),
                    values: vals.into_iter().filter(|&v| v > 0.0).collect(),
                }
            }).collect();
            let m = DocTermMatrix { rows, scheme: WeightScheme::RawFreq, n_cols: 5 };
            let labels: Vec<SentimentLabel> = labels.iter().map(|&b| if b { Positive } else { Negative }).collect();
            let nb = train_nb(&m, &labels).unwrap();
            let row = SparseRow {
                indices: (0..5).filter(|&j| counts[j as usize] > 0).collect(),
                values: counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect(),
            };
            let base = nb.predict(&row).unwrap().label;
            let [n0, p0] = nb.joint_log(&row).unwrap();
            let [n1, p1] = nb.joint_log(&row.scaled(k as f64)).unwrap();
            let prior = nb.log_prior();
            // The evidence term scales by exactly k, so the label can only
            // change when a prior imbalance is involved.
            let ev0 = (p0 - prior[1]) - (n0 - prior[0]);
            let ev1 = (p1 - prior[1]) - (n1 - prior[0]);
            prop_assert!((ev1 - k as f64 * ev0).abs() < 1e-9);
            let prior_gap = prior[1] - prior[0];
            if prior_gap.abs() < 1e-12 {
                prop_assert_eq!(nb.predict(&row.scaled(k as f64)).unwrap().label, base);
            }
        }
    }
}
