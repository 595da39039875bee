//! Bag-of-words weighting (raw frequency, TF, TF-IDF), CBOW embeddings and
//! external dense embeddings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::TokenizedDoc;
use crate::seed;

pub mod cbow;
pub mod embeddings;

pub use cbow::{train_cbow, CbowConfig, CbowModel, CbowReport};
pub use embeddings::ExternalEmbeddings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    #[serde(rename = "raw")]
    RawFreq,
    Tf,
    TfIdf,
}

impl WeightScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightScheme::RawFreq => "raw",
            WeightScheme::Tf => "tf",
            WeightScheme::TfIdf => "tfidf",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" | "rawfreq" | "freq" => Ok(WeightScheme::RawFreq),
            "tf" => Ok(WeightScheme::Tf),
            "tfidf" | "tf-idf" => Ok(WeightScheme::TfIdf),
            other => Err(Error::InvalidArgument(format!("unknown weight scheme {other:?}"))),
        }
    }
}

/// `(f / doc_len) * ln(n / n_j)`.
pub fn tfidf(term_count: f64, doc_len: usize, n: usize, n_j: usize) -> Result<f64> {
    if n_j == 0 {
        return Err(Error::UnknownTerm);
    }
    if doc_len == 0 || n_j > n {
        return Err(Error::InvalidArgument(format!(
            "tfidf needs doc_len >= 1 and n_j <= n (doc_len={doc_len}, n={n}, n_j={n_j})"
        )));
    }
    Ok(term_count / doc_len as f64 * idf(n, n_j))
}

fn idf(n: usize, n_j: usize) -> f64 {
    (n as f64 / n_j as f64).ln()
}

/// Terms in lexicographic order with their document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
    doc_freq: Vec<u32>,
    total_docs: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    total_docs: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.doc_freq, r.total_docs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            doc_freq: v.doc_freq,
            total_docs: v.total_docs,
        }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, doc_freq: Vec<u32>, total_docs: usize) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            terms,
            index,
            doc_freq,
            total_docs,
        }
    }

    /// Vocabulary over all tokens occurring in at least `min_doc_freq` docs.
    pub fn build(docs: &[TokenizedDoc], min_doc_freq: u32) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Empty("document list"));
        }
        let mut df: BTreeMap<&str, u32> = BTreeMap::new();
        for doc in docs {
            let mut seen: Vec<&str> = doc.tokens.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let (terms, doc_freq): (Vec<String>, Vec<u32>) = df
            .into_iter()
            .filter(|&(_, c)| c >= min_doc_freq.max(1))
            .map(|(t, c)| (t.to_string(), c))
            .unzip();
        if terms.is_empty() {
            return Err(Error::Empty("every document is empty"));
        }
        Ok(Vocabulary::from_parts(terms, doc_freq, docs.len()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| i as usize)
    }

    pub fn doc_freq(&self, index: usize) -> u32 {
        self.doc_freq[index]
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    pub fn idf(&self, index: usize) -> f64 {
        idf(self.total_docs, self.doc_freq[index] as usize)
    }

    /// Stable identity of the term list, stored in model files.
    pub fn hash(&self) -> String {
        let mut bytes = Vec::new();
        for t in &self.terms {
            bytes.extend_from_slice(t.as_bytes());
            bytes.push(b'\n');
        }
        seed::sha256_hex(&bytes)
    }

    /// Weight one document. Out-of-vocabulary tokens are dropped but still
    /// count toward the document length used by TF.
    pub fn vectorize(&self, tokens: &[String], scheme: WeightScheme) -> SparseRow {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for t in tokens {
            if let Some(&j) = self.index.get(t.as_str()) {
                *counts.entry(j).or_insert(0) += 1;
            }
        }
        let doc_len = tokens.len().max(1) as f64;
        let (indices, values) = counts
            .into_iter()
            .map(|(j, f)| {
                let f = f as f64;
                let w = match scheme {
                    WeightScheme::RawFreq => f,
                    WeightScheme::Tf => f / doc_len,
                    WeightScheme::TfIdf => f / doc_len * self.idf(j as usize),
                };
                (j, w)
            })
            .unzip();
        SparseRow { indices, values }
    }

    pub fn transform(&self, docs: &[TokenizedDoc], scheme: WeightScheme) -> DocTermMatrix {
        let rows = docs
            .par_iter()
            .map(|d| self.vectorize(&d.tokens, scheme))
            .collect();
        DocTermMatrix {
            rows,
            scheme,
            n_cols: self.len(),
        }
    }
}

/// One sparse row: strictly increasing column indices with their weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&j, &v)| (j as usize, v))
    }

    /// Dot product with a dense vector, ignoring columns beyond its length.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter()
            .filter(|&(j, _)| j < dense.len())
            .map(|(j, v)| v * dense[j])
            .sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().map(|&j| j as usize)
    }

    /// Multiply every weight by `k`.
    pub fn scaled(&self, k: f64) -> SparseRow {
        SparseRow {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTermMatrix {
    pub rows: Vec<SparseRow>,
    pub scheme: WeightScheme,
    pub n_cols: usize,
}

impl DocTermMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn select(&self, indices: &[usize]) -> DocTermMatrix {
        DocTermMatrix {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            scheme: self.scheme,
            n_cols: self.n_cols,
        }
    }
}

/// Vocabulary and weighted matrix over `docs` (no frequency cutoff).
pub fn build_matrix(docs: &[TokenizedDoc], scheme: WeightScheme) -> Result<(Vocabulary, DocTermMatrix)> {
    build_matrix_with_cutoff(docs, scheme, 1)
}

pub fn build_matrix_with_cutoff(
    docs: &[TokenizedDoc],
    scheme: WeightScheme,
    min_doc_freq: u32,
) -> Result<(Vocabulary, DocTermMatrix)> {
    let vocab = Vocabulary::build(docs, min_doc_freq)?;
    let matrix = vocab.transform(docs, scheme);
    Ok((vocab, matrix))
}
