//! Text pipelines. MT, PT and CT feed the event detectors; SCT and SFE feed
//! the sentiment models.
//!
//! | step                 | MT | PT | CT | SCT | SFE |
//! |----------------------|----|----|----|-----|-----|
//! | lowercase            | x  | x  | x  |     |     |
//! | tokenize             | x  | x  | x  | x   | x   |
//! | strip punctuation    | x  | x  | x  | x   | x   |
//! | remove stop words    |    | x  | x  |     |     |
//! | lemma                |    |    | x  |     | x   |
//! | expand contractions  |    |    |    |     | x   |
//! | negation fusion      |    |    |    |     | x   |

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tweet};
use crate::error::{Error, Result};

mod lemma;

pub use lemma::lemmatize;

/// The bundled English stop-word list, verbatim.
pub const STOPWORDS_TXT: &str = include_str!("stopwords.txt");

static STOPWORDS: LazyLock<HashSet<&'static str>> =
    LazyLock::new(|| STOPWORDS_TXT.lines().map(str::trim).filter(|l| !l.is_empty()).collect());

static PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{P}\p{S}]+").unwrap());

static CONTRACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(won't|can't|shan't|n't|'m|'re|'ve|'ll|'d)").unwrap());

pub const NEGATORS: [&str; 3] = ["not", "no", "never"];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(token)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub tweet_id: u64,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Mt,
    Pt,
    Ct,
    Sct,
    Sfe,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Mt => "mt",
            PipelineKind::Pt => "pt",
            PipelineKind::Ct => "ct",
            PipelineKind::Sct => "sct",
            PipelineKind::Sfe => "sfe",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mt" => Ok(PipelineKind::Mt),
            "pt" => Ok(PipelineKind::Pt),
            "ct" => Ok(PipelineKind::Ct),
            "sct" => Ok(PipelineKind::Sct),
            "sfe" => Ok(PipelineKind::Sfe),
            other => Err(Error::InvalidArgument(format!("unknown pipeline {other:?}"))),
        }
    }
}

/// A pipeline with its steps resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub kind: PipelineKind,
    pub lowercase: bool,
    pub strip_punct: bool,
    pub stopwords: bool,
    pub lemma: bool,
    pub contractions: bool,
    pub negation: bool,
}

impl PipelineSpec {
    pub fn resolve(kind: PipelineKind) -> Self {
        let base = PipelineSpec {
            kind,
            lowercase: false,
            strip_punct: true,
            stopwords: false,
            lemma: false,
            contractions: false,
            negation: false,
        };
        match kind {
            PipelineKind::Mt => PipelineSpec {
                lowercase: true,
                ..base
            },
            PipelineKind::Pt => PipelineSpec {
                lowercase: true,
                stopwords: true,
                ..base
            },
            PipelineKind::Ct => PipelineSpec {
                lowercase: true,
                stopwords: true,
                lemma: true,
                ..base
            },
            PipelineKind::Sct => base,
            PipelineKind::Sfe => PipelineSpec {
                lemma: true,
                contractions: true,
                negation: true,
                ..base
            },
        }
    }

    pub fn with_lemma(self, lemma: bool) -> Self {
        PipelineSpec { lemma, ..self }
    }

    pub fn apply(&self, tweet: &Tweet) -> TokenizedDoc {
        TokenizedDoc {
            tweet_id: tweet.id,
            tokens: self.tokens(&tweet.text),
        }
    }

    /// Run the pipeline over raw text.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let lowered;
        let text = if self.lowercase {
            lowered = text.to_lowercase();
            lowered.as_str()
        } else {
            text
        };
        let mut tokens: Vec<String> = tokenize(text);
        if self.contractions {
            tokens = tokens.iter().flat_map(|t| expand_contraction(t)).collect();
        }
        if self.strip_punct {
            tokens = tokens.iter().flat_map(|t| strip_punct(t)).collect();
        }
        if self.stopwords {
            tokens.retain(|t| !is_stopword(t));
        }
        if self.lemma {
            tokens = tokens.iter().map(|t| lemmatize(t)).collect();
            if self.stopwords {
                tokens.retain(|t| !is_stopword(t));
            }
        }
        if self.negation {
            tokens = fuse_negations(tokens);
        }
        tokens
    }
}

impl From<PipelineKind> for PipelineSpec {
    fn from(kind: PipelineKind) -> Self {
        PipelineSpec::resolve(kind)
    }
}

/// Split on Unicode whitespace. Punctuation is left in place.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Split a token at every run of Unicode punctuation or symbol characters and
/// drop the empty pieces: `&quot;hi&quot;` -> `quot`, `hi`, `quot`.
pub fn strip_punct(token: &str) -> Vec<String> {
    PUNCT
        .split(token)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

fn capitalize_like(word: &str, pattern: &str) -> String {
    if pattern.starts_with(|c: char| c.is_uppercase()) {
        let mut chars = word.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        word.to_string()
    }
}

/// Expand the first contraction inside a token: `don't` -> `do`, `not`.
/// Typographic apostrophes are treated as ASCII ones.
pub fn expand_contraction(token: &str) -> Vec<String> {
    let normalized = token.replace('\u{2019}', "'");
    let Some(m) = CONTRACTION.find(&normalized) else {
        return vec![token.to_string()];
    };
    let (pre, matched, post) = (
        &normalized[..m.start()],
        m.as_str(),
        &normalized[m.end()..],
    );
    let lower = matched.to_ascii_lowercase();
    let (head, tail) = match lower.as_str() {
        "won't" => (format!("{pre}{}", capitalize_like("will", matched)), "not"),
        "can't" => (format!("{pre}{}", capitalize_like("can", matched)), "not"),
        "shan't" => (format!("{pre}{}", capitalize_like("shall", matched)), "not"),
        "n't" => (pre.to_string(), "not"),
        "'m" => (pre.to_string(), "am"),
        "'re" => (pre.to_string(), "are"),
        "'ve" => (pre.to_string(), "have"),
        "'ll" => (pre.to_string(), "will"),
        "'d" => (pre.to_string(), "would"),
        _ => unreachable!("regex alternatives are exhaustive"),
    };
    [head, format!("{tail}{post}")]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect()
}

fn is_negator(token: &str) -> bool {
    NEGATORS.iter().any(|n| token.eq_ignore_ascii_case(n))
}

/// Join each negator with the single token that follows it.
pub fn fuse_negations(tokens: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut iter = tokens.into_iter().peekable();
    while let Some(tok) = iter.next() {
        if is_negator(&tok) {
            if let Some(next) = iter.next() {
                out.push(format!("{tok}_{next}"));
                continue;
            }
        }
        out.push(tok);
    }
    out
}

/// Apply a pipeline to every tweet, in corpus order.
pub fn apply_corpus(corpus: &Corpus, spec: &PipelineSpec) -> Vec<TokenizedDoc> {
    corpus.tweets().par_iter().map(|t| spec.apply(t)).collect()
}
