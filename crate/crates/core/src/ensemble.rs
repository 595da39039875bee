//! Event-level sentiment ensemble: detect events with each method, run every
//! sentiment model over each event's tweets, and majority-vote per tweet and
//! per event.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    train_linear, train_lstm, train_nb, train_softmax_head, DocRepr, LinearConfig, LinearKind, LstmConfig, ModelKind,
    SentimentModel, SoftmaxConfig,
};
use crate::corpus::{format_iso, Corpus, SentimentLabel, Tweet};
use crate::error::{Error, Result};
use crate::events::{detect, DetectConfig, Event, EventMethod};
use crate::preprocess::{apply_corpus, PipelineKind, PipelineSpec, TokenizedDoc};
use crate::seed;
use crate::vectorize::{train_cbow, CbowConfig, CbowModel, ExternalEmbeddings, Vocabulary, WeightScheme};

/// Most frequent label. Ties go to the smallest label in the order
/// Negative < Neutral < Positive.
pub fn mode(labels: &[SentimentLabel]) -> Result<SentimentLabel> {
    if labels.is_empty() {
        return Err(Error::Empty("cannot vote over no labels"));
    }
    let mut counts = [0usize; 3];
    for l in labels {
        counts[SentimentLabel::ALL.iter().position(|x| x == l).expect("label in ALL")] += 1;
    }
    let mut best = 0;
    for k in 1..3 {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    Ok(SentimentLabel::ALL[best])
}

/// Per-tweet vote across models: `per_model[m][t]` is model `m`'s label for
/// tweet `t`.
pub fn vote_columns(per_model: &[Vec<SentimentLabel>]) -> Result<Vec<SentimentLabel>> {
    let n = per_model.first().map(Vec::len).ok_or(Error::Empty("no models to vote"))?;
    if let Some(bad) = per_model.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    (0..n)
        .map(|t| mode(&per_model.iter().map(|p| p[t]).collect::<Vec<_>>()))
        .collect()
}

/// A sentiment model as the ensemble sees it: a name, its own text
/// preprocessing, and a label for one tweet.
pub trait SentimentPredictor: Send + Sync {
    fn name(&self) -> &str;

    fn pipeline(&self) -> PipelineSpec;

    /// `tokens` is `tweet.text` run through [`pipeline`](Self::pipeline).
    fn predict(&self, tweet: &Tweet, tokens: &[String]) -> Result<SentimentLabel>;
}

/// Turns preprocessed tokens into the representation a model consumes.
#[derive(Debug, Clone)]
pub enum Featurizer {
    Sparse { vocab: Vocabulary, scheme: WeightScheme },
    MeanEmbedding(CbowModel),
    Sequence { cbow: CbowModel, max_len: usize },
    /// Vectors looked up by tweet id; tweets without one get a zero vector.
    External(ExternalEmbeddings),
}

/// A trained [`SentimentModel`] plus everything needed to feed it.
#[derive(Debug, Clone)]
pub struct ModelPredictor {
    pub name: String,
    pub pipeline: PipelineSpec,
    pub featurizer: Featurizer,
    pub model: SentimentModel,
}

impl SentimentPredictor for ModelPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn pipeline(&self) -> PipelineSpec {
        self.pipeline
    }

    fn predict(&self, tweet: &Tweet, tokens: &[String]) -> Result<SentimentLabel> {
        let p = match &self.featurizer {
            Featurizer::Sparse { vocab, scheme } => {
                self.model.predict(DocRepr::Sparse(&vocab.vectorize(tokens, *scheme)))?
            }
            Featurizer::MeanEmbedding(cbow) => self.model.predict(DocRepr::Dense(&cbow.mean_vector(tokens)))?,
            Featurizer::Sequence { cbow, max_len } => {
                self.model.predict(DocRepr::Sequence(&cbow.embed_sequence(tokens, *max_len)))?
            }
            Featurizer::External(emb) => {
                let x = emb.get_f64(tweet.id).unwrap_or_else(|| vec![0.0; emb.dim()]);
                self.model.predict(DocRepr::Dense(&x))?
            }
        };
        Ok(p.label)
    }
}

/// Counts polarity words: more positive hits is Positive, more negative is
/// Negative, otherwise Neutral. Needs no training.
#[derive(Debug, Clone)]
pub struct LexiconPredictor {
    pub name: String,
    pub pipeline: PipelineSpec,
    pub positive: BTreeSet<String>,
    pub negative: BTreeSet<String>,
}

impl LexiconPredictor {
    pub fn new(name: &str, positive: &[&str], negative: &[&str]) -> Self {
        LexiconPredictor {
            name: name.to_string(),
            pipeline: PipelineSpec::resolve(PipelineKind::Sct),
            positive: positive.iter().map(|s| s.to_string()).collect(),
            negative: negative.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SentimentPredictor for LexiconPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn pipeline(&self) -> PipelineSpec {
        self.pipeline
    }

    fn predict(&self, _tweet: &Tweet, tokens: &[String]) -> Result<SentimentLabel> {
        let pos = tokens.iter().filter(|t| self.positive.contains(*t)).count();
        let neg = tokens.iter().filter(|t| self.negative.contains(*t)).count();
        Ok(match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => SentimentLabel::Positive,
            std::cmp::Ordering::Less => SentimentLabel::Negative,
            std::cmp::Ordering::Equal => SentimentLabel::Neutral,
        })
    }
}

/// Label drawn from a hash of `(salt, tweet id)`: arbitrary but fixed,
/// which makes disagreeing voters for tests and fixtures.
#[derive(Debug, Clone)]
pub struct HashPredictor {
    pub name: String,
    pub salt: u64,
}

impl SentimentPredictor for HashPredictor {
    fn name(&self) -> &str {
        &self.name
    }

    fn pipeline(&self) -> PipelineSpec {
        PipelineSpec::resolve(PipelineKind::Mt)
    }

    fn predict(&self, tweet: &Tweet, _tokens: &[String]) -> Result<SentimentLabel> {
        let h = seed::derive(self.salt, &tweet.id.to_string());
        Ok(SentimentLabel::ALL[(h % 3) as usize])
    }
}

/// Hyperparameters for [`fit_predictor`]. Every field falls back to its
/// module default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Preprocessing applied before featurization.
    pub pipeline: PipelineKind,
    pub lemmatize: bool,
    /// Minimum document frequency for the sparse vocabulary.
    pub min_df: u32,
    pub linear: LinearConfig,
    pub softmax: SoftmaxConfig,
    pub lstm: LstmConfig,
    pub cbow: CbowConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pipeline: PipelineKind::Sct,
            lemmatize: false,
            min_df: 1,
            linear: LinearConfig::default(),
            softmax: SoftmaxConfig::default(),
            lstm: LstmConfig::default(),
            cbow: CbowConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn pipeline_spec(&self) -> PipelineSpec {
        PipelineSpec::resolve(self.pipeline).with_lemma(self.lemmatize)
    }
}

/// Term weighting used for each sparse model: raw counts for NB and ridge,
/// TF-IDF for LR and the SVM.
pub fn default_scheme(kind: ModelKind) -> Option<WeightScheme> {
    match kind {
        ModelKind::Nb | ModelKind::Ridge => Some(WeightScheme::RawFreq),
        ModelKind::Lr | ModelKind::Svm => Some(WeightScheme::TfIdf),
        ModelKind::Softmax | ModelKind::Lstm => None,
    }
}

/// Train one model on labelled tweets, including its featurizer (vocabulary
/// or CBOW embeddings). The softmax head uses `embeddings` when given and
/// mean CBOW vectors otherwise. Each component is seeded from `seed` and the
/// model name.
pub fn fit_predictor(
    kind: ModelKind,
    tweets: &[&Tweet],
    labels: &[SentimentLabel],
    config: &TrainConfig,
    embeddings: Option<&ExternalEmbeddings>,
    seed: u64,
) -> Result<ModelPredictor> {
    if tweets.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: tweets.len(),
            got: labels.len(),
        });
    }
    let spec = config.pipeline_spec();
    let docs: Vec<TokenizedDoc> = tweets.par_iter().map(|t| spec.apply(t)).collect();
    let sub = |label: &str| seed::derive(seed, &format!("{}-{label}", kind.as_str()));
    let cbow = |docs: &[TokenizedDoc]| -> Result<CbowModel> {
        let cfg = CbowConfig {
            seed: sub("cbow"),
            ..config.cbow.clone()
        };
        Ok(train_cbow(docs, &cfg)?.0)
    };
    let (featurizer, model) = match kind {
        ModelKind::Nb | ModelKind::Lr | ModelKind::Ridge | ModelKind::Svm => {
            let scheme = default_scheme(kind).expect("sparse model");
            let vocab = Vocabulary::build(&docs, config.min_df)?;
            let matrix = vocab.transform(&docs, scheme);
            let model = match kind {
                ModelKind::Nb => SentimentModel::Nb(train_nb(&matrix, labels)?),
                _ => {
                    let linear_kind = match kind {
                        ModelKind::Lr => LinearKind::Lr,
                        ModelKind::Ridge => LinearKind::Ridge,
                        _ => LinearKind::Svm,
                    };
                    let cfg = LinearConfig {
                        seed: sub("sgd"),
                        ..config.linear.clone()
                    };
                    SentimentModel::Linear(train_linear(&matrix, labels, linear_kind, &cfg)?.0)
                }
            };
            (Featurizer::Sparse { vocab, scheme }, model)
        }
        ModelKind::Softmax => {
            let cfg = SoftmaxConfig {
                seed: sub("sgd"),
                ..config.softmax.clone()
            };
            let (featurizer, xs): (Featurizer, Vec<Vec<f64>>) = match embeddings {
                Some(emb) => {
                    let xs = tweets.iter().map(|t| emb.get_f64(t.id).unwrap_or_else(|| vec![0.0; emb.dim()])).collect();
                    (Featurizer::External(emb.clone()), xs)
                }
                None => {
                    let cb = cbow(&docs)?;
                    let xs = docs.iter().map(|d| cb.mean_vector(&d.tokens)).collect();
                    (Featurizer::MeanEmbedding(cb), xs)
                }
            };
            (featurizer, SentimentModel::Softmax(train_softmax_head(&xs, labels, &cfg)?.0))
        }
        ModelKind::Lstm => {
            let cb = cbow(&docs)?;
            let max_len = config.lstm.max_len;
            let seqs: Vec<Vec<Vec<f64>>> = docs.par_iter().map(|d| cb.embed_sequence(&d.tokens, max_len)).collect();
            let cfg = LstmConfig {
                seed: sub("lstm"),
                ..config.lstm.clone()
            };
            let model = train_lstm(&seqs, labels, &cfg)?.0;
            (Featurizer::Sequence { cbow: cb, max_len }, SentimentModel::Lstm(model))
        }
    };
    Ok(ModelPredictor {
        name: kind.as_str().to_string(),
        pipeline: spec,
        featurizer,
        model,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetVote {
    pub id: u64,
    pub vote: SentimentLabel,
    pub per_model: BTreeMap<String, SentimentLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventVote {
    pub keywords: Vec<String>,
    /// Start and end, `YYYY-MM-DD HH:MM:SS` UTC.
    pub interval: [String; 2],
    pub magnitude: f64,
    /// Mode of the per-model event labels.
    pub vote: SentimentLabel,
    /// Each model's label for the event: the mode of its tweet labels.
    pub per_model: BTreeMap<String, SentimentLabel>,
    pub tweets: Vec<TweetVote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodVotes {
    pub name: EventMethod,
    pub events: Vec<EventVote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    /// Model names, sorted.
    pub models: Vec<String>,
    pub methods: Vec<MethodVotes>,
}

impl EnsembleReport {
    /// Individual votes: `(method, event index, tweet)`.
    pub fn individual(&self) -> impl Iterator<Item = (EventMethod, usize, &TweetVote)> + '_ {
        self.methods.iter().flat_map(|m| {
            m.events
                .iter()
                .enumerate()
                .flat_map(move |(e, ev)| ev.tweets.iter().map(move |t| (m.name, e, t)))
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One row per (method, event, tweet) with the tweet's vote, the event's
    /// vote and one column per model.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method", "event", "keywords", "tweet_id", "tweet_vote", "event_vote"];
        header.extend(self.models.iter().map(String::as_str));
        w.write_record(&header)?;
        for m in &self.methods {
            for (e, ev) in m.events.iter().enumerate() {
                for t in &ev.tweets {
                    let mut row = vec![
                        m.name.as_str().to_string(),
                        e.to_string(),
                        ev.keywords.join(" "),
                        t.id.to_string(),
                        t.vote.as_str().to_string(),
                        ev.vote.as_str().to_string(),
                    ];
                    row.extend(self.models.iter().map(|name| t.per_model[name].as_str().to_string()));
                    w.write_record(&row)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<ensemble csv>", e))?;
        Ok(())
    }
}

/// Vote over already-detected events. Each model labels each member tweet
/// once (in parallel); the report is then assembled in a fixed order, so it
/// does not depend on scheduling or on the order of `models` and `events`.
pub fn vote_events(
    corpus: &Corpus,
    events: &[(EventMethod, Vec<Event>)],
    models: &[&dyn SentimentPredictor],
) -> Result<EnsembleReport> {
    if models.is_empty() {
        return Err(Error::Empty("no sentiment models"));
    }
    let names: BTreeSet<&str> = models.iter().map(|m| m.name()).collect();
    if names.len() != models.len() {
        return Err(Error::InvalidArgument("sentiment model names must be unique".into()));
    }
    let methods: BTreeSet<EventMethod> = events.iter().map(|(m, _)| *m).collect();
    if methods.len() != events.len() {
        return Err(Error::InvalidArgument("each detection method may appear once".into()));
    }

    let members: BTreeSet<u64> = events.iter().flat_map(|(_, ev)| ev.iter().flat_map(|e| e.tweet_ids.iter().copied())).collect();
    let tweets: Vec<&Tweet> = members
        .iter()
        .map(|&id| {
            corpus
                .get(id)
                .ok_or_else(|| Error::InvalidArgument(format!("event tweet {id} is not in the corpus")))
        })
        .collect::<Result<_>>()?;
    let table: BTreeMap<u64, BTreeMap<String, SentimentLabel>> = tweets
        .par_iter()
        .map(|tweet| {
            let mut cache: Vec<(PipelineSpec, Vec<String>)> = Vec::new();
            let mut row = BTreeMap::new();
            for m in models {
                let spec = m.pipeline();
                let tokens = match cache.iter().find(|(s, _)| *s == spec) {
                    Some((_, t)) => t.clone(),
                    None => {
                        let t = spec.apply(tweet).tokens;
                        cache.push((spec, t.clone()));
                        t
                    }
                };
                row.insert(m.name().to_string(), m.predict(tweet, &tokens)?);
            }
            Ok((tweet.id, row))
        })
        .collect::<Result<_>>()?;

    let mut ordered: Vec<&(EventMethod, Vec<Event>)> = events.iter().collect();
    ordered.sort_by_key(|(m, _)| *m);
    let model_names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::new();
    for (method, evs) in ordered {
        let mut votes = Vec::new();
        for (rank, e) in evs.iter().enumerate() {
            if e.tweet_ids.is_empty() {
                log::warn!("{method} event {rank} ({}) has no member tweets; dropped", e.terms().collect::<Vec<_>>().join(" "));
                continue;
            }
            let ids: BTreeSet<u64> = e.tweet_ids.iter().copied().collect();
            let tweets: Vec<TweetVote> = ids
                .iter()
                .map(|id| {
                    let per_model = table[id].clone();
                    let labels: Vec<SentimentLabel> = per_model.values().copied().collect();
                    Ok(TweetVote {
                        id: *id,
                        vote: mode(&labels)?,
                        per_model,
                    })
                })
                .collect::<Result<_>>()?;
            let per_model: BTreeMap<String, SentimentLabel> = model_names
                .iter()
                .map(|name| {
                    let labels: Vec<SentimentLabel> = tweets.iter().map(|t| t.per_model[name]).collect();
                    Ok((name.clone(), mode(&labels)?))
                })
                .collect::<Result<_>>()?;
            votes.push(EventVote {
                keywords: e.terms().map(String::from).collect(),
                interval: [format_iso(e.start), format_iso(e.end)],
                magnitude: e.magnitude,
                vote: mode(&per_model.values().copied().collect::<Vec<_>>())?,
                per_model,
                tweets,
            });
        }
        out.push(MethodVotes {
            name: *method,
            events: votes,
        });
    }
    Ok(EnsembleReport {
        models: model_names,
        methods: out,
    })
}

/// Full run: CT preprocessing for detection, every method in parallel
/// (each seeded from `seed` and its own name), then [`vote_events`].
pub fn run_edsa(
    corpus: &Corpus,
    methods: &[EventMethod],
    detect_config: &DetectConfig,
    models: &[&dyn SentimentPredictor],
    seed: u64,
) -> Result<EnsembleReport> {
    let docs = apply_corpus(corpus, &PipelineSpec::resolve(PipelineKind::Ct));
    let events: Vec<(EventMethod, Vec<Event>)> = methods
        .par_iter()
        .map(|&m| {
            let events = detect(m, corpus, &docs, detect_config, seed::derive(seed, m.as_str()))?;
            Ok((m, events))
        })
        .collect::<Result<_>>()?;
    vote_events(corpus, &events, models)
}
