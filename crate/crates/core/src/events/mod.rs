//! Bursty-event detection over equal-width time slices: MABED, online LDA and
//! Peaky Topics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{format_iso, Corpus};
use crate::error::{Error, Result};
use crate::preprocess::TokenizedDoc;

mod mabed;
mod olda;
mod peaky;

pub use mabed::{mabed_candidate_weight, mabed_detect, MabedConfig};
pub use olda::{olda_detect, OldaConfig, OldaState};
pub use peaky::{peaky_detect, spike_scores, PeakyConfig};

/// Number of keywords describing an event.
pub const KEYWORDS_PER_EVENT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventMethod {
    Mabed,
    Olda,
    #[serde(rename = "peaky")]
    PeakyTopics,
}

impl EventMethod {
    pub const ALL: [EventMethod; 3] = [EventMethod::Mabed, EventMethod::Olda, EventMethod::PeakyTopics];

    pub fn as_str(self) -> &'static str {
        match self {
            EventMethod::Mabed => "mabed",
            EventMethod::Olda => "olda",
            EventMethod::PeakyTopics => "peaky",
        }
    }
}

impl fmt::Display for EventMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mabed" => Ok(EventMethod::Mabed),
            "olda" | "lda" => Ok(EventMethod::Olda),
            "peaky" | "peakytopics" | "peaky-topics" => Ok(EventMethod::PeakyTopics),
            other => Err(Error::InvalidArgument(format!("unknown event method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub term: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub method: EventMethod,
    /// Descending weight. Ten terms unless the vocabulary is smaller.
    pub keywords: Vec<Keyword>,
    pub start: i64,
    pub end: i64,
    pub magnitude: f64,
    /// Sorted ascending.
    pub tweet_ids: Vec<u64>,
}

impl Event {
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(|k| k.term.as_str())
    }

    fn shared_keywords(&self, other: &Event) -> usize {
        let mine: HashSet<&str> = self.terms().collect();
        other.terms().filter(|t| mine.contains(t)).count()
    }
}

/// Magnitude descending, then earliest start, then first keyword.
pub fn rank_order(a: &Event, b: &Event) -> Ordering {
    b.magnitude
        .total_cmp(&a.magnitude)
        .then(a.start.cmp(&b.start))
        .then_with(|| a.terms().next().cmp(&b.terms().next()))
}

/// Drop every event sharing at least `threshold` keywords with a
/// higher-ranked one. `events` must already be ranked.
pub fn dedup_events(events: Vec<Event>, threshold: usize) -> Vec<Event> {
    let mut kept: Vec<Event> = Vec::with_capacity(events.len());
    for e in events {
        if !kept.iter().any(|k| k.shared_keywords(&e) >= threshold) {
            kept.push(e);
        }
    }
    kept
}

/// Keyword order within an event: weight descending, then term.
pub(crate) fn keyword_order(a: &Keyword, b: &Keyword) -> Ordering {
    b.weight.total_cmp(&a.weight).then_with(|| a.term.cmp(&b.term))
}

#[derive(Debug, Clone)]
pub(crate) struct SliceDoc {
    pub id: u64,
    pub timestamp: i64,
    /// Token ids in document order.
    pub tokens: Vec<u32>,
}

/// A corpus binned into equal-width time slices, with per-term counts.
#[derive(Debug, Clone)]
pub struct TimeSlices {
    min_ts: i64,
    span: i64,
    num_slices: usize,
    terms: Vec<String>,
    term_index: HashMap<String, u32>,
    docs: Vec<SliceDoc>,
    slice_docs: Vec<Vec<usize>>,
    /// `[term][slice]`: tweets in the slice containing the term.
    term_counts: Vec<Vec<u32>>,
}

/// Bin of `offset` within `[0, span]` split into `n` equal parts; the last
/// bin is right-closed.
pub(crate) fn bin_of(offset: i64, span: i64, n: usize) -> usize {
    let idx = (offset as i128 * n as i128 / span as i128) as usize;
    idx.min(n - 1)
}

/// First offset that falls in bin `i`, i.e. `ceil(i * span / n)`.
pub(crate) fn bin_start(i: usize, span: i64, n: usize) -> i64 {
    let num = i as i128 * span as i128;
    let n = n as i128;
    ((num + n - 1) / n) as i64
}

impl TimeSlices {
    /// Bin the tweets of `docs` (looked up in `corpus` for timestamps).
    pub fn build(corpus: &Corpus, docs: &[TokenizedDoc], num_slices: usize) -> Result<Self> {
        if num_slices < 2 {
            return Err(Error::InvalidArgument("need at least 2 time slices".into()));
        }
        if docs.is_empty() {
            return Err(Error::Empty("no documents to slice"));
        }
        let mut stamped = Vec::with_capacity(docs.len());
        for d in docs {
            let tweet = corpus.get(d.tweet_id).ok_or_else(|| {
                Error::InvalidArgument(format!("document {} is not in the corpus", d.tweet_id))
            })?;
            stamped.push((tweet.timestamp, d));
        }
        stamped.sort_by_key(|(ts, d)| (*ts, d.tweet_id));
        let min_ts = stamped[0].0;
        let span = stamped[stamped.len() - 1].0 - min_ts;
        if span <= 0 {
            return Err(Error::InvalidArgument(
                "all tweets share one timestamp; cannot slice".into(),
            ));
        }
        if (span as u128) < num_slices as u128 {
            return Err(Error::InvalidArgument(format!(
                "time span of {span}s is shorter than {num_slices} slices"
            )));
        }

        let mut vocab: BTreeMap<&str, u32> = BTreeMap::new();
        for (_, d) in &stamped {
            for t in &d.tokens {
                vocab.insert(t.as_str(), 0);
            }
        }
        for (i, v) in vocab.values_mut().enumerate() {
            *v = i as u32;
        }
        let terms: Vec<String> = vocab.keys().map(|s| s.to_string()).collect();
        let mut term_counts = vec![vec![0u32; num_slices]; terms.len()];
        let mut slice_docs = vec![Vec::new(); num_slices];
        let mut out_docs = Vec::with_capacity(stamped.len());
        for (ts, d) in &stamped {
            let slice = bin_of(ts - min_ts, span, num_slices);
            let tokens: Vec<u32> = d.tokens.iter().map(|t| vocab[t.as_str()]).collect();
            let mut distinct = tokens.clone();
            distinct.sort_unstable();
            distinct.dedup();
            for t in distinct {
                term_counts[t as usize][slice] += 1;
            }
            slice_docs[slice].push(out_docs.len());
            out_docs.push(SliceDoc {
                id: d.tweet_id,
                timestamp: *ts,
                tokens,
            });
        }
        let term_index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(TimeSlices {
            min_ts,
            span,
            num_slices,
            terms,
            term_index,
            docs: out_docs,
            slice_docs,
            term_counts,
        })
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    /// Slice boundaries: `num_slices + 1` increasing values; slice `i` holds
    /// timestamps in `[b[i], b[i+1])`, the last one also `b[n]`.
    pub fn boundaries(&self) -> Vec<i64> {
        let mut b: Vec<i64> = (0..self.num_slices)
            .map(|i| self.min_ts + bin_start(i, self.span, self.num_slices))
            .collect();
        b.push(self.min_ts + self.span);
        b
    }

    /// Inclusive timestamp bounds of slices `a..=b`.
    pub fn interval(&self, a: usize, b: usize) -> (i64, i64) {
        let bounds = self.boundaries();
        let end = if b + 1 == self.num_slices {
            bounds[self.num_slices]
        } else {
            bounds[b + 1] - 1
        };
        (bounds[a], end)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term_id(&self, term: &str) -> Option<usize> {
        self.term_index.get(term).map(|&i| i as usize)
    }

    /// `N_t^i` for every slice `i`.
    pub fn series(&self, term: &str) -> Option<&[u32]> {
        self.term_id(term).map(|t| self.term_counts[t].as_slice())
    }

    pub(crate) fn series_by_id(&self, term: usize) -> &[u32] {
        &self.term_counts[term]
    }

    /// `N^i`: tweets per slice.
    pub fn totals(&self) -> Vec<u32> {
        self.slice_docs.iter().map(|d| d.len() as u32).collect()
    }

    /// Tweet ids of slice `i`, in time order.
    pub fn slice_ids(&self, i: usize) -> Vec<u64> {
        self.slice_docs[i].iter().map(|&d| self.docs[d].id).collect()
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub(crate) fn docs(&self) -> &[SliceDoc] {
        &self.docs
    }

    pub(crate) fn slice_doc_indices(&self, i: usize) -> &[usize] {
        &self.slice_docs[i]
    }
}

/// One line of the event report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub method: EventMethod,
    pub magnitude: f64,
    pub start: String,
    pub end: String,
    pub keywords: Vec<String>,
    pub tweet_count: usize,
}

impl From<&Event> for EventRecord {
    fn from(e: &Event) -> Self {
        EventRecord {
            method: e.method,
            magnitude: e.magnitude,
            start: format_iso(e.start),
            end: format_iso(e.end),
            keywords: e.terms().map(String::from).collect(),
            tweet_count: e.tweet_ids.len(),
        }
    }
}

pub fn events_json(events: &[Event]) -> Result<String> {
    let records: Vec<EventRecord> = events.iter().map(EventRecord::from).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

/// Fixed-width table with Magnitude, Start Date, End Date and Topic columns.
pub fn events_table(events: &[Event]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>12}  {:<19}  {:<19}  Topic", "Magnitude", "Start Date", "End Date");
    for e in events {
        let topic: Vec<&str> = e.terms().collect();
        let _ = writeln!(
            out,
            "{:>12.2}  {:<19}  {:<19}  {}",
            e.magnitude,
            format_iso(e.start),
            format_iso(e.end),
            topic.join(", ")
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub num_slices: usize,
    pub top_k: usize,
    pub dedup: bool,
    pub mabed: MabedConfig,
    pub olda: OldaConfig,
    pub peaky: PeakyConfig,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            num_slices: 32,
            top_k: 50,
            dedup: true,
            mabed: MabedConfig::default(),
            olda: OldaConfig::default(),
            peaky: PeakyConfig::default(),
        }
    }
}

/// Slice the documents and run `method`.
pub fn detect(
    method: EventMethod,
    corpus: &Corpus,
    docs: &[TokenizedDoc],
    config: &DetectConfig,
    seed: u64,
) -> Result<Vec<Event>> {
    let slices = TimeSlices::build(corpus, docs, config.num_slices)?;
    let dedup = config.dedup.then_some(DEDUP_SHARED_KEYWORDS);
    match method {
        EventMethod::Mabed => mabed_detect(&slices, config.top_k, dedup, &config.mabed),
        EventMethod::Olda => olda_detect(&slices, config.top_k, dedup, &config.olda, seed),
        EventMethod::PeakyTopics => peaky_detect(&slices, config.top_k, dedup, &config.peaky),
    }
}

/// Events sharing this many keywords are treated as duplicates.
pub const DEDUP_SHARED_KEYWORDS: usize = 5;

/// Rank, optionally deduplicate, and truncate.
pub(crate) fn finish(mut events: Vec<Event>, top_k: usize, dedup: Option<usize>) -> Vec<Event> {
    events.sort_by(rank_order);
    if let Some(t) = dedup {
        events = dedup_events(events, t);
    }
    events.truncate(top_k);
    events
}
