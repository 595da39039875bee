//! Online LDA: a collapsed Gibbs sampler run slice by slice, each slice's
//! topic-term prior pulled toward the previous slice's topics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{finish, keyword_order, Event, EventMethod, Keyword, TimeSlices, KEYWORDS_PER_EVENT};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OldaConfig {
    pub k: usize,
    pub iters: usize,
    /// Weight of the previous slice's topics in the prior.
    pub lambda: f64,
    /// Symmetric document-topic prior; `50 / k` when absent.
    pub alpha: Option<f64>,
    pub beta0: f64,
    /// Topics with fewer member documents emit no event.
    pub min_docs: usize,
}

impl Default for OldaConfig {
    fn default() -> Self {
        OldaConfig {
            k: 50,
            iters: 200,
            lambda: 0.5,
            alpha: None,
            beta0: 0.01,
            min_docs: 2,
        }
    }
}

/// Collapsed Gibbs sampler state for one batch of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct OldaState {
    k: usize,
    v: usize,
    alpha: f64,
    /// `K x V` topic-term prior, row-major by topic.
    beta: Vec<f64>,
    beta_sum: Vec<f64>,
    docs: Vec<Vec<u32>>,
    z: Vec<Vec<u32>>,
    /// `V x K` term-topic counts.
    cvk: Vec<u32>,
    /// `D x K` document-topic counts.
    cdk: Vec<u32>,
    /// Tokens per topic.
    nk: Vec<u32>,
}

impl OldaState {
    /// Random initial assignments. `beta` is `K x V`.
    pub fn new<R: Rng>(
        docs: Vec<Vec<u32>>,
        v: usize,
        k: usize,
        alpha: f64,
        beta: Vec<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one topic".into()));
        }
        if beta.len() != k * v {
            return Err(Error::DimensionMismatch {
                expected: k * v,
                got: beta.len(),
            });
        }
        if !(alpha > 0.0) || beta.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidArgument("priors must be positive and finite".into()));
        }
        if let Some(&w) = docs.iter().flatten().find(|&&w| w as usize >= v) {
            return Err(Error::InvalidArgument(format!("term id {w} outside vocabulary of {v}")));
        }
        let beta_sum = beta.chunks(v.max(1)).map(|row| row.iter().sum()).collect();
        let mut state = OldaState {
            k,
            v,
            alpha,
            beta,
            beta_sum,
            z: docs.iter().map(|d| vec![0; d.len()]).collect(),
            cvk: vec![0; v * k],
            cdk: vec![0; docs.len() * k],
            nk: vec![0; k],
            docs,
        };
        for d in 0..state.docs.len() {
            for i in 0..state.docs[d].len() {
                let j = rng.random_range(0..k);
                state.z[d][i] = j as u32;
                state.add(d, i, 1);
            }
        }
        Ok(state)
    }

    pub fn uniform_beta(k: usize, v: usize, beta0: f64) -> Vec<f64> {
        vec![beta0; k * v]
    }

    fn add(&mut self, d: usize, i: usize, delta: i32) {
        let (w, j) = (self.docs[d][i] as usize, self.z[d][i] as usize);
        let apply = |c: &mut u32| *c = c.checked_add_signed(delta).expect("count underflow");
        apply(&mut self.cvk[w * self.k + j]);
        apply(&mut self.cdk[d * self.k + j]);
        apply(&mut self.nk[j]);
    }

    /// Unnormalized conditional of token `i` of doc `d`, with the token's own
    /// assignment removed from every count:
    ///
    /// `(C^VK[w,j] + β[j,w]) / (Σ_v C^VK[v,j] + Σ_v β[j,v])
    ///  * (C^DK[d,j] + α) / (Σ_k C^DK[d,k] + K α)`
    fn weights(&self, d: usize, i: usize, out: &mut [f64]) {
        let w = self.docs[d][i] as usize;
        let cur = self.z[d][i] as usize;
        let doc_len = (self.docs[d].len() - 1) as f64;
        let doc_norm = doc_len + self.k as f64 * self.alpha;
        for (j, o) in out.iter_mut().enumerate() {
            let own = (j == cur) as u32;
            let c_wj = (self.cvk[w * self.k + j] - own) as f64;
            let c_j = (self.nk[j] - own) as f64;
            let c_dj = (self.cdk[d * self.k + j] - own) as f64;
            let term = (c_wj + self.beta[j * self.v + w]) / (c_j + self.beta_sum[j]);
            *o = term * (c_dj + self.alpha) / doc_norm;
        }
    }

    /// Normalized conditional distribution over topics for one token.
    pub fn conditional(&self, d: usize, i: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.k];
        self.weights(d, i, &mut p);
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        p
    }

    /// Draw a new topic for one token and update the counts.
    pub fn resample_token<R: Rng>(&mut self, d: usize, i: usize, rng: &mut R) -> usize {
        let mut p = vec![0.0; self.k];
        self.resample_with(d, i, rng, &mut p)
    }

    fn resample_with<R: Rng>(&mut self, d: usize, i: usize, rng: &mut R, p: &mut [f64]) -> usize {
        self.weights(d, i, p);
        let total: f64 = p.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut j = self.k - 1;
        for (t, &pt) in p.iter().enumerate() {
            if u < pt {
                j = t;
                break;
            }
            u -= pt;
        }
        self.add(d, i, -1);
        self.z[d][i] = j as u32;
        self.add(d, i, 1);
        j
    }

    /// One sweep resampling every token in document order.
    pub fn gibbs_step<R: Rng>(&mut self, rng: &mut R) {
        let mut p = vec![0.0; self.k];
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                self.resample_with(d, i, rng, &mut p);
            }
        }
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn topic_of(&self, d: usize, i: usize) -> usize {
        self.z[d][i] as usize
    }

    pub fn doc_topic_counts(&self, d: usize) -> &[u32] {
        &self.cdk[d * self.k..(d + 1) * self.k]
    }

    pub fn term_topic_count(&self, w: usize, j: usize) -> u32 {
        self.cvk[w * self.k + j]
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.nk
    }

    /// Most frequent topic of a document, lowest index on ties; `None` for
    /// an empty document.
    pub fn dominant_topic(&self, d: usize) -> Option<usize> {
        let counts = self.doc_topic_counts(d);
        let max = *counts.iter().max()?;
        (max > 0).then(|| counts.iter().position(|&c| c == max).unwrap())
    }

    /// Smoothed topic-term distributions, `K x V`.
    pub fn phi(&self) -> Vec<f64> {
        let mut phi = vec![0.0; self.k * self.v];
        for j in 0..self.k {
            let denom = self.nk[j] as f64 + self.beta_sum[j];
            for w in 0..self.v {
                phi[j * self.v + w] = (self.cvk[w * self.k + j] as f64 + self.beta[j * self.v + w]) / denom;
            }
        }
        phi
    }

    /// Recount from the assignments and compare with the running counts.
    pub fn counts_consistent(&self) -> bool {
        let mut cvk = vec![0u32; self.v * self.k];
        let mut cdk = vec![0u32; self.docs.len() * self.k];
        let mut nk = vec![0u32; self.k];
        for (d, doc) in self.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let j = self.z[d][i] as usize;
                cvk[w as usize * self.k + j] += 1;
                cdk[d * self.k + j] += 1;
                nk[j] += 1;
            }
        }
        cvk == self.cvk && cdk == self.cdk && nk == self.nk
    }
}

/// Run the sampler slice by slice; every topic with at least `min_docs`
/// documents (by dominant topic) in a slice becomes an event whose
/// magnitude is its member count.
pub fn olda_detect(
    slices: &TimeSlices,
    top_k: usize,
    dedup: Option<usize>,
    config: &OldaConfig,
    seed: u64,
) -> Result<Vec<Event>> {
    let k = config.k;
    let v = slices.terms().len();
    if k < 2 {
        return Err(Error::InvalidArgument("online LDA needs at least 2 topics".into()));
    }
    if k > v {
        return Err(Error::InvalidArgument(format!(
            "{k} topics exceed the vocabulary of {v} terms"
        )));
    }
    if !(0.0..=1.0).contains(&config.lambda) {
        return Err(Error::InvalidArgument("lambda must lie in [0, 1]".into()));
    }
    let alpha = config.alpha.unwrap_or(50.0 / k as f64);
    let mut rng = seed::rng(seed);
    let mut phi_prev: Option<Vec<f64>> = None;
    let mut events = Vec::new();

    for s in 0..slices.num_slices() {
        let members = slices.slice_doc_indices(s);
        if members.is_empty() {
            continue;
        }
        let beta = match &phi_prev {
            None => OldaState::uniform_beta(k, v, config.beta0),
            Some(phi) => phi
                .iter()
                .map(|p| config.lambda * p * v as f64 + (1.0 - config.lambda) * config.beta0)
                .collect(),
        };
        let docs: Vec<Vec<u32>> = members.iter().map(|&d| slices.docs()[d].tokens.clone()).collect();
        let mut state = OldaState::new(docs, v, k, alpha, beta, &mut rng)?;
        for _ in 0..config.iters {
            state.gibbs_step(&mut rng);
        }
        let phi = state.phi();

        let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (local, &d) in members.iter().enumerate() {
            if let Some(j) = state.dominant_topic(local) {
                by_topic[j].push(d);
            }
        }
        for (j, docs) in by_topic.iter().enumerate() {
            if docs.is_empty() || docs.len() < config.min_docs {
                continue;
            }
            let mut keywords: Vec<(u32, Keyword)> = (0..v)
                .filter_map(|w| {
                    let c = state.term_topic_count(w, j);
                    (c > 0).then(|| {
                        (
                            c,
                            Keyword {
                                term: slices.terms()[w].clone(),
                                weight: phi[j * v + w],
                            },
                        )
                    })
                })
                .collect();
            keywords.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| keyword_order(&a.1, &b.1)));
            keywords.truncate(KEYWORDS_PER_EVENT);
            let mut keywords: Vec<Keyword> = keywords.into_iter().map(|(_, kw)| kw).collect();
            keywords.sort_by(keyword_order);
            let stamps = docs.iter().map(|&d| slices.docs()[d].timestamp);
            let start = stamps.clone().min().unwrap();
            let end = stamps.max().unwrap();
            let mut tweet_ids: Vec<u64> = docs.iter().map(|&d| slices.docs()[d].id).collect();
            tweet_ids.sort_unstable();
            events.push(Event {
                method: EventMethod::Olda,
                keywords,
                start,
                end,
                magnitude: docs.len() as f64,
                tweet_ids,
            });
        }
        phi_prev = Some(phi);
    }
    Ok(finish(events, top_k, dedup))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::tests::corpus_from;

    fn toy_state(seed: u64) -> OldaState {
        // 6 tokens over 3 terms in 2 documents
        let docs = vec![vec![0, 1, 0], vec![2, 1, 2]];
        let mut beta = OldaState::uniform_beta(2, 3, 0.1);
        beta[4] = 0.7;
        OldaState::new(docs, 3, 2, 0.5, beta, &mut seed::rng(seed)).unwrap()
    }

    #[test]
    fn counts_are_conserved() {
        let mut s = toy_state(1);
        let mut rng = seed::rng(2);
        for _ in 0..50 {
            s.gibbs_step(&mut rng);
            assert!(s.counts_consistent());
            assert_eq!(s.doc_topic_counts(0).iter().sum::<u32>(), 3);
            assert_eq!(s.doc_topic_counts(1).iter().sum::<u32>(), 3);
        }
    }

    #[test]
    fn single_topic_is_certain() {
        let mut s = OldaState::new(vec![vec![0, 1]], 2, 1, 1.0, vec![0.1, 0.1], &mut seed::rng(0)).unwrap();
        assert_eq!(s.conditional(0, 1), [1.0]);
        s.gibbs_step(&mut seed::rng(1));
        assert_eq!(s.topic_of(0, 0), 0);
    }

    /// The conditional written out from scratch over recounted statistics.
    fn direct_conditional(docs: &[Vec<u32>], z: &[Vec<usize>], d: usize, i: usize, k: usize, alpha: f64, beta: &[f64], v: usize) -> Vec<f64> {
        let w = docs[d][i] as usize;
        let mut p = Vec::new();
        for j in 0..k {
            let mut c_wj = 0.0;
            let mut c_j = 0.0;
            for (dd, doc) in docs.iter().enumerate() {
                for (ii, &ww) in doc.iter().enumerate() {
                    if (dd, ii) == (d, i) || z[dd][ii] != j {
                        continue;
                    }
                    c_j += 1.0;
                    if ww as usize == w {
                        c_wj += 1.0;
                    }
                }
            }
            let c_dj = (0..docs[d].len()).filter(|&ii| ii != i && z[d][ii] == j).count() as f64;
            let beta_row: f64 = beta[j * v..(j + 1) * v].iter().sum();
            let doc_norm = (docs[d].len() - 1) as f64 + k as f64 * alpha;
            p.push((c_wj + beta[j * v + w]) / (c_j + beta_row) * (c_dj + alpha) / doc_norm);
        }
        let total: f64 = p.iter().sum();
        p.into_iter().map(|x| x / total).collect()
    }

    #[test]
    fn conditional_matches_direct_formula() {
        let s = toy_state(4);
        let z: Vec<Vec<usize>> = (0..2).map(|d| (0..3).map(|i| s.topic_of(d, i)).collect()).collect();
        for d in 0..2 {
            for i in 0..3 {
                let want = direct_conditional(&s.docs, &z, d, i, 2, 0.5, &s.beta, 3);
                let got = s.conditional(d, i);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12);
                }
                assert!(got.iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn sampling_frequencies_match_conditional() {
        let mut s = toy_state(7);
        let (d, i) = (1, 1);
        let p = s.conditional(d, i);
        let mut rng = seed::rng(8);
        let mut hits = [0usize; 2];
        let n = 100_000;
        for _ in 0..n {
            hits[s.resample_token(d, i, &mut rng)] += 1;
        }
        for j in 0..2 {
            assert!((hits[j] as f64 / n as f64 - p[j]).abs() < 0.01, "{hits:?} vs {p:?}");
        }
    }

    fn two_vocab_corpus(seed: u64) -> (crate::corpus::Corpus, Vec<crate::preprocess::TokenizedDoc>, Vec<bool>) {
        let mut rng = seed::rng(seed);
        let mut rows = Vec::new();
        let mut first = Vec::new();
        for t in 0..200i64 {
            let is_a = rng.random_bool(0.5);
            let vocab = if is_a { ["a", "b", "c"] } else { ["x", "y", "z"] };
            let text: Vec<&str> = (0..8).map(|_| vocab[rng.random_range(0..3)]).collect();
            rows.push((t * 10, text.join(" ")));
            first.push(is_a);
        }
        let rows_ref: Vec<(i64, &str)> = rows.iter().map(|(t, s)| (*t, s.as_str())).collect();
        let (c, d) = corpus_from(&rows_ref);
        (c, d, first)
    }

    #[test]
    fn recovers_two_vocabularies() {
        let (c, d, is_a) = two_vocab_corpus(3);
        let slices = TimeSlices::build(&c, &d, 2).unwrap();
        let cfg = OldaConfig {
            k: 2,
            ..Default::default()
        };
        let events = olda_detect(&slices, 50, None, &cfg, 9).unwrap();
        assert!(!events.is_empty());
        let total: f64 = events.iter().map(|e| e.magnitude).sum();
        assert!(total <= c.len() as f64);
        for e in &events {
            let a = e.tweet_ids.iter().filter(|&&id| is_a[id as usize - 1]).count();
            let purity = a.max(e.tweet_ids.len() - a) as f64 / e.tweet_ids.len() as f64;
            assert!(purity > 0.95, "purity {purity}");
            assert!(e.tweet_ids.iter().all(|&id| {
                let ts = c.get(id).unwrap().timestamp;
                ts >= e.start && ts <= e.end
            }));
        }
        assert_eq!(olda_detect(&slices, 50, None, &cfg, 9).unwrap(), events);
    }

    #[test]
    fn too_many_topics() {
        let (c, d, _) = two_vocab_corpus(1);
        let slices = TimeSlices::build(&c, &d, 2).unwrap();
        let cfg = OldaConfig {
            k: 7,
            ..Default::default()
        };
        assert!(olda_detect(&slices, 5, None, &cfg, 0).is_err());
    }
}
