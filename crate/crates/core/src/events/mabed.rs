//! MABED: main words ranked by their largest run of anomalous mentions, each
//! described by the co-occurring words whose first-difference series
//! correlate best with the main word's.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dedup_events, Event, EventMethod, Keyword, TimeSlices, KEYWORDS_PER_EVENT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MabedConfig {
    /// Co-occurring words scored as keyword candidates for each main word.
    pub candidate_pool: usize,
    /// Minimum number of tweets mentioning a main word.
    pub min_support: u32,
}

impl Default for MabedConfig {
    fn default() -> Self {
        MabedConfig {
            candidate_pool: 30,
            min_support: 3,
        }
    }
}

/// Weight `(ρ + 1) / 2` of a candidate word, where `ρ` is the first-order
/// autocorrelation of the two mention series over slices `(a, b]`.
/// Constant series have undefined `ρ` and get the neutral weight 0.5.
pub fn mabed_candidate_weight(series_t: &[f64], series_tq: &[f64], a: usize, b: usize) -> Result<f64> {
    if b <= a + 1 {
        return Err(Error::InvalidArgument(format!(
            "candidate weight needs b > a + 1 (a={a}, b={b})"
        )));
    }
    if b >= series_t.len() || b >= series_tq.len() {
        return Err(Error::InvalidArgument(format!(
            "slice {b} beyond series of length {}",
            series_t.len().min(series_tq.len())
        )));
    }
    let (mut cross, mut sq_t, mut sq_q) = (0.0, 0.0, 0.0);
    for i in a + 1..=b {
        let dt = series_t[i] - series_t[i - 1];
        let dq = series_tq[i] - series_tq[i - 1];
        cross += dt * dq;
        sq_t += dt * dt;
        sq_q += dq * dq;
    }
    if sq_t == 0.0 || sq_q == 0.0 {
        return Ok(0.5);
    }
    let norm = (b - a - 1) as f64;
    let a_t = (sq_t / norm).sqrt();
    let a_q = (sq_q / norm).sqrt();
    let rho = (cross / (norm * a_t * a_q)).clamp(-1.0, 1.0);
    Ok((rho + 1.0) / 2.0)
}

/// Maximum-sum contiguous run `(sum, a, b)`; earliest run wins ties.
fn max_subarray(values: &[f64]) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    let (mut cur, mut start) = (0.0, 0);
    for (i, &v) in values.iter().enumerate() {
        if cur <= 0.0 {
            cur = 0.0;
            start = i;
        }
        cur += v;
        if cur > 0.0 && best.is_none_or(|(s, _, _)| cur > s) {
            best = Some((cur, start, i));
        }
    }
    best
}

struct Burst {
    term: usize,
    magnitude: f64,
    a: usize,
    b: usize,
}

/// Widen `[a, b]` to at least three slices so the correlation is defined.
fn correlation_window(a: usize, b: usize, n: usize) -> Option<(usize, usize)> {
    let (mut lo, mut hi) = (a, b);
    while hi - lo < 2 {
        if lo > 0 {
            lo -= 1;
        } else if hi + 1 < n {
            hi += 1;
        } else {
            return None;
        }
    }
    Some((lo, hi))
}

fn build_event(slices: &TimeSlices, burst: &Burst, config: &MabedConfig) -> Result<Event> {
    let main = burst.term as u32;
    let mut cooc: HashMap<u32, u32> = HashMap::new();
    for s in burst.a..=burst.b {
        for &d in slices.slice_doc_indices(s) {
            let tokens = &slices.docs()[d].tokens;
            if !tokens.contains(&main) {
                continue;
            }
            let distinct: HashSet<u32> = tokens.iter().copied().filter(|&t| t != main).collect();
            for t in distinct {
                *cooc.entry(t).or_insert(0) += 1;
            }
        }
    }
    let mut pool: Vec<(u32, u32)> = cooc.into_iter().collect();
    pool.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    pool.truncate(config.candidate_pool);

    let to_f64 = |s: &[u32]| s.iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let main_series = to_f64(slices.series_by_id(burst.term));
    let window = correlation_window(burst.a, burst.b, slices.num_slices());
    let mut scored = Vec::with_capacity(pool.len());
    for (t, count) in pool {
        let w = match window {
            Some((lo, hi)) => {
                mabed_candidate_weight(&main_series, &to_f64(slices.series_by_id(t as usize)), lo, hi)?
            }
            None => 0.5,
        };
        scored.push((t, w, count));
    }
    scored.sort_by(|x, y| {
        y.1.total_cmp(&x.1)
            .then(y.2.cmp(&x.2))
            .then_with(|| slices.terms()[x.0 as usize].cmp(&slices.terms()[y.0 as usize]))
    });
    scored.truncate(KEYWORDS_PER_EVENT - 1);

    let mut keywords = vec![Keyword {
        term: slices.terms()[burst.term].clone(),
        weight: 1.0,
    }];
    keywords.extend(scored.iter().map(|&(t, w, _)| Keyword {
        term: slices.terms()[t as usize].clone(),
        weight: w,
    }));
    let keyword_ids: HashSet<u32> = std::iter::once(main).chain(scored.iter().map(|s| s.0)).collect();
    let mut tweet_ids: Vec<u64> = (burst.a..=burst.b)
        .flat_map(|s| slices.slice_doc_indices(s).iter())
        .map(|&d| &slices.docs()[d])
        .filter(|d| d.tokens.iter().any(|t| keyword_ids.contains(t)))
        .map(|d| d.id)
        .collect();
    tweet_ids.sort_unstable();
    let (start, end) = slices.interval(burst.a, burst.b);
    Ok(Event {
        method: EventMethod::Mabed,
        keywords,
        start,
        end,
        magnitude: burst.magnitude,
        tweet_ids,
    })
}

/// Detect up to `top_k` events. Each word's anomaly in slice `i` is
/// `N_t^i - N_t * N^i / N`; its event interval is the maximum-sum run of
/// anomalies and the magnitude is that sum.
pub fn mabed_detect(
    slices: &TimeSlices,
    top_k: usize,
    dedup: Option<usize>,
    config: &MabedConfig,
) -> Result<Vec<Event>> {
    if top_k == 0 {
        return Ok(Vec::new());
    }
    let totals: Vec<f64> = slices.totals().iter().map(|&v| v as f64).collect();
    let n_docs = slices.num_docs() as f64;
    let mut bursts: Vec<Burst> = (0..slices.terms().len())
        .into_par_iter()
        .filter_map(|term| {
            let series = slices.series_by_id(term);
            let n_t: u32 = series.iter().sum();
            if n_t < config.min_support.max(1) {
                return None;
            }
            let anomaly: Vec<f64> = series
                .iter()
                .zip(&totals)
                .map(|(&c, &n_i)| c as f64 - n_t as f64 * n_i / n_docs)
                .collect();
            let (magnitude, a, b) = max_subarray(&anomaly)?;
            (magnitude > 1e-9).then_some(Burst { term, magnitude, a, b })
        })
        .collect();
    if bursts.is_empty() {
        return Err(Error::NoBurst);
    }
    bursts.sort_by(|x, y| {
        y.magnitude
            .total_cmp(&x.magnitude)
            .then(x.a.cmp(&y.a))
            .then(x.term.cmp(&y.term))
    });

    let mut events: Vec<Event> = Vec::new();
    // Build events in parallel batches, then accept them in rank order.
    let batch = (top_k * 2).max(16);
    for chunk in bursts.chunks(batch) {
        let built: Vec<Event> = chunk
            .par_iter()
            .map(|b| build_event(slices, b, config))
            .collect::<Result<_>>()?;
        for e in built {
            events.push(e);
            if let Some(t) = dedup {
                events = dedup_events(events, t);
            }
            if events.len() == top_k {
                return Ok(events);
            }
        }
    }
    Ok(events)
}
