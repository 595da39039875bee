//! Peaky Topics: each slice is cut into sub-bins; a sub-bin whose tweet count
//! stands out from the other sub-bins of its slice is a spike, described by
//! its highest TF-IDF terms with sub-bins as documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{finish, keyword_order, Event, EventMethod, Keyword, TimeSlices, KEYWORDS_PER_EVENT};
use crate::error::{Error, Result};
use crate::vectorize::tfidf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakyConfig {
    pub sub_bins: usize,
    pub z_thresh: f64,
    /// Lower bound on the standard deviation of the other sub-bins, so a
    /// single extra tweet over a perfectly flat slice is not a spike.
    pub std_floor: f64,
}

impl Default for PeakyConfig {
    fn default() -> Self {
        PeakyConfig {
            sub_bins: 8,
            z_thresh: 2.0,
            std_floor: 1.0,
        }
    }
}

/// For each sub-bin, `Some(z)` if its count exceeds the mean of the other
/// sub-bins by more than `z_thresh` standard deviations (population, floored
/// at `std_floor`); `z` is that excess in deviations.
pub fn spike_scores(counts: &[u32], z_thresh: f64, std_floor: f64) -> Vec<Option<f64>> {
    let n = counts.len();
    if n < 2 {
        return vec![None; n];
    }
    let sum: f64 = counts.iter().map(|&c| c as f64).sum();
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64).powi(2)).sum();
    counts
        .iter()
        .map(|&c| {
            let c = c as f64;
            let m = (n - 1) as f64;
            let mean = (sum - c) / m;
            let var = ((sum_sq - c * c) / m - mean * mean).max(0.0);
            let std = var.sqrt().max(std_floor);
            let z = (c - mean) / std;
            (c > mean + z_thresh * std).then_some(z)
        })
        .collect()
}

struct SubBin {
    start: i64,
    end: i64,
    docs: Vec<usize>,
    term_freq: BTreeMap<u32, u32>,
    len: usize,
}

fn sub_bins(slices: &TimeSlices, slice: usize, n: usize) -> Vec<SubBin> {
    let (lo, hi) = slices.interval(slice, slice);
    let width = (hi - lo + 1) as i128;
    let bound = |j: usize| lo + ((j as i128 * width + n as i128 - 1) / n as i128) as i64;
    let mut bins: Vec<SubBin> = (0..n)
        .map(|j| SubBin {
            start: bound(j),
            end: bound(j + 1) - 1,
            docs: Vec::new(),
            term_freq: BTreeMap::new(),
            len: 0,
        })
        .collect();
    for &d in slices.slice_doc_indices(slice) {
        let doc = &slices.docs()[d];
        let j = (((doc.timestamp - lo) as i128 * n as i128) / width) as usize;
        let bin = &mut bins[j.min(n - 1)];
        bin.docs.push(d);
        bin.len += doc.tokens.len();
        for &t in &doc.tokens {
            *bin.term_freq.entry(t).or_insert(0) += 1;
        }
    }
    bins
}

pub fn peaky_detect(
    slices: &TimeSlices,
    top_k: usize,
    dedup: Option<usize>,
    config: &PeakyConfig,
) -> Result<Vec<Event>> {
    if config.sub_bins < 3 {
        return Err(Error::InvalidArgument("Peaky Topics needs at least 3 sub-bins".into()));
    }
    let bins: Vec<Vec<SubBin>> = (0..slices.num_slices())
        .map(|s| sub_bins(slices, s, config.sub_bins))
        .collect();
    let documents: Vec<&SubBin> = bins.iter().flatten().filter(|b| b.len > 0).collect();
    if documents.is_empty() {
        return Err(Error::Empty("every sub-bin is empty"));
    }
    let mut doc_freq: BTreeMap<u32, usize> = BTreeMap::new();
    for b in &documents {
        for &t in b.term_freq.keys() {
            *doc_freq.entry(t).or_insert(0) += 1;
        }
    }
    let n = documents.len();

    let mut events = Vec::new();
    for slice_bins in &bins {
        let counts: Vec<u32> = slice_bins.iter().map(|b| b.docs.len() as u32).collect();
        for (bin, z) in slice_bins
            .iter()
            .zip(spike_scores(&counts, config.z_thresh, config.std_floor))
        {
            let Some(z) = z else { continue };
            if bin.len == 0 {
                continue;
            }
            let mut keywords = bin
                .term_freq
                .iter()
                .map(|(&t, &f)| {
                    Ok(Keyword {
                        term: slices.terms()[t as usize].clone(),
                        weight: tfidf(f as f64, bin.len, n, doc_freq[&t])?,
                    })
                })
                .collect::<Result<Vec<Keyword>>>()?;
            keywords.sort_by(keyword_order);
            keywords.truncate(KEYWORDS_PER_EVENT);
            let mut tweet_ids: Vec<u64> = bin.docs.iter().map(|&d| slices.docs()[d].id).collect();
            tweet_ids.sort_unstable();
            events.push(Event {
                method: EventMethod::PeakyTopics,
                keywords,
                start: bin.start,
                end: bin.end,
                magnitude: bin.docs.len() as f64 * z,
                tweet_ids,
            });
        }
    }
    Ok(finish(events, top_k, dedup))
}
