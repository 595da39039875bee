//! Tweet corpus: CSV ingestion, NDJSON dumps and stratified subsets.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Sentiment class. The derived order `Negative < Neutral < Positive` is the
/// tie-break order used by every vote in the crate.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];

    /// Sentiment140 polarity code: 0, 2 or 4.
    pub fn from_polarity(code: &str) -> Option<Self> {
        match code.trim() {
            "0" => Some(SentimentLabel::Negative),
            "2" => Some(SentimentLabel::Neutral),
            "4" => Some(SentimentLabel::Positive),
            _ => None,
        }
    }

    pub fn polarity(self) -> u8 {
        match self {
            SentimentLabel::Negative => 0,
            SentimentLabel::Neutral => 2,
            SentimentLabel::Positive => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "negative" | "neg" | "-" => Ok(SentimentLabel::Negative),
            "neutral" | "neu" => Ok(SentimentLabel::Neutral),
            "positive" | "pos" | "+" => Ok(SentimentLabel::Positive),
            other => SentimentLabel::from_polarity(other)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: u64,
    /// Epoch seconds, UTC.
    pub timestamp: i64,
    pub label: Option<SentimentLabel>,
    pub user: String,
    /// Original text, entities and all.
    pub text: String,
}

/// Immutable, timestamp-ordered set of tweets with unique ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    tweets: Vec<Tweet>,
    by_id: HashMap<u64, usize>,
}

impl Corpus {
    /// Sorts by `(timestamp, id)` and rejects duplicate ids and blank texts.
    pub fn new(mut tweets: Vec<Tweet>) -> Result<Self> {
        tweets.sort_by_key(|t| (t.timestamp, t.id));
        let mut by_id = HashMap::with_capacity(tweets.len());
        for (i, t) in tweets.iter().enumerate() {
            if t.text.trim().is_empty() {
                return Err(Error::InvalidArgument(format!("tweet {} has empty text", t.id)));
            }
            if by_id.insert(t.id, i).is_some() {
                return Err(Error::DuplicateId(t.id));
            }
        }
        Ok(Corpus { tweets, by_id })
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Tweet> {
        self.tweets.iter()
    }

    /// `(min, max)` timestamp, `None` for an empty corpus.
    pub fn span(&self) -> Option<(i64, i64)> {
        Some((self.tweets.first()?.timestamp, self.tweets.last()?.timestamp))
    }

    pub fn get(&self, id: u64) -> Option<&Tweet> {
        self.by_id.get(&id).map(|&i| &self.tweets[i])
    }

    /// Labels in corpus order; fails if any tweet is unlabeled.
    pub fn labels(&self) -> Result<Vec<SentimentLabel>> {
        self.tweets
            .iter()
            .map(|t| t.label.ok_or(Error::Unlabeled))
            .collect()
    }

    /// New corpus holding the tweets at `indices` (positions in this corpus).
    pub fn select(&self, indices: &[usize]) -> Corpus {
        let tweets = indices.iter().map(|&i| self.tweets[i].clone()).collect();
        Corpus::new(tweets).expect("subset of a valid corpus is valid")
    }

    /// Drop tweets whose label is not in `keep` (or unlabeled tweets).
    pub fn filter_labels(&self, keep: &[SentimentLabel]) -> Corpus {
        let tweets = self
            .tweets
            .iter()
            .filter(|t| t.label.is_some_and(|l| keep.contains(&l)))
            .cloned()
            .collect();
        Corpus::new(tweets).expect("subset of a valid corpus is valid")
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Tweet;
    type IntoIter = std::slice::Iter<'a, Tweet>;

    fn into_iter(self) -> Self::IntoIter {
        self.tweets.iter()
    }
}

/// Row accounting from [`parse_csv`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub rows: usize,
    pub parsed: usize,
    pub malformed: usize,
    /// Rows skipped because an earlier row had the same id.
    pub duplicates: usize,
}

const DAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

fn zone_offset(zone: &str) -> Option<i64> {
    match zone {
        "UTC" | "GMT" => Some(0),
        "PDT" => Some(-7 * 3600),
        "PST" => Some(-8 * 3600),
        _ => None,
    }
}

/// Parse `DOW Mon DD HH:MM:SS TZ YYYY` into epoch seconds.
pub fn parse_date(s: &str) -> Result<i64> {
    let bad = || Error::BadDate(s.to_string());
    let parts: Vec<&str> = s.split_whitespace().collect();
    let [dow, mon, day, time, zone, year] = parts[..] else {
        return Err(bad());
    };
    if !DAYS.contains(&dow) {
        return Err(bad());
    }
    let month = MONTHS.iter().position(|m| *m == mon).ok_or_else(bad)? as u32 + 1;
    let day: u32 = day.parse().map_err(|_| bad())?;
    let year: i32 = year.parse().map_err(|_| bad())?;
    let offset = zone_offset(zone).ok_or_else(bad)?;
    let hms: Vec<u32> = time
        .split(':')
        .map(|p| p.parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [h, m, sec] = hms[..] else {
        return Err(bad());
    };
    let local = NaiveDate::from_ymd_opt(year, month, day)
        .and_then(|d| d.and_hms_opt(h, m, sec))
        .ok_or_else(bad)?;
    Ok(local.and_utc().timestamp() - offset)
}

/// Format epoch seconds in the Sentiment140 layout, always in UTC.
pub fn format_date(timestamp: i64) -> String {
    match DateTime::from_timestamp(timestamp, 0) {
        Some(dt) => dt.format("%a %b %d %H:%M:%S UTC %Y").to_string(),
        None => timestamp.to_string(),
    }
}

/// ISO-like `YYYY-MM-DD HH:MM:SS` rendering used in text reports.
pub fn format_iso(timestamp: i64) -> String {
    match DateTime::from_timestamp(timestamp, 0) {
        Some(dt) => dt.format("%Y-%m-%d %H:%M:%S").to_string(),
        None => timestamp.to_string(),
    }
}

fn parse_record(record: &csv::ByteRecord) -> Option<Tweet> {
    if record.len() != 6 {
        return None;
    }
    let field = |i: usize| String::from_utf8_lossy(&record[i]).into_owned();
    let label = SentimentLabel::from_polarity(&field(0))?;
    let id: u64 = field(1).trim().parse().ok()?;
    let timestamp = parse_date(&field(2)).ok()?;
    let text = field(5);
    if text.trim().is_empty() {
        return None;
    }
    Some(Tweet {
        id,
        timestamp,
        label: Some(label),
        user: field(4),
        text,
    })
}

/// Parse a Sentiment140 CSV file, reading at most `limit` rows.
pub fn parse_csv(path: impl AsRef<Path>, limit: Option<usize>) -> Result<(Corpus, ParseReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv_reader(std::io::BufReader::new(file), limit)
}

/// [`parse_csv`] over any reader. Invalid UTF-8 is replaced, not rejected.
pub fn parse_csv_reader<R: Read>(reader: R, limit: Option<usize>) -> Result<(Corpus, ParseReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut report = ParseReport::default();
    let mut seen = HashSet::new();
    let mut tweets = Vec::new();
    let mut record = csv::ByteRecord::new();
    while limit.is_none_or(|l| report.rows < l) {
        if !rdr.read_byte_record(&mut record)? {
            break;
        }
        report.rows += 1;
        match parse_record(&record) {
            Some(t) if !seen.insert(t.id) => report.duplicates += 1,
            Some(t) => tweets.push(t),
            None => report.malformed += 1,
        }
    }
    if report.malformed * 100 > report.rows {
        return Err(Error::TooManyMalformed {
            rows: report.rows,
            malformed: report.malformed,
        });
    }
    report.parsed = tweets.len();
    Ok((Corpus::new(tweets)?, report))
}

/// Serialize one tweet as a fully quoted Sentiment140 row (date in UTC).
pub fn to_csv_row(tweet: &Tweet) -> String {
    let mut wtr = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Always)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let polarity = tweet.label.map(|l| l.polarity().to_string()).unwrap_or_default();
    wtr.write_record([
        polarity.as_str(),
        &tweet.id.to_string(),
        &format_date(tweet.timestamp),
        "NO_QUERY",
        &tweet.user,
        &tweet.text,
    ])
    .expect("writing to a Vec cannot fail");
    let bytes = wtr.into_inner().expect("flush to Vec");
    String::from_utf8(bytes).expect("inputs were UTF-8")
}

pub fn write_csv<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for t in corpus {
        out.write_all(to_csv_row(t).as_bytes())?;
    }
    Ok(())
}

/// Newline-delimited JSON, one tweet per line.
pub fn write_dump<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for t in corpus {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n").map_err(|e| Error::io("<dump>", e))?;
    }
    Ok(())
}

pub fn read_dump<R: BufRead>(input: R) -> Result<Corpus> {
    let mut tweets = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<dump>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let tweet: Tweet = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        tweets.push(tweet);
    }
    Corpus::new(tweets)
}

/// Interleave the indices of `labels` so that every prefix keeps each label
/// within one item of its share of the whole. Within a label the order is a
/// seeded shuffle.
pub fn stratified_order(labels: &[SentimentLabel], seed: u64) -> Vec<usize> {
    let mut groups: BTreeMap<SentimentLabel, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut rng = seed::rng(seed);
    for g in groups.values_mut() {
        g.shuffle(&mut rng);
    }
    let total = labels.len() as i128;
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let mut taken = vec![0usize; groups.len()];
    let mut order = Vec::with_capacity(labels.len());
    for p in 0..labels.len() {
        // Largest deficit between target share and items taken so far.
        let pick = (0..groups.len())
            .filter(|&g| taken[g] < groups[g].len())
            .max_by_key(|&g| {
                let deficit = (p as i128 + 1) * groups[g].len() as i128 - taken[g] as i128 * total;
                (deficit, std::cmp::Reverse(g))
            })
            .expect("some group has items left");
        order.push(groups[pick][taken[pick]]);
        taken[pick] += 1;
    }
    order
}

/// Nested stratified subsets: each returned corpus keeps every label's
/// proportion within one tweet and smaller subsets are contained in larger
/// ones.
pub fn stratified_subsets(corpus: &Corpus, sizes: &[usize], seed: u64) -> Result<Vec<Corpus>> {
    let labels = corpus.labels()?;
    if let Some(&too_big) = sizes.iter().find(|&&s| s > corpus.len()) {
        return Err(Error::InvalidArgument(format!(
            "subset size {too_big} exceeds corpus size {}",
            corpus.len()
        )));
    }
    let order = stratified_order(&labels, seed);
    Ok(sizes.iter().map(|&s| corpus.select(&order[..s])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
        // Calendar oracle (proleptic Gregorian), independent of chrono.
        let y = if m <= 2 { y - 1 } else { y };
        let era = if y >= 0 { y } else { y - 399 } / 400;
        let yoe = y - era * 400;
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + d - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146097 + doe - 719468
    }

    fn tweet(id: u64, ts: i64, label: SentimentLabel) -> Tweet {
        Tweet {
            id,
            timestamp: ts,
            label: Some(label),
            user: "u".into(),
            text: format!("text {id}"),
        }
    }

    #[test]
    fn pdt_row_converts_to_utc_epoch() {
        let row = "\"0\",\"1\",\"Mon Apr 06 22:19:45 PDT 2009\",\"NO_QUERY\",\"u\",\"txt\"\n";
        let (c, report) = parse_csv_reader(row.as_bytes(), None).unwrap();
        assert_eq!(report.parsed, 1);
        let t = &c.tweets()[0];
        // 2009-04-07 05:19:45 UTC
        let expected = days_from_civil(2009, 4, 7) * 86400 + 5 * 3600 + 19 * 60 + 45;
        assert_eq!(expected, 1239081585);
        assert_eq!(t.timestamp, expected);
        assert_eq!(t.label, Some(SentimentLabel::Negative));
    }

    #[test]
    fn positive_polarity_and_embedded_commas() {
        let row = "\"4\",\"9\",\"Sat May 16 10:00:00 PST 2009\",\"NO_QUERY\",\"bob\",\"a, b, \"\"c\"\"\"\n";
        let (c, _) = parse_csv_reader(row.as_bytes(), None).unwrap();
        assert_eq!(c.tweets()[0].label, Some(SentimentLabel::Positive));
        assert_eq!(c.tweets()[0].text, "a, b, \"c\"");
    }

    #[test]
    fn empty_file_is_an_empty_corpus() {
        let (c, report) = parse_csv_reader(&b""[..], None).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.span(), None);
        assert_eq!(report.rows, 0);
    }

    #[test]
    fn unknown_zone_is_a_date_error() {
        assert!(parse_date("Mon Apr 06 22:19:45 EST 2009").is_err());
        assert!(parse_date("Mon Apr 06 22:19 PDT 2009").is_err());
        assert!(parse_date("Xyz Apr 06 22:19:45 PDT 2009").is_err());
    }

    #[test]
    fn malformed_rows_are_counted_then_rejected_over_one_percent() {
        let good = "\"0\",\"1\",\"Mon Apr 06 22:19:45 PDT 2009\",\"NO_QUERY\",\"u\",\"txt\"\n";
        let mut text = String::new();
        for i in 0..200 {
            text.push_str(&good.replace("\"1\"", &format!("\"{}\"", i + 1)));
        }
        text.push_str("\"7\",\"x\"\n");
        let (c, report) = parse_csv_reader(text.as_bytes(), None).unwrap();
        assert_eq!((c.len(), report.malformed), (200, 1));

        text.push_str("garbage\nmore garbage\n");
        let err = parse_csv_reader(text.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::TooManyMalformed { malformed: 3, .. }));
    }

    #[test]
    fn limit_caps_rows_read() {
        let mut text = String::new();
        for i in 0..10 {
            text.push_str(&format!(
                "\"4\",\"{i}\",\"Mon Apr 06 22:19:45 UTC 2009\",\"NO_QUERY\",\"u\",\"t\"\n"
            ));
        }
        let (c, _) = parse_csv_reader(text.as_bytes(), Some(3)).unwrap();
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn ties_in_time_sorted_by_id() {
        let c = Corpus::new(vec![
            tweet(5, 10, SentimentLabel::Positive),
            tweet(2, 10, SentimentLabel::Positive),
            tweet(9, 3, SentimentLabel::Negative),
        ])
        .unwrap();
        let ids: Vec<u64> = c.iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![9, 2, 5]);
        assert_eq!(c.span(), Some((3, 10)));
    }

    #[test]
    fn duplicate_ids_rejected_by_constructor() {
        let err = Corpus::new(vec![
            tweet(1, 1, SentimentLabel::Positive),
            tweet(1, 2, SentimentLabel::Positive),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(1)));
    }

    #[test]
    fn balanced_ten_gives_two_of_each_in_four() {
        let tweets = (0..10)
            .map(|i| {
                let l = if i % 2 == 0 {
                    SentimentLabel::Negative
                } else {
                    SentimentLabel::Positive
                };
                tweet(i, i as i64, l)
            })
            .collect();
        let c = Corpus::new(tweets).unwrap();
        // Enumerate seeds as the space of draws.
        for seed in 0..50 {
            let sub = &stratified_subsets(&c, &[4], seed).unwrap()[0];
            let pos = sub
                .iter()
                .filter(|t| t.label == Some(SentimentLabel::Positive))
                .count();
            assert_eq!(pos, 2);
        }
    }

    #[test]
    fn full_size_subset_is_the_corpus() {
        let tweets = (0..7)
            .map(|i| tweet(i, i as i64, SentimentLabel::ALL[(i % 3) as usize]))
            .collect();
        let c = Corpus::new(tweets).unwrap();
        let sub = &stratified_subsets(&c, &[7], 3).unwrap()[0];
        assert_eq!(sub.tweets(), c.tweets());
    }

    #[test]
    fn subset_errors() {
        let c = Corpus::new(vec![tweet(1, 1, SentimentLabel::Positive)]).unwrap();
        assert!(stratified_subsets(&c, &[2], 0).is_err());
        let mut t = tweet(2, 1, SentimentLabel::Positive);
        t.label = None;
        let unlabeled = Corpus::new(vec![t]).unwrap();
        assert!(matches!(
            stratified_subsets(&unlabeled, &[1], 0),
            Err(Error::Unlabeled)
        ));
    }

    #[test]
    fn dump_roundtrip() {
        let c = Corpus::new(vec![
            tweet(1, 100, SentimentLabel::Positive),
            tweet(2, 50, SentimentLabel::Negative),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_dump(&c, &mut buf).unwrap();
        let back = read_dump(&buf[..]).unwrap();
        assert_eq!(back.tweets(), c.tweets());
    }
}
