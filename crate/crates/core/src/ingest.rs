//! Streaming event ingestion.
//!
//! Event files are NDJSON, optionally gzip-compressed (by extension). Each
//! event carries a timestamp, a text body, and an optional language tag.
//! Ingestion buckets everything in UTC: match counts per (term, day),
//! observation coverage per minute. Minute coverage counts data presence,
//! so events of every language mark their minute; only events passing the
//! language filter are scanned for matches.
//!
//! File shards process independently and merge by pointwise sum (counts)
//! and union (minutes), which makes the result independent of shard order
//! and thread count.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, TimeZone, Timelike, Utc};
use rayon::prelude::*;
use serde::Deserialize;

use crate::matcher::Matcher;
use crate::month::{Month, MonthRange};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("failed to read shard {file}: {source}")]
    Shard {
        file: PathBuf,
        source: std::io::Error,
    },
    #[error("IO error: {0}")]
    Io(#[from] std::io::Error),
}

/// One parsed event, minute precision, UTC.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextEvent {
    pub time: DateTime<Utc>,
    pub text: String,
    pub language: Option<String>,
}

/// Predicate deciding which events are scanned for matches. Coverage is
/// unaffected by this filter.
pub trait LanguageFilter: Sync {
    fn keep(&self, event: &TextEvent) -> bool;
}

impl<F: Fn(&TextEvent) -> bool + Sync> LanguageFilter for F {
    fn keep(&self, event: &TextEvent) -> bool {
        self(event)
    }
}

/// Default filter: keep events whose language tag equals the configured
/// code; events without a tag are dropped (the reference corpora are
/// pre-tagged).
#[derive(Debug, Clone)]
pub struct KeepLanguage(pub String);

impl LanguageFilter for KeepLanguage {
    fn keep(&self, event: &TextEvent) -> bool {
        event.language.as_deref() == Some(self.0.as_str())
    }
}

/// JSON field names for event records. Time keys are tried in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFormat {
    pub time_keys: Vec<String>,
    pub text_key: String,
    pub lang_key: String,
}

impl Default for EventFormat {
    fn default() -> Self {
        EventFormat {
            time_keys: vec!["created_at".into(), "ts".into()],
            text_key: "text".into(),
            lang_key: "lang".into(),
        }
    }
}

const MINUTE_WORDS: usize = 23; // ceil(1440 / 64)

/// Which minutes of one UTC day saw at least one event.
#[derive(Debug, Clone, PartialEq, Eq)]
struct DayMinutes {
    bits: [u64; MINUTE_WORDS],
}

impl DayMinutes {
    fn new() -> DayMinutes {
        DayMinutes {
            bits: [0; MINUTE_WORDS],
        }
    }

    fn set(&mut self, minute_of_day: u32) {
        let m = minute_of_day as usize;
        self.bits[m / 64] |= 1u64 << (m % 64);
    }

    fn count(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }

    fn union(&mut self, other: &DayMinutes) {
        for (a, b) in self.bits.iter_mut().zip(other.bits.iter()) {
            *a |= b;
        }
    }
}

/// Distinct observed minutes, tracked per UTC day so both the monthly
/// correction factor and day-level gap detection derive from one source.
#[derive(Debug, Clone, Default)]
pub struct MinuteCoverage {
    days: BTreeMap<NaiveDate, DayMinutes>,
}

impl MinuteCoverage {
    pub fn new() -> MinuteCoverage {
        MinuteCoverage::default()
    }

    /// Rebuild coverage from per-day observed-minute counts (the day-level
    /// serialization). Which specific minutes were observed is not
    /// preserved; every derived quantity (per-day counts, monthly sums,
    /// missing days) is.
    pub fn from_day_counts(counts: &BTreeMap<NaiveDate, u32>) -> MinuteCoverage {
        let mut cov = MinuteCoverage::new();
        for (&day, &n) in counts {
            assert!(n <= 1440, "day cannot have more than 1440 minutes");
            let dm = cov.days.entry(day).or_insert_with(DayMinutes::new);
            for m in 0..n {
                dm.set(m);
            }
        }
        cov
    }

    pub fn mark(&mut self, time: DateTime<Utc>) {
        let minute = time.hour() * 60 + time.minute();
        self.days
            .entry(time.date_naive())
            .or_insert_with(DayMinutes::new)
            .set(minute);
    }

    /// O_m(M): distinct observed minutes in the month.
    pub fn observed_minutes(&self, month: Month) -> u64 {
        let first = month.first_day();
        let last = month.day(month.n_days()).expect("valid last day");
        self.days
            .range(first..=last)
            .map(|(_, dm)| dm.count() as u64)
            .sum()
    }

    /// E_m(M) = 60 × 24 × days in the month, leap years included.
    pub fn expected_minutes(&self, month: Month) -> u64 {
        month.n_minutes()
    }

    /// A day is missing when all 1,440 of its minutes are unobserved.
    pub fn day_observed(&self, day: NaiveDate) -> bool {
        self.days.get(&day).map_or(false, |dm| dm.count() > 0)
    }

    pub fn missing_days(&self, month: Month) -> u32 {
        month.days().filter(|d| !self.day_observed(*d)).count() as u32
    }

    pub fn day_minute_counts(&self) -> BTreeMap<NaiveDate, u32> {
        self.days
            .iter()
            .map(|(&d, dm)| (d, dm.count()))
            .filter(|&(_, n)| n > 0)
            .collect()
    }

    pub fn merge(&mut self, other: &MinuteCoverage) {
        for (day, dm) in &other.days {
            self.days
                .entry(*day)
                .or_insert_with(DayMinutes::new)
                .union(dm);
        }
    }
}

/// Match totals per (pattern id, UTC day).
#[derive(Debug, Clone, Default)]
pub struct DailyCounts {
    counts: HashMap<(u32, NaiveDate), u64>,
}

impl DailyCounts {
    pub fn new() -> DailyCounts {
        DailyCounts::default()
    }

    pub fn add(&mut self, pattern: u32, day: NaiveDate, n: u64) {
        if n > 0 {
            *self.counts.entry((pattern, day)).or_insert(0) += n;
        }
    }

    pub fn get(&self, pattern: u32, day: NaiveDate) -> u64 {
        self.counts.get(&(pattern, day)).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn merge(&mut self, other: &DailyCounts) {
        for (&key, &n) in &other.counts {
            *self.counts.entry(key).or_insert(0) += n;
        }
    }

    /// Per-day counts for one pattern, sorted by day.
    pub fn term_days(&self, pattern: u32) -> BTreeMap<NaiveDate, u64> {
        self.counts
            .iter()
            .filter(|((p, _), _)| *p == pattern)
            .map(|((_, d), &n)| (*d, n))
            .collect()
    }

    /// Total matches per pattern id.
    pub fn totals(&self) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for ((p, _), &n) in &self.counts {
            *out.entry(*p).or_insert(0u64) += n;
        }
        out
    }

    /// All rows sorted by (pattern id, day) — the order of the daily CSV.
    pub fn sorted_rows(&self) -> Vec<(u32, NaiveDate, u64)> {
        let mut rows: Vec<(u32, NaiveDate, u64)> = self
            .counts
            .iter()
            .map(|(&(p, d), &n)| (p, d, n))
            .collect();
        rows.sort_unstable();
        rows
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Counters reported aside the aggregates. Merging sums fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct IngestStats {
    /// Lines that parsed into events, in or out of window.
    pub events: u64,
    /// Lines skipped: broken JSON, missing fields, bad timestamps, or
    /// invalid UTF-8.
    pub malformed: u64,
    /// Parsed events whose month lies outside the analysis window.
    pub out_of_window: u64,
    /// In-window events dropped by the language filter (still covered).
    pub language_dropped: u64,
    /// Total accepted match events.
    pub matches: u64,
    pub files: u64,
}

impl IngestStats {
    pub fn merge(&mut self, o: &IngestStats) {
        self.events += o.events;
        self.malformed += o.malformed;
        self.out_of_window += o.out_of_window;
        self.language_dropped += o.language_dropped;
        self.matches += o.matches;
        self.files += o.files;
    }
}

#[derive(Debug, Clone, Default)]
pub struct Aggregates {
    pub counts: DailyCounts,
    pub coverage: MinuteCoverage,
    pub stats: IngestStats,
}

impl Aggregates {
    pub fn merge(&mut self, other: &Aggregates) {
        self.counts.merge(&other.counts);
        self.coverage.merge(&other.coverage);
        self.stats.merge(&other.stats);
    }
}

/// Merge shard aggregates: counts sum pointwise, observed minutes union,
/// counters sum. Associative and commutative, so the combined result does
/// not depend on shard order.
pub fn merge_aggregates<I: IntoIterator<Item = Aggregates>>(parts: I) -> Aggregates {
    let mut out = Aggregates::default();
    for part in parts {
        out.merge(&part);
    }
    out
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TimeValue {
    Seconds(i64),
    SecondsFloat(f64),
    Text(String),
}

fn parse_time(v: &TimeValue) -> Option<DateTime<Utc>> {
    let dt = match v {
        TimeValue::Seconds(s) => DateTime::from_timestamp(*s, 0)?,
        TimeValue::SecondsFloat(s) => {
            if !s.is_finite() {
                return None;
            }
            DateTime::from_timestamp(s.floor() as i64, 0)?
        }
        TimeValue::Text(s) => parse_time_text(s)?,
    };
    // Events are minute-precision by contract.
    dt.with_second(0).and_then(|d| d.with_nanosecond(0))
}

fn parse_time_text(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    // Classic archive format: "Wed Aug 27 13:08:45 +0000 2008".
    if let Ok(dt) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        return Some(dt.with_timezone(&Utc));
    }
    // Offset-less ISO-8601 forms are taken as UTC.
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&naive));
        }
    }
    None
}

fn parse_event_line(line: &str, format: &EventFormat) -> Option<TextEvent> {
    let map: HashMap<String, &serde_json::value::RawValue> =
        serde_json::from_str(line).ok()?;
    let time_raw = format
        .time_keys
        .iter()
        .find_map(|k| map.get(k.as_str()))?;
    let time_value: TimeValue = serde_json::from_str(time_raw.get()).ok()?;
    let time = parse_time(&time_value)?;
    let text: String = serde_json::from_str(map.get(format.text_key.as_str())?.get()).ok()?;
    let language: Option<String> = match map.get(format.lang_key.as_str()) {
        None => None,
        Some(raw) => serde_json::from_str(raw.get()).ok()?,
    };
    Some(TextEvent {
        time,
        text,
        language,
    })
}

/// Ingestion knobs beyond the matcher and the filter.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub window: MonthRange,
    pub format: EventFormat,
    /// When set, a term counts at most once per document.
    pub count_per_doc: bool,
}

/// Ingest one shard from a reader. Lines that fail to parse are counted
/// and skipped; events outside the window are counted and otherwise
/// ignored; all other events mark coverage, and those passing the filter
/// are scanned.
pub fn ingest_reader<R: Read>(
    reader: R,
    matcher: &Matcher,
    filter: &dyn LanguageFilter,
    options: &IngestOptions,
) -> Result<Aggregates, std::io::Error> {
    let mut buf = BufReader::new(reader);
    let mut agg = Aggregates::default();
    let mut line = Vec::new();
    let mut pattern_scratch: Vec<u32> = Vec::new();
    loop {
        line.clear();
        if buf.read_until(b'\n', &mut line)? == 0 {
            break;
        }
        while matches!(line.last(), Some(b'\n') | Some(b'\r')) {
            line.pop();
        }
        if line.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        let text = match std::str::from_utf8(&line) {
            Ok(t) => t,
            Err(_) => {
                agg.stats.malformed += 1;
                continue;
            }
        };
        let event = match parse_event_line(text, &options.format) {
            Some(ev) => ev,
            None => {
                agg.stats.malformed += 1;
                continue;
            }
        };
        agg.stats.events += 1;
        let day = event.time.date_naive();
        if !options.window.contains(Month::from_date(day)) {
            agg.stats.out_of_window += 1;
            continue;
        }
        agg.coverage.mark(event.time);
        if !filter.keep(&event) {
            agg.stats.language_dropped += 1;
            continue;
        }
        let events = matcher.scan(&event.text);
        if options.count_per_doc {
            pattern_scratch.clear();
            pattern_scratch.extend(events.iter().map(|e| e.pattern));
            pattern_scratch.sort_unstable();
            pattern_scratch.dedup();
            for &p in &pattern_scratch {
                agg.counts.add(p, day, 1);
                agg.stats.matches += 1;
            }
        } else {
            for ev in &events {
                agg.counts.add(ev.pattern, day, 1);
                agg.stats.matches += 1;
            }
        }
    }
    Ok(agg)
}

fn open_event_file(path: &Path) -> Result<Box<dyn Read + Send>, std::io::Error> {
    let file = std::fs::File::open(path)?;
    if path.extension().and_then(|e| e.to_str()) == Some("gz") {
        Ok(Box::new(flate2::read::MultiGzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

/// Ingest a set of file shards in parallel and merge. Fails on the first
/// unreadable shard, naming the file; nothing partial is returned.
pub fn ingest_files(
    files: &[PathBuf],
    matcher: &Matcher,
    filter: &dyn LanguageFilter,
    options: &IngestOptions,
) -> Result<Aggregates, IngestError> {
    let parts: Result<Vec<Aggregates>, IngestError> = files
        .par_iter()
        .map(|path| {
            let reader = open_event_file(path).map_err(|source| IngestError::Shard {
                file: path.clone(),
                source,
            })?;
            let mut agg = ingest_reader(reader, matcher, filter, options).map_err(
                |source| IngestError::Shard {
                    file: path.clone(),
                    source,
                },
            )?;
            agg.stats.files = 1;
            Ok(agg)
        })
        .collect();
    Ok(merge_aggregates(parts?))
}
