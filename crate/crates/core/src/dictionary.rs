//! Dictionary records: loading, normalization, filtering, selection.
//!
//! The dictionary is NDJSON, one record per line. Headwords are normalized
//! (Unicode lowercase, whitespace collapsed) and duplicate headwords merge.
//! Malformed records are collected rather than fatal, up to a configurable
//! error budget.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};

use serde::Deserialize;

use crate::month::{Month, MonthRange};

/// Months earlier than this cannot appear in dictionary records; the
/// dictionary platform did not exist before 1999.
const MIN_RECORD_YEAR: i32 = 1999;

#[derive(Debug, thiserror::Error)]
pub enum DictError {
    #[error("IO error: {0}")]
    Io(#[from] std::io::Error),
    #[error(
        "error budget exceeded: {errors} of {records} records malformed (budget {budget})"
    )]
    ErrorBudgetExceeded {
        errors: usize,
        records: usize,
        budget: f64,
    },
}

/// A single record-level problem, reported with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// One dictionary headword with its crowd metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermRecord {
    /// Normalized headword: Unicode lowercase, inner whitespace collapsed
    /// to single spaces, trimmed.
    pub term: String,
    pub tags: BTreeSet<String>,
    /// Months in which a definition was submitted. Kept as a multiset,
    /// sorted; duplicates mean multiple definitions in one month.
    pub definition_months: Vec<Month>,
    pub upvotes: u64,
    pub downvotes: u64,
    /// Monthly activity on the dictionary platform, if the record has a log.
    pub activity: Option<BTreeMap<Month, u64>>,
}

/// Headword normalization used for dictionary terms, stopwords, and lexicon
/// entries alike.
pub fn normalize(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut in_space = false;
    for c in lowered.trim().chars() {
        if c.is_whitespace() {
            in_space = true;
        } else {
            if in_space && !out.is_empty() {
                out.push(' ');
            }
            in_space = false;
            out.push(c);
        }
    }
    out
}

#[derive(Deserialize)]
struct RawRecord {
    term: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    definition_months: Vec<String>,
    #[serde(default)]
    upvotes: u64,
    #[serde(default)]
    downvotes: u64,
    #[serde(default)]
    activity: Option<BTreeMap<String, u64>>,
}

/// Result of a dictionary load: merged records plus every non-fatal error.
#[derive(Debug)]
pub struct LoadOutcome {
    pub terms: BTreeMap<String, TermRecord>,
    pub errors: Vec<RecordError>,
    /// Non-blank input lines seen (the error-budget denominator).
    pub records: usize,
}

fn parse_record_month(s: &str) -> Result<Month, String> {
    let m: Month = s.parse().map_err(|e| format!("{e}"))?;
    if m.year() < MIN_RECORD_YEAR {
        return Err(format!(
            "month {m} predates {MIN_RECORD_YEAR}; not a valid record month"
        ));
    }
    Ok(m)
}

fn validate(raw: RawRecord) -> Result<TermRecord, String> {
    let term = match raw.term {
        Some(t) => normalize(&t),
        None => return Err("missing required field \"term\"".into()),
    };
    if term.is_empty() {
        return Err("term is empty after normalization".into());
    }
    let mut definition_months = Vec::with_capacity(raw.definition_months.len());
    for s in &raw.definition_months {
        definition_months.push(parse_record_month(s)?);
    }
    definition_months.sort();
    let activity = match raw.activity {
        None => None,
        Some(map) => {
            let mut parsed = BTreeMap::new();
            for (k, v) in map {
                parsed.insert(parse_record_month(&k)?, v);
            }
            Some(parsed)
        }
    };
    Ok(TermRecord {
        term,
        tags: raw.tags.iter().map(|t| normalize(t)).collect(),
        definition_months,
        upvotes: raw.upvotes,
        downvotes: raw.downvotes,
        activity,
    })
}

/// Merge a new record into an existing one with the same headword: tags
/// union, votes sum, definition months concatenate. Activity maps must not
/// conflict; the first one seen wins and a differing later map is an error.
fn merge(into: &mut TermRecord, from: TermRecord) -> Result<(), String> {
    into.tags.extend(from.tags);
    into.definition_months.extend(from.definition_months);
    into.definition_months.sort();
    into.upvotes += from.upvotes;
    into.downvotes += from.downvotes;
    match (&into.activity, from.activity) {
        (_, None) => {}
        (None, Some(a)) => into.activity = Some(a),
        (Some(existing), Some(new)) => {
            if *existing != new {
                return Err(format!(
                    "conflicting activity maps for term {:?}",
                    into.term
                ));
            }
        }
    }
    Ok(())
}

/// Load and merge a NDJSON dictionary.
///
/// `error_budget` is the tolerated fraction of malformed records, in
/// `[0, 1]`. Record-level problems (unparseable JSON, missing term, bad
/// months, conflicting activity maps) are collected; the load fails only
/// when their fraction exceeds the budget.
pub fn load_dictionary<R: Read>(
    reader: R,
    error_budget: f64,
) -> Result<LoadOutcome, DictError> {
    let buf = BufReader::new(reader);
    let mut terms: BTreeMap<String, TermRecord> = BTreeMap::new();
    let mut errors = Vec::new();
    let mut records = 0usize;
    for (ix, line) in buf.lines().enumerate() {
        let line_no = ix + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        let parsed: Result<TermRecord, String> = serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| format!("invalid JSON: {e}"))
            .and_then(validate);
        match parsed {
            Err(message) => errors.push(RecordError {
                line: line_no,
                message,
            }),
            Ok(rec) => match terms.get_mut(&rec.term) {
                None => {
                    terms.insert(rec.term.clone(), rec);
                }
                Some(existing) => {
                    if let Err(message) = merge(existing, rec) {
                        errors.push(RecordError {
                            line: line_no,
                            message,
                        });
                    }
                }
            },
        }
    }
    if records > 0 && (errors.len() as f64) > error_budget * records as f64 {
        return Err(DictError::ErrorBudgetExceeded {
            errors: errors.len(),
            records,
            budget: error_budget,
        });
    }
    Ok(LoadOutcome {
        terms,
        errors,
        records,
    })
}

/// Load a stopword file: one word per line, blank lines ignored.
pub fn load_stopwords<R: Read>(reader: R) -> Result<BTreeSet<String>, DictError> {
    let mut out = BTreeSet::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let w = normalize(&line);
        if !w.is_empty() {
            out.insert(w);
        }
    }
    Ok(out)
}

/// Thresholds for term filtering and analysis-set selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionCriteria {
    /// Minimum total matched occurrences on the text platform.
    pub min_occurrences: u64,
    /// Minimum number of window months with recorded dictionary activity.
    pub min_overlap_months: usize,
    /// Minimum headword length in characters after normalization.
    pub min_term_length: usize,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        SelectionCriteria {
            min_occurrences: 10_000,
            min_overlap_months: 12,
            min_term_length: 3,
        }
    }
}

/// Headwords eligible for matching: long enough, and not a stopword.
///
/// Stopword exclusion is by exact whole-string equality, so multi-word
/// expressions are never excluded by a stopword inside them.
pub fn filter_terms<'a, I>(
    terms: I,
    stopwords: &BTreeSet<String>,
    criteria: &SelectionCriteria,
) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a str>,
{
    terms
        .into_iter()
        .filter(|t| t.chars().count() >= criteria.min_term_length)
        .filter(|t| !stopwords.contains(*t))
        .map(|t| t.to_string())
        .collect()
}

/// Number of window months with a recorded activity value.
pub fn activity_overlap_months(record: &TermRecord, window: &MonthRange) -> usize {
    match &record.activity {
        None => 0,
        Some(act) => act.keys().filter(|m| window.contains(**m)).count(),
    }
}

/// Terms eligible for correlation analysis: present in the dictionary, at
/// least `min_occurrences` total matches on the text platform inside the
/// window, and at least `min_overlap_months` window months of recorded
/// dictionary activity. Both thresholds are inclusive.
pub fn select_analysis_terms(
    terms: &BTreeMap<String, TermRecord>,
    twitter_totals: &BTreeMap<String, u64>,
    criteria: &SelectionCriteria,
    window: &MonthRange,
) -> BTreeSet<String> {
    terms
        .values()
        .filter(|rec| {
            twitter_totals.get(&rec.term).copied().unwrap_or(0) >= criteria.min_occurrences
        })
        .filter(|rec| activity_overlap_months(rec, window) >= criteria.min_overlap_months)
        .map(|rec| rec.term.clone())
        .collect()
}
