//! Synthetic two-platform corpora with known ground truth: event shards in
//! the ingest format, a dictionary file in the loader format, and a JSON
//! manifest recording every planted fact (lags, monthly totals, trending
//! intervals, definition months, dropout).
//!
//! Ground truth stays analytic because every signal is a baseline plus an
//! optional linear ramp. All randomness is hashed from (seed, purpose,
//! term, month), never drawn from a shared stream, so output is identical
//! regardless of generation order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Timelike;
use rand::{Rng, SeedableRng};

use crate::matcher::Matcher;
use crate::month::{Month, MonthRange};

/// Planted ramps rise from the baseline to this multiple of it. Large
/// enough that a rise over three steps out-slopes the quarter-of-max
/// threshold even after baseline jitter and 5% multiplicative noise:
/// slope 40b/3 against a threshold near 41b/4 leaves ~3b of headroom,
/// while worst-case noise perturbs a two-point slope by under 2.6b.
pub const TREND_AMP_FACTOR: f64 = 40.0;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("failed to encode output: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TermPlan {
    pub term: String,
    /// Planted lag in months; positive means the text platform leads.
    pub lag: i32,
    /// Plant a negative correlation by reflecting the dictionary series.
    pub negative: bool,
    /// Baseline events per month on the text platform.
    pub monthly_base: f64,
    /// Planted ramp: values rise linearly across this inclusive interval,
    /// then plateau. These months are the planted trending interval.
    pub trend: Option<MonthRange>,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Coupling {
    /// P(definition in month | month in planted text-side trending set).
    pub p_trending: f64,
    /// P(definition in month) elsewhere.
    pub p_baseline: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub window: MonthRange,
    pub terms: Vec<TermPlan>,
    /// Extra dictionary-only patterns with no planted events; they pad the
    /// automaton without touching ground truth.
    pub inactive_terms: usize,
    /// Per-minute drop probability in [0, 1).
    pub dropout: f64,
    /// Relative amplitude of independent per-platform perturbation.
    pub noise: f64,
    pub coupling: Option<Coupling>,
    /// Month → K: the first K whole days of that month produce nothing.
    pub missing_days: BTreeMap<Month, u32>,
    pub seed: u64,
    /// Filler bytes appended to every once-per-minute marker event, for
    /// sizing corpora.
    pub heartbeat_pad: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TermTruth {
    pub term: String,
    pub lag: i32,
    pub negative: bool,
    /// Events written per month, before any dropout.
    pub tw_monthly_totals: BTreeMap<Month, u64>,
    pub ud_activity: BTreeMap<Month, u64>,
    /// Transitional months: noiseless usage sits strictly between the
    /// baseline and the plateau. The ramp's first month still reads at
    /// baseline level and its last at plateau level, so only the months
    /// in between carry a detectable mid-rise value.
    pub tw_trending: Vec<Month>,
    pub ud_trending: Vec<Month>,
    pub definition_months: Vec<Month>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub window: MonthRange,
    pub dropout: f64,
    pub noise: f64,
    pub coupling: Option<Coupling>,
    pub missing_days: BTreeMap<Month, u32>,
    pub event_files: Vec<String>,
    pub dictionary_file: String,
    pub terms: Vec<TermTruth>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn hash(parts: &[u64]) -> u64 {
    let mut acc = 0x243f6a8885a308d3u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

// Purpose tags keep the hash streams disjoint.
const H_BASE: u64 = 1;
const H_TW_NOISE: u64 = 2;
const H_UD_NOISE: u64 = 3;
const H_DEF: u64 = 4;
const H_DROP: u64 = 5;
const H_PLACE: u64 = 6;

/// Noiseless text-side signal for window-relative month index `i` (may
/// range outside the window for lag shifts): jittered baseline plus ramp.
fn shape(spec: &SynthSpec, term_ix: usize, plan: &TermPlan, i: i32) -> f64 {
    let base = plan.monthly_base
        * (0.75 + 0.5 * unit(hash(&[spec.seed, H_BASE, term_ix as u64, i as u64])));
    let ramp = match &plan.trend {
        None => 0.0,
        Some(range) => {
            let s = range.start.index() - spec.window.start.index();
            let e = range.end.index() - spec.window.start.index();
            let amp = TREND_AMP_FACTOR * plan.monthly_base;
            if i <= s {
                0.0
            } else if i >= e {
                amp
            } else {
                amp * (i - s) as f64 / (e - s) as f64
            }
        }
    };
    base + ramp
}

fn noised(value: f64, noise: f64, h: u64) -> u64 {
    let eps = 2.0 * unit(h) - 1.0;
    (value * (1.0 + noise * eps)).round().max(0.0) as u64
}

fn minute_dropped(spec: &SynthSpec, month: Month, minute: u32) -> bool {
    if let Some(&k) = spec.missing_days.get(&month) {
        if minute / 1440 < k {
            return true;
        }
    }
    spec.dropout > 0.0
        && unit(hash(&[
            spec.seed,
            H_DROP,
            month.index() as u64,
            minute as u64,
        ])) < spec.dropout
}

fn event_text(term: &str) -> String {
    format!("yy {term} zz")
}

fn validate(spec: &SynthSpec) -> Result<(), SynthError> {
    let err = |msg: String| Err(SynthError::Invalid(msg));
    if spec.terms.is_empty() {
        return err("at least one term plan required".into());
    }
    if !(0.0..1.0).contains(&spec.dropout) {
        return err(format!("dropout {} outside [0, 1)", spec.dropout));
    }
    if !spec.noise.is_finite() || spec.noise < 0.0 {
        return err(format!("noise {} must be finite and non-negative", spec.noise));
    }
    if let Some(c) = &spec.coupling {
        for p in [c.p_trending, c.p_baseline] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("coupling probability {p} outside [0, 1]"));
            }
        }
    }
    for (m, &k) in &spec.missing_days {
        if !spec.window.contains(*m) {
            return err(format!("missing-day month {m} outside window"));
        }
        if k > m.n_days() {
            return err(format!("{k} missing days exceed the length of {m}"));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for (ix, plan) in spec.terms.iter().enumerate() {
        let norm = crate::dictionary::normalize(&plan.term);
        if norm.is_empty() {
            return err(format!("term #{ix} is empty after normalization"));
        }
        if !seen.insert(norm) {
            return err(format!("duplicate term {:?}", plan.term));
        }
        if !(-3..=3).contains(&plan.lag) {
            return err(format!("lag {} outside [-3, 3]", plan.lag));
        }
        if plan.lag != 0 && spec.window.len() < 24 {
            return err(format!(
                "window of {} months is too short for nonzero lags; 24 required",
                spec.window.len()
            ));
        }
        if !(plan.monthly_base > 0.0) {
            return err(format!("monthly_base {} must be positive", plan.monthly_base));
        }
        if let Some(range) = &plan.trend {
            if !spec.window.contains(range.start) || !spec.window.contains(range.end) {
                return err(format!("trend interval {range:?} outside window"));
            }
            // The planted interval must actually trend: ramp slope strictly
            // above τ = max(shape)/4, judged on the noiseless shape.
            let steps = (range.len() - 1) as f64;
            let slope = TREND_AMP_FACTOR * plan.monthly_base / steps;
            let max_shape = (0..spec.window.len() as i32)
                .map(|i| shape(spec, ix, plan, i))
                .fold(f64::NEG_INFINITY, f64::max);
            if slope <= max_shape / 4.0 {
                return err(format!(
                    "trend over {} months is too shallow: slope {slope:.3} vs threshold {:.3}",
                    range.len(),
                    max_shape / 4.0
                ));
            }
        }
    }
    Ok(())
}

fn inactive_pattern(i: usize) -> String {
    format!("zq{i}xw")
}

/// Every planted event text must match exactly its own term, and marker
/// text must match nothing, or ingested counts would not equal the planted
/// totals. Checked with the production matcher over the full pattern set.
fn validate_isolation(spec: &SynthSpec, matcher: &Matcher) -> Result<(), SynthError> {
    let marker = heartbeat_text(spec);
    if !matcher.scan(&marker).is_empty() {
        return Err(SynthError::Invalid(
            "marker text collides with a pattern".into(),
        ));
    }
    for plan in &spec.terms {
        let text = event_text(&plan.term);
        let matches = matcher.scan(&text);
        let own = matcher
            .pattern_id(&crate::dictionary::normalize(&plan.term))
            .expect("planted term is in the matcher");
        if matches.len() != 1 || matches[0].pattern != own {
            return Err(SynthError::Invalid(format!(
                "event text for {:?} matches {} patterns; terms must not \
                 contain each other",
                plan.term,
                matches.len()
            )));
        }
    }
    Ok(())
}

fn heartbeat_text(spec: &SynthSpec) -> String {
    let mut text = String::with_capacity(1 + spec.heartbeat_pad);
    text.push('.');
    text.extend(std::iter::repeat('y').take(spec.heartbeat_pad));
    text
}

fn write_event<W: Write>(w: &mut W, ts: i64, text: &str) -> io::Result<()> {
    let event = serde_json::json!({"created_at": ts, "lang": "en", "text": text});
    serde_json::to_writer(&mut *w, &event)?;
    w.write_all(b"\n")
}

fn plan_truth(spec: &SynthSpec, ix: usize, plan: &TermPlan) -> TermTruth {
    let w0 = spec.window.start.index();
    let months: Vec<Month> = spec.window.months().collect();

    let mut tw_monthly_totals = BTreeMap::new();
    let mut ud_activity = BTreeMap::new();
    // Reflection constant for negative-sign terms: the shape's own maximum
    // over every index the shifted series can touch keeps values ≥ 0.
    let reflect_max = (-3..spec.window.len() as i32 + 3)
        .map(|i| shape(spec, ix, plan, i))
        .fold(f64::NEG_INFINITY, f64::max);
    for (i, &m) in months.iter().enumerate() {
        let i = i as i32;
        let tw = shape(spec, ix, plan, i);
        tw_monthly_totals.insert(
            m,
            noised(tw, spec.noise, hash(&[spec.seed, H_TW_NOISE, ix as u64, i as u64])),
        );
        let mirrored = shape(spec, ix, plan, i - plan.lag);
        let ud = if plan.negative {
            reflect_max - mirrored
        } else {
            mirrored
        };
        ud_activity.insert(
            m,
            noised(ud, spec.noise, hash(&[spec.seed, H_UD_NOISE, ix as u64, i as u64])),
        );
    }

    // Strictly inside the ramp interval: the endpoints read at baseline
    // and plateau level respectively, so they are not mid-rise months.
    let interior = |r: &MonthRange| -> Vec<Month> {
        r.months().filter(|m| *m != r.start && *m != r.end).collect()
    };
    let tw_trending: Vec<Month> = plan.trend.iter().flat_map(|r| interior(r)).collect();
    let ud_trending: Vec<Month> = if plan.negative {
        Vec::new()
    } else {
        plan.trend
            .iter()
            .flat_map(|r| interior(r))
            .filter_map(|m| {
                let shifted = Month::from_index(m.index() + plan.lag);
                spec.window.contains(shifted).then_some(shifted)
            })
            .collect()
    };

    let definition_months: Vec<Month> = match &spec.coupling {
        None => Vec::new(),
        Some(c) => months
            .iter()
            .enumerate()
            .filter(|&(i, m)| {
                let p = if tw_trending.contains(m) {
                    c.p_trending
                } else {
                    c.p_baseline
                };
                unit(hash(&[spec.seed, H_DEF, ix as u64, (w0 + i as i32) as u64])) < p
            })
            .map(|(_, &m)| m)
            .collect(),
    };

    TermTruth {
        term: crate::dictionary::normalize(&plan.term),
        lag: plan.lag,
        negative: plan.negative,
        tw_monthly_totals,
        ud_activity,
        tw_trending,
        ud_trending,
        definition_months,
    }
}

const TAG_POOL: [&str; 5] = ["slang", "noun", "verb", "music", "insult"];

fn write_dictionary(
    spec: &SynthSpec,
    truths: &[TermTruth],
    path: &Path,
) -> Result<(), SynthError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (ix, truth) in truths.iter().enumerate() {
        let tags: Vec<&str> = (0..ix % 3).map(|t| TAG_POOL[(ix + t) % TAG_POOL.len()]).collect();
        let record = serde_json::json!({
            "term": truth.term,
            "tags": tags,
            "definition_months": truth.definition_months,
            "upvotes": 10 + ix as u64,
            "downvotes": ix as u64 % 7,
            "activity": truth.ud_activity,
        });
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    for i in 0..spec.inactive_terms {
        let record = serde_json::json!({
            "term": inactive_pattern(i),
            "tags": [],
            "definition_months": [],
            "upvotes": 0,
            "downvotes": 0,
        });
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_month_shard(
    spec: &SynthSpec,
    month: Month,
    month_ix: usize,
    truths: &[TermTruth],
    path: &Path,
) -> Result<(), SynthError> {
    // Spread each term's monthly total over the month's minutes with a
    // per-(term, month) generator: placement is order-independent.
    let n_minutes = month.n_minutes() as u32;
    let mut by_minute: BTreeMap<u32, BTreeMap<usize, u32>> = BTreeMap::new();
    for (ix, truth) in truths.iter().enumerate() {
        let total = truth.tw_monthly_totals[&month];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(hash(&[
            spec.seed,
            H_PLACE,
            ix as u64,
            month_ix as u64,
        ]));
        for _ in 0..total {
            let minute = rng.gen_range(0..n_minutes);
            *by_minute.entry(minute).or_default().entry(ix).or_insert(0) += 1;
        }
    }

    let marker = heartbeat_text(spec);
    let texts: Vec<String> = truths.iter().map(|t| event_text(&t.term)).collect();
    let day0 = month
        .first_day()
        .and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp();
    debug_assert_eq!(
        chrono::DateTime::from_timestamp(day0, 0).unwrap().minute(),
        0
    );

    let mut w = BufWriter::with_capacity(1 << 20, fs::File::create(path)?);
    for minute in 0..n_minutes {
        if minute_dropped(spec, month, minute) {
            continue;
        }
        let ts = day0 + minute as i64 * 60;
        write_event(&mut w, ts, &marker)?;
        if let Some(minute_terms) = by_minute.get(&minute) {
            for (&ix, &count) in minute_terms {
                for _ in 0..count {
                    write_event(&mut w, ts, &texts[ix])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Generate the corpus into `out_dir`: one event shard per window month
/// (`events-YYYY-MM.ndjson`), `dictionary.ndjson`, and `truth.json`.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<GroundTruth, SynthError> {
    validate(spec)?;
    let patterns: Vec<String> = spec
        .terms
        .iter()
        .map(|p| p.term.clone())
        .chain((0..spec.inactive_terms).map(inactive_pattern))
        .collect();
    let matcher = Matcher::new(patterns.iter().map(|s| s.as_str()))
        .map_err(|e| SynthError::Invalid(e.to_string()))?;
    validate_isolation(spec, &matcher)?;

    fs::create_dir_all(out_dir)?;
    let truths: Vec<TermTruth> = spec
        .terms
        .iter()
        .enumerate()
        .map(|(ix, plan)| plan_truth(spec, ix, plan))
        .collect();

    let dictionary_file = "dictionary.ndjson".to_string();
    write_dictionary(spec, &truths, &out_dir.join(&dictionary_file))?;

    let mut event_files = Vec::new();
    for (month_ix, month) in spec.window.months().enumerate() {
        let name = format!("events-{month}.ndjson");
        write_month_shard(spec, month, month_ix, &truths, &out_dir.join(&name))?;
        event_files.push(name);
    }

    let truth = GroundTruth {
        seed: spec.seed,
        window: spec.window,
        dropout: spec.dropout,
        noise: spec.noise,
        coupling: spec.coupling,
        missing_days: spec.missing_days.clone(),
        event_files,
        dictionary_file,
        terms: truths,
    };
    let mut w = BufWriter::new(fs::File::create(out_dir.join("truth.json"))?);
    serde_json::to_writer_pretty(&mut w, &truth)?;
    w.flush()?;
    Ok(truth)
}

/// Event shard paths in window order, for handing to the ingest stage.
pub fn event_paths(truth: &GroundTruth, dir: &Path) -> Vec<PathBuf> {
    truth.event_files.iter().map(|f| dir.join(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ingest_files, IngestOptions, KeepLanguage};
    use crate::series::{correction_factor, monthly_totals, Correction};

    fn window(s: &str) -> MonthRange {
        s.parse().unwrap()
    }

    fn base_spec() -> SynthSpec {
        SynthSpec {
            window: window("2014-01:2014-04"),
            terms: vec![
                TermPlan {
                    term: "frobnal".into(),
                    lag: 0,
                    negative: false,
                    monthly_base: 40.0,
                    trend: None,
                },
                TermPlan {
                    term: "quibbex".into(),
                    lag: 0,
                    negative: true,
                    monthly_base: 25.0,
                    trend: None,
                },
            ],
            inactive_terms: 3,
            dropout: 0.0,
            noise: 0.0,
            coupling: None,
            missing_days: BTreeMap::new(),
            seed: 42,
            heartbeat_pad: 0,
        }
    }

    fn ingest_options(spec: &SynthSpec) -> IngestOptions {
        IngestOptions {
            window: spec.window,
            format: Default::default(),
            count_per_doc: false,
        }
    }

    fn run_ingest(truth: &GroundTruth, dir: &Path, spec: &SynthSpec) -> crate::ingest::Aggregates {
        let patterns: Vec<String> = truth.terms.iter().map(|t| t.term.clone()).collect();
        let matcher = Matcher::new(patterns.iter().map(|s| s.as_str())).unwrap();
        ingest_files(
            &event_paths(truth, dir),
            &matcher,
            &KeepLanguage("en".into()),
            &ingest_options(spec),
        )
        .unwrap()
    }

    #[test]
    fn manifest_echoes_planted_lag() {
        let mut spec = base_spec();
        spec.window = window("2014-01:2016-01");
        spec.terms[0].lag = 2;
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&spec, dir.path()).unwrap();
        assert_eq!(truth.terms[0].lag, 2);
        assert_eq!(truth.terms[0].term, "frobnal");
    }

    #[test]
    fn zero_dropout_gives_full_coverage() {
        let spec = base_spec();
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&spec, dir.path()).unwrap();
        let agg = run_ingest(&truth, dir.path(), &spec);
        for m in spec.window.months() {
            assert_eq!(
                correction_factor(&agg.coverage, m),
                Correction::Factor(1.0),
                "{m}"
            );
        }
        assert_eq!(agg.stats.malformed, 0);
        assert_eq!(agg.stats.out_of_window, 0);
    }

    #[test]
    fn fixed_seed_regenerates_identical_bytes() {
        let spec = base_spec();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let t1 = generate(&spec, d1.path()).unwrap();
        generate(&spec, d2.path()).unwrap();
        let mut names = t1.event_files.clone();
        names.push(t1.dictionary_file.clone());
        names.push("truth.json".into());
        for name in names {
            let a = fs::read(d1.path().join(&name)).unwrap();
            let b = fs::read(d2.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn ingested_totals_round_trip_exactly_without_dropout() {
        let mut spec = base_spec();
        spec.noise = 0.3; // placed events are exact regardless of shape noise
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&spec, dir.path()).unwrap();
        let agg = run_ingest(&truth, dir.path(), &spec);
        for (ix, term_truth) in truth.terms.iter().enumerate() {
            let days = agg.counts.term_days(ix as u32);
            let got = monthly_totals(&days, &spec.window);
            for (m, &planted) in &term_truth.tw_monthly_totals {
                assert_eq!(got[m], planted, "term {ix} month {m}");
            }
        }
    }

    #[test]
    fn planted_missing_days_appear_in_coverage() {
        let mut spec = base_spec();
        let target = "2014-02".parse().unwrap();
        spec.missing_days.insert(target, 20);
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&spec, dir.path()).unwrap();
        let agg = run_ingest(&truth, dir.path(), &spec);
        assert_eq!(agg.coverage.missing_days(target), 20);
        assert_eq!(agg.coverage.missing_days("2014-01".parse().unwrap()), 0);
    }

    #[test]
    fn dictionary_file_loads_cleanly_and_selects_active_terms() {
        let spec = base_spec();
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&spec, dir.path()).unwrap();
        let file = fs::File::open(dir.path().join(&truth.dictionary_file)).unwrap();
        let outcome = crate::dictionary::load_dictionary(file, 0.0).unwrap();
        assert_eq!(outcome.errors.len(), 0);
        assert_eq!(outcome.terms.len(), 2 + spec.inactive_terms);

        let agg = run_ingest(&truth, dir.path(), &spec);
        let occurrences = agg.counts.totals();
        let by_term: BTreeMap<String, u64> = truth
            .terms
            .iter()
            .enumerate()
            .map(|(ix, t)| {
                (
                    t.term.clone(),
                    occurrences.get(&(ix as u32)).copied().unwrap_or(0),
                )
            })
            .collect();
        let criteria = crate::dictionary::SelectionCriteria {
            min_occurrences: 50,
            min_overlap_months: 2,
            min_term_length: 3,
        };
        let selected = crate::dictionary::select_analysis_terms(
            &outcome.terms,
            &by_term,
            &criteria,
            &spec.window,
        );
        assert!(selected.contains("frobnal"));
        assert!(selected.contains("quibbex"));
        assert!(!selected.iter().any(|n| n.starts_with("zq")));
    }

    #[test]
    fn full_coupling_places_definitions_exactly_in_trending_months() {
        let mut spec = base_spec();
        spec.window = window("2014-01:2015-12");
        spec.terms[0].trend = Some(window("2014-06:2014-09"));
        spec.coupling = Some(Coupling {
            p_trending: 1.0,
            p_baseline: 0.0,
        });
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&spec, dir.path()).unwrap();
        assert_eq!(truth.terms[0].definition_months, truth.terms[0].tw_trending);
        // Four-month interval, two transitional months strictly inside it.
        let expect: Vec<Month> = window("2014-07:2014-08").months().collect();
        assert_eq!(truth.terms[0].tw_trending, expect);
        assert!(truth.terms[1].definition_months.is_empty());
    }

    #[test]
    fn negative_sign_and_lag_shift_shape_the_ud_truth() {
        let mut spec = base_spec();
        spec.window = window("2014-01:2015-12");
        spec.terms[0].lag = 2;
        spec.terms[0].trend = Some(window("2014-06:2014-09"));
        spec.terms[1].trend = Some(window("2014-06:2014-09"));
        let dir = tempfile::tempdir().unwrap();
        let truth = generate(&spec, dir.path()).unwrap();
        // Positive term: transitional months shifted two months later.
        let expect: Vec<Month> = window("2014-09:2014-10").months().collect();
        assert_eq!(truth.terms[0].ud_trending, expect);
        // Negative term: the reflected ramp falls, so no dictionary trend.
        assert!(truth.terms[1].ud_trending.is_empty());
        assert_eq!(truth.terms[1].tw_trending.len(), 2);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let reject = |mutate: &dyn Fn(&mut SynthSpec), msg_part: &str| {
            let mut spec = base_spec();
            mutate(&mut spec);
            let dir = tempfile::tempdir().unwrap();
            match generate(&spec, dir.path()) {
                Err(SynthError::Invalid(msg)) => {
                    assert!(msg.contains(msg_part), "{msg:?} missing {msg_part:?}")
                }
                other => panic!("expected Invalid({msg_part}), got {other:?}"),
            }
        };
        reject(&|s| s.dropout = 1.0, "dropout");
        reject(&|s| s.terms[0].lag = 4, "lag");
        reject(&|s| s.terms[0].lag = 2, "too short"); // 4-month window
        reject(&|s| s.terms.clear(), "at least one");
        reject(&|s| s.terms[0].term = "  ".into(), "empty");
        reject(&|s| s.terms[1].term = "frobnal".into(), "duplicate");
        reject(&|s| s.terms[0].monthly_base = 0.0, "positive");
        reject(
            &|s| {
                s.missing_days.insert("2019-05".parse().unwrap(), 3);
            },
            "outside window",
        );
        reject(
            &|s| {
                s.missing_days.insert("2014-02".parse().unwrap(), 29);
            },
            "exceed",
        );
        reject(
            &|s| {
                s.window = window("2014-01:2015-12");
                s.terms[0].trend = Some(window("2015-10:2016-02"));
            },
            "outside window",
        );
        reject(
            &|s| {
                s.window = window("2014-01:2015-12");
                // 13 months of rise: slope 40b/12 is under τ ≈ 10.3b.
                s.terms[0].trend = Some(window("2014-03:2015-03"));
            },
            "too shallow",
        );
        reject(
            &|s| {
                s.coupling = Some(Coupling {
                    p_trending: 1.5,
                    p_baseline: 0.1,
                });
            },
            "probability",
        );
    }

    #[test]
    fn nested_terms_are_rejected_by_isolation_check() {
        let mut spec = base_spec();
        spec.terms[1].term = "frobnal max".into();
        let dir = tempfile::tempdir().unwrap();
        match generate(&spec, dir.path()) {
            Err(SynthError::Invalid(msg)) => assert!(msg.contains("contain")),
            other => panic!("expected isolation error, got {other:?}"),
        }
    }
}
