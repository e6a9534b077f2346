use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use termtrends_core::association::{self, LogBase, PmiOptions};
use termtrends_core::correlation::{self, Category, CorrelationRecord, TermCorrelation};
use termtrends_core::dictionary::{self, TermRecord};
use termtrends_core::ingest::{
    self, Aggregates, IngestOptions, KeepLanguage, LanguageFilter, MinuteCoverage, TextEvent,
};
use termtrends_core::matcher::Matcher;
use termtrends_core::month::{Month, MonthRange};
use termtrends_core::series::{self, MonthlySeries, SeriesError};
use termtrends_core::trends::{self, ContingencyStats, Platform, TrendReport};

use crate::config::RunConfig;
use crate::csvio::{file_digest, read_csv, write_csv};
use crate::CliError;

pub const TERMS_CSV: &str = "terms.csv";
pub const DAILY_CSV: &str = "daily_counts.csv";
pub const COVERAGE_CSV: &str = "coverage.csv";
pub const COVERAGE_DAYS_CSV: &str = "coverage_days.csv";
pub const MATCH_MANIFEST: &str = "match_manifest.json";

pub const SERIES_TW_CSV: &str = "series_twitter.csv";
pub const SERIES_UD_CSV: &str = "series_ud.csv";
pub const CORRELATIONS_CSV: &str = "correlations.csv";
pub const LAG_HISTOGRAM_CSV: &str = "lag_histogram.csv";
pub const PMI_CSV: &str = "pmi.csv";
pub const LEXICON_COVERAGE_CSV: &str = "lexicon_coverage.csv";
pub const SEGMENTS_CSV: &str = "segments.csv";
pub const TRENDING_MONTHS_CSV: &str = "trending_months.csv";
pub const CONTINGENCY_CSV: &str = "contingency.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const ANALYZE_MANIFEST: &str = "analyze_manifest.json";

fn data(msg: String) -> CliError {
    CliError::Data(msg)
}

fn internal(msg: String) -> CliError {
    CliError::Internal(msg)
}

#[derive(Debug, Serialize)]
struct InputRecord {
    path: String,
    bytes: u64,
    sha256: String,
}

fn digest_inputs(paths: &[PathBuf]) -> Result<Vec<InputRecord>, CliError> {
    paths
        .iter()
        .map(|p| {
            let (bytes, sha256) = file_digest(p)?;
            Ok(InputRecord {
                path: p.to_string_lossy().into_owned(),
                bytes,
                sha256,
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| internal(format!("encoding {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| internal(format!("writing {}: {e}", path.display())))
}

fn language_filter(language: &str) -> Box<dyn LanguageFilter> {
    if language == "any" {
        Box::new(|_: &TextEvent| true)
    } else {
        Box::new(KeepLanguage(language.to_string()))
    }
}

fn load_dictionary_file(cfg: &RunConfig) -> Result<dictionary::LoadOutcome, CliError> {
    let file = File::open(&cfg.dictionary)
        .map_err(|e| data(format!("cannot open {}: {e}", cfg.dictionary.display())))?;
    dictionary::load_dictionary(BufReader::new(file), cfg.error_budget)
        .map_err(|e| data(format!("dictionary {}: {e}", cfg.dictionary.display())))
}

fn load_stopword_file(cfg: &RunConfig) -> Result<BTreeSet<String>, CliError> {
    match &cfg.stopwords {
        None => Ok(BTreeSet::new()),
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| data(format!("cannot open {}: {e}", path.display())))?;
            dictionary::load_stopwords(BufReader::new(file))
                .map_err(|e| data(format!("stopwords {}: {e}", path.display())))
        }
    }
}

fn expand_events_glob(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = glob::glob(pattern)
        .map_err(|e| CliError::Usage(format!("invalid events glob {pattern:?}: {e}")))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| data(format!("events glob: {e}")))?;
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(data(format!("no input files match events glob {pattern:?}")));
    }
    Ok(files)
}

/// Matching stage: scan every event shard against the eligible headwords
/// and persist the aggregates. Outputs land in a staging directory and are
/// promoted together, so a failed run leaves no partial outputs behind.
pub fn cmd_match(cfg: &RunConfig) -> Result<(), CliError> {
    let files = expand_events_glob(&cfg.events)?;
    let outcome = load_dictionary_file(cfg)?;
    let stopwords = load_stopword_file(cfg)?;
    let eligible = dictionary::filter_terms(
        outcome.terms.keys().map(String::as_str),
        &stopwords,
        &cfg.criteria(),
    );
    if eligible.is_empty() {
        return Err(data(format!(
            "no dictionary terms eligible for matching ({} records loaded)",
            outcome.terms.len()
        )));
    }
    let matcher =
        Matcher::new(eligible.iter()).map_err(|e| data(format!("building matcher: {e}")))?;

    let options = IngestOptions {
        window: cfg.window,
        format: ingest::EventFormat::default(),
        count_per_doc: cfg.count_per_doc,
    };
    let filter = language_filter(&cfg.language);
    let agg: Aggregates = ingest::ingest_files(&files, &matcher, filter.as_ref(), &options)
        .map_err(|e| data(format!("{e}")))?;

    fs::create_dir_all(&cfg.out)
        .map_err(|e| internal(format!("cannot create {}: {e}", cfg.out.display())))?;
    let staging = cfg.out.join(".staging-match");
    if staging.exists() {
        fs::remove_dir_all(&staging)
            .map_err(|e| internal(format!("cannot clear {}: {e}", staging.display())))?;
    }
    fs::create_dir_all(&staging)
        .map_err(|e| internal(format!("cannot create {}: {e}", staging.display())))?;

    let result = write_match_outputs(cfg, &files, &matcher, &outcome, &agg, &staging);
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
        return result;
    }
    for name in [
        TERMS_CSV,
        DAILY_CSV,
        COVERAGE_CSV,
        COVERAGE_DAYS_CSV,
        MATCH_MANIFEST,
    ] {
        fs::rename(staging.join(name), cfg.out.join(name))
            .map_err(|e| internal(format!("promoting {name}: {e}")))?;
    }
    fs::remove_dir_all(&staging)
        .map_err(|e| internal(format!("cannot remove {}: {e}", staging.display())))?;

    let s = &agg.stats;
    println!(
        "matched {} occurrences from {} events in {} shards ({} malformed, {} outside window, {} filtered by language)",
        s.matches, s.events, s.files, s.malformed, s.out_of_window, s.language_dropped
    );
    Ok(())
}

fn write_match_outputs(
    cfg: &RunConfig,
    files: &[PathBuf],
    matcher: &Matcher,
    outcome: &dictionary::LoadOutcome,
    agg: &Aggregates,
    staging: &Path,
) -> Result<(), CliError> {
    write_csv(
        &staging.join(TERMS_CSV),
        &["term_id", "term"],
        matcher
            .patterns()
            .iter()
            .enumerate()
            .map(|(id, term)| (id as u32, term.as_str())),
    )?;
    write_csv(
        &staging.join(DAILY_CSV),
        &["term_id", "day", "count"],
        agg.counts
            .sorted_rows()
            .into_iter()
            .map(|(id, day, n)| (id, day.to_string(), n)),
    )?;
    write_csv(
        &staging.join(COVERAGE_CSV),
        &["month", "observed_minutes", "expected_minutes"],
        cfg.window.months().map(|m| {
            (
                m,
                agg.coverage.observed_minutes(m),
                agg.coverage.expected_minutes(m),
            )
        }),
    )?;
    write_csv(
        &staging.join(COVERAGE_DAYS_CSV),
        &["day", "observed_minutes"],
        agg.coverage
            .day_minute_counts()
            .into_iter()
            .map(|(day, n)| (day.to_string(), n)),
    )?;

    let mut input_paths: Vec<PathBuf> = files.to_vec();
    input_paths.push(cfg.dictionary.clone());
    if let Some(p) = &cfg.stopwords {
        input_paths.push(p.clone());
    }
    #[derive(Serialize)]
    struct MatchManifest<'a> {
        command: &'static str,
        config: &'a RunConfig,
        config_sha256: String,
        inputs: Vec<InputRecord>,
        stats: ingest::IngestStats,
        patterns: usize,
        dictionary_records: usize,
        dictionary_errors: usize,
        outputs: Vec<&'static str>,
    }
    write_json(
        &staging.join(MATCH_MANIFEST),
        &MatchManifest {
            command: "match",
            config: cfg,
            config_sha256: cfg.hash(),
            inputs: digest_inputs(&input_paths)?,
            stats: agg.stats,
            patterns: matcher.pattern_count(),
            dictionary_records: outcome.records,
            dictionary_errors: outcome.errors.len(),
            outputs: vec![TERMS_CSV, DAILY_CSV, COVERAGE_CSV, COVERAGE_DAYS_CSV],
        },
    )
}

/// Everything the later stages need about one analyzed term.
struct TermData {
    id: u32,
    term: String,
    /// Corrected and imputed monthly totals over the window.
    tw_raw: MonthlySeries,
    /// The same series at per-day scale; correlation runs on this.
    tw: MonthlySeries,
    /// Dictionary activity over its longest contiguous run in the window.
    ud: MonthlySeries,
    defs: BTreeSet<Month>,
    tags: BTreeSet<String>,
}

#[derive(Debug, Default, Serialize)]
struct DropCounts {
    all_months_missing: usize,
    no_dictionary_activity: usize,
    correlation_skipped: usize,
}

/// Analysis stage: consume the matching stage's tables plus the declared
/// inputs, run selection through contingency, and write every report.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<(), CliError> {
    for name in [TERMS_CSV, DAILY_CSV, COVERAGE_CSV, COVERAGE_DAYS_CSV] {
        if !cfg.out.join(name).is_file() {
            return Err(data(format!(
                "missing {} in {}; run `termtrends match` first",
                name,
                cfg.out.display()
            )));
        }
    }
    check_window_consistency(cfg)?;

    let patterns = read_terms(&cfg.out.join(TERMS_CSV))?;
    let daily = read_daily_counts(&cfg.out.join(DAILY_CSV), patterns.len())?;
    let coverage = read_coverage_days(&cfg.out.join(COVERAGE_DAYS_CSV))?;
    let outcome = load_dictionary_file(cfg)?;
    let stopwords = load_stopword_file(cfg)?;

    // Selection. Totals are keyed by headword; terms the matcher never saw
    // have zero occurrences and fail the occurrence threshold.
    let criteria = cfg.criteria();
    let mut twitter_totals: BTreeMap<String, u64> = BTreeMap::new();
    for (id, days) in &daily {
        let total: u64 = days.values().sum();
        twitter_totals.insert(patterns[*id as usize].clone(), total);
    }
    let eligible =
        dictionary::filter_terms(outcome.terms.keys().map(String::as_str), &stopwords, &criteria);
    let mut selected =
        dictionary::select_analysis_terms(&outcome.terms, &twitter_totals, &criteria, &cfg.window);
    selected.retain(|t| eligible.contains(t));
    if selected.len() < 2 {
        return Err(selection_failure(cfg, &outcome.terms, &stopwords, &twitter_totals));
    }

    // Series construction, per term, in headword id order.
    let empty_days: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    let inputs: Vec<(u32, &TermRecord)> = selected
        .iter()
        .map(|t| {
            let id = pattern_id(&patterns, t).expect("selected terms passed the filter");
            (id, &outcome.terms[t])
        })
        .collect();
    let mut drops = DropCounts::default();
    let built: Vec<Result<TermData, &'static str>> = inputs
        .par_iter()
        .map(|(id, rec)| build_term_data(cfg, *id, rec, &daily, &empty_days, &coverage))
        .collect();
    let mut terms: Vec<TermData> = Vec::new();
    for item in built {
        match item {
            Ok(td) => terms.push(td),
            Err("all_months_missing") => drops.all_months_missing += 1,
            Err(_) => drops.no_dictionary_activity += 1,
        }
    }
    terms.sort_by_key(|t| t.id);

    fs::create_dir_all(&cfg.out)
        .map_err(|e| internal(format!("cannot create {}: {e}", cfg.out.display())))?;
    write_series_csvs(cfg, &terms)?;

    // Correlation with pooled FDR control.
    let opts = cfg.ccf_options();
    let corrs: Vec<Option<TermCorrelation>> = terms
        .par_iter()
        .map(|t| correlation::analyze_term(t.id, &t.ud, &t.tw, &opts))
        .collect();
    let analyzed: Vec<TermCorrelation> = corrs.into_iter().flatten().collect();
    drops.correlation_skipped = terms.len() - analyzed.len();
    let records = correlation::finalize(&analyzed, cfg.alpha);
    write_csv(
        &cfg.out.join(CORRELATIONS_CSV),
        &["term_id", "best_lag", "r_best", "p_value", "q_value", "category", "overlap_len"],
        records.iter().map(|r| {
            (
                r.term_id,
                r.best_lag,
                r.r_best,
                r.p_value,
                r.q_value,
                r.category.as_str(),
                r.overlap_len,
            )
        }),
    )?;
    let histogram = correlation::lag_histogram(&records);
    write_csv(
        &cfg.out.join(LAG_HISTOGRAM_CSV),
        &["lag", "category", "count"],
        histogram
            .iter()
            .map(|((lag, cat), n)| (*lag, cat.as_str(), *n)),
    )?;

    // Tag and lexicon association over the terms that produced a record.
    let categories: BTreeMap<u32, Category> =
        records.iter().map(|r| (r.term_id, r.category)).collect();
    let tags: BTreeMap<u32, BTreeSet<String>> = terms
        .iter()
        .filter(|t| categories.contains_key(&t.id))
        .map(|t| (t.id, t.tags.clone()))
        .collect();
    let pmi_opts = PmiOptions {
        support_floor: cfg.pmi_support_floor,
        log_base: match cfg.pmi_log_base {
            None => LogBase::Natural,
            Some(b) => LogBase::Base(b),
        },
    };
    let associations = association::pmi_tags(&tags, &categories, &pmi_opts);
    write_csv(
        &cfg.out.join(PMI_CSV),
        &["tag", "group", "pmi", "joint", "tag_total", "group_total"],
        associations.iter().map(|a| {
            (
                a.tag.as_str(),
                a.group.as_str(),
                a.pmi,
                a.joint_count,
                a.tag_count,
                a.group_count,
            )
        }),
    )?;
    if let Some(lex_path) = &cfg.lexicon {
        let file = File::open(lex_path)
            .map_err(|e| data(format!("cannot open {}: {e}", lex_path.display())))?;
        let lexicon = association::load_lexicon(BufReader::new(file))
            .map_err(|e| data(format!("lexicon {}: {e}", lex_path.display())))?;
        let by_id: BTreeMap<u32, &CorrelationRecord> =
            records.iter().map(|r| (r.term_id, r)).collect();
        let items = terms.iter().filter_map(|t| {
            by_id
                .get(&t.id)
                .map(|r| (t.term.as_str(), r.category, r.best_lag))
        });
        let cells = association::lexicon_coverage(items, &lexicon)
            .map_err(|e| data(format!("lexicon coverage: {e}")))?;
        write_csv(
            &cfg.out.join(LEXICON_COVERAGE_CSV),
            &["group", "lag_bucket", "fraction", "n"],
            cells.iter().map(|c| {
                (
                    c.group.as_str(),
                    c.lag_bucket.as_str(),
                    c.fraction,
                    c.n_terms,
                )
            }),
        )?;
    }

    // Trend detection on raw-scale series, both platforms.
    let reports: Vec<(TrendReport, TrendReport)> = terms
        .par_iter()
        .map(|t| {
            (
                trends::build_trend_report(t.id, Platform::Ud, &t.ud, cfg.pelt_penalty),
                trends::build_trend_report(t.id, Platform::Twitter, &t.tw_raw, cfg.pelt_penalty),
            )
        })
        .collect();
    write_trend_outputs(cfg, &terms, &reports)?;

    // Definition/trending contingency over the mutual overlap grid.
    let mut grid: BTreeMap<u32, MonthRange> = BTreeMap::new();
    for t in &terms {
        let lo = t.tw_raw.start().max(t.ud.start());
        let hi = t.tw_raw.end().min(t.ud.end());
        if lo < hi {
            grid.insert(t.id, MonthRange::new(lo, hi).expect("checked lo < hi"));
        }
    }
    let defs: BTreeMap<u32, BTreeSet<Month>> =
        terms.iter().map(|t| (t.id, t.defs.clone())).collect();
    let ud_trending: BTreeMap<u32, BTreeSet<Month>> = reports
        .iter()
        .map(|(ud, _)| (ud.term_id, ud.trending_months.clone()))
        .collect();
    let tw_trending: BTreeMap<u32, BTreeSet<Month>> = reports
        .iter()
        .map(|(_, tw)| (tw.term_id, tw.trending_months.clone()))
        .collect();
    let ud_stats = trends::contingency(&defs, &ud_trending, &grid);
    let tw_stats = trends::contingency(&defs, &tw_trending, &grid);
    write_contingency_csv(&cfg.out.join(CONTINGENCY_CSV), &ud_stats, &tw_stats)?;

    write_summary_and_manifest(
        cfg, &outcome, &selected, &terms, &records, &histogram, &drops, &ud_stats, &tw_stats,
    )?;

    let by_cat = |c: Category| records.iter().filter(|r| r.category == c).count();
    println!(
        "analyzed {} of {} selected terms: {} positive, {} negative, {} none",
        records.len(),
        selected.len(),
        by_cat(Category::Positive),
        by_cat(Category::Negative),
        by_cat(Category::None),
    );
    Ok(())
}

fn build_term_data(
    cfg: &RunConfig,
    id: u32,
    rec: &TermRecord,
    daily: &BTreeMap<u32, BTreeMap<NaiveDate, u64>>,
    empty_days: &BTreeMap<NaiveDate, u64>,
    coverage: &MinuteCoverage,
) -> Result<TermData, &'static str> {
    let days = daily.get(&id).unwrap_or(empty_days);
    let totals = series::monthly_totals(days, &cfg.window);
    let corrected = series::apply_correction(&totals, coverage);
    let tw_raw = match series::impute_missing(&corrected, coverage, cfg.max_missing_days) {
        Ok(s) => s,
        Err(SeriesError::AllMonthsMissing) => return Err("all_months_missing"),
        Err(_) => return Err("all_months_missing"),
    };
    let tw = tw_raw.daily_scale();
    let activity = rec.activity.as_ref().ok_or("no_dictionary_activity")?;
    let map: BTreeMap<Month, f64> = activity.iter().map(|(m, v)| (*m, *v as f64)).collect();
    let ud = MonthlySeries::from_map(&map, &cfg.window).ok_or("no_dictionary_activity")?;
    Ok(TermData {
        id,
        term: rec.term.clone(),
        tw_raw,
        tw,
        ud,
        defs: rec.definition_months.iter().copied().collect(),
        tags: rec.tags.clone(),
    })
}

fn write_series_csvs(cfg: &RunConfig, terms: &[TermData]) -> Result<(), CliError> {
    let tw_rows = terms.iter().flat_map(|t| {
        t.tw.iter()
            .map(move |(m, v, p)| (t.id, m, v, p.as_str()))
    });
    write_csv(
        &cfg.out.join(SERIES_TW_CSV),
        &["term_id", "month", "value", "provenance"],
        tw_rows,
    )?;
    let ud_rows = terms.iter().flat_map(|t| {
        t.ud.iter()
            .map(move |(m, v, p)| (t.id, m, v, p.as_str()))
    });
    write_csv(
        &cfg.out.join(SERIES_UD_CSV),
        &["term_id", "month", "value", "provenance"],
        ud_rows,
    )
}

fn write_trend_outputs(
    cfg: &RunConfig,
    terms: &[TermData],
    reports: &[(TrendReport, TrendReport)],
) -> Result<(), CliError> {
    let mut segment_rows = Vec::new();
    let mut trending_rows = Vec::new();
    for (ud, tw) in reports {
        for report in [ud, tw] {
            for seg in &report.segments {
                segment_rows.push((
                    report.term_id,
                    report.platform.as_str(),
                    seg.start,
                    seg.end,
                    seg.slope,
                    seg.trending,
                    seg.imputed_only,
                ));
            }
            for m in &report.trending_months {
                trending_rows.push((report.term_id, report.platform.as_str(), *m));
            }
        }
    }
    write_csv(
        &cfg.out.join(SEGMENTS_CSV),
        &["term_id", "platform", "seg_start", "seg_end", "slope", "trending", "imputed_only"],
        segment_rows,
    )?;
    write_csv(
        &cfg.out.join(TRENDING_MONTHS_CSV),
        &["term_id", "platform", "month"],
        trending_rows,
    )?;

    let plots = cfg.out.join("plots");
    fs::create_dir_all(&plots)
        .map_err(|e| internal(format!("cannot create {}: {e}", plots.display())))?;
    for ((ud, tw), t) in reports.iter().zip(terms) {
        for (report, series) in [(ud, &t.ud), (tw, &t.tw_raw)] {
            let name = format!("{}_{}.csv", report.term_id, report.platform.as_str());
            write_csv(
                &plots.join(name),
                &["month", "value", "trending_flag"],
                series
                    .iter()
                    .map(|(m, v, _)| (m, v, report.trending_months.contains(&m))),
            )?;
        }
    }
    Ok(())
}

fn write_contingency_csv(
    path: &Path,
    ud: &ContingencyStats,
    tw: &ContingencyStats,
) -> Result<(), CliError> {
    let mut rows: Vec<(&str, &str, Option<f64>, Option<f64>)> = Vec::new();
    for (platform, stats) in [("ud", ud), ("twitter", tw)] {
        let d_p = stats.d_test.map(|t| t.p_value);
        let u_p = stats.u_test.map(|t| t.p_value);
        rows.push((platform, "p(d|u)", stats.p_d_given_u, d_p));
        rows.push((platform, "p(d|~u)", stats.p_d_given_not_u, d_p));
        rows.push((platform, "p(u|d)", stats.p_u_given_d, u_p));
        rows.push((platform, "p(u|~d)", stats.p_u_given_not_d, u_p));
    }
    write_csv(path, &["platform", "quantity", "value", "p_value"], rows)
}

#[allow(clippy::too_many_arguments)]
fn write_summary_and_manifest(
    cfg: &RunConfig,
    outcome: &dictionary::LoadOutcome,
    selected: &BTreeSet<String>,
    terms: &[TermData],
    records: &[CorrelationRecord],
    histogram: &BTreeMap<(i32, Category), u64>,
    drops: &DropCounts,
    ud_stats: &ContingencyStats,
    tw_stats: &ContingencyStats,
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct HistogramRow {
        lag: i32,
        category: &'static str,
        count: u64,
    }
    #[derive(Serialize)]
    struct ContingencySummary {
        grid_cells: u64,
        p_d_given_u: Option<f64>,
        p_d_given_not_u: Option<f64>,
        p_u_given_d: Option<f64>,
        p_u_given_not_d: Option<f64>,
        d_test_p: Option<f64>,
        u_test_p: Option<f64>,
        d_significant: Option<bool>,
        u_significant: Option<bool>,
    }
    let contingency_summary = |s: &ContingencyStats| ContingencySummary {
        grid_cells: s.grid_size(),
        p_d_given_u: s.p_d_given_u,
        p_d_given_not_u: s.p_d_given_not_u,
        p_u_given_d: s.p_u_given_d,
        p_u_given_not_d: s.p_u_given_not_d,
        d_test_p: s.d_test.map(|t| t.p_value),
        u_test_p: s.u_test.map(|t| t.p_value),
        d_significant: s.d_test.map(|t| t.p_value < cfg.alpha_trend),
        u_significant: s.u_test.map(|t| t.p_value < cfg.alpha_trend),
    };
    #[derive(Serialize)]
    struct Summary<'a> {
        config_sha256: String,
        dictionary_terms: usize,
        selected_terms: usize,
        analyzed_terms: usize,
        dropped: &'a DropCounts,
        positive: usize,
        negative: usize,
        none: usize,
        lag_histogram: Vec<HistogramRow>,
        contingency_ud: ContingencySummary,
        contingency_twitter: ContingencySummary,
    }
    let by_cat = |c: Category| records.iter().filter(|r| r.category == c).count();
    write_json(
        &cfg.out.join(SUMMARY_JSON),
        &Summary {
            config_sha256: cfg.hash(),
            dictionary_terms: outcome.terms.len(),
            selected_terms: selected.len(),
            analyzed_terms: records.len(),
            dropped: drops,
            positive: by_cat(Category::Positive),
            negative: by_cat(Category::Negative),
            none: by_cat(Category::None),
            lag_histogram: histogram
                .iter()
                .map(|((lag, cat), n)| HistogramRow {
                    lag: *lag,
                    category: cat.as_str(),
                    count: *n,
                })
                .collect(),
            contingency_ud: contingency_summary(ud_stats),
            contingency_twitter: contingency_summary(tw_stats),
        },
    )?;

    let mut input_paths = vec![cfg.dictionary.clone()];
    if let Some(p) = &cfg.stopwords {
        input_paths.push(p.clone());
    }
    if let Some(p) = &cfg.lexicon {
        input_paths.push(p.clone());
    }
    for name in [TERMS_CSV, DAILY_CSV, COVERAGE_CSV, COVERAGE_DAYS_CSV] {
        input_paths.push(cfg.out.join(name));
    }
    #[derive(Serialize)]
    struct AnalyzeManifest<'a> {
        command: &'static str,
        config: &'a RunConfig,
        config_sha256: String,
        inputs: Vec<InputRecord>,
        series_terms: usize,
        outputs: Vec<String>,
    }
    let mut outputs: Vec<String> = [
        SERIES_TW_CSV,
        SERIES_UD_CSV,
        CORRELATIONS_CSV,
        LAG_HISTOGRAM_CSV,
        PMI_CSV,
        SEGMENTS_CSV,
        TRENDING_MONTHS_CSV,
        CONTINGENCY_CSV,
        SUMMARY_JSON,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if cfg.lexicon.is_some() {
        outputs.push(LEXICON_COVERAGE_CSV.to_string());
    }
    for t in terms {
        outputs.push(format!("plots/{}_ud.csv", t.id));
        outputs.push(format!("plots/{}_twitter.csv", t.id));
    }
    outputs.sort();
    write_json(
        &cfg.out.join(ANALYZE_MANIFEST),
        &AnalyzeManifest {
            command: "analyze",
            config: cfg,
            config_sha256: cfg.hash(),
            inputs: digest_inputs(&input_paths)?,
            series_terms: terms.len(),
            outputs,
        },
    )
}

fn selection_failure(
    cfg: &RunConfig,
    dict: &BTreeMap<String, TermRecord>,
    stopwords: &BTreeSet<String>,
    totals: &BTreeMap<String, u64>,
) -> CliError {
    let criteria = cfg.criteria();
    let mut short = 0usize;
    let mut stopped = 0usize;
    let mut rare = 0usize;
    let mut sparse = 0usize;
    let mut selected = 0usize;
    for rec in dict.values() {
        let mut failed = false;
        if rec.term.chars().count() < criteria.min_term_length {
            short += 1;
            failed = true;
        }
        if stopwords.contains(&rec.term) {
            stopped += 1;
            failed = true;
        }
        if totals.get(&rec.term).copied().unwrap_or(0) < criteria.min_occurrences {
            rare += 1;
            failed = true;
        }
        if dictionary::activity_overlap_months(rec, &cfg.window) < criteria.min_overlap_months {
            sparse += 1;
            failed = true;
        }
        if !failed {
            selected += 1;
        }
    }
    data(format!(
        "only {selected} of {} dictionary terms selected (need at least 2): \
         {short} shorter than {} chars, {stopped} stopwords, \
         {rare} under {} occurrences, {sparse} under {} activity months",
        dict.len(),
        criteria.min_term_length,
        criteria.min_occurrences,
        criteria.min_overlap_months,
    ))
}

fn check_window_consistency(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg.out.join(MATCH_MANIFEST);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(());
    };
    let Ok(value) = serde_json::from_str::<serde_json::Value>(&text) else {
        return Ok(());
    };
    let get = |k: &str| {
        value
            .get("config")
            .and_then(|c| c.get("window"))
            .and_then(|w| w.get(k))
            .and_then(|v| v.as_str())
            .map(str::to_string)
    };
    if let (Some(start), Some(end)) = (get("start"), get("end")) {
        let recorded = format!("{start}:{end}");
        let configured = cfg.window.to_string();
        if recorded != configured {
            return Err(data(format!(
                "window mismatch: match ran with {recorded}, analyze configured with {configured}"
            )));
        }
    }
    Ok(())
}

fn read_terms(path: &Path) -> Result<Vec<String>, CliError> {
    let rows: Vec<(u32, String)> = read_csv(path)?;
    for (ix, (id, _)) in rows.iter().enumerate() {
        if *id as usize != ix {
            return Err(data(format!(
                "corrupt {}: term_id {id} at row {ix}",
                path.display()
            )));
        }
    }
    Ok(rows.into_iter().map(|(_, term)| term).collect())
}

/// Headword to matcher id, via binary search over the sorted pattern list.
fn pattern_id(patterns: &[String], term: &str) -> Option<u32> {
    patterns
        .binary_search_by(|p| p.as_str().cmp(term))
        .ok()
        .map(|ix| ix as u32)
}

fn read_daily_counts(
    path: &Path,
    n_patterns: usize,
) -> Result<BTreeMap<u32, BTreeMap<NaiveDate, u64>>, CliError> {
    let rows: Vec<(u32, String, u64)> = read_csv(path)?;
    let mut out: BTreeMap<u32, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    for (id, day, count) in rows {
        if id as usize >= n_patterns {
            return Err(data(format!(
                "corrupt {}: term_id {id} not in {}",
                path.display(),
                TERMS_CSV
            )));
        }
        let day: NaiveDate = day
            .parse()
            .map_err(|e| data(format!("corrupt {}: day {day:?}: {e}", path.display())))?;
        *out.entry(id).or_default().entry(day).or_insert(0) += count;
    }
    Ok(out)
}

fn read_coverage_days(path: &Path) -> Result<MinuteCoverage, CliError> {
    let rows: Vec<(String, u32)> = read_csv(path)?;
    let mut counts: BTreeMap<NaiveDate, u32> = BTreeMap::new();
    for (day, n) in rows {
        let day: NaiveDate = day
            .parse()
            .map_err(|e| data(format!("corrupt {}: day {day:?}: {e}", path.display())))?;
        counts.insert(day, n);
    }
    Ok(MinuteCoverage::from_day_counts(&counts))
}

/// Per-term export: aligned raw series, z-scores over the mutual overlap,
/// and the trending flags from the analysis stage.
pub fn cmd_plotdata(cfg: &RunConfig, term_arg: &str) -> Result<(), CliError> {
    for name in [TERMS_CSV, SERIES_TW_CSV, SERIES_UD_CSV, TRENDING_MONTHS_CSV] {
        if !cfg.out.join(name).is_file() {
            return Err(data(format!(
                "missing {} in {}; run `termtrends analyze` first",
                name,
                cfg.out.display()
            )));
        }
    }
    let patterns = read_terms(&cfg.out.join(TERMS_CSV))?;
    let tw_series = read_series(&cfg.out.join(SERIES_TW_CSV))?;
    let ud_series = read_series(&cfg.out.join(SERIES_UD_CSV))?;

    let id = resolve_term(term_arg, &patterns, &tw_series)?;
    let tw = series_from_rows(&tw_series[&id])
        .ok_or_else(|| data(format!("series for term {id} is not contiguous")))?;
    let ud = ud_series
        .get(&id)
        .and_then(|rows| series_from_rows(rows))
        .ok_or_else(|| data(format!("term {id} has no dictionary series")))?;

    let lo = tw.start().max(ud.start());
    let hi = tw.end().min(ud.end());
    if lo >= hi {
        return Err(data(format!(
            "term {id}: series overlap shorter than 2 months; nothing to plot"
        )));
    }
    let span = MonthRange::new(lo, hi).expect("checked lo < hi");
    let tw_norm = series::normalize(&tw, &span).map_err(|e| {
        data(format!("term {id}: text series cannot be normalized over {span}: {e}"))
    })?;
    let ud_norm = series::normalize(&ud, &span).map_err(|e| {
        data(format!("term {id}: dictionary series cannot be normalized over {span}: {e}"))
    })?;

    let trending: Vec<(u32, String, String)> = read_csv(&cfg.out.join(TRENDING_MONTHS_CSV))?;
    let mut ud_flags: BTreeSet<Month> = BTreeSet::new();
    let mut tw_flags: BTreeSet<Month> = BTreeSet::new();
    for (tid, platform, month) in trending {
        if tid != id {
            continue;
        }
        let m: Month = month
            .parse()
            .map_err(|e| data(format!("corrupt {TRENDING_MONTHS_CSV}: {month:?}: {e}")))?;
        match platform.as_str() {
            "ud" => ud_flags.insert(m),
            "twitter" => tw_flags.insert(m),
            other => {
                return Err(data(format!(
                    "corrupt {TRENDING_MONTHS_CSV}: unknown platform {other:?}"
                )))
            }
        };
    }

    let out_path = cfg.out.join(format!("plotdata_{id}.csv"));
    write_csv(
        &out_path,
        &["month", "ud_value", "twitter_value", "ud_norm", "twitter_norm", "ud_trending", "twitter_trending"],
        span.months().map(|m| {
            (
                m,
                ud.get(m).expect("span within series"),
                tw.get(m).expect("span within series"),
                ud_norm.get(m).expect("span within series"),
                tw_norm.get(m).expect("span within series"),
                ud_flags.contains(&m),
                tw_flags.contains(&m),
            )
        }),
    )?;

    #[derive(Serialize)]
    struct PlotManifest<'a> {
        command: &'static str,
        config: &'a RunConfig,
        config_sha256: String,
        term_id: u32,
        term: &'a str,
        months: usize,
        output: String,
    }
    write_json(
        &cfg.out.join(format!("plotdata_{id}_manifest.json")),
        &PlotManifest {
            command: "plotdata",
            config: cfg,
            config_sha256: cfg.hash(),
            term_id: id,
            term: &patterns[id as usize],
            months: span.len(),
            output: format!("plotdata_{id}.csv"),
        },
    )?;
    println!(
        "wrote {} ({} months, term {:?})",
        out_path.display(),
        span.len(),
        patterns[id as usize]
    );
    Ok(())
}

type SeriesRows = BTreeMap<u32, Vec<(Month, f64)>>;

fn read_series(path: &Path) -> Result<SeriesRows, CliError> {
    let rows: Vec<(u32, String, f64, String)> = read_csv(path)?;
    let mut out: SeriesRows = BTreeMap::new();
    for (id, month, value, _provenance) in rows {
        let m: Month = month
            .parse()
            .map_err(|e| data(format!("corrupt {}: month {month:?}: {e}", path.display())))?;
        out.entry(id).or_default().push((m, value));
    }
    Ok(out)
}

fn series_from_rows(rows: &[(Month, f64)]) -> Option<MonthlySeries> {
    let (first, _) = *rows.first()?;
    for (ix, (m, _)) in rows.iter().enumerate() {
        if m.index() != first.index() + ix as i32 {
            return None;
        }
    }
    Some(MonthlySeries::uniform(
        first,
        rows.iter().map(|(_, v)| *v).collect(),
        series::Provenance::Observed,
    ))
}

/// Accept a numeric term id or a headword; on failure, suggest the closest
/// analyzed headwords by edit distance.
fn resolve_term(arg: &str, patterns: &[String], analyzed: &SeriesRows) -> Result<u32, CliError> {
    if let Ok(id) = arg.parse::<u32>() {
        if analyzed.contains_key(&id) {
            return Ok(id);
        }
    }
    let wanted = dictionary::normalize(arg);
    if let Some(id) = pattern_id(patterns, &wanted) {
        if analyzed.contains_key(&id) {
            return Ok(id);
        }
    }
    let mut scored: Vec<(usize, &str)> = analyzed
        .keys()
        .map(|id| {
            let term = patterns[*id as usize].as_str();
            (edit_distance(&wanted, term), term)
        })
        .collect();
    scored.sort();
    let nearest: Vec<&str> = scored.iter().take(3).map(|(_, t)| *t).collect();
    if nearest.is_empty() {
        Err(data(format!(
            "term {arg:?} not found: no terms were analyzed"
        )))
    } else {
        Err(data(format!(
            "term {arg:?} not found among analyzed terms; nearest: {}",
            nearest.join(", ")
        )))
    }
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
