use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use termtrends_core::correlation::{self, CcfMode};
use termtrends_core::dictionary::SelectionCriteria;
use termtrends_core::month::MonthRange;

use crate::CliError;

/// CCF estimator choice, stable across CLI flag, config file, and manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CcfModeArg {
    PerWindow,
    GlobalMoments,
}

impl CcfModeArg {
    pub fn to_core(self) -> CcfMode {
        match self {
            CcfModeArg::PerWindow => CcfMode::PerWindow,
            CcfModeArg::GlobalMoments => CcfMode::GlobalMoments,
        }
    }
}

/// Effective configuration of one run, after merging the config file with
/// flag overrides. Serialized into every manifest; the hash of its
/// canonical JSON identifies the configuration a report came from. The
/// thread count is deliberately not part of it: outputs are required to be
/// independent of parallelism.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub window: MonthRange,
    /// Glob for event shards.
    pub events: String,
    pub dictionary: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub out: PathBuf,
    pub min_occurrences: u64,
    pub min_overlap_months: usize,
    pub min_term_length: usize,
    pub k_min: i32,
    pub k_max: i32,
    /// Minimum months of series overlap for a lag to be evaluated.
    pub min_lag_overlap: usize,
    pub alpha: f64,
    pub alpha_trend: f64,
    /// None: per-series BIC-like default.
    pub pelt_penalty: Option<f64>,
    pub ccf_mode: CcfModeArg,
    pub count_per_doc: bool,
    /// Language tag events must carry; "any" disables the filter.
    pub language: String,
    /// Tolerated fraction of malformed dictionary records.
    pub error_budget: f64,
    /// Months missing more than this many whole days are imputed.
    pub max_missing_days: u32,
    pub pmi_support_floor: u64,
    /// None: natural log.
    pub pmi_log_base: Option<f64>,
    /// Seed for the randomized self-test suites.
    pub seed: u64,
}

impl RunConfig {
    pub fn criteria(&self) -> SelectionCriteria {
        SelectionCriteria {
            min_occurrences: self.min_occurrences,
            min_overlap_months: self.min_overlap_months,
            min_term_length: self.min_term_length,
        }
    }

    pub fn ccf_options(&self) -> correlation::CcfOptions {
        correlation::CcfOptions {
            k_min: self.k_min,
            k_max: self.k_max,
            min_overlap: self.min_lag_overlap,
            mode: self.ccf_mode.to_core(),
        }
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

/// Flags shared by the match/analyze/plotdata subcommands. Every value is
/// optional here; required ones are enforced after the merge so they can
/// come from either source.
#[derive(Debug, Default, clap::Args)]
pub struct ConfigArgs {
    /// TOML config file; flags override its values.
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Analysis window, e.g. 2012-01:2019-09.
    #[arg(long)]
    pub window: Option<String>,
    /// Glob for newline-delimited JSON event shards (.gz accepted).
    #[arg(long)]
    pub events: Option<String>,
    /// Dictionary file, one JSON record per line.
    #[arg(long = "dict")]
    pub dictionary: Option<PathBuf>,
    /// Stopword file, one lowercase word per line.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Lexicon file, one headword per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub min_occurrences: Option<u64>,
    #[arg(long)]
    pub min_overlap_months: Option<usize>,
    #[arg(long)]
    pub min_term_length: Option<usize>,
    #[arg(long)]
    pub k_min: Option<i32>,
    #[arg(long)]
    pub k_max: Option<i32>,
    #[arg(long)]
    pub min_lag_overlap: Option<usize>,
    /// FDR level for correlation significance.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Significance level for the contingency t-tests.
    #[arg(long)]
    pub alpha_trend: Option<f64>,
    /// Fixed PELT penalty; omit for the per-series default.
    #[arg(long)]
    pub pelt_penalty: Option<f64>,
    #[arg(long, value_enum)]
    pub ccf_mode: Option<CcfModeArg>,
    /// Count a term at most once per document.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub count_per_doc: Option<bool>,
    /// Language tag to keep; "any" disables the filter.
    #[arg(long = "lang")]
    pub language: Option<String>,
    /// Tolerated fraction of malformed dictionary records.
    #[arg(long)]
    pub error_budget: Option<f64>,
    #[arg(long)]
    pub max_missing_days: Option<u32>,
    #[arg(long)]
    pub pmi_support_floor: Option<u64>,
    /// PMI logarithm base; omit for natural log.
    #[arg(long)]
    pub pmi_log_base: Option<f64>,
    /// Seed for randomized self-test suites.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 or omitted picks the machine default.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    window: Option<String>,
    seed: Option<u64>,
    #[serde(default)]
    paths: FilePaths,
    #[serde(default)]
    thresholds: FileThresholds,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePaths {
    events: Option<String>,
    dictionary: Option<PathBuf>,
    stopwords: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileThresholds {
    min_occurrences: Option<u64>,
    min_overlap_months: Option<usize>,
    min_term_length: Option<usize>,
    k_min: Option<i32>,
    k_max: Option<i32>,
    min_lag_overlap: Option<usize>,
    alpha: Option<f64>,
    alpha_trend: Option<f64>,
    pelt_penalty: Option<f64>,
    ccf_mode: Option<CcfModeArg>,
    count_per_doc: Option<bool>,
    language: Option<String>,
    error_budget: Option<f64>,
    max_missing_days: Option<u32>,
    pmi_support_floor: Option<u64>,
    pmi_log_base: Option<f64>,
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

/// Join a possibly relative path onto the config file's directory, so a
/// config travels with the data it names. Flag-supplied paths resolve
/// against the working directory as usual.
fn rebase(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

fn rebase_glob(base: Option<&Path>, pattern: String) -> String {
    match base {
        Some(dir) if Path::new(&pattern).is_relative() => {
            dir.join(&pattern).to_string_lossy().into_owned()
        }
        _ => pattern,
    }
}

/// Merge flags over the config file over defaults, then validate. All
/// failures here are usage errors: nothing has been read or written yet
/// beyond the config file itself.
pub fn resolve(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let (file, base): (FileConfig, Option<PathBuf>) = match &args.config {
        None => (FileConfig::default(), None),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let parsed: FileConfig = toml::from_str(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
            (parsed, path.parent().map(Path::to_path_buf))
        }
    };
    let base = base.as_deref();

    let window_text = args
        .window
        .clone()
        .or(file.window)
        .ok_or_else(|| usage("missing required setting: window (--window or config)".into()))?;
    let window: MonthRange = window_text
        .parse()
        .map_err(|e| usage(format!("invalid window {window_text:?}: {e}")))?;

    let events = args
        .events
        .clone()
        .or_else(|| file.paths.events.clone().map(|p| rebase_glob(base, p)))
        .ok_or_else(|| usage("missing required setting: events glob (--events or config)".into()))?;
    let dictionary = args
        .dictionary
        .clone()
        .or_else(|| file.paths.dictionary.clone().map(|p| rebase(base, p)))
        .ok_or_else(|| usage("missing required setting: dictionary (--dict or config)".into()))?;
    let out = args
        .out
        .clone()
        .or_else(|| file.paths.out.clone().map(|p| rebase(base, p)))
        .ok_or_else(|| usage("missing required setting: output directory (--out or config)".into()))?;
    let stopwords = args
        .stopwords
        .clone()
        .or_else(|| file.paths.stopwords.clone().map(|p| rebase(base, p)));
    let lexicon = args
        .lexicon
        .clone()
        .or_else(|| file.paths.lexicon.clone().map(|p| rebase(base, p)));

    let t = &file.thresholds;
    let defaults = SelectionCriteria::default();
    let cfg = RunConfig {
        window,
        events,
        dictionary,
        stopwords,
        lexicon,
        out,
        min_occurrences: args
            .min_occurrences
            .or(t.min_occurrences)
            .unwrap_or(defaults.min_occurrences),
        min_overlap_months: args
            .min_overlap_months
            .or(t.min_overlap_months)
            .unwrap_or(defaults.min_overlap_months),
        min_term_length: args
            .min_term_length
            .or(t.min_term_length)
            .unwrap_or(defaults.min_term_length),
        k_min: args.k_min.or(t.k_min).unwrap_or(correlation::DEFAULT_LAG_MIN),
        k_max: args.k_max.or(t.k_max).unwrap_or(correlation::DEFAULT_LAG_MAX),
        min_lag_overlap: args
            .min_lag_overlap
            .or(t.min_lag_overlap)
            .unwrap_or(correlation::DEFAULT_MIN_OVERLAP),
        alpha: args.alpha.or(t.alpha).unwrap_or(correlation::DEFAULT_ALPHA),
        alpha_trend: args
            .alpha_trend
            .or(t.alpha_trend)
            .unwrap_or(termtrends_core::trends::DEFAULT_TREND_ALPHA),
        pelt_penalty: args.pelt_penalty.or(t.pelt_penalty),
        ccf_mode: args.ccf_mode.or(t.ccf_mode).unwrap_or(CcfModeArg::PerWindow),
        count_per_doc: args.count_per_doc.or(t.count_per_doc).unwrap_or(false),
        language: args
            .language
            .clone()
            .or_else(|| t.language.clone())
            .unwrap_or_else(|| "en".into()),
        error_budget: args.error_budget.or(t.error_budget).unwrap_or(0.01),
        max_missing_days: args.max_missing_days.or(t.max_missing_days).unwrap_or(14),
        pmi_support_floor: args.pmi_support_floor.or(t.pmi_support_floor).unwrap_or(5),
        pmi_log_base: args.pmi_log_base.or(t.pmi_log_base),
        seed: args.seed.or(file.seed).unwrap_or(42),
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.k_min > cfg.k_max {
        return Err(usage(format!(
            "k_min {} exceeds k_max {}",
            cfg.k_min, cfg.k_max
        )));
    }
    if cfg.min_lag_overlap < 3 {
        return Err(usage(format!(
            "min_lag_overlap {} too small: the correlation test needs at least 3 points",
            cfg.min_lag_overlap
        )));
    }
    for (name, v) in [
        ("alpha", cfg.alpha),
        ("alpha_trend", cfg.alpha_trend),
        ("error_budget", cfg.error_budget),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(usage(format!("{name} {v} outside [0, 1]")));
        }
    }
    if let Some(p) = cfg.pelt_penalty {
        if !(p > 0.0) || !p.is_finite() {
            return Err(usage(format!("pelt_penalty {p} must be positive and finite")));
        }
    }
    if let Some(b) = cfg.pmi_log_base {
        if !(b > 0.0) || b == 1.0 || !b.is_finite() {
            return Err(usage(format!("pmi_log_base {b} must be positive and not 1")));
        }
    }
    if cfg.language.is_empty() {
        return Err(usage("language must be a tag or \"any\"".into()));
    }
    glob::Pattern::new(&cfg.events)
        .map_err(|e| usage(format!("invalid events glob {:?}: {e}", cfg.events)))?;
    if !cfg.dictionary.is_file() {
        return Err(usage(format!(
            "dictionary not found: {}",
            cfg.dictionary.display()
        )));
    }
    for (name, path) in [("stopwords", &cfg.stopwords), ("lexicon", &cfg.lexicon)] {
        if let Some(p) = path {
            if !p.is_file() {
                return Err(usage(format!("{name} file not found: {}", p.display())));
            }
        }
    }
    Ok(())
}
