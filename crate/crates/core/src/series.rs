//! Monthly series construction and conditioning.
//!
//! Text-platform daily counts become month totals a(M); each total is scaled
//! by the coverage correction C(M) = expected/observed minutes and rounded,
//! giving â(M). Months missing more than `max_missing_days` whole days are
//! then imputed from their nearest intact neighbors. Dictionary-side
//! activity values are used as-is; they are already monthly.
//!
//! Downstream analysis works on the corrected average daily count
//! â(M)/n_days(M), see [`MonthlySeries::daily_scale`]; correction and
//! rounding themselves always apply to month totals.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::ingest::MinuteCoverage;
use crate::month::{Month, MonthRange};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SeriesError {
    #[error("constant series: zero variance over the normalization span")]
    DegenerateSeries,
    #[error("series has {0} months in span; at least 2 required")]
    TooShort(usize),
    #[error("no intact month to impute from; series is entirely missing")]
    AllMonthsMissing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Observed,
    Corrected,
    Imputed,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Observed => "observed",
            Provenance::Corrected => "corrected",
            Provenance::Imputed => "imputed",
        }
    }
}

/// A contiguous run of monthly values with per-month provenance.
/// Contiguity is structural: values are indexed from `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries {
    start: Month,
    values: Vec<f64>,
    provenance: Vec<Provenance>,
}

impl MonthlySeries {
    pub fn new(start: Month, values: Vec<f64>, provenance: Vec<Provenance>) -> MonthlySeries {
        assert_eq!(values.len(), provenance.len());
        MonthlySeries {
            start,
            values,
            provenance,
        }
    }

    pub fn uniform(start: Month, values: Vec<f64>, provenance: Provenance) -> MonthlySeries {
        let n = values.len();
        MonthlySeries::new(start, values, vec![provenance; n])
    }

    /// Build from sparse month values: takes the longest contiguous run of
    /// months present within the window (the earliest run on ties). Interior
    /// gaps never get fabricated values; they bound the usable run instead.
    pub fn from_map(map: &BTreeMap<Month, f64>, window: &MonthRange) -> Option<MonthlySeries> {
        let months: Vec<Month> = map.keys().copied().filter(|m| window.contains(*m)).collect();
        if months.is_empty() {
            return None;
        }
        let mut best: (usize, usize) = (0, 1); // (start index, length)
        let mut run_start = 0;
        for i in 1..=months.len() {
            let broken = i == months.len()
                || months[i].index() != months[i - 1].index() + 1;
            if broken {
                let len = i - run_start;
                if len > best.1 {
                    best = (run_start, len);
                }
                run_start = i;
            }
        }
        let (s, len) = best;
        let values = months[s..s + len].iter().map(|m| map[m]).collect();
        Some(MonthlySeries::uniform(months[s], values, Provenance::Observed))
    }

    pub fn start(&self) -> Month {
        self.start
    }

    pub fn end(&self) -> Month {
        self.start.offset(self.values.len() as i32 - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, m: Month) -> Option<f64> {
        let ix = m.index() - self.start.index();
        if ix < 0 {
            return None;
        }
        self.values.get(ix as usize).copied()
    }

    pub fn provenance_at(&self, m: Month) -> Option<Provenance> {
        let ix = m.index() - self.start.index();
        if ix < 0 {
            return None;
        }
        self.provenance.get(ix as usize).copied()
    }

    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        let s = self.start.index();
        (0..self.values.len() as i32).map(move |i| Month::from_index(s + i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Month, f64, Provenance)> + '_ {
        self.months()
            .zip(self.values.iter().copied())
            .zip(self.provenance.iter().copied())
            .map(|((m, v), p)| (m, v, p))
    }

    /// The series divided by each month's day count: corrected average
    /// daily counts, the values downstream analysis consumes.
    pub fn daily_scale(&self) -> MonthlySeries {
        let values = self
            .months()
            .zip(self.values.iter())
            .map(|(m, v)| v / m.n_days() as f64)
            .collect();
        MonthlySeries::new(self.start, values, self.provenance.clone())
    }
}

/// Sum daily counts into month totals a(M) for every month of the window.
/// Days without counts contribute 0, so every window month is present.
pub fn monthly_totals(
    daily: &BTreeMap<NaiveDate, u64>,
    window: &MonthRange,
) -> BTreeMap<Month, u64> {
    let mut out: BTreeMap<Month, u64> = window.months().map(|m| (m, 0)).collect();
    for (day, &n) in daily {
        let m = Month::from_date(*day);
        if let Some(total) = out.get_mut(&m) {
            *total += n;
        }
    }
    out
}

/// Month totals divided by the month's day count, leap years included.
pub fn monthly_average(
    daily: &BTreeMap<NaiveDate, u64>,
    window: &MonthRange,
) -> BTreeMap<Month, f64> {
    monthly_totals(daily, window)
        .into_iter()
        .map(|(m, total)| (m, total as f64 / m.n_days() as f64))
        .collect()
}

/// Outcome of the per-month coverage correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correction {
    /// C(M) = E_m(M) / O_m(M), ≥ 1 whenever observed ≤ expected.
    Factor(f64),
    /// No observed minutes at all; the month belongs to imputation.
    FullyMissing,
}

pub fn correction_factor(coverage: &MinuteCoverage, month: Month) -> Correction {
    let observed = coverage.observed_minutes(month);
    if observed == 0 {
        return Correction::FullyMissing;
    }
    Correction::Factor(coverage.expected_minutes(month) as f64 / observed as f64)
}

/// â(M) = round(a(M) × C(M)) for every month of `totals`.
///
/// Fully-missing months keep their (necessarily zero) total and stay
/// `observed`; imputation is responsible for them. Months at full coverage
/// stay `observed` too; anything actually scaled is `corrected`.
pub fn apply_correction(
    totals: &BTreeMap<Month, u64>,
    coverage: &MinuteCoverage,
) -> MonthlySeries {
    assert!(!totals.is_empty(), "cannot correct an empty totals map");
    let start = *totals.keys().next().unwrap();
    let end = *totals.keys().last().unwrap();
    assert_eq!(
        (end.index() - start.index() + 1) as usize,
        totals.len(),
        "month totals must be contiguous"
    );
    let mut values = Vec::with_capacity(totals.len());
    let mut provenance = Vec::with_capacity(totals.len());
    for (&m, &a) in totals {
        match correction_factor(coverage, m) {
            Correction::FullyMissing => {
                values.push(a as f64);
                provenance.push(Provenance::Observed);
            }
            Correction::Factor(c) => {
                if c == 1.0 {
                    values.push(a as f64);
                    provenance.push(Provenance::Observed);
                } else {
                    values.push((a as f64 * c).round());
                    provenance.push(Provenance::Corrected);
                }
            }
        }
    }
    MonthlySeries::new(start, values, provenance)
}

/// Replace months missing more than `max_missing_days` whole days (a day is
/// missing when all 1,440 of its minutes are unobserved; the cutoff is
/// strict) with the mean of the nearest intact neighbors' corrected values.
/// A run of consecutive gap months shares one imputed value; at the series
/// edges the single available neighbor is copied.
pub fn impute_missing(
    series: &MonthlySeries,
    coverage: &MinuteCoverage,
    max_missing_days: u32,
) -> Result<MonthlySeries, SeriesError> {
    let needs_impute: Vec<bool> = series
        .months()
        .map(|m| coverage.missing_days(m) > max_missing_days)
        .collect();
    if needs_impute.iter().all(|&b| b) {
        return Err(SeriesError::AllMonthsMissing);
    }
    let mut values = series.values.clone();
    let mut provenance = series.provenance.clone();
    let n = values.len();
    let mut i = 0;
    while i < n {
        if !needs_impute[i] {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && needs_impute[i] {
            i += 1;
        }
        let prev = (run_start > 0).then(|| series.values[run_start - 1]);
        let next = (i < n).then(|| series.values[i]);
        let fill = match (prev, next) {
            (Some(a), Some(b)) => (a + b) / 2.0,
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("fully-missing series rejected above"),
        };
        for k in run_start..i {
            values[k] = fill;
            provenance[k] = Provenance::Imputed;
        }
    }
    Ok(MonthlySeries::new(series.start, values, provenance))
}

/// A z-scored series with the moments that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub start: Month,
    pub values: Vec<f64>,
    /// μ_S over the normalization span.
    pub mean: f64,
    /// Population standard deviation σ_S over the normalization span.
    pub std: f64,
}

impl NormalizedSeries {
    pub fn months(&self) -> impl Iterator<Item = Month> + '_ {
        let s = self.start.index();
        (0..self.values.len() as i32).map(move |i| Month::from_index(s + i))
    }

    pub fn get(&self, m: Month) -> Option<f64> {
        let ix = m.index() - self.start.index();
        if ix < 0 {
            return None;
        }
        self.values.get(ix as usize).copied()
    }
}

pub fn population_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// n(M,S) = (value − μ_S) / σ_S over the months of the series inside
/// `span`, with population moments computed over that same stretch.
pub fn normalize(series: &MonthlySeries, span: &MonthRange) -> Result<NormalizedSeries, SeriesError> {
    let months: Vec<Month> = series.months().filter(|m| span.contains(*m)).collect();
    if months.len() < 2 {
        return Err(SeriesError::TooShort(months.len()));
    }
    let values: Vec<f64> = months.iter().map(|m| series.get(*m).unwrap()).collect();
    let (mean, std) = population_moments(&values);
    if std == 0.0 {
        return Err(SeriesError::DegenerateSeries);
    }
    Ok(NormalizedSeries {
        start: months[0],
        values: values.iter().map(|v| (v - mean) / std).collect(),
        mean,
        std,
    })
}
