//! Lagged cross-correlation between dictionary-side and text-platform
//! monthly series, per-term significance, FDR control, and categorization.
//!
//! For lag k the paired samples are (U[M+k], T[M]) over every month M where
//! both series are defined, so positive k means the text platform leads and
//! the dictionary follows. The default mode computes a true Pearson r over
//! each overlap window; `CcfMode::GlobalMoments` instead z-scores each
//! series once over its full extent and sums products literally, which
//! scales with overlap length (kept for comparison experiments).

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::series::{population_moments, MonthlySeries};

pub const DEFAULT_LAG_MIN: i32 = -3;
pub const DEFAULT_LAG_MAX: i32 = 3;
pub const DEFAULT_MIN_OVERLAP: usize = 12;
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CorrError {
    #[error("overlap of {0} months is too short for a significance test")]
    UndefinedTest(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CcfMode {
    /// Pearson r over each lag's overlap window, moments recomputed per lag.
    #[default]
    PerWindow,
    /// Literal sum of products of globally z-scored values; unbounded.
    GlobalMoments,
}

#[derive(Debug, Clone, Copy)]
pub struct CcfOptions {
    pub k_min: i32,
    pub k_max: i32,
    pub min_overlap: usize,
    pub mode: CcfMode,
}

impl Default for CcfOptions {
    fn default() -> CcfOptions {
        CcfOptions {
            k_min: DEFAULT_LAG_MIN,
            k_max: DEFAULT_LAG_MAX,
            min_overlap: DEFAULT_MIN_OVERLAP,
            mode: CcfMode::PerWindow,
        }
    }
}

/// Why a lag was left out of `r_by_lag`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagSkip {
    ShortOverlap(usize),
    ZeroVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagValue {
    pub r: f64,
    pub overlap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCorrelation {
    pub r_by_lag: BTreeMap<i32, LagValue>,
    pub skipped: BTreeMap<i32, LagSkip>,
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Correlation by lag between `ud` (dictionary side) and `tw` (text side).
/// Lags whose overlap is shorter than `min_overlap` or has zero variance on
/// either side are reported in `skipped` instead.
pub fn cross_correlation(
    ud: &MonthlySeries,
    tw: &MonthlySeries,
    opts: &CcfOptions,
) -> CrossCorrelation {
    assert!(opts.k_min <= opts.k_max, "empty lag range");
    let mut out = CrossCorrelation {
        r_by_lag: BTreeMap::new(),
        skipped: BTreeMap::new(),
    };

    // GlobalMoments z-scores each series once over its own full extent.
    let global = match opts.mode {
        CcfMode::PerWindow => None,
        CcfMode::GlobalMoments => {
            let (mu, su) = population_moments(ud.values());
            let (mt, st) = population_moments(tw.values());
            if su == 0.0 || st == 0.0 {
                for k in opts.k_min..=opts.k_max {
                    out.skipped.insert(k, LagSkip::ZeroVariance);
                }
                return out;
            }
            let zu: Vec<f64> = ud.values().iter().map(|v| (v - mu) / su).collect();
            let zt: Vec<f64> = tw.values().iter().map(|v| (v - mt) / st).collect();
            Some((zu, zt))
        }
    };

    for k in opts.k_min..=opts.k_max {
        // Months M with T[M] and U[M+k] both defined.
        let lo = tw.start().index().max(ud.start().index() - k);
        let hi = tw.end().index().min(ud.end().index() - k);
        let n = (hi - lo + 1).max(0) as usize;
        if n < opts.min_overlap {
            out.skipped.insert(k, LagSkip::ShortOverlap(n));
            continue;
        }
        let t_off = (lo - tw.start().index()) as usize;
        let u_off = (lo + k - ud.start().index()) as usize;
        match &global {
            None => {
                let us = &ud.values()[u_off..u_off + n];
                let ts = &tw.values()[t_off..t_off + n];
                match pearson(us, ts) {
                    Some(r) => {
                        out.r_by_lag.insert(k, LagValue { r, overlap: n });
                    }
                    None => {
                        out.skipped.insert(k, LagSkip::ZeroVariance);
                    }
                }
            }
            Some((zu, zt)) => {
                let sum: f64 = (0..n).map(|i| zu[u_off + i] * zt[t_off + i]).sum();
                out.r_by_lag.insert(k, LagValue { r: sum, overlap: n });
            }
        }
    }
    out
}

/// Lag with the most extreme |r|. Exact ties go to the smallest |k|, and to
/// the negative lag between k and −k: prefer the no-lag explanation, then a
/// deterministic side.
pub fn best_lag(r_by_lag: &BTreeMap<i32, LagValue>) -> Option<(i32, f64, usize)> {
    let mut best: Option<(i32, LagValue)> = None;
    for (&k, &lv) in r_by_lag {
        let better = match best {
            None => true,
            Some((bk, bv)) => {
                let (a, b) = (lv.r.abs(), bv.r.abs());
                a > b || (a == b && (k.abs(), k) < (bk.abs(), bk))
            }
        };
        if better {
            best = Some((k, lv));
        }
    }
    best.map(|(k, lv)| (k, lv.r, lv.overlap))
}

/// Two-sided p-value for H0: ρ=0 via t = r·sqrt((n−2)/(1−r²)) with n−2
/// degrees of freedom. Perfect correlation is p=0 by convention; r=0 is
/// exactly p=1.
pub fn significance(r: f64, overlap_len: usize) -> Result<f64, CorrError> {
    if overlap_len < 3 {
        return Err(CorrError::UndefinedTest(overlap_len));
    }
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let n = overlap_len as f64;
    let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 2.0).expect("valid df");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(p.clamp(0.0, 1.0))
}

/// The value fed to the significance test. Per-window r is already a
/// correlation; the global-moments sum is divided by its overlap length
/// (its expectation under perfect correlation) and clamped into [−1, 1].
pub fn effective_r(r: f64, overlap: usize, mode: CcfMode) -> f64 {
    match mode {
        CcfMode::PerWindow => r,
        CcfMode::GlobalMoments => (r / overlap as f64).clamp(-1.0, 1.0),
    }
}

/// One term's correlation outcome before the FDR pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TermCorrelation {
    pub term_id: u32,
    pub r_by_lag: BTreeMap<i32, LagValue>,
    pub skipped: BTreeMap<i32, LagSkip>,
    pub best_lag: i32,
    pub r_best: f64,
    pub overlap_len: usize,
    pub p_value: f64,
}

/// Full per-term analysis: lag sweep, best lag, p-value. `None` when every
/// lag was skipped or the surviving overlap cannot support the test; such
/// terms are excluded from the correlation stage.
pub fn analyze_term(
    term_id: u32,
    ud: &MonthlySeries,
    tw: &MonthlySeries,
    opts: &CcfOptions,
) -> Option<TermCorrelation> {
    let ccf = cross_correlation(ud, tw, opts);
    let (best_lag, r_best, overlap_len) = best_lag(&ccf.r_by_lag)?;
    let r_eff = effective_r(r_best, overlap_len, opts.mode);
    let p_value = significance(r_eff, overlap_len).ok()?;
    Some(TermCorrelation {
        term_id,
        r_by_lag: ccf.r_by_lag,
        skipped: ccf.skipped,
        best_lag,
        r_best,
        overlap_len,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdrOutcome {
    pub q_value: f64,
    pub reject: bool,
}

/// Benjamini-Hochberg step-up over one pooled family of p-values.
/// Output order matches input order. Rejection and q ≤ alpha agree: q is
/// min over j ≥ rank of (m/j)·p_(j), which is ≤ alpha exactly for ranks at
/// or below the step-up cutoff.
pub fn benjamini_hochberg(p_values: &[f64], alpha: f64) -> Vec<FdrOutcome> {
    let m = p_values.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    // Largest 1-based rank i with p_(i) ≤ (i/m)·alpha; boundary inclusive.
    let mut cutoff = 0;
    for (rank0, &ix) in order.iter().enumerate() {
        let i = rank0 + 1;
        if p_values[ix] <= (i as f64 / m as f64) * alpha {
            cutoff = i;
        }
    }

    // q_(i) = min over j ≥ i of (m/j)·p_(j), clipped into [0, 1].
    let mut q_sorted = vec![0.0f64; m];
    let mut running = f64::INFINITY;
    for rank0 in (0..m).rev() {
        let j = rank0 + 1;
        running = running.min(m as f64 / j as f64 * p_values[order[rank0]]);
        q_sorted[rank0] = running.min(1.0);
    }

    let mut out = vec![
        FdrOutcome {
            q_value: 0.0,
            reject: false,
        };
        m
    ];
    for (rank0, &ix) in order.iter().enumerate() {
        out[ix] = FdrOutcome {
            q_value: q_sorted[rank0],
            reject: rank0 + 1 <= cutoff,
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Positive,
    Negative,
    None,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Positive => "positive",
            Category::Negative => "negative",
            Category::None => "none",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn categorize(r_best: f64, reject: bool) -> Category {
    if !reject || r_best == 0.0 {
        Category::None
    } else if r_best > 0.0 {
        Category::Positive
    } else {
        Category::Negative
    }
}

/// A term's final correlation record after the FDR pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRecord {
    pub term_id: u32,
    pub best_lag: i32,
    pub r_best: f64,
    pub overlap_len: usize,
    pub p_value: f64,
    pub q_value: f64,
    pub category: Category,
}

/// Pool every analyzed term into one BH family, then categorize.
/// Input order is preserved.
pub fn finalize(terms: &[TermCorrelation], alpha: f64) -> Vec<CorrelationRecord> {
    let ps: Vec<f64> = terms.iter().map(|t| t.p_value).collect();
    let fdr = benjamini_hochberg(&ps, alpha);
    terms
        .iter()
        .zip(fdr)
        .map(|(t, f)| CorrelationRecord {
            term_id: t.term_id,
            best_lag: t.best_lag,
            r_best: t.r_best,
            overlap_len: t.overlap_len,
            p_value: t.p_value,
            q_value: f.q_value,
            category: categorize(t.r_best, f.reject),
        })
        .collect()
}

/// Counts per (lag, category): the data behind the lag-distribution chart.
pub fn lag_histogram(records: &[CorrelationRecord]) -> BTreeMap<(i32, Category), u64> {
    let mut hist = BTreeMap::new();
    for rec in records {
        *hist.entry((rec.best_lag, rec.category)).or_insert(0) += 1;
    }
    hist
}
