//! Trend detection: change-point segmentation of monthly series, OLS slope
//! thresholding per segment, and contingency statistics relating trending
//! months to new-definition months.
//!
//! Segmentation minimizes total within-segment squared deviation from the
//! segment mean plus a penalty per change point (piecewise-constant
//! mean-shift model), solved exactly with pruning. A segment counts as
//! trending when its fitted slope strictly exceeds τ = max(series)/4.

use std::collections::{BTreeMap, BTreeSet};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::month::{Month, MonthRange};
use crate::series::{population_moments, MonthlySeries, Provenance};

/// OLS needs two points for a slope, so segments never get shorter.
pub const MIN_SEGMENT_LEN: usize = 2;
pub const DEFAULT_TREND_ALPHA: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangePoints {
    /// First index of each segment after the first; strictly increasing,
    /// interior to (0, n).
    pub indices: Vec<usize>,
    /// Series shorter than two minimum segments cannot split; the result is
    /// empty with this reason flag set.
    pub too_short: bool,
}

/// Exact penalized segmentation under the L2 piecewise-constant cost.
///
/// Pruning is delayed: a candidate split s that becomes dominated at time t
/// is only discarded from t + MIN_SEGMENT_LEN onward, because the dominating
/// split t is itself not usable while the closing segment would be shorter
/// than the minimum. This keeps the search exact; the unit suite checks it
/// against exhaustive enumeration.
pub fn pelt_changepoints(values: &[f64], penalty: f64) -> ChangePoints {
    assert!(penalty > 0.0, "penalty must be positive");
    const L: usize = MIN_SEGMENT_LEN;
    let n = values.len();
    if n < 2 * L {
        return ChangePoints {
            indices: Vec::new(),
            too_short: true,
        };
    }

    let mut s1 = vec![0.0f64; n + 1];
    let mut s2 = vec![0.0f64; n + 1];
    for (i, &v) in values.iter().enumerate() {
        s1[i + 1] = s1[i] + v;
        s2[i + 1] = s2[i] + v * v;
    }
    let cost = |s: usize, t: usize| -> f64 {
        let sum = s1[t] - s1[s];
        (s2[t] - s2[s]) - sum * sum / (t - s) as f64
    };

    let mut f = vec![f64::INFINITY; n + 1];
    let mut prev = vec![0usize; n + 1];
    f[0] = -penalty;
    let mut cands: Vec<usize> = Vec::new();
    let mut remove_at = vec![usize::MAX; n + 1];
    for t in L..=n {
        // s = t−L becomes usable now; boundaries inside the first minimum
        // segment are never legal.
        let s_new = t - L;
        if s_new == 0 || s_new >= L {
            cands.push(s_new);
        }
        cands.retain(|&s| remove_at[s] > t);

        let mut best = f64::INFINITY;
        let mut best_s = 0;
        for &s in &cands {
            let c = f[s] + cost(s, t) + penalty;
            if c < best {
                best = c;
                best_s = s;
            }
        }
        f[t] = best;
        prev[t] = best_s;

        for &s in &cands {
            if f[s] + cost(s, t) > f[t] {
                remove_at[s] = remove_at[s].min(t + L);
            }
        }
    }

    let mut indices = Vec::new();
    let mut t = n;
    while t > 0 {
        let s = prev[t];
        if s > 0 {
            indices.push(s);
        }
        t = s;
    }
    indices.reverse();
    ChangePoints {
        indices,
        too_short: false,
    }
}

/// 2·σ̂²·ln(n) with σ̂² estimated as half the variance of first differences
/// (a level shift contributes to the differences only at the jump). The
/// floor keeps the penalty positive on noiseless series, scaled so it stays
/// negligible against any real cost reduction.
pub fn default_penalty(values: &[f64]) -> f64 {
    let n = values.len();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let floor = 1e-9 * (1.0 + scale * scale);
    if n < 2 {
        return floor;
    }
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let (_, sd) = population_moments(&diffs);
    let sigma2 = sd * sd / 2.0;
    (2.0 * sigma2 * (n as f64).ln()).max(floor)
}

/// τ_m = max(S)/4, taken over the series as analyzed (imputed months
/// included).
pub fn tau_threshold(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)) / 4.0
}

/// One fitted segment over series indices (both ends inclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    /// Value units per month.
    pub slope: f64,
    /// Fitted value at the segment's first month.
    pub intercept: f64,
    pub trending: bool,
    /// One-point segments get slope 0 and can never trend.
    pub single_point: bool,
}

/// OLS line per segment; trending requires slope strictly above `tau`.
pub fn fit_segments(values: &[f64], change_points: &[usize], tau: f64) -> Vec<Segment> {
    let n = values.len();
    assert!(n > 0);
    assert!(
        change_points.windows(2).all(|w| w[0] < w[1])
            && change_points.iter().all(|&c| c > 0 && c < n),
        "change points must be strictly increasing and interior"
    );
    let mut bounds = Vec::with_capacity(change_points.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(change_points);
    bounds.push(n);

    bounds
        .windows(2)
        .map(|w| {
            let (s, t) = (w[0], w[1]);
            let seg = &values[s..t];
            let len = seg.len();
            if len == 1 {
                return Segment {
                    start: s,
                    end: t - 1,
                    slope: 0.0,
                    intercept: seg[0],
                    trending: false,
                    single_point: true,
                };
            }
            let xbar = (len - 1) as f64 / 2.0;
            let ybar = seg.iter().sum::<f64>() / len as f64;
            let mut num = 0.0;
            let mut den = 0.0;
            for (x, &y) in seg.iter().enumerate() {
                let dx = x as f64 - xbar;
                num += dx * (y - ybar);
                den += dx * dx;
            }
            let slope = num / den;
            Segment {
                start: s,
                end: t - 1,
                slope,
                intercept: ybar - slope * xbar,
                trending: slope > tau,
                single_point: false,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Platform {
    Ud,
    Twitter,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Ud => "ud",
            Platform::Twitter => "twitter",
        }
    }
}

impl std::fmt::Display for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A [`Segment`] mapped onto calendar months, with provenance context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthSegment {
    pub start: Month,
    pub end: Month,
    pub slope: f64,
    pub intercept: f64,
    pub trending: bool,
    pub single_point: bool,
    /// Every month of the segment was imputed; such trends are reported but
    /// deserve suspicion.
    pub imputed_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub term_id: u32,
    pub platform: Platform,
    pub change_points: Vec<Month>,
    pub segments: Vec<MonthSegment>,
    pub trending_months: BTreeSet<Month>,
    pub tau: f64,
    pub penalty: f64,
    pub too_short: bool,
}

pub fn build_trend_report(
    term_id: u32,
    platform: Platform,
    series: &MonthlySeries,
    penalty: Option<f64>,
) -> TrendReport {
    let values = series.values();
    let penalty = penalty.unwrap_or_else(|| default_penalty(values));
    let cps = pelt_changepoints(values, penalty);
    let tau = tau_threshold(values);
    let start = series.start();
    let segments: Vec<MonthSegment> = fit_segments(values, &cps.indices, tau)
        .into_iter()
        .map(|seg| {
            let imputed_only = (seg.start..=seg.end).all(|i| {
                series.provenance_at(start.offset(i as i32)) == Some(Provenance::Imputed)
            });
            MonthSegment {
                start: start.offset(seg.start as i32),
                end: start.offset(seg.end as i32),
                slope: seg.slope,
                intercept: seg.intercept,
                trending: seg.trending,
                single_point: seg.single_point,
                imputed_only,
            }
        })
        .collect();
    TrendReport {
        term_id,
        platform,
        change_points: cps.indices.iter().map(|&i| start.offset(i as i32)).collect(),
        trending_months: trending_months(&segments),
        segments,
        tau,
        penalty,
        too_short: cps.too_short,
    }
}

/// Union of the months of trending segments.
pub fn trending_months(segments: &[MonthSegment]) -> BTreeSet<Month> {
    let mut out = BTreeSet::new();
    for seg in segments.iter().filter(|s| s.trending) {
        let mut m = seg.start;
        loop {
            out.insert(m);
            if m == seg.end {
                break;
            }
            m = m.offset(1);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub t_stat: f64,
    pub p_value: f64,
}

/// Counts and conditional probabilities over a (term, month) grid where
/// d marks a new-definition month and u a trending month. Probabilities are
/// `None` when their conditioning set is empty; tests are `None` when either
/// conditioned sample has fewer than two cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyStats {
    /// counts[d][u], indexed by the two indicators.
    pub counts: [[u64; 2]; 2],
    pub p_d_given_u: Option<f64>,
    pub p_d_given_not_u: Option<f64>,
    pub p_u_given_d: Option<f64>,
    pub p_u_given_not_d: Option<f64>,
    /// Welch's t for p(d|u) vs p(d|¬u) over the Bernoulli samples.
    pub d_test: Option<TestResult>,
    /// Welch's t for p(u|d) vs p(u|¬d).
    pub u_test: Option<TestResult>,
}

impl ContingencyStats {
    pub fn grid_size(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Welch's unequal-variance t-test over two Bernoulli samples given as
/// (successes, size). Two-sided p via the t CDF at Welch-Satterthwaite df.
fn welch_bernoulli(k1: u64, n1: u64, k0: u64, n0: u64) -> Option<TestResult> {
    if n1 < 2 || n0 < 2 {
        return None;
    }
    let (n1f, n0f) = (n1 as f64, n0 as f64);
    let p1 = k1 as f64 / n1f;
    let p0 = k0 as f64 / n0f;
    // Sample variance of a 0/1 sample: p(1−p)·n/(n−1).
    let v1 = p1 * (1.0 - p1) * n1f / (n1f - 1.0);
    let v0 = p0 * (1.0 - p0) * n0f / (n0f - 1.0);
    let se2 = v1 / n1f + v0 / n0f;
    if se2 == 0.0 {
        // Both samples constant: identical means are a perfect null fit,
        // different means are infinitely incompatible with it.
        return Some(if p1 == p0 {
            TestResult {
                t_stat: 0.0,
                p_value: 1.0,
            }
        } else {
            TestResult {
                t_stat: if p1 > p0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p_value: 0.0,
            }
        });
    }
    let t = (p1 - p0) / se2.sqrt();
    let df = se2 * se2
        / ((v1 / n1f) * (v1 / n1f) / (n1f - 1.0) + (v0 / n0f) * (v0 / n0f) / (n0f - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Some(TestResult {
        t_stat: t,
        p_value: p,
    })
}

/// Tally (d, u) cells and derive the four conditionals plus both tests.
pub fn contingency_from_cells(
    cells: impl IntoIterator<Item = (bool, bool)>,
) -> ContingencyStats {
    let mut counts = [[0u64; 2]; 2];
    for (d, u) in cells {
        counts[d as usize][u as usize] += 1;
    }
    let d1 = counts[1][0] + counts[1][1];
    let d0 = counts[0][0] + counts[0][1];
    let u1 = counts[0][1] + counts[1][1];
    let u0 = counts[0][0] + counts[1][0];
    ContingencyStats {
        counts,
        p_d_given_u: ratio(counts[1][1], u1),
        p_d_given_not_u: ratio(counts[1][0], u0),
        p_u_given_d: ratio(counts[1][1], d1),
        p_u_given_not_d: ratio(counts[0][1], d0),
        d_test: welch_bernoulli(counts[1][1], u1, counts[1][0], u0),
        u_test: welch_bernoulli(counts[1][1], d1, counts[0][1], d0),
    }
}

/// Grid assembly: for every term in `grid`, every month of its overlap
/// window is a cell; d = a new definition appeared that month, u = the month
/// is trending on the platform whose trending sets are passed in.
pub fn contingency(
    defs: &BTreeMap<u32, BTreeSet<Month>>,
    trending: &BTreeMap<u32, BTreeSet<Month>>,
    grid: &BTreeMap<u32, MonthRange>,
) -> ContingencyStats {
    let cells = grid.iter().flat_map(|(term, range)| {
        range.months().map(move |m| {
            let d = defs.get(term).is_some_and(|s| s.contains(&m));
            let u = trending.get(term).is_some_and(|s| s.contains(&m));
            (d, u)
        })
    });
    contingency_from_cells(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent cost: direct mean over the slice, no prefix sums.
    fn seg_cost(values: &[f64]) -> f64 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter().map(|v| (v - mean) * (v - mean)).sum()
    }

    fn objective(values: &[f64], cps: &[usize], penalty: f64) -> f64 {
        let mut bounds = vec![0];
        bounds.extend_from_slice(cps);
        bounds.push(values.len());
        let cost: f64 = bounds
            .windows(2)
            .map(|w| seg_cost(&values[w[0]..w[1]]))
            .sum();
        cost + penalty * cps.len() as f64
    }

    /// All segmentations with segments of length ≥ 2, via bitmask over the
    /// interior boundary positions.
    fn exhaustive_best(values: &[f64], penalty: f64) -> f64 {
        let n = values.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << (n - 1)) {
            let cps: Vec<usize> = (1..n).filter(|i| mask & (1 << (i - 1)) != 0).collect();
            let mut bounds = vec![0];
            bounds.extend_from_slice(&cps);
            bounds.push(n);
            if bounds.windows(2).any(|w| w[1] - w[0] < MIN_SEGMENT_LEN) {
                continue;
            }
            best = best.min(objective(values, &cps, penalty));
        }
        best
    }

    #[test]
    fn step_series_splits_at_the_jump() {
        let values = [0.0, 0.0, 0.0, 10.0, 10.0, 10.0];
        let cps = pelt_changepoints(&values, 1.0);
        assert_eq!(cps.indices, vec![3]);
        assert!(!cps.too_short);
    }

    #[test]
    fn constant_series_has_no_change_points() {
        for penalty in [1e-6, 1.0, 1e9] {
            let cps = pelt_changepoints(&[7.0; 40], penalty);
            assert!(cps.indices.is_empty(), "penalty={penalty}");
        }
    }

    #[test]
    fn huge_penalty_suppresses_all_change_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..50).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let cps = pelt_changepoints(&values, 1e12);
        assert!(cps.indices.is_empty());
    }

    #[test]
    fn short_series_reports_reason() {
        let cps = pelt_changepoints(&[1.0, 2.0, 3.0], 1.0);
        assert!(cps.too_short);
        assert!(cps.indices.is_empty());
    }

    #[test]
    fn two_jumps_are_both_found() {
        let mut values = Vec::new();
        values.extend(std::iter::repeat(0.0).take(20));
        values.extend(std::iter::repeat(50.0).take(20));
        values.extend(std::iter::repeat(-30.0).take(20));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in values.iter_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
        let cps = pelt_changepoints(&values, default_penalty(&values));
        assert_eq!(cps.indices, vec![20, 40]);
    }

    #[test]
    fn segmentation_is_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(8..40);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-20..20) as f64).collect();
            let shifted: Vec<f64> = values.iter().map(|v| v + 13.0).collect();
            let penalty = rng.gen_range(1..30) as f64;
            assert_eq!(
                pelt_changepoints(&values, penalty).indices,
                pelt_changepoints(&shifted, penalty).indices
            );
        }
    }

    #[test]
    fn default_penalty_is_positive_even_for_constant_series() {
        assert!(default_penalty(&[5.0; 30]) > 0.0);
        assert!(default_penalty(&[0.0; 30]) > 0.0);
        assert!(default_penalty(&[]) > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noisy: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(default_penalty(&noisy) > 0.1);
    }

    #[test]
    fn exact_line_fit() {
        let segs = fit_segments(&[1.0, 2.0, 3.0], &[], 10.0);
        assert_eq!(segs.len(), 1);
        assert_abs_diff_eq!(segs[0].slope, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(segs[0].intercept, 1.0, epsilon = 1e-15);
        assert!(!segs[0].trending);
    }

    #[test]
    fn steep_segment_trends_against_quarter_max_threshold() {
        // max = 8 → τ = 2; second segment rises 3 per month.
        let values = [2.0, 2.0, 2.0, 2.0, 2.0, 5.0, 8.0];
        let tau = tau_threshold(&values);
        assert_eq!(tau, 2.0);
        let segs = fit_segments(&values, &[4], tau);
        assert!(!segs[0].trending);
        assert_abs_diff_eq!(segs[1].slope, 3.0, epsilon = 1e-12);
        assert!(segs[1].trending);
    }

    #[test]
    fn slope_exactly_at_threshold_does_not_trend() {
        // max = 8 → τ = 2; first segment slope is exactly 2.
        let values = [0.0, 2.0, 4.0, 8.0, 8.0, 8.0];
        let tau = tau_threshold(&values);
        assert_eq!(tau, 2.0);
        let segs = fit_segments(&values, &[3], tau);
        assert_abs_diff_eq!(segs[0].slope, 2.0, epsilon = 1e-15);
        assert!(!segs[0].trending);
        assert!(!segs[1].trending);
    }

    #[test]
    fn one_point_segments_are_flagged_and_never_trend() {
        let segs = fit_segments(&[5.0, 9.0], &[1], -100.0);
        assert!(segs.iter().all(|s| s.single_point));
        assert!(segs.iter().all(|s| !s.trending));
        assert_eq!(segs[0].slope, 0.0);
        assert_eq!(segs[1].intercept, 9.0);
    }

    #[test]
    fn ols_slope_matches_independent_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(2..30);
            let seg: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let fit = &fit_segments(&seg, &[], 0.0)[0];
            // slope = (nΣxy − ΣxΣy) / (nΣx² − (Σx)²)
            let nf = n as f64;
            let sx: f64 = (0..n).map(|x| x as f64).sum();
            let sy: f64 = seg.iter().sum();
            let sxy: f64 = seg.iter().enumerate().map(|(x, y)| x as f64 * y).sum();
            let sxx: f64 = (0..n).map(|x| (x * x) as f64).sum();
            let slope = (nf * sxy - sx * sy) / (nf * sxx - sx * sx);
            assert_abs_diff_eq!(fit.slope, slope, epsilon = 1e-12);
        }
    }

    #[test]
    fn trending_flags_are_scale_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let n = rng.gen_range(6..30);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0..40) as f64).collect();
            let doubled: Vec<f64> = values.iter().map(|v| v * 2.0).collect();
            let penalty = rng.gen_range(1..20) as f64;
            let cps = pelt_changepoints(&values, penalty).indices;
            let base = fit_segments(&values, &cps, tau_threshold(&values));
            let scaled = fit_segments(&doubled, &cps, tau_threshold(&doubled));
            for (a, b) in base.iter().zip(&scaled) {
                assert_abs_diff_eq!(b.slope, 2.0 * a.slope, epsilon = 1e-9);
                assert_eq!(a.trending, b.trending);
            }
        }
    }

    fn month(s: &str) -> Month {
        s.parse().unwrap()
    }

    #[test]
    fn trend_report_maps_indices_to_months() {
        let mut values = vec![1.0; 12];
        values.extend(vec![30.0; 12]);
        let series = MonthlySeries::uniform(month("2014-01"), values, Provenance::Observed);
        let report = build_trend_report(7, Platform::Twitter, &series, None);
        assert_eq!(report.term_id, 7);
        assert_eq!(report.change_points, vec![month("2015-01")]);
        assert_eq!(report.segments[0].start, month("2014-01"));
        assert_eq!(report.segments[0].end, month("2014-12"));
        assert_eq!(report.segments[1].start, month("2015-01"));
        assert_eq!(report.segments[1].end, month("2015-12"));
    }

    #[test]
    fn imputed_only_segments_are_flagged() {
        let values = vec![1.0, 1.0, 50.0, 50.0];
        let provenance = vec![
            Provenance::Observed,
            Provenance::Observed,
            Provenance::Imputed,
            Provenance::Imputed,
        ];
        let series = MonthlySeries::new(month("2014-01"), values, provenance);
        let report = build_trend_report(1, Platform::Twitter, &series, Some(1.0));
        assert_eq!(report.segments.len(), 2);
        assert!(!report.segments[0].imputed_only);
        assert!(report.segments[1].imputed_only);
    }

    #[test]
    fn trending_months_union_of_disjoint_and_adjacent_segments() {
        let seg = |s: &str, e: &str, trending| MonthSegment {
            start: month(s),
            end: month(e),
            slope: 0.0,
            intercept: 0.0,
            trending,
            single_point: false,
            imputed_only: false,
        };
        assert!(trending_months(&[seg("2014-01", "2014-03", false)]).is_empty());

        let disjoint = trending_months(&[
            seg("2014-01", "2014-02", true),
            seg("2014-03", "2014-05", false),
            seg("2014-06", "2014-07", true),
        ]);
        let expect: BTreeSet<Month> = ["2014-01", "2014-02", "2014-06", "2014-07"]
            .iter()
            .map(|s| month(s))
            .collect();
        assert_eq!(disjoint, expect);

        let adjacent = trending_months(&[
            seg("2014-01", "2014-02", true),
            seg("2014-03", "2014-04", true),
        ]);
        assert_eq!(adjacent.len(), 4);
    }

    #[test]
    fn ten_cell_contingency_example() {
        // 10 cells, d at m3 and m7, u at m3 only.
        let cells: Vec<(bool, bool)> = (0..10).map(|m| (m == 3 || m == 7, m == 3)).collect();
        let stats = contingency_from_cells(cells);
        assert_eq!(stats.counts, [[8, 0], [1, 1]]);
        assert_eq!(stats.p_d_given_u, Some(1.0));
        assert_abs_diff_eq!(stats.p_d_given_not_u.unwrap(), 1.0 / 9.0, epsilon = 1e-15);
        assert_eq!(stats.grid_size(), 10);
    }

    #[test]
    fn never_trending_leaves_conditional_undefined() {
        let cells: Vec<(bool, bool)> = (0..20).map(|m| (m % 5 == 0, false)).collect();
        let stats = contingency_from_cells(cells);
        assert_eq!(stats.p_d_given_u, None);
        assert_eq!(stats.d_test, None);
        // With u never true, conditioning on ¬u is no conditioning at all.
        assert_abs_diff_eq!(stats.p_d_given_not_u.unwrap(), 4.0 / 20.0, epsilon = 1e-15);
    }

    #[test]
    fn probabilities_recompute_from_counts_and_satisfy_bayes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let cells: Vec<(bool, bool)> = (0..rng.gen_range(20..200))
                .map(|_| (rng.gen_bool(0.3), rng.gen_bool(0.4)))
                .collect();
            let stats = contingency_from_cells(cells);
            let n = stats.grid_size() as f64;
            let p_d = (stats.counts[1][0] + stats.counts[1][1]) as f64 / n;
            let p_u = (stats.counts[0][1] + stats.counts[1][1]) as f64 / n;
            if let (Some(pdu), Some(pud)) = (stats.p_d_given_u, stats.p_u_given_d) {
                assert_abs_diff_eq!(pud * p_d, pdu * p_u, epsilon = 1e-12);
            }
            if let Some(pdu) = stats.p_d_given_u {
                let recomputed =
                    stats.counts[1][1] as f64 / (stats.counts[0][1] + stats.counts[1][1]) as f64;
                assert_abs_diff_eq!(pdu, recomputed, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn independent_indicators_rarely_reject_at_strict_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sims = 200;
        let mut rejections = 0;
        for _ in 0..sims {
            let cells: Vec<(bool, bool)> = (0..600)
                .map(|_| (rng.gen_bool(0.15), rng.gen_bool(0.2)))
                .collect();
            let stats = contingency_from_cells(cells);
            if let Some(test) = stats.d_test {
                if test.p_value <= DEFAULT_TREND_ALPHA {
                    rejections += 1;
                }
            }
        }
        assert!(rejections * 100 <= sims, "{rejections} rejections in {sims}");
    }

    #[test]
    fn welch_matches_proportions_z_test_for_large_samples() {
        // 2000 cells per arm; for Bernoulli data Welch's t approaches the
        // unpooled z-test as df grows.
        let stats = welch_bernoulli(300, 2000, 240, 2000).unwrap();
        let (p1, p0): (f64, f64) = (300.0 / 2000.0, 240.0 / 2000.0);
        let se = (p1 * (1.0 - p1) / 2000.0 + p0 * (1.0 - p0) / 2000.0).sqrt();
        let z = (p1 - p0) / se;
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        let p_z = 2.0 * (1.0 - normal.cdf(z.abs()));
        assert_abs_diff_eq!(stats.t_stat, z, epsilon = 1e-2);
        assert_abs_diff_eq!(stats.p_value, p_z, epsilon = 1e-3);
    }

    #[test]
    fn grid_assembly_flattens_terms_and_windows() {
        let defs = BTreeMap::from([(1u32, BTreeSet::from([month("2014-02")]))]);
        let trending = BTreeMap::from([
            (1u32, BTreeSet::from([month("2014-02")])),
            (2, BTreeSet::from([month("2014-03")])),
        ]);
        let grid: BTreeMap<u32, MonthRange> = BTreeMap::from([
            (1u32, "2014-01:2014-03".parse().unwrap()),
            (2, "2014-01:2014-03".parse().unwrap()),
        ]);
        let stats = contingency(&defs, &trending, &grid);
        assert_eq!(stats.grid_size(), 6);
        // Term 1: (F,F) Jan, (T,T) Feb, (F,F) Mar; term 2: (F,F), (F,F), (F,T).
        assert_eq!(stats.counts[1][1], 1);
        assert_eq!(stats.counts[0][1], 1);
        assert_eq!(stats.counts[1][0], 0);
        assert_eq!(stats.counts[0][0], 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn pelt_objective_equals_exhaustive_optimum(
            raw in proptest::collection::vec(-50i32..50, 4..=12),
        ) {
            let values: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
            for penalty in [0.5, 1.0, 5.0, 25.0] {
                let cps = pelt_changepoints(&values, penalty);
                prop_assert!(!cps.too_short);
                let mut bounds = vec![0];
                bounds.extend_from_slice(&cps.indices);
                bounds.push(values.len());
                prop_assert!(bounds.windows(2).all(|w| w[1] - w[0] >= MIN_SEGMENT_LEN));
                let got = objective(&values, &cps.indices, penalty);
                let best = exhaustive_best(&values, penalty);
                prop_assert!(
                    (got - best).abs() <= 1e-9 * best.abs().max(1.0),
                    "penalty {}: {} vs exhaustive {}", penalty, got, best
                );
            }
        }
    }
}
