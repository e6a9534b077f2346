//! Characterization of the correlated/uncorrelated term groups: pointwise
//! mutual information between definition tags and groups, and coverage of
//! the terms against a reference lexicon, split by group and lag sign.
//!
//! Probabilities are estimated over the full analyzed-term universe, the
//! `none` group included; a tag counts once per term no matter how many of
//! the term's definitions carry it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use crate::correlation::Category;
use crate::dictionary::normalize;

#[derive(Debug, thiserror::Error)]
pub enum AssocError {
    #[error("reference lexicon is empty")]
    EmptyLexicon,
    #[error("failed to read lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogBase {
    Natural,
    Base(f64),
}

impl Default for LogBase {
    fn default() -> LogBase {
        LogBase::Natural
    }
}

impl LogBase {
    fn scale(self) -> f64 {
        match self {
            LogBase::Natural => 1.0,
            LogBase::Base(b) => 1.0 / b.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmiOptions {
    /// Minimum joint (term has tag AND is in group) count for a row.
    pub support_floor: u64,
    pub log_base: LogBase,
}

impl Default for PmiOptions {
    fn default() -> PmiOptions {
        PmiOptions {
            support_floor: 5,
            log_base: LogBase::Natural,
        }
    }
}

/// PMI(x,y) = log p(x,y) / (p(x)·p(y)) for tag x and group y, with the four
/// counts that produced it: pmi = log(joint·total / (tag_total·group_total)).
#[derive(Debug, Clone, PartialEq)]
pub struct TagAssociation {
    pub tag: String,
    pub group: Category,
    pub pmi: f64,
    pub joint_count: u64,
    pub tag_count: u64,
    pub group_count: u64,
    pub total: u64,
}

/// PMI of every (tag, group) pair over the positive and negative groups,
/// sorted per group by descending PMI (ties by tag name). Pairs below the
/// support floor, and pairs where either marginal is zero, are omitted.
pub fn pmi_tags(
    tags: &BTreeMap<u32, BTreeSet<String>>,
    categories: &BTreeMap<u32, Category>,
    opts: &PmiOptions,
) -> Vec<TagAssociation> {
    let total = categories.len() as u64;
    if total == 0 {
        return Vec::new();
    }

    let mut tag_counts: BTreeMap<&str, u64> = BTreeMap::new();
    let mut joint: BTreeMap<(&str, Category), u64> = BTreeMap::new();
    let mut group_counts: BTreeMap<Category, u64> = BTreeMap::new();
    for (term_id, &cat) in categories {
        *group_counts.entry(cat).or_insert(0) += 1;
        let Some(term_tags) = tags.get(term_id) else {
            continue;
        };
        for tag in term_tags {
            *tag_counts.entry(tag).or_insert(0) += 1;
            *joint.entry((tag, cat)).or_insert(0) += 1;
        }
    }

    let scale = opts.log_base.scale();
    let mut out = Vec::new();
    for group in [Category::Positive, Category::Negative] {
        let group_count = group_counts.get(&group).copied().unwrap_or(0);
        if group_count == 0 {
            continue;
        }
        let mut rows: Vec<TagAssociation> = tag_counts
            .iter()
            .filter_map(|(&tag, &tag_count)| {
                let j = joint.get(&(tag, group)).copied().unwrap_or(0);
                if j < opts.support_floor.max(1) || tag_count == 0 {
                    return None;
                }
                let ratio = (j as f64 * total as f64) / (tag_count as f64 * group_count as f64);
                Some(TagAssociation {
                    tag: tag.to_string(),
                    group,
                    pmi: ratio.ln() * scale,
                    joint_count: j,
                    tag_count,
                    group_count,
                    total,
                })
            })
            .collect();
        rows.sort_by(|a, b| b.pmi.total_cmp(&a.pmi).then_with(|| a.tag.cmp(&b.tag)));
        out.extend(rows);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupBucket {
    Positive,
    None,
    Negative,
    All,
}

impl GroupBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupBucket::Positive => "positive",
            GroupBucket::None => "none",
            GroupBucket::Negative => "negative",
            GroupBucket::All => "all",
        }
    }

    fn admits(self, cat: Category) -> bool {
        match self {
            GroupBucket::Positive => cat == Category::Positive,
            GroupBucket::None => cat == Category::None,
            GroupBucket::Negative => cat == Category::Negative,
            GroupBucket::All => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LagBucket {
    Negative,
    Zero,
    Positive,
    All,
}

impl LagBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            LagBucket::Negative => "t<0",
            LagBucket::Zero => "t=0",
            LagBucket::Positive => "t>0",
            LagBucket::All => "all",
        }
    }

    fn admits(self, lag: i32) -> bool {
        match self {
            LagBucket::Negative => lag < 0,
            LagBucket::Zero => lag == 0,
            LagBucket::Positive => lag > 0,
            LagBucket::All => true,
        }
    }
}

/// One cell of the coverage table. `fraction` is `None` when the cell holds
/// no terms (0/0 has no value; the CSV cell stays empty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageCell {
    pub group: GroupBucket,
    pub lag_bucket: LagBucket,
    pub fraction: Option<f64>,
    pub n_terms: u64,
    pub defined: u64,
}

/// Load a one-headword-per-line lexicon; headwords are normalized the same
/// way dictionary terms are.
pub fn load_lexicon<R: BufRead>(reader: R) -> Result<BTreeSet<String>, AssocError> {
    let mut out = BTreeSet::new();
    for line in reader.lines() {
        let word = normalize(&line?);
        if !word.is_empty() {
            out.insert(word);
        }
    }
    Ok(out)
}

/// The 4×4 table of lexicon-coverage fractions: (group) × (lag bucket), each
/// axis with an aggregate row. Items are (term text, group, best lag).
pub fn lexicon_coverage<'a>(
    items: impl IntoIterator<Item = (&'a str, Category, i32)>,
    lexicon: &BTreeSet<String>,
) -> Result<Vec<CoverageCell>, AssocError> {
    if lexicon.is_empty() {
        return Err(AssocError::EmptyLexicon);
    }
    let resolved: Vec<(bool, Category, i32)> = items
        .into_iter()
        .map(|(term, cat, lag)| (lexicon.contains(&normalize(term)), cat, lag))
        .collect();

    let groups = [
        GroupBucket::Positive,
        GroupBucket::None,
        GroupBucket::Negative,
        GroupBucket::All,
    ];
    let lags = [
        LagBucket::Negative,
        LagBucket::Zero,
        LagBucket::Positive,
        LagBucket::All,
    ];
    let mut out = Vec::with_capacity(16);
    for group in groups {
        for lag_bucket in lags {
            let mut n_terms = 0u64;
            let mut defined = 0u64;
            for &(in_lex, cat, lag) in &resolved {
                if group.admits(cat) && lag_bucket.admits(lag) {
                    n_terms += 1;
                    if in_lex {
                        defined += 1;
                    }
                }
            }
            out.push(CoverageCell {
                group,
                lag_bucket,
                fraction: (n_terms > 0).then(|| defined as f64 / n_terms as f64),
                n_terms,
                defined,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Universe builder: `spec` maps a range of ids to (has_tag, category).
    fn universe(
        spec: &[(std::ops::Range<u32>, &[&str], Category)],
    ) -> (BTreeMap<u32, BTreeSet<String>>, BTreeMap<u32, Category>) {
        let mut tags = BTreeMap::new();
        let mut cats = BTreeMap::new();
        for (range, term_tags, cat) in spec {
            for id in range.clone() {
                cats.insert(id, *cat);
                if !term_tags.is_empty() {
                    tags.insert(
                        id,
                        term_tags.iter().map(|t| t.to_string()).collect(),
                    );
                }
            }
        }
        (tags, cats)
    }

    fn recompute(row: &TagAssociation, scale: f64) -> f64 {
        ((row.joint_count as f64 * row.total as f64)
            / (row.tag_count as f64 * row.group_count as f64))
            .ln()
            * scale
    }

    #[test]
    fn pmi_double_concentration_is_ln_two() {
        // 1000 terms; tag on 100; 100 positive; overlap 20:
        // p(x,y)=0.02, p(x)=p(y)=0.1 → PMI = ln 2.
        let (tags, cats) = universe(&[
            (0..80, &["slang"], Category::None),
            (80..100, &["slang"], Category::Positive),
            (100..180, &[], Category::Positive),
            (180..1000, &[], Category::None),
        ]);
        let rows = pmi_tags(&tags, &cats, &PmiOptions::default());
        let row = rows.iter().find(|r| r.tag == "slang").unwrap();
        assert_eq!(
            (row.joint_count, row.tag_count, row.group_count, row.total),
            (20, 100, 100, 1000)
        );
        assert_abs_diff_eq!(row.pmi, 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn pmi_tag_confined_to_half_universe_group_is_ln_two() {
        // Tag only inside a group holding half the universe: ratio = 1/p(y).
        let (tags, cats) = universe(&[
            (0..10, &["insult"], Category::Positive),
            (10..100, &[], Category::Positive),
            (100..200, &[], Category::None),
        ]);
        let rows = pmi_tags(&tags, &cats, &PmiOptions::default());
        let row = rows.iter().find(|r| r.tag == "insult").unwrap();
        assert_abs_diff_eq!(row.pmi, 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn pmi_of_independent_tag_is_zero() {
        // total=100, tag=20, group=50, joint=10: joint·total == tag·group.
        let (tags, cats) = universe(&[
            (0..10, &["noun"], Category::Positive),
            (10..50, &[], Category::Positive),
            (50..60, &["noun"], Category::None),
            (60..100, &[], Category::None),
        ]);
        let rows = pmi_tags(&tags, &cats, &PmiOptions::default());
        let row = rows
            .iter()
            .find(|r| r.tag == "noun" && r.group == Category::Positive)
            .unwrap();
        assert_eq!(row.pmi, 0.0);
    }

    #[test]
    fn support_floor_filters_rare_pairs() {
        let (tags, cats) = universe(&[
            (0..4, &["rare"], Category::Positive),
            (4..40, &[], Category::Positive),
            (40..100, &[], Category::None),
        ]);
        let rows = pmi_tags(&tags, &cats, &PmiOptions::default());
        assert!(rows.iter().all(|r| r.tag != "rare"));
        let relaxed = PmiOptions {
            support_floor: 4,
            ..PmiOptions::default()
        };
        let rows = pmi_tags(&tags, &cats, &relaxed);
        assert!(rows.iter().any(|r| r.tag == "rare"));
    }

    #[test]
    fn empty_group_produces_no_rows() {
        let (tags, cats) = universe(&[
            (0..10, &["slang"], Category::Positive),
            (10..100, &[], Category::None),
        ]);
        let rows = pmi_tags(&tags, &cats, &PmiOptions::default());
        assert!(rows.iter().all(|r| r.group != Category::Negative));
        assert!(!rows.is_empty());
    }

    #[test]
    fn pmi_recomputable_from_counts() {
        let (tags, cats) = universe(&[
            (0..30, &["a", "b"], Category::Positive),
            (30..80, &["b"], Category::Negative),
            (80..300, &["a"], Category::None),
            (300..500, &[], Category::None),
        ]);
        for (opts, scale) in [
            (PmiOptions::default(), 1.0),
            (
                PmiOptions {
                    support_floor: 5,
                    log_base: LogBase::Base(2.0),
                },
                1.0 / 2.0f64.ln(),
            ),
        ] {
            let rows = pmi_tags(&tags, &cats, &opts);
            assert!(!rows.is_empty());
            for row in &rows {
                assert_abs_diff_eq!(row.pmi, recompute(row, scale), epsilon = 1e-12);
                assert!(row.joint_count <= row.tag_count.min(row.group_count));
                assert!(row.tag_count.min(row.group_count) <= row.total);
            }
        }
    }

    #[test]
    fn base_two_log_scales_ln_two_to_one() {
        let (tags, cats) = universe(&[
            (0..80, &["slang"], Category::None),
            (80..100, &["slang"], Category::Positive),
            (100..180, &[], Category::Positive),
            (180..1000, &[], Category::None),
        ]);
        let opts = PmiOptions {
            support_floor: 5,
            log_base: LogBase::Base(2.0),
        };
        let rows = pmi_tags(&tags, &cats, &opts);
        let row = rows.iter().find(|r| r.tag == "slang").unwrap();
        assert_abs_diff_eq!(row.pmi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn diluting_universe_raises_pmi_of_fixed_joint() {
        let base = &[
            (0..20u32, &["x"][..], Category::Positive),
            (20..60, &[][..], Category::None),
        ];
        let diluted = &[
            (0..20u32, &["x"][..], Category::Positive),
            (20..600, &[][..], Category::None),
        ];
        let (t1, c1) = universe(base);
        let (t2, c2) = universe(diluted);
        let p1 = pmi_tags(&t1, &c1, &PmiOptions::default())[0].pmi;
        let p2 = pmi_tags(&t2, &c2, &PmiOptions::default())[0].pmi;
        assert!(p2 > p1, "{p2} vs {p1}");
    }

    #[test]
    fn rows_sorted_descending_within_group_ties_by_tag() {
        let (tags, cats) = universe(&[
            (0..10, &["aaa", "bbb"], Category::Positive),
            (10..20, &["ccc"], Category::Positive),
            (20..40, &["ccc"], Category::None),
            (40..100, &[], Category::None),
        ]);
        let rows = pmi_tags(&tags, &cats, &PmiOptions::default());
        let positive: Vec<&TagAssociation> =
            rows.iter().filter(|r| r.group == Category::Positive).collect();
        for pair in positive.windows(2) {
            assert!(
                pair[0].pmi > pair[1].pmi
                    || (pair[0].pmi == pair[1].pmi && pair[0].tag < pair[1].tag)
            );
        }
        // "aaa" and "bbb" have identical counts: name breaks the tie.
        let a = positive.iter().position(|r| r.tag == "aaa").unwrap();
        let b = positive.iter().position(|r| r.tag == "bbb").unwrap();
        assert!(a < b);
    }

    fn lex(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn coverage_all_terms_defined() {
        let items = vec![
            ("cat", Category::Positive, 0),
            ("dog", Category::Negative, -1),
            ("axolotl", Category::None, 2),
        ];
        let table = lexicon_coverage(items, &lex(&["cat", "dog", "axolotl"])).unwrap();
        for cell in &table {
            if cell.n_terms > 0 {
                assert_eq!(cell.fraction, Some(1.0));
            } else {
                assert_eq!(cell.fraction, None);
            }
        }
    }

    #[test]
    fn coverage_empty_intersection_is_zero() {
        let items = vec![
            ("zzyzx", Category::Positive, 0),
            ("qwfp", Category::None, 1),
        ];
        let table = lexicon_coverage(items, &lex(&["cat"])).unwrap();
        for cell in &table {
            if cell.n_terms > 0 {
                assert_eq!(cell.fraction, Some(0.0));
            }
        }
    }

    #[test]
    fn coverage_two_of_three_positive_at_lag_zero() {
        let items = vec![
            ("cat", Category::Positive, 0),
            ("dog", Category::Positive, 0),
            ("zzyzx", Category::Positive, 0),
        ];
        let table = lexicon_coverage(items, &lex(&["cat", "dog"])).unwrap();
        let cell = table
            .iter()
            .find(|c| c.group == GroupBucket::Positive && c.lag_bucket == LagBucket::Zero)
            .unwrap();
        assert_eq!(cell.n_terms, 3);
        assert_eq!(cell.defined, 2);
        assert_abs_diff_eq!(cell.fraction.unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn coverage_aggregates_recompute_from_parts() {
        let items = vec![
            ("cat", Category::Positive, -2),
            ("dog", Category::Positive, 0),
            ("fish", Category::Negative, 1),
            ("bird", Category::None, 0),
            ("zzyzx", Category::None, 3),
        ];
        let table = lexicon_coverage(items, &lex(&["cat", "fish", "bird"])).unwrap();
        let get = |g: GroupBucket, l: LagBucket| {
            *table
                .iter()
                .find(|c| c.group == g && c.lag_bucket == l)
                .unwrap()
        };
        for g in [GroupBucket::Positive, GroupBucket::None, GroupBucket::Negative] {
            let all = get(g, LagBucket::All);
            let parts = [LagBucket::Negative, LagBucket::Zero, LagBucket::Positive]
                .map(|l| get(g, l));
            assert_eq!(all.n_terms, parts.iter().map(|c| c.n_terms).sum::<u64>());
            assert_eq!(all.defined, parts.iter().map(|c| c.defined).sum::<u64>());
        }
        for l in [LagBucket::Negative, LagBucket::Zero, LagBucket::Positive, LagBucket::All] {
            let all = get(GroupBucket::All, l);
            let parts = [GroupBucket::Positive, GroupBucket::None, GroupBucket::Negative]
                .map(|g| get(g, l));
            assert_eq!(all.n_terms, parts.iter().map(|c| c.n_terms).sum::<u64>());
            assert_eq!(all.defined, parts.iter().map(|c| c.defined).sum::<u64>());
        }
        let grand = get(GroupBucket::All, LagBucket::All);
        assert_eq!(grand.n_terms, 5);
        assert_eq!(grand.defined, 3);
    }

    #[test]
    fn coverage_rejects_empty_lexicon() {
        let items = vec![("cat", Category::Positive, 0)];
        assert!(matches!(
            lexicon_coverage(items, &BTreeSet::new()),
            Err(AssocError::EmptyLexicon)
        ));
    }

    #[test]
    fn lexicon_loader_normalizes_headwords() {
        let text = "Cat\n  DOG  \n\nmulti  word\n";
        let lexicon = load_lexicon(std::io::Cursor::new(text)).unwrap();
        assert!(lexicon.contains("cat"));
        assert!(lexicon.contains("dog"));
        assert!(lexicon.contains("multi word"));
        assert_eq!(lexicon.len(), 3);
    }
}
