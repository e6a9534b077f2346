use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use termtrends_core::correlation::{self, CcfOptions};
use termtrends_core::matcher::{normalize_text, MatchEvent, Matcher};
use termtrends_core::month::Month;
use termtrends_core::series::MonthlySeries;
use termtrends_core::trends;

use crate::CliError;

/// Run every oracle suite. Each one re-derives expected behavior from the
/// contract with an independent implementation, so a pass means the
/// optimized paths agree with the definitions, not with themselves.
pub fn run(seed: u64) -> Result<(), CliError> {
    matcher_suite(seed)?;
    ccf_suite(seed)?;
    bh_suite(seed)?;
    pelt_suite(seed)?;
    Ok(())
}

fn fail(suite: &str, detail: String) -> CliError {
    println!("SELFTEST {suite}: FAIL ({detail})");
    CliError::Internal(format!("selftest {suite} failed: {detail}"))
}

// Matcher vs a sliding-window scan applying the boundary and handle rules
// directly: neighbors absent or non-alphanumeric, and the containing token
// (letters, digits, underscores) must not be preceded by '@'.

fn naive_scan(patterns: &[String], text: &str) -> Vec<MatchEvent> {
    let text = normalize_text(text);
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    for (id, pat) in patterns.iter().enumerate() {
        let p = pat.as_bytes();
        if p.is_empty() || p.len() > bytes.len() {
            continue;
        }
        for start in 0..=(bytes.len() - p.len()) {
            if &bytes[start..start + p.len()] != p || !text.is_char_boundary(start) {
                continue;
            }
            let end = start + p.len();
            let before_ok = text[..start]
                .chars()
                .next_back()
                .map_or(true, |c| !c.is_alphanumeric());
            let after_ok = text[end..].chars().next().map_or(true, |c| !c.is_alphanumeric());
            let mut in_handle = false;
            for c in text[..start].chars().rev() {
                if c.is_alphanumeric() || c == '_' {
                    continue;
                }
                in_handle = c == '@';
                break;
            }
            if before_ok && after_ok && !in_handle {
                out.push(MatchEvent {
                    start,
                    end,
                    pattern: id as u32,
                });
            }
        }
    }
    out.sort_unstable();
    out
}

fn matcher_suite(seed: u64) -> Result<(), CliError> {
    const CASES: usize = 2_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_7463_6865_7231);
    let text_alphabet: Vec<char> =
        "ab abé@_ .!7Zxy".chars().collect();
    let pattern_alphabet: Vec<char> = "abé.".chars().collect();
    for case in 0..CASES {
        let n_patterns = rng.gen_range(1..=8);
        let patterns: Vec<String> = (0..n_patterns)
            .map(|_| {
                let len = rng.gen_range(1..=4);
                (0..len)
                    .map(|_| pattern_alphabet[rng.gen_range(0..pattern_alphabet.len())])
                    .collect()
            })
            .collect();
        let text: String = {
            let len = rng.gen_range(0..=60);
            (0..len)
                .map(|_| text_alphabet[rng.gen_range(0..text_alphabet.len())])
                .collect()
        };
        let matcher = Matcher::new(patterns.iter())
            .map_err(|e| fail("matcher-oracle", format!("build: {e}")))?;
        let got = matcher.scan(&text);
        let want = naive_scan(matcher.patterns(), &text);
        if got != want {
            return Err(fail(
                "matcher-oracle",
                format!("case {case}: text {text:?}, patterns {:?}", matcher.patterns()),
            ));
        }
    }
    println!("SELFTEST matcher-oracle: PASS ({CASES} cases)");
    Ok(())
}

// Cross-correlation vs direct per-lag Pearson recomputation.

fn random_series(rng: &mut ChaCha8Rng, len: usize) -> MonthlySeries {
    let start = Month::new(2012 + rng.gen_range(0..3), rng.gen_range(1..=12)).unwrap();
    let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-50.0..50.0)).collect();
    MonthlySeries::uniform(start, values, termtrends_core::series::Provenance::Observed)
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sx = (pairs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>() / n).sqrt();
    let sy = (pairs.iter().map(|p| (p.1 - my) * (p.1 - my)).sum::<f64>() / n).sqrt();
    let cov = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
    cov / (sx * sy)
}

fn ccf_suite(seed: u64) -> Result<(), CliError> {
    const PAIRS: usize = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6363_665f_6272_7574);
    let opts = CcfOptions {
        min_overlap: 6,
        ..CcfOptions::default()
    };
    for case in 0..PAIRS {
        let ud_len = rng.gen_range(12..=60);
        let ud = random_series(&mut rng, ud_len);
        let tw_len = rng.gen_range(12..=60);
        let tw = random_series(&mut rng, tw_len);
        let got = correlation::cross_correlation(&ud, &tw, &opts);
        for k in opts.k_min..=opts.k_max {
            let pairs: Vec<(f64, f64)> = tw
                .months()
                .filter_map(|m| {
                    ud.get(m.offset(k)).and_then(|x| tw.get(m).map(|y| (x, y)))
                })
                .collect();
            let want = (pairs.len() >= opts.min_overlap).then(|| pearson(&pairs));
            match (want, got.r_by_lag.get(&k)) {
                (Some(w), Some(lag)) if (lag.r - w).abs() <= 1e-12 && lag.overlap == pairs.len() => {}
                (None, None) => {}
                (w, g) => {
                    return Err(fail(
                        "ccf-brute-force",
                        format!("case {case} lag {k}: want {w:?}, got {g:?}"),
                    ))
                }
            }
        }
    }
    println!("SELFTEST ccf-brute-force: PASS ({PAIRS} pairs, lags -3..3, tol 1e-12)");
    Ok(())
}

// Benjamini-Hochberg vs the textbook step-up applied literally.

fn bh_reference(p: &[f64], alpha: f64) -> Vec<bool> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut cutoff = 0;
    for (rank, &ix) in order.iter().enumerate() {
        // Spelled as (i/m)·α, matching the production comparison: the
        // cross-multiplied form can flip accept/reject by one ulp when a
        // p-value sits exactly on the step-up boundary.
        if p[ix] <= ((rank + 1) as f64 / m as f64) * alpha {
            cutoff = rank + 1;
        }
    }
    let mut reject = vec![false; m];
    for &ix in &order[..cutoff] {
        reject[ix] = true;
    }
    reject
}

fn bh_suite(seed: u64) -> Result<(), CliError> {
    const VECTORS: usize = 300;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6268_5f72_6566_6572);
    for case in 0..VECTORS {
        let m = rng.gen_range(1..=40);
        let p: Vec<f64> = (0..m)
            .map(|_| {
                // Mix in exact ties and extremes; those are the risky inputs.
                match rng.gen_range(0..5) {
                    0 => 0.0,
                    1 => 1.0,
                    2 => 0.01,
                    _ => rng.gen_range(0.0..1.0),
                }
            })
            .collect();
        let alpha = [0.0, 0.01, 0.05, 0.2][rng.gen_range(0..4)];
        let got: Vec<bool> = correlation::benjamini_hochberg(&p, alpha)
            .iter()
            .map(|o| o.reject)
            .collect();
        let want = bh_reference(&p, alpha);
        if got != want {
            return Err(fail(
                "bh-reference",
                format!("case {case} alpha {alpha}: p {p:?}"),
            ));
        }
    }
    println!("SELFTEST bh-reference: PASS ({VECTORS} vectors, exact reject sets)");
    Ok(())
}

// PELT vs exhaustive enumeration of valid segmentations.

fn segment_cost(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

fn objective(values: &[f64], cps: &[usize], penalty: f64) -> f64 {
    let mut cost = penalty * cps.len() as f64;
    let mut prev = 0;
    for &cp in cps.iter().chain(std::iter::once(&values.len())) {
        cost += segment_cost(&values[prev..cp]);
        prev = cp;
    }
    cost
}

fn exhaustive_best(values: &[f64], penalty: f64) -> f64 {
    let n = values.len();
    let interior: Vec<usize> = (2..=n.saturating_sub(2)).collect();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << interior.len()) {
        let cps: Vec<usize> = interior
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask >> bit & 1 == 1)
            .map(|(_, &p)| p)
            .collect();
        let valid = cps.windows(2).all(|w| w[1] - w[0] >= trends::MIN_SEGMENT_LEN);
        if valid {
            best = best.min(objective(values, &cps, penalty));
        }
    }
    best
}

fn pelt_suite(seed: u64) -> Result<(), CliError> {
    const CASES: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7065_6c74_5f65_7831);
    for case in 0..CASES {
        let n = rng.gen_range(4..=10);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-6..=6) as f64).collect();
        for penalty in [0.5, 1.0, 5.0, 25.0] {
            let got = trends::pelt_changepoints(&values, penalty);
            if got.too_short {
                return Err(fail("pelt-exhaustive", format!("case {case}: too_short at n={n}")));
            }
            let sane = got.indices.windows(2).all(|w| w[1] - w[0] >= trends::MIN_SEGMENT_LEN)
                && got.indices.iter().all(|&cp| cp >= 2 && cp <= n - 2);
            let got_cost = objective(&values, &got.indices, penalty);
            let want_cost = exhaustive_best(&values, penalty);
            if !sane || (got_cost - want_cost).abs() > 1e-9 {
                return Err(fail(
                    "pelt-exhaustive",
                    format!(
                        "case {case} penalty {penalty}: cost {got_cost} vs optimal {want_cost}, cps {:?}, values {values:?}",
                        got.indices
                    ),
                ));
            }
        }
    }
    println!("SELFTEST pelt-exhaustive: PASS ({CASES} series x 4 penalties, exact optimum)");
    Ok(())
}
