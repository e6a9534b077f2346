//! Multi-pattern text scanning.
//!
//! An Aho-Corasick automaton (byte-level trie with failure and suffix-output
//! links) finds every occurrence of every pattern in one pass. Raw hits are
//! then filtered by two rules applied to the normalized text:
//!
//! * boundary: the characters immediately before and after the span must be
//!   absent or non-alphanumeric;
//! * handle exclusion: a span inside an `@`-prefixed token is dropped, where
//!   a token is a maximal run of letters, digits, and underscores.
//!
//! Underscore is non-alphanumeric for the boundary rule (`char::is_alphanumeric`
//! is false for it) but part of the token for the handle rule, so a match on
//! `name` inside `@some_name` is rejected.
//!
//! Matching operates on the lowercased text; spans are byte offsets into that
//! normalized string, which only ever feeds count aggregation downstream.

use std::collections::BTreeSet;

use crate::dictionary::normalize;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatchError {
    #[error("empty pattern set: at least one pattern is required")]
    EmptyPatternSet,
}

/// A single accepted occurrence. `start..end` are byte offsets into the
/// normalized (lowercased) text and always lie on char boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatchEvent {
    pub start: usize,
    pub end: usize,
    pub pattern: u32,
}

const NO_PATTERN: u32 = u32::MAX;
const NO_STATE: u32 = u32::MAX;

#[derive(Debug)]
struct Node {
    /// Outgoing edges, sorted by byte for binary search.
    trans: Vec<(u8, u32)>,
    fail: u32,
    /// Nearest proper-suffix state that completes a pattern.
    dict: u32,
    /// Pattern id completed at this state, if any. Patterns are unique so
    /// at most one ends per state.
    pattern: u32,
}

/// Immutable multi-pattern automaton. Build once, scan from any thread.
#[derive(Debug)]
pub struct Matcher {
    nodes: Vec<Node>,
    /// Dense transitions for the root, which sees most of the traffic.
    root_trans: Box<[u32; 256]>,
    patterns: Vec<String>,
}

/// Lowercase text the same way headwords are lowercased. Scan spans refer
/// to this string's byte offsets.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase()
}

impl Matcher {
    /// Build the automaton. Inputs are normalized with the headword
    /// normalization, deduplicated, and sorted; ids are indexes into the
    /// sorted order, so the id mapping is reproducible from the pattern set
    /// alone.
    pub fn new<I, S>(patterns: I) -> Result<Matcher, MatchError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = patterns
            .into_iter()
            .map(|p| normalize(p.as_ref()))
            .filter(|p| !p.is_empty())
            .collect();
        if set.is_empty() {
            return Err(MatchError::EmptyPatternSet);
        }
        let patterns: Vec<String> = set.into_iter().collect();

        let mut nodes = vec![Node {
            trans: Vec::new(),
            fail: 0,
            dict: NO_STATE,
            pattern: NO_PATTERN,
        }];
        for (pid, pat) in patterns.iter().enumerate() {
            let mut state = 0u32;
            for &b in pat.as_bytes() {
                state = match lookup(&nodes[state as usize].trans, b) {
                    Some(next) => next,
                    None => {
                        let next = nodes.len() as u32;
                        nodes.push(Node {
                            trans: Vec::new(),
                            fail: 0,
                            dict: NO_STATE,
                            pattern: NO_PATTERN,
                        });
                        nodes[state as usize].trans.push((b, next));
                        next
                    }
                };
            }
            nodes[state as usize].pattern = pid as u32;
        }
        // Patterns arrive sorted, so each node's edges were pushed in byte
        // order already; keep the invariant explicit for binary search.
        for node in &mut nodes {
            debug_assert!(node.trans.windows(2).all(|w| w[0].0 < w[1].0));
            node.trans.sort_unstable_by_key(|&(b, _)| b);
        }

        let mut root_trans = Box::new([0u32; 256]);
        for &(b, v) in &nodes[0].trans {
            root_trans[b as usize] = v;
        }

        // Breadth-first failure links; children of the root fail to the root.
        let mut queue: std::collections::VecDeque<u32> = std::collections::VecDeque::new();
        for &(_, v) in &nodes[0].trans {
            queue.push_back(v);
        }
        while let Some(u) = queue.pop_front() {
            let edges = nodes[u as usize].trans.clone();
            for (b, v) in edges {
                // Walk u's failure chain to the longest proper suffix that
                // can extend by b. v is never reachable here: it sits one
                // level deeper than every state on the chain.
                let mut f = nodes[u as usize].fail;
                let fv = loop {
                    if let Some(next) = lookup(&nodes[f as usize].trans, b) {
                        break next;
                    }
                    if f == 0 {
                        break 0;
                    }
                    f = nodes[f as usize].fail;
                };
                nodes[v as usize].fail = fv;
                nodes[v as usize].dict = if nodes[fv as usize].pattern != NO_PATTERN {
                    fv
                } else {
                    nodes[fv as usize].dict
                };
                queue.push_back(v);
            }
        }

        Ok(Matcher {
            nodes,
            root_trans,
            patterns,
        })
    }

    /// Number of automaton states including the root.
    pub fn state_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    /// Patterns in id order.
    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    pub fn pattern(&self, id: u32) -> &str {
        &self.patterns[id as usize]
    }

    pub fn pattern_id(&self, term: &str) -> Option<u32> {
        self.patterns
            .binary_search_by(|p| p.as_str().cmp(term))
            .ok()
            .map(|ix| ix as u32)
    }

    #[inline]
    fn step(&self, mut state: u32, b: u8) -> u32 {
        loop {
            if state == 0 {
                return self.root_trans[b as usize];
            }
            if let Some(next) = lookup(&self.nodes[state as usize].trans, b) {
                return next;
            }
            state = self.nodes[state as usize].fail;
        }
    }

    /// Every substring occurrence of every pattern, before boundary and
    /// handle filtering, ordered by span start.
    pub fn raw_matches(&self, normalized_text: &str) -> Vec<MatchEvent> {
        let bytes = normalized_text.as_bytes();
        let mut out = Vec::new();
        let mut state = 0u32;
        for (pos, &b) in bytes.iter().enumerate() {
            state = self.step(state, b);
            let mut t = state;
            loop {
                let node = &self.nodes[t as usize];
                if node.pattern != NO_PATTERN {
                    let len = self.patterns[node.pattern as usize].len();
                    out.push(MatchEvent {
                        start: pos + 1 - len,
                        end: pos + 1,
                        pattern: node.pattern,
                    });
                }
                if node.dict == NO_STATE {
                    break;
                }
                t = node.dict;
            }
        }
        out.sort_unstable();
        out
    }

    /// Scan raw text: lowercase it, find all hits, and keep those passing
    /// the boundary and handle rules. Events are ordered by span start.
    pub fn scan(&self, text: &str) -> Vec<MatchEvent> {
        let normalized = normalize_text(text);
        self.scan_normalized(&normalized)
    }

    /// As [`Matcher::scan`] but for text the caller already lowercased.
    pub fn scan_normalized(&self, normalized_text: &str) -> Vec<MatchEvent> {
        let mut events = self.raw_matches(normalized_text);
        events.retain(|ev| {
            boundary_ok(normalized_text, ev.start, ev.end)
                && !inside_handle(normalized_text, ev.start)
        });
        events
    }
}

#[inline]
fn lookup(trans: &[(u8, u32)], b: u8) -> Option<u32> {
    // Nodes rarely have more than a handful of edges; linear scan beats
    // binary search at these sizes and falls back for wide nodes.
    if trans.len() <= 8 {
        for &(eb, v) in trans {
            if eb == b {
                return Some(v);
            }
        }
        None
    } else {
        trans
            .binary_search_by_key(&b, |&(eb, _)| eb)
            .ok()
            .map(|ix| trans[ix].1)
    }
}

/// Both neighbors of the span must be absent or non-alphanumeric. Text
/// edges count as non-alphanumeric.
fn boundary_ok(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    before.map_or(true, |c| !c.is_alphanumeric())
        && after.map_or(true, |c| !c.is_alphanumeric())
}

/// Walk back over the containing token (letters, digits, underscores); the
/// span is inside an @-handle when the first character beyond the token
/// is '@'.
fn inside_handle(text: &str, start: usize) -> bool {
    for c in text[..start].chars().rev() {
        if c.is_alphanumeric() || c == '_' {
            continue;
        }
        return c == '@';
    }
    false
}
