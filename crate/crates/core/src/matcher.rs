//! Word-bounded multi-pattern matching over canonical text.
//!
//! Patterns are sequences of canonical tokens, so the automaton is an
//! Aho-Corasick machine over token ids rather than characters. A document
//! token that appears in no pattern sends the machine back to the root,
//! which is what makes every match word-bounded for free.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{Category, DetectionHit, Fingerprint, Span};
use crate::normalize::{normalize, validate_pattern, NormalizedText, PatternError};

/// Characters of context kept on each side of a hit.
pub const SNIPPET_CONTEXT: usize = 60;

const ROOT: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("fingerprint {id}: {source}")]
    InvalidPattern {
        id: String,
        #[source]
        source: PatternError,
    },
    #[error("duplicate pattern {pattern:?} in fingerprints {first_id} and {second_id}")]
    DuplicatePattern {
        pattern: String,
        first_id: String,
        second_id: String,
    },
    #[error("duplicate fingerprint id {0}")]
    DuplicateId(String),
}

#[derive(Debug, Clone)]
struct PatternEntry {
    fingerprint_id: String,
    category: Category,
    pattern: String,
    token_len: usize,
}

#[derive(Debug, Clone, Default)]
struct Node {
    /// Sorted by token id.
    next: Vec<(u32, u32)>,
    fail: u32,
    /// Pattern ending exactly at this node.
    output: Option<u32>,
    /// Nearest proper suffix node that has an output.
    dict_link: Option<u32>,
}

impl Node {
    fn child(&self, sym: u32) -> Option<u32> {
        self.next
            .binary_search_by_key(&sym, |&(s, _)| s)
            .ok()
            .map(|i| self.next[i].1)
    }
}

/// A pattern occurrence in canonical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalMatch {
    pub pattern_index: usize,
    /// Canonical character interval `[start, end)`.
    pub start: usize,
    pub end: usize,
}

/// Immutable after [`compile`]; share it freely across threads.
#[derive(Debug, Clone)]
pub struct MatcherAutomaton {
    patterns: Vec<PatternEntry>,
    vocab: HashMap<String, u32>,
    nodes: Vec<Node>,
}

pub fn compile(fingerprints: &[Fingerprint]) -> Result<MatcherAutomaton, CompileError> {
    MatcherAutomaton::new(fingerprints)
}

impl MatcherAutomaton {
    pub fn new(fingerprints: &[Fingerprint]) -> Result<Self, CompileError> {
        let mut by_pattern: HashMap<&str, &str> = HashMap::new();
        let mut ids: HashMap<&str, ()> = HashMap::new();
        let mut patterns = Vec::with_capacity(fingerprints.len());
        for fp in fingerprints {
            validate_pattern(&fp.pattern).map_err(|source| CompileError::InvalidPattern {
                id: fp.id.clone(),
                source,
            })?;
            if let Some(first) = by_pattern.insert(&fp.pattern, &fp.id) {
                return Err(CompileError::DuplicatePattern {
                    pattern: fp.pattern.clone(),
                    first_id: first.to_string(),
                    second_id: fp.id.clone(),
                });
            }
            if ids.insert(&fp.id, ()).is_some() {
                return Err(CompileError::DuplicateId(fp.id.clone()));
            }
            patterns.push(PatternEntry {
                fingerprint_id: fp.id.clone(),
                category: fp.category,
                pattern: fp.pattern.clone(),
                token_len: fp.pattern.split(' ').count(),
            });
        }

        let mut vocab: HashMap<String, u32> = HashMap::new();
        let mut nodes = vec![Node::default()];
        for (pi, entry) in patterns.iter().enumerate() {
            let mut state = ROOT;
            for tok in entry.pattern.split(' ') {
                let next_id = vocab.len() as u32;
                let sym = *vocab.entry(tok.to_string()).or_insert(next_id);
                state = match nodes[state as usize].child(sym) {
                    Some(n) => n,
                    None => {
                        let n = nodes.len() as u32;
                        nodes.push(Node::default());
                        let edges = &mut nodes[state as usize].next;
                        let at = edges.partition_point(|&(s, _)| s < sym);
                        edges.insert(at, (sym, n));
                        n
                    }
                };
            }
            nodes[state as usize].output = Some(pi as u32);
        }

        // Breadth-first failure links.
        let mut queue = std::collections::VecDeque::new();
        for &(_, child) in &nodes[ROOT as usize].next {
            queue.push_back(child);
        }
        while let Some(u) = queue.pop_front() {
            let edges = nodes[u as usize].next.clone();
            for (sym, v) in edges {
                let mut f = nodes[u as usize].fail;
                let target = loop {
                    if let Some(t) = nodes[f as usize].child(sym) {
                        break t;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = nodes[f as usize].fail;
                };
                let target = if target == v { ROOT } else { target };
                let link = if nodes[target as usize].output.is_some() {
                    Some(target)
                } else {
                    nodes[target as usize].dict_link
                };
                let node = &mut nodes[v as usize];
                node.fail = target;
                node.dict_link = link;
                queue.push_back(v);
            }
        }

        Ok(MatcherAutomaton { patterns, vocab, nodes })
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn fingerprint_id(&self, pattern_index: usize) -> &str {
        &self.patterns[pattern_index].fingerprint_id
    }

    pub fn pattern(&self, pattern_index: usize) -> &str {
        &self.patterns[pattern_index].pattern
    }

    /// All word-bounded occurrences in canonical coordinates, ordered by end
    /// position and then by start.
    pub fn find_canonical(&self, text: &NormalizedText) -> Vec<CanonicalMatch> {
        let mut out = Vec::new();
        if self.patterns.is_empty() {
            return out;
        }
        let mut token_starts: Vec<usize> = Vec::new();
        let mut state = ROOT;
        for tok in tokens(&text.canonical) {
            token_starts.push(tok.char_start);
            state = match self.vocab.get(tok.text) {
                None => ROOT,
                Some(&sym) => self.step(state, sym),
            };
            let ti = token_starts.len() - 1;
            let mut node = Some(state);
            if self.nodes[state as usize].output.is_none() {
                node = self.nodes[state as usize].dict_link;
            }
            while let Some(n) = node {
                let n = &self.nodes[n as usize];
                if let Some(pi) = n.output {
                    let entry = &self.patterns[pi as usize];
                    out.push(CanonicalMatch {
                        pattern_index: pi as usize,
                        start: token_starts[ti + 1 - entry.token_len],
                        end: tok.char_end,
                    });
                }
                node = n.dict_link;
            }
        }
        out
    }

    fn step(&self, mut state: u32, sym: u32) -> u32 {
        loop {
            if let Some(n) = self.nodes[state as usize].child(sym) {
                return n;
            }
            if state == ROOT {
                return ROOT;
            }
            state = self.nodes[state as usize].fail;
        }
    }

    pub fn scan(&self, doc: &str) -> Vec<DetectionHit> {
        let normalized = normalize(doc);
        let matches = self.find_canonical(&normalized);
        build_hits(
            doc,
            &normalized,
            matches.into_iter().map(|m| {
                let e = &self.patterns[m.pattern_index];
                (e.fingerprint_id.as_str(), e.category, m.start, m.end)
            }),
        )
    }
}

pub fn scan(automaton: &MatcherAutomaton, doc: &str) -> Vec<DetectionHit> {
    automaton.scan(doc)
}

struct Token<'a> {
    text: &'a str,
    char_start: usize,
    char_end: usize,
}

fn tokens(canonical: &str) -> impl Iterator<Item = Token<'_>> {
    let mut char_pos = 0usize;
    canonical.split(' ').filter(|t| !t.is_empty()).map(move |t| {
        let n = t.chars().count();
        let tok = Token {
            text: t,
            char_start: char_pos,
            char_end: char_pos + n,
        };
        char_pos += n + 1;
        tok
    })
}

/// Quadratic reference search: every canonical position is tried against
/// every pattern. Only meant as a test oracle for [`MatcherAutomaton`].
pub fn naive_scan(patterns: &[Fingerprint], doc: &str) -> Vec<DetectionHit> {
    let normalized = normalize(doc);
    let text: Vec<char> = normalized.canonical.chars().collect();
    let mut found = Vec::new();
    for fp in patterns {
        let pat: Vec<char> = fp.pattern.chars().collect();
        if pat.is_empty() || pat.len() > text.len() {
            continue;
        }
        for i in 0..=text.len() - pat.len() {
            let j = i + pat.len();
            let bounded_left = i == 0 || text[i - 1] == ' ';
            let bounded_right = j == text.len() || text[j] == ' ';
            if bounded_left && bounded_right && text[i..j] == pat[..] {
                found.push((fp.id.as_str(), fp.category, i, j));
            }
        }
    }
    build_hits(doc, &normalized, found.into_iter())
}

/// Maps canonical matches back to the original document.
fn build_hits<'a>(
    doc: &str,
    normalized: &NormalizedText,
    matches: impl Iterator<Item = (&'a str, Category, usize, usize)>,
) -> Vec<DetectionHit> {
    let mut byte_at: Option<Vec<usize>> = None;
    let mut hits: Vec<DetectionHit> = matches
        .map(|(id, category, start, end)| {
            let byte_at = byte_at.get_or_insert_with(|| {
                doc.char_indices()
                    .map(|(b, _)| b)
                    .chain(std::iter::once(doc.len()))
                    .collect()
            });
            let span = Span::new(normalized.offset_map[start], normalized.offset_map[end - 1] + 1);
            let ctx_start = span.start.saturating_sub(SNIPPET_CONTEXT);
            let ctx_end = (span.end + SNIPPET_CONTEXT).min(normalized.original_length);
            DetectionHit {
                fingerprint_id: id.to_string(),
                category,
                span,
                snippet: doc[byte_at[ctx_start]..byte_at[ctx_end]].to_string(),
                matched_surface: doc[byte_at[span.start]..byte_at[span.end]].to_string(),
            }
        })
        .collect();
    hits.sort_by(|a, b| {
        (a.span.start, &a.fingerprint_id, a.span.end).cmp(&(b.span.start, &b.fingerprint_id, b.span.end))
    });
    hits
}
