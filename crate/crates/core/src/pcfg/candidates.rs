use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::{Grammar, ProductionRef, Symbol};
use crate::normalize::normalize;

/// A terminal run that could serve as a grammar-fragment fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    /// Canonical form of the run.
    pub phrase: String,
    pub token_count: usize,
    /// Probability that a generated document uses at least one production
    /// whose body contains the phrase.
    pub probability: f64,
    /// Productions containing the phrase inside one terminal run.
    #[serde(skip)]
    pub productions: Vec<ProductionRef>,
}

/// Canonical text of every maximal terminal run in a production body.
fn terminal_runs(grammar: &Grammar, body: &[Symbol]) -> Vec<String> {
    let mut runs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for sym in body
        .iter()
        .copied()
        .chain(std::iter::once(Symbol::Nonterminal(usize::MAX)))
    {
        match sym {
            Symbol::Terminal(t) => current.push(&grammar.terminals[t]),
            Symbol::Nonterminal(_) => {
                if !current.is_empty() {
                    let canonical = normalize(&current.join(" ")).canonical;
                    if !canonical.is_empty() {
                        runs.push(canonical);
                    }
                    current.clear();
                }
            }
        }
    }
    runs
}

fn contains_words(haystack: &str, needle: &str) -> bool {
    haystack == needle
        || haystack.starts_with(&format!("{needle} "))
        || haystack.ends_with(&format!(" {needle}"))
        || haystack.contains(&format!(" {needle} "))
}

/// Every maximal within-production terminal run of at least `min_tokens`
/// canonical tokens, ranked by the exact probability that a document
/// generated with `max_depth` contains it.
pub fn extract_candidate_fingerprints(grammar: &Grammar, min_tokens: usize, max_depth: u32) -> Vec<Candidate> {
    let min_tokens = min_tokens.max(2);
    let mut runs_by_production: Vec<(ProductionRef, Vec<String>)> = Vec::new();
    for (n, prods) in grammar.rules.iter().enumerate() {
        for (pi, p) in prods.iter().enumerate() {
            runs_by_production.push(((n, pi), terminal_runs(grammar, &p.body)));
        }
    }

    let mut phrases: BTreeMap<String, usize> = BTreeMap::new();
    for (_, runs) in &runs_by_production {
        for run in runs {
            let tokens = run.split(' ').count();
            if tokens >= min_tokens {
                phrases.insert(run.clone(), tokens);
            }
        }
    }

    let mut out: Vec<Candidate> = phrases
        .into_iter()
        .map(|(phrase, token_count)| {
            let productions: Vec<ProductionRef> = runs_by_production
                .iter()
                .filter(|(_, runs)| runs.iter().any(|r| contains_words(r, &phrase)))
                .map(|(pr, _)| *pr)
                .collect();
            let set: HashSet<ProductionRef> = productions.iter().copied().collect();
            Candidate {
                probability: production_use_probability(grammar, &set, max_depth),
                phrase,
                token_count,
                productions,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| a.phrase.cmp(&b.phrase))
    });
    out
}

/// Exact probability that one generated document expands at least one of
/// `targets`, under the same depth-bounded process as [`super::generate`].
pub fn production_use_probability(grammar: &Grammar, targets: &HashSet<ProductionRef>, max_depth: u32) -> f64 {
    let n = grammar.nonterminals.len();
    let product = |body: &[Symbol], avoid: &[f64]| -> f64 {
        body.iter()
            .map(|s| match s {
                Symbol::Nonterminal(c) => avoid[*c],
                Symbol::Terminal(_) => 1.0,
            })
            .product()
    };

    // Past the depth bound expansion is deterministic; resolve children
    // before parents by increasing minimum height.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&a| grammar.min_height[a]);
    let mut avoid = vec![1.0; n];
    for a in order {
        let pi = grammar.fallback[a];
        avoid[a] = if targets.contains(&(a, pi)) {
            0.0
        } else {
            product(&grammar.rules[a][pi].body, &avoid)
        };
    }

    for _depth in (1..=max_depth).rev() {
        let next: Vec<f64> = (0..n)
            .map(|a| {
                grammar.rules[a]
                    .iter()
                    .enumerate()
                    .filter(|(pi, _)| !targets.contains(&(a, *pi)))
                    .map(|(_, p)| p.probability * product(&p.body, &avoid))
                    .sum()
            })
            .collect();
        avoid = next;
    }
    (1.0 - avoid[grammar.start]).clamp(0.0, 1.0)
}
