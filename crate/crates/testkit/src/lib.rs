//! Oracles and fixture builders for the test suites. Nothing here is used by
//! production code paths.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Duration, Utc};
use pps_core::pcfg::{Grammar, Symbol};
use pps_core::{
    Assessment, Category, DetectionHit, Fingerprint, FingerprintStatus, PaperRecord, Span, Trigger, Verdict,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fingerprint(id: &str, pattern: &str, category: Category) -> Fingerprint {
    Fingerprint {
        id: id.to_string(),
        pattern: pattern.to_string(),
        category,
        expected_phrase: (category == Category::Tortured).then(|| format!("expected {id}")),
        status: FingerprintStatus::Active,
        provenance: "testkit".to_string(),
    }
}

/// Spelled-out base-26 word; distinct indices give distinct words.
pub fn letters(mut n: usize, prefix: &str) -> String {
    let mut w = String::from(prefix);
    loop {
        w.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    w
}

// ---------------------------------------------------------------------------
// Matcher oracle cases
// ---------------------------------------------------------------------------

const SMALL_VOCAB: &[&str] = &[
    "fake",
    "neural",
    "organization",
    "deep",
    "learning",
    "couldn't",
    "be",
    "done",
    "x",
    "network",
];

/// A random pattern set and document over a small vocabulary, so that
/// overlapping and repeated matches are frequent.
pub fn random_matcher_case(rng: &mut impl Rng, max_patterns: usize, max_chars: usize) -> (Vec<Fingerprint>, String) {
    let n_patterns = rng.random_range(0..=max_patterns);
    let mut seen = HashSet::new();
    let mut patterns = Vec::new();
    for i in 0..n_patterns {
        let len = rng.random_range(2..=4);
        let words: Vec<&str> = (0..len).map(|_| *SMALL_VOCAB.choose(rng).unwrap()).collect();
        let p = words.join(" ");
        if seen.insert(p.clone()) {
            let cat = Category::ALL[i % 4];
            patterns.push(fingerprint(&format!("p{i:02}"), &p, cat));
        }
    }

    let target = rng.random_range(0..=max_chars);
    let mut doc = String::new();
    while doc.chars().count() < target {
        let mut w = SMALL_VOCAB.choose(rng).unwrap().to_string();
        if rng.random_bool(0.05) {
            w = format!("un{w}");
        }
        if rng.random_bool(0.1) {
            w = w.to_uppercase();
        }
        if rng.random_bool(0.1) {
            w = w.replace('\'', "\u{2019}");
        }
        doc.push_str(&w);
        let sep = *[" ", " ", " ", "  ", ", ", ".\n", " \u{2014} ", "\t", "-", " (", ") "]
            .choose(rng)
            .unwrap();
        doc.push_str(sep);
    }
    (patterns, doc)
}

// ---------------------------------------------------------------------------
// Typographic perturbations
// ---------------------------------------------------------------------------

pub fn randomize_case(rng: &mut impl Rng, text: &str) -> String {
    text.chars()
        .map(|c| {
            if rng.random_bool(0.5) {
                c.to_ascii_uppercase()
            } else {
                c
            }
        })
        .collect()
}

pub fn curl_apostrophes(text: &str) -> String {
    text.replace('\'', "\u{2019}")
}

/// Inserts a soft hyphen between two ASCII letters at random positions.
pub fn insert_soft_hyphens(rng: &mut impl Rng, text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 16);
    for (i, &c) in chars.iter().enumerate() {
        out.push(c);
        if c.is_ascii_alphabetic() && chars.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic()) && rng.random_bool(0.1)
        {
            out.push('\u{00AD}');
        }
    }
    out
}

/// Splits words across lines with a trailing hyphen.
pub fn hyphenate_line_ends(rng: &mut impl Rng, text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 16);
    for (i, &c) in chars.iter().enumerate() {
        out.push(c);
        if c.is_ascii_alphabetic() && chars.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic()) && rng.random_bool(0.05)
        {
            out.push_str(if rng.random_bool(0.5) { "-\n" } else { "-\r\n" });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Planted corpus
// ---------------------------------------------------------------------------

/// Dictionary words all start with `q`; clean words never contain it, so
/// the two vocabularies are disjoint.
pub fn synthetic_dictionary(size: usize) -> Vec<Fingerprint> {
    (0..size)
        .map(|i| {
            let len = 2 + i % 3;
            let words: Vec<String> = (0..len).map(|k| letters(i * 7 + k * 131 + 1, "q")).collect();
            let cat = Category::ALL[i % 4];
            fingerprint(&format!("syn{i:04}"), &words.join(" "), cat)
        })
        .collect()
}

pub fn clean_word(rng: &mut impl Rng) -> String {
    const SYL: &[&str] = &["ka", "lo", "mi", "ne", "ru", "ta", "so", "vi", "de", "ba"];
    let n = rng.random_range(1..=3);
    (0..n).map(|_| *SYL.choose(rng).unwrap()).collect()
}

pub fn clean_text(rng: &mut impl Rng, words: usize) -> String {
    let mut out = String::new();
    for i in 0..words {
        if i > 0 {
            out.push_str(if rng.random_bool(0.1) { ". " } else { " " });
        }
        out.push_str(&clean_word(rng));
    }
    out
}

pub struct PlantedDoc {
    pub id: String,
    pub text: String,
    /// Fingerprint ids planted verbatim in the text.
    pub planted: Vec<String>,
}

/// `n_docs` clean documents, `n_planted` of which carry 1 to 3 fingerprints.
pub fn planted_corpus(
    rng: &mut impl Rng,
    dict: &[Fingerprint],
    n_docs: usize,
    n_planted: usize,
    words_per_doc: usize,
) -> Vec<PlantedDoc> {
    let mut planted_idx: Vec<usize> = (0..n_docs).collect();
    planted_idx.shuffle(rng);
    let planted_set: HashSet<usize> = planted_idx.into_iter().take(n_planted).collect();
    (0..n_docs)
        .map(|i| {
            let base = clean_text(rng, words_per_doc);
            let mut segments: Vec<&str> = base.split(' ').collect();
            let mut planted = Vec::new();
            if planted_set.contains(&i) {
                for _ in 0..rng.random_range(1..=3) {
                    let fp = dict.choose(rng).unwrap();
                    let at = rng.random_range(0..=segments.len());
                    segments.insert(at, &fp.pattern);
                    planted.push(fp.id.clone());
                }
            }
            let text = segments.join(" ");
            PlantedDoc {
                id: format!("doc{i:05}"),
                text,
                planted,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Grammar enumeration
// ---------------------------------------------------------------------------

/// Exact distribution of generated strings, by enumerating every
/// derivation under the same depth-bounded process as the sampler.
/// Only usable on grammars with few derivations.
pub fn enumerate_strings(grammar: &Grammar, max_depth: u32) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (words, p) in expand(grammar, Symbol::Nonterminal(grammar.start()), 1, max_depth) {
        *out.entry(words.join(" ")).or_insert(0.0) += p;
    }
    out
}

fn expand(grammar: &Grammar, sym: Symbol, depth: u32, max_depth: u32) -> Vec<(Vec<String>, f64)> {
    match sym {
        Symbol::Terminal(_) => vec![(vec![grammar.symbol_text(sym).to_string()], 1.0)],
        Symbol::Nonterminal(n) => {
            let prods = grammar.productions(n);
            let choices: Vec<(usize, f64)> = if depth <= max_depth {
                prods.iter().enumerate().map(|(i, p)| (i, p.probability)).collect()
            } else {
                vec![(grammar.fallback_production(n), 1.0)]
            };
            let mut out = Vec::new();
            for (pi, p) in choices {
                let mut partial: Vec<(Vec<String>, f64)> = vec![(Vec::new(), p)];
                for child in &prods[pi].body {
                    let sub = expand(grammar, *child, depth + 1, max_depth);
                    partial = partial
                        .iter()
                        .flat_map(|(w, q)| {
                            sub.iter().map(move |(sw, sq)| {
                                let mut all = w.clone();
                                all.extend(sw.iter().cloned());
                                (all, q * sq)
                            })
                        })
                        .collect();
                }
                out.extend(partial);
            }
            out
        }
    }
}

/// Exact probability that a generated document contains `phrase` as a
/// word-bounded substring of its canonical text.
pub fn enumerated_phrase_probability(grammar: &Grammar, phrase: &str, max_depth: u32) -> f64 {
    let padded = format!(" {phrase} ");
    enumerate_strings(grammar, max_depth)
        .into_iter()
        .filter(|(s, _)| format!(" {} ", pps_core::normalize(s).canonical).contains(&padded))
        .map(|(_, p)| p)
        .sum()
}

/// Toy grammar with a handful of derivations; no phrase spans a production
/// boundary by accident.
pub const TOY_GRAMMAR: &str = include_str!("../../core/data/toy.ppsgram");

// ---------------------------------------------------------------------------
// Ledger fixtures
// ---------------------------------------------------------------------------

pub fn epoch_plus(seconds: i64) -> DateTime<Utc> {
    DateTime::UNIX_EPOCH + Duration::seconds(seconds)
}

pub fn fixture_paper(i: usize, fingerprint_id: &str, category: Category) -> PaperRecord {
    let surface = "fake neural organization";
    PaperRecord {
        paper_id: format!("paper-{i:05}"),
        doi: Some(format!("10.5555/fixture.{i:05}")),
        external_id: Some(format!("ext-{i:05}")),
        title: format!("Fixture paper {i}"),
        venue: None,
        year: Some(2021),
        record_url: Some(format!("https://index.example/record/{i}")),
        pubpeer_url: None,
        first_seen: epoch_plus(1_600_000_000 + i as i64),
        hits: vec![DetectionHit {
            fingerprint_id: fingerprint_id.to_string(),
            category,
            span: Span::new(0, surface.len()),
            snippet: surface.to_string(),
            matched_surface: surface.to_string(),
        }],
        triggers: vec![Trigger {
            fingerprint_id: fingerprint_id.to_string(),
            category,
        }],
    }
}

/// `total` papers; the first `problematic` each get one problematic
/// verdict, the rest none.
pub fn counts_fixture(
    total: usize,
    problematic: usize,
    fingerprint_id: &str,
    category: Category,
) -> (Vec<PaperRecord>, Vec<Assessment>) {
    let papers: Vec<PaperRecord> = (0..total).map(|i| fixture_paper(i, fingerprint_id, category)).collect();
    let assessments = papers
        .iter()
        .take(problematic)
        .enumerate()
        .map(|(i, p)| Assessment {
            paper_id: p.paper_id.clone(),
            verdict: Verdict::Problematic,
            assessor: format!("assessor-{}", i % 17),
            timestamp: epoch_plus(1_700_000_000 + i as i64),
            note: None,
        })
        .collect();
    (papers, assessments)
}
