use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Grammar, Symbol};
use crate::detect::Detector;
use crate::dictionary::Dictionary;
use crate::matcher::CompileError;

/// Leftmost stochastic expansion from the start symbol.
///
/// The start symbol sits at depth 1. A nonterminal at depth `d <= max_depth`
/// picks a production with probability proportional to its weight; deeper
/// nonterminals take their minimum-height production, so generation always
/// terminates. Output is a pure function of `(grammar, seed, max_depth)`.
pub fn generate(grammar: &Grammar, seed: u64, max_depth: u32) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = vec![(Symbol::Nonterminal(grammar.start), 1u32)];
    let mut out = String::new();
    while let Some((sym, depth)) = stack.pop() {
        match sym {
            Symbol::Terminal(t) => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&grammar.terminals[t]);
            }
            Symbol::Nonterminal(n) => {
                let pi = if depth <= max_depth {
                    let u: f64 = rng.random();
                    let cum = &grammar.cumulative[n];
                    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1)
                } else {
                    grammar.fallback[n]
                };
                for s in grammar.rules[n][pi].body.iter().rev() {
                    stack.push((*s, depth + 1));
                }
            }
        }
    }
    out
}

/// Seed of the `index`-th document in a corpus generated from `seed`.
pub fn document_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fraction of generated documents with at least one detection hit.
pub fn measure_detection_rate(
    grammar: &Grammar,
    dict: &Dictionary,
    samples: u64,
    seed: u64,
    max_depth: u32,
) -> Result<f64, CompileError> {
    let detector = Detector::new(dict)?;
    if samples == 0 {
        return Ok(0.0);
    }
    let flagged = (0..samples)
        .filter(|&i| {
            let doc = generate(grammar, document_seed(seed, i), max_depth);
            !detector
                .automaton()
                .find_canonical(&crate::normalize::normalize(&doc))
                .is_empty()
        })
        .count();
    Ok(flagged as f64 / samples as f64)
}
