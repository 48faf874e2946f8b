//! Weighted context-free grammars: loading, sampling and fingerprint
//! candidate extraction.
//!
//! File format (`ppsgram v1`):
//!
//! ```text
//! ppsgram v1
//! # the first rule's left-hand side is the start symbol
//! S -> 1 : INTRO "we show that" CLAIM
//! INTRO -> 3 : "in this paper"
//! INTRO -> 1/2 : "recently"
//! CLAIM -> 0.5 : "though many skeptics said it couldn't be done"
//! ```
//!
//! Weights are positive integers, decimals or fractions and are normalized
//! per nonterminal at load time.

mod candidates;
mod parse;
mod sample;

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

pub use candidates::{extract_candidate_fingerprints, production_use_probability, Candidate};
pub use parse::load_grammar;
pub use sample::{document_seed, generate, measure_detection_rate};

pub const GRAMMAR_HEADER: &str = "ppsgram v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    Terminal(usize),
    Nonterminal(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub weight: BigRational,
    /// `weight / sum of weights` for the owning nonterminal.
    pub probability: f64,
    pub body: Vec<Symbol>,
    /// Source line, 1-based.
    pub line: usize,
}

/// Identifies a production as (nonterminal index, production index).
pub type ProductionRef = (usize, usize);

#[derive(Debug, Clone)]
pub struct Grammar {
    nonterminals: Vec<String>,
    nonterminal_index: HashMap<String, usize>,
    terminals: Vec<String>,
    start: usize,
    rules: Vec<Vec<Production>>,
    /// Cumulative probabilities per nonterminal, for sampling.
    cumulative: Vec<Vec<f64>>,
    min_height: Vec<u32>,
    /// Production of minimum derivation height, used past the depth bound.
    fallback: Vec<usize>,
}

impl Grammar {
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn start_name(&self) -> &str {
        &self.nonterminals[self.start]
    }

    pub fn nonterminals(&self) -> &[String] {
        &self.nonterminals
    }

    pub fn nonterminal(&self, name: &str) -> Option<usize> {
        self.nonterminal_index.get(name).copied()
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn productions(&self, nonterminal: usize) -> &[Production] {
        &self.rules[nonterminal]
    }

    pub fn min_height(&self, nonterminal: usize) -> u32 {
        self.min_height[nonterminal]
    }

    pub fn fallback_production(&self, nonterminal: usize) -> usize {
        self.fallback[nonterminal]
    }

    pub fn symbol_text(&self, symbol: Symbol) -> &str {
        match symbol {
            Symbol::Terminal(t) => &self.terminals[t],
            Symbol::Nonterminal(n) => &self.nonterminals[n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GrammarIssue {
    MissingHeader {
        found: String,
    },
    Syntax {
        line: usize,
        message: String,
    },
    NonPositiveWeight {
        line: usize,
        weight: String,
    },
    UndefinedSymbol {
        line: usize,
        symbol: String,
    },
    Empty,
    /// `witness` is a cycle of nonterminals none of which can escape to terminals.
    Unproductive {
        nonterminals: Vec<String>,
        witness: Vec<String>,
    },
}

impl fmt::Display for GrammarIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrammarIssue::MissingHeader { found } => {
                write!(f, "line 1: expected header {GRAMMAR_HEADER:?}, found {found:?}")
            }
            GrammarIssue::Syntax { line, message } => write!(f, "line {line}: {message}"),
            GrammarIssue::NonPositiveWeight { line, weight } => {
                write!(f, "line {line}: weight {weight:?} must be positive")
            }
            GrammarIssue::UndefinedSymbol { line, symbol } => {
                write!(f, "line {line}: undefined symbol {symbol}")
            }
            GrammarIssue::Empty => write!(f, "grammar has no productions"),
            GrammarIssue::Unproductive { nonterminals, witness } => write!(
                f,
                "unproductive nonterminals {}: cycle {}",
                nonterminals.join(", "),
                witness.join(" -> ")
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct GrammarError {
    pub issues: Vec<GrammarIssue>,
}

impl fmt::Display for GrammarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

fn parse_weight(raw: &str) -> Option<BigRational> {
    let raw = raw.trim();
    if let Some((n, d)) = raw.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d == BigInt::from(0) {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    if let Some((int, frac)) = raw.split_once('.') {
        if !frac.chars().all(|c| c.is_ascii_digit()) || frac.is_empty() {
            return None;
        }
        let int = if int.is_empty() || int == "-" {
            format!("{int}0")
        } else {
            int.to_string()
        };
        let n: BigInt = format!("{int}{frac}").parse().ok()?;
        let d = BigInt::from(10u32).pow(frac.len() as u32);
        return Some(BigRational::new(n, d));
    }
    raw.parse::<BigInt>().ok().map(BigRational::from_integer)
}
