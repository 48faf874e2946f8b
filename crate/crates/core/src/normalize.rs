//! Canonical matching form with a map back to original character offsets.
//!
//! The canonical form is produced in a fixed order:
//!
//! 1. curly quotes become ASCII, then double quotes are dropped;
//! 2. soft hyphens (U+00AD) are dropped;
//! 3. a `-` followed by a line break and a letter is joined away;
//! 4. text is lowercased;
//! 5. anything that is not a letter or digit becomes a space, except an
//!    apostrophe with a letter or digit on both sides;
//! 6. space runs collapse to one space and the ends are trimmed.
//!
//! Every surviving character remembers the index of the original character
//! it came from. A collapsed space run maps to its first original character.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedText {
    pub canonical: String,
    /// For each canonical character, the original character index it came from.
    pub offset_map: Vec<usize>,
    /// Original length in characters.
    pub original_length: usize,
}

impl NormalizedText {
    /// Length of the canonical form in characters.
    pub fn len(&self) -> usize {
        self.offset_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset_map.is_empty()
    }

    /// Character ranges `[start, end)` of the space-separated tokens.
    pub fn token_ranges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        let mut pos = 0;
        for c in self.canonical.chars() {
            if c == ' ' {
                out.push((start, pos));
                start = pos + 1;
            }
            pos += 1;
        }
        if pos > start {
            out.push((start, pos));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("pattern is empty")]
    Empty,
    #[error("pattern {pattern:?} is not in canonical form (expected {canonical:?})")]
    NotNormalized { pattern: String, canonical: String },
    #[error("pattern {0:?} has fewer than 2 tokens")]
    TooFewTokens(String),
}

/// A pattern is valid when it is already canonical and has at least two tokens.
pub fn validate_pattern(pattern: &str) -> Result<(), PatternError> {
    if pattern.is_empty() {
        return Err(PatternError::Empty);
    }
    let canonical = normalize(pattern).canonical;
    if canonical != pattern {
        return Err(PatternError::NotNormalized {
            pattern: pattern.to_string(),
            canonical,
        });
    }
    if pattern.split(' ').count() < 2 {
        return Err(PatternError::TooFewTokens(pattern.to_string()));
    }
    Ok(())
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Rules 1 to 3: quotes, soft hyphens and end-of-line hyphenation.
fn strip_typography(chars: &[char]) -> Vec<(char, usize)> {
    let quoted: Vec<(char, usize)> = chars
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| match c {
            '\u{2018}' | '\u{2019}' => Some(('\'', i)),
            '\u{201C}' | '\u{201D}' | '"' => None,
            _ => Some((c, i)),
        })
        .filter(|&(c, _)| c != '\u{00AD}')
        .collect();

    let mut out = Vec::with_capacity(quoted.len());
    let mut k = 0;
    while k < quoted.len() {
        let (c, i) = quoted[k];
        if c == '-' {
            let mut j = k + 1;
            if j < quoted.len() && quoted[j].0 == '\r' {
                j += 1;
                if j < quoted.len() && quoted[j].0 == '\n' {
                    j += 1;
                }
            } else if j < quoted.len() && quoted[j].0 == '\n' {
                j += 1;
            }
            if j > k + 1 && j < quoted.len() && quoted[j].0.is_alphabetic() {
                k = j;
                continue;
            }
        }
        out.push((c, i));
        k += 1;
    }
    out
}

pub fn normalize(text: &str) -> NormalizedText {
    let chars: Vec<char> = text.chars().collect();
    let stripped = strip_typography(&chars);

    let lowered: Vec<(char, usize)> = stripped
        .into_iter()
        .flat_map(|(c, i)| c.to_lowercase().map(move |l| (l, i)))
        .collect();

    let mut canonical = String::with_capacity(lowered.len());
    let mut offset_map = Vec::with_capacity(lowered.len());
    let mut pending_space: Option<usize> = None;
    for (k, &(c, i)) in lowered.iter().enumerate() {
        let keep = if c == '\'' {
            k > 0 && is_word_char(lowered[k - 1].0) && lowered.get(k + 1).is_some_and(|n| is_word_char(n.0))
        } else {
            is_word_char(c)
        };
        if keep {
            if let Some(s) = pending_space.take() {
                canonical.push(' ');
                offset_map.push(s);
            }
            canonical.push(c);
            offset_map.push(i);
        } else if !offset_map.is_empty() && pending_space.is_none() {
            pending_space = Some(i);
        }
    }

    NormalizedText {
        canonical,
        offset_map,
        original_length: chars.len(),
    }
}
