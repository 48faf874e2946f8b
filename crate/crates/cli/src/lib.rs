//! Library side of the `pps` command: corpus scanning and generation.

pub mod scan;

use std::io::{self, Write};

use pps_core::pcfg::{document_seed, generate, Grammar};
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_DEPTH: u32 = 20;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// `scan` found at least one hit.
    Findings = 1,
    Usage = 2,
    RuntimeError = 3,
}

impl From<ExitStatus> for std::process::ExitCode {
    fn from(s: ExitStatus) -> Self {
        std::process::ExitCode::from(s as u8)
    }
}

/// One generated document, in the local index record format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedDoc {
    pub external_id: String,
    pub title: String,
    pub full_text: String,
}

pub fn generated_id(index: u64) -> String {
    format!("gen-{index:06}")
}

/// The `index`-th document of the corpus generated from `seed`.
pub fn generated_doc(grammar: &Grammar, seed: u64, index: u64, max_depth: u32) -> GeneratedDoc {
    GeneratedDoc {
        external_id: generated_id(index),
        title: format!("Generated document {index}"),
        full_text: generate(grammar, document_seed(seed, index), max_depth),
    }
}

/// Writes `n` documents as JSONL.
pub fn write_corpus(grammar: &Grammar, n: u64, seed: u64, max_depth: u32, out: &mut dyn Write) -> io::Result<()> {
    for i in 0..n {
        serde_json::to_writer(&mut *out, &generated_doc(grammar, seed, i, max_depth))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
