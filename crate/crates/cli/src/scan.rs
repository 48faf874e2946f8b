use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pps_core::{DetectionReport, Detector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ExitStatus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// One entry of the scan output stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScanRecord {
    Report(DetectionReport),
    Error { source: String, error: String },
}

#[derive(Debug, Default)]
pub struct ScanOutcome {
    pub records: Vec<ScanRecord>,
    /// Files (after directory expansion) plus arguments that could not be
    /// expanded.
    pub inputs: usize,
    pub failed_inputs: usize,
}

impl ScanOutcome {
    pub fn reports(&self) -> impl Iterator<Item = &DetectionReport> {
        self.records.iter().filter_map(|r| match r {
            ScanRecord::Report(r) => Some(r),
            ScanRecord::Error { .. } => None,
        })
    }

    pub fn exit_status(&self) -> ExitStatus {
        if self.inputs > 0 && self.failed_inputs == self.inputs {
            ExitStatus::RuntimeError
        } else if self.reports().any(DetectionReport::has_hits) {
            ExitStatus::Findings
        } else {
            ExitStatus::Success
        }
    }
}

struct Document {
    id: String,
    text: String,
}

enum Unit {
    Docs(Vec<Result<Document, (String, String)>>),
    Failed(String, String),
}

fn expand(inputs: &[PathBuf]) -> Vec<Result<PathBuf, (String, String)>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut files = Vec::new();
            let mut errors = Vec::new();
            for entry in walkdir::WalkDir::new(input).follow_links(true) {
                match entry {
                    Ok(e) if e.file_type().is_file() => files.push(e.into_path()),
                    Ok(_) => {}
                    Err(e) => errors.push(Err((input.display().to_string(), e.to_string()))),
                }
            }
            files.sort();
            out.extend(files.into_iter().map(Ok));
            out.extend(errors);
        } else {
            out.push(Ok(input.clone()));
        }
    }
    out
}

fn first_str(v: &Value, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match v.get(*k)? {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

/// A JSONL corpus line: id from `external_id`, `id` or `paper_id`; text from
/// `full_text`, `text` or `title`.
fn parse_jsonl(source: &str, content: &str) -> Vec<Result<Document, (String, String)>> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let at = format!("{source}:{}", i + 1);
            let v: Value = serde_json::from_str(line).map_err(|e| (at.clone(), format!("invalid JSON: {e}")))?;
            let text = first_str(&v, &["full_text", "text", "title"])
                .ok_or_else(|| (at.clone(), "record has no full_text, text or title".to_string()))?;
            let id = first_str(&v, &["external_id", "id", "paper_id"]).unwrap_or(at);
            Ok(Document { id, text })
        })
        .collect()
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("jsonl"))
}

fn load(path: &Path) -> Unit {
    let source = path.display().to_string();
    match std::fs::read(path) {
        Err(e) => Unit::Failed(source, e.to_string()),
        Ok(bytes) => {
            let content = String::from_utf8_lossy(&bytes);
            if is_jsonl(path) {
                Unit::Docs(parse_jsonl(&source, &content))
            } else {
                Unit::Docs(vec![Ok(Document {
                    id: source,
                    text: content.into_owned(),
                })])
            }
        }
    }
}

/// Scans plain-text files, `.jsonl` corpora and directories of either.
///
/// Files are read and scanned in parallel; records come back in input
/// order (directory entries sorted by path, corpus lines in file order).
pub fn scan_paths(inputs: &[PathBuf], detector: &Detector) -> ScanOutcome {
    let units: Vec<Unit> = expand(inputs)
        .into_par_iter()
        .map(|p| match p {
            Ok(path) => load(&path),
            Err((source, error)) => Unit::Failed(source, error),
        })
        .collect();
    let mut outcome = ScanOutcome {
        inputs: units.len(),
        ..Default::default()
    };
    let mut pending: Vec<Result<Document, (String, String)>> = Vec::new();
    for unit in units {
        match unit {
            Unit::Failed(source, error) => {
                outcome.failed_inputs += 1;
                pending.push(Err((source, error)));
            }
            Unit::Docs(docs) => pending.extend(docs),
        }
    }
    outcome.records = pending
        .into_par_iter()
        .map(|d| match d {
            Ok(doc) => ScanRecord::Report(detector.detect(&doc.id, &doc.text)),
            Err((source, error)) => ScanRecord::Error { source, error },
        })
        .collect();
    outcome
}

pub const CSV_HEADER: [&str; 9] = [
    "paper_id",
    "dictionary_version",
    "fingerprint_id",
    "category",
    "start",
    "end",
    "matched_surface",
    "snippet",
    "error",
];

/// Writes records in `format`. JSON is one object per line; CSV has one
/// row per hit, or a single row with empty hit columns for a document
/// without hits.
pub fn write_records(records: &[ScanRecord], format: Format, out: &mut dyn Write) -> io::Result<()> {
    match format {
        Format::Json => {
            for r in records {
                serde_json::to_writer(&mut *out, r)?;
                out.write_all(b"\n")?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(CSV_HEADER)?;
            for r in records {
                match r {
                    ScanRecord::Error { source, error } => {
                        w.write_record([source.as_str(), "", "", "", "", "", "", "", error.as_str()])?
                    }
                    ScanRecord::Report(rep) => {
                        let version = rep.dictionary_version.to_string();
                        if rep.hits.is_empty() {
                            w.write_record([rep.paper_id.as_str(), &version, "", "", "", "", "", "", ""])?;
                        }
                        for h in &rep.hits {
                            w.write_record([
                                rep.paper_id.as_str(),
                                &version,
                                &h.fingerprint_id,
                                h.category.as_str(),
                                &h.span.start.to_string(),
                                &h.span.end.to_string(),
                                &h.matched_surface,
                                &h.snippet,
                                "",
                            ])?;
                        }
                    }
                }
            }
            w.flush()?;
        }
        Format::Text => {
            for r in records {
                match r {
                    ScanRecord::Error { source, error } => writeln!(out, "{source}: error: {error}")?,
                    ScanRecord::Report(rep) if rep.hits.is_empty() => writeln!(out, "{}: clean", rep.paper_id)?,
                    ScanRecord::Report(rep) => {
                        writeln!(out, "{}: {} hit(s)", rep.paper_id, rep.hits.len())?;
                        for h in &rep.hits {
                            writeln!(
                                out,
                                "  [{}] {}..{} {:?}",
                                h.category, h.span.start, h.span.end, h.matched_surface
                            )?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}
