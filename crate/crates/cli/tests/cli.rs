use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use pps_core::dictionary::{fingerprint_id, SEED_DICTIONARY};
use pps_core::pcfg::load_grammar;
use pps_core::{detect, Category, DetectionHit, DetectionReport, Dictionary, ScreeningStats, Span};
use pps_ledger::{Event, HarvestRun, Ledger};
use serde_json::Value;

fn pps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pps"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run pps")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json_lines(s: &str) -> Vec<Value> {
    s.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn scan_finds_the_seed_phrase() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("paper.txt");
    std::fs::write(&file, "Results. A fake neural organization was trained on MNIST.").unwrap();
    let out = pps(&["scan", p(&file)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let lines = json_lines(&stdout(&out));
    assert_eq!(lines.len(), 1);
    let report: DetectionReport = serde_json::from_value(lines[0].clone()).unwrap();
    assert_eq!(report.hits.len(), 1);
    assert_eq!(
        report.hits[0].fingerprint_id,
        fingerprint_id("fake neural organization")
    );
    assert_eq!(report.hits[0].matched_surface, "fake neural organization");
}

#[test]
fn scan_clean_and_empty_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = pps(&["scan", p(&empty)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "");

    let clean = dir.path().join("clean.txt");
    std::fs::write(&clean, "An honest neural network paper.").unwrap();
    let out = pps(&["scan", p(&clean)]);
    assert_eq!(code(&out), 0);
    assert_eq!(json_lines(&stdout(&out)).len(), 1);
}

#[test]
fn unreadable_inputs_are_reported_per_file() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.txt");
    std::fs::write(&good, "though many skeptics said it couldn't be done").unwrap();
    let missing = dir.path().join("missing.txt");

    let out = pps(&["scan", p(&missing), p(&good)]);
    assert_eq!(code(&out), 1);
    let lines = json_lines(&stdout(&out));
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["source"], p(&missing));
    assert!(lines[0]["error"].is_string());
    assert_eq!(lines[1]["paper_id"], p(&good));

    let out = pps(&["scan", p(&missing), p(&dir.path().join("also-missing.txt"))]);
    assert_eq!(code(&out), 3);
    assert_eq!(json_lines(&stdout(&out)).len(), 2);
}

fn write_dictionary(path: &Path, fingerprints: Vec<pps_core::Fingerprint>) {
    let dict = Dictionary {
        fingerprints,
        version: 1,
        loaded_from: String::new(),
    };
    std::fs::write(path, dict.to_ppsdict()).unwrap();
}

#[test]
fn planted_fixture_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let fps = pps_testkit::synthetic_dictionary(300);
    let mut rng = pps_testkit::rng(7);
    let docs = pps_testkit::planted_corpus(&mut rng, &fps, 1000, 50, 120);
    let dict_path = dir.path().join("synthetic.ppsdict");
    write_dictionary(&dict_path, fps);
    let corpus = dir.path().join("corpus.jsonl");
    let body: String = docs
        .iter()
        .map(|d| serde_json::json!({"external_id": d.id, "full_text": d.text}).to_string() + "\n")
        .collect();
    std::fs::write(&corpus, body).unwrap();

    let out = pps(&["scan", "--dict", p(&dict_path), p(&corpus)]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let reports: Vec<DetectionReport> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(reports.len(), 1000);
    let flagged: BTreeSet<&str> = reports
        .iter()
        .filter(|r| r.has_hits())
        .map(|r| r.paper_id.as_str())
        .collect();
    let planted: BTreeSet<&str> = docs
        .iter()
        .filter(|d| !d.planted.is_empty())
        .map(|d| d.id.as_str())
        .collect();
    assert_eq!(flagged.len(), 50);
    assert_eq!(flagged, planted);
    // input order is preserved
    let ids: Vec<&str> = reports.iter().map(|r| r.paper_id.as_str()).collect();
    let expected: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    assert_eq!(ids, expected);
}

/// Independent CSV reader: rebuilds reports from rows.
fn reports_from_csv(text: &str) -> Vec<DetectionReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut out: Vec<DetectionReport> = Vec::new();
    let mut last_key: Option<String> = None;
    for row in reader.records() {
        let row = row.unwrap();
        let paper_id = row[col("paper_id")].to_string();
        let version: u64 = row[col("dictionary_version")].parse().unwrap();
        let key = paper_id.clone();
        if last_key.as_deref() != Some(&key) || row[col("fingerprint_id")].is_empty() {
            out.push(DetectionReport {
                paper_id,
                hits: vec![],
                categories_triggered: BTreeSet::new(),
                dictionary_version: version,
            });
        }
        last_key = Some(key);
        if !row[col("fingerprint_id")].is_empty() {
            let hit = DetectionHit {
                fingerprint_id: row[col("fingerprint_id")].to_string(),
                category: row[col("category")].parse::<Category>().unwrap(),
                span: Span::new(row[col("start")].parse().unwrap(), row[col("end")].parse().unwrap()),
                snippet: row[col("snippet")].to_string(),
                matched_surface: row[col("matched_surface")].to_string(),
            };
            let r = out.last_mut().unwrap();
            r.categories_triggered.insert(hit.category);
            r.hits.push(hit);
        }
    }
    out
}

#[test]
fn json_and_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let texts = [
        ("a.txt", "Though many skeptics said it couldn\u{2019}t be done, our \"fake neural\norganization\", with commas, works."),
        ("b.txt", "nothing to report"),
        ("c.txt", "FAKE NEURAL ORGANIZATION twice: fake neural organization."),
    ];
    for (name, text) in texts {
        std::fs::write(dir.path().join(name), text).unwrap();
    }
    let json = pps(&["scan", "--format", "json", p(dir.path())]);
    let csv = pps(&["scan", "--format", "csv", p(dir.path())]);
    assert_eq!((code(&json), code(&csv)), (1, 1));
    let from_json: Vec<DetectionReport> = stdout(&json)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let from_csv = reports_from_csv(&stdout(&csv));
    assert_eq!(from_json, from_csv);

    // and both equal the library's own reports
    let seed = Dictionary::seed();
    let expected: Vec<DetectionReport> = texts
        .iter()
        .map(|(name, text)| {
            let id = dir.path().join(name).display().to_string();
            detect(&id, text, &seed).unwrap()
        })
        .collect();
    assert_eq!(from_json, expected);
    assert_eq!(from_json[2].hits.len(), 2);

    let text = pps(&["scan", "--format", "text", p(dir.path())]);
    assert_eq!(code(&text), 1);
    assert!(stdout(&text).contains("clean"));
}

#[test]
fn dictionary_validation() {
    let dir = tempfile::tempdir().unwrap();
    let seed = dir.path().join("seed.ppsdict");
    std::fs::write(&seed, SEED_DICTIONARY).unwrap();
    let out = pps(&["dict", "validate", p(&seed)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let dup = dir.path().join("dup.ppsdict");
    std::fs::write(
        &dup,
        "ppsdict v1\nscigen\talpha beta\t\tx\nsbir\tgamma delta\t\tx\nscigen\talpha beta\t\tx\n",
    )
    .unwrap();
    let out = pps(&["dict", "validate", p(&dup)]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("line 4") && err.contains("line 2"), "{err}");

    let out = pps(&["dict", "validate", p(&dir.path().join("nope.ppsdict"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn grammar_validation() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy.ppsgram");
    std::fs::write(&toy, pps_testkit::TOY_GRAMMAR).unwrap();
    let out = pps(&["gram", "validate", p(&toy)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let cyclic = dir.path().join("cyclic.ppsgram");
    std::fs::write(&cyclic, "ppsgram v1\nS -> 1 : \"x y\" A\nA -> 1 : B\nB -> 1 : A\n").unwrap();
    let out = pps(&["gram", "validate", p(&cyclic)]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("A -> B -> A"), "{err}");
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy.ppsgram");
    std::fs::write(&toy, pps_testkit::TOY_GRAMMAR).unwrap();
    let run = |n: &str, seed: &str, name: &str| {
        let out_path = dir.path().join(name);
        let out = pps(&[
            "generate",
            "--grammar",
            p(&toy),
            "-n",
            n,
            "--seed",
            seed,
            "--out",
            p(&out_path),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        std::fs::read_to_string(out_path).unwrap()
    };
    assert_eq!(run("0", "1", "zero.jsonl"), "");
    let a = run("50", "42", "a.jsonl");
    let b = run("50", "42", "b.jsonl");
    let c = run("50", "43", "c.jsonl");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let docs = json_lines(&a);
    assert_eq!(docs.len(), 50);
    assert_eq!(docs[0]["external_id"], "gen-000000");
    assert_eq!(docs[49]["external_id"], "gen-000049");
}

#[test]
fn generated_detection_rate_matches_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy.ppsgram");
    std::fs::write(&toy, pps_testkit::TOY_GRAMMAR).unwrap();
    let out = pps(&["generate", "--grammar", p(&toy), "-n", "100", "--seed", "5"]);
    let corpus = dir.path().join("gen.jsonl");
    std::fs::write(&corpus, &out.stdout).unwrap();
    let out = pps(&["scan", p(&corpus)]);
    let flagged = json_lines(&stdout(&out))
        .iter()
        .filter(|r| !r["hits"].as_array().unwrap().is_empty())
        .count();
    let grammar = load_grammar(pps_testkit::TOY_GRAMMAR).unwrap();
    // The seed dictionary's scigen phrase is one of the closing sentences.
    let p_exact =
        pps_testkit::enumerated_phrase_probability(&grammar, "though many skeptics said it couldn't be done", 20);
    let se = (p_exact * (1.0 - p_exact) / 100.0).sqrt();
    let rate = flagged as f64 / 100.0;
    assert!((rate - p_exact).abs() <= 3.0 * se, "rate {rate} vs {p_exact} (se {se})");
}

#[test]
fn extract_ranks_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let toy = dir.path().join("toy.ppsgram");
    std::fs::write(&toy, pps_testkit::TOY_GRAMMAR).unwrap();
    let out = pps(&["extract", "--grammar", p(&toy)]);
    assert_eq!(code(&out), 0);
    let cands = json_lines(&stdout(&out));
    assert!(cands.len() >= 5);
    let probs: Vec<f64> = cands.iter().map(|c| c["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));
    let out = pps(&["extract", "--grammar", p(&toy), "--top", "2"]);
    assert_eq!(json_lines(&stdout(&out)).len(), 2);
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("pps.toml");
    std::fs::write(
        &path,
        format!(
            "listen = \"127.0.0.1:0\"\nstore_path = \"ledger.jsonl\"\n{extra}\n[harvest]\ninterval_secs = 1\n\n[[search]]\nkind = \"local\"\nname = \"fixture\"\npath = \"index.jsonl\"\n"
        ),
    )
    .unwrap();
    path
}

fn write_index(dir: &Path) {
    let records = [
        serde_json::json!({"external_id": "w1", "doi": "10.9/one", "title": "One", "full_text": "we used a fake neural organization"}),
        serde_json::json!({"external_id": "w2", "doi": "10.9/two", "title": "Two", "full_text": "a fake neural organization; though many skeptics said it couldn't be done"}),
        serde_json::json!({"external_id": "w3", "title": "Three", "full_text": "clean"}),
    ];
    let body: String = records.iter().map(|r| r.to_string() + "\n").collect();
    std::fs::write(dir.join("index.jsonl"), body).unwrap();
}

#[test]
fn harvest_once_prints_the_run() {
    let dir = tempfile::tempdir().unwrap();
    write_index(dir.path());
    let config = write_config(dir.path(), "");
    let out = pps(&["harvest", "--config", p(&config), "--once"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run: HarvestRun = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!((run.queries_issued, run.new_suspects), (2, 2));

    let out = pps(&["harvest", "--config", p(&config)]);
    let run: HarvestRun = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(run.new_suspects, 0);

    let out = pps(&["stats", "--config", p(&config)]);
    let stats: ScreeningStats = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!((stats.total_suspects, stats.awaiting), (2, 2));

    let out = pps(&[
        "harvest",
        "--config",
        p(&config),
        "--loop",
        "--max-ticks",
        "2",
        "--interval-secs",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let status: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(status["ticks"], 2);
    assert_eq!(status["runs_completed"], 2);

    let out = pps(&["harvest", "--config", p(&config), "--once", "--loop"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn stats_on_the_fixture_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let ledger = Ledger::open(dir.path().join("ledger.jsonl")).unwrap();
    let fp = fingerprint_id("fake neural organization");
    let (papers, assessments) = pps_testkit::counts_fixture(2088, 744, &fp, Category::Tortured);
    let mut events = vec![Event::DictionaryInstalled {
        at: pps_testkit::epoch_plus(0),
        dictionary: Dictionary::seed(),
    }];
    events.extend(papers.into_iter().map(|paper| Event::PaperInserted { paper }));
    events.extend(
        assessments
            .into_iter()
            .map(|assessment| Event::AssessmentAppended { assessment }),
    );
    ledger.import_events(events).unwrap();
    drop(ledger);

    let out = pps(&["stats", "--config", p(&config)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stats: ScreeningStats = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(
        (stats.total_suspects, stats.assessed, stats.awaiting),
        (2088, 744, 1344)
    );

    // export, then import into a fresh store
    let export = dir.path().join("backup.jsonl");
    let out = pps(&["ledger", "export", "--config", p(&config), "--out", p(&export)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let other = tempfile::tempdir().unwrap();
    let other_config = write_config(other.path(), "");
    let out = pps(&["ledger", "import", "--config", p(&other_config), p(&export)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = pps(&["stats", "--config", p(&other_config)]);
    let copy: ScreeningStats = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(copy, stats);
    // importing into a non-empty ledger is refused
    let out = pps(&["ledger", "import", "--config", p(&other_config), p(&export)]);
    assert_eq!(code(&out), 3);
}

#[test]
fn serve_answers_healthz() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let mut child = Command::new(env!("CARGO_BIN_EXE_pps"))
        .args(["serve", "--config", p(&config)])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let base = line.trim().strip_prefix("listening on ").expect(&line).to_string();
    let resp = reqwest::blocking::get(format!("{base}/api/healthz"));
    child.kill().unwrap();
    child.wait().unwrap();
    let resp = resp.unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let body: Value = serde_json::from_str(&resp.text().unwrap()).unwrap();
    assert_eq!(body["status"], "ok");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&pps(&["frobnicate"])), 2);
    assert_eq!(code(&pps(&["scan", "--format", "yaml", "x"])), 2);
    assert_eq!(code(&pps(&["--help"])), 0);
}
