use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pps_cli::scan::{scan_paths, write_records, Format};
use pps_cli::{write_corpus, ExitStatus, DEFAULT_MAX_DEPTH};
use pps_core::pcfg::{extract_candidate_fingerprints, load_grammar};
use pps_core::{Detector, Dictionary};
use pps_harvest::{harvest_ledger, schedule};
use pps_ledger::Ledger;
use pps_server::{app_state, bind, open_ledger, serve, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "pps",
    version,
    about = "Screen scholarly papers for generated-text fingerprints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan text files, JSONL corpora or directories for fingerprints.
    Scan(ScanArgs),
    /// Dictionary tools.
    Dict {
        #[command(subcommand)]
        command: DictCommand,
    },
    /// Grammar tools.
    Gram {
        #[command(subcommand)]
        command: GramCommand,
    },
    /// Generate a JSONL corpus from a grammar.
    Generate(GenerateArgs),
    /// Rank a grammar's terminal runs as fingerprint candidates.
    Extract(ExtractArgs),
    /// Query the search clients with every active fingerprint.
    Harvest(HarvestArgs),
    /// Run the REST service.
    Serve(ServeArgs),
    /// Print screening statistics as JSON.
    Stats(ConfigArg),
    /// Ledger backup.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
}

#[derive(Args)]
struct ScanArgs {
    /// Files or directories; `.jsonl` files are read as corpora.
    inputs: Vec<PathBuf>,
    /// `ppsdict` file; the seed dictionary when omitted.
    #[arg(long)]
    dict: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Subcommand)]
enum DictCommand {
    Validate { path: PathBuf },
}

#[derive(Subcommand)]
enum GramCommand {
    Validate { path: PathBuf },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(short = 'n', long, default_value_t = 100)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    max_depth: u32,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    grammar: PathBuf,
    #[arg(long, default_value_t = 2)]
    min_tokens: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    max_depth: u32,
    /// Print only the best `top` candidates.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct HarvestArgs {
    #[arg(long)]
    config: PathBuf,
    /// One pass, then exit (default).
    #[arg(long, conflicts_with = "loop")]
    once: bool,
    /// Harvest on the configured interval until interrupted.
    #[arg(long = "loop")]
    r#loop: bool,
    /// Stop the loop after this many ticks.
    #[arg(long, hide = true)]
    max_ticks: Option<u64>,
    /// Override the configured interval, in seconds.
    #[arg(long, hide = true)]
    interval_secs: Option<u64>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Also run the harvest loop in this process.
    #[arg(long)]
    harvest: bool,
}

#[derive(Subcommand)]
enum LedgerCommand {
    /// Write a compacted JSONL copy of the ledger.
    Export {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load an export into an empty ledger.
    Import {
        #[arg(long)]
        config: PathBuf,
        input: PathBuf,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_config(path: &Path) -> Result<ServiceConfig> {
    Ok(ServiceConfig::load(path)?)
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn cmd_scan(args: ScanArgs) -> Result<ExitStatus> {
    let dict = match &args.dict {
        None => Dictionary::seed(),
        Some(p) => match Dictionary::parse(&read(p)?, &p.display().to_string()) {
            Ok(d) => d,
            Err(e) => {
                for issue in &e.issues {
                    eprintln!("{}: {issue}", p.display());
                }
                return Ok(ExitStatus::Usage);
            }
        },
    };
    let detector = Detector::new(&dict)?;
    let outcome = scan_paths(&args.inputs, &detector);
    let mut out = output(None)?;
    write_records(&outcome.records, args.format, &mut out)?;
    out.flush()?;
    Ok(outcome.exit_status())
}

fn cmd_dict_validate(path: &Path) -> Result<ExitStatus> {
    match Dictionary::parse(&read(path)?, &path.display().to_string()) {
        Ok(d) => {
            println!("{}: ok, {} fingerprints", path.display(), d.fingerprints.len());
            Ok(ExitStatus::Success)
        }
        Err(e) => {
            for issue in &e.issues {
                eprintln!("{}: {issue}", path.display());
            }
            Ok(ExitStatus::Usage)
        }
    }
}

fn cmd_gram_validate(path: &Path) -> Result<ExitStatus> {
    match load_grammar(&read(path)?) {
        Ok(g) => {
            let productions: usize = (0..g.nonterminals().len()).map(|n| g.productions(n).len()).sum();
            println!(
                "{}: ok, start {}, {} nonterminals, {} productions",
                path.display(),
                g.start_name(),
                g.nonterminals().len(),
                productions
            );
            Ok(ExitStatus::Success)
        }
        Err(e) => {
            for issue in &e.issues {
                eprintln!("{}: {issue}", path.display());
            }
            Ok(ExitStatus::Usage)
        }
    }
}

fn grammar(path: &Path) -> Result<Option<pps_core::pcfg::Grammar>> {
    match load_grammar(&read(path)?) {
        Ok(g) => Ok(Some(g)),
        Err(e) => {
            for issue in &e.issues {
                eprintln!("{}: {issue}", path.display());
            }
            Ok(None)
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitStatus> {
    if args.max_depth == 0 {
        eprintln!("--max-depth must be at least 1");
        return Ok(ExitStatus::Usage);
    }
    let Some(g) = grammar(&args.grammar)? else {
        return Ok(ExitStatus::Usage);
    };
    let mut out = output(args.out.as_deref())?;
    write_corpus(&g, args.count, args.seed, args.max_depth, &mut out)?;
    Ok(ExitStatus::Success)
}

fn cmd_extract(args: ExtractArgs) -> Result<ExitStatus> {
    let Some(g) = grammar(&args.grammar)? else {
        return Ok(ExitStatus::Usage);
    };
    let candidates = extract_candidate_fingerprints(&g, args.min_tokens, args.max_depth.max(1));
    let mut out = output(None)?;
    for c in candidates.iter().take(args.top.unwrap_or(usize::MAX)) {
        serde_json::to_writer(&mut out, c)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(ExitStatus::Success)
}

fn wait_for_ctrl_c() -> Result<()> {
    runtime()?.block_on(tokio::signal::ctrl_c())?;
    Ok(())
}

fn cmd_harvest(args: HarvestArgs) -> Result<ExitStatus> {
    let config = load_config(&args.config)?;
    let clients = config.search_clients()?;
    let ledger = open_ledger(&config)?;
    let options = config.harvest.options();
    if !args.r#loop {
        let run = harvest_ledger(&clients, &ledger, &options)?;
        print_json(&run)?;
        let all_failed = run.queries_issued > 0 && run.errors.len() >= run.queries_issued;
        return Ok(if all_failed {
            ExitStatus::RuntimeError
        } else {
            ExitStatus::Success
        });
    }
    let mut sched = config.harvest.schedule();
    if let Some(secs) = args.interval_secs {
        sched.interval = Duration::from_secs(secs.max(1));
    }
    sched.max_ticks = args.max_ticks;
    let scheduler = schedule(clients, ledger.clone(), options, sched);
    let status = if args.max_ticks.is_some() {
        scheduler.join()
    } else {
        wait_for_ctrl_c()?;
        scheduler.stop()
    };
    print_json(&status)?;
    Ok(ExitStatus::Success)
}

fn cmd_serve(args: ServeArgs) -> Result<ExitStatus> {
    let config = load_config(&args.config)?;
    let ledger = open_ledger(&config)?;
    let scheduler = if args.harvest {
        let clients = config.search_clients()?;
        Some(schedule(
            clients,
            ledger.clone(),
            config.harvest.options(),
            config.harvest.schedule(),
        ))
    } else {
        None
    };
    let state = app_state(&config, ledger)?;
    runtime()?.block_on(async {
        let listener = bind(config.listen).await?;
        println!("listening on http://{}", listener.local_addr()?);
        io::stdout().flush()?;
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        anyhow::Ok(())
    })?;
    if let Some(s) = scheduler {
        s.stop();
    }
    Ok(ExitStatus::Success)
}

fn cmd_stats(args: ConfigArg) -> Result<ExitStatus> {
    let config = load_config(&args.config)?;
    if !config.store_path.exists() {
        bail!("no ledger at {}", config.store_path.display());
    }
    let ledger = Ledger::open(&config.store_path)?;
    print_json(&ledger.stats())?;
    Ok(ExitStatus::Success)
}

fn cmd_ledger(command: LedgerCommand) -> Result<ExitStatus> {
    match command {
        LedgerCommand::Export { config, out } => {
            let config = load_config(&config)?;
            let ledger = Ledger::open(&config.store_path)?;
            let mut out = output(out.as_deref())?;
            ledger.export_jsonl(&mut out)?;
            out.flush()?;
        }
        LedgerCommand::Import { config, input } => {
            let config = load_config(&config)?;
            let ledger = Ledger::open(&config.store_path)?;
            let file = File::open(&input).with_context(|| format!("cannot read {}", input.display()))?;
            let n = ledger.import_jsonl(io::BufReader::new(file))?;
            eprintln!("imported {n} events into {}", config.store_path.display());
        }
    }
    Ok(ExitStatus::Success)
}

fn run(cli: Cli) -> Result<ExitStatus> {
    match cli.command {
        Command::Scan(args) => cmd_scan(args),
        Command::Dict {
            command: DictCommand::Validate { path },
        } => cmd_dict_validate(&path),
        Command::Gram {
            command: GramCommand::Validate { path },
        } => cmd_gram_validate(&path),
        Command::Generate(args) => cmd_generate(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Harvest(args) => cmd_harvest(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Ledger { command } => cmd_ledger(command),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::Usage.into()
            } else {
                ExitStatus::Success.into()
            };
        }
    };
    match run(cli) {
        Ok(status) => status.into(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitStatus::RuntimeError.into()
        }
    }
}
