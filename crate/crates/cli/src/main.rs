//! txlens: parse, decode, and analyze EVM transaction traces; infer and
//! check invariants over transaction corpora; translate traces into fact
//! files for downstream analyzers.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use txlens_core::dataflow::{query_flows, shadow_execute, SinkFilter, TaintSource};
use txlens_core::invariants::{template_by_id, Tier, TxArtifacts};
use txlens_core::parser::{build_invocation_tree, render_tree, RenderOptions};
use txlens_core::pipeline::{
    analyze_tx, check_corpus, infer_for_contract, load_store, parse_tx_list, resolve_tx,
    save_store, split_refs, AnalysisNeeds, RunConfig, TxRef,
};
use txlens_core::primitives::parse_address;
use txlens_core::translator::to_fact_file;

#[derive(Parser)]
#[command(
    name = "txlens",
    version,
    about = "EVM transaction-trace analysis: invocation trees, storage decoding, taint tracking, invariant inference"
)]
struct Cli {
    /// JSON-RPC endpoint URL (falls back to TXLENS_ENDPOINT).
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Cache directory for fetched traces and receipts.
    #[arg(long, global = true, default_value = ".txlens-cache")]
    cache_dir: PathBuf,
    /// Directory holding abi/<address>.json and layout/<address>.json.
    #[arg(long, global = true, default_value = "config")]
    config_dir: PathBuf,
    /// Chronological fraction of the corpus used for training.
    #[arg(long, global = true, default_value_t = 0.7)]
    train_fraction: f64,
    /// Request memory capture when fetching traces.
    #[arg(long, global = true)]
    memory: bool,
    /// Comma-separated template ids to restrict invariant work to.
    #[arg(long, global = true, value_delimiter = ',')]
    templates: Option<Vec<String>>,
    /// Worker threads for batch commands (default: all processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the invocation tree of one transaction.
    Parse {
        /// Transaction hash or fixture path.
        tx: String,
        /// Substitute decoded function calls and storage paths.
        #[arg(long)]
        decode: bool,
    },
    /// Infer invariants for a contract over a transaction corpus.
    Infer {
        /// Contract address the invariants guard.
        contract: String,
        /// File listing tx hashes or fixture paths, one per line,
        /// ordered chronologically.
        txlist: PathBuf,
        /// Where to write the invariant store.
        #[arg(long, default_value = "invariants.json")]
        out: PathBuf,
    },
    /// Check transactions against a stored invariant set.
    Check {
        /// Invariant store written by `infer`.
        store: PathBuf,
        /// File listing tx hashes or fixture paths to check.
        txlist: PathBuf,
        /// Where to write the report JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Translate a transaction into a per-instruction fact file.
    Translate {
        /// Transaction hash or fixture path.
        tx: String,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract taint/data-flow facts from one transaction.
    Extract {
        /// Transaction hash or fixture path.
        tx: String,
        /// Taint source, repeatable: calldata:<frame>:<off>:<len>,
        /// storage:<address>:<slot>, env:<OPCODE>, return:<frame>.
        #[arg(long = "source")]
        sources: Vec<String>,
        /// Sink filter: <opcode>[:<role>], role in
        /// value|slot|target|data|condition.
        #[arg(long)]
        sink: Option<String>,
        /// Output path for JSON lines (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Misuse rather than runtime failure; exits with code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn main() {
    let cli = Cli::parse();
    let config = RunConfig {
        endpoint: cli
            .endpoint
            .clone()
            .or_else(|| std::env::var(txlens_core::ingest::ENDPOINT_ENV).ok())
            .filter(|e| !e.is_empty()),
        cache_dir: cli.cache_dir.clone(),
        config_dir: cli.config_dir.clone(),
        train_fraction: cli.train_fraction,
        memory_capture: cli.memory,
        template_filter: cli
            .templates
            .clone()
            .map(|ids| ids.into_iter().collect::<BTreeSet<String>>()),
    };
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }

    match run(cli, config) {
        Ok(()) => {}
        Err(e) => {
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("usage error: {e}");
                std::process::exit(2);
            }
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli, config: RunConfig) -> Result<()> {
    match cli.command {
        Command::Parse { tx, decode } => cmd_parse(&tx, decode, &config),
        Command::Infer {
            contract,
            txlist,
            out,
        } => cmd_infer(&contract, &txlist, &out, &config),
        Command::Check { store, txlist, out } => {
            cmd_check(&store, &txlist, out.as_deref(), &config)
        }
        Command::Translate { tx, out } => cmd_translate(&tx, out.as_deref(), &config),
        Command::Extract {
            tx,
            sources,
            sink,
            out,
        } => cmd_extract(&tx, &sources, sink.as_deref(), out.as_deref(), &config),
    }
}

fn cmd_parse(tx: &str, decode: bool, config: &RunConfig) -> Result<()> {
    let tx_ref = TxRef::parse(tx);
    let (meta, trace) = resolve_tx(&tx_ref, config).context("resolving transaction")?;
    if decode {
        let artifacts = analyze_tx(
            meta,
            &trace,
            config,
            AnalysisNeeds {
                decode_calls: true,
                decode_storage: true,
                dataflow: false,
            },
        )?;
        let options = RenderOptions {
            decoded_calls: Some(&artifacts.decoded_calls),
            show_storage: true,
        };
        print!("{}", render_tree(&artifacts.tree, &options));
    } else {
        let tree = build_invocation_tree(&meta, &trace)?;
        print!("{}", render_tree(&tree, &RenderOptions::default()));
    }
    Ok(())
}

/// Resolve and analyze a batch on the worker pool, preserving order and
/// skipping (but counting) per-transaction failures.
fn batch_artifacts(
    refs: &[TxRef],
    config: &RunConfig,
    needs: AnalysisNeeds,
) -> (Vec<TxArtifacts>, usize) {
    let results: Vec<Result<TxArtifacts, String>> = refs
        .par_iter()
        .map(|tx_ref| {
            resolve_tx(tx_ref, config)
                .and_then(|(meta, trace)| analyze_tx(meta, &trace, config, needs))
                .map_err(|e| format!("{}: {e}", tx_ref.describe()))
        })
        .collect();
    let mut artifacts = Vec::new();
    let mut failures = 0usize;
    for result in results {
        match result {
            Ok(a) => artifacts.push(a),
            Err(msg) => {
                eprintln!("skipping {msg}");
                failures += 1;
            }
        }
    }
    (artifacts, failures)
}

fn exceeded_failure_budget(failures: usize, total: usize) -> bool {
    failures * 10 > total
}

fn cmd_infer(contract: &str, txlist: &PathBuf, out: &PathBuf, config: &RunConfig) -> Result<()> {
    let contract = parse_address(contract).map_err(|e| usage(format!("bad contract: {e}")))?;
    let list_text = std::fs::read_to_string(txlist)
        .with_context(|| format!("reading tx list {}", txlist.display()))?;
    let refs = parse_tx_list(&list_text);
    if refs.is_empty() {
        return Err(usage(format!("tx list {} is empty", txlist.display())));
    }

    let (train_refs, test_refs) =
        split_refs(&refs, config.train_fraction).map_err(|e| usage(e.to_string()))?;
    let templates = config.active_templates();
    if templates.is_empty() {
        return Err(usage("template filter excludes every template"));
    }
    let needs = AnalysisNeeds::for_templates(&templates);
    let (training, failures) = batch_artifacts(&train_refs, config, needs);
    if training.is_empty() {
        bail!("no training transaction could be analyzed");
    }

    let outcome = infer_for_contract(contract, &training, &templates)?;
    save_store(out, &outcome.invariants)?;

    println!(
        "trained on {} txs ({} held out), {} invariants for {:?}",
        training.len(),
        test_refs.len(),
        outcome.invariants.len(),
        contract
    );
    for summary in &outcome.per_template {
        if summary.not_applicable {
            println!("  {:<36} not applicable", summary.template_id);
        } else {
            println!(
                "  {:<36} {} inferred",
                summary.template_id, summary.invariants
            );
        }
    }
    println!("store written to {}", out.display());

    if exceeded_failure_budget(failures, train_refs.len()) {
        bail!(
            "{failures}/{} training transactions failed",
            train_refs.len()
        );
    }
    Ok(())
}

fn cmd_check(
    store_path: &PathBuf,
    txlist: &PathBuf,
    out: Option<&std::path::Path>,
    config: &RunConfig,
) -> Result<()> {
    let invariants = load_store(store_path)?;
    let list_text = std::fs::read_to_string(txlist)
        .with_context(|| format!("reading tx list {}", txlist.display()))?;
    let refs = parse_tx_list(&list_text);

    // Stored invariants dictate which stages each checked tx needs.
    let mut needs = AnalysisNeeds {
        decode_calls: true,
        decode_storage: false,
        dataflow: false,
    };
    for invariant in &invariants {
        if let Some(t) = template_by_id(&invariant.template_id) {
            needs.decode_storage |= t.tier == Tier::Storage;
            needs.dataflow |= t.tier == Tier::Dataflow;
        }
    }

    let (corpus, failures) = batch_artifacts(&refs, config, needs);
    let (report, _verdicts) = check_corpus(&invariants, &corpus)?;

    let json = serde_json::to_string_pretty(&report)?;
    match out {
        Some(path) => {
            std::fs::write(path, &json)
                .with_context(|| format!("writing report {}", path.display()))?;
            println!(
                "checked {} txs against {} invariants: {} pass, {} violate ({} written)",
                report.txs_checked,
                report.invariants_inferred,
                report.passes,
                report.violations,
                path.display()
            );
        }
        None => println!("{json}"),
    }

    if !refs.is_empty() && exceeded_failure_budget(failures, refs.len()) {
        bail!("{failures}/{} transactions failed to analyze", refs.len());
    }
    Ok(())
}

fn cmd_translate(tx: &str, out: Option<&std::path::Path>, config: &RunConfig) -> Result<()> {
    let tx_ref = TxRef::parse(tx);
    let (meta, trace) = resolve_tx(&tx_ref, config).context("resolving transaction")?;
    let tree = build_invocation_tree(&meta, &trace)?;
    let content = to_fact_file(&meta, &trace, &tree)?;
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing fact file {}", path.display()))?,
        None => print!("{content}"),
    }
    Ok(())
}

fn parse_source(spec: &str) -> Result<TaintSource> {
    txlens_core::dataflow::parse_source_spec(spec).map_err(usage)
}

fn parse_sink(spec: &str) -> Result<SinkFilter> {
    txlens_core::dataflow::parse_sink_spec(spec).map_err(usage)
}

fn cmd_extract(
    tx: &str,
    source_specs: &[String],
    sink: Option<&str>,
    out: Option<&std::path::Path>,
    config: &RunConfig,
) -> Result<()> {
    let sources = source_specs
        .iter()
        .map(|s| parse_source(s))
        .collect::<Result<Vec<_>>>()?;
    let filter = match sink {
        Some(spec) => Some(parse_sink(spec)?),
        None => None,
    };

    let tx_ref = TxRef::parse(tx);
    let (meta, trace) = resolve_tx(&tx_ref, config).context("resolving transaction")?;
    let tree = build_invocation_tree(&meta, &trace)?;
    let (_, facts) = shadow_execute(&meta, &trace, &tree, &sources)?;
    let facts = match filter {
        Some(f) => query_flows(&facts, &f),
        None => facts,
    };

    let mut text = String::new();
    for fact in &facts {
        text.push_str(&fact.to_json_line());
        text.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing facts {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
