//! End-to-end orchestration: resolve a transaction (endpoint or fixture),
//! run the analysis stages a task needs, and drive the corpus-level
//! infer/check protocol. The CLI and the Python bindings are both thin
//! shells over this module.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataflow::{shadow_execute, DataflowError, FlowFact, TaintSource};
use crate::decoder::{decode_call, AbiError, AbiFunction, ConfigDir, SlotDecodeConfig};
use crate::ingest::{
    load_fixture, Cache, IngestError, RawTrace, RpcClient, RpcConfig, TransactionMeta,
};
use crate::invariants::{
    check, collect_observations, infer, split_corpus, CheckContext, ConcreteInvariant,
    GuardVerdict, InvariantError, InvariantTemplate, Observation, Outcome, Target, TxArtifacts,
};
use crate::parser::{build_invocation_tree, InvocationNode, ParseError};
use crate::primitives::{parse_hash32, Address, Hash32};
use crate::translator::TranslateError;

/// Run-wide configuration shared by all commands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub endpoint: Option<String>,
    pub cache_dir: PathBuf,
    pub config_dir: PathBuf,
    pub train_fraction: f64,
    pub memory_capture: bool,
    pub template_filter: Option<BTreeSet<String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            endpoint: std::env::var(crate::ingest::ENDPOINT_ENV)
                .ok()
                .filter(|e| !e.is_empty()),
            cache_dir: PathBuf::from(".txlens-cache"),
            config_dir: PathBuf::from("config"),
            train_fraction: 0.7,
            memory_capture: false,
            template_filter: None,
        }
    }
}

impl RunConfig {
    /// Invariant templates active under the filter.
    pub fn active_templates(&self) -> Vec<InvariantTemplate> {
        crate::invariants::template_catalog()
            .into_iter()
            .filter(|t| match &self.template_filter {
                Some(filter) => filter.contains(t.id),
                None => true,
            })
            .collect()
    }
}

/// Which analysis stages a task needs beyond parsing.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalysisNeeds {
    pub decode_calls: bool,
    pub decode_storage: bool,
    pub dataflow: bool,
}

impl AnalysisNeeds {
    /// Everything the given templates require.
    pub fn for_templates(templates: &[InvariantTemplate]) -> Self {
        use crate::invariants::Tier;
        AnalysisNeeds {
            decode_calls: true,
            decode_storage: templates.iter().any(|t| t.tier == Tier::Storage),
            dataflow: templates.iter().any(|t| t.tier == Tier::Dataflow),
        }
    }
}

/// A transaction reference: an on-chain hash or a local fixture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxRef {
    Hash(Hash32),
    Fixture(PathBuf),
}

impl TxRef {
    /// Hashes are 32-byte hex strings; anything else is a fixture path.
    pub fn parse(s: &str) -> TxRef {
        match parse_hash32(s.trim()) {
            Ok(h) => TxRef::Hash(h),
            Err(_) => TxRef::Fixture(PathBuf::from(s.trim())),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TxRef::Hash(h) => format!("{h:?}"),
            TxRef::Fixture(p) => p.display().to_string(),
        }
    }
}

/// Parse a tx list file: one hash or fixture path per line, `#` comments.
pub fn parse_tx_list(text: &str) -> Vec<TxRef> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(TxRef::parse)
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Abi(#[from] AbiError),
    #[error(transparent)]
    Dataflow(#[from] DataflowError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error("no endpoint configured; tx hashes need --endpoint or {}", crate::ingest::ENDPOINT_ENV)]
    NoEndpoint,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Obtain `(meta, trace)` for a reference, hitting the network only for
/// hash references on a cache miss.
pub fn resolve_tx(
    tx_ref: &TxRef,
    config: &RunConfig,
) -> Result<(TransactionMeta, RawTrace), PipelineError> {
    match tx_ref {
        TxRef::Fixture(path) => Ok(load_fixture(path)?),
        TxRef::Hash(hash) => {
            let endpoint = config.endpoint.as_ref().ok_or(PipelineError::NoEndpoint)?;
            let mut rpc = RpcConfig::new(endpoint);
            rpc.enable_memory = config.memory_capture;
            let cache = Cache::from_env_or(&config.cache_dir);
            let client = RpcClient::new(rpc, cache)?;
            let meta = client.fetch_receipt(*hash)?;
            let trace = client.fetch_trace(*hash)?;
            Ok((meta, trace))
        }
    }
}

/// Parse and run the requested stages over one transaction.
pub fn analyze_tx(
    meta: TransactionMeta,
    trace: &RawTrace,
    config: &RunConfig,
    needs: AnalysisNeeds,
) -> Result<TxArtifacts, PipelineError> {
    let mut tree = build_invocation_tree(&meta, trace)?;
    let config_dir = ConfigDir::new(&config.config_dir);

    let mut decoded_calls = BTreeMap::new();
    if needs.decode_calls {
        let mut abis: BTreeMap<Address, Vec<AbiFunction>> = BTreeMap::new();
        for node in tree.walk() {
            let functions = abis
                .entry(node.code_address)
                .or_insert_with_key(|addr| config_dir.abi_for(*addr).unwrap_or_default());
            if !functions.is_empty() {
                let decoded = decode_call(node, functions);
                decoded_calls.insert(node.entry_index, decoded);
            }
        }
    }

    if needs.decode_storage {
        decode_tree_storage(&mut tree, &config_dir)?;
    }

    let flow_facts = if needs.dataflow {
        Some(root_calldata_flows(&meta, trace, &tree)?)
    } else {
        None
    };

    Ok(TxArtifacts {
        meta,
        tree,
        decoded_calls,
        storage_decoded: needs.decode_storage,
        flow_facts,
    })
}

/// Fill `decoded` on every storage event using the transaction's sha3
/// records and any supplied layouts.
pub fn decode_tree_storage(
    tree: &mut InvocationNode,
    config_dir: &ConfigDir,
) -> Result<(), PipelineError> {
    let records: Vec<crate::parser::Sha3Record> = tree
        .all_sha3_records()
        .into_iter()
        .cloned()
        .collect();
    let slot_config = SlotDecodeConfig::default();
    let mut layouts: BTreeMap<Address, Option<crate::decoder::StorageLayout>> = BTreeMap::new();
    tree.walk_mut(&mut |node| {
        let layout = layouts
            .entry(node.storage_address)
            .or_insert_with_key(|addr| config_dir.layout_for(*addr).unwrap_or_default())
            .as_ref();
        for event in &mut node.storage_events {
            event.decoded =
                crate::decoder::decode_storage_access(event, &records, layout, &slot_config);
        }
    });
    Ok(())
}

/// Shadow-execute with the whole root calldata as the taint source: the
/// source the data-flow invariant templates are defined over.
pub fn root_calldata_flows(
    meta: &TransactionMeta,
    trace: &RawTrace,
    tree: &InvocationNode,
) -> Result<Vec<FlowFact>, PipelineError> {
    let sources = vec![TaintSource::CalldataRange {
        frame: 0,
        offset: 0,
        len: meta.input.len() as u64,
    }];
    let (_, facts) = shadow_execute(meta, trace, tree, &sources)?;
    Ok(facts)
}

/// One transaction that failed to resolve or analyze during a batch run.
#[derive(Debug)]
pub struct TxFailure {
    pub tx_ref: TxRef,
    pub error: PipelineError,
}

/// Resolve and analyze a batch, collecting failures instead of aborting.
pub fn build_artifacts(
    refs: &[TxRef],
    config: &RunConfig,
    needs: AnalysisNeeds,
) -> (Vec<TxArtifacts>, Vec<TxFailure>) {
    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    for tx_ref in refs {
        match resolve_tx(tx_ref, config)
            .and_then(|(meta, trace)| analyze_tx(meta, &trace, config, needs))
        {
            Ok(a) => artifacts.push(a),
            Err(error) => failures.push(TxFailure {
                tx_ref: tx_ref.clone(),
                error,
            }),
        }
    }
    (artifacts, failures)
}

/// Per-template outcome of an inference run.
#[derive(Debug, Clone, Serialize)]
pub struct TemplateSummary {
    pub template_id: String,
    pub invariants: usize,
    /// True for oracle-slippage templates when no swap-shaped call ever
    /// appeared in training.
    pub not_applicable: bool,
}

/// Everything `cmd_infer` produces.
#[derive(Debug, Serialize)]
pub struct InferOutcome {
    pub contract: Address,
    pub training_txs: usize,
    pub invariants: Vec<ConcreteInvariant>,
    pub per_template: Vec<TemplateSummary>,
}

/// All (selector) targets under which the contract's code ran.
pub fn observed_targets(artifacts: &[TxArtifacts], contract: Address) -> Vec<Target> {
    let mut targets = BTreeSet::new();
    for a in artifacts {
        for node in a.tree.walk() {
            if node.code_address == contract {
                targets.insert(Target {
                    address: contract,
                    selector: node.selector,
                });
            }
        }
    }
    targets.into_iter().collect()
}

/// Infer invariants for a contract over training artifacts (chronological
/// order). Yields the store content plus a per-template summary.
pub fn infer_for_contract(
    contract: Address,
    training: &[TxArtifacts],
    templates: &[InvariantTemplate],
) -> Result<InferOutcome, PipelineError> {
    let targets = observed_targets(training, contract);
    let mut invariants = Vec::new();
    let mut per_template = Vec::new();

    for template in templates {
        let mut count = 0usize;
        let mut any_observation = false;
        for target in &targets {
            let mut observations: Vec<Observation> = Vec::new();
            for artifacts in training {
                observations.extend(collect_observations(template, target, artifacts)?);
            }
            any_observation |= !observations.is_empty();
            if let Some(invariant) = infer(template, &observations)? {
                invariants.push(invariant);
                count += 1;
            }
        }
        let slippage = matches!(template.id, "PriceRatioRange" | "SwapSlippageBound");
        per_template.push(TemplateSummary {
            template_id: template.id.to_string(),
            invariants: count,
            not_applicable: slippage && !any_observation,
        });
    }

    Ok(InferOutcome {
        contract,
        training_txs: training.len(),
        invariants,
        per_template,
    })
}

/// The invariant store file: a JSON array of concrete invariants.
pub fn save_store(path: &Path, invariants: &[ConcreteInvariant]) -> Result<(), PipelineError> {
    let text =
        serde_json::to_string_pretty(invariants).expect("invariants serialize");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_store(path: &Path) -> Result<Vec<ConcreteInvariant>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Json {
        path: path.display().to_string(),
        source: e,
    })
}

/// One invariant's results over a checked corpus.
#[derive(Debug, Serialize)]
pub struct InvariantReport {
    pub template_id: String,
    pub target: Target,
    /// Filled when the checked list is a training set; `cmd_check` over
    /// an arbitrary list reports the rate as `test_pass_rate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_pass_rate: Option<f64>,
    pub test_pass_rate: f64,
    pub violations: Vec<ViolationEntry>,
}

#[derive(Debug, Serialize)]
pub struct ViolationEntry {
    pub tx: Hash32,
    pub witness: String,
}

/// The report `cmd_check` emits.
#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub contract: Option<Address>,
    pub invariants_inferred: usize,
    pub txs_checked: usize,
    pub passes: usize,
    pub violations: usize,
    pub per_invariant: Vec<InvariantReport>,
}

/// Check a corpus (chronological order) against stored invariants.
/// Chronological context for the time-lock templates is threaded per
/// invariant across transactions.
pub fn check_corpus(
    invariants: &[ConcreteInvariant],
    corpus: &[TxArtifacts],
) -> Result<(CheckReport, Vec<GuardVerdict>), PipelineError> {
    let mut contexts: Vec<CheckContext> = vec![CheckContext::default(); invariants.len()];
    let mut verdicts: Vec<GuardVerdict> = Vec::new();
    let mut per_invariant: Vec<(usize, Vec<ViolationEntry>)> =
        invariants.iter().map(|_| (0usize, Vec::new())).collect();

    for artifacts in corpus {
        for (idx, invariant) in invariants.iter().enumerate() {
            let verdict = check(invariant, artifacts, &mut contexts[idx])?;
            match verdict.outcome {
                Outcome::Pass => per_invariant[idx].0 += 1,
                Outcome::Violate => per_invariant[idx].1.push(ViolationEntry {
                    tx: verdict.tx_hash,
                    witness: verdict.witness.clone().unwrap_or_default(),
                }),
            }
            verdicts.push(verdict);
        }
    }

    let contract = invariants.first().map(|i| i.target.address);
    let passes = per_invariant.iter().map(|(p, _)| *p).sum::<usize>();
    let violations = per_invariant.iter().map(|(_, v)| v.len()).sum::<usize>();
    let report = CheckReport {
        contract,
        invariants_inferred: invariants.len(),
        txs_checked: corpus.len(),
        passes,
        violations,
        per_invariant: invariants
            .iter()
            .zip(per_invariant)
            .map(|(inv, (pass, violations))| {
                let total = pass + violations.len();
                InvariantReport {
                    template_id: inv.template_id.clone(),
                    target: inv.target,
                    train_pass_rate: None,
                    test_pass_rate: if total == 0 {
                        1.0
                    } else {
                        pass as f64 / total as f64
                    },
                    violations,
                }
            })
            .collect(),
    };
    Ok((report, verdicts))
}

/// Split a reference list chronologically per the training fraction.
pub fn split_refs(
    refs: &[TxRef],
    fraction: f64,
) -> Result<(Vec<TxRef>, Vec<TxRef>), PipelineError> {
    // Reuse the hash-based splitter's arithmetic on synthetic ids.
    let ids: Vec<Hash32> = (0..refs.len())
        .map(|i| Hash32::from_low_u64_be(i as u64))
        .collect();
    let (train_ids, _) = split_corpus(&ids, fraction)?;
    let cut = train_ids.len();
    Ok((refs[..cut].to_vec(), refs[cut..].to_vec()))
}
