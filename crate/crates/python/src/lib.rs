//! Python bindings: the trace-analysis pipeline driven in-process.
//!
//! Exposes fixture parsing/rendering, fact translation, taint extraction,
//! the invariant infer/check protocol, and a `World` class wrapping the
//! synthetic EVM so Python can mint its own traces.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use txlens_core::dataflow::{self, query_flows, shadow_execute};
use txlens_core::ingest::{fixture_to_string, load_fixture, store_fixture, TransactionMeta};
use txlens_core::invariants::template_catalog;
use txlens_core::oracle::{self, MockWorld};
use txlens_core::parser::{build_invocation_tree, render_tree, RenderOptions};
use txlens_core::pipeline::{
    analyze_tx, check_corpus, infer_for_contract, AnalysisNeeds, RunConfig, TxRef,
};
use txlens_core::primitives::{parse_address, parse_hex_bytes, parse_hex_word, Hash32};

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn config_for(config_dir: Option<&str>) -> RunConfig {
    RunConfig {
        endpoint: None,
        config_dir: PathBuf::from(config_dir.unwrap_or("config")),
        ..RunConfig::default()
    }
}

fn artifacts_for(
    path: &str,
    config: &RunConfig,
    needs: AnalysisNeeds,
) -> PyResult<txlens_core::invariants::TxArtifacts> {
    let (meta, trace) = load_fixture(path).map_err(runtime_err)?;
    analyze_tx(meta, &trace, config, needs).map_err(runtime_err)
}

/// Render a fixture's invocation tree; with `decode` set, function names
/// and storage paths come from the ABIs/layouts in `config_dir`.
#[pyfunction]
#[pyo3(signature = (path, decode=false, config_dir=None))]
fn render_fixture_tree(path: &str, decode: bool, config_dir: Option<&str>) -> PyResult<String> {
    let config = config_for(config_dir);
    let needs = AnalysisNeeds {
        decode_calls: decode,
        decode_storage: decode,
        dataflow: false,
    };
    let artifacts = artifacts_for(path, &config, needs)?;
    let options = RenderOptions {
        decoded_calls: if decode {
            Some(&artifacts.decoded_calls)
        } else {
            None
        },
        show_storage: decode,
    };
    Ok(render_tree(&artifacts.tree, &options))
}

/// The invocation tree of a fixture as a JSON document.
#[pyfunction]
fn parse_fixture_tree(path: &str) -> PyResult<String> {
    let (meta, trace) = load_fixture(path).map_err(runtime_err)?;
    let tree = build_invocation_tree(&meta, &trace).map_err(runtime_err)?;
    serde_json::to_string_pretty(&tree).map_err(runtime_err)
}

/// Translate a fixture into fact-file content.
#[pyfunction]
fn translate_fixture(path: &str) -> PyResult<String> {
    let (meta, trace) = load_fixture(path).map_err(runtime_err)?;
    let tree = build_invocation_tree(&meta, &trace).map_err(runtime_err)?;
    txlens_core::translator::to_fact_file(&meta, &trace, &tree).map_err(runtime_err)
}

/// Shadow-execute a fixture and return flow facts as JSON lines.
/// Sources use the CLI grammar (`calldata:root:4:32`, `env:CALLER`, ...).
#[pyfunction]
#[pyo3(signature = (path, sources, sink=None))]
fn extract_facts(path: &str, sources: Vec<String>, sink: Option<&str>) -> PyResult<Vec<String>> {
    let sources = sources
        .iter()
        .map(|s| dataflow::parse_source_spec(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_err)?;
    let filter = sink
        .map(dataflow::parse_sink_spec)
        .transpose()
        .map_err(value_err)?;
    let (meta, trace) = load_fixture(path).map_err(runtime_err)?;
    let tree = build_invocation_tree(&meta, &trace).map_err(runtime_err)?;
    let (_, facts) = shadow_execute(&meta, &trace, &tree, &sources).map_err(runtime_err)?;
    let facts = match filter {
        Some(f) => query_flows(&facts, &f),
        None => facts,
    };
    Ok(facts.iter().map(|f| f.to_json_line()).collect())
}

/// Infer invariants for a contract over fixture paths (chronological).
/// Returns the invariant store as a JSON array string.
#[pyfunction]
#[pyo3(signature = (contract, fixtures, config_dir=None, train_fraction=0.7, templates=None))]
fn infer_invariants(
    contract: &str,
    fixtures: Vec<String>,
    config_dir: Option<&str>,
    train_fraction: f64,
    templates: Option<Vec<String>>,
) -> PyResult<String> {
    let contract = parse_address(contract).map_err(value_err)?;
    let mut config = config_for(config_dir);
    config.train_fraction = train_fraction;
    config.template_filter = templates.map(|ids| ids.into_iter().collect::<BTreeSet<_>>());

    let refs: Vec<TxRef> = fixtures.iter().map(|f| TxRef::parse(f)).collect();
    let (train_refs, _) =
        txlens_core::pipeline::split_refs(&refs, train_fraction).map_err(value_err)?;
    let templates = config.active_templates();
    let needs = AnalysisNeeds::for_templates(&templates);
    let mut training = Vec::new();
    for tx_ref in &train_refs {
        let TxRef::Fixture(path) = tx_ref else {
            return Err(value_err("only fixture paths are supported here"));
        };
        training.push(artifacts_for(&path.display().to_string(), &config, needs)?);
    }
    let outcome = infer_for_contract(contract, &training, &templates).map_err(runtime_err)?;
    serde_json::to_string_pretty(&outcome.invariants).map_err(runtime_err)
}

/// Check fixtures against a store JSON string; returns the report JSON.
#[pyfunction]
#[pyo3(signature = (store_json, fixtures, config_dir=None))]
fn check_invariants(
    store_json: &str,
    fixtures: Vec<String>,
    config_dir: Option<&str>,
) -> PyResult<String> {
    let invariants: Vec<txlens_core::invariants::ConcreteInvariant> =
        serde_json::from_str(store_json).map_err(value_err)?;
    let config = config_for(config_dir);
    let needs = AnalysisNeeds {
        decode_calls: true,
        decode_storage: true,
        dataflow: true,
    };
    let mut corpus = Vec::new();
    for path in &fixtures {
        corpus.push(artifacts_for(path, &config, needs)?);
    }
    let (report, _) = check_corpus(&invariants, &corpus).map_err(runtime_err)?;
    serde_json::to_string_pretty(&report).map_err(runtime_err)
}

/// The 23-template catalog as JSON.
#[pyfunction]
fn catalog_json() -> PyResult<String> {
    serde_json::to_string_pretty(&template_catalog()).map_err(runtime_err)
}

/// keccak-256 of a hex byte string, as 0x-hex.
#[pyfunction]
fn keccak(data_hex: &str) -> PyResult<String> {
    let bytes = parse_hex_bytes(data_hex).map_err(value_err)?;
    Ok(format!("{:?}", txlens_core::primitives::keccak256(&bytes)))
}

/// Write the synthetic sample corpus; returns a small JSON manifest.
#[pyfunction]
fn write_sample_corpus(dir: &str) -> PyResult<String> {
    let corpus = txlens_core::samples::write_sample_corpus(Path::new(dir)).map_err(runtime_err)?;
    Ok(serde_json::json!({
        "vault": format!("{:?}", corpus.vault),
        "token": format!("{:?}", corpus.token),
        "fixtures": corpus.fixtures.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "exploit": corpus.exploit.display().to_string(),
        "config_dir": corpus.config_dir.display().to_string(),
        "txlist": corpus.txlist.display().to_string(),
        "checklist": corpus.checklist.display().to_string(),
    })
    .to_string())
}

/// A mock world for the synthetic EVM: deploy assembly programs, seed
/// state, execute transactions, and write the results as fixtures.
#[pyclass]
struct World {
    world: MockWorld,
    tx_counter: u8,
}

#[pymethods]
impl World {
    #[new]
    fn new() -> Self {
        World {
            world: MockWorld::new(),
            tx_counter: 0,
        }
    }

    /// Assemble program text and install it at an address.
    fn deploy_program(&mut self, address: &str, asm_text: &str) -> PyResult<()> {
        let address = parse_address(address).map_err(value_err)?;
        self.world
            .deploy_program(address, asm_text)
            .map_err(value_err)
    }

    fn set_balance(&mut self, address: &str, balance: &str) -> PyResult<()> {
        let address = parse_address(address).map_err(value_err)?;
        let balance = parse_hex_word(balance).map_err(value_err)?;
        self.world.set_balance(address, balance);
        Ok(())
    }

    fn set_storage(&mut self, address: &str, slot: &str, value: &str) -> PyResult<()> {
        let address = parse_address(address).map_err(value_err)?;
        self.world.set_storage(
            address,
            parse_hex_word(slot).map_err(value_err)?,
            parse_hex_word(value).map_err(value_err)?,
        );
        Ok(())
    }

    fn storage(&self, address: &str, slot: &str) -> PyResult<String> {
        let address = parse_address(address).map_err(value_err)?;
        let slot = parse_hex_word(slot).map_err(value_err)?;
        Ok(txlens_core::primitives::hex_word(
            self.world.storage(address, slot),
        ))
    }

    /// Execute a transaction; the world state advances. Returns the
    /// fixture JSON for the resulting trace.
    #[pyo3(signature = (origin, to, calldata="0x", gas_limit=1_000_000, value="0x0", block_number=1, capture_memory=false))]
    #[allow(clippy::too_many_arguments)]
    fn execute(
        &mut self,
        origin: &str,
        to: Option<&str>,
        calldata: &str,
        gas_limit: u64,
        value: &str,
        block_number: u64,
        capture_memory: bool,
    ) -> PyResult<String> {
        self.tx_counter = self.tx_counter.wrapping_add(1);
        let meta = TransactionMeta {
            tx_hash: Hash32::repeat_byte(self.tx_counter),
            block_number,
            origin: parse_address(origin).map_err(value_err)?,
            to: to.map(parse_address).transpose().map_err(value_err)?,
            value: parse_hex_word(value).map_err(value_err)?,
            input: parse_hex_bytes(calldata).map_err(value_err)?,
            gas_limit,
            gas_used: 0,
            status: txlens_core::ingest::TxStatus::Success,
        };
        let gt = oracle::execute(&mut self.world, &meta, capture_memory).map_err(runtime_err)?;
        fixture_to_string(&gt.meta_with_outcome(&meta), &gt.trace).map_err(runtime_err)
    }

    /// Execute and write the fixture to a file.
    #[pyo3(signature = (path, origin, to, calldata="0x", gas_limit=1_000_000, value="0x0", block_number=1))]
    #[allow(clippy::too_many_arguments)]
    fn execute_to_fixture(
        &mut self,
        path: &str,
        origin: &str,
        to: Option<&str>,
        calldata: &str,
        gas_limit: u64,
        value: &str,
        block_number: u64,
    ) -> PyResult<()> {
        let json = self.execute(origin, to, calldata, gas_limit, value, block_number, false)?;
        let (meta, trace) = txlens_core::ingest::parse_fixture_str(&json).map_err(runtime_err)?;
        store_fixture(path, &meta, &trace).map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!("World(accounts={})", self.world.accounts.len())
    }
}

#[pymodule]
fn txlens_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<World>()?;
    m.add_function(wrap_pyfunction!(render_fixture_tree, m)?)?;
    m.add_function(wrap_pyfunction!(parse_fixture_tree, m)?)?;
    m.add_function(wrap_pyfunction!(translate_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(extract_facts, m)?)?;
    m.add_function(wrap_pyfunction!(infer_invariants, m)?)?;
    m.add_function(wrap_pyfunction!(check_invariants, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_json, m)?)?;
    m.add_function(wrap_pyfunction!(keccak, m)?)?;
    m.add_function(wrap_pyfunction!(write_sample_corpus, m)?)?;
    Ok(())
}
