//! Trace and receipt ingestion: RPC fetch, transparent caching, and
//! offline fixtures.
//!
//! Every downstream stage runs from a `(TransactionMeta, RawTrace)` pair.
//! The pair comes either from a JSON-RPC endpoint (with results cached as
//! JSON files) or from a fixture file, which makes the whole pipeline
//! runnable with no network access.

mod cache;
mod rpc;

pub use cache::{Cache, CacheKey, CacheKind};
pub use rpc::{RpcClient, RpcConfig};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::primitives::{hexbytes, hexwords, quantity, Address, Hash32, Word};

/// Env var naming the JSON-RPC endpoint URL.
pub const ENDPOINT_ENV: &str = "TXLENS_ENDPOINT";
/// Env var with an optional bearer token sent on RPC requests.
pub const AUTH_TOKEN_ENV: &str = "TXLENS_AUTH_TOKEN";
/// Env var overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "TXLENS_CACHE_DIR";

/// One executed EVM instruction as reported by the replay tracer.
///
/// `stack` is bottom-to-top; `memory` is present only when memory capture
/// was requested. Unknown fields in tracer output are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StructLogEntry {
    pub pc: u64,
    pub op: String,
    #[serde(with = "quantity")]
    pub gas: u64,
    #[serde(with = "quantity")]
    pub gas_cost: u64,
    /// Frame depth, 1-based at the root frame.
    pub depth: u32,
    #[serde(default, with = "hexwords")]
    pub stack: Vec<Word>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StructLogEntry {
    /// Stack word `n` positions below the top (0 = top).
    pub fn stack_peek(&self, n: usize) -> Option<Word> {
        let len = self.stack.len();
        if n < len {
            Some(self.stack[len - 1 - n])
        } else {
            None
        }
    }

    /// Captured memory flattened to bytes, when present.
    pub fn memory_bytes(&self) -> Option<Vec<u8>> {
        let words = self.memory.as_ref()?;
        let mut out = Vec::with_capacity(words.len() * 32);
        for w in words {
            match crate::primitives::parse_hex_bytes(w) {
                Ok(b) => out.extend_from_slice(&b),
                Err(_) => return None,
            }
        }
        Some(out)
    }
}

/// The raw structLog sequence for one transaction, in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTrace {
    #[serde(rename = "structLogs")]
    pub entries: Vec<StructLogEntry>,
    #[serde(default)]
    pub failed: bool,
    #[serde(rename = "returnValue", default, with = "hexbytes")]
    pub return_value: Vec<u8>,
}

/// Transaction outcome from the receipt status field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Success,
    Reverted,
}

/// Transaction-level metadata joined from the receipt and the transaction
/// body: the trace alone carries neither the block number nor the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionMeta {
    pub tx_hash: Hash32,
    pub block_number: u64,
    /// Transaction sender (an externally owned account).
    pub origin: Address,
    /// Callee; absent exactly when the transaction creates a contract.
    pub to: Option<Address>,
    pub value: Word,
    /// Root calldata (or initcode for a creation).
    pub input: Vec<u8>,
    pub gas_limit: u64,
    pub gas_used: u64,
    pub status: TxStatus,
}

impl TransactionMeta {
    pub fn is_creation(&self) -> bool {
        self.to.is_none()
    }

    /// Check the structural invariants, naming the offending field.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.gas_used > self.gas_limit {
            return Err(IngestError::Schema {
                field: "gasUsed".into(),
                reason: format!("gasUsed {} exceeds gas limit {}", self.gas_used, self.gas_limit),
            });
        }
        Ok(())
    }
}

/// Receipt-shaped wire form of [`TransactionMeta`], used in fixtures and
/// the cache. Field names follow the JSON-RPC receipt/transaction objects.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct MetaWire {
    transaction_hash: String,
    #[serde(with = "quantity")]
    block_number: u64,
    from: String,
    #[serde(default)]
    to: Option<String>,
    #[serde(default)]
    value: Option<String>,
    #[serde(default, with = "hexbytes")]
    input: Vec<u8>,
    /// Gas limit of the transaction ("gas" in the tx object).
    #[serde(with = "quantity")]
    gas: u64,
    #[serde(with = "quantity")]
    gas_used: u64,
    status: String,
}

impl MetaWire {
    pub(crate) fn into_meta(self) -> Result<TransactionMeta, IngestError> {
        let field = |name: &str, e: crate::primitives::HexError| IngestError::Schema {
            field: name.into(),
            reason: e.to_string(),
        };
        let meta = TransactionMeta {
            tx_hash: crate::primitives::parse_hash32(&self.transaction_hash)
                .map_err(|e| field("transactionHash", e))?,
            block_number: self.block_number,
            origin: crate::primitives::parse_address(&self.from).map_err(|e| field("from", e))?,
            to: match &self.to {
                None => None,
                Some(s) if s.is_empty() => None,
                Some(s) => Some(crate::primitives::parse_address(s).map_err(|e| field("to", e))?),
            },
            value: match &self.value {
                None => Word::zero(),
                Some(s) => crate::primitives::parse_hex_word(s).map_err(|e| field("value", e))?,
            },
            input: self.input,
            gas_limit: self.gas,
            gas_used: self.gas_used,
            status: match self.status.as_str() {
                "0x1" | "1" | "success" => TxStatus::Success,
                "0x0" | "0" | "reverted" => TxStatus::Reverted,
                other => {
                    return Err(IngestError::Schema {
                        field: "status".into(),
                        reason: format!("unrecognized status {other:?}"),
                    })
                }
            },
        };
        meta.validate()?;
        Ok(meta)
    }

    pub(crate) fn from_meta(meta: &TransactionMeta) -> Self {
        MetaWire {
            transaction_hash: format!("{:?}", meta.tx_hash),
            block_number: meta.block_number,
            from: format!("{:?}", meta.origin),
            to: meta.to.map(|a| format!("{a:?}")),
            value: Some(crate::primitives::hex_word(meta.value)),
            input: meta.input.clone(),
            gas: meta.gas_limit,
            gas_used: meta.gas_used,
            status: match meta.status {
                TxStatus::Success => "0x1".into(),
                TxStatus::Reverted => "0x0".into(),
            },
        }
    }
}

/// Fixture file: `{"meta": <receipt-shaped>, "trace": {"structLogs": [...],
/// "failed": bool, "returnValue": hex}}`.
#[derive(Debug, Serialize, Deserialize)]
struct FixtureWire {
    meta: serde_json::Value,
    trace: serde_json::Value,
}

/// Load a `(meta, trace)` pair from a fixture file.
pub fn load_fixture(path: impl AsRef<Path>) -> Result<(TransactionMeta, RawTrace), IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_fixture_str(&text)
}

/// Parse fixture JSON from a string (same schema as [`load_fixture`]).
pub fn parse_fixture_str(text: &str) -> Result<(TransactionMeta, RawTrace), IngestError> {
    let wire: FixtureWire = serde_json::from_str(text).map_err(|e| IngestError::Schema {
        field: missing_field_name(&e),
        reason: e.to_string(),
    })?;
    let meta_wire: MetaWire =
        serde_json::from_value(wire.meta).map_err(|e| IngestError::Schema {
            field: format!("meta.{}", missing_field_name(&e)),
            reason: e.to_string(),
        })?;
    let trace: RawTrace = serde_json::from_value(wire.trace).map_err(|e| IngestError::Schema {
        field: format!("trace.{}", missing_field_name(&e)),
        reason: e.to_string(),
    })?;
    Ok((meta_wire.into_meta()?, trace))
}

/// Write a `(meta, trace)` pair as a fixture file.
pub fn store_fixture(
    path: impl AsRef<Path>,
    meta: &TransactionMeta,
    trace: &RawTrace,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    let text = fixture_to_string(meta, trace)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IngestError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Render a fixture to its canonical JSON text.
pub fn fixture_to_string(
    meta: &TransactionMeta,
    trace: &RawTrace,
) -> Result<String, IngestError> {
    let wire = FixtureWire {
        meta: serde_json::to_value(MetaWire::from_meta(meta)).expect("meta serializes"),
        trace: serde_json::to_value(trace).expect("trace serializes"),
    };
    Ok(serde_json::to_string_pretty(&wire).expect("fixture serializes"))
}

pub(crate) fn missing_field_name(e: &serde_json::Error) -> String {
    // serde reports `missing field `x`...`; pull the name out for the
    // schema-error contract.
    let msg = e.to_string();
    if let Some(start) = msg.find('`') {
        if let Some(end) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + end].to_string();
        }
    }
    "<unknown>".to_string()
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    /// Network-level failure; safe to retry.
    #[error("transport error talking to {endpoint}: {reason}")]
    Transport { endpoint: String, reason: String },
    /// The endpoint does not know this transaction.
    #[error("transaction not found: {0:?}")]
    NotFound(Hash32),
    /// Response or fixture violates the expected schema.
    #[error("schema violation at field {field}: {reason}")]
    Schema { field: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_meta() -> TransactionMeta {
        TransactionMeta {
            tx_hash: Hash32::repeat_byte(0xab),
            block_number: 17_000_000,
            origin: Address::repeat_byte(0x11),
            to: Some(Address::repeat_byte(0x22)),
            value: Word::from(5u64),
            input: vec![0xa9, 0x05, 0x9c, 0xbb],
            gas_limit: 100_000,
            gas_used: 21_000,
            status: TxStatus::Success,
        }
    }

    fn sample_trace() -> RawTrace {
        RawTrace {
            entries: vec![StructLogEntry {
                pc: 0,
                op: "PUSH1".into(),
                gas: 79_000,
                gas_cost: 1,
                depth: 1,
                stack: vec![],
                memory: None,
                error: None,
            }],
            failed: false,
            return_value: vec![],
        }
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.json");
        let (meta, trace) = (sample_meta(), sample_trace());
        store_fixture(&path, &meta, &trace).unwrap();
        let (meta2, trace2) = load_fixture(&path).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(trace, trace2);
    }

    #[test]
    fn fixture_missing_structlogs_names_field() {
        let text = r#"{"meta": {"transactionHash": "0x0000000000000000000000000000000000000000000000000000000000000001",
            "blockNumber": "0x1", "from": "0x1111111111111111111111111111111111111111",
            "gas": "0x100", "gasUsed": "0x10", "status": "0x1"},
            "trace": {"failed": false, "returnValue": "0x"}}"#;
        let err = parse_fixture_str(text).unwrap_err();
        match err {
            IngestError::Schema { field, .. } => assert!(
                field.contains("structLogs"),
                "error should name structLogs, got {field}"
            ),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn creation_receipt_has_no_to() {
        let text = r#"{"meta": {"transactionHash": "0x0000000000000000000000000000000000000000000000000000000000000001",
            "blockNumber": 7, "from": "0x1111111111111111111111111111111111111111",
            "value": "0x0", "input": "0x6001600155", "gas": "0x100", "gasUsed": "0x10", "status": "0x1"},
            "trace": {"structLogs": [], "failed": false, "returnValue": "0x"}}"#;
        let (meta, _) = parse_fixture_str(text).unwrap();
        assert!(meta.to.is_none());
        assert!(meta.is_creation());
    }

    #[test]
    fn status_field_mapping() {
        for (raw, expect) in [("0x1", TxStatus::Success), ("0x0", TxStatus::Reverted)] {
            let text = format!(
                r#"{{"meta": {{"transactionHash": "0x0000000000000000000000000000000000000000000000000000000000000001",
                "blockNumber": 7, "from": "0x1111111111111111111111111111111111111111",
                "to": "0x2222222222222222222222222222222222222222",
                "gas": "0x100", "gasUsed": "0x10", "status": "{raw}"}},
                "trace": {{"structLogs": [], "failed": false, "returnValue": "0x"}}}}"#
            );
            let (meta, _) = parse_fixture_str(&text).unwrap();
            assert_eq!(meta.status, expect);
        }
    }

    #[test]
    fn gas_used_above_limit_is_schema_error() {
        let mut meta = sample_meta();
        meta.gas_used = meta.gas_limit + 1;
        assert!(meta.validate().is_err());
    }

    #[test]
    fn structlog_accepts_bare_and_prefixed_stack_words() {
        let json = r#"{"pc": 3, "op": "ADD", "gas": 100, "gasCost": 3, "depth": 1,
            "stack": ["0x2", "0000000000000000000000000000000000000000000000000000000000000003"],
            "weirdExtraField": 1}"#;
        let entry: StructLogEntry = serde_json::from_str(json).unwrap();
        assert_eq!(entry.stack, vec![Word::from(2u64), Word::from(3u64)]);
        assert_eq!(entry.stack_peek(0), Some(Word::from(3u64)));
        assert_eq!(entry.stack_peek(1), Some(Word::from(2u64)));
        assert_eq!(entry.stack_peek(2), None);
    }
}
