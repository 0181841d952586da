//! JSON-RPC client for the transaction-replay debug method and the
//! receipt/transaction queries, with caching and retry.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Cache, CacheKey, CacheKind, IngestError, MetaWire, RawTrace, TransactionMeta};
use crate::primitives::Hash32;

/// Connection and retry policy. Endpoints are plain URLs; the only
/// provider-specific concession is an optional bearer token.
#[derive(Debug, Clone)]
pub struct RpcConfig {
    pub endpoint: String,
    pub auth_token: Option<String>,
    /// Capture memory words in the trace (inflates traces substantially).
    pub enable_memory: bool,
    pub timeout: Duration,
    pub retries: u32,
    pub initial_backoff: Duration,
}

impl RpcConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RpcConfig {
            endpoint: endpoint.into(),
            auth_token: std::env::var(super::AUTH_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            enable_memory: false,
            timeout: Duration::from_secs(120),
            retries: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

pub struct RpcClient {
    config: RpcConfig,
    cache: Cache,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct RpcResponse {
    #[serde(default)]
    result: Option<serde_json::Value>,
    #[serde(default)]
    error: Option<RpcErrorBody>,
}

#[derive(Deserialize)]
struct RpcErrorBody {
    code: i64,
    message: String,
}

impl RpcClient {
    pub fn new(config: RpcConfig, cache: Cache) -> Result<Self, IngestError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| IngestError::Transport {
                endpoint: config.endpoint.clone(),
                reason: e.to_string(),
            })?;
        Ok(RpcClient { config, cache, http })
    }

    /// Fetch the structLog trace for a transaction. Cache hits make no
    /// network call; misses are written to the cache before returning.
    pub fn fetch_trace(&self, tx_hash: Hash32) -> Result<RawTrace, IngestError> {
        let key = CacheKey::new(CacheKind::Trace, format!("{tx_hash:?}"));
        if let Some(bytes) = self.cache.get(&key)? {
            return parse_trace_bytes(&bytes);
        }
        let tracer_config = json!({
            "enableMemory": self.config.enable_memory,
            "disableStack": false,
            "disableStorage": true,
        });
        let result = self.call(
            "debug_traceTransaction",
            json!([format!("{tx_hash:?}"), tracer_config]),
            Some(tx_hash),
        )?;
        let trace = parse_trace_value(result)?;
        let canonical = serde_json::to_vec(&trace).expect("trace serializes");
        self.cache.put(&key, &canonical)?;
        Ok(trace)
    }

    /// Fetch transaction metadata. The receipt supplies block number,
    /// origin, status and gas used; the transaction body supplies value,
    /// input and the gas limit.
    pub fn fetch_receipt(&self, tx_hash: Hash32) -> Result<TransactionMeta, IngestError> {
        let key = CacheKey::new(CacheKind::Receipt, format!("{tx_hash:?}"));
        if let Some(bytes) = self.cache.get(&key)? {
            let wire: MetaWire = serde_json::from_slice(&bytes).map_err(|e| {
                IngestError::Schema {
                    field: super::missing_field_name(&e),
                    reason: e.to_string(),
                }
            })?;
            return wire.into_meta();
        }

        let receipt = self.call(
            "eth_getTransactionReceipt",
            json!([format!("{tx_hash:?}")]),
            Some(tx_hash),
        )?;
        let tx = self.call(
            "eth_getTransactionByHash",
            json!([format!("{tx_hash:?}")]),
            Some(tx_hash),
        )?;

        let wire = merge_receipt_and_tx(&receipt, &tx)?;
        let meta = wire.clone().into_meta()?;
        let canonical = serde_json::to_vec(&wire).expect("meta serializes");
        self.cache.put(&key, &canonical)?;
        Ok(meta)
    }

    fn call(
        &self,
        method: &str,
        params: serde_json::Value,
        tx_hash: Option<Hash32>,
    ) -> Result<serde_json::Value, IngestError> {
        let body = json!({"jsonrpc": "2.0", "id": 1, "method": method, "params": params});
        let mut attempt = 0u32;
        let mut backoff = self.config.initial_backoff;
        loop {
            match self.call_once(&body) {
                Ok(resp) => {
                    if let Some(err) = resp.error {
                        // "not found" style errors are not retryable.
                        if err.message.to_ascii_lowercase().contains("not found") {
                            if let Some(h) = tx_hash {
                                return Err(IngestError::NotFound(h));
                            }
                        }
                        return Err(IngestError::Rpc {
                            code: err.code,
                            message: err.message,
                        });
                    }
                    return match resp.result {
                        None | Some(serde_json::Value::Null) => match tx_hash {
                            Some(h) => Err(IngestError::NotFound(h)),
                            None => Err(IngestError::Schema {
                                field: "result".into(),
                                reason: "null result".into(),
                            }),
                        },
                        Some(v) => Ok(v),
                    };
                }
                Err(e) if attempt < self.config.retries => {
                    let _ = e;
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn call_once(&self, body: &serde_json::Value) -> Result<RpcResponse, IngestError> {
        let transport = |reason: String| IngestError::Transport {
            endpoint: self.config.endpoint.clone(),
            reason,
        };
        let mut req = self.http.post(&self.config.endpoint).json(body);
        if let Some(token) = &self.config.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| transport(e.to_string()))?;
        if resp.status().is_server_error() || resp.status().as_u16() == 429 {
            return Err(transport(format!("http status {}", resp.status())));
        }
        resp.json::<RpcResponse>()
            .map_err(|e| transport(format!("bad json-rpc envelope: {e}")))
    }
}

fn parse_trace_bytes(bytes: &[u8]) -> Result<RawTrace, IngestError> {
    serde_json::from_slice(bytes).map_err(|e| IngestError::Schema {
        field: super::missing_field_name(&e),
        reason: e.to_string(),
    })
}

fn parse_trace_value(value: serde_json::Value) -> Result<RawTrace, IngestError> {
    serde_json::from_value(value).map_err(|e| IngestError::Schema {
        field: super::missing_field_name(&e),
        reason: e.to_string(),
    })
}

/// Join the receipt object and the transaction object into the wire form
/// cached on disk.
fn merge_receipt_and_tx(
    receipt: &serde_json::Value,
    tx: &serde_json::Value,
) -> Result<MetaWire, IngestError> {
    let get = |v: &serde_json::Value, key: &str| -> Option<serde_json::Value> {
        v.get(key).filter(|x| !x.is_null()).cloned()
    };
    let require_str = |v: &serde_json::Value, key: &str| -> Result<String, IngestError> {
        get(v, key)
            .and_then(|x| x.as_str().map(str::to_string))
            .ok_or_else(|| IngestError::Schema {
                field: key.into(),
                reason: "missing or non-string field".into(),
            })
    };

    let merged = json!({
        "transactionHash": require_str(receipt, "transactionHash")?,
        "blockNumber": get(receipt, "blockNumber").unwrap_or(json!("0x0")),
        "from": require_str(receipt, "from")?,
        "to": get(receipt, "to"),
        "value": get(tx, "value").unwrap_or(json!("0x0")),
        "input": get(tx, "input").unwrap_or(json!("0x")),
        "gas": get(tx, "gas").unwrap_or(json!("0x0")),
        "gasUsed": get(receipt, "gasUsed").unwrap_or(json!("0x0")),
        "status": require_str(receipt, "status")?,
    });
    serde_json::from_value(merged).map_err(|e| IngestError::Schema {
        field: super::missing_field_name(&e),
        reason: e.to_string(),
    })
}
