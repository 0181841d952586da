//! Decoding of calldata/return data against ABIs and of raw storage slots
//! into structural paths.
//!
//! ABIs and storage layouts are plain local files keyed by contract
//! address under `<config_dir>/abi/<address>.json` and
//! `<config_dir>/layout/<address>.json`; nothing here talks to a network.

pub mod abi;
pub mod storage;

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub use abi::{
    decode_params, encode_params, find_by_selector, load_abi, parse_abi_json, AbiError,
    AbiFunction, AbiParam, AbiType, AbiValue,
};
pub use storage::{
    decode_storage_access, DecodedSlotPath, LayoutEntry, SlotDecodeConfig, SlotStep,
    StorageLayout,
};

use crate::parser::{ExitReason, InvocationNode};
use crate::primitives::Address;

/// How much of a call the decoder managed to interpret.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStatus {
    /// Arguments and returns both decoded and consumed exactly.
    Full,
    /// Arguments decoded; return data did not.
    ArgsOnly,
    /// Selector present but arguments undecodable (or no ABI match).
    SelectorOnly,
    /// No selector at all (fallback calls, create frames).
    Undecoded,
}

/// A decoded (name, type, value) triple.
#[derive(Debug, Clone)]
pub struct DecodedParam {
    pub name: String,
    pub ty: AbiType,
    pub value: AbiValue,
}

/// Result of decoding one invocation node against a set of ABIs.
#[derive(Debug, Clone)]
pub struct DecodedCall {
    pub function: Option<AbiFunction>,
    pub args: Vec<DecodedParam>,
    pub returns: Vec<DecodedParam>,
    pub decode_status: DecodeStatus,
}

impl DecodedCall {
    fn undecoded() -> Self {
        DecodedCall {
            function: None,
            args: Vec::new(),
            returns: Vec::new(),
            decode_status: DecodeStatus::Undecoded,
        }
    }

    /// `transfer(to=0x…, amount=5)` style rendering.
    pub fn render(&self) -> Option<String> {
        let f = self.function.as_ref()?;
        if matches!(
            self.decode_status,
            DecodeStatus::SelectorOnly | DecodeStatus::Undecoded
        ) {
            return Some(format!("{}(?)", f.name));
        }
        let args = self
            .args
            .iter()
            .map(|p| {
                if p.name.is_empty() {
                    p.value.render()
                } else {
                    format!("{}={}", p.name, p.value.render())
                }
            })
            .collect::<Vec<_>>()
            .join(", ");
        Some(format!("{}({args})", f.name))
    }
}

/// Decode a node's calldata and return data. Never fails: undecodable
/// inputs degrade through [`DecodeStatus`] instead.
pub fn decode_call(node: &InvocationNode, abis: &[AbiFunction]) -> DecodedCall {
    let Some(selector) = node.selector else {
        return DecodedCall::undecoded();
    };
    let Some(function) = find_by_selector(abis, selector) else {
        return DecodedCall {
            function: None,
            args: Vec::new(),
            returns: Vec::new(),
            decode_status: DecodeStatus::SelectorOnly,
        };
    };

    let arg_types: Vec<AbiType> = function.inputs.iter().map(|p| p.ty.clone()).collect();
    let args = match decode_params(&arg_types, &node.calldata[4..]) {
        Ok((values, exact)) if exact => Some(values),
        _ => None,
    };
    let Some(arg_values) = args else {
        return DecodedCall {
            function: Some(function.clone()),
            args: Vec::new(),
            returns: Vec::new(),
            decode_status: DecodeStatus::SelectorOnly,
        };
    };
    let args: Vec<DecodedParam> = function
        .inputs
        .iter()
        .zip(arg_values)
        .map(|(p, value)| DecodedParam {
            name: p.name.clone(),
            ty: p.ty.clone(),
            value,
        })
        .collect();

    // Return data is only ABI-shaped for clean returns; revert payloads
    // carry error data instead.
    let ret_types: Vec<AbiType> = function.outputs.iter().map(|p| p.ty.clone()).collect();
    let returns = match node.exit_reason {
        ExitReason::Return | ExitReason::Stop => {
            match decode_params(&ret_types, &node.return_data) {
                Ok((values, exact)) if exact => Some(values),
                _ => None,
            }
        }
        _ => None,
    };
    match returns {
        Some(ret_values) => DecodedCall {
            args,
            returns: function
                .outputs
                .iter()
                .zip(ret_values)
                .map(|(p, value)| DecodedParam {
                    name: p.name.clone(),
                    ty: p.ty.clone(),
                    value,
                })
                .collect(),
            function: Some(function.clone()),
            decode_status: DecodeStatus::Full,
        },
        None => DecodedCall {
            function: Some(function.clone()),
            args,
            returns: Vec::new(),
            decode_status: DecodeStatus::ArgsOnly,
        },
    }
}

/// Load a storage-layout file: either the bare entry array or the
/// compiler's `{"storage": [...]}` wrapper. Slots are decimal strings.
pub fn load_layout(path: impl AsRef<Path>) -> Result<StorageLayout, AbiError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AbiError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_layout_json(&text)
}

/// Parse storage-layout JSON from a string.
pub fn parse_layout_json(text: &str) -> Result<StorageLayout, AbiError> {
    #[derive(Deserialize)]
    struct WireEntry {
        label: String,
        slot: serde_json::Value,
        #[serde(rename = "type")]
        type_desc: String,
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Wire {
        Wrapped { storage: Vec<WireEntry> },
        Bare(Vec<WireEntry>),
    }

    let wire: Wire = serde_json::from_str(text).map_err(AbiError::Json)?;
    let entries = match wire {
        Wire::Wrapped { storage } => storage,
        Wire::Bare(v) => v,
    };
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let slot = match &e.slot {
            serde_json::Value::Number(n) => crate::primitives::Word::from(
                n.as_u64()
                    .ok_or_else(|| AbiError::Decode(format!("bad slot number {n}")))?,
            ),
            serde_json::Value::String(s) => crate::primitives::Word::from_dec_str(s)
                .map_err(|_| AbiError::Decode(format!("bad slot string {s:?}")))?,
            other => return Err(AbiError::Decode(format!("bad slot value {other}"))),
        };
        out.push(LayoutEntry {
            label: e.label,
            slot,
            type_desc: e.type_desc,
        });
    }
    Ok(StorageLayout { entries: out })
}

/// The local ABI/layout directory convention.
#[derive(Debug, Clone)]
pub struct ConfigDir {
    root: PathBuf,
}

impl ConfigDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ConfigDir { root: root.into() }
    }

    pub fn abi_path(&self, contract: Address) -> PathBuf {
        self.root.join("abi").join(format!("{contract:?}.json"))
    }

    pub fn layout_path(&self, contract: Address) -> PathBuf {
        self.root.join("layout").join(format!("{contract:?}.json"))
    }

    /// ABI for a contract, or an empty set when no file exists.
    pub fn abi_for(&self, contract: Address) -> Result<Vec<AbiFunction>, AbiError> {
        let path = self.abi_path(contract);
        if !path.is_file() {
            return Ok(Vec::new());
        }
        load_abi(path)
    }

    /// Storage layout for a contract, when supplied.
    pub fn layout_for(&self, contract: Address) -> Result<Option<StorageLayout>, AbiError> {
        let path = self.layout_path(contract);
        if !path.is_file() {
            return Ok(None);
        }
        load_layout(path).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{CallKind, Selector};
    use crate::primitives::Word;

    fn node_with(calldata: Vec<u8>, return_data: Vec<u8>, exit: ExitReason) -> InvocationNode {
        InvocationNode {
            call_kind: CallKind::Call,
            caller: Address::repeat_byte(1),
            code_address: Address::repeat_byte(2),
            storage_address: Address::repeat_byte(2),
            value: Word::zero(),
            gas_at_entry: 100_000,
            gas_used: 10,
            selector: Selector::from_calldata(&calldata),
            calldata,
            return_data,
            exit_reason: exit,
            children: Vec::new(),
            storage_events: Vec::new(),
            sha3_events: Vec::new(),
            entry_index: 0,
            exit_index: 0,
        }
    }

    fn transfer_abi() -> Vec<AbiFunction> {
        vec![AbiFunction::new(
            "transfer",
            vec![("to", AbiType::Address), ("amount", AbiType::Uint(256))],
            vec![("ok", AbiType::Bool)],
        )]
    }

    #[test]
    fn empty_calldata_is_undecoded() {
        let node = node_with(vec![], vec![], ExitReason::Stop);
        let decoded = decode_call(&node, &transfer_abi());
        assert_eq!(decoded.decode_status, DecodeStatus::Undecoded);
    }

    #[test]
    fn transfer_args_decode_fully() {
        let abis = transfer_abi();
        let to = Address::repeat_byte(0x11);
        let calldata = abis[0]
            .encode_call(&[AbiValue::Address(to), AbiValue::Uint(Word::from(5u64))])
            .unwrap();
        let ret = crate::primitives::word_to_bytes32(Word::one()).to_vec();
        let node = node_with(calldata, ret, ExitReason::Return);
        let decoded = decode_call(&node, &abis);
        assert_eq!(decoded.decode_status, DecodeStatus::Full);
        assert_eq!(decoded.args.len(), 2);
        assert_eq!(decoded.args[0].name, "to");
        assert_eq!(decoded.args[0].value.as_address(), Some(to));
        assert_eq!(decoded.args[1].value.as_uint(), Some(Word::from(5u64)));
        assert_eq!(
            decoded.render().unwrap(),
            format!("transfer(to={to:?}, amount=5)")
        );
    }

    #[test]
    fn malformed_dynamic_offset_degrades_to_selector_only() {
        let f = AbiFunction::new("put", vec![("data", AbiType::Bytes)], vec![]);
        let mut calldata = f.selector.0.to_vec();
        // Head offset pointing far past the end.
        calldata.extend_from_slice(&crate::primitives::word_to_bytes32(Word::from(4096u64)));
        let node = node_with(calldata, vec![], ExitReason::Stop);
        let decoded = decode_call(&node, &[f]);
        assert_eq!(decoded.decode_status, DecodeStatus::SelectorOnly);
    }

    #[test]
    fn unknown_selector_is_selector_only() {
        let node = node_with(vec![0xde, 0xad, 0xbe, 0xef], vec![], ExitReason::Stop);
        let decoded = decode_call(&node, &transfer_abi());
        assert_eq!(decoded.decode_status, DecodeStatus::SelectorOnly);
        assert!(decoded.function.is_none());
    }

    #[test]
    fn revert_return_data_is_not_abi_decoded() {
        let abis = transfer_abi();
        let calldata = abis[0]
            .encode_call(&[
                AbiValue::Address(Address::repeat_byte(3)),
                AbiValue::Uint(Word::one()),
            ])
            .unwrap();
        let node = node_with(calldata, b"revert reason".to_vec(), ExitReason::Revert);
        let decoded = decode_call(&node, &abis);
        assert_eq!(decoded.decode_status, DecodeStatus::ArgsOnly);
    }

    #[test]
    fn layout_json_both_shapes() {
        let bare = r#"[{"label": "owner", "slot": "0", "type": "t_address"}]"#;
        let wrapped = r#"{"storage": [{"label": "owner", "slot": 0, "type": "t_address"}],
                          "types": {"t_address": {"encoding": "inplace"}}}"#;
        for text in [bare, wrapped] {
            let layout = parse_layout_json(text).unwrap();
            assert_eq!(layout.entries.len(), 1);
            assert_eq!(layout.entries[0].label, "owner");
            assert_eq!(layout.entries[0].slot, Word::zero());
        }
    }
}
