//! Invocation-tree node types and per-frame event records.

use serde::{Deserialize, Serialize};

use crate::decoder::DecodedSlotPath;
use crate::primitives::{hexbytes, Address, Word};

/// How a frame was entered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Root,
    Call,
    Callcode,
    Staticcall,
    Delegatecall,
    Create,
    Create2,
}

impl CallKind {
    pub fn is_create(self) -> bool {
        matches!(self, CallKind::Create | CallKind::Create2)
    }

    pub fn label(self) -> &'static str {
        match self {
            CallKind::Root => "root",
            CallKind::Call => "call",
            CallKind::Callcode => "callcode",
            CallKind::Staticcall => "staticcall",
            CallKind::Delegatecall => "delegatecall",
            CallKind::Create => "create",
            CallKind::Create2 => "create2",
        }
    }
}

/// How a frame terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Stop,
    Return,
    Revert,
    Selfdestruct,
    Invalid,
    OutOfGas,
}

impl ExitReason {
    /// Whether this exit rolls the frame's state changes back.
    pub fn rolls_back(self) -> bool {
        matches!(
            self,
            ExitReason::Revert | ExitReason::OutOfGas | ExitReason::Invalid
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            ExitReason::Stop => "stop",
            ExitReason::Return => "return",
            ExitReason::Revert => "revert",
            ExitReason::Selfdestruct => "selfdestruct",
            ExitReason::Invalid => "invalid",
            ExitReason::OutOfGas => "out_of_gas",
        }
    }
}

/// A 4-byte function selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selector(pub [u8; 4]);

impl Selector {
    pub fn from_calldata(calldata: &[u8]) -> Option<Selector> {
        if calldata.len() >= 4 {
            Some(Selector([calldata[0], calldata[1], calldata[2], calldata[3]]))
        } else {
            None
        }
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl Serialize for Selector {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Selector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        let bytes = crate::primitives::parse_hex_bytes(&s).map_err(serde::de::Error::custom)?;
        if bytes.len() != 4 {
            return Err(serde::de::Error::custom("selector must be 4 bytes"));
        }
        Ok(Selector([bytes[0], bytes[1], bytes[2], bytes[3]]))
    }
}

/// One SLOAD or SSTORE observed in a frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageAccessEvent {
    pub kind: StorageAccessKind,
    pub raw_slot: Word,
    pub value: Word,
    /// Trace index of the SLOAD/SSTORE entry.
    pub instruction_index: usize,
    /// True when an enclosing frame reverted, so the effect never landed.
    pub rolled_back: bool,
    /// Structural slot path, filled by the decoder when derivable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded: Option<DecodedSlotPath>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageAccessKind {
    Load,
    Store,
}

/// One SHA3 computation: preimage and digest, the raw material for
/// storage-slot decoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sha3Record {
    #[serde(with = "hexbytes")]
    pub input: Vec<u8>,
    pub output: Word,
    pub instruction_index: usize,
}

/// One call frame and everything observed inside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvocationNode {
    pub call_kind: CallKind,
    /// msg.sender of this frame.
    pub caller: Address,
    /// Address whose code runs.
    pub code_address: Address,
    /// Address whose storage is read/written; differs from `code_address`
    /// under delegatecall/callcode.
    pub storage_address: Address,
    pub value: Word,
    pub gas_at_entry: u64,
    /// Gas consumed by this frame including its subtree: entry gas minus
    /// gas remaining after the frame's last instruction. Exceptional
    /// halts consume everything.
    pub gas_used: u64,
    #[serde(with = "hexbytes")]
    pub calldata: Vec<u8>,
    #[serde(with = "hexbytes")]
    pub return_data: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
    pub exit_reason: ExitReason,
    pub children: Vec<InvocationNode>,
    pub storage_events: Vec<StorageAccessEvent>,
    pub sha3_events: Vec<Sha3Record>,
    /// Trace index of the first instruction in this frame. For synthetic
    /// leaves (code-less callees) this is the call instruction itself.
    pub entry_index: usize,
    /// Trace index of the last instruction in this frame.
    pub exit_index: usize,
}

impl InvocationNode {
    /// Depth-first pre-order walk over the whole tree.
    pub fn walk(&self) -> Vec<&InvocationNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            out.push(node);
            for child in node.children.iter().rev() {
                stack.push(child);
            }
        }
        out
    }

    /// Mutable pre-order walk, parent before children.
    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut InvocationNode)) {
        f(self);
        for child in &mut self.children {
            child.walk_mut(f);
        }
    }

    /// Total node count including this one.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// All storage events in the subtree, in trace order.
    pub fn all_storage_events(&self) -> Vec<&StorageAccessEvent> {
        let mut events: Vec<&StorageAccessEvent> = self
            .walk()
            .into_iter()
            .flat_map(|n| n.storage_events.iter())
            .collect();
        events.sort_by_key(|e| e.instruction_index);
        events
    }

    /// All sha3 records in the subtree, in trace order.
    pub fn all_sha3_records(&self) -> Vec<&Sha3Record> {
        let mut records: Vec<&Sha3Record> = self
            .walk()
            .into_iter()
            .flat_map(|n| n.sha3_events.iter())
            .collect();
        records.sort_by_key(|r| r.instruction_index);
        records
    }

    /// Whether `index` falls within this frame's trace range.
    pub fn contains_index(&self, index: usize) -> bool {
        index >= self.entry_index && index <= self.exit_index
    }
}
