//! Shadow execution: taint and data-flow tracking over a parsed trace.
//!
//! Every instruction is stepped against a shadow of the EVM state that
//! holds provenance tags instead of values — per-frame shadow stack and
//! byte-granular shadow memory, per-(address, slot) shadow storage, and a
//! per-frame shadow of the return-data buffer. Concrete values are never
//! recomputed: the trace's stack snapshots supply them, and a
//! reconstructed concrete memory supplies sha3 inputs and call argument
//! ranges.
//!
//! Taint is explicit data flow only: JUMPI conditions are reported as
//! sinks, but control dependence does not taint subsequently computed
//! values.

pub mod corpus;
mod shadow;

pub use shadow::{ShadowMemory, TagSet, MAX_SOURCES};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ingest::{RawTrace, StructLogEntry, TransactionMeta};
use crate::opcode::{classify_opcode, normalize, stack_arity, OpClass};
use crate::parser::{extract_call_frame_args, CallKind, FrameMemory, InvocationNode};
use crate::primitives::{word_from_bytes, Address, Word};

/// Environment opcodes that can act as taint sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EnvOpcode {
    Caller,
    Origin,
    Timestamp,
    Number,
    Callvalue,
}

impl EnvOpcode {
    fn mnemonic(self) -> &'static str {
        match self {
            EnvOpcode::Caller => "CALLER",
            EnvOpcode::Origin => "ORIGIN",
            EnvOpcode::Timestamp => "TIMESTAMP",
            EnvOpcode::Number => "NUMBER",
            EnvOpcode::Callvalue => "CALLVALUE",
        }
    }

    pub fn parse(s: &str) -> Option<EnvOpcode> {
        match s.to_ascii_uppercase().as_str() {
            "CALLER" => Some(EnvOpcode::Caller),
            "ORIGIN" => Some(EnvOpcode::Origin),
            "TIMESTAMP" => Some(EnvOpcode::Timestamp),
            "NUMBER" => Some(EnvOpcode::Number),
            "CALLVALUE" => Some(EnvOpcode::Callvalue),
            _ => None,
        }
    }
}

/// Where taint enters. Frames are identified by their node's entry index
/// (0 is the root frame).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaintSource {
    CalldataRange {
        frame: usize,
        offset: u64,
        len: u64,
    },
    StorageSlot {
        address: Address,
        slot: Word,
    },
    EnvOpcode {
        op: EnvOpcode,
    },
    CallReturn {
        frame: usize,
    },
}

/// Which operand of the sink instruction was tainted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperandRole {
    Value,
    Slot,
    TargetAddress,
    Data,
    Condition,
}

/// One observed flow from a source to a sink operand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowFact {
    pub source: TaintSource,
    pub sink_opcode: String,
    pub operand_role: OperandRole,
    pub instruction_index: usize,
    pub value_at_sink: Word,
}

impl FlowFact {
    /// One fact per line: the export format.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "source": self.source,
            "sink_opcode": self.sink_opcode,
            "operand_role": self.operand_role,
            "instruction_index": self.instruction_index,
            "value_hex": crate::primitives::hex_word(self.value_at_sink),
        })
        .to_string()
    }
}

/// Final shadow state: storage is the only component that survives the
/// transaction; frame-local stacks and memories die with their frames.
#[derive(Debug, Default)]
pub struct ShadowState {
    pub shadow_storage: HashMap<(Address, Word), TagSet>,
}

impl ShadowState {
    /// Resolve tag bits back to the run's sources.
    pub fn storage_taint<'a>(
        &'a self,
        sources: &'a [TaintSource],
    ) -> impl Iterator<Item = ((Address, Word), Vec<&'a TaintSource>)> + 'a {
        self.shadow_storage.iter().map(move |(key, tags)| {
            (*key, tags.bits().map(|b| &sources[b]).collect::<Vec<_>>())
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DataflowError {
    /// Shadow and concrete stacks diverged: a propagation-rule bug, not a
    /// user error.
    #[error("internal consistency failure at instruction {index}: shadow stack {shadow} vs concrete {concrete}")]
    InternalConsistency {
        index: usize,
        shadow: usize,
        concrete: usize,
    },
    #[error("too many taint sources: {0} (max {MAX_SOURCES})")]
    TooManySources(usize),
    #[error(transparent)]
    Parse(#[from] crate::parser::ParseError),
}

/// Filter pattern for [`query_flows`].
#[derive(Debug, Clone, Default)]
pub struct SinkFilter {
    pub opcode: Option<String>,
    pub role: Option<OperandRole>,
    /// Restrict to facts whose instruction falls in a frame's range.
    pub index_range: Option<(usize, usize)>,
}

/// Parse a source spec: `calldata:<frame>:<offset>:<len>`,
/// `storage:<address>:<slot>`, `env:<OPCODE>`, or `return:<frame>`;
/// `<frame>` is `root` or a node entry index.
pub fn parse_source_spec(spec: &str) -> Result<TaintSource, String> {
    let frame_id = |s: &str| -> Result<usize, String> {
        if s.eq_ignore_ascii_case("root") {
            Ok(0)
        } else {
            s.parse()
                .map_err(|_| format!("bad frame id {s:?} (use 'root' or an entry index)"))
        }
    };
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["calldata", frame, offset, len] => Ok(TaintSource::CalldataRange {
            frame: frame_id(frame)?,
            offset: offset
                .parse()
                .map_err(|_| format!("bad offset in {spec:?}"))?,
            len: len.parse().map_err(|_| format!("bad length in {spec:?}"))?,
        }),
        ["storage", address, slot] => Ok(TaintSource::StorageSlot {
            address: crate::primitives::parse_address(address)
                .map_err(|e| format!("{spec:?}: {e}"))?,
            slot: crate::primitives::parse_hex_word(slot).map_err(|e| format!("{spec:?}: {e}"))?,
        }),
        ["env", op] => Ok(TaintSource::EnvOpcode {
            op: EnvOpcode::parse(op).ok_or_else(|| format!("unknown env opcode in {spec:?}"))?,
        }),
        ["return", frame] => Ok(TaintSource::CallReturn {
            frame: frame_id(frame)?,
        }),
        _ => Err(format!(
            "bad source {spec:?}; expected calldata:<frame>:<off>:<len>, storage:<addr>:<slot>, env:<OP>, or return:<frame>"
        )),
    }
}

/// Parse a sink filter spec: `<opcode>[:<role>]` with role one of
/// value|slot|target|data|condition.
pub fn parse_sink_spec(spec: &str) -> Result<SinkFilter, String> {
    let mut parts = spec.splitn(2, ':');
    let opcode = parts.next().unwrap_or("").to_string();
    let role = match parts.next() {
        None => None,
        Some("value") => Some(OperandRole::Value),
        Some("slot") => Some(OperandRole::Slot),
        Some("target") => Some(OperandRole::TargetAddress),
        Some("data") => Some(OperandRole::Data),
        Some("condition") => Some(OperandRole::Condition),
        Some(other) => return Err(format!("unknown sink role {other:?}")),
    };
    Ok(SinkFilter {
        opcode: if opcode.is_empty() { None } else { Some(opcode) },
        role,
        index_range: None,
    })
}

/// Filter facts by opcode / operand role / frame range, order preserved.
pub fn query_flows(facts: &[FlowFact], filter: &SinkFilter) -> Vec<FlowFact> {
    facts
        .iter()
        .filter(|f| {
            if let Some(op) = &filter.opcode {
                if !f.sink_opcode.eq_ignore_ascii_case(op) {
                    return false;
                }
            }
            if let Some(role) = filter.role {
                if f.operand_role != role {
                    return false;
                }
            }
            if let Some((lo, hi)) = filter.index_range {
                if f.instruction_index < lo || f.instruction_index > hi {
                    return false;
                }
            }
            true
        })
        .cloned()
        .collect()
}

/// A call prepared in the current frame whose child (real or synthetic)
/// has not materialized yet.
struct PreparedCall {
    calldata: Vec<u8>,
    calldata_shadow: ShadowMemory,
    calldata_exact: bool,
    ret_region: Option<(u64, u64)>,
}

/// Result of a completed child, applied to the caller at its next entry.
struct PendingResult {
    result_tags: TagSet,
    returndata: Vec<u8>,
    returndata_shadow: ShadowMemory,
    returndata_exact: bool,
    ret_region: Option<(u64, u64)>,
}

struct FrameShadow {
    node_entry_index: usize,
    depth: u32,
    storage_address: Address,
    stack: Vec<TagSet>,
    memory: ShadowMemory,
    concrete: FrameMemory,
    calldata: Vec<u8>,
    calldata_exact: bool,
    calldata_shadow: ShadowMemory,
    returndata: Vec<u8>,
    returndata_exact: bool,
    returndata_shadow: ShadowMemory,
    prepared_call: Option<PreparedCall>,
    pending_result: Option<PendingResult>,
}

impl FrameShadow {
    fn new(
        node_entry_index: usize,
        depth: u32,
        storage_address: Address,
        calldata: Vec<u8>,
        calldata_exact: bool,
        calldata_shadow: ShadowMemory,
    ) -> Self {
        FrameShadow {
            node_entry_index,
            depth,
            storage_address,
            stack: Vec::new(),
            memory: ShadowMemory::new(),
            concrete: FrameMemory::new(),
            calldata,
            calldata_exact,
            calldata_shadow,
            returndata: Vec::new(),
            returndata_exact: true,
            returndata_shadow: ShadowMemory::new(),
            prepared_call: None,
            pending_result: None,
        }
    }
}

/// Frame metadata harvested from the invocation tree: real frames keyed
/// by their first instruction index.
struct FrameIndex<'t> {
    real: BTreeMap<usize, (&'t InvocationNode, u32)>,
}

fn index_frames<'t>(tree: &'t InvocationNode, entries: &[StructLogEntry]) -> FrameIndex<'t> {
    let mut real = BTreeMap::new();
    fn visit<'t>(
        node: &'t InvocationNode,
        depth: u32,
        entries: &[StructLogEntry],
        real: &mut BTreeMap<usize, (&'t InvocationNode, u32)>,
    ) {
        for child in &node.children {
            let child_depth = entries
                .get(child.entry_index)
                .map(|e| e.depth)
                .unwrap_or(depth + 1);
            if child_depth == depth + 1 {
                real.insert(child.entry_index, (child, child_depth));
                visit(child, child_depth, entries, real);
            }
            // Synthetic leaves (entry at caller depth) never execute.
        }
    }
    visit(tree, 1, entries, &mut real);
    FrameIndex { real }
}

/// Shadow-execute one transaction, emitting a flow fact at every
/// sink-eligible operand whose tag set is non-empty.
pub fn shadow_execute(
    meta: &TransactionMeta,
    trace: &RawTrace,
    tree: &InvocationNode,
    sources: &[TaintSource],
) -> Result<(ShadowState, Vec<FlowFact>), DataflowError> {
    if sources.len() > MAX_SOURCES {
        return Err(DataflowError::TooManySources(sources.len()));
    }
    // Canonical bit order keeps fact emission stable under source-set
    // growth.
    let mut ordered: Vec<TaintSource> = sources.to_vec();
    ordered.sort();
    ordered.dedup();

    let mut engine = Engine {
        sources: ordered,
        entries: &trace.entries,
        facts: Vec::new(),
        storage: HashMap::new(),
        frames: Vec::new(),
    };
    engine.run(meta, tree)?;
    Ok((
        ShadowState {
            shadow_storage: engine.storage,
        },
        engine.facts,
    ))
}

struct Engine<'t> {
    sources: Vec<TaintSource>,
    entries: &'t [StructLogEntry],
    facts: Vec<FlowFact>,
    storage: HashMap<(Address, Word), TagSet>,
    frames: Vec<FrameShadow>,
}

impl<'t> Engine<'t> {
    fn source_tag(&self, pred: impl Fn(&TaintSource) -> bool) -> TagSet {
        let mut tags = TagSet::EMPTY;
        for (bit, source) in self.sources.iter().enumerate() {
            if pred(source) {
                tags = tags.union(TagSet::single(bit));
            }
        }
        tags
    }

    /// Bake calldata-range sources for a frame into its calldata shadow.
    fn bake_calldata_sources(&self, frame_id: usize, shadow: &mut ShadowMemory) {
        for (bit, source) in self.sources.iter().enumerate() {
            if let TaintSource::CalldataRange { frame, offset, len } = source {
                if *frame == frame_id {
                    shadow.union_range(*offset, *len, TagSet::single(bit));
                }
            }
        }
    }

    fn emit(
        &mut self,
        tags: TagSet,
        op: &str,
        role: OperandRole,
        index: usize,
        value: Word,
    ) {
        for bit in tags.bits() {
            self.facts.push(FlowFact {
                source: self.sources[bit].clone(),
                sink_opcode: op.to_string(),
                operand_role: role,
                instruction_index: index,
                value_at_sink: value,
            });
        }
    }

    fn run(&mut self, meta: &TransactionMeta, tree: &InvocationNode) -> Result<(), DataflowError> {
        if self.entries.is_empty() {
            return Ok(());
        }
        let index = index_frames(tree, self.entries);

        let mut root_calldata_shadow = ShadowMemory::new();
        self.bake_calldata_sources(tree.entry_index, &mut root_calldata_shadow);
        self.frames.push(FrameShadow::new(
            tree.entry_index,
            1,
            tree.storage_address,
            meta.input.clone(),
            true,
            root_calldata_shadow,
        ));

        for (i, entry) in self.entries.iter().enumerate() {
            let current_depth = self.frames.last().expect("frames nonempty").depth;

            if entry.depth == current_depth + 1 {
                // A real child frame begins; its calldata shadow was
                // prepared at the call instruction.
                let parent = self.frames.last_mut().expect("frames nonempty");
                let prepared = parent
                    .prepared_call
                    .take()
                    .expect("tree and trace agree on frame entries");
                let (node, depth) = index.real.get(&i).copied().unwrap_or((tree, entry.depth));
                let mut calldata_shadow = prepared.calldata_shadow;
                self.bake_calldata_sources(node.entry_index, &mut calldata_shadow);
                let mut frame = FrameShadow::new(
                    node.entry_index,
                    depth,
                    node.storage_address,
                    prepared.calldata,
                    prepared.calldata_exact,
                    calldata_shadow,
                );
                // The parent resumes after this child with the call's
                // ret region filled.
                frame.prepared_call = None;
                self.frames.push(frame);
                let parent_idx = self.frames.len() - 2;
                self.frames[parent_idx].pending_result = Some(PendingResult {
                    result_tags: TagSet::EMPTY,
                    returndata: Vec::new(),
                    returndata_shadow: ShadowMemory::new(),
                    returndata_exact: true,
                    ret_region: prepared.ret_region,
                });
            } else if entry.depth < current_depth {
                while self.frames.last().expect("frames nonempty").depth > entry.depth {
                    // Abnormal termination: nothing returns.
                    let dead = self.frames.pop().expect("frames nonempty");
                    drop(dead);
                    if let Some(parent) = self.frames.last_mut() {
                        if let Some(pending) = parent.pending_result.as_mut() {
                            pending.returndata = Vec::new();
                            pending.returndata_shadow = ShadowMemory::new();
                            pending.result_tags = TagSet::EMPTY;
                        }
                    }
                }
            }

            // Apply a completed call's effects before this entry runs.
            {
                let frame = self.frames.last_mut().expect("frames nonempty");
                if entry.depth == frame.depth && frame.prepared_call.take().is_some() {
                    // The call produced no sub-trace: synthetic child.
                    frame.stack.push(TagSet::EMPTY);
                    frame.returndata = Vec::new();
                    frame.returndata_exact = true;
                    frame.returndata_shadow = ShadowMemory::new();
                }
                if let Some(pending) = frame.pending_result.take() {
                    frame.stack.push(pending.result_tags);
                    if let Some((off, len)) = pending.ret_region {
                        let n = (pending.returndata.len() as u64).min(len);
                        if n > 0 {
                            frame
                                .memory
                                .copy_from(&pending.returndata_shadow, 0, off, n);
                            if pending.returndata_exact {
                                frame.concrete.write(off, &pending.returndata[..n as usize]);
                            } else {
                                frame.concrete.write_unknown(off, n);
                            }
                        }
                    }
                    frame.returndata = pending.returndata;
                    frame.returndata_exact = pending.returndata_exact;
                    frame.returndata_shadow = pending.returndata_shadow;
                }

                // Shadow/concrete agreement is the engine's bug trap.
                if frame.stack.len() != entry.stack.len() {
                    return Err(DataflowError::InternalConsistency {
                        index: i,
                        shadow: frame.stack.len(),
                        concrete: entry.stack.len(),
                    });
                }
            }

            self.step(i, entry)?;
        }
        Ok(())
    }

    /// Propagation and sink rules for one instruction.
    fn step(&mut self, i: usize, entry: &StructLogEntry) -> Result<(), DataflowError> {
        let op = normalize(&entry.op);
        let concrete = |n: usize| entry.stack_peek(n).unwrap_or_default();

        match classify_opcode(&op) {
            OpClass::FunctionEnter => {
                let args = extract_call_frame_args(entry)?;
                // Sinks on the call operands.
                let frame = self.frames.last().expect("frames nonempty");
                let stack_len = frame.stack.len();
                let tag_at = |n: usize| -> TagSet {
                    if n < stack_len {
                        frame.stack[stack_len - 1 - n]
                    } else {
                        TagSet::EMPTY
                    }
                };
                let (addr_tags, value_tags) = match args.kind {
                    CallKind::Call | CallKind::Callcode => (tag_at(1), Some(tag_at(2))),
                    CallKind::Staticcall | CallKind::Delegatecall => (tag_at(1), None),
                    CallKind::Create | CallKind::Create2 => (TagSet::EMPTY, Some(tag_at(0))),
                    CallKind::Root => (TagSet::EMPTY, None),
                };
                let addr_value = match args.kind {
                    CallKind::Create | CallKind::Create2 => Word::zero(),
                    _ => concrete(1),
                };
                let value_value = match args.kind {
                    CallKind::Create | CallKind::Create2 => concrete(0),
                    _ => concrete(2),
                };
                if !addr_tags.is_empty() {
                    self.emit(addr_tags, &op, OperandRole::TargetAddress, i, addr_value);
                }
                if let Some(vt) = value_tags {
                    if !vt.is_empty() {
                        self.emit(vt, &op, OperandRole::Value, i, value_value);
                    }
                }

                let frame = self.frames.last_mut().expect("frames nonempty");
                // Pop operand tags.
                let (pops, _) = stack_arity(&op).expect("enter ops have arity");
                for _ in 0..pops {
                    frame.stack.pop();
                }
                // Argument memory flows into the callee's calldata.
                let calldata_shadow = frame.memory.slice(args.args_offset, args.args_len);
                let read = frame.concrete.read(args.args_offset, args.args_len);
                frame.prepared_call = Some(PreparedCall {
                    calldata: read.bytes,
                    calldata_shadow,
                    calldata_exact: read.exact,
                    ret_region: args.ret_offset.zip(args.ret_len),
                });
            }
            OpClass::FunctionExit => {
                let frame_id;
                let mut returndata = Vec::new();
                let mut returndata_shadow = ShadowMemory::new();
                let mut returndata_exact = true;
                {
                    let frame = self.frames.last_mut().expect("frames nonempty");
                    frame_id = frame.node_entry_index;
                    match op.as_str() {
                        "RETURN" | "REVERT" => {
                            let off = word_u64(concrete(0));
                            let len = word_u64(concrete(1));
                            let read = frame.concrete.read(off, len);
                            returndata = read.bytes;
                            returndata_exact = read.exact;
                            returndata_shadow = frame.memory.slice(off, len);
                            frame.stack.pop();
                            frame.stack.pop();
                            if op == "RETURN" {
                                let tags = returndata_shadow.read(0, len.max(1));
                                if !tags.is_empty() {
                                    let value = word_from_bytes(
                                        &returndata[..returndata.len().min(32)],
                                    );
                                    self.emit(tags, "RETURN", OperandRole::Data, i, value);
                                }
                            }
                        }
                        "SELFDESTRUCT" => {
                            let frame = self.frames.last_mut().expect("frames nonempty");
                            frame.stack.pop();
                        }
                        _ => {} // STOP, INVALID pop nothing
                    }
                }
                let closing = self.frames.pop().expect("frames nonempty");
                drop(closing);
                if let Some(parent) = self.frames.last_mut() {
                    let pending = parent.pending_result.as_mut().expect("child had a pending slot");
                    // The success/address word carries no data taint; the
                    // returned bytes do, plus any call_return source
                    // bound to this frame.
                    pending.result_tags = TagSet::EMPTY;
                    pending.returndata = returndata;
                    pending.returndata_exact = returndata_exact;
                    pending.returndata_shadow = returndata_shadow;
                    let ret_len = pending.returndata.len() as u64;
                    let extra = self.source_tag(|s| {
                        matches!(s, TaintSource::CallReturn { frame } if *frame == frame_id)
                    });
                    if !extra.is_empty() && ret_len > 0 {
                        // Re-borrow dance: apply after computing.
                        let parent = self.frames.last_mut().expect("frames nonempty");
                        let pending =
                            parent.pending_result.as_mut().expect("still pending");
                        pending.returndata_shadow.union_range(0, ret_len, extra);
                    }
                }
            }
            OpClass::StorageAccess => {
                if op == "SLOAD" {
                    let slot = concrete(0);
                    let frame = self.frames.last_mut().expect("frames nonempty");
                    let address = frame.storage_address;
                    frame.stack.pop();
                    let stored = self
                        .storage
                        .get(&(address, slot))
                        .copied()
                        .unwrap_or(TagSet::EMPTY);
                    let source_tags = self.source_tag(|s| {
                        matches!(s, TaintSource::StorageSlot { address: a, slot: sl }
                                 if *a == address && *sl == slot)
                    });
                    let frame = self.frames.last_mut().expect("frames nonempty");
                    frame.stack.push(stored.union(source_tags));
                } else {
                    let slot = concrete(0);
                    let value = concrete(1);
                    let frame = self.frames.last_mut().expect("frames nonempty");
                    let address = frame.storage_address;
                    let slot_tags = frame.stack.pop().unwrap_or(TagSet::EMPTY);
                    let value_tags = frame.stack.pop().unwrap_or(TagSet::EMPTY);
                    if value_tags.is_empty() {
                        self.storage.remove(&(address, slot));
                    } else {
                        self.storage.insert((address, slot), value_tags);
                    }
                    if !slot_tags.is_empty() {
                        self.emit(slot_tags, "SSTORE", OperandRole::Slot, i, slot);
                    }
                    if !value_tags.is_empty() {
                        self.emit(value_tags, "SSTORE", OperandRole::Value, i, value);
                    }
                }
            }
            OpClass::Sha3 => {
                let off = word_u64(concrete(0));
                let len = word_u64(concrete(1));
                let frame = self.frames.last_mut().expect("frames nonempty");
                frame.stack.pop();
                frame.stack.pop();
                let tags = frame.memory.read(off, len);
                frame.stack.push(tags);
            }
            OpClass::Other => self.step_other(i, entry, &op)?,
        }
        Ok(())
    }

    fn step_other(
        &mut self,
        i: usize,
        entry: &StructLogEntry,
        op: &str,
    ) -> Result<(), DataflowError> {
        let concrete = |n: usize| entry.stack_peek(n).unwrap_or_default();
        let env_sources = |engine: &Engine, mnemonic: &str| {
            engine.source_tag(|s| {
                matches!(s, TaintSource::EnvOpcode { op } if op.mnemonic() == mnemonic)
            })
        };

        // Opcode families with explicit rules first.
        if let Some(rest) = op.strip_prefix("DUP") {
            if let Ok(n) = rest.parse::<usize>() {
                let frame = self.frames.last_mut().expect("frames nonempty");
                let len = frame.stack.len();
                let tags = frame.stack[len - n];
                frame.stack.push(tags);
                return Ok(());
            }
        }
        if let Some(rest) = op.strip_prefix("SWAP") {
            if let Ok(n) = rest.parse::<usize>() {
                let frame = self.frames.last_mut().expect("frames nonempty");
                let len = frame.stack.len();
                frame.stack.swap(len - 1, len - 1 - n);
                return Ok(());
            }
        }
        if op.starts_with("PUSH") {
            let frame = self.frames.last_mut().expect("frames nonempty");
            frame.stack.push(TagSet::EMPTY);
            return Ok(());
        }

        match op {
            "MLOAD" => {
                let off = word_u64(concrete(0));
                let frame = self.frames.last_mut().expect("frames nonempty");
                frame.stack.pop();
                let tags = frame.memory.read(off, 32);
                frame.stack.push(tags);
            }
            "MSTORE" | "MSTORE8" => {
                let off = word_u64(concrete(0));
                let value = concrete(1);
                let width = if op == "MSTORE" { 32 } else { 1 };
                let frame = self.frames.last_mut().expect("frames nonempty");
                frame.stack.pop();
                let value_tags = frame.stack.pop().unwrap_or(TagSet::EMPTY);
                frame.memory.write(off, width, value_tags);
                if width == 32 {
                    frame
                        .concrete
                        .write(off, &crate::primitives::word_to_bytes32(value));
                } else {
                    frame.concrete.write(off, &[value.byte(0)]);
                }
            }
            "CALLDATALOAD" => {
                let off = word_u64(concrete(0));
                let frame = self.frames.last_mut().expect("frames nonempty");
                frame.stack.pop();
                let tags = frame.calldata_shadow.read(off, 32);
                frame.stack.push(tags);
            }
            "CALLDATACOPY" => {
                let dest = word_u64(concrete(0));
                let src = word_u64(concrete(1));
                let len = word_u64(concrete(2));
                let frame = self.frames.last_mut().expect("frames nonempty");
                for _ in 0..3 {
                    frame.stack.pop();
                }
                let src_shadow = frame.calldata_shadow.slice(src, len);
                frame.memory.copy_from(&src_shadow, 0, dest, len);
                if frame.calldata_exact {
                    let bytes = slice_zero_extended(&frame.calldata, src, len);
                    frame.concrete.write(dest, &bytes);
                } else {
                    frame.concrete.write_unknown(dest, len);
                }
            }
            "RETURNDATACOPY" => {
                let dest = word_u64(concrete(0));
                let src = word_u64(concrete(1));
                let len = word_u64(concrete(2));
                let frame = self.frames.last_mut().expect("frames nonempty");
                for _ in 0..3 {
                    frame.stack.pop();
                }
                let src_shadow = frame.returndata_shadow.slice(src, len);
                frame.memory.copy_from(&src_shadow, 0, dest, len);
                if frame.returndata_exact {
                    let bytes = slice_zero_extended(&frame.returndata, src, len);
                    frame.concrete.write(dest, &bytes);
                } else {
                    frame.concrete.write_unknown(dest, len);
                }
            }
            "MCOPY" => {
                let dest = word_u64(concrete(0));
                let src = word_u64(concrete(1));
                let len = word_u64(concrete(2));
                let frame = self.frames.last_mut().expect("frames nonempty");
                for _ in 0..3 {
                    frame.stack.pop();
                }
                let src_shadow = frame.memory.slice(src, len);
                frame.memory.copy_from(&src_shadow, 0, dest, len);
                frame.concrete.copy_within(dest, src, len);
            }
            "CODECOPY" | "EXTCODECOPY" => {
                let (dest, len, pops) = if op == "CODECOPY" {
                    (word_u64(concrete(0)), word_u64(concrete(2)), 3)
                } else {
                    (word_u64(concrete(1)), word_u64(concrete(3)), 4)
                };
                let frame = self.frames.last_mut().expect("frames nonempty");
                for _ in 0..pops {
                    frame.stack.pop();
                }
                // Code bytes are untainted but unreconstructable.
                frame.memory.write(dest, len, TagSet::EMPTY);
                frame.concrete.write_unknown(dest, len);
            }
            "CALLER" | "ORIGIN" | "TIMESTAMP" | "NUMBER" | "CALLVALUE" => {
                let tags = env_sources(self, op);
                let frame = self.frames.last_mut().expect("frames nonempty");
                frame.stack.push(tags);
            }
            "JUMPI" => {
                let cond_value = concrete(1);
                let frame = self.frames.last_mut().expect("frames nonempty");
                frame.stack.pop();
                let cond_tags = frame.stack.pop().unwrap_or(TagSet::EMPTY);
                if !cond_tags.is_empty() {
                    self.emit(cond_tags, "JUMPI", OperandRole::Condition, i, cond_value);
                }
            }
            _ => {
                // Generic rule: pop per arity, push the union of popped
                // tags (fresh-value opcodes pop nothing and push empty).
                let Some((pops, pushes)) = stack_arity(op) else {
                    // Unknown opcode: resync from the concrete stack at
                    // the next entry is impossible; treat as no-op with
                    // stack patched by the consistency check.
                    return Ok(());
                };
                let frame = self.frames.last_mut().expect("frames nonempty");
                let mut union = TagSet::EMPTY;
                for _ in 0..pops {
                    union = union.union(frame.stack.pop().unwrap_or(TagSet::EMPTY));
                }
                for _ in 0..pushes {
                    frame.stack.push(union);
                }
            }
        }
        Ok(())
    }
}

fn word_u64(w: Word) -> u64 {
    if w > Word::from(u64::MAX) {
        u64::MAX
    } else {
        w.as_u64()
    }
}

fn slice_zero_extended(data: &[u8], offset: u64, len: u64) -> Vec<u8> {
    let len = len.min(1 << 26) as usize;
    let mut out = vec![0u8; len];
    if offset < data.len() as u64 {
        let off = offset as usize;
        let n = (data.len() - off).min(len);
        out[..n].copy_from_slice(&data[off..off + n]);
    }
    out
}
