//! Trace parsing: from a raw structLog sequence to an invocation tree
//! with per-frame storage and sha3 event logs.
//!
//! Frame boundaries come from the enter/exit opcode taxonomy plus depth
//! transitions: every enter opcode whose callee actually ran code is
//! followed by a depth+1 entry; enters targeting code-less or
//! precompile-range addresses leave no sub-trace and become synthetic
//! leaf children. A depth drop without an exit opcode means the frame
//! died abnormally (out of gas, unless the entry carries another error).

mod memory;
mod render;
mod types;

pub use memory::{FrameMemory, MemRead};
pub use render::{render_tree, RenderOptions};
pub use types::{
    CallKind, ExitReason, InvocationNode, Sha3Record, Selector, StorageAccessEvent,
    StorageAccessKind,
};

pub use crate::opcode::{classify_opcode, OpClass};

use crate::ingest::{RawTrace, StructLogEntry, TransactionMeta};
use crate::opcode::normalize;
use crate::primitives::{keccak256, word_from_bytes, word_to_address, Address, Word};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("malformed trace at index {index}: {reason}")]
    MalformedTrace { index: usize, reason: String },
}

fn malformed(index: usize, reason: impl Into<String>) -> ParseError {
    ParseError::MalformedTrace {
        index,
        reason: reason.into(),
    }
}

/// First 4 bytes of calldata, when there are at least 4.
pub fn extract_selector(calldata: &[u8]) -> Option<Selector> {
    Selector::from_calldata(calldata)
}

/// Decoded operands of a call-family instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallFrameArgs {
    pub kind: CallKind,
    /// Callee address; `None` for CREATE/CREATE2, whose address exists
    /// only after the frame completes.
    pub target: Option<Address>,
    pub value: Word,
    /// Gas operand (saturated to u64). For CREATE frames this is 0; the
    /// EVM forwards what remains.
    pub gas: u64,
    /// Calldata (or initcode) range in the caller's memory.
    pub args_offset: u64,
    pub args_len: u64,
    /// Return-data destination range; absent for create frames.
    pub ret_offset: Option<u64>,
    pub ret_len: Option<u64>,
}

/// Decode the stack operands of an enter opcode per its arity.
pub fn extract_call_frame_args(entry: &StructLogEntry) -> Result<CallFrameArgs, ParseError> {
    let op = normalize(&entry.op);
    let peek = |n: usize, index: usize| -> Result<Word, ParseError> {
        entry
            .stack_peek(n)
            .ok_or_else(|| malformed(index, format!("stack underflow decoding {op}")))
    };
    let as_u64 = |w: Word| -> u64 {
        if w > Word::from(u64::MAX) {
            u64::MAX
        } else {
            w.as_u64()
        }
    };
    // Index is unknown here; callers re-wrap errors with the real index.
    let i = usize::MAX;
    let args = match op.as_str() {
        "CALL" | "CALLCODE" => CallFrameArgs {
            kind: if op == "CALL" {
                CallKind::Call
            } else {
                CallKind::Callcode
            },
            target: Some(word_to_address(peek(1, i)?)),
            value: peek(2, i)?,
            gas: as_u64(peek(0, i)?),
            args_offset: as_u64(peek(3, i)?),
            args_len: as_u64(peek(4, i)?),
            ret_offset: Some(as_u64(peek(5, i)?)),
            ret_len: Some(as_u64(peek(6, i)?)),
        },
        "DELEGATECALL" | "STATICCALL" => CallFrameArgs {
            kind: if op == "DELEGATECALL" {
                CallKind::Delegatecall
            } else {
                CallKind::Staticcall
            },
            target: Some(word_to_address(peek(1, i)?)),
            value: Word::zero(),
            gas: as_u64(peek(0, i)?),
            args_offset: as_u64(peek(2, i)?),
            args_len: as_u64(peek(3, i)?),
            ret_offset: Some(as_u64(peek(4, i)?)),
            ret_len: Some(as_u64(peek(5, i)?)),
        },
        "CREATE" => CallFrameArgs {
            kind: CallKind::Create,
            target: None,
            value: peek(0, i)?,
            gas: 0,
            args_offset: as_u64(peek(1, i)?),
            args_len: as_u64(peek(2, i)?),
            ret_offset: None,
            ret_len: None,
        },
        "CREATE2" => CallFrameArgs {
            kind: CallKind::Create2,
            target: None,
            value: peek(0, i)?,
            gas: 0,
            args_offset: as_u64(peek(1, i)?),
            args_len: as_u64(peek(2, i)?),
            ret_offset: None,
            ret_len: None,
        },
        other => {
            return Err(malformed(i, format!("{other} is not an enter opcode")));
        }
    };
    Ok(args)
}

/// A call instruction seen in the current frame whose outcome is not yet
/// known: resolved either into a real child (next entry one level deeper)
/// or a synthetic leaf (no sub-trace).
#[derive(Debug, Clone)]
struct PendingCall {
    args: CallFrameArgs,
    call_index: usize,
    calldata: Vec<u8>,
    /// Gas on the caller's stack entry, used for synthetic-leaf entry gas.
    caller: Address,
    storage_address: Address,
    value: Word,
}

/// An open frame on the build stack.
struct FrameState {
    kind: CallKind,
    caller: Address,
    code_address: Address,
    storage_address: Address,
    value: Word,
    gas_at_entry: u64,
    calldata: Vec<u8>,
    depth: u32,
    entry_index: usize,
    last_index: usize,
    children: Vec<InvocationNode>,
    storage_events: Vec<StorageAccessEvent>,
    sha3_events: Vec<Sha3Record>,
    memory: FrameMemory,
    /// Return buffer of the most recently completed child call.
    returndata: Vec<u8>,
    returndata_exact: bool,
    pending_call: Option<PendingCall>,
    /// Where the parent wants this frame's return data copied.
    ret_region: Option<(u64, u64)>,
    is_creation: bool,
}

impl FrameState {
    fn close(
        self,
        exit_reason: ExitReason,
        return_data: Vec<u8>,
        exit_index: usize,
        gas_left_at_exit: u64,
    ) -> InvocationNode {
        // Exceptional halts consume the whole frame budget; normal exits
        // and reverts leave the remainder observable.
        let gas_used = if exit_reason.rolls_back() && exit_reason != ExitReason::Revert {
            self.gas_at_entry
        } else {
            self.gas_at_entry.saturating_sub(gas_left_at_exit)
        };
        let selector = if self.kind.is_create() || self.is_creation {
            None
        } else {
            extract_selector(&self.calldata)
        };
        InvocationNode {
            call_kind: self.kind,
            caller: self.caller,
            code_address: self.code_address,
            storage_address: self.storage_address,
            value: self.value,
            gas_at_entry: self.gas_at_entry,
            gas_used,
            calldata: self.calldata,
            return_data,
            selector,
            exit_reason,
            children: self.children,
            storage_events: self.storage_events,
            sha3_events: self.sha3_events,
            entry_index: self.entry_index,
            exit_index,
        }
    }
}

/// Read a memory range at `entry`: prefer the captured snapshot, fall
/// back to the reconstruction.
fn read_memory(entry: &StructLogEntry, frame: &FrameMemory, offset: u64, len: u64) -> MemRead {
    if len == 0 {
        return MemRead {
            bytes: Vec::new(),
            exact: true,
        };
    }
    if let Some(snapshot) = entry.memory_bytes() {
        let mut bytes = vec![0u8; len.min(1 << 26) as usize];
        let off = offset.min(1 << 26) as usize;
        let avail = snapshot.len().saturating_sub(off).min(bytes.len());
        bytes[..avail].copy_from_slice(&snapshot[off..off + avail]);
        return MemRead { bytes, exact: true };
    }
    frame.read(offset, len)
}

/// Exit reason for a frame that terminated without an exit opcode, based
/// on the error string of its last entry.
fn abnormal_exit_reason(last_entry: &StructLogEntry) -> ExitReason {
    match &last_entry.error {
        Some(e) if e.to_ascii_lowercase().contains("out of gas") => ExitReason::OutOfGas,
        Some(_) => ExitReason::Invalid,
        None => ExitReason::OutOfGas,
    }
}

/// Build the invocation tree for one transaction.
pub fn build_invocation_tree(
    meta: &TransactionMeta,
    trace: &RawTrace,
) -> Result<InvocationNode, ParseError> {
    let entries = &trace.entries;
    let root_code_address = meta.to.unwrap_or_else(Address::zero);

    if entries.is_empty() {
        // Plain value transfers execute no code.
        return Ok(InvocationNode {
            call_kind: CallKind::Root,
            caller: meta.origin,
            code_address: root_code_address,
            storage_address: root_code_address,
            value: meta.value,
            gas_at_entry: meta.gas_limit,
            gas_used: 0,
            calldata: meta.input.clone(),
            return_data: trace.return_value.clone(),
            selector: if meta.is_creation() {
                None
            } else {
                extract_selector(&meta.input)
            },
            exit_reason: ExitReason::Stop,
            children: Vec::new(),
            storage_events: Vec::new(),
            sha3_events: Vec::new(),
            entry_index: 0,
            exit_index: 0,
        });
    }

    let mut stack: Vec<FrameState> = vec![FrameState {
        kind: CallKind::Root,
        caller: meta.origin,
        code_address: root_code_address,
        storage_address: root_code_address,
        value: meta.value,
        gas_at_entry: entries[0].gas,
        calldata: meta.input.clone(),
        depth: entries[0].depth,
        entry_index: 0,
        last_index: 0,
        children: Vec::new(),
        storage_events: Vec::new(),
        sha3_events: Vec::new(),
        memory: FrameMemory::new(),
        returndata: Vec::new(),
        returndata_exact: true,
        pending_call: None,
        ret_region: None,
        is_creation: meta.is_creation(),
    }];
    if entries[0].depth != 1 {
        return Err(malformed(0, format!("root depth {} is not 1", entries[0].depth)));
    }
    let mut finished_root: Option<InvocationNode> = None;

    for (i, entry) in entries.iter().enumerate() {
        if finished_root.is_some() {
            return Err(malformed(i, "entries after root frame exit"));
        }
        let current_depth = stack.last().expect("stack never empty").depth;

        if entry.depth > current_depth + 1 {
            return Err(malformed(
                i,
                format!("depth jumped from {current_depth} to {}", entry.depth),
            ));
        }

        if entry.depth == current_depth + 1 {
            // A new frame begins; the previous instruction in the caller
            // must have been an enter opcode.
            let parent = stack.last_mut().expect("stack never empty");
            let Some(pending) = parent.pending_call.take() else {
                return Err(malformed(i, "depth increased without a call instruction"));
            };
            let frame = open_child_frame(pending, entry, i);
            stack.push(frame);
        } else if entry.depth < current_depth {
            // One or more frames terminated without exit opcodes.
            while stack.last().expect("stack never empty").depth > entry.depth {
                let frame = stack.pop().expect("stack never empty");
                let last_idx = frame.last_index;
                let reason = abnormal_exit_reason(&entries[last_idx]);
                let node = frame.close(reason, Vec::new(), last_idx, 0);
                match stack.last_mut() {
                    Some(parent) => {
                        parent.returndata = Vec::new();
                        parent.returndata_exact = true;
                        parent.children.push(node);
                    }
                    None => {
                        return Err(malformed(i, "depth below root frame"));
                    }
                }
            }
            if stack.last().expect("stack never empty").depth != entry.depth {
                return Err(malformed(i, "inconsistent depth after frame closure"));
            }
        }

        // Back at the current frame: a pending call with no deeper entry
        // means the callee ran no code (code-less or precompile-range
        // address, or a call that failed before executing).
        let frame = stack.last_mut().expect("stack never empty");
        frame.last_index = i;
        if let Some(pending) = frame.pending_call.take() {
            let leaf = synthetic_leaf(&pending, entry);
            frame.returndata = Vec::new();
            frame.returndata_exact = true;
            frame.children.push(leaf);
        }

        step_instruction(&mut stack, entries, i, &mut finished_root)?;
    }

    // Trace exhausted: any frames still open ended abnormally (a failed
    // transaction cut off by gas, or a truncated capture).
    while let Some(frame) = stack.pop() {
        let last_idx = frame.last_index;
        let last_entry = &entries[last_idx];
        let mut frame = frame;
        // A call instruction at the very end: treat as a synthetic child
        // unless the instruction itself errored.
        if let Some(pending) = frame.pending_call.take() {
            if last_entry.error.is_none() {
                let leaf_exit = ExitReason::Stop;
                let mut leaf = synthetic_leaf(&pending, last_entry);
                leaf.exit_reason = leaf_exit;
                frame.children.push(leaf);
            }
        }
        let reason = match classify_opcode(&last_entry.op) {
            OpClass::FunctionExit if last_entry.error.is_none() => {
                // Normal exits are handled in step_instruction; reaching
                // here with an exit opcode means it was mid-frame.
                abnormal_exit_reason(last_entry)
            }
            _ => abnormal_exit_reason(last_entry),
        };
        let gas_left = if last_entry.error.is_none() {
            last_entry.gas.saturating_sub(last_entry.gas_cost)
        } else {
            0
        };
        let node = frame.close(reason, Vec::new(), last_idx, gas_left);
        match stack.last_mut() {
            Some(parent) => {
                parent.returndata = Vec::new();
                parent.returndata_exact = true;
                parent.children.push(node);
            }
            None => finished_root = Some(node),
        }
    }

    let mut root = finished_root.expect("root frame always closes");
    mark_rollbacks(&mut root, false);
    Ok(root)
}

fn open_child_frame(pending: PendingCall, entry: &StructLogEntry, index: usize) -> FrameState {
    let args = &pending.args;
    let (code_address, storage_address, caller, value) = match args.kind {
        CallKind::Call | CallKind::Staticcall => (
            args.target.unwrap_or_default(),
            args.target.unwrap_or_default(),
            pending.storage_address,
            args.value,
        ),
        CallKind::Callcode => (
            args.target.unwrap_or_default(),
            pending.storage_address,
            pending.storage_address,
            args.value,
        ),
        CallKind::Delegatecall => (
            args.target.unwrap_or_default(),
            pending.storage_address,
            pending.caller,
            pending.value,
        ),
        // Create addresses are read from the caller's stack after the
        // frame completes.
        CallKind::Create | CallKind::Create2 => {
            (Address::zero(), Address::zero(), pending.storage_address, args.value)
        }
        CallKind::Root => unreachable!("root is never a pending call"),
    };
    FrameState {
        kind: args.kind,
        caller,
        code_address,
        storage_address,
        value,
        gas_at_entry: entry.gas,
        calldata: pending.calldata,
        depth: entry.depth,
        entry_index: index,
        last_index: index,
        children: Vec::new(),
        storage_events: Vec::new(),
        sha3_events: Vec::new(),
        memory: FrameMemory::new(),
        returndata: Vec::new(),
        returndata_exact: true,
        pending_call: None,
        ret_region: args.ret_offset.zip(args.ret_len),
        is_creation: false,
    }
}

/// Leaf node for a call that produced no sub-trace. The success word the
/// call pushed is visible on the next entry of the caller.
fn synthetic_leaf(pending: &PendingCall, next_entry: &StructLogEntry) -> InvocationNode {
    let args = &pending.args;
    let result_word = next_entry.stack_peek(0).unwrap_or_default();
    let success = !result_word.is_zero();
    let (code_address, storage_address) = if args.kind.is_create() {
        let addr = word_to_address(result_word);
        (addr, addr)
    } else {
        let t = args.target.unwrap_or_default();
        (t, t)
    };
    let (caller, value) = match args.kind {
        CallKind::Delegatecall => (pending.caller, pending.value),
        CallKind::Callcode => (pending.storage_address, args.value),
        _ => (pending.storage_address, args.value),
    };
    InvocationNode {
        call_kind: args.kind,
        caller,
        code_address,
        storage_address,
        value,
        gas_at_entry: args.gas,
        gas_used: 0,
        calldata: pending.calldata.clone(),
        return_data: Vec::new(),
        selector: if args.kind.is_create() {
            None
        } else {
            extract_selector(&pending.calldata)
        },
        exit_reason: if success { ExitReason::Stop } else { ExitReason::Revert },
        children: Vec::new(),
        storage_events: Vec::new(),
        sha3_events: Vec::new(),
        entry_index: pending.call_index,
        exit_index: pending.call_index,
    }
}

/// Process one instruction within the current frame.
fn step_instruction(
    stack: &mut Vec<FrameState>,
    entries: &[StructLogEntry],
    i: usize,
    finished_root: &mut Option<InvocationNode>,
) -> Result<(), ParseError> {
    let entry = &entries[i];
    let op = normalize(&entry.op);
    let peek = |n: usize| -> Result<Word, ParseError> {
        entry
            .stack_peek(n)
            .ok_or_else(|| malformed(i, format!("stack underflow at {op}")))
    };
    let as_u64 = |w: Word| -> u64 {
        if w > Word::from(u64::MAX) {
            u64::MAX
        } else {
            w.as_u64()
        }
    };
    // The value an instruction pushes is visible on the next entry of the
    // same frame.
    let successor_top = || -> Option<Word> {
        entries
            .get(i + 1)
            .filter(|n| n.depth == entry.depth)
            .and_then(|n| n.stack_peek(0))
    };

    match classify_opcode(&op) {
        OpClass::FunctionEnter => {
            let args = extract_call_frame_args(entry).map_err(|e| match e {
                ParseError::MalformedTrace { reason, .. } => malformed(i, reason),
            })?;
            let frame = stack.last_mut().expect("stack never empty");
            let calldata = read_memory(entry, &frame.memory, args.args_offset, args.args_len);
            frame.pending_call = Some(PendingCall {
                calldata: calldata.bytes,
                call_index: i,
                caller: frame.caller,
                storage_address: frame.storage_address,
                value: frame.value,
                args,
            });
        }
        OpClass::FunctionExit => {
            // An errored exit opcode never performed its exit: the frame
            // halted exceptionally on that instruction instead.
            let (exit_reason, return_data) = if entry.error.is_some() {
                (abnormal_exit_reason(entry), Vec::new())
            } else {
                match op.as_str() {
                    "STOP" => (ExitReason::Stop, Vec::new()),
                    "SELFDESTRUCT" => (ExitReason::Selfdestruct, Vec::new()),
                    "INVALID" => (ExitReason::Invalid, Vec::new()),
                    "RETURN" | "REVERT" => {
                        let off = as_u64(peek(0)?);
                        let len = as_u64(peek(1)?);
                        let frame = stack.last_mut().expect("stack never empty");
                        let data = read_memory(entry, &frame.memory, off, len);
                        let reason = if op == "RETURN" {
                            ExitReason::Return
                        } else {
                            ExitReason::Revert
                        };
                        (reason, data.bytes)
                    }
                    _ => unreachable!("exit class covers exactly these opcodes"),
                }
            };
            let frame = stack.pop().expect("stack never empty");
            let is_create = frame.kind.is_create();
            let ret_region = frame.ret_region;
            let gas_left = entry.gas.saturating_sub(entry.gas_cost);
            let mut node = frame.close(exit_reason, return_data, i, gas_left);
            match stack.last_mut() {
                Some(parent) => {
                    if is_create {
                        // The created address is the word the create
                        // pushed onto the caller's stack.
                        let pushed = entries
                            .get(i + 1)
                            .filter(|n| n.depth == parent.depth)
                            .and_then(|n| n.stack_peek(0))
                            .unwrap_or_default();
                        let addr = word_to_address(pushed);
                        node.code_address = addr;
                        node.storage_address = addr;
                        // CREATE leaves return data only on revert.
                        if exit_reason == ExitReason::Revert {
                            parent.returndata = node.return_data.clone();
                        } else {
                            parent.returndata = Vec::new();
                        }
                        parent.returndata_exact = true;
                    } else {
                        parent.returndata = node.return_data.clone();
                        parent.returndata_exact = true;
                        if let Some((off, len)) = ret_region {
                            let n = (node.return_data.len() as u64).min(len);
                            let bytes = &node.return_data[..n as usize];
                            parent.memory.write(off, bytes);
                        }
                    }
                    parent.children.push(node);
                }
                None => *finished_root = Some(node),
            }
        }
        OpClass::StorageAccess => {
            let frame = stack.last_mut().expect("stack never empty");
            let (kind, raw_slot, value) = if op == "SLOAD" {
                let slot = peek(0)?;
                let value = successor_top().unwrap_or_default();
                (StorageAccessKind::Load, slot, value)
            } else {
                (StorageAccessKind::Store, peek(0)?, peek(1)?)
            };
            frame.storage_events.push(StorageAccessEvent {
                kind,
                raw_slot,
                value,
                instruction_index: i,
                rolled_back: false,
                decoded: None,
            });
        }
        OpClass::Sha3 => {
            let off = as_u64(peek(0)?);
            let len = as_u64(peek(1)?);
            let frame = stack.last_mut().expect("stack never empty");
            let input = read_memory(entry, &frame.memory, off, len);
            // Prefer the observed digest; recompute only when the push is
            // not observable (frame ended right here).
            let output = successor_top()
                .unwrap_or_else(|| word_from_bytes(keccak256(&input.bytes).as_bytes()));
            frame.sha3_events.push(Sha3Record {
                input: input.bytes,
                output,
                instruction_index: i,
            });
        }
        OpClass::Other => {
            let frame = stack.last_mut().expect("stack never empty");
            match op.as_str() {
                "MSTORE" => {
                    let off = as_u64(peek(0)?);
                    let value = peek(1)?;
                    frame
                        .memory
                        .write(off, &crate::primitives::word_to_bytes32(value));
                }
                "MSTORE8" => {
                    let off = as_u64(peek(0)?);
                    let value = peek(1)?;
                    frame.memory.write(off, &[value.byte(0)]);
                }
                "CALLDATACOPY" => {
                    let dest = as_u64(peek(0)?);
                    let src = as_u64(peek(1)?);
                    let len = as_u64(peek(2)?);
                    let bytes = slice_zero_extended(&frame.calldata, src, len);
                    frame.memory.write(dest, &bytes);
                }
                "RETURNDATACOPY" => {
                    let dest = as_u64(peek(0)?);
                    let src = as_u64(peek(1)?);
                    let len = as_u64(peek(2)?);
                    if frame.returndata_exact {
                        let bytes = slice_zero_extended(&frame.returndata, src, len);
                        frame.memory.write(dest, &bytes);
                    } else {
                        frame.memory.write_unknown(dest, len);
                    }
                }
                "MCOPY" => {
                    let dest = as_u64(peek(0)?);
                    let src = as_u64(peek(1)?);
                    let len = as_u64(peek(2)?);
                    frame.memory.copy_within(dest, src, len);
                }
                "CODECOPY" | "EXTCODECOPY" => {
                    // Code bytes are not visible in the trace.
                    let (dest, len) = if op == "CODECOPY" {
                        (as_u64(peek(0)?), as_u64(peek(2)?))
                    } else {
                        (as_u64(peek(1)?), as_u64(peek(3)?))
                    };
                    frame.memory.write_unknown(dest, len);
                }
                _ => {}
            }
        }
    }
    Ok(())
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

/// Shared with the oracle so both sides apply one rollback rule.
pub(crate) fn mark_rollbacks_pub(node: &mut InvocationNode, ancestor_rolled_back: bool) {
    mark_rollbacks(node, ancestor_rolled_back)
}

/// Mark storage events whose effects never landed: everything in the
/// subtree of a frame that reverted, ran out of gas, or halted invalid.
fn mark_rollbacks(node: &mut InvocationNode, ancestor_rolled_back: bool) {
    let rolled_back = ancestor_rolled_back || node.exit_reason.rolls_back();
    for event in &mut node.storage_events {
        event.rolled_back = rolled_back;
    }
    for child in &mut node.children {
        mark_rollbacks(child, rolled_back);
    }
}
