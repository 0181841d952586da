//! The synthetic EVM: a stack machine over a mock world state that emits
//! structLog sequences schema-identical to real tracer output, alongside
//! the ground-truth invocation tree for the same execution.
//!
//! Gas is deliberately simple — flat 1 per instruction, 100 for SSTORE,
//! 30 + 6/word for SHA3, 100 plus forwarded gas for the call family — so
//! hand-derived expectations stay checkable while traces remain plausible
//! and monotone. Out of gas triggers when a frame cannot pay an
//! instruction's cost.

use std::collections::BTreeMap;

use crate::ingest::{RawTrace, StructLogEntry, TransactionMeta};
use crate::opcode::{immediate_len, opcode_name};
use crate::parser::{
    CallKind, ExitReason, InvocationNode, Selector, Sha3Record, StorageAccessEvent,
    StorageAccessKind,
};
use crate::primitives::{
    address_to_word, keccak256, word_from_bytes, word_to_address, word_to_bytes32, Address, Word,
};

use super::{GroundTruth, MockWorld, OracleError};

/// Memory above this is a test bug, not a supported program.
const MEMORY_CAP: u64 = 1 << 24;
const STACK_LIMIT: usize = 1024;

/// Opcodes the oracle executes; exactly the set the parser and dataflow
/// modules must handle.
fn supported(byte: u8, name: &str) -> bool {
    match byte {
        0x60..=0x7f | 0x80..=0x8f | 0x90..=0x9f => true, // PUSH/DUP/SWAP
        0xa0..=0xa2 => true,                             // LOG0-2
        _ => matches!(
            name,
            "POP" | "ADD" | "SUB" | "MUL" | "DIV" | "LT" | "GT" | "EQ" | "ISZERO" | "AND"
                | "OR" | "XOR" | "NOT" | "SHA3" | "MLOAD" | "MSTORE" | "CALLDATALOAD"
                | "CALLDATASIZE" | "CALLDATACOPY" | "SLOAD" | "SSTORE" | "CALLER" | "ORIGIN"
                | "CALLVALUE" | "TIMESTAMP" | "NUMBER" | "GAS" | "JUMP" | "JUMPI" | "JUMPDEST"
                | "PC" | "RETURNDATASIZE" | "RETURNDATACOPY" | "CALL" | "CALLCODE"
                | "STATICCALL" | "DELEGATECALL" | "CREATE" | "CREATE2" | "STOP" | "RETURN"
                | "REVERT" | "SELFDESTRUCT" | "INVALID"
        ),
    }
}

struct Frame {
    kind: CallKind,
    caller: Address,
    /// Address recorded on the ground-truth node (zero for creation
    /// roots, where the trace gives the parser nothing to recover).
    node_code_address: Address,
    node_storage_address: Address,
    /// Actual storage context used for SLOAD/SSTORE/balance effects.
    exec_address: Address,
    value: Word,
    code: Vec<u8>,
    calldata: Vec<u8>,
    pc: usize,
    stack: Vec<Word>,
    memory: Vec<u8>,
    gas: u64,
    gas_at_entry: u64,
    returndata: Vec<u8>,
    is_static: bool,
    entry_index: usize,
    last_index: usize,
    children: Vec<InvocationNode>,
    storage_events: Vec<StorageAccessEvent>,
    sha3_events: Vec<Sha3Record>,
    snapshot: BTreeMap<Address, super::AccountState>,
    ret_region: Option<(u64, u64)>,
    /// For create frames: where RETURN data deploys.
    deploy_address: Option<Address>,
    is_creation_root: bool,
}

impl Frame {
    fn into_node(self, exit_reason: ExitReason, return_data: Vec<u8>) -> InvocationNode {
        let selector = if self.kind.is_create() || self.is_creation_root {
            None
        } else {
            Selector::from_calldata(&self.calldata)
        };
        InvocationNode {
            call_kind: self.kind,
            caller: self.caller,
            code_address: self.node_code_address,
            storage_address: self.node_storage_address,
            value: self.value,
            gas_at_entry: self.gas_at_entry,
            gas_used: self.gas_at_entry - self.gas,
            calldata: self.calldata,
            return_data,
            selector,
            exit_reason,
            children: self.children,
            storage_events: self.storage_events,
            sha3_events: self.sha3_events,
            entry_index: self.entry_index,
            exit_index: self.last_index,
        }
    }
}

enum Step {
    Continue,
    Enter(Box<Frame>),
    Exit(ExitReason, Vec<u8>),
}

pub(super) struct Machine<'w> {
    world: &'w mut MockWorld,
    origin: Address,
    block_number: u64,
    timestamp: u64,
    capture_memory: bool,
    entries: Vec<StructLogEntry>,
    frames: Vec<Frame>,
}

impl<'w> Machine<'w> {
    pub(super) fn new(world: &'w mut MockWorld, meta: &TransactionMeta, capture_memory: bool) -> Self {
        Machine {
            world,
            origin: meta.origin,
            block_number: meta.block_number,
            timestamp: 1_600_000_000 + meta.block_number * 12,
            capture_memory,
            entries: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub(super) fn execute(mut self, meta: &TransactionMeta) -> Result<GroundTruth, OracleError> {
        // Root value transfer happens before any code runs.
        if self.world.balance(meta.origin) < meta.value {
            return Err(OracleError::InsufficientBalance {
                address: meta.origin,
            });
        }

        let root = match meta.to {
            Some(to) => {
                self.world.transfer(meta.origin, to, meta.value);
                let code = self.world.code(to);
                if code.is_empty() {
                    // Plain value transfer: no trace at all.
                    let node = empty_root_node(meta, to);
                    return Ok(GroundTruth {
                        trace: RawTrace {
                            entries: Vec::new(),
                            failed: false,
                            return_value: Vec::new(),
                        },
                        storage_events: Vec::new(),
                        tree: node,
                        gas_used: 0,
                        succeeded: true,
                    });
                }
                Frame {
                    kind: CallKind::Root,
                    caller: meta.origin,
                    node_code_address: to,
                    node_storage_address: to,
                    exec_address: to,
                    value: meta.value,
                    code,
                    calldata: meta.input.clone(),
                    pc: 0,
                    stack: Vec::new(),
                    memory: Vec::new(),
                    gas: meta.gas_limit,
                    gas_at_entry: meta.gas_limit,
                    returndata: Vec::new(),
                    is_static: false,
                    entry_index: 0,
                    last_index: 0,
                    children: Vec::new(),
                    storage_events: Vec::new(),
                    sha3_events: Vec::new(),
                    snapshot: self.world.accounts.clone(),
                    ret_region: None,
                    deploy_address: None,
                    is_creation_root: false,
                }
            }
            None => {
                // Contract creation: input is initcode; the parser cannot
                // recover the created address, so the node records zero.
                let nonce = self.world.account_mut(meta.origin).nonce;
                self.world.account_mut(meta.origin).nonce += 1;
                let created = create_address(meta.origin, nonce);
                self.world.transfer(meta.origin, created, meta.value);
                self.world.account_mut(created).nonce = 1;
                Frame {
                    kind: CallKind::Root,
                    caller: meta.origin,
                    node_code_address: Address::zero(),
                    node_storage_address: Address::zero(),
                    exec_address: created,
                    value: meta.value,
                    code: meta.input.clone(),
                    calldata: Vec::new(),
                    pc: 0,
                    stack: Vec::new(),
                    memory: Vec::new(),
                    gas: meta.gas_limit,
                    gas_at_entry: meta.gas_limit,
                    returndata: Vec::new(),
                    is_static: false,
                    entry_index: 0,
                    last_index: 0,
                    children: Vec::new(),
                    storage_events: Vec::new(),
                    sha3_events: Vec::new(),
                    snapshot: self.world.accounts.clone(),
                    ret_region: None,
                    deploy_address: Some(created),
                    is_creation_root: true,
                }
            }
        };

        self.frames.push(root);
        let (tree, failed, return_value, gas_left) = self.run()?;
        let mut tree = tree;
        crate::parser::mark_rollbacks_pub(&mut tree, false);
        let mut storage_events: Vec<StorageAccessEvent> = tree
            .all_storage_events()
            .into_iter()
            .cloned()
            .collect();
        storage_events.sort_by_key(|e| e.instruction_index);
        Ok(GroundTruth {
            trace: RawTrace {
                entries: self.entries,
                failed,
                return_value: return_value.clone(),
            },
            tree,
            storage_events,
            gas_used: meta.gas_limit - gas_left,
            succeeded: !failed,
        })
    }

    fn run(&mut self) -> Result<(InvocationNode, bool, Vec<u8>, u64), OracleError> {
        loop {
            let step = self.step()?;
            match step {
                Step::Continue => {}
                Step::Enter(frame) => self.frames.push(*frame),
                Step::Exit(reason, ret) => {
                    let frame = self.frames.pop().expect("exit with no frame");
                    let gas_left = frame.gas;
                    let success = !reason.rolls_back();

                    // World effects of frame completion.
                    if success {
                        if let (Some(addr), ExitReason::Return) = (frame.deploy_address, reason) {
                            self.world.account_mut(addr).code = ret.clone();
                        }
                    } else {
                        self.world.accounts = frame.snapshot.clone();
                    }

                    let kind = frame.kind;
                    let ret_region = frame.ret_region;
                    let deploy_address = frame.deploy_address;
                    let mut node = frame.into_node(reason, ret.clone());

                    let Some(parent) = self.frames.last_mut() else {
                        let failed = !success;
                        return Ok((node, failed, ret, if success { gas_left } else { 0 }));
                    };

                    // Unused gas returns to the caller except on
                    // exceptional halts, which consume everything.
                    if success || reason == ExitReason::Revert {
                        parent.gas += gas_left;
                    }

                    let result_word = if kind.is_create() {
                        if success {
                            address_to_word(deploy_address.expect("create frame has address"))
                        } else {
                            Word::zero()
                        }
                    } else if success {
                        Word::one()
                    } else {
                        Word::zero()
                    };
                    // The node records the address the trace will show the
                    // parser: the word pushed onto the caller's stack.
                    if kind.is_create() {
                        let addr = word_to_address(result_word);
                        node.code_address = addr;
                        node.storage_address = addr;
                    }
                    parent.stack.push(result_word);

                    parent.returndata = if kind.is_create() {
                        if reason == ExitReason::Revert {
                            ret.clone()
                        } else {
                            Vec::new()
                        }
                    } else {
                        ret.clone()
                    };
                    if !kind.is_create() {
                        if let Some((off, len)) = ret_region {
                            let n = (ret.len() as u64).min(len);
                            write_memory(&mut parent.memory, off, &ret[..n as usize])?;
                        }
                    }
                    parent.children.push(node);
                }
            }
        }
    }

    /// Execute one instruction of the top frame.
    fn step(&mut self) -> Result<Step, OracleError> {
        let index = self.entries.len();
        let depth = self.frames.len() as u32;
        let frame = self.frames.last_mut().expect("step with no frame");
        frame.last_index = index;
        let byte = frame.code.get(frame.pc).copied().unwrap_or(0);
        let name = opcode_name(byte).ok_or(OracleError::UnsupportedInstruction {
            pc: frame.pc,
            byte,
        })?;
        if !supported(byte, &name) {
            return Err(OracleError::UnsupportedInstruction {
                pc: frame.pc,
                byte,
            });
        }

        let (pops, pushes) = crate::opcode::stack_arity(&name).expect("supported ops have arity");
        if frame.stack.len() < pops {
            return Err(OracleError::StackUnderflow {
                pc: frame.pc,
                op: name,
            });
        }
        let peek = |n: usize| -> Word { frame.stack[frame.stack.len() - 1 - n] };
        let as_u64 = |w: Word| -> u64 {
            if w > Word::from(u64::MAX) {
                u64::MAX
            } else {
                w.as_u64()
            }
        };

        // Instruction cost under the flat model.
        let cost = match name.as_str() {
            "SSTORE" => 100,
            "SHA3" => {
                let len = as_u64(peek(1));
                30 + 6 * len.div_ceil(32)
            }
            "CALL" | "CALLCODE" | "STATICCALL" | "DELEGATECALL" | "CREATE" | "CREATE2" => 100,
            _ => 1,
        };

        // Exceptional halts mark the offending entry with an error string
        // and consume the frame.
        let mut halt: Option<(ExitReason, &'static str)> = None;
        if cost > frame.gas {
            halt = Some((ExitReason::OutOfGas, "out of gas"));
        } else if matches!(name.as_str(), "JUMP" | "JUMPI") {
            let dest = peek(0);
            let taken = name == "JUMP" || !peek(1).is_zero();
            let valid = dest < Word::from(frame.code.len())
                && frame.code[dest.as_usize()] == 0x5b;
            if taken && !valid {
                halt = Some((ExitReason::Invalid, "invalid jump destination"));
            }
        } else if frame.is_static
            && (matches!(
                name.as_str(),
                "SSTORE" | "CREATE" | "CREATE2" | "SELFDESTRUCT" | "LOG0" | "LOG1" | "LOG2"
            ) || (name == "CALL" && !peek(2).is_zero()))
        {
            halt = Some((ExitReason::Invalid, "write protection"));
        } else if frame.stack.len() + pushes > STACK_LIMIT + pops {
            halt = Some((ExitReason::Invalid, "stack limit reached"));
        }

        // Emit the entry (pre-execution stack/memory, gas before cost).
        let entry = StructLogEntry {
            pc: frame.pc as u64,
            op: name.clone(),
            gas: frame.gas,
            gas_cost: cost,
            depth,
            stack: frame.stack.clone(),
            memory: if self.capture_memory {
                Some(memory_words(&frame.memory))
            } else {
                None
            },
            error: halt.map(|(_, msg)| msg.to_string()),
        };
        self.entries.push(entry);

        if let Some((reason, _)) = halt {
            // Storage/sha3 events stay observable on the aborted entry;
            // the parser counts them, so the ground truth must too.
            match name.as_str() {
                "SLOAD" => frame.storage_events.push(StorageAccessEvent {
                    kind: StorageAccessKind::Load,
                    raw_slot: peek(0),
                    value: Word::zero(),
                    instruction_index: index,
                    rolled_back: false,
                    decoded: None,
                }),
                "SSTORE" => frame.storage_events.push(StorageAccessEvent {
                    kind: StorageAccessKind::Store,
                    raw_slot: peek(0),
                    value: peek(1),
                    instruction_index: index,
                    rolled_back: false,
                    decoded: None,
                }),
                "SHA3" => {
                    let off = as_u64(peek(0));
                    let len = as_u64(peek(1));
                    let input = read_memory(&mut frame.memory, off, len)?;
                    let output = word_from_bytes(keccak256(&input).as_bytes());
                    frame.sha3_events.push(Sha3Record {
                        input,
                        output,
                        instruction_index: index,
                    });
                }
                _ => {}
            }
            frame.gas = 0;
            return Ok(Step::Exit(reason, Vec::new()));
        }

        frame.gas -= cost;
        self.exec(byte, name, index)
    }

    /// Instruction semantics, after emission and gas accounting.
    fn exec(&mut self, byte: u8, name: String, index: usize) -> Result<Step, OracleError> {
        let timestamp = self.timestamp;
        let block_number = self.block_number;
        let origin = self.origin;
        let frame = self.frames.last_mut().expect("exec with no frame");
        let as_u64 = |w: Word| -> u64 {
            if w > Word::from(u64::MAX) {
                u64::MAX
            } else {
                w.as_u64()
            }
        };

        // PUSH/DUP/SWAP families first.
        if (0x60..=0x7f).contains(&byte) {
            let width = immediate_len(byte);
            let mut buf = [0u8; 32];
            for k in 0..width {
                buf[32 - width + k] = frame.code.get(frame.pc + 1 + k).copied().unwrap_or(0);
            }
            frame.stack.push(Word::from_big_endian(&buf));
            frame.pc += 1 + width;
            return Ok(Step::Continue);
        }
        if (0x80..=0x8f).contains(&byte) {
            let n = (byte - 0x80) as usize;
            let v = frame.stack[frame.stack.len() - 1 - n];
            frame.stack.push(v);
            frame.pc += 1;
            return Ok(Step::Continue);
        }
        if (0x90..=0x9f).contains(&byte) {
            let n = (byte - 0x90) as usize + 1;
            let top = frame.stack.len() - 1;
            frame.stack.swap(top, top - n);
            frame.pc += 1;
            return Ok(Step::Continue);
        }

        let mut pop = || frame.stack.pop().expect("arity checked");
        match name.as_str() {
            "STOP" => return Ok(Step::Exit(ExitReason::Stop, Vec::new())),
            "INVALID" => {
                frame.gas = 0;
                return Ok(Step::Exit(ExitReason::Invalid, Vec::new()));
            }
            "RETURN" | "REVERT" => {
                let off = as_u64(pop());
                let len = as_u64(pop());
                let data = read_memory(&mut frame.memory, off, len)?;
                let reason = if name == "RETURN" {
                    ExitReason::Return
                } else {
                    ExitReason::Revert
                };
                return Ok(Step::Exit(reason, data));
            }
            "SELFDESTRUCT" => {
                let beneficiary = word_to_address(pop());
                let balance = self.world.balance(frame.exec_address);
                self.world.transfer(frame.exec_address, beneficiary, balance);
                return Ok(Step::Exit(ExitReason::Selfdestruct, Vec::new()));
            }
            "POP" => {
                pop();
            }
            "ADD" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(a.overflowing_add(b).0);
            }
            "SUB" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(a.overflowing_sub(b).0);
            }
            "MUL" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(a.overflowing_mul(b).0);
            }
            "DIV" => {
                let (a, b) = (pop(), pop());
                frame
                    .stack
                    .push(if b.is_zero() { Word::zero() } else { a / b });
            }
            "LT" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(Word::from((a < b) as u64));
            }
            "GT" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(Word::from((a > b) as u64));
            }
            "EQ" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(Word::from((a == b) as u64));
            }
            "ISZERO" => {
                let a = pop();
                frame.stack.push(Word::from(a.is_zero() as u64));
            }
            "AND" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(a & b);
            }
            "OR" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(a | b);
            }
            "XOR" => {
                let (a, b) = (pop(), pop());
                frame.stack.push(a ^ b);
            }
            "NOT" => {
                let a = pop();
                frame.stack.push(!a);
            }
            "SHA3" => {
                let off = as_u64(pop());
                let len = as_u64(pop());
                let input = read_memory(&mut frame.memory, off, len)?;
                let output = word_from_bytes(keccak256(&input).as_bytes());
                frame.sha3_events.push(Sha3Record {
                    input,
                    output,
                    instruction_index: index,
                });
                frame.stack.push(output);
            }
            "MLOAD" => {
                let off = as_u64(pop());
                let data = read_memory(&mut frame.memory, off, 32)?;
                frame.stack.push(word_from_bytes(&data));
            }
            "MSTORE" => {
                let off = as_u64(pop());
                let value = pop();
                write_memory(&mut frame.memory, off, &word_to_bytes32(value))?;
            }
            "CALLDATALOAD" => {
                let off = as_u64(pop());
                let mut buf = [0u8; 32];
                for k in 0..32 {
                    buf[k] = frame
                        .calldata
                        .get(off as usize + k)
                        .copied()
                        .unwrap_or(0);
                }
                frame.stack.push(Word::from_big_endian(&buf));
            }
            "CALLDATASIZE" => frame.stack.push(Word::from(frame.calldata.len())),
            "CALLDATACOPY" => {
                let dest = as_u64(pop());
                let src = as_u64(pop());
                let len = as_u64(pop());
                let mut bytes = vec![0u8; len.min(MEMORY_CAP) as usize];
                for (k, b) in bytes.iter_mut().enumerate() {
                    *b = frame.calldata.get(src as usize + k).copied().unwrap_or(0);
                }
                write_memory(&mut frame.memory, dest, &bytes)?;
            }
            "SLOAD" => {
                let slot = pop();
                let value = self.world.storage(frame.exec_address, slot);
                frame.storage_events.push(StorageAccessEvent {
                    kind: StorageAccessKind::Load,
                    raw_slot: slot,
                    value,
                    instruction_index: index,
                    rolled_back: false,
                    decoded: None,
                });
                frame.stack.push(value);
            }
            "SSTORE" => {
                let slot = pop();
                let value = pop();
                self.world.set_storage(frame.exec_address, slot, value);
                frame.storage_events.push(StorageAccessEvent {
                    kind: StorageAccessKind::Store,
                    raw_slot: slot,
                    value,
                    instruction_index: index,
                    rolled_back: false,
                    decoded: None,
                });
            }
            "CALLER" => frame.stack.push(address_to_word(frame.caller)),
            "ORIGIN" => frame.stack.push(address_to_word(origin)),
            "CALLVALUE" => frame.stack.push(frame.value),
            "TIMESTAMP" => frame.stack.push(Word::from(timestamp)),
            "NUMBER" => frame.stack.push(Word::from(block_number)),
            "GAS" => frame.stack.push(Word::from(frame.gas)),
            "JUMP" => {
                let dest = pop();
                frame.pc = dest.as_usize();
                return Ok(Step::Continue);
            }
            "JUMPI" => {
                let dest = pop();
                let cond = pop();
                if !cond.is_zero() {
                    frame.pc = dest.as_usize();
                    return Ok(Step::Continue);
                }
            }
            "JUMPDEST" => {}
            "PC" => frame.stack.push(Word::from(frame.pc)),
            "RETURNDATASIZE" => frame.stack.push(Word::from(frame.returndata.len())),
            "RETURNDATACOPY" => {
                let dest = as_u64(pop());
                let src = as_u64(pop());
                let len = as_u64(pop());
                if src + len > frame.returndata.len() as u64 {
                    frame.gas = 0;
                    // Geth reports this as its own error kind; any
                    // non-gas error string parses as an invalid halt.
                    if let Some(e) = self.entries.last_mut() {
                        e.error = Some("return data out of bounds".into());
                    }
                    return Ok(Step::Exit(ExitReason::Invalid, Vec::new()));
                }
                let bytes = frame.returndata[src as usize..(src + len) as usize].to_vec();
                write_memory(&mut frame.memory, dest, &bytes)?;
            }
            "LOG0" | "LOG1" | "LOG2" => {
                let _off = pop();
                let _len = pop();
                for _ in 0..(byte - 0xa0) {
                    pop();
                }
            }
            "CALL" | "CALLCODE" | "STATICCALL" | "DELEGATECALL" | "CREATE" | "CREATE2" => {
                frame.pc += 1;
                return self.enter_call(&name, index);
            }
            other => {
                return Err(OracleError::UnsupportedInstruction {
                    pc: frame.pc,
                    byte: crate::opcode::opcode_byte(other).unwrap_or(0xfe),
                })
            }
        }
        frame.pc += 1;
        Ok(Step::Continue)
    }

    /// Call-family semantics: either a new frame or an immediate
    /// synthetic result for code-less callees and failed transfers.
    fn enter_call(&mut self, name: &str, index: usize) -> Result<Step, OracleError> {
        let frame = self.frames.last_mut().expect("call with no frame");
        let as_u64 = |w: Word| -> u64 {
            if w > Word::from(u64::MAX) {
                u64::MAX
            } else {
                w.as_u64()
            }
        };
        let mut pop = || frame.stack.pop().expect("arity checked");

        let kind = match name {
            "CALL" => CallKind::Call,
            "CALLCODE" => CallKind::Callcode,
            "STATICCALL" => CallKind::Staticcall,
            "DELEGATECALL" => CallKind::Delegatecall,
            "CREATE" => CallKind::Create,
            "CREATE2" => CallKind::Create2,
            _ => unreachable!(),
        };

        if kind.is_create() {
            let value = pop();
            let off = as_u64(pop());
            let len = as_u64(pop());
            let salt = if kind == CallKind::Create2 {
                Some(pop())
            } else {
                None
            };
            let initcode = read_memory(&mut frame.memory, off, len)?;
            let creator = frame.exec_address;
            let nonce = self.world.account_mut(creator).nonce;
            self.world.account_mut(creator).nonce += 1;
            let created = match salt {
                None => create_address(creator, nonce),
                Some(salt) => create2_address(creator, salt, &initcode),
            };

            if self.world.balance(creator) < value {
                frame.stack.push(Word::zero());
                frame.returndata = Vec::new();
                frame.children.push(synthetic_node(
                    kind,
                    frame.caller,
                    frame.exec_address,
                    frame.value,
                    None,
                    Word::zero(),
                    value,
                    0,
                    initcode,
                    index,
                    false,
                ));
                return Ok(Step::Continue);
            }

            let forwarded = frame.gas;
            frame.gas = 0;
            let snapshot = self.world.accounts.clone();
            self.world.account_mut(created).nonce = 1;
            self.world.transfer(creator, created, value);

            if initcode.is_empty() {
                // Nothing executes: an account with empty code appears
                // and the address lands on the stack; no sub-trace.
                frame.gas = forwarded;
                frame.stack.push(address_to_word(created));
                frame.returndata = Vec::new();
                frame.children.push(synthetic_node(
                    kind,
                    frame.caller,
                    frame.exec_address,
                    frame.value,
                    None,
                    address_to_word(created),
                    value,
                    0,
                    initcode,
                    index,
                    true,
                ));
                return Ok(Step::Continue);
            }

            let child = Frame {
                kind,
                caller: frame.exec_address,
                node_code_address: created,
                node_storage_address: created,
                exec_address: created,
                value,
                code: initcode.clone(),
                calldata: initcode,
                pc: 0,
                stack: Vec::new(),
                memory: Vec::new(),
                gas: forwarded,
                gas_at_entry: forwarded,
                returndata: Vec::new(),
                is_static: frame.is_static,
                entry_index: index + 1,
                last_index: index + 1,
                children: Vec::new(),
                storage_events: Vec::new(),
                sha3_events: Vec::new(),
                snapshot,
                ret_region: None,
                deploy_address: Some(created),
                is_creation_root: false,
            };
            return Ok(Step::Enter(Box::new(child)));
        }

        // CALL / CALLCODE / STATICCALL / DELEGATECALL
        let gas_requested = as_u64(pop());
        let target = word_to_address(pop());
        let value = if matches!(kind, CallKind::Call | CallKind::Callcode) {
            pop()
        } else {
            Word::zero()
        };
        let args_off = as_u64(pop());
        let args_len = as_u64(pop());
        let ret_off = as_u64(pop());
        let ret_len = as_u64(pop());
        let calldata = read_memory(&mut frame.memory, args_off, args_len)?;

        let (child_caller, child_value, code_addr, storage_addr) = match kind {
            CallKind::Call | CallKind::Staticcall => {
                (frame.exec_address, value, target, target)
            }
            CallKind::Callcode => (frame.exec_address, value, target, frame.exec_address),
            CallKind::Delegatecall => (frame.caller, frame.value, target, frame.exec_address),
            _ => unreachable!(),
        };

        let transfers_value = kind == CallKind::Call && !value.is_zero();
        if transfers_value && self.world.balance(frame.exec_address) < value {
            frame.stack.push(Word::zero());
            frame.returndata = Vec::new();
            frame.children.push(synthetic_node(
                kind,
                frame.caller,
                frame.exec_address,
                frame.value,
                Some(target),
                Word::zero(),
                value,
                gas_requested,
                calldata,
                index,
                false,
            ));
            return Ok(Step::Continue);
        }

        let code = self.world.code(code_addr);
        if code.is_empty() {
            if transfers_value {
                self.world.transfer(frame.exec_address, target, value);
            }
            frame.stack.push(Word::one());
            frame.returndata = Vec::new();
            frame.children.push(synthetic_node(
                kind,
                frame.caller,
                frame.exec_address,
                frame.value,
                Some(target),
                Word::one(),
                value,
                gas_requested,
                calldata,
                index,
                true,
            ));
            return Ok(Step::Continue);
        }

        let forwarded = gas_requested.min(frame.gas);
        frame.gas -= forwarded;
        let snapshot = self.world.accounts.clone();
        if transfers_value {
            self.world.transfer(frame.exec_address, target, value);
        }

        let child = Frame {
            kind,
            caller: child_caller,
            node_code_address: code_addr,
            node_storage_address: storage_addr,
            exec_address: storage_addr,
            value: child_value,
            code,
            calldata,
            pc: 0,
            stack: Vec::new(),
            memory: Vec::new(),
            gas: forwarded,
            gas_at_entry: forwarded,
            returndata: Vec::new(),
            is_static: frame.is_static || kind == CallKind::Staticcall,
            entry_index: index + 1,
            last_index: index + 1,
            children: Vec::new(),
            storage_events: Vec::new(),
            sha3_events: Vec::new(),
            snapshot,
            ret_region: Some((ret_off, ret_len)),
            deploy_address: None,
            is_creation_root: false,
        };
        Ok(Step::Enter(Box::new(child)))
    }
}

/// Node for a call that produced no sub-trace, mirroring exactly what the
/// parser reconstructs from the caller's stack.
#[allow(clippy::too_many_arguments)]
fn synthetic_node(
    kind: CallKind,
    parent_caller: Address,
    parent_exec: Address,
    parent_value: Word,
    target: Option<Address>,
    result_word: Word,
    value: Word,
    gas_requested: u64,
    calldata: Vec<u8>,
    index: usize,
    success: bool,
) -> InvocationNode {
    let (code_address, storage_address) = match target {
        Some(t) => (t, t),
        None => {
            let a = word_to_address(result_word);
            (a, a)
        }
    };
    let (caller, value) = match kind {
        CallKind::Delegatecall => (parent_caller, parent_value),
        _ => (parent_exec, value),
    };
    InvocationNode {
        call_kind: kind,
        caller,
        code_address,
        storage_address,
        value,
        gas_at_entry: if kind.is_create() { 0 } else { gas_requested },
        gas_used: 0,
        selector: if kind.is_create() {
            None
        } else {
            Selector::from_calldata(&calldata)
        },
        calldata,
        return_data: Vec::new(),
        exit_reason: if success {
            ExitReason::Stop
        } else {
            ExitReason::Revert
        },
        children: Vec::new(),
        storage_events: Vec::new(),
        sha3_events: Vec::new(),
        entry_index: index,
        exit_index: index,
    }
}

fn empty_root_node(meta: &TransactionMeta, to: Address) -> InvocationNode {
    InvocationNode {
        call_kind: CallKind::Root,
        caller: meta.origin,
        code_address: to,
        storage_address: to,
        value: meta.value,
        gas_at_entry: meta.gas_limit,
        gas_used: 0,
        calldata: meta.input.clone(),
        return_data: Vec::new(),
        selector: Selector::from_calldata(&meta.input),
        exit_reason: ExitReason::Stop,
        children: Vec::new(),
        storage_events: Vec::new(),
        sha3_events: Vec::new(),
        entry_index: 0,
        exit_index: 0,
    }
}

/// Creation address: low 20 bytes of keccak(creator ++ nonce).
pub fn create_address(creator: Address, nonce: u64) -> Address {
    let mut buf = Vec::with_capacity(28);
    buf.extend_from_slice(creator.as_bytes());
    buf.extend_from_slice(&nonce.to_be_bytes());
    word_to_address(word_from_bytes(keccak256(&buf).as_bytes()))
}

/// CREATE2 address: keccak(0xff ++ creator ++ salt ++ keccak(initcode)).
pub fn create2_address(creator: Address, salt: Word, initcode: &[u8]) -> Address {
    let mut buf = Vec::with_capacity(85);
    buf.push(0xff);
    buf.extend_from_slice(creator.as_bytes());
    buf.extend_from_slice(&word_to_bytes32(salt));
    buf.extend_from_slice(keccak256(initcode).as_bytes());
    word_to_address(word_from_bytes(keccak256(&buf).as_bytes()))
}

fn read_memory(memory: &mut Vec<u8>, offset: u64, len: u64) -> Result<Vec<u8>, OracleError> {
    if len == 0 {
        return Ok(Vec::new());
    }
    if offset >= MEMORY_CAP || len > MEMORY_CAP || offset + len > MEMORY_CAP {
        return Err(OracleError::MemoryBound { offset, len });
    }
    let end = (offset + len) as usize;
    if memory.len() < end {
        memory.resize(end.div_ceil(32) * 32, 0);
    }
    Ok(memory[offset as usize..end].to_vec())
}

fn write_memory(memory: &mut Vec<u8>, offset: u64, bytes: &[u8]) -> Result<(), OracleError> {
    if bytes.is_empty() {
        return Ok(());
    }
    let len = bytes.len() as u64;
    if offset >= MEMORY_CAP || offset + len > MEMORY_CAP {
        return Err(OracleError::MemoryBound { offset, len });
    }
    let end = (offset + len) as usize;
    if memory.len() < end {
        memory.resize(end.div_ceil(32) * 32, 0);
    }
    memory[offset as usize..end].copy_from_slice(bytes);
    Ok(())
}

fn memory_words(memory: &[u8]) -> Vec<String> {
    memory
        .chunks(32)
        .map(|chunk| {
            let mut word = [0u8; 32];
            word[..chunk.len()].copy_from_slice(chunk);
            hex::encode(word)
        })
        .collect()
}
