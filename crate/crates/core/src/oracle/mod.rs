//! A minimal synthetic EVM over a mock world state.
//!
//! Executes hand-written bytecode programs and emits structLog sequences
//! schema-identical to the ingestion module's accepted format, together
//! with the ground-truth invocation tree and storage events for the same
//! execution. The parser, decoder, and dataflow suites all test against
//! this oracle.

mod asm;
pub mod corpus;
mod machine;

pub use asm::{assemble, AsmError};
pub use corpus::{corpus, CorpusCase};
pub use machine::{create2_address, create_address};

use std::collections::BTreeMap;

use crate::ingest::{RawTrace, TransactionMeta, TxStatus};
use crate::parser::{InvocationNode, StorageAccessEvent};
use crate::primitives::{Address, Hash32, Word};

/// State of one account in the mock world.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccountState {
    pub code: Vec<u8>,
    pub storage: BTreeMap<Word, Word>,
    pub balance: Word,
    pub nonce: u64,
}

/// The world a program executes against. Executions mutate only the
/// accounts they touch.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockWorld {
    pub accounts: BTreeMap<Address, AccountState>,
}

impl MockWorld {
    pub fn new() -> Self {
        MockWorld::default()
    }

    pub fn account_mut(&mut self, address: Address) -> &mut AccountState {
        self.accounts.entry(address).or_default()
    }

    /// Install assembled code at an address.
    pub fn deploy(&mut self, address: Address, code: Vec<u8>) {
        self.account_mut(address).code = code;
    }

    /// Assemble program text and install it at an address.
    pub fn deploy_program(&mut self, address: Address, asm_text: &str) -> Result<(), AsmError> {
        let code = assemble(asm_text)?;
        self.deploy(address, code);
        Ok(())
    }

    pub fn set_balance(&mut self, address: Address, balance: Word) {
        self.account_mut(address).balance = balance;
    }

    pub fn set_storage(&mut self, address: Address, slot: Word, value: Word) {
        self.account_mut(address).storage.insert(slot, value);
    }

    pub fn code(&self, address: Address) -> Vec<u8> {
        self.accounts
            .get(&address)
            .map(|a| a.code.clone())
            .unwrap_or_default()
    }

    pub fn balance(&self, address: Address) -> Word {
        self.accounts
            .get(&address)
            .map(|a| a.balance)
            .unwrap_or_default()
    }

    pub fn storage(&self, address: Address, slot: Word) -> Word {
        self.accounts
            .get(&address)
            .and_then(|a| a.storage.get(&slot).copied())
            .unwrap_or_default()
    }

    pub fn transfer(&mut self, from: Address, to: Address, value: Word) {
        if value.is_zero() {
            return;
        }
        let from_balance = self.balance(from);
        self.account_mut(from).balance = from_balance.saturating_sub(value);
        let to_balance = self.balance(to);
        self.account_mut(to).balance = to_balance.overflowing_add(value).0;
    }
}

/// What one execution produced: the trace plus the expected parser
/// output for it.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub trace: RawTrace,
    /// The invocation tree the parser must reconstruct.
    pub tree: InvocationNode,
    /// All storage events in trace order, raw slots only.
    pub storage_events: Vec<StorageAccessEvent>,
    pub gas_used: u64,
    pub succeeded: bool,
}

impl GroundTruth {
    /// Transaction metadata consistent with this execution's outcome.
    pub fn meta_with_outcome(&self, request: &TransactionMeta) -> TransactionMeta {
        let mut meta = request.clone();
        meta.gas_used = self.gas_used;
        meta.status = if self.succeeded {
            TxStatus::Success
        } else {
            TxStatus::Reverted
        };
        meta
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("unsupported instruction 0x{byte:02x} at pc {pc}")]
    UnsupportedInstruction { pc: usize, byte: u8 },
    #[error("stack underflow at pc {pc} executing {op}")]
    StackUnderflow { pc: usize, op: String },
    #[error("memory access beyond cap: offset {offset} len {len}")]
    MemoryBound { offset: u64, len: u64 },
    #[error("origin {address:?} cannot cover the transaction value")]
    InsufficientBalance { address: Address },
    #[error(transparent)]
    Asm(#[from] AsmError),
}

/// Execute a transaction against the world. The trace captures the stack
/// always and memory only when `capture_memory` is set, mirroring the
/// tracer configuration the ingestion layer requests.
pub fn execute(
    world: &mut MockWorld,
    meta: &TransactionMeta,
    capture_memory: bool,
) -> Result<GroundTruth, OracleError> {
    machine::Machine::new(world, meta, capture_memory).execute(meta)
}

/// Convenience: a metadata skeleton for oracle transactions.
pub fn meta_for(
    tx_seed: u8,
    origin: Address,
    to: Option<Address>,
    input: Vec<u8>,
    gas_limit: u64,
) -> TransactionMeta {
    TransactionMeta {
        tx_hash: Hash32::repeat_byte(tx_seed),
        block_number: 1,
        origin,
        to,
        value: Word::zero(),
        input,
        gas_limit,
        gas_used: 0,
        status: TxStatus::Success,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{CallKind, ExitReason, StorageAccessKind};

    fn addr(b: u8) -> Address {
        Address::repeat_byte(b)
    }

    fn run(world: &mut MockWorld, to: Address, gas: u64) -> GroundTruth {
        let meta = meta_for(1, addr(0xee), Some(to), vec![], gas);
        execute(world, &meta, false).unwrap()
    }

    #[test]
    fn three_instruction_return_program() {
        // PUSH1 0, PUSH1 0, RETURN: three entries, a lone root node.
        let mut world = MockWorld::new();
        world
            .deploy_program(addr(2), "PUSH1 0\nPUSH1 0\nRETURN\n")
            .unwrap();
        let gt = run(&mut world, addr(2), 1000);
        assert_eq!(gt.trace.entries.len(), 3);
        assert_eq!(gt.tree.node_count(), 1);
        assert_eq!(gt.tree.exit_reason, ExitReason::Return);
        assert!(gt.succeeded);
        assert_eq!(gt.gas_used, 3);
    }

    #[test]
    fn sstore_records_single_event() {
        let mut world = MockWorld::new();
        world
            .deploy_program(addr(2), "PUSH1 7\nPUSH1 5\nSSTORE\nSTOP\n")
            .unwrap();
        let gt = run(&mut world, addr(2), 1000);
        assert_eq!(gt.storage_events.len(), 1);
        let ev = &gt.storage_events[0];
        assert_eq!(ev.kind, StorageAccessKind::Store);
        assert_eq!(ev.raw_slot, Word::from(5u64));
        assert_eq!(ev.value, Word::from(7u64));
        assert!(!ev.rolled_back);
        assert_eq!(world.storage(addr(2), Word::from(5u64)), Word::from(7u64));
    }

    #[test]
    fn callee_revert_pushes_zero_and_rolls_back() {
        // Callee stores then reverts; root continues and stops.
        let mut world = MockWorld::new();
        world
            .deploy_program(
                addr(3),
                "PUSH1 1\nPUSH1 0\nSSTORE\nPUSH1 0\nPUSH1 0\nREVERT\n",
            )
            .unwrap();
        world
            .deploy_program(
                addr(2),
                // CALL(gas=200, addr(3), value 0, in 0/0, out 0/0)
                "PUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH20 0x0303030303030303030303030303030303030303\nPUSH1 200\nCALL\nPOP\nSTOP\n",
            )
            .unwrap();
        let gt = run(&mut world, addr(2), 10_000);
        assert_eq!(gt.tree.children.len(), 1);
        let child = &gt.tree.children[0];
        assert_eq!(child.call_kind, CallKind::Call);
        assert_eq!(child.exit_reason, ExitReason::Revert);
        assert_eq!(child.code_address, addr(3));
        // The store inside the reverted frame is rolled back.
        assert_eq!(gt.storage_events.len(), 1);
        assert!(gt.storage_events[0].rolled_back);
        assert_eq!(world.storage(addr(3), Word::zero()), Word::zero());
        // Root sees 0 pushed as the call result: find the POP entry's stack.
        let pop_entry = gt
            .trace
            .entries
            .iter()
            .find(|e| e.op == "POP")
            .expect("POP entry");
        assert_eq!(pop_entry.stack.last(), Some(&Word::zero()));
        assert!(gt.succeeded);
    }

    #[test]
    fn gas_monotone_within_frames() {
        let mut world = MockWorld::new();
        world
            .deploy_program(
                addr(3),
                "PUSH1 1\nPUSH1 0\nSSTORE\nPUSH1 0\nPUSH1 0\nRETURN\n",
            )
            .unwrap();
        world
            .deploy_program(
                addr(2),
                "PUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH20 0x0303030303030303030303030303030303030303\nPUSH2 500\nCALL\nPOP\nSTOP\n",
            )
            .unwrap();
        let gt = run(&mut world, addr(2), 10_000);
        let mut last_per_depth: BTreeMap<u32, u64> = BTreeMap::new();
        for e in &gt.trace.entries {
            if let Some(prev) = last_per_depth.get(&e.depth) {
                assert!(e.gas <= *prev, "gas increased within frame at pc {}", e.pc);
            }
            last_per_depth.insert(e.depth, e.gas);
        }
    }

    #[test]
    fn depth_steps_by_one_into_callee() {
        let mut world = MockWorld::new();
        world.deploy_program(addr(3), "STOP\n").unwrap();
        world
            .deploy_program(
                addr(2),
                "PUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH20 0x0303030303030303030303030303030303030303\nPUSH1 100\nCALL\nPOP\nSTOP\n",
            )
            .unwrap();
        let gt = run(&mut world, addr(2), 10_000);
        for pair in gt.trace.entries.windows(2) {
            let jump = pair[1].depth as i64 - pair[0].depth as i64;
            assert!(jump <= 1, "depth jumped by more than one");
        }
        let call_idx = gt.trace.entries.iter().position(|e| e.op == "CALL").unwrap();
        assert_eq!(gt.trace.entries[call_idx + 1].depth, 2);
    }

    #[test]
    fn out_of_gas_marks_error_and_consumes_frame() {
        let mut world = MockWorld::new();
        // SSTORE costs 100; budget of 150 covers the pushes, not the store.
        world
            .deploy_program(addr(3), "PUSH1 1\nPUSH1 0\nSSTORE\nSTOP\n")
            .unwrap();
        world
            .deploy_program(
                addr(2),
                "PUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH20 0x0303030303030303030303030303030303030303\nPUSH1 60\nCALL\nPOP\nSTOP\n",
            )
            .unwrap();
        let gt = run(&mut world, addr(2), 10_000);
        let child = &gt.tree.children[0];
        assert_eq!(child.exit_reason, ExitReason::OutOfGas);
        let oog_entry = &gt.trace.entries[child.exit_index];
        assert_eq!(oog_entry.error.as_deref(), Some("out of gas"));
        // The attempted store is recorded and rolled back.
        assert_eq!(child.storage_events.len(), 1);
        assert!(gt.storage_events[0].rolled_back);
    }

    #[test]
    fn codeless_callee_becomes_synthetic_leaf() {
        let mut world = MockWorld::new();
        world
            .deploy_program(
                addr(2),
                "PUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH20 0x0909090909090909090909090909090909090909\nPUSH1 100\nCALL\nPOP\nSTOP\n",
            )
            .unwrap();
        let gt = run(&mut world, addr(2), 10_000);
        assert_eq!(gt.tree.children.len(), 1);
        let leaf = &gt.tree.children[0];
        assert_eq!(leaf.entry_index, leaf.exit_index);
        assert_eq!(leaf.exit_reason, ExitReason::Stop);
        assert_eq!(leaf.gas_at_entry, 100);
        // No extra depth-2 entries exist.
        assert!(gt.trace.entries.iter().all(|e| e.depth == 1));
    }

    #[test]
    fn delegatecall_keeps_storage_context() {
        let mut world = MockWorld::new();
        world
            .deploy_program(addr(3), "PUSH1 9\nPUSH1 4\nSSTORE\nSTOP\n")
            .unwrap();
        world
            .deploy_program(
                addr(2),
                "PUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH20 0x0303030303030303030303030303030303030303\nPUSH2 400\nDELEGATECALL\nPOP\nSTOP\n",
            )
            .unwrap();
        let gt = run(&mut world, addr(2), 10_000);
        let child = &gt.tree.children[0];
        assert_eq!(child.call_kind, CallKind::Delegatecall);
        assert_eq!(child.code_address, addr(3));
        assert_eq!(child.storage_address, addr(2));
        assert_eq!(child.caller, addr(0xee));
        // The write landed in the caller's storage.
        assert_eq!(world.storage(addr(2), Word::from(4u64)), Word::from(9u64));
        assert_eq!(world.storage(addr(3), Word::from(4u64)), Word::zero());
    }

    #[test]
    fn create_deploys_returned_code() {
        // Initcode: PUSH1 0x00 PUSH1 0x0c ... returns a 1-byte code "00"
        // Simpler: initcode returns 2 bytes of zeroes from memory.
        let mut world = MockWorld::new();
        // Store initcode in memory via MSTORE, then CREATE.
        // initcode = PUSH1 2, PUSH1 0, RETURN = 60 02 60 00 f3 (5 bytes)
        // Place it left-aligned in the word at offset 0:
        // word = 0x6002600f3... => easier: push the 5 bytes right-aligned
        // at offset 27.
        world
            .deploy_program(
                addr(2),
                // MSTORE(0, 0x60026000f3) puts the 5 initcode bytes at 27..32
                "PUSH5 0x60026000f3\nPUSH1 0\nMSTORE\nPUSH1 5\nPUSH1 27\nPUSH1 0\nCREATE\nPOP\nSTOP\n",
            )
            .unwrap();
        let gt = run(&mut world, addr(2), 10_000);
        let child = &gt.tree.children[0];
        assert_eq!(child.call_kind, CallKind::Create);
        assert_eq!(child.exit_reason, ExitReason::Return);
        assert!(child.selector.is_none());
        let created = child.code_address;
        assert_eq!(created, create_address(addr(2), 0));
        assert_eq!(world.code(created), vec![0, 0]);
        // The CREATE result is on the stack at the POP entry.
        let pop_entry = gt.trace.entries.iter().find(|e| e.op == "POP").unwrap();
        assert_eq!(
            pop_entry.stack.last().copied(),
            Some(crate::primitives::address_to_word(created))
        );
    }

    #[test]
    fn unsupported_instruction_is_loud() {
        let mut world = MockWorld::new();
        // BALANCE (0x31) is outside the supported subset.
        world.deploy(addr(2), vec![0x30, 0x31, 0x00]);
        let meta = meta_for(1, addr(0xee), Some(addr(2)), vec![], 1000);
        // ADDRESS (0x30) is also unsupported: error on the first byte.
        let err = execute(&mut world, &meta, false).unwrap_err();
        assert!(matches!(err, OracleError::UnsupportedInstruction { pc: 0, byte: 0x30 }));
    }

    #[test]
    fn schema_round_trips_through_ingest_serde() {
        let mut world = MockWorld::new();
        world
            .deploy_program(addr(2), "PUSH1 1\nPUSH1 2\nADD\nPOP\nSTOP\n")
            .unwrap();
        let gt = run(&mut world, addr(2), 1000);
        let json = serde_json::to_string(&gt.trace).unwrap();
        let back: RawTrace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, gt.trace);
    }

    #[test]
    fn memory_capture_emits_words() {
        let mut world = MockWorld::new();
        world
            .deploy_program(addr(2), "PUSH1 0xab\nPUSH1 0\nMSTORE\nSTOP\n")
            .unwrap();
        let meta = meta_for(1, addr(0xee), Some(addr(2)), vec![], 1000);
        let gt = execute(&mut world, &meta, true).unwrap();
        let stop = gt.trace.entries.last().unwrap();
        let mem = stop.memory.as_ref().unwrap();
        assert_eq!(mem.len(), 1);
        assert!(mem[0].ends_with("ab"));
        assert_eq!(stop.memory_bytes().unwrap()[31], 0xab);
    }

    #[test]
    fn untouched_accounts_stay_untouched() {
        let mut world = MockWorld::new();
        world
            .deploy_program(addr(2), "PUSH1 7\nPUSH1 5\nSSTORE\nSTOP\n")
            .unwrap();
        world.set_balance(addr(7), Word::from(123u64));
        world.set_storage(addr(7), Word::one(), Word::from(9u64));
        let before = world.accounts.get(&addr(7)).cloned();
        run(&mut world, addr(2), 1000);
        assert_eq!(world.accounts.get(&addr(7)).cloned(), before);
    }
}
