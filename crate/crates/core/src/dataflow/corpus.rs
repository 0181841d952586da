//! Reference taint corpus: small programs with hand-derived expected
//! flows, shared by the dataflow test suite and the acceptance suite.

use crate::dataflow::{shadow_execute, EnvOpcode, FlowFact, OperandRole, TaintSource};
use crate::ingest::{RawTrace, TransactionMeta};
use crate::oracle::{self, MockWorld};
use crate::parser::{build_invocation_tree, InvocationNode};
use crate::primitives::{Address, Word};

/// One taint program: a root contract, optional extra deployments, and
/// optional pre-seeded storage.
#[derive(Debug, Clone)]
pub struct TaintCase {
    pub name: &'static str,
    pub program: String,
    pub input: Vec<u8>,
    pub deployments: Vec<(Address, String)>,
    pub storage_seed: Vec<(Word, Word)>,
}

impl TaintCase {
    pub fn new(name: &'static str, program: impl Into<String>) -> Self {
        TaintCase {
            name,
            program: program.into(),
            input: selector_plus_word(Word::from(0x1234_5678u64)),
            deployments: Vec::new(),
            storage_seed: Vec::new(),
        }
    }
}

pub fn taint_origin() -> Address {
    Address::repeat_byte(0xee)
}

pub fn taint_contract() -> Address {
    Address::repeat_byte(0x02)
}

/// 4-byte selector followed by one 32-byte word.
pub fn selector_plus_word(w: Word) -> Vec<u8> {
    let mut input = vec![0xaa, 0xbb, 0xcc, 0xdd];
    input.extend_from_slice(&crate::primitives::word_to_bytes32(w));
    input
}

/// The whole-word calldata source every bound template keys off.
pub fn root_calldata_source() -> TaintSource {
    TaintSource::CalldataRange {
        frame: 0,
        offset: 4,
        len: 32,
    }
}

/// Execute a case and shadow-run it under the given sources.
pub fn run_taint_case(
    case: &TaintCase,
    sources: &[TaintSource],
) -> (TransactionMeta, RawTrace, InvocationNode, Vec<FlowFact>) {
    let mut world = MockWorld::new();
    world.set_balance(taint_origin(), Word::from(1u64) << 96);
    world.set_balance(taint_contract(), Word::from(1u64) << 64);
    world
        .deploy_program(taint_contract(), &case.program)
        .unwrap_or_else(|e| panic!("case {}: {e}", case.name));
    for (slot, value) in &case.storage_seed {
        world.set_storage(taint_contract(), *slot, *value);
    }
    for (addr, program) in &case.deployments {
        world.deploy_program(*addr, program).unwrap();
    }
    let meta = oracle::meta_for(7, taint_origin(), Some(taint_contract()), case.input.clone(), 100_000);
    let gt = oracle::execute(&mut world, &meta, false).expect("taint case executes");
    let meta = gt.meta_with_outcome(&meta);
    let tree = build_invocation_tree(&meta, &gt.trace).expect("taint case parses");
    let (_, facts) = shadow_execute(&meta, &gt.trace, &tree, sources).expect("shadow runs");
    (meta, gt.trace, tree, facts)
}

/// The corpus: each entry is (case, sources, expected (sink, role) pairs
/// in emission order).
pub fn taint_corpus() -> Vec<(TaintCase, Vec<TaintSource>, Vec<(&'static str, OperandRole)>)> {
    let callee = Address::repeat_byte(0x0a);
    let mut cases = Vec::new();

    // Memory round trip: calldata -> MSTORE -> MLOAD -> SSTORE.
    cases.push((
        TaintCase::new(
            "memory_roundtrip",
            "PUSH1 4\nCALLDATALOAD\nPUSH1 64\nMSTORE\nPUSH1 64\nMLOAD\nPUSH1 1\nSSTORE\nSTOP\n",
        ),
        vec![root_calldata_source()],
        vec![("SSTORE", OperandRole::Value)],
    ));

    // Taint survives arithmetic.
    cases.push((
        TaintCase::new(
            "arith_mix",
            "PUSH1 4\nCALLDATALOAD\nPUSH1 5\nADD\nPUSH1 2\nSSTORE\nSTOP\n",
        ),
        vec![root_calldata_source()],
        vec![("SSTORE", OperandRole::Value)],
    ));

    // Precision: the unrelated constant store emits nothing.
    cases.push((
        TaintCase::new(
            "untainted_sibling",
            "PUSH1 4\nCALLDATALOAD\nPUSH1 0\nSSTORE\nPUSH1 7\nPUSH1 1\nSSTORE\nSTOP\n",
        ),
        vec![root_calldata_source()],
        vec![("SSTORE", OperandRole::Value)],
    ));

    // Storage-slot source: load seeded slot 5, store to slot 6.
    {
        let mut case = TaintCase::new(
            "storage_slot_source",
            "PUSH1 5\nSLOAD\nPUSH1 6\nSSTORE\nSTOP\n",
        );
        case.storage_seed = vec![(Word::from(5u64), Word::from(9u64))];
        cases.push((
            case,
            vec![TaintSource::StorageSlot {
                address: taint_contract(),
                slot: Word::from(5u64),
            }],
            vec![("SSTORE", OperandRole::Value)],
        ));
    }

    // Env source reaching a branch condition.
    cases.push((
        TaintCase::new(
            "number_to_jumpi",
            "NUMBER\nPUSH1 5\nJUMPI\nSTOP\nJUMPDEST\nSTOP\n",
        ),
        vec![TaintSource::EnvOpcode {
            op: EnvOpcode::Number,
        }],
        vec![("JUMPI", OperandRole::Condition)],
    ));

    // Calldata flowing into a call's value operand (code-less callee).
    cases.push((
        TaintCase::new(
            "calldata_to_call_value",
            "PUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 4\nCALLDATALOAD\nPUSH20 0x0909090909090909090909090909090909090909\nPUSH2 500\nCALL\nPOP\nSTOP\n",
        ),
        vec![root_calldata_source()],
        vec![("CALL", OperandRole::Value)],
    ));

    // Calldata flowing into a delegatecall target.
    cases.push((
        TaintCase::new(
            "calldata_to_delegate_target",
            "PUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 0\nPUSH1 4\nCALLDATALOAD\nPUSH2 500\nDELEGATECALL\nPOP\nSTOP\n",
        ),
        vec![root_calldata_source()],
        vec![("DELEGATECALL", OperandRole::TargetAddress)],
    ));

    // SSTORE slot operand tainted through SHA3 over tainted memory.
    cases.push((
        TaintCase::new(
            "tainted_slot_via_sha3",
            "PUSH1 4\nCALLDATALOAD\nPUSH1 0\nMSTORE\nPUSH1 2\nPUSH1 32\nMSTORE\nPUSH1 1\nPUSH1 64\nPUSH1 0\nSHA3\nSSTORE\nSTOP\n",
        ),
        vec![root_calldata_source()],
        vec![("SSTORE", OperandRole::Slot)],
    ));

    // Cross-frame: root forwards tainted calldata to the callee, which
    // returns it; root stores the returned word.
    {
        let mut case = TaintCase::new(
            "cross_frame_return",
            "PUSH1 32\nPUSH1 4\nPUSH1 0\nCALLDATACOPY\nPUSH1 32\nPUSH1 0\nPUSH1 32\nPUSH1 0\nPUSH1 0\nPUSH20 0x0a0a0a0a0a0a0a0a0a0a0a0a0a0a0a0a0a0a0a0a\nPUSH2 2000\nCALL\nPOP\nPUSH1 0\nMLOAD\nPUSH1 3\nSSTORE\nSTOP\n",
        );
        case.deployments = vec![(
            callee,
            "PUSH1 0\nCALLDATALOAD\nPUSH1 0\nMSTORE\nPUSH1 32\nPUSH1 0\nRETURN\n".to_string(),
        )];
        cases.push((
            case,
            vec![root_calldata_source()],
            vec![
                ("RETURN", OperandRole::Data),
                ("SSTORE", OperandRole::Value),
            ],
        ));
    }

    // Calldata reaching the returned word of the root frame.
    cases.push((
        TaintCase::new(
            "calldata_to_return",
            "PUSH1 4\nCALLDATALOAD\nPUSH1 0\nMSTORE\nPUSH1 32\nPUSH1 0\nRETURN\n",
        ),
        vec![root_calldata_source()],
        vec![("RETURN", OperandRole::Data)],
    ));

    cases
}
