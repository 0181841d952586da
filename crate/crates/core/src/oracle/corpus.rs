//! The reference program corpus.
//!
//! These cases drive the parser-equivalence and translation suites and
//! jointly cover every enter opcode (CALL, CALLCODE, STATICCALL,
//! DELEGATECALL, CREATE, CREATE2), every exit opcode (STOP, RETURN,
//! REVERT, SELFDESTRUCT, INVALID), out-of-gas, code-less callees, and
//! call nesting at least four frames deep.

use crate::ingest::TransactionMeta;
use crate::primitives::{Address, Word};

use super::{meta_for, MockWorld};

/// One corpus entry: a prepared world plus the transaction to run.
#[derive(Debug, Clone)]
pub struct CorpusCase {
    pub name: &'static str,
    pub world: MockWorld,
    pub meta: TransactionMeta,
}

pub fn origin() -> Address {
    Address::repeat_byte(0xee)
}

fn addr(b: u8) -> Address {
    Address::repeat_byte(b)
}

fn push_addr(a: Address) -> String {
    format!("PUSH20 0x{}", hex::encode(a))
}

/// Emit the operand pushes plus the call opcode. Operands are pushed
/// bottom-to-top: retLen retOff argLen argOff [value] addr gas.
fn call_asm(
    op: &str,
    gas: u64,
    target: Address,
    value: u64,
    args: (u64, u64),
    rets: (u64, u64),
) -> String {
    let mut s = String::new();
    s.push_str(&format!("PUSH2 {}\n", rets.1));
    s.push_str(&format!("PUSH2 {}\n", rets.0));
    s.push_str(&format!("PUSH2 {}\n", args.1));
    s.push_str(&format!("PUSH2 {}\n", args.0));
    if matches!(op, "CALL" | "CALLCODE") {
        s.push_str(&format!("PUSH2 {value}\n"));
    }
    s.push_str(&push_addr(target));
    s.push('\n');
    s.push_str(&format!("PUSH2 {gas}\n"));
    s.push_str(op);
    s.push('\n');
    s
}

fn case(
    name: &'static str,
    seed: u8,
    deployments: &[(Address, &str)],
    to: Address,
    input: Vec<u8>,
    gas_limit: u64,
) -> CorpusCase {
    let mut world = MockWorld::new();
    world.set_balance(origin(), Word::from(1u64) << 96);
    for (address, program) in deployments {
        world
            .deploy_program(*address, program)
            .unwrap_or_else(|e| panic!("corpus program {name}: {e}"));
        world.set_balance(*address, Word::from(1u64) << 64);
    }
    CorpusCase {
        name,
        world,
        meta: meta_for(seed, origin(), Some(to), input, gas_limit),
    }
}

/// All corpus cases. Deterministic; safe to call repeatedly.
pub fn corpus() -> Vec<CorpusCase> {
    let mut cases = Vec::new();
    let a = addr(0x0a);
    let b = addr(0x0b);
    let c = addr(0x0c);
    let d = addr(0x0d);
    let root = addr(0x02);

    // 1: three-instruction return.
    cases.push(case(
        "return_basic",
        1,
        &[(root, "PUSH1 0\nPUSH1 0\nRETURN\n")],
        root,
        vec![],
        1_000,
    ));

    // 2: stop with a little arithmetic.
    cases.push(case(
        "stop_basic",
        2,
        &[(root, "PUSH1 2\nPUSH1 3\nADD\nPOP\nSTOP\n")],
        root,
        vec![],
        1_000,
    ));

    // 3: root reverts with 32 bytes of data.
    cases.push(case(
        "revert_root",
        3,
        &[(root, "PUSH1 0xfe\nPUSH1 0\nMSTORE\nPUSH1 32\nPUSH1 0\nREVERT\n")],
        root,
        vec![],
        1_000,
    ));

    // 4: root self-destructs.
    cases.push(case(
        "selfdestruct_root",
        4,
        &[(root, &format!("{}\nSELFDESTRUCT\n", push_addr(addr(0x77))))],
        root,
        vec![],
        1_000,
    ));

    // 5: root hits INVALID.
    cases.push(case(
        "invalid_root",
        5,
        &[(root, "PUSH1 1\nPOP\nINVALID\n")],
        root,
        vec![],
        1_000,
    ));

    // 6: plain value transfer to a code-less address (empty trace).
    {
        let mut world = MockWorld::new();
        world.set_balance(origin(), Word::from(1u64) << 96);
        let mut meta = meta_for(6, origin(), Some(addr(0x99)), vec![], 21_000);
        meta.value = Word::from(1234u64);
        cases.push(CorpusCase {
            name: "empty_trace_transfer",
            world,
            meta,
        });
    }

    // 7: root CALLs A; A STATICCALLs B; B returns; A returns; root stops.
    cases.push(case(
        "call_chain_return",
        7,
        &[
            (b, "PUSH1 0x2a\nPUSH1 0\nMSTORE\nPUSH1 32\nPUSH1 0\nRETURN\n"),
            (
                a,
                &format!(
                    "{}POP\nPUSH1 32\nPUSH1 0\nRETURN\n",
                    call_asm("STATICCALL", 2_000, b, 0, (0, 0), (0, 32))
                ),
            ),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 5_000, a, 0, (0, 0), (0, 32))),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 8: callee stores then reverts; root continues with 0 pushed.
    cases.push(case(
        "callee_reverts",
        8,
        &[
            (
                a,
                "PUSH1 1\nPUSH1 0\nSSTORE\nPUSH1 4\nPUSH1 0\nMSTORE\nPUSH1 32\nPUSH1 0\nREVERT\n",
            ),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 2_000, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 9: callcode runs callee code against the caller's storage.
    cases.push(case(
        "callcode_storage_context",
        9,
        &[
            (a, "PUSH1 0x11\nPUSH1 6\nSSTORE\nSTOP\n"),
            (
                root,
                &format!(
                    "{}POP\nPUSH1 6\nSLOAD\nPOP\nSTOP\n",
                    call_asm("CALLCODE", 2_000, a, 0, (0, 0), (0, 0))
                ),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 10: delegatecall keeps caller, value, and storage context.
    cases.push(case(
        "delegatecall_context",
        10,
        &[
            (a, "CALLER\nPOP\nCALLVALUE\nPOP\nPUSH1 0x22\nPUSH1 7\nSSTORE\nSTOP\n"),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("DELEGATECALL", 2_000, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 11: create a child whose initcode returns 2 bytes of code.
    cases.push(case(
        "create_child",
        11,
        &[(
            root,
            "PUSH5 0x60026000f3\nPUSH1 0\nMSTORE\nPUSH1 5\nPUSH1 27\nPUSH1 0\nCREATE\nPOP\nSTOP\n",
        )],
        root,
        vec![],
        20_000,
    ));

    // 12: create2 with a salt.
    cases.push(case(
        "create2_child",
        12,
        &[(
            root,
            "PUSH5 0x60026000f3\nPUSH1 0\nMSTORE\nPUSH2 0x99\nPUSH1 5\nPUSH1 27\nPUSH1 0\nCREATE2\nPOP\nSTOP\n",
        )],
        root,
        vec![],
        20_000,
    ));

    // 13: create whose initcode reverts; zero lands on the stack.
    cases.push(case(
        "create_reverting",
        13,
        &[(
            root,
            // initcode = PUSH1 0 PUSH1 0 REVERT = 6000 6000 fd
            "PUSH5 0x60006000fd\nPUSH1 0\nMSTORE\nPUSH1 5\nPUSH1 27\nPUSH1 0\nCREATE\nPOP\nSTOP\n",
        )],
        root,
        vec![],
        20_000,
    ));

    // 14: callee runs out of gas mid-store; root continues.
    cases.push(case(
        "oog_child",
        14,
        &[
            (a, "PUSH1 1\nPUSH1 0\nSSTORE\nSTOP\n"),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 60, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 15: the root itself runs out of gas.
    cases.push(case(
        "oog_root",
        15,
        &[(root, "PUSH1 1\nPUSH1 0\nSSTORE\nSTOP\n")],
        root,
        vec![],
        50,
    ));

    // 16: call with value to a code-less address: synthetic leaf.
    cases.push(case(
        "codeless_call_value",
        16,
        &[(
            root,
            &format!("{}POP\nSTOP\n", call_asm("CALL", 500, addr(0x99), 7, (0, 0), (0, 0))),
        )],
        root,
        vec![],
        20_000,
    ));

    // 17: staticcall into the precompile address range.
    cases.push(case(
        "precompile_call",
        17,
        &[(
            root,
            &format!(
                "{}POP\nSTOP\n",
                call_asm("STATICCALL", 500, Address::from_low_u64_be(2), 0, (0, 0), (0, 32))
            ),
        )],
        root,
        vec![],
        20_000,
    ));

    // 18: four-deep nesting with mixed call kinds:
    // root -CALL-> a -DELEGATECALL-> b -STATICCALL-> c -CALL-> d.
    cases.push(case(
        "deep_nesting",
        18,
        &[
            (d, "PUSH1 0x2a\nPUSH1 0\nMSTORE\nPUSH1 32\nPUSH1 0\nRETURN\n"),
            (
                c,
                &format!("{}POP\nPUSH1 32\nPUSH1 0\nRETURN\n", call_asm("CALL", 1_000, d, 0, (0, 0), (0, 32))),
            ),
            (
                b,
                &format!("{}POP\nPUSH1 32\nPUSH1 0\nRETURN\n", call_asm("STATICCALL", 3_000, c, 0, (0, 0), (0, 32))),
            ),
            (
                a,
                &format!("{}POP\nPUSH1 32\nPUSH1 0\nRETURN\n", call_asm("DELEGATECALL", 6_000, b, 0, (0, 0), (0, 32))),
            ),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 10_000, a, 0, (0, 0), (0, 32))),
            ),
        ],
        root,
        vec![],
        50_000,
    ));

    // 19: keccak-derived mapping slot store: sha3 then sstore.
    cases.push(case(
        "sha3_mapping_store",
        19,
        &[(
            root,
            // mapping at base slot 2, key 0x55: store 9 at keccak(key ++ 2)
            "PUSH1 0x55\nPUSH1 0\nMSTORE\nPUSH1 2\nPUSH1 32\nMSTORE\nPUSH1 64\nPUSH1 0\nSHA3\nPUSH1 9\nSWAP1\nSSTORE\nSTOP\n",
        )],
        root,
        vec![],
        20_000,
    ));

    // 20: loads and stores over pre-seeded storage.
    {
        let mut kase = case(
            "sload_sstore_mix",
            20,
            &[(
                root,
                "PUSH1 3\nSLOAD\nPUSH1 1\nADD\nPUSH1 3\nSSTORE\nPUSH1 4\nSLOAD\nPOP\nSTOP\n",
            )],
            root,
            vec![],
            20_000,
        );
        kase.world.set_storage(root, Word::from(3u64), Word::from(41u64));
        cases.push(kase);
    }

    // 21: child self-destructs, sweeping its balance to the root.
    cases.push(case(
        "selfdestruct_child",
        21,
        &[
            (a, &format!("{}\nSELFDESTRUCT\n", push_addr(root))),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 1_000, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 22: child halts on INVALID; parent continues.
    cases.push(case(
        "invalid_child",
        22,
        &[
            (a, "PUSH1 1\nPUSH1 2\nSSTORE\nINVALID\n"),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 2_000, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 23: rollback propagates through a successful descendant: a calls b
    // (which stores and returns fine), then a reverts.
    cases.push(case(
        "revert_above_success",
        23,
        &[
            (b, "PUSH1 0x33\nPUSH1 1\nSSTORE\nPUSH1 0\nPUSH1 0\nRETURN\n"),
            (
                a,
                &format!("{}POP\nPUSH1 0\nPUSH1 0\nREVERT\n", call_asm("CALL", 2_000, b, 0, (0, 0), (0, 0))),
            ),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 6_000, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        50_000,
    ));

    // 24: write protection: store attempted inside a static context.
    cases.push(case(
        "static_write_violation",
        24,
        &[
            (a, "PUSH1 1\nPUSH1 0\nSSTORE\nSTOP\n"),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("STATICCALL", 2_000, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 25: the callee's gas runs out exactly on its RETURN instruction;
    // the exit opcode itself carries the error.
    cases.push(case(
        "oog_on_exit_opcode",
        26,
        &[
            (a, "PUSH1 0\nPUSH1 0\nRETURN\n"),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 2, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        20_000,
    ));

    // 26: the root cannot even pay for its CALL instruction: the enter
    // opcode itself errors and no child frame is created.
    cases.push(case(
        "oog_on_call_opcode",
        27,
        &[
            (a, "STOP\n"),
            (
                root,
                &format!("{}POP\nSTOP\n", call_asm("CALL", 500, a, 0, (0, 0), (0, 0))),
            ),
        ],
        root,
        vec![],
        50,
    ));

    // 27: calldata flows into a child: root forwards 36 bytes of its own
    // calldata; the child loads word 4 and stores it.
    {
        let program_a = "PUSH1 4\nCALLDATALOAD\nPUSH1 0\nSSTORE\nCALLDATASIZE\nPOP\nSTOP\n";
        let root_prog = format!(
            "PUSH1 36\nPUSH1 0\nPUSH1 0\nCALLDATACOPY\n{}POP\nSTOP\n",
            call_asm("CALL", 3_000, a, 0, (0, 36), (0, 0))
        );
        let mut input = vec![0xa9, 0x05, 0x9c, 0xbb];
        input.extend_from_slice(&crate::primitives::word_to_bytes32(Word::from(0x77u64)));
        cases.push(case(
            "calldata_forwarding",
            25,
            &[(a, program_a), (root, &root_prog)],
            root,
            input,
            50_000,
        ));
    }

    cases
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_large_enough_and_assembles() {
        let cases = corpus();
        assert!(cases.len() >= 20, "corpus has {} cases", cases.len());
        let names: std::collections::BTreeSet<_> = cases.iter().map(|c| c.name).collect();
        assert_eq!(names.len(), cases.len(), "corpus names must be unique");
    }

    #[test]
    fn corpus_covers_required_opcodes() {
        let mut seen = std::collections::BTreeSet::new();
        for case in corpus() {
            let mut world = case.world.clone();
            let gt = super::super::execute(&mut world, &case.meta, false).unwrap();
            for entry in &gt.trace.entries {
                seen.insert(entry.op.clone());
            }
        }
        for required in [
            "CALL",
            "CALLCODE",
            "STATICCALL",
            "DELEGATECALL",
            "CREATE",
            "CREATE2",
            "STOP",
            "RETURN",
            "REVERT",
            "SELFDESTRUCT",
            "INVALID",
        ] {
            assert!(seen.contains(required), "corpus never executes {required}");
        }
    }

    #[test]
    fn corpus_reaches_depth_four() {
        let mut max_depth = 0;
        for case in corpus() {
            let mut world = case.world.clone();
            let gt = super::super::execute(&mut world, &case.meta, false).unwrap();
            for entry in &gt.trace.entries {
                max_depth = max_depth.max(entry.depth);
            }
        }
        assert!(max_depth >= 4, "max depth {max_depth} < 4");
    }
}
