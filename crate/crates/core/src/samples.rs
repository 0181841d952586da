//! Synthetic sample corpus: a vault contract accepting deposits through
//! an ERC20 token, exercised by a chronological transaction history plus
//! one exploit-shaped transaction that blows past every trained bound.
//!
//! Used by the quickstart (`cargo run --example make_sample_corpus`), the
//! invariant-protocol tests, and the offline end-to-end suite.

use std::path::{Path, PathBuf};

use crate::decoder::{AbiFunction, AbiType};
use crate::ingest::{store_fixture, TransactionMeta};
use crate::oracle::{self, MockWorld};
use crate::parser::Selector;
use crate::pipeline::PipelineError;
use crate::primitives::{Address, Hash32, Word};

/// Where everything landed.
#[derive(Debug, Clone)]
pub struct SampleCorpus {
    pub vault: Address,
    pub token: Address,
    pub deposit_selector: Selector,
    /// Ten chronological deposit transactions.
    pub fixtures: Vec<PathBuf>,
    /// The exploit-shaped transaction, newest of all.
    pub exploit: PathBuf,
    pub config_dir: PathBuf,
    /// The ten-transaction corpus list.
    pub txlist: PathBuf,
    /// Held-out transactions plus the exploit.
    pub checklist: PathBuf,
}

pub fn vault_address() -> Address {
    Address::repeat_byte(0x02)
}

pub fn token_address() -> Address {
    Address::repeat_byte(0x03)
}

fn owner_address() -> Address {
    Address::repeat_byte(0xaa)
}

fn user(i: usize) -> Address {
    if i % 2 == 0 {
        Address::repeat_byte(0xee)
    } else {
        Address::repeat_byte(0xdd)
    }
}

pub fn deposit_abi() -> AbiFunction {
    AbiFunction::new("deposit", vec![("amount", AbiType::Uint(256))], vec![])
}

fn erc20_abi_json() -> &'static str {
    r#"[
  {"type": "function", "name": "transferFrom",
   "inputs": [{"name": "from", "type": "address"},
              {"name": "to", "type": "address"},
              {"name": "amount", "type": "uint256"}],
   "outputs": [{"name": "", "type": "bool"}]},
  {"type": "function", "name": "transfer",
   "inputs": [{"name": "to", "type": "address"},
              {"name": "amount", "type": "uint256"}],
   "outputs": [{"name": "", "type": "bool"}]}
]"#
}

fn vault_abi_json() -> String {
    r#"[
  {"type": "function", "name": "deposit",
   "inputs": [{"name": "amount", "type": "uint256"}],
   "outputs": []}
]"#
    .to_string()
}

fn vault_layout_json() -> &'static str {
    r#"[
  {"label": "totalDeposits", "slot": "0", "type": "t_uint256"},
  {"label": "owner", "slot": "1", "type": "t_address"},
  {"label": "balances", "slot": "2", "type": "t_mapping(t_address,t_uint256)"}
]"#
}

/// The vault bytecode: credit `balances[caller]` and `totalDeposits` by
/// the calldata amount, read the owner slot, then pull tokens via
/// `transferFrom(caller, vault, amount)`.
fn vault_program() -> String {
    format!(
        "\
# balances[caller] += amount
CALLER
PUSH1 0
MSTORE
PUSH1 2
PUSH1 32
MSTORE
PUSH1 64
PUSH1 0
SHA3
DUP1
SLOAD
PUSH1 4
CALLDATALOAD
ADD
SWAP1
SSTORE
# totalDeposits += amount
PUSH1 0
SLOAD
PUSH1 4
CALLDATALOAD
ADD
PUSH1 0
SSTORE
# owner sanity read
PUSH1 1
SLOAD
POP
# token.transferFrom(caller, vault, amount)
PUSH4 0x23b872dd
PUSH29 0x0100000000000000000000000000000000000000000000000000000000
MUL
PUSH1 64
MSTORE
CALLER
PUSH1 68
MSTORE
PUSH20 0x{vault}
PUSH1 100
MSTORE
PUSH1 4
CALLDATALOAD
PUSH1 132
MSTORE
PUSH1 0
PUSH1 0
PUSH1 100
PUSH1 64
PUSH1 0
PUSH20 0x{token}
PUSH2 2000
CALL
POP
STOP
",
        vault = hex::encode(vault_address()),
        token = hex::encode(token_address()),
    )
}

/// The token just acknowledges with a 32-byte true.
fn token_program() -> &'static str {
    "PUSH1 1\nPUSH1 0\nMSTORE\nPUSH1 32\nPUSH1 0\nRETURN\n"
}

/// Fresh world with vault, token, and seeded owner slot.
pub fn sample_world() -> MockWorld {
    let mut world = MockWorld::new();
    world.set_balance(user(0), Word::from(1u64) << 96);
    world.set_balance(user(1), Word::from(1u64) << 96);
    world
        .deploy_program(vault_address(), &vault_program())
        .expect("vault program assembles");
    world
        .deploy_program(token_address(), token_program())
        .expect("token program assembles");
    world.set_storage(
        vault_address(),
        Word::one(),
        crate::primitives::address_to_word(owner_address()),
    );
    world
}

/// Deposit amounts of the ten corpus transactions, in order.
pub fn deposit_amounts() -> Vec<u64> {
    vec![5, 12, 9, 30, 18, 25, 14, 22, 11, 28]
}

/// Gas limits of the ten corpus transactions, in order.
pub fn gas_limits() -> Vec<u64> {
    (0..10).map(|i| 50_000 + 1_000 * i as u64).collect()
}

fn deposit_meta(seed: u8, i: usize, amount: u64, gas_limit: u64) -> TransactionMeta {
    let mut input = deposit_abi().selector.0.to_vec();
    input.extend_from_slice(&crate::primitives::word_to_bytes32(Word::from(amount)));
    TransactionMeta {
        tx_hash: Hash32::repeat_byte(seed),
        block_number: 100 + 2 * i as u64,
        origin: user(i),
        to: Some(vault_address()),
        value: Word::zero(),
        input,
        gas_limit,
        gas_used: 0,
        status: crate::ingest::TxStatus::Success,
    }
}

/// The exploit-shaped transaction: gas and amount far above anything the
/// training corpus showed.
pub fn exploit_meta() -> TransactionMeta {
    deposit_meta(0xf0, 12, 100_000, 150_000)
}

/// Build the corpus and write fixtures, ABIs, layout, and list files
/// under `dir`.
pub fn write_sample_corpus(dir: &Path) -> Result<SampleCorpus, PipelineError> {
    let write = |path: &Path, content: &str| -> Result<(), PipelineError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| crate::pipeline::io_err(parent, e))?;
        }
        std::fs::write(path, content).map_err(|e| crate::pipeline::io_err(path, e))
    };

    let fixtures_dir = dir.join("fixtures");
    let config_dir = dir.join("config");
    let mut world = sample_world();

    let amounts = deposit_amounts();
    let limits = gas_limits();
    let mut fixtures = Vec::new();
    for i in 0..amounts.len() {
        let meta = deposit_meta(0x10 + i as u8, i, amounts[i], limits[i]);
        let gt = oracle::execute(&mut world, &meta, false).expect("sample corpus executes");
        assert!(gt.succeeded, "sample deposit {i} must succeed");
        let path = fixtures_dir.join(format!("tx{i:02}.json"));
        store_fixture(&path, &gt.meta_with_outcome(&meta), &gt.trace)?;
        fixtures.push(path);
    }

    let exploit_meta = exploit_meta();
    let gt = oracle::execute(&mut world, &exploit_meta, false).expect("exploit executes");
    let exploit = fixtures_dir.join("exploit.json");
    store_fixture(&exploit, &gt.meta_with_outcome(&exploit_meta), &gt.trace)?;

    write(
        &config_dir.join("abi").join(format!("{:?}.json", token_address())),
        erc20_abi_json(),
    )?;
    write(
        &config_dir.join("abi").join(format!("{:?}.json", vault_address())),
        &vault_abi_json(),
    )?;
    write(
        &config_dir
            .join("layout")
            .join(format!("{:?}.json", vault_address())),
        vault_layout_json(),
    )?;

    let txlist = dir.join("txlist.txt");
    let list_text: String = fixtures
        .iter()
        .map(|p| format!("{}\n", p.display()))
        .collect();
    write(&txlist, &format!("# sample deposit corpus\n{list_text}"))?;

    let checklist = dir.join("checklist.txt");
    let check_text: String = fixtures[7..]
        .iter()
        .chain(std::iter::once(&exploit))
        .map(|p| format!("{}\n", p.display()))
        .collect();
    write(&checklist, &check_text)?;

    Ok(SampleCorpus {
        vault: vault_address(),
        token: token_address(),
        deposit_selector: deposit_abi().selector,
        fixtures,
        exploit,
        config_dir,
        txlist,
        checklist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_corpus_writes_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = write_sample_corpus(dir.path()).unwrap();
        assert_eq!(corpus.fixtures.len(), 10);
        for path in &corpus.fixtures {
            let (meta, trace) = crate::ingest::load_fixture(path).unwrap();
            assert!(!trace.entries.is_empty());
            assert_eq!(meta.to, Some(corpus.vault));
        }
        let (exploit_meta, _) = crate::ingest::load_fixture(&corpus.exploit).unwrap();
        assert_eq!(exploit_meta.gas_limit, 150_000);
    }

    #[test]
    fn deposits_accumulate_in_vault_storage() {
        let mut world = sample_world();
        let total: u64 = deposit_amounts().iter().sum();
        for (i, (amount, limit)) in deposit_amounts().iter().zip(gas_limits()).enumerate() {
            let meta = deposit_meta(0x10 + i as u8, i, *amount, limit);
            let gt = oracle::execute(&mut world, &meta, false).unwrap();
            assert!(gt.succeeded);
        }
        assert_eq!(
            world.storage(vault_address(), Word::zero()),
            Word::from(total)
        );
    }
}
