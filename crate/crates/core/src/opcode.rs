//! Opcode taxonomy: mnemonic/byte mapping, stack arity, and the
//! enter/exit/storage/sha3 classification the tree builder keys off.

/// How an opcode participates in invocation-tree construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpClass {
    /// Starts a new call frame: CALL, CALLCODE, STATICCALL, DELEGATECALL,
    /// CREATE, CREATE2.
    FunctionEnter,
    /// Terminates the current frame: STOP, RETURN, REVERT, SELFDESTRUCT,
    /// INVALID. Out-of-gas is an exit *condition* detected separately,
    /// not an opcode.
    FunctionExit,
    /// SLOAD / SSTORE.
    StorageAccess,
    /// SHA3 (aka KECCAK256).
    Sha3,
    Other,
}

/// Classify a mnemonic. Total: unknown mnemonics are `Other`.
pub fn classify_opcode(op: &str) -> OpClass {
    match normalize(op).as_str() {
        "CALL" | "CALLCODE" | "STATICCALL" | "DELEGATECALL" | "CREATE" | "CREATE2" => {
            OpClass::FunctionEnter
        }
        "STOP" | "RETURN" | "REVERT" | "SELFDESTRUCT" | "INVALID" => OpClass::FunctionExit,
        "SLOAD" | "SSTORE" => OpClass::StorageAccess,
        "SHA3" | "KECCAK256" => OpClass::Sha3,
        _ => OpClass::Other,
    }
}

/// Uppercase mnemonic with the KECCAK256 alias folded onto SHA3.
pub fn normalize(op: &str) -> String {
    let up = op.to_ascii_uppercase();
    if up == "KECCAK256" {
        "SHA3".to_string()
    } else {
        up
    }
}

/// (pops, pushes) for a mnemonic, or `None` for unknown opcodes.
pub fn stack_arity(op: &str) -> Option<(usize, usize)> {
    let n = normalize(op);
    if let Some(rest) = n.strip_prefix("PUSH") {
        if let Ok(k) = rest.parse::<usize>() {
            if k <= 32 {
                return Some((0, 1));
            }
        }
        return None;
    }
    if let Some(rest) = n.strip_prefix("DUP") {
        if let Ok(k) = rest.parse::<usize>() {
            if (1..=16).contains(&k) {
                return Some((k, k + 1));
            }
        }
        return None;
    }
    if let Some(rest) = n.strip_prefix("SWAP") {
        if let Ok(k) = rest.parse::<usize>() {
            if (1..=16).contains(&k) {
                return Some((k + 1, k + 1));
            }
        }
        return None;
    }
    if let Some(rest) = n.strip_prefix("LOG") {
        if let Ok(k) = rest.parse::<usize>() {
            if k <= 4 {
                return Some((2 + k, 0));
            }
        }
        return None;
    }
    let (pops, pushes) = match n.as_str() {
        "STOP" | "JUMPDEST" | "INVALID" => (0, 0),
        "ADD" | "MUL" | "SUB" | "DIV" | "SDIV" | "MOD" | "SMOD" | "EXP" | "SIGNEXTEND" | "LT"
        | "GT" | "SLT" | "SGT" | "EQ" | "AND" | "OR" | "XOR" | "BYTE" | "SHL" | "SHR" | "SAR"
        | "SHA3" => (2, 1),
        "ADDMOD" | "MULMOD" => (3, 1),
        "ISZERO" | "NOT" | "BALANCE" | "CALLDATALOAD" | "EXTCODESIZE" | "EXTCODEHASH"
        | "BLOCKHASH" | "BLOBHASH" | "MLOAD" | "SLOAD" | "TLOAD" => (1, 1),
        "ADDRESS" | "ORIGIN" | "CALLER" | "CALLVALUE" | "CALLDATASIZE" | "CODESIZE"
        | "GASPRICE" | "RETURNDATASIZE" | "COINBASE" | "TIMESTAMP" | "NUMBER" | "DIFFICULTY"
        | "PREVRANDAO" | "GASLIMIT" | "CHAINID" | "SELFBALANCE" | "BASEFEE" | "BLOBBASEFEE"
        | "PC" | "MSIZE" | "GAS" => (0, 1),
        "POP" | "JUMP" | "SELFDESTRUCT" => (1, 0),
        "MSTORE" | "MSTORE8" | "SSTORE" | "TSTORE" | "JUMPI" | "RETURN" | "REVERT" => (2, 0),
        "CALLDATACOPY" | "CODECOPY" | "RETURNDATACOPY" | "MCOPY" => (3, 0),
        "EXTCODECOPY" => (4, 0),
        "CREATE" => (3, 1),
        "CREATE2" => (4, 1),
        "CALL" | "CALLCODE" => (7, 1),
        "DELEGATECALL" | "STATICCALL" => (6, 1),
        _ => return None,
    };
    Some((pops, pushes))
}

/// Full mnemonic/byte table for the standard instruction set.
const OPCODES: &[(u8, &str)] = &[
    (0x00, "STOP"),
    (0x01, "ADD"),
    (0x02, "MUL"),
    (0x03, "SUB"),
    (0x04, "DIV"),
    (0x05, "SDIV"),
    (0x06, "MOD"),
    (0x07, "SMOD"),
    (0x08, "ADDMOD"),
    (0x09, "MULMOD"),
    (0x0a, "EXP"),
    (0x0b, "SIGNEXTEND"),
    (0x10, "LT"),
    (0x11, "GT"),
    (0x12, "SLT"),
    (0x13, "SGT"),
    (0x14, "EQ"),
    (0x15, "ISZERO"),
    (0x16, "AND"),
    (0x17, "OR"),
    (0x18, "XOR"),
    (0x19, "NOT"),
    (0x1a, "BYTE"),
    (0x1b, "SHL"),
    (0x1c, "SHR"),
    (0x1d, "SAR"),
    (0x20, "SHA3"),
    (0x30, "ADDRESS"),
    (0x31, "BALANCE"),
    (0x32, "ORIGIN"),
    (0x33, "CALLER"),
    (0x34, "CALLVALUE"),
    (0x35, "CALLDATALOAD"),
    (0x36, "CALLDATASIZE"),
    (0x37, "CALLDATACOPY"),
    (0x38, "CODESIZE"),
    (0x39, "CODECOPY"),
    (0x3a, "GASPRICE"),
    (0x3b, "EXTCODESIZE"),
    (0x3c, "EXTCODECOPY"),
    (0x3d, "RETURNDATASIZE"),
    (0x3e, "RETURNDATACOPY"),
    (0x3f, "EXTCODEHASH"),
    (0x40, "BLOCKHASH"),
    (0x41, "COINBASE"),
    (0x42, "TIMESTAMP"),
    (0x43, "NUMBER"),
    (0x44, "PREVRANDAO"),
    (0x45, "GASLIMIT"),
    (0x46, "CHAINID"),
    (0x47, "SELFBALANCE"),
    (0x48, "BASEFEE"),
    (0x49, "BLOBHASH"),
    (0x4a, "BLOBBASEFEE"),
    (0x50, "POP"),
    (0x51, "MLOAD"),
    (0x52, "MSTORE"),
    (0x53, "MSTORE8"),
    (0x54, "SLOAD"),
    (0x55, "SSTORE"),
    (0x56, "JUMP"),
    (0x57, "JUMPI"),
    (0x58, "PC"),
    (0x59, "MSIZE"),
    (0x5a, "GAS"),
    (0x5b, "JUMPDEST"),
    (0x5c, "TLOAD"),
    (0x5d, "TSTORE"),
    (0x5e, "MCOPY"),
    (0x5f, "PUSH0"),
    (0xf0, "CREATE"),
    (0xf1, "CALL"),
    (0xf2, "CALLCODE"),
    (0xf3, "RETURN"),
    (0xf4, "DELEGATECALL"),
    (0xf5, "CREATE2"),
    (0xfa, "STATICCALL"),
    (0xfd, "REVERT"),
    (0xfe, "INVALID"),
    (0xff, "SELFDESTRUCT"),
];

/// Byte value for a mnemonic (handles PUSH/DUP/SWAP/LOG families).
pub fn opcode_byte(op: &str) -> Option<u8> {
    let n = normalize(op);
    if let Some(rest) = n.strip_prefix("PUSH") {
        if let Ok(k) = rest.parse::<u8>() {
            if (1..=32).contains(&k) {
                return Some(0x60 + k - 1);
            }
            if k == 0 {
                return Some(0x5f);
            }
        }
        return None;
    }
    if let Some(rest) = n.strip_prefix("DUP") {
        if let Ok(k) = rest.parse::<u8>() {
            if (1..=16).contains(&k) {
                return Some(0x80 + k - 1);
            }
        }
        return None;
    }
    if let Some(rest) = n.strip_prefix("SWAP") {
        if let Ok(k) = rest.parse::<u8>() {
            if (1..=16).contains(&k) {
                return Some(0x90 + k - 1);
            }
        }
        return None;
    }
    if let Some(rest) = n.strip_prefix("LOG") {
        if let Ok(k) = rest.parse::<u8>() {
            if k <= 4 {
                return Some(0xa0 + k);
            }
        }
        return None;
    }
    OPCODES.iter().find(|(_, m)| *m == n).map(|(b, _)| *b)
}

/// Mnemonic for a byte value.
pub fn opcode_name(byte: u8) -> Option<String> {
    match byte {
        0x60..=0x7f => Some(format!("PUSH{}", byte - 0x60 + 1)),
        0x80..=0x8f => Some(format!("DUP{}", byte - 0x80 + 1)),
        0x90..=0x9f => Some(format!("SWAP{}", byte - 0x90 + 1)),
        0xa0..=0xa4 => Some(format!("LOG{}", byte - 0xa0)),
        _ => OPCODES
            .iter()
            .find(|(b, _)| *b == byte)
            .map(|(_, m)| m.to_string()),
    }
}

/// Number of immediate bytes following the opcode in bytecode.
pub fn immediate_len(byte: u8) -> usize {
    match byte {
        0x60..=0x7f => (byte - 0x60 + 1) as usize,
        _ => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_matches_call_taxonomy() {
        assert_eq!(classify_opcode("DELEGATECALL"), OpClass::FunctionEnter);
        assert_eq!(classify_opcode("SELFDESTRUCT"), OpClass::FunctionExit);
        assert_eq!(classify_opcode("ADD"), OpClass::Other);
        assert_eq!(classify_opcode("sload"), OpClass::StorageAccess);
        assert_eq!(classify_opcode("KECCAK256"), OpClass::Sha3);
        assert_eq!(classify_opcode("sha3"), OpClass::Sha3);
        assert_eq!(classify_opcode("NOT_AN_OPCODE"), OpClass::Other);
    }

    #[test]
    fn arity_families() {
        assert_eq!(stack_arity("PUSH1"), Some((0, 1)));
        assert_eq!(stack_arity("PUSH32"), Some((0, 1)));
        assert_eq!(stack_arity("DUP3"), Some((3, 4)));
        assert_eq!(stack_arity("SWAP16"), Some((17, 17)));
        assert_eq!(stack_arity("LOG2"), Some((4, 0)));
        assert_eq!(stack_arity("CALL"), Some((7, 1)));
        assert_eq!(stack_arity("STATICCALL"), Some((6, 1)));
        assert_eq!(stack_arity("BOGUS"), None);
    }

    #[test]
    fn byte_round_trip() {
        for (byte, name) in OPCODES {
            assert_eq!(opcode_byte(name), Some(*byte));
            assert_eq!(opcode_name(*byte).as_deref(), Some(*name));
        }
        assert_eq!(opcode_byte("PUSH7"), Some(0x66));
        assert_eq!(opcode_name(0x66).as_deref(), Some("PUSH7"));
        assert_eq!(immediate_len(0x66), 7);
        assert_eq!(immediate_len(0x01), 0);
    }
}
