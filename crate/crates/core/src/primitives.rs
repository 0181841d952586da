//! Shared word-level types and encoding helpers.
//!
//! Everything in a trace is ultimately a 256-bit word, a 20-byte address,
//! or a hex-encoded byte string; the aliases and conversions here keep the
//! rest of the crate free of ad-hoc hex handling.

use primitive_types::{H160, H256, U256};
use tiny_keccak::{Hasher, Keccak};

/// A 20-byte account address.
pub type Address = H160;
/// A 256-bit EVM word.
pub type Word = U256;
/// A 32-byte hash (transaction ids, keccak outputs).
pub type Hash32 = H256;

/// keccak-256 over arbitrary bytes.
pub fn keccak256(data: &[u8]) -> Hash32 {
    let mut hasher = Keccak::v256();
    hasher.update(data);
    let mut out = [0u8; 32];
    hasher.finalize(&mut out);
    H256(out)
}

/// The word padded to its full 32-byte big-endian form.
pub fn word_to_bytes32(w: Word) -> [u8; 32] {
    w.to_big_endian()
}

/// Big-endian bytes into a word; inputs longer than 32 bytes keep the low 32.
pub fn word_from_bytes(bytes: &[u8]) -> Word {
    if bytes.len() <= 32 {
        U256::from_big_endian(bytes)
    } else {
        U256::from_big_endian(&bytes[bytes.len() - 32..])
    }
}

/// Low 20 bytes of a word as an address (how the stack carries addresses).
pub fn word_to_address(w: Word) -> Address {
    H160::from_slice(&w.to_big_endian()[12..])
}

/// Address zero-extended to a word.
pub fn address_to_word(a: Address) -> Word {
    U256::from_big_endian(a.as_bytes())
}

/// Parse a hex word, tolerating both `0x1f` and bare `1f` forms.
pub fn parse_hex_word(s: &str) -> Result<Word, HexError> {
    let t = s.strip_prefix("0x").unwrap_or(s);
    if t.is_empty() {
        return Ok(U256::zero());
    }
    U256::from_str_radix(t, 16).map_err(|_| HexError::BadWord(s.to_string()))
}

/// Parse a hex byte string, tolerating a missing `0x` prefix and odd input
/// by rejecting it with the offending text.
pub fn parse_hex_bytes(s: &str) -> Result<Vec<u8>, HexError> {
    let t = s.strip_prefix("0x").unwrap_or(s);
    hex::decode(t).map_err(|_| HexError::BadBytes(s.to_string()))
}

/// Parse a 20-byte hex address.
pub fn parse_address(s: &str) -> Result<Address, HexError> {
    let bytes = parse_hex_bytes(s)?;
    if bytes.len() != 20 {
        return Err(HexError::BadAddress(s.to_string()));
    }
    Ok(H160::from_slice(&bytes))
}

/// Parse a 32-byte hex hash.
pub fn parse_hash32(s: &str) -> Result<Hash32, HexError> {
    let bytes = parse_hex_bytes(s)?;
    if bytes.len() != 32 {
        return Err(HexError::BadHash(s.to_string()));
    }
    Ok(H256::from_slice(&bytes))
}

/// `0x`-prefixed lowercase hex of a byte string.
pub fn hex_bytes(bytes: &[u8]) -> String {
    format!("0x{}", hex::encode(bytes))
}

/// `0x`-prefixed minimal hex of a word (`0` encodes as `0x0`).
pub fn hex_word(w: Word) -> String {
    format!("{:#x}", w)
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HexError {
    #[error("invalid hex word: {0}")]
    BadWord(String),
    #[error("invalid hex byte string: {0}")]
    BadBytes(String),
    #[error("invalid address (need 20 bytes): {0}")]
    BadAddress(String),
    #[error("invalid hash (need 32 bytes): {0}")]
    BadHash(String),
}

/// Serde adapters for `0x`-hex byte strings.
pub mod hexbytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&super::hex_bytes(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        super::parse_hex_bytes(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapters for JSON-RPC quantities: accepts `"0x10"`, `"16"`, or `16`.
pub mod quantity {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&format!("{:#x}", v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(n) => Ok(n),
            Raw::Str(s) => {
                let t = s.strip_prefix("0x").unwrap_or(&s);
                let radix = if s.starts_with("0x") { 16 } else { 10 };
                u64::from_str_radix(t, radix).map_err(serde::de::Error::custom)
            }
        }
    }
}

/// Serde adapters for stacks: arrays of hex words in either prefixed or
/// bare-hex form (tracer output varies by client version).
pub mod hexwords {
    use super::Word;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(words: &[Word], ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = ser.serialize_seq(Some(words.len()))?;
        for w in words {
            seq.serialize_element(&super::hex_word(*w))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<Word>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(de)?;
        raw.iter()
            .map(|s| super::parse_hex_word(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keccak_known_vectors() {
        // keccak-256 of the empty string.
        assert_eq!(
            hex::encode(keccak256(b"")),
            "c5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470"
        );
        // transfer(address,uint256) selector.
        assert_eq!(
            &keccak256(b"transfer(address,uint256)").as_bytes()[..4],
            &[0xa9, 0x05, 0x9c, 0xbb]
        );
    }

    #[test]
    fn word_parsing_accepts_both_hex_forms() {
        assert_eq!(parse_hex_word("0x1f").unwrap(), Word::from(0x1f));
        assert_eq!(parse_hex_word("1f").unwrap(), Word::from(0x1f));
        assert_eq!(parse_hex_word("0x").unwrap(), Word::zero());
        assert!(parse_hex_word("0xzz").is_err());
    }

    #[test]
    fn address_word_round_trip() {
        let a = parse_address("0x2222222222222222222222222222222222222222").unwrap();
        assert_eq!(word_to_address(address_to_word(a)), a);
    }

    #[test]
    fn minimal_hex_word() {
        assert_eq!(hex_word(Word::zero()), "0x0");
        assert_eq!(hex_word(Word::from(255u64)), "0xff");
    }
}
