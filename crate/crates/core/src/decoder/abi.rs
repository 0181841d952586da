//! Contract-ABI types, the standard head/tail encoding, and strict
//! decoding with exact-consumption tracking.
//!
//! Supported grammar: uint8..256, int8..256, address, bool, bytes1..32,
//! bytes, string, T[], T[N], and tuples one nesting level deep. Deeper
//! tuple nesting is a documented limitation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::parser::Selector;
use crate::primitives::{keccak256, word_from_bytes, word_to_bytes32, Address, Word};

/// An ABI type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbiType {
    Uint(usize),
    Int(usize),
    Address,
    Bool,
    FixedBytes(usize),
    Bytes,
    String,
    Array(Box<AbiType>),
    FixedArray(Box<AbiType>, usize),
    Tuple(Vec<AbiType>),
}

impl AbiType {
    /// Parse a type string like `uint256[2][]` or `(address,uint256)`.
    pub fn parse(s: &str) -> Result<AbiType, AbiError> {
        let s = s.trim();
        if let Some(inner) = s.strip_suffix("[]") {
            return Ok(AbiType::Array(Box::new(AbiType::parse(inner)?)));
        }
        if s.ends_with(']') {
            let open = s
                .rfind('[')
                .ok_or_else(|| AbiError::UnknownType(s.to_string()))?;
            let n: usize = s[open + 1..s.len() - 1]
                .parse()
                .map_err(|_| AbiError::UnknownType(s.to_string()))?;
            return Ok(AbiType::FixedArray(Box::new(AbiType::parse(&s[..open])?), n));
        }
        if s.starts_with('(') && s.ends_with(')') {
            let inner = &s[1..s.len() - 1];
            if inner.trim().is_empty() {
                return Ok(AbiType::Tuple(Vec::new()));
            }
            let mut parts = Vec::new();
            let mut depth = 0usize;
            let mut start = 0usize;
            for (i, c) in inner.char_indices() {
                match c {
                    '(' => depth += 1,
                    ')' => depth -= 1,
                    ',' if depth == 0 => {
                        parts.push(AbiType::parse(&inner[start..i])?);
                        start = i + 1;
                    }
                    _ => {}
                }
            }
            parts.push(AbiType::parse(&inner[start..])?);
            return Ok(AbiType::Tuple(parts));
        }
        match s {
            "address" => return Ok(AbiType::Address),
            "bool" => return Ok(AbiType::Bool),
            "bytes" => return Ok(AbiType::Bytes),
            "string" => return Ok(AbiType::String),
            "uint" => return Ok(AbiType::Uint(256)),
            "int" => return Ok(AbiType::Int(256)),
            _ => {}
        }
        if let Some(bits) = s.strip_prefix("uint") {
            if let Ok(b) = bits.parse::<usize>() {
                if b % 8 == 0 && (8..=256).contains(&b) {
                    return Ok(AbiType::Uint(b));
                }
            }
        } else if let Some(bits) = s.strip_prefix("int") {
            if let Ok(b) = bits.parse::<usize>() {
                if b % 8 == 0 && (8..=256).contains(&b) {
                    return Ok(AbiType::Int(b));
                }
            }
        } else if let Some(n) = s.strip_prefix("bytes") {
            if let Ok(n) = n.parse::<usize>() {
                if (1..=32).contains(&n) {
                    return Ok(AbiType::FixedBytes(n));
                }
            }
        }
        Err(AbiError::UnknownType(s.to_string()))
    }

    /// Canonical form used in signature strings.
    pub fn canonical(&self) -> String {
        match self {
            AbiType::Uint(b) => format!("uint{b}"),
            AbiType::Int(b) => format!("int{b}"),
            AbiType::Address => "address".into(),
            AbiType::Bool => "bool".into(),
            AbiType::FixedBytes(n) => format!("bytes{n}"),
            AbiType::Bytes => "bytes".into(),
            AbiType::String => "string".into(),
            AbiType::Array(t) => format!("{}[]", t.canonical()),
            AbiType::FixedArray(t, n) => format!("{}[{n}]", t.canonical()),
            AbiType::Tuple(ts) => format!(
                "({})",
                ts.iter().map(|t| t.canonical()).collect::<Vec<_>>().join(",")
            ),
        }
    }

    pub fn is_dynamic(&self) -> bool {
        match self {
            AbiType::Bytes | AbiType::String | AbiType::Array(_) => true,
            AbiType::FixedArray(t, _) => t.is_dynamic(),
            AbiType::Tuple(ts) => ts.iter().any(|t| t.is_dynamic()),
            _ => false,
        }
    }

    /// Bytes this type occupies in the head section.
    fn head_size(&self) -> usize {
        if self.is_dynamic() {
            return 32;
        }
        match self {
            AbiType::FixedArray(t, n) => t.head_size() * n,
            AbiType::Tuple(ts) => ts.iter().map(|t| t.head_size()).sum(),
            _ => 32,
        }
    }
}

/// A decoded ABI value. Signed integers keep their two's-complement word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbiValue {
    Uint(Word),
    Int(Word),
    Address(Address),
    Bool(bool),
    FixedBytes(Vec<u8>),
    Bytes(Vec<u8>),
    String(String),
    Array(Vec<AbiValue>),
    Tuple(Vec<AbiValue>),
}

impl AbiValue {
    /// Human-readable rendering for tree output.
    pub fn render(&self) -> String {
        match self {
            AbiValue::Uint(w) => w.to_string(),
            AbiValue::Int(w) => {
                // Negative iff the sign bit is set.
                if w.bit(255) {
                    let neg = (!*w).overflowing_add(Word::one()).0;
                    format!("-{neg}")
                } else {
                    w.to_string()
                }
            }
            AbiValue::Address(a) => format!("{a:?}"),
            AbiValue::Bool(b) => b.to_string(),
            AbiValue::FixedBytes(b) | AbiValue::Bytes(b) => crate::primitives::hex_bytes(b),
            AbiValue::String(s) => format!("{s:?}"),
            AbiValue::Array(vs) => format!(
                "[{}]",
                vs.iter().map(|v| v.render()).collect::<Vec<_>>().join(", ")
            ),
            AbiValue::Tuple(vs) => format!(
                "({})",
                vs.iter().map(|v| v.render()).collect::<Vec<_>>().join(", ")
            ),
        }
    }

    pub fn as_uint(&self) -> Option<Word> {
        match self {
            AbiValue::Uint(w) => Some(*w),
            _ => None,
        }
    }

    pub fn as_address(&self) -> Option<Address> {
        match self {
            AbiValue::Address(a) => Some(*a),
            _ => None,
        }
    }
}

/// One callable function from a contract ABI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbiFunction {
    pub name: String,
    pub selector: Selector,
    pub inputs: Vec<AbiParam>,
    pub outputs: Vec<AbiParam>,
}

/// Named, typed parameter. The type is kept both parsed and canonical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbiParam {
    pub name: String,
    pub ty: AbiType,
}

impl Serialize for AbiParam {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = ser.serialize_struct("AbiParam", 2)?;
        s.serialize_field("name", &self.name)?;
        s.serialize_field("type", &self.ty.canonical())?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for AbiParam {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            #[serde(default)]
            name: String,
            #[serde(rename = "type")]
            ty: String,
        }
        let w = Wire::deserialize(de)?;
        Ok(AbiParam {
            name: w.name,
            ty: AbiType::parse(&w.ty).map_err(serde::de::Error::custom)?,
        })
    }
}

impl AbiFunction {
    /// Build a function from its parts, computing the selector from the
    /// canonical signature.
    pub fn new(name: &str, inputs: Vec<(&str, AbiType)>, outputs: Vec<(&str, AbiType)>) -> Self {
        let inputs: Vec<AbiParam> = inputs
            .into_iter()
            .map(|(n, t)| AbiParam { name: n.into(), ty: t })
            .collect();
        let outputs: Vec<AbiParam> = outputs
            .into_iter()
            .map(|(n, t)| AbiParam { name: n.into(), ty: t })
            .collect();
        let sig = format!(
            "{name}({})",
            inputs.iter().map(|p| p.ty.canonical()).collect::<Vec<_>>().join(",")
        );
        let digest = keccak256(sig.as_bytes());
        AbiFunction {
            name: name.into(),
            selector: Selector([
                digest.as_bytes()[0],
                digest.as_bytes()[1],
                digest.as_bytes()[2],
                digest.as_bytes()[3],
            ]),
            inputs,
            outputs,
        }
    }

    pub fn signature(&self) -> String {
        format!(
            "{}({})",
            self.name,
            self.inputs.iter().map(|p| p.ty.canonical()).collect::<Vec<_>>().join(",")
        )
    }

    /// selector ++ encoded arguments.
    pub fn encode_call(&self, args: &[AbiValue]) -> Result<Vec<u8>, AbiError> {
        let types: Vec<AbiType> = self.inputs.iter().map(|p| p.ty.clone()).collect();
        let mut out = self.selector.0.to_vec();
        out.extend_from_slice(&encode_params(&types, args)?);
        Ok(out)
    }
}

/// Encode a parameter sequence per the standard head/tail rules.
pub fn encode_params(types: &[AbiType], values: &[AbiValue]) -> Result<Vec<u8>, AbiError> {
    if types.len() != values.len() {
        return Err(AbiError::Mismatch(format!(
            "{} types vs {} values",
            types.len(),
            values.len()
        )));
    }
    let items: Vec<(&AbiType, &AbiValue)> = types.iter().zip(values.iter()).collect();
    encode_sequence(&items)
}

fn encode_sequence(items: &[(&AbiType, &AbiValue)]) -> Result<Vec<u8>, AbiError> {
    let head_total: usize = items.iter().map(|(t, _)| t.head_size()).sum();
    let mut heads: Vec<u8> = Vec::with_capacity(head_total);
    let mut tails: Vec<u8> = Vec::new();
    for (ty, value) in items {
        if ty.is_dynamic() {
            heads.extend_from_slice(&word_to_bytes32(Word::from(head_total + tails.len())));
            tails.extend_from_slice(&encode_tail(ty, value)?);
        } else {
            encode_static(ty, value, &mut heads)?;
        }
    }
    heads.extend_from_slice(&tails);
    Ok(heads)
}

fn encode_static(ty: &AbiType, value: &AbiValue, out: &mut Vec<u8>) -> Result<(), AbiError> {
    let mismatch = || AbiError::Mismatch(format!("value does not fit {}", ty.canonical()));
    match (ty, value) {
        (AbiType::Uint(bits), AbiValue::Uint(w)) => {
            if *bits < 256 && (*w >> *bits) != Word::zero() {
                return Err(mismatch());
            }
            out.extend_from_slice(&word_to_bytes32(*w));
        }
        (AbiType::Int(bits), AbiValue::Int(w)) => {
            if *bits < 256 {
                let shifted = *w >> (*bits - 1);
                let all_ones = Word::MAX >> (*bits - 1);
                if shifted != Word::zero() && shifted != all_ones {
                    return Err(mismatch());
                }
            }
            out.extend_from_slice(&word_to_bytes32(*w));
        }
        (AbiType::Address, AbiValue::Address(a)) => {
            out.extend_from_slice(&word_to_bytes32(crate::primitives::address_to_word(*a)));
        }
        (AbiType::Bool, AbiValue::Bool(b)) => {
            out.extend_from_slice(&word_to_bytes32(Word::from(*b as u64)));
        }
        (AbiType::FixedBytes(n), AbiValue::FixedBytes(bytes)) => {
            if bytes.len() != *n {
                return Err(mismatch());
            }
            let mut word = [0u8; 32];
            word[..*n].copy_from_slice(bytes);
            out.extend_from_slice(&word);
        }
        (AbiType::FixedArray(t, n), AbiValue::Array(vs)) => {
            if vs.len() != *n {
                return Err(mismatch());
            }
            for v in vs {
                encode_static(t, v, out)?;
            }
        }
        (AbiType::Tuple(ts), AbiValue::Tuple(vs)) => {
            if ts.len() != vs.len() {
                return Err(mismatch());
            }
            for (t, v) in ts.iter().zip(vs) {
                encode_static(t, v, out)?;
            }
        }
        _ => return Err(mismatch()),
    }
    Ok(())
}

fn encode_tail(ty: &AbiType, value: &AbiValue) -> Result<Vec<u8>, AbiError> {
    let mismatch = || AbiError::Mismatch(format!("value does not fit {}", ty.canonical()));
    match (ty, value) {
        (AbiType::Bytes, AbiValue::Bytes(data)) => Ok(encode_len_prefixed(data)),
        (AbiType::String, AbiValue::String(s)) => Ok(encode_len_prefixed(s.as_bytes())),
        (AbiType::Array(t), AbiValue::Array(vs)) => {
            let mut out = word_to_bytes32(Word::from(vs.len())).to_vec();
            let items: Vec<(&AbiType, &AbiValue)> = vs.iter().map(|v| (t.as_ref(), v)).collect();
            out.extend_from_slice(&encode_sequence(&items)?);
            Ok(out)
        }
        (AbiType::FixedArray(t, n), AbiValue::Array(vs)) => {
            if vs.len() != *n {
                return Err(mismatch());
            }
            let items: Vec<(&AbiType, &AbiValue)> = vs.iter().map(|v| (t.as_ref(), v)).collect();
            encode_sequence(&items)
        }
        (AbiType::Tuple(ts), AbiValue::Tuple(vs)) => {
            if ts.len() != vs.len() {
                return Err(mismatch());
            }
            let items: Vec<(&AbiType, &AbiValue)> = ts.iter().zip(vs.iter()).collect();
            encode_sequence(&items)
        }
        _ => Err(mismatch()),
    }
}

fn encode_len_prefixed(data: &[u8]) -> Vec<u8> {
    let mut out = word_to_bytes32(Word::from(data.len())).to_vec();
    out.extend_from_slice(data);
    let pad = (32 - data.len() % 32) % 32;
    out.extend(std::iter::repeat(0u8).take(pad));
    out
}

/// Decode a parameter sequence. Returns the values and whether the byte
/// string was consumed exactly (up to 32-byte padding).
pub fn decode_params(types: &[AbiType], data: &[u8]) -> Result<(Vec<AbiValue>, bool), AbiError> {
    let mut extent = 0usize;
    let values = decode_sequence(types, data, &mut extent)?;
    Ok((values, extent == data.len()))
}

fn decode_sequence(
    types: &[AbiType],
    block: &[u8],
    extent: &mut usize,
) -> Result<Vec<AbiValue>, AbiError> {
    let mut cursor = 0usize;
    let mut values = Vec::with_capacity(types.len());
    for ty in types {
        if ty.is_dynamic() {
            let off_word = read_word(block, cursor)?;
            cursor += 32;
            if off_word > Word::from(block.len()) {
                return Err(AbiError::Decode("offset past end of data".into()));
            }
            let off = off_word.as_usize();
            let mut tail_extent = 0usize;
            let value = decode_tail(ty, &block[off..], &mut tail_extent)?;
            *extent = (*extent).max(off + tail_extent);
            values.push(value);
        } else {
            let value = decode_static(ty, block, &mut cursor)?;
            values.push(value);
        }
    }
    *extent = (*extent).max(cursor);
    Ok(values)
}

fn decode_tail(ty: &AbiType, block: &[u8], extent: &mut usize) -> Result<AbiValue, AbiError> {
    match ty {
        AbiType::Bytes | AbiType::String => {
            let len_word = read_word(block, 0)?;
            if len_word > Word::from(block.len()) {
                return Err(AbiError::Decode("length past end of data".into()));
            }
            let len = len_word.as_usize();
            if 32 + len > block.len() {
                return Err(AbiError::Decode("byte string truncated".into()));
            }
            let data = block[32..32 + len].to_vec();
            *extent = 32 + len + (32 - len % 32) % 32;
            if matches!(ty, AbiType::String) {
                let s = String::from_utf8(data)
                    .map_err(|_| AbiError::Decode("invalid utf-8 in string".into()))?;
                Ok(AbiValue::String(s))
            } else {
                Ok(AbiValue::Bytes(data))
            }
        }
        AbiType::Array(t) => {
            let len_word = read_word(block, 0)?;
            // A length implying more heads than bytes remain is garbage.
            if len_word > Word::from(block.len() / 32 + 1) {
                return Err(AbiError::Decode("array length past end of data".into()));
            }
            let len = len_word.as_usize();
            let elem_types: Vec<AbiType> = std::iter::repeat((**t).clone()).take(len).collect();
            let mut inner_extent = 0usize;
            let values = decode_sequence(&elem_types, &block[32..], &mut inner_extent)?;
            *extent = 32 + inner_extent;
            Ok(AbiValue::Array(values))
        }
        AbiType::FixedArray(t, n) => {
            let elem_types: Vec<AbiType> = std::iter::repeat((**t).clone()).take(*n).collect();
            let values = decode_sequence(&elem_types, block, extent)?;
            Ok(AbiValue::Array(values))
        }
        AbiType::Tuple(ts) => {
            let values = decode_sequence(ts, block, extent)?;
            Ok(AbiValue::Tuple(values))
        }
        _ => unreachable!("static types are not tails"),
    }
}

fn decode_static(ty: &AbiType, block: &[u8], cursor: &mut usize) -> Result<AbiValue, AbiError> {
    match ty {
        AbiType::FixedArray(t, n) => {
            let mut values = Vec::with_capacity(*n);
            for _ in 0..*n {
                values.push(decode_static(t, block, cursor)?);
            }
            return Ok(AbiValue::Array(values));
        }
        AbiType::Tuple(ts) => {
            let mut values = Vec::with_capacity(ts.len());
            for t in ts {
                values.push(decode_static(t, block, cursor)?);
            }
            return Ok(AbiValue::Tuple(values));
        }
        _ => {}
    }
    let word = read_word(block, *cursor)?;
    let raw = &block[*cursor..*cursor + 32];
    *cursor += 32;
    let bad = |what: &str| AbiError::Decode(format!("{what} for {}", ty.canonical()));
    match ty {
        AbiType::Uint(bits) => {
            if *bits < 256 && (word >> *bits) != Word::zero() {
                return Err(bad("dirty high bits"));
            }
            Ok(AbiValue::Uint(word))
        }
        AbiType::Int(bits) => {
            if *bits < 256 {
                let shifted = word >> (*bits - 1);
                let all_ones = Word::MAX >> (*bits - 1);
                if shifted != Word::zero() && shifted != all_ones {
                    return Err(bad("dirty sign extension"));
                }
            }
            Ok(AbiValue::Int(word))
        }
        AbiType::Address => {
            if raw[..12].iter().any(|b| *b != 0) {
                return Err(bad("dirty padding"));
            }
            Ok(AbiValue::Address(crate::primitives::word_to_address(word)))
        }
        AbiType::Bool => match word {
            w if w == Word::zero() => Ok(AbiValue::Bool(false)),
            w if w == Word::one() => Ok(AbiValue::Bool(true)),
            _ => Err(bad("non-boolean word")),
        },
        AbiType::FixedBytes(n) => {
            if raw[*n..].iter().any(|b| *b != 0) {
                return Err(bad("dirty padding"));
            }
            Ok(AbiValue::FixedBytes(raw[..*n].to_vec()))
        }
        _ => unreachable!("dynamic types handled by caller"),
    }
}

fn read_word(block: &[u8], at: usize) -> Result<Word, AbiError> {
    if at + 32 > block.len() {
        return Err(AbiError::Decode("read past end of data".into()));
    }
    Ok(word_from_bytes(&block[at..at + 32]))
}

/// Load a standard contract-ABI JSON file, keeping `function` entries.
pub fn load_abi(path: impl AsRef<Path>) -> Result<Vec<AbiFunction>, AbiError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AbiError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_abi_json(&text)
}

/// Parse contract-ABI JSON from a string.
pub fn parse_abi_json(text: &str) -> Result<Vec<AbiFunction>, AbiError> {
    #[derive(Deserialize)]
    struct WireParam {
        #[serde(default)]
        name: String,
        #[serde(rename = "type")]
        ty: String,
        #[serde(default)]
        components: Option<Vec<WireParam>>,
    }
    #[derive(Deserialize)]
    struct WireEntry {
        #[serde(rename = "type", default)]
        kind: Option<String>,
        #[serde(default)]
        name: String,
        #[serde(default)]
        inputs: Option<Vec<WireParam>>,
        #[serde(default)]
        outputs: Option<Vec<WireParam>>,
    }

    fn build_type(p: &WireParam) -> Result<AbiType, AbiError> {
        if let Some(rest) = p.ty.strip_prefix("tuple") {
            let components = p
                .components
                .as_ref()
                .ok_or_else(|| AbiError::UnknownType(p.ty.clone()))?;
            let members = components.iter().map(build_type).collect::<Result<Vec<_>, _>>()?;
            let mut ty = AbiType::Tuple(members);
            // Apply array suffixes left-to-right: tuple[2][] nests outward.
            let mut rest = rest;
            while !rest.is_empty() {
                if let Some(r) = rest.strip_prefix("[]") {
                    ty = AbiType::Array(Box::new(ty));
                    rest = r;
                } else if let Some(close) = rest.find(']') {
                    let n: usize = rest[1..close]
                        .parse()
                        .map_err(|_| AbiError::UnknownType(p.ty.clone()))?;
                    ty = AbiType::FixedArray(Box::new(ty), n);
                    rest = &rest[close + 1..];
                } else {
                    return Err(AbiError::UnknownType(p.ty.clone()));
                }
            }
            Ok(ty)
        } else {
            AbiType::parse(&p.ty)
        }
    }

    let entries: Vec<WireEntry> = serde_json::from_str(text).map_err(AbiError::Json)?;
    let mut functions = Vec::new();
    for entry in &entries {
        if entry.kind.as_deref().unwrap_or("function") != "function" {
            continue;
        }
        let mut inputs = Vec::new();
        for p in entry.inputs.as_deref().unwrap_or(&[]) {
            inputs.push((p.name.clone(), build_type(p)?));
        }
        let mut outputs = Vec::new();
        for p in entry.outputs.as_deref().unwrap_or(&[]) {
            outputs.push((p.name.clone(), build_type(p)?));
        }
        functions.push(AbiFunction::new(
            &entry.name,
            inputs.iter().map(|(n, t)| (n.as_str(), t.clone())).collect(),
            outputs.iter().map(|(n, t)| (n.as_str(), t.clone())).collect(),
        ));
    }
    Ok(functions)
}

/// Find a function by selector.
pub fn find_by_selector(abis: &[AbiFunction], selector: Selector) -> Option<&AbiFunction> {
    abis.iter().find(|f| f.selector == selector)
}

#[derive(Debug, thiserror::Error)]
pub enum AbiError {
    #[error("unknown abi type: {0}")]
    UnknownType(String),
    #[error("type/value mismatch: {0}")]
    Mismatch(String),
    #[error("abi decode failed: {0}")]
    Decode(String),
    #[error("malformed abi json: {0}")]
    Json(#[source] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    fn erc20_transfer() -> AbiFunction {
        AbiFunction::new(
            "transfer",
            vec![("to", AbiType::Address), ("amount", AbiType::Uint(256))],
            vec![("ok", AbiType::Bool)],
        )
    }

    #[test]
    fn transfer_selector_matches_keccak() {
        assert_eq!(erc20_transfer().selector.0, [0xa9, 0x05, 0x9c, 0xbb]);
        assert_eq!(erc20_transfer().signature(), "transfer(address,uint256)");
    }

    #[test]
    fn foo_selector_from_canonical_signature() {
        let f = AbiFunction::new("foo", vec![], vec![]);
        let digest = keccak256(b"foo()");
        assert_eq!(&f.selector.0, &digest.as_bytes()[..4]);
    }

    #[test]
    fn encode_decode_transfer_args() {
        let f = erc20_transfer();
        let to = Address::repeat_byte(0x11);
        let args = vec![AbiValue::Address(to), AbiValue::Uint(Word::from(5u64))];
        let calldata = f.encode_call(&args).unwrap();
        assert_eq!(calldata.len(), 4 + 64);
        let types: Vec<AbiType> = f.inputs.iter().map(|p| p.ty.clone()).collect();
        let (decoded, exact) = decode_params(&types, &calldata[4..]).unwrap();
        assert!(exact);
        assert_eq!(decoded, args);
    }

    #[test]
    fn dynamic_offset_past_end_is_decode_error() {
        let types = vec![AbiType::Bytes];
        let mut data = word_to_bytes32(Word::from(4096u64)).to_vec();
        data.extend_from_slice(&[0u8; 32]);
        assert!(decode_params(&types, &data).is_err());
    }

    #[test]
    fn trailing_garbage_is_not_exact() {
        let types = vec![AbiType::Uint(256)];
        let mut data = word_to_bytes32(Word::from(1u64)).to_vec();
        data.extend_from_slice(&[0u8; 32]);
        let (_, exact) = decode_params(&types, &data).unwrap();
        assert!(!exact);
    }

    #[test]
    fn dynamic_roundtrip_with_string_and_array() {
        let types = vec![
            AbiType::String,
            AbiType::Array(Box::new(AbiType::Uint(8))),
            AbiType::Bool,
        ];
        let values = vec![
            AbiValue::String("hello world".into()),
            AbiValue::Array(vec![
                AbiValue::Uint(Word::from(1u64)),
                AbiValue::Uint(Word::from(2u64)),
                AbiValue::Uint(Word::from(3u64)),
            ]),
            AbiValue::Bool(true),
        ];
        let encoded = encode_params(&types, &values).unwrap();
        let (decoded, exact) = decode_params(&types, &encoded).unwrap();
        assert!(exact);
        assert_eq!(decoded, values);
    }

    #[test]
    fn uint_range_enforced() {
        let types = vec![AbiType::Uint(8)];
        let data = word_to_bytes32(Word::from(256u64));
        assert!(decode_params(&types, &data).is_err());
        assert!(encode_params(&types, &[AbiValue::Uint(Word::from(256u64))]).is_err());
    }

    #[test]
    fn int_sign_extension_checked() {
        let types = vec![AbiType::Int(8)];
        // -1 as int8: all bytes 0xff.
        let data = [0xffu8; 32];
        let (vals, _) = decode_params(&types, &data).unwrap();
        assert_eq!(vals[0].render(), "-1");
        // 0x01ff is not a valid int8.
        let mut bad = [0u8; 32];
        bad[30] = 1;
        bad[31] = 0xff;
        assert!(decode_params(&types, &bad).is_err());
    }

    #[test]
    fn abi_json_filters_to_functions() {
        let json = r#"[
          {"type": "event", "name": "Transfer", "inputs": []},
          {"type": "function", "name": "balanceOf",
           "inputs": [{"name": "owner", "type": "address"}],
           "outputs": [{"name": "", "type": "uint256"}]},
          {"type": "constructor", "inputs": []}
        ]"#;
        let fns = parse_abi_json(json).unwrap();
        assert_eq!(fns.len(), 1);
        assert_eq!(fns[0].name, "balanceOf");
        assert_eq!(fns[0].selector.0, [0x70, 0xa0, 0x82, 0x31]);
    }

    #[test]
    fn empty_and_eventful_abis_yield_no_functions() {
        assert!(parse_abi_json("[]").unwrap().is_empty());
        let events = r#"[{"type":"event","name":"E","inputs":[]}]"#;
        assert!(parse_abi_json(events).unwrap().is_empty());
    }

    #[test]
    fn unknown_type_is_named() {
        let json = r#"[{"type":"function","name":"f","inputs":[{"name":"x","type":"quaternion"}]}]"#;
        match parse_abi_json(json) {
            Err(AbiError::UnknownType(t)) => assert_eq!(t, "quaternion"),
            other => panic!("expected unknown-type error, got {other:?}"),
        }
    }

    #[test]
    fn tuple_components_build() {
        let json = r#"[{"type":"function","name":"setPair",
            "inputs":[{"name":"p","type":"tuple","components":[
                {"name":"a","type":"address"},{"name":"n","type":"uint256"}]}],
            "outputs":[]}]"#;
        let fns = parse_abi_json(json).unwrap();
        assert_eq!(fns[0].signature(), "setPair((address,uint256))");
        let args = vec![AbiValue::Tuple(vec![
            AbiValue::Address(Address::repeat_byte(9)),
            AbiValue::Uint(Word::from(3u64)),
        ])];
        let data = fns[0].encode_call(&args).unwrap();
        let types: Vec<AbiType> = fns[0].inputs.iter().map(|p| p.ty.clone()).collect();
        let (decoded, exact) = decode_params(&types, &data[4..]).unwrap();
        assert!(exact);
        assert_eq!(decoded, args);
    }
}
