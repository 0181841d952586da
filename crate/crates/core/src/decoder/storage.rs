//! Storage-slot decoding: reconstruct how a raw 256-bit slot was derived
//! from a base variable through mapping keys, array indices, and struct
//! offsets, using the sha3 computations recorded in the trace.
//!
//! Slot derivation follows the standard layout rules:
//!   - mapping value slot  = keccak(pad32(key) ++ pad32(parent_slot))
//!   - dynamic array data  = keccak(pad32(parent_slot)) + index
//!   - struct member       = parent_slot + offset
//!
//! The decoder searches the recorded sha3 outputs for the raw slot
//! (exactly, or minus a small additive offset), then recurses on the
//! trailing 32 bytes of the matching preimage as the parent slot. A
//! 64-byte preimage is a mapping access, a 32-byte preimage a dynamic
//! array; additive offsets after a mapping hash are struct members, after
//! an array hash element indices.

use serde::{Deserialize, Serialize};

use crate::parser::{Sha3Record, StorageAccessEvent};
use crate::primitives::{keccak256, word_from_bytes, word_to_bytes32, Word};

/// One step along a slot derivation path, ordered base-outward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotStep {
    MappingKey(Word),
    ArrayIndex(u64),
    StructOffset(u64),
}

/// A decoded slot: base variable slot plus the derivation steps that
/// reproduce the raw slot under forward evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedSlotPath {
    pub base_slot: Word,
    pub steps: Vec<SlotStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable_name: Option<String>,
}

impl DecodedSlotPath {
    /// Re-evaluate the path forward; must reproduce the raw slot exactly.
    pub fn forward_eval(&self) -> Word {
        let mut slot = self.base_slot;
        for step in &self.steps {
            slot = match step {
                SlotStep::MappingKey(key) => {
                    let mut buf = [0u8; 64];
                    buf[..32].copy_from_slice(&word_to_bytes32(*key));
                    buf[32..].copy_from_slice(&word_to_bytes32(slot));
                    word_from_bytes(keccak256(&buf).as_bytes())
                }
                SlotStep::ArrayIndex(i) => {
                    let hashed = word_from_bytes(keccak256(&word_to_bytes32(slot)).as_bytes());
                    hashed.overflowing_add(Word::from(*i)).0
                }
                SlotStep::StructOffset(o) => slot.overflowing_add(Word::from(*o)).0,
            };
        }
        slot
    }

    /// Human-readable rendering: `name[key][2].+1` style.
    pub fn render(&self) -> String {
        let mut out = match &self.variable_name {
            Some(name) => name.clone(),
            None => format!("slot {}", crate::primitives::hex_word(self.base_slot)),
        };
        for step in &self.steps {
            match step {
                SlotStep::MappingKey(k) => {
                    out.push_str(&format!("[{}]", crate::primitives::hex_word(*k)))
                }
                SlotStep::ArrayIndex(i) => out.push_str(&format!("[{i}]")),
                SlotStep::StructOffset(o) => out.push_str(&format!(".+{o}")),
            }
        }
        out
    }
}

/// One storage-layout entry: a top-level variable and its base slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub label: String,
    pub slot: Word,
    /// Type descriptor as emitted by compiler storage-layout output
    /// (e.g. `t_mapping(t_address,t_uint256)`); opaque to the decoder.
    #[serde(rename = "type")]
    pub type_desc: String,
}

/// A contract's storage layout: the map from base slots to variable names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StorageLayout {
    pub entries: Vec<LayoutEntry>,
}

impl StorageLayout {
    /// Names of the variables rooted at `slot` (packed variables share a
    /// slot, hence possibly several).
    pub fn names_at(&self, slot: Word) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.slot == slot)
            .map(|e| e.label.as_str())
            .collect()
    }
}

/// Tunables for slot-path reconstruction.
#[derive(Debug, Clone)]
pub struct SlotDecodeConfig {
    /// Largest additive offset searched when matching `hash + k` slots.
    pub max_array_span: u64,
    /// Slots below this are literal base slots terminating recursion.
    pub small_slot_threshold: Word,
}

impl Default for SlotDecodeConfig {
    fn default() -> Self {
        SlotDecodeConfig {
            max_array_span: 1 << 16,
            small_slot_threshold: Word::from(1u64) << 32,
        }
    }
}

/// Decode one storage access against the transaction's sha3 records.
/// Undecodable slots yield `None`; the raw slot stays available on the
/// event either way.
pub fn decode_storage_access(
    event: &StorageAccessEvent,
    sha3_records: &[Sha3Record],
    layout: Option<&StorageLayout>,
    config: &SlotDecodeConfig,
) -> Option<DecodedSlotPath> {
    // Only computations that happened before the access can explain it.
    let available: Vec<&Sha3Record> = sha3_records
        .iter()
        .filter(|r| r.instruction_index < event.instruction_index)
        .collect();
    let (base_slot, steps) = resolve_slot(event.raw_slot, &available, config, 0)?;
    let variable_name = layout.and_then(|l| {
        let names = l.names_at(base_slot);
        if names.is_empty() {
            None
        } else {
            Some(names.join("|"))
        }
    });
    Some(DecodedSlotPath {
        base_slot,
        steps,
        variable_name,
    })
}

const MAX_CHAIN_DEPTH: u32 = 32;

fn resolve_slot(
    slot: Word,
    records: &[&Sha3Record],
    config: &SlotDecodeConfig,
    depth: u32,
) -> Option<(Word, Vec<SlotStep>)> {
    if slot < config.small_slot_threshold {
        return Some((slot, Vec::new()));
    }
    if depth >= MAX_CHAIN_DEPTH {
        return None;
    }

    // Candidates: exact matches first, then additive-offset matches with
    // the smallest delta; same-output ties go to the latest computation,
    // which is the one the contract actually used.
    let mut candidates: Vec<(&&Sha3Record, u64)> = Vec::new();
    for record in records {
        if !matches!(record.input.len(), 32 | 64) {
            continue;
        }
        let out = record.output;
        if out == slot {
            candidates.push((record, 0));
        } else if out < slot {
            let delta = slot - out;
            if delta <= Word::from(config.max_array_span) {
                candidates.push((record, delta.as_u64()));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.1.cmp(&b.1)
            .then(b.0.instruction_index.cmp(&a.0.instruction_index))
    });

    for (record, delta) in candidates {
        let parent = word_from_bytes(&record.input[record.input.len() - 32..]);
        let Some((base, mut steps)) = resolve_slot(parent, records, config, depth + 1) else {
            continue;
        };
        match record.input.len() {
            64 => {
                steps.push(SlotStep::MappingKey(word_from_bytes(&record.input[..32])));
                if delta > 0 {
                    steps.push(SlotStep::StructOffset(delta));
                }
            }
            32 => steps.push(SlotStep::ArrayIndex(delta)),
            _ => unreachable!("filtered above"),
        }
        return Some((base, steps));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::StorageAccessKind;

    fn record(input: Vec<u8>, index: usize) -> Sha3Record {
        let output = word_from_bytes(keccak256(&input).as_bytes());
        Sha3Record {
            input,
            output,
            instruction_index: index,
        }
    }

    fn event(raw_slot: Word, index: usize) -> StorageAccessEvent {
        StorageAccessEvent {
            kind: StorageAccessKind::Store,
            raw_slot,
            value: Word::from(1u64),
            instruction_index: index,
            rolled_back: false,
            decoded: None,
        }
    }

    fn mapping_preimage(key: Word, slot: Word) -> Vec<u8> {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(&word_to_bytes32(key));
        buf.extend_from_slice(&word_to_bytes32(slot));
        buf
    }

    #[test]
    fn small_slot_is_literal_base() {
        let path = decode_storage_access(
            &event(Word::from(3u64), 10),
            &[],
            None,
            &SlotDecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(path.base_slot, Word::from(3u64));
        assert!(path.steps.is_empty());
        assert_eq!(path.forward_eval(), Word::from(3u64));
    }

    #[test]
    fn single_mapping_key() {
        let key = crate::primitives::address_to_word(crate::primitives::Address::repeat_byte(0x22));
        let base = Word::from(2u64);
        let rec = record(mapping_preimage(key, base), 5);
        let raw = rec.output;
        let path = decode_storage_access(
            &event(raw, 10),
            &[rec],
            None,
            &SlotDecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(path.base_slot, base);
        assert_eq!(path.steps, vec![SlotStep::MappingKey(key)]);
        assert_eq!(path.forward_eval(), raw);
    }

    #[test]
    fn nested_mapping_chains_two_records() {
        let (k1, k2) = (Word::from(0xaau64), Word::from(0xbbu64));
        let base = Word::from(7u64);
        let inner = record(mapping_preimage(k1, base), 3);
        let outer = record(mapping_preimage(k2, inner.output), 6);
        let raw = outer.output;
        let path = decode_storage_access(
            &event(raw, 10),
            &[inner, outer],
            None,
            &SlotDecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(path.base_slot, base);
        assert_eq!(
            path.steps,
            vec![SlotStep::MappingKey(k1), SlotStep::MappingKey(k2)]
        );
        assert_eq!(path.forward_eval(), raw);
    }

    #[test]
    fn dynamic_array_index_uses_additive_offset() {
        let base = Word::from(4u64);
        let rec = record(word_to_bytes32(base).to_vec(), 2);
        let raw = rec.output.overflowing_add(Word::from(9u64)).0;
        let path = decode_storage_access(
            &event(raw, 10),
            &[rec],
            None,
            &SlotDecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(path.base_slot, base);
        assert_eq!(path.steps, vec![SlotStep::ArrayIndex(9)]);
        assert_eq!(path.forward_eval(), raw);
    }

    #[test]
    fn struct_member_after_mapping() {
        let key = Word::from(0x33u64);
        let base = Word::from(1u64);
        let rec = record(mapping_preimage(key, base), 4);
        let raw = rec.output.overflowing_add(Word::from(2u64)).0;
        let path = decode_storage_access(
            &event(raw, 10),
            &[rec],
            None,
            &SlotDecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(
            path.steps,
            vec![SlotStep::MappingKey(key), SlotStep::StructOffset(2)]
        );
        assert_eq!(path.forward_eval(), raw);
    }

    #[test]
    fn ties_resolve_to_latest_record() {
        // Two records claiming the same output from different parents
        // (fabricated outputs; real keccak cannot collide). The later
        // computation must win.
        let key = Word::from(0x44u64);
        let shared_output = word_from_bytes(keccak256(b"shared").as_bytes());
        let early = Sha3Record {
            input: mapping_preimage(key, Word::from(2u64)),
            output: shared_output,
            instruction_index: 1,
        };
        let late = Sha3Record {
            input: mapping_preimage(key, Word::from(9u64)),
            output: shared_output,
            instruction_index: 7,
        };
        let path = decode_storage_access(
            &event(shared_output, 20),
            &[early, late],
            None,
            &SlotDecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(path.base_slot, Word::from(9u64));
    }

    #[test]
    fn records_after_the_event_are_ignored() {
        let key = Word::from(0x45u64);
        let rec = record(mapping_preimage(key, Word::from(2u64)), 8);
        let raw = rec.output;
        assert!(decode_storage_access(
            &event(raw, 3),
            &[rec],
            None,
            &SlotDecodeConfig::default()
        )
        .is_none());
    }

    #[test]
    fn undecodable_huge_slot_returns_none() {
        let raw = word_from_bytes(keccak256(b"unrelated").as_bytes());
        assert!(decode_storage_access(
            &event(raw, 10),
            &[],
            None,
            &SlotDecodeConfig::default()
        )
        .is_none());
    }

    #[test]
    fn layout_names_base_variable() {
        let layout = StorageLayout {
            entries: vec![LayoutEntry {
                label: "balances".into(),
                slot: Word::from(2u64),
                type_desc: "t_mapping(t_address,t_uint256)".into(),
            }],
        };
        let key = Word::from(0x55u64);
        let rec = record(mapping_preimage(key, Word::from(2u64)), 1);
        let raw = rec.output;
        let path = decode_storage_access(
            &event(raw, 9),
            &[rec],
            Some(&layout),
            &SlotDecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(path.variable_name.as_deref(), Some("balances"));
        assert_eq!(path.render(), format!("balances[{}]", crate::primitives::hex_word(key)));
    }
}
