//! Per-instruction fact emission for downstream analyzers.
//!
//! Fact file grammar (version 1): header lines `#tx`, `#block`, `#from`,
//! `#to`, then one line per instruction:
//!
//! ```text
//! <index>\t<relation>\t<operand1>,<operand2>,...
//! ```
//!
//! The relation is the lowercase mnemonic; operands are the instruction's
//! consumed stack words top-first, followed by the produced value read
//! from the next entry of the same frame when the opcode pushes one.
//! Operands are `0x`-prefixed minimal hex, output is UTF-8 with LF
//! endings. The grammar lives behind one formatting function so an
//! exact-compatibility backend for a specific downstream tool can be
//! swapped in.

use crate::ingest::{RawTrace, TransactionMeta};
use crate::opcode::{normalize, stack_arity};
use crate::parser::InvocationNode;
use crate::primitives::hex_word;

#[derive(Debug, thiserror::Error)]
pub enum TranslateError {
    #[error("malformed trace at index {index}: {reason}")]
    MalformedTrace { index: usize, reason: String },
}

/// One emitted fact line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactLine {
    pub index: usize,
    pub relation: String,
    pub operands: Vec<String>,
}

impl FactLine {
    fn render(&self) -> String {
        format!("{}\t{}\t{}", self.index, self.relation, self.operands.join(","))
    }
}

/// Translate one transaction into fact-file content. The invocation tree
/// is part of the interface for backends that need frame structure; the
/// v1 grammar derives everything from the trace itself.
pub fn to_fact_file(
    meta: &TransactionMeta,
    trace: &RawTrace,
    tree: &InvocationNode,
) -> Result<String, TranslateError> {
    let _ = tree;
    let mut out = String::new();
    out.push_str(&format!("#tx {:?}\n", meta.tx_hash));
    out.push_str(&format!("#block {}\n", meta.block_number));
    out.push_str(&format!("#from {:?}\n", meta.origin));
    match meta.to {
        Some(to) => out.push_str(&format!("#to {to:?}\n")),
        None => out.push_str("#to -\n"),
    }
    for line in fact_lines(trace)? {
        out.push_str(&line.render());
        out.push('\n');
    }
    Ok(out)
}

/// The fact lines alone, one per structLog entry.
pub fn fact_lines(trace: &RawTrace) -> Result<Vec<FactLine>, TranslateError> {
    let entries = &trace.entries;
    let mut lines = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let op = normalize(&entry.op);
        let mut operands = Vec::new();
        if let Some((pops, pushes)) = stack_arity(&op) {
            if entry.stack.len() < pops {
                return Err(TranslateError::MalformedTrace {
                    index: i,
                    reason: format!(
                        "stack depth {} below arity {} of {}",
                        entry.stack.len(),
                        pops,
                        op
                    ),
                });
            }
            for n in 0..pops {
                operands.push(hex_word(entry.stack[entry.stack.len() - 1 - n]));
            }
            // The produced value is observable on the next entry of the
            // same frame; deeper entries in between belong to a callee.
            if pushes > 0 && entry.error.is_none() {
                let mut produced = None;
                for next in &entries[i + 1..] {
                    if next.depth == entry.depth {
                        produced = next.stack.last().copied();
                        break;
                    }
                    if next.depth < entry.depth {
                        break;
                    }
                }
                if let Some(word) = produced {
                    operands.push(hex_word(word));
                }
            }
        }
        lines.push(FactLine {
            index: i,
            relation: entry.op.to_ascii_lowercase(),
            operands,
        });
    }
    Ok(lines)
}

/// Recover the opcode mnemonic sequence from fact-file content; the
/// inverse of the relation column.
pub fn opcode_sequence(fact_file: &str) -> Vec<String> {
    fact_file
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .filter_map(|l| l.split('\t').nth(1))
        .map(|rel| rel.to_ascii_uppercase())
        .collect()
}
