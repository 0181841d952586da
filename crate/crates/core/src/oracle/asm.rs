//! Line-based assembler for test programs.
//!
//! One instruction per line: a mnemonic and, for PUSH1..PUSH32, one
//! immediate (`0x`-hex or decimal). `#` and `//` start comments. Blank
//! lines are ignored.
//!
//! ```text
//! PUSH1 0x05      # slot
//! PUSH1 7
//! SSTORE
//! STOP
//! ```

use crate::opcode::{immediate_len, opcode_byte};
use crate::primitives::{parse_hex_word, word_to_bytes32};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic {mnemonic:?}")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: {mnemonic} takes no immediate")]
    UnexpectedImmediate { line: usize, mnemonic: String },
    #[error("line {line}: {mnemonic} needs an immediate")]
    MissingImmediate { line: usize, mnemonic: String },
    #[error("line {line}: immediate {value:?} does not fit in {width} bytes")]
    ImmediateTooWide {
        line: usize,
        value: String,
        width: usize,
    },
    #[error("line {line}: malformed immediate {value:?}")]
    BadImmediate { line: usize, value: String },
    #[error("line {line}: trailing tokens after immediate")]
    TrailingTokens { line: usize },
}

/// Assemble program text into bytecode.
pub fn assemble(text: &str) -> Result<Vec<u8>, AsmError> {
    let mut code = Vec::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = lineno + 1;
        let stripped = raw_line
            .split('#')
            .next()
            .unwrap_or("")
            .split("//")
            .next()
            .unwrap_or("")
            .trim();
        if stripped.is_empty() {
            continue;
        }
        let mut tokens = stripped.split_whitespace();
        let mnemonic = tokens.next().expect("non-empty line has a token");
        let byte = opcode_byte(mnemonic).ok_or_else(|| AsmError::UnknownMnemonic {
            line,
            mnemonic: mnemonic.to_string(),
        })?;
        code.push(byte);

        let width = immediate_len(byte);
        let immediate = tokens.next();
        if width == 0 {
            if immediate.is_some() {
                return Err(AsmError::UnexpectedImmediate {
                    line,
                    mnemonic: mnemonic.to_string(),
                });
            }
            continue;
        }
        let value = immediate.ok_or_else(|| AsmError::MissingImmediate {
            line,
            mnemonic: mnemonic.to_string(),
        })?;
        if tokens.next().is_some() {
            return Err(AsmError::TrailingTokens { line });
        }
        let word = if value.starts_with("0x") || value.starts_with("0X") {
            parse_hex_word(value).map_err(|_| AsmError::BadImmediate {
                line,
                value: value.to_string(),
            })?
        } else {
            crate::primitives::Word::from_dec_str(value).map_err(|_| AsmError::BadImmediate {
                line,
                value: value.to_string(),
            })?
        };
        let bytes = word_to_bytes32(word);
        if bytes[..32 - width].iter().any(|b| *b != 0) {
            return Err(AsmError::ImmediateTooWide {
                line,
                value: value.to_string(),
                width,
            });
        }
        code.extend_from_slice(&bytes[32 - width..]);
    }
    Ok(code)
}
