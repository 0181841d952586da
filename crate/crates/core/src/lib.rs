//! Transaction-trace analysis for EVM chains.
//!
//! The pipeline turns a raw replay trace (structLogs) plus transaction
//! metadata into:
//!
//! - an invocation tree with per-frame storage and sha3 event logs
//!   ([`parser`]),
//! - decoded calls and structural storage-slot paths ([`decoder`]),
//! - taint/data-flow facts from shadow execution ([`dataflow`]),
//! - concrete invariants inferred from transaction corpora
//!   ([`invariants`]),
//! - and per-instruction fact files for downstream analyzers
//!   ([`translator`]).
//!
//! Traces come from a JSON-RPC endpoint with file-backed caching or from
//! offline fixtures ([`ingest`]); a small synthetic EVM ([`oracle`])
//! executes hand-written programs and doubles as the test oracle for the
//! whole stack.

pub mod dataflow;
pub mod decoder;
pub mod ingest;
pub mod invariants;
pub mod opcode;
pub mod oracle;
pub mod parser;
pub mod pipeline;
pub mod primitives;
pub mod samples;
pub mod translator;
