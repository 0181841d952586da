//! Reconstructed frame memory.
//!
//! Traces are fetched stack-only by default, yet calldata extraction and
//! sha3 preimages need memory contents. EVM memory starts zeroed and the
//! values written by MSTORE/CALLDATACOPY/... are all visible in the stack
//! snapshots, so memory can be rebuilt byte-for-byte as long as only
//! modelled opcodes write to it. Writes we cannot model (CODECOPY and
//! friends) poison their target range: reads overlapping a poisoned range
//! come back zero-filled and flagged inexact.

/// Hard cap on modelled memory; operands beyond it are treated as opaque.
const MEMORY_CAP: u64 = 1 << 26;

#[derive(Debug, Clone, Default)]
pub struct FrameMemory {
    data: Vec<u8>,
    /// Disjoint, sorted half-open ranges whose contents are unknown.
    unknown: Vec<(usize, usize)>,
}

/// A range read out of reconstructed memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemRead {
    pub bytes: Vec<u8>,
    /// False when the range overlaps bytes written by un-modelled opcodes.
    pub exact: bool,
}

impl FrameMemory {
    pub fn new() -> Self {
        FrameMemory::default()
    }

    fn ensure(&mut self, end: usize) {
        if self.data.len() < end {
            self.data.resize(end, 0);
        }
    }

    fn clamp(offset: u64, len: u64) -> Option<(usize, usize)> {
        if len == 0 {
            return Some((0, 0));
        }
        if offset >= MEMORY_CAP || len > MEMORY_CAP || offset + len > MEMORY_CAP {
            return None;
        }
        Some((offset as usize, len as usize))
    }

    /// Write bytes whose value is known.
    pub fn write(&mut self, offset: u64, bytes: &[u8]) {
        let Some((off, len)) = Self::clamp(offset, bytes.len() as u64) else {
            return;
        };
        if len == 0 {
            return;
        }
        self.ensure(off + len);
        self.data[off..off + len].copy_from_slice(bytes);
        self.clear_unknown(off, off + len);
    }

    /// Mark a range as written by an un-modelled opcode.
    pub fn write_unknown(&mut self, offset: u64, len: u64) {
        let Some((off, len)) = Self::clamp(offset, len) else {
            return;
        };
        if len == 0 {
            return;
        }
        self.ensure(off + len);
        self.clear_unknown(off, off + len);
        self.unknown.push((off, off + len));
        self.unknown.sort_unstable();
    }

    fn clear_unknown(&mut self, start: usize, end: usize) {
        let mut next = Vec::with_capacity(self.unknown.len() + 1);
        for &(s, e) in &self.unknown {
            if e <= start || s >= end {
                next.push((s, e));
                continue;
            }
            if s < start {
                next.push((s, start));
            }
            if e > end {
                next.push((end, e));
            }
        }
        next.sort_unstable();
        self.unknown = next;
    }

    /// Read a range; zero-extends past the written extent like EVM memory.
    pub fn read(&self, offset: u64, len: u64) -> MemRead {
        let Some((off, len)) = Self::clamp(offset, len) else {
            return MemRead {
                bytes: vec![0; len.min(MEMORY_CAP) as usize],
                exact: false,
            };
        };
        let mut bytes = vec![0u8; len];
        let in_range = self.data.len().saturating_sub(off).min(len);
        if in_range > 0 {
            bytes[..in_range].copy_from_slice(&self.data[off..off + in_range]);
        }
        let exact = !self
            .unknown
            .iter()
            .any(|&(s, e)| s < off + len && e > off);
        MemRead { bytes, exact }
    }

    /// Copy within memory (MCOPY semantics).
    pub fn copy_within(&mut self, dest: u64, src: u64, len: u64) {
        let read = self.read(src, len);
        if read.exact {
            self.write(dest, &read.bytes);
        } else {
            self.write_unknown(dest, len);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_initialized_reads_are_exact() {
        let mem = FrameMemory::new();
        let r = mem.read(100, 32);
        assert!(r.exact);
        assert_eq!(r.bytes, vec![0u8; 32]);
    }

    #[test]
    fn write_then_read_round_trips() {
        let mut mem = FrameMemory::new();
        mem.write(4, &[1, 2, 3, 4]);
        let r = mem.read(0, 10);
        assert!(r.exact);
        assert_eq!(r.bytes, vec![0, 0, 0, 0, 1, 2, 3, 4, 0, 0]);
    }

    #[test]
    fn unknown_ranges_poison_reads() {
        let mut mem = FrameMemory::new();
        mem.write_unknown(32, 32);
        assert!(!mem.read(40, 8).exact);
        assert!(mem.read(0, 32).exact);
        assert!(mem.read(64, 32).exact);
        // Overwriting with known data heals the range.
        mem.write(32, &[7u8; 32]);
        let r = mem.read(32, 32);
        assert!(r.exact);
        assert_eq!(r.bytes, vec![7u8; 32]);
    }

    #[test]
    fn partial_unknown_overwrite_splits_range() {
        let mut mem = FrameMemory::new();
        mem.write_unknown(0, 96);
        mem.write(32, &[1u8; 32]);
        assert!(!mem.read(0, 32).exact);
        assert!(mem.read(32, 32).exact);
        assert!(!mem.read(64, 32).exact);
    }

    #[test]
    fn absurd_offsets_are_opaque() {
        let mut mem = FrameMemory::new();
        mem.write(u64::MAX - 10, &[1]);
        let r = mem.read(u64::MAX - 10, 1);
        assert!(!r.exact);
    }
}
