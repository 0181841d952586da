//! Taint-lattice primitives: compact tag sets and byte-granular shadow
//! memory.
//!
//! Sources configured for a run are assigned bit positions in canonical
//! order, so a tag set is one word and union is a single OR. Byte
//! granularity matters because CALLDATACOPY/RETURNDATACOPY move unaligned
//! ranges; the shadow memory is an interval map from byte ranges to tag
//! sets.

use std::collections::BTreeMap;

/// A set of taint-source indices. Empty means untainted; union is the
/// only combining operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TagSet(pub u128);

/// Most sources a single run may configure (one bit each).
pub const MAX_SOURCES: usize = 128;

impl TagSet {
    pub const EMPTY: TagSet = TagSet(0);

    pub fn single(bit: usize) -> TagSet {
        debug_assert!(bit < MAX_SOURCES);
        TagSet(1u128 << bit)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[must_use]
    pub fn union(self, other: TagSet) -> TagSet {
        TagSet(self.0 | other.0)
    }

    /// Source indices present, ascending.
    pub fn bits(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(bit)
            }
        })
    }
}

/// Byte-granular shadow over a linear address space (memory, calldata,
/// return data). Stores only tainted spans.
#[derive(Debug, Clone, Default)]
pub struct ShadowMemory {
    /// start -> (end, tags); spans are disjoint, non-empty, sorted.
    spans: BTreeMap<u64, (u64, TagSet)>,
}

impl ShadowMemory {
    pub fn new() -> Self {
        ShadowMemory::default()
    }

    /// Remove any span material overlapping [start, end), keeping the
    /// protruding remnants.
    fn clear_range(&mut self, start: u64, end: u64) {
        if start >= end {
            return;
        }
        let overlapping: Vec<u64> = self
            .spans
            .range(..end)
            .filter(|(s, (e, _))| **s < end && *e > start)
            .map(|(s, _)| *s)
            .collect();
        for s in overlapping {
            let (e, tags) = self.spans.remove(&s).expect("span exists");
            if s < start {
                self.spans.insert(s, (start, tags));
            }
            if e > end {
                self.spans.insert(end, (e, tags));
            }
        }
    }

    /// Strong update: the range now carries exactly `tags`.
    pub fn write(&mut self, start: u64, len: u64, tags: TagSet) {
        let Some(end) = start.checked_add(len) else {
            return;
        };
        self.clear_range(start, end);
        if !tags.is_empty() && len > 0 {
            self.spans.insert(start, (end, tags));
        }
    }

    /// Weak update: union `tags` into the range.
    pub fn union_range(&mut self, start: u64, len: u64, tags: TagSet) {
        if tags.is_empty() || len == 0 {
            return;
        }
        let segments = self.segments(start, len);
        for (off, seg_len, existing) in segments {
            self.write(start + off, seg_len, existing.union(tags));
        }
    }

    /// Union of all tags overlapping the range.
    pub fn read(&self, start: u64, len: u64) -> TagSet {
        let Some(end) = start.checked_add(len) else {
            return TagSet::EMPTY;
        };
        if len == 0 {
            return TagSet::EMPTY;
        }
        let mut acc = TagSet::EMPTY;
        for (s, (e, tags)) in self.spans.range(..end) {
            if *s < end && *e > start {
                acc = acc.union(*tags);
            }
        }
        acc
    }

    /// Homogeneous segments covering [start, start+len): returns
    /// (offset-within-range, length, tags) including untainted gaps.
    pub fn segments(&self, start: u64, len: u64) -> Vec<(u64, u64, TagSet)> {
        let Some(end) = start.checked_add(len) else {
            return Vec::new();
        };
        if len == 0 {
            return Vec::new();
        }
        let mut out = Vec::new();
        let mut cursor = start;
        for (s, (e, tags)) in self.spans.range(..end) {
            if *e <= start {
                continue;
            }
            let seg_start = (*s).max(start);
            let seg_end = (*e).min(end);
            if seg_start >= end {
                break;
            }
            if seg_start > cursor {
                out.push((cursor - start, seg_start - cursor, TagSet::EMPTY));
            }
            out.push((seg_start - start, seg_end - seg_start, *tags));
            cursor = seg_end;
        }
        if cursor < end {
            out.push((cursor - start, end - cursor, TagSet::EMPTY));
        }
        out
    }

    /// Copy tags from another shadow: `self[dst..dst+len) = src[off..off+len)`.
    pub fn copy_from(&mut self, src: &ShadowMemory, src_off: u64, dst_off: u64, len: u64) {
        for (rel, seg_len, tags) in src.segments(src_off, len) {
            self.write(dst_off + rel, seg_len, tags);
        }
    }

    /// A shadow holding this one's view of [start, start+len) at base 0.
    pub fn slice(&self, start: u64, len: u64) -> ShadowMemory {
        let mut out = ShadowMemory::new();
        out.copy_from(self, start, 0, len);
        out
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagset_union_and_bits() {
        let a = TagSet::single(0);
        let b = TagSet::single(5);
        let u = a.union(b);
        assert_eq!(u.bits().collect::<Vec<_>>(), vec![0, 5]);
        assert!(TagSet::EMPTY.is_empty());
    }

    #[test]
    fn write_read_round_trip() {
        let mut mem = ShadowMemory::new();
        mem.write(10, 20, TagSet::single(1));
        assert_eq!(mem.read(0, 10), TagSet::EMPTY);
        assert_eq!(mem.read(15, 1), TagSet::single(1));
        assert_eq!(mem.read(29, 1), TagSet::single(1));
        assert_eq!(mem.read(30, 5), TagSet::EMPTY);
    }

    #[test]
    fn strong_update_overwrites() {
        let mut mem = ShadowMemory::new();
        mem.write(0, 32, TagSet::single(0));
        mem.write(8, 8, TagSet::single(1));
        assert_eq!(mem.read(8, 8), TagSet::single(1));
        assert_eq!(mem.read(0, 8), TagSet::single(0));
        assert_eq!(mem.read(16, 16), TagSet::single(0));
        // Clearing with empty tags untaints.
        mem.write(0, 32, TagSet::EMPTY);
        assert_eq!(mem.read(0, 32), TagSet::EMPTY);
    }

    #[test]
    fn union_range_preserves_splits() {
        let mut mem = ShadowMemory::new();
        mem.write(0, 4, TagSet::single(0));
        mem.union_range(2, 4, TagSet::single(1));
        assert_eq!(mem.read(0, 2), TagSet::single(0));
        assert_eq!(mem.read(2, 2), TagSet::single(0).union(TagSet::single(1)));
        assert_eq!(mem.read(4, 2), TagSet::single(1));
    }

    #[test]
    fn segments_cover_gaps() {
        let mut mem = ShadowMemory::new();
        mem.write(4, 4, TagSet::single(2));
        let segs = mem.segments(0, 12);
        assert_eq!(
            segs,
            vec![
                (0, 4, TagSet::EMPTY),
                (4, 4, TagSet::single(2)),
                (8, 4, TagSet::EMPTY),
            ]
        );
    }

    #[test]
    fn copy_between_shadows() {
        let mut src = ShadowMemory::new();
        src.write(4, 8, TagSet::single(3));
        let mut dst = ShadowMemory::new();
        dst.copy_from(&src, 0, 100, 16);
        assert_eq!(dst.read(100, 4), TagSet::EMPTY);
        assert_eq!(dst.read(104, 8), TagSet::single(3));
        assert_eq!(dst.read(112, 4), TagSet::EMPTY);
    }
}
