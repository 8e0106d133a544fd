use std::fmt;
use std::ops::{BitAnd, BitAndAssign, BitOr, BitOrAssign, Sub, SubAssign};

/// Hard limit on vertex slots per graph, observed and latent together.
pub const MAX_VERTICES: usize = 64;

/// A set of vertex slots packed into a single machine word.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexSet(pub u64);

impl VertexSet {
    pub const EMPTY: VertexSet = VertexSet(0);

    pub fn singleton(v: usize) -> Self {
        debug_assert!(v < MAX_VERTICES);
        VertexSet(1u64 << v)
    }

    /// The first `n` slots.
    pub fn full(n: usize) -> Self {
        if n >= MAX_VERTICES {
            VertexSet(u64::MAX)
        } else {
            VertexSet((1u64 << n) - 1)
        }
    }

    pub fn contains(self, v: usize) -> bool {
        v < MAX_VERTICES && self.0 & (1u64 << v) != 0
    }

    pub fn insert(&mut self, v: usize) {
        self.0 |= 1u64 << v;
    }

    pub fn remove(&mut self, v: usize) {
        self.0 &= !(1u64 << v);
    }

    pub fn with(self, v: usize) -> Self {
        VertexSet(self.0 | (1u64 << v))
    }

    pub fn without(self, v: usize) -> Self {
        VertexSet(self.0 & !(1u64 << v))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: VertexSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: VertexSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn intersects(self, other: VertexSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Lowest slot in the set.
    pub fn first(self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            Some(self.0.trailing_zeros() as usize)
        }
    }

    pub fn iter(self) -> SetIter {
        SetIter(self.0)
    }

    /// All subsets of `self`, starting with the empty set.
    pub fn subsets(self) -> SubsetIter {
        SubsetIter {
            mask: self.0,
            current: 0,
            done: false,
        }
    }
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for VertexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = VertexSet::EMPTY;
        for v in iter {
            s.insert(v);
        }
        s
    }
}

impl IntoIterator for VertexSet {
    type Item = usize;
    type IntoIter = SetIter;
    fn into_iter(self) -> SetIter {
        self.iter()
    }
}

pub struct SetIter(u64);

impl Iterator for SetIter {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let v = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(v)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for SetIter {}

pub struct SubsetIter {
    mask: u64,
    current: u64,
    done: bool,
}

impl Iterator for SubsetIter {
    type Item = VertexSet;
    fn next(&mut self) -> Option<VertexSet> {
        if self.done {
            return None;
        }
        let out = VertexSet(self.current);
        self.current = self.current.wrapping_sub(self.mask) & self.mask;
        if self.current == 0 {
            self.done = true;
        }
        Some(out)
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident, $atr:ident, $af:ident, $op:tt) => {
        impl $tr for VertexSet {
            type Output = VertexSet;
            fn $f(self, rhs: VertexSet) -> VertexSet {
                VertexSet(self.0 $op rhs.0)
            }
        }
        impl $atr for VertexSet {
            fn $af(&mut self, rhs: VertexSet) {
                self.0 = self.0 $op rhs.0;
            }
        }
    };
}

binop!(BitOr, bitor, BitOrAssign, bitor_assign, |);
binop!(BitAnd, bitand, BitAndAssign, bitand_assign, &);

impl Sub for VertexSet {
    type Output = VertexSet;
    fn sub(self, rhs: VertexSet) -> VertexSet {
        VertexSet(self.0 & !rhs.0)
    }
}

impl SubAssign for VertexSet {
    fn sub_assign(&mut self, rhs: VertexSet) {
        self.0 &= !rhs.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterates_in_slot_order() {
        let s: VertexSet = [5, 1, 63].into_iter().collect();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![1, 5, 63]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn subsets_cover_power_set() {
        let s: VertexSet = [0, 2, 7].into_iter().collect();
        let subs: Vec<_> = s.subsets().collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.iter().all(|x| x.is_subset(s)));
        assert_eq!(subs[0], VertexSet::EMPTY);
        assert_eq!(VertexSet::EMPTY.subsets().count(), 1);
    }

    #[test]
    fn set_algebra() {
        let a: VertexSet = [1, 2, 3].into_iter().collect();
        let b: VertexSet = [3, 4].into_iter().collect();
        assert_eq!((a | b).len(), 4);
        assert_eq!((a & b), VertexSet::singleton(3));
        assert_eq!((a - b).len(), 2);
        assert!(!a.is_disjoint(b));
        assert_eq!(VertexSet::full(64).len(), 64);
    }
}
