//! Nest structures (set partitions of the universe) and their enumeration.
//!
//! Partitions are enumerated as restricted growth strings (RGS): `a[0] = 0`
//! and `a[i] ≤ max(a[0..i]) + 1`, in lexicographic order. The first string is
//! the one-block partition, the last is all-singletons, and the count is the
//! Bell number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::universe::Menu;

/// A partition of the universe into disjoint nonempty nests.
///
/// Canonical form: blocks sorted by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NestStructure {
    blocks: Vec<Menu>,
}

impl NestStructure {
    pub fn new(mut blocks: Vec<Menu>, universe_len: usize) -> Result<Self> {
        let mut seen = Menu::empty();
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition);
            }
            if seen.intersects(*b) {
                return Err(Error::InvalidPartition);
            }
            seen = seen.union(*b);
        }
        if seen != Menu::full(universe_len) {
            return Err(Error::InvalidPartition);
        }
        blocks.sort_by_key(|b| b.min_member());
        Ok(NestStructure { blocks })
    }

    pub fn one_block(universe_len: usize) -> Self {
        NestStructure { blocks: vec![Menu::full(universe_len)] }
    }

    pub fn singletons(universe_len: usize) -> Self {
        NestStructure { blocks: (0..universe_len).map(Menu::singleton).collect() }
    }

    pub fn from_rgs(rgs: &[usize]) -> Self {
        let k = rgs.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Menu::empty(); k];
        for (a, &b) in rgs.iter().enumerate() {
            blocks[b] = blocks[b].with(a);
        }
        // RGS block labels appear in first-member order, so this is canonical
        NestStructure { blocks }
    }

    pub fn blocks(&self) -> &[Menu] {
        &self.blocks
    }

    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn universe_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// Index of the block containing `a`.
    pub fn block_of(&self, a: usize) -> usize {
        self.blocks
            .iter()
            .position(|b| b.contains(a))
            .expect("alternative outside partitioned universe")
    }

    /// Per-alternative block index, for hot loops.
    pub fn membership(&self, universe_len: usize) -> Vec<usize> {
        let mut m = vec![0; universe_len];
        for (i, b) in self.blocks.iter().enumerate() {
            for a in b.members() {
                m[a] = i;
            }
        }
        m
    }

    /// Restricted growth string over `universe_len` alternatives.
    pub fn rgs(&self, universe_len: usize) -> Vec<usize> {
        self.membership(universe_len)
    }

    /// True if every block of `self` is contained in some block of `coarser`.
    pub fn refines(&self, coarser: &NestStructure) -> bool {
        self.blocks
            .iter()
            .all(|b| coarser.blocks.iter().any(|c| b.is_subset_of(*c)))
    }

    pub fn block_containing(&self, a: usize) -> Menu {
        self.blocks[self.block_of(a)]
    }
}

/// Cap for full partition enumeration; Bell(12) = 4,213,597.
pub const MAX_ENUMERATION: usize = 12;

/// All partitions of `n` alternatives in RGS lexicographic order.
pub fn partitions(n: usize) -> Result<Partitions> {
    if n == 0 {
        return Err(Error::EmptyUniverse);
    }
    if n > MAX_ENUMERATION {
        return Err(Error::UniverseTooLarge { size: n, cap: MAX_ENUMERATION });
    }
    Ok(Partitions { a: vec![0; n], m: vec![0; n], fresh: true })
}

pub struct Partitions {
    a: Vec<usize>,
    /// m[i] = max(a[0..=i])
    m: Vec<usize>,
    fresh: bool,
}

impl Partitions {
    fn advance(&mut self) -> bool {
        let n = self.a.len();
        let mut i = n;
        while i > 1 {
            i -= 1;
            if self.a[i] <= self.m[i - 1] {
                self.a[i] += 1;
                self.m[i] = self.m[i - 1].max(self.a[i]);
                for j in i + 1..n {
                    self.a[j] = 0;
                    self.m[j] = self.m[i];
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for Partitions {
    type Item = NestStructure;

    fn next(&mut self) -> Option<NestStructure> {
        if self.fresh {
            self.fresh = false;
            return Some(NestStructure::from_rgs(&self.a));
        }
        if self.advance() {
            Some(NestStructure::from_rgs(&self.a))
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_counts() {
        assert_eq!(partitions(1).unwrap().count(), 1);
        assert_eq!(partitions(3).unwrap().count(), 5);
        assert_eq!(partitions(6).unwrap().count(), 203);
        assert_eq!(partitions(7).unwrap().count(), 877);
    }

    #[test]
    fn cap_enforced() {
        assert!(partitions(13).is_err());
    }

    #[test]
    fn rgs_order_endpoints() {
        let all: Vec<_> = partitions(3).unwrap().collect();
        assert_eq!(all[0], NestStructure::one_block(3));
        assert_eq!(all[4], NestStructure::singletons(3));
        // every partition distinct and valid
        for p in &all {
            assert_eq!(p.universe_len(), 3);
        }
    }

    #[test]
    fn canonical_block_order() {
        let p = NestStructure::new(
            vec![Menu::from_members([2, 4]), Menu::from_members([0, 3]), Menu::singleton(1)],
            5,
        )
        .unwrap();
        let firsts: Vec<_> = p.blocks().iter().map(|b| b.min_member()).collect();
        assert_eq!(firsts, vec![0, 1, 2]);
        assert_eq!(p.rgs(5), vec![0, 1, 2, 0, 2]);
    }

    #[test]
    fn refinement() {
        let fine = NestStructure::singletons(4);
        let coarse = NestStructure::one_block(4);
        assert!(fine.refines(&coarse));
        assert!(!coarse.refines(&fine));
        assert!(fine.refines(&fine));
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(NestStructure::new(vec![Menu::from_members([0, 1])], 3).is_err());
        assert!(
            NestStructure::new(vec![Menu::from_members([0, 1]), Menu::from_members([1, 2])], 3)
                .is_err()
        );
        assert!(NestStructure::new(vec![Menu::empty(), Menu::from_members([0])], 1).is_err());
    }
}
