//! Alternative universe and bitset menus.
//!
//! A `Universe` fixes an ordering of alternative ids; a `Menu` is a nonempty
//! subset encoded as a bitmask over that ordering. Everything downstream
//! (tables, partitions, models) indexes alternatives by their position in the
//! universe and uses `Menu` values as cheap copyable set keys.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap imposed by the u64 menu encoding.
pub const MAX_UNIVERSE: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Universe {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Universe {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::EmptyUniverse);
        }
        if names.len() > MAX_UNIVERSE {
            return Err(Error::UniverseTooLarge { size: names.len(), cap: MAX_UNIVERSE });
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::DuplicateAlternative(n.clone()));
            }
        }
        Ok(Universe { names, index })
    }

    /// Universe named `x1..xn`, the convention used by simulations.
    pub fn indexed(n: usize) -> Result<Self> {
        Universe::new((1..=n).map(|i| format!("x{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        // the index map is skipped by serde; rebuild lazily if empty
        if self.index.is_empty() {
            return self.names.iter().position(|n| n == name);
        }
        self.index.get(name).copied()
    }

    pub fn resolve(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownAlternative(name.to_string()))
    }

    pub fn full_menu(&self) -> Menu {
        Menu::full(self.len())
    }

    /// All nonempty menus over this universe, ascending by bit pattern.
    pub fn menus(&self) -> impl Iterator<Item = Menu> {
        let n = self.len();
        (1..(1u64 << n)).map(Menu::from_bits)
    }
}

/// Nonempty subset of a universe, as a bitmask over alternative indices.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Menu(u64);

impl Menu {
    pub fn from_bits(bits: u64) -> Menu {
        Menu(bits)
    }

    pub fn empty() -> Menu {
        Menu(0)
    }

    pub fn singleton(a: usize) -> Menu {
        Menu(1 << a)
    }

    pub fn full(n: usize) -> Menu {
        if n == 64 {
            Menu(u64::MAX)
        } else {
            Menu((1u64 << n) - 1)
        }
    }

    pub fn from_members<I: IntoIterator<Item = usize>>(members: I) -> Menu {
        Menu(members.into_iter().fold(0, |b, a| b | (1 << a)))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, a: usize) -> bool {
        self.0 >> a & 1 == 1
    }

    pub fn with(self, a: usize) -> Menu {
        Menu(self.0 | (1 << a))
    }

    pub fn without(self, a: usize) -> Menu {
        Menu(self.0 & !(1 << a))
    }

    pub fn union(self, other: Menu) -> Menu {
        Menu(self.0 | other.0)
    }

    pub fn intersect(self, other: Menu) -> Menu {
        Menu(self.0 & other.0)
    }

    pub fn minus(self, other: Menu) -> Menu {
        Menu(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: Menu) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersects(self, other: Menu) -> bool {
        self.0 & other.0 != 0
    }

    /// Member indices, ascending.
    pub fn members(self) -> Members {
        Members(self.0)
    }

    /// Smallest member index; menus are nonempty wherever this is called.
    pub fn min_member(self) -> usize {
        debug_assert!(self.0 != 0);
        self.0.trailing_zeros() as usize
    }

    /// Rank of `a` among the menu's members (position in the probability row).
    pub fn position_of(self, a: usize) -> Option<usize> {
        if !self.contains(a) {
            return None;
        }
        Some((self.0 & ((1u64 << a) - 1)).count_ones() as usize)
    }

    /// All nonempty subsets, ascending by bit pattern.
    pub fn subsets(self) -> Subsets {
        Subsets { menu: self.0, current: 0, done: self.0 == 0 }
    }

    pub fn member_names(self, universe: &Universe) -> Vec<String> {
        self.members().map(|a| universe.name(a).to_string()).collect()
    }

    pub fn member_vec(self) -> Vec<usize> {
        self.members().collect()
    }
}

impl fmt::Debug for Menu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

pub struct Members(u64);

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let a = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(a)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// Iterates the nonempty subsets of a menu via the `(s - m) & m` walk.
pub struct Subsets {
    menu: u64,
    current: u64,
    done: bool,
}

impl Iterator for Subsets {
    type Item = Menu;

    fn next(&mut self) -> Option<Menu> {
        if self.done {
            return None;
        }
        self.current = (self.current.wrapping_sub(self.menu)) & self.menu;
        if self.current == 0 {
            // wrapped past the full set
            self.done = true;
            return None;
        }
        if self.current == self.menu {
            self.done = true;
        }
        Some(Menu(self.current))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn menu_basics() {
        let m = Menu::from_members([0, 2, 5]);
        assert_eq!(m.len(), 3);
        assert!(m.contains(2) && !m.contains(1));
        assert_eq!(m.member_vec(), vec![0, 2, 5]);
        assert_eq!(m.position_of(0), Some(0));
        assert_eq!(m.position_of(2), Some(1));
        assert_eq!(m.position_of(5), Some(2));
        assert_eq!(m.position_of(3), None);
        assert_eq!(m.min_member(), 0);
    }

    #[test]
    fn subsets_enumerates_all_nonempty() {
        let m = Menu::from_members([1, 3, 4]);
        let subs: Vec<_> = m.subsets().collect();
        assert_eq!(subs.len(), 7);
        assert!(subs.iter().all(|s| !s.is_empty() && s.is_subset_of(m)));
        let mut sorted = subs.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 7);
    }

    #[test]
    fn universe_construction() {
        let u = Universe::new(["a", "b", "c"]).unwrap();
        assert_eq!(u.len(), 3);
        assert_eq!(u.index_of("b"), Some(1));
        assert_eq!(u.menus().count(), 7);
        assert!(Universe::new(["a", "a"]).is_err());
        assert!(Universe::new(Vec::<String>::new()).is_err());
    }
}
