//! Choice tables: per-menu probability rows.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::universe::{Menu, Universe};

/// Tolerance for row normalization checks.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A stochastic choice function on (part of) a universe.
///
/// Each stored row is a strictly positive probability vector over the menu's
/// members in ascending index order, summing to 1 within `NORMALIZATION_TOL`.
/// A table is *complete* when every nonempty menu of the universe is present.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceTable {
    universe: Universe,
    rows: BTreeMap<Menu, Vec<f64>>,
}

impl ChoiceTable {
    pub fn new<I>(universe: Universe, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Menu, Vec<f64>)>,
    {
        let mut table = BTreeMap::new();
        for (menu, probs) in rows {
            validate_row(&universe, menu, &probs)?;
            table.insert(menu, probs);
        }
        Ok(ChoiceTable { universe, rows: table })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        let n = self.universe.len();
        self.rows.len() == (1usize << n) - 1
    }

    pub fn require_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::IncompleteTable)
        }
    }

    pub fn menus(&self) -> impl Iterator<Item = Menu> + '_ {
        self.rows.keys().copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = (Menu, &[f64])> + '_ {
        self.rows.iter().map(|(m, p)| (*m, p.as_slice()))
    }

    pub fn row(&self, menu: Menu) -> Option<&[f64]> {
        self.rows.get(&menu).map(|v| v.as_slice())
    }

    /// p(a, menu); `a` must be a member and the menu present.
    pub fn prob(&self, a: usize, menu: Menu) -> Result<f64> {
        let pos = menu.position_of(a).ok_or(Error::AlternativeNotInMenu {
            alternative: a,
            menu: menu.member_vec(),
        })?;
        let row = self.rows.get(&menu).ok_or(Error::IncompleteTable)?;
        Ok(row[pos])
    }

    /// Summed probability p(set ∩ menu, menu). Zero when the intersection is empty.
    pub fn group_prob(&self, set: Menu, menu: Menu) -> Result<f64> {
        let row = self.rows.get(&menu).ok_or(Error::IncompleteTable)?;
        let mut total = 0.0;
        for (pos, a) in menu.members().enumerate() {
            if set.contains(a) {
                total += row[pos];
            }
        }
        Ok(total)
    }

    /// log(p(a, menu) / p(b, menu)).
    pub fn log_ratio(&self, a: usize, b: usize, menu: Menu) -> Result<f64> {
        Ok((self.prob(a, menu)? / self.prob(b, menu)?).ln())
    }
}

fn validate_row(universe: &Universe, menu: Menu, probs: &[f64]) -> Result<()> {
    if menu.is_empty() {
        return Err(Error::EmptyMenu);
    }
    if !menu.is_subset_of(universe.full_menu()) {
        return Err(Error::InvalidProbability {
            menu: menu.member_vec(),
            detail: "menu not a subset of the universe".into(),
        });
    }
    if probs.len() != menu.len() {
        return Err(Error::InvalidProbability {
            menu: menu.member_vec(),
            detail: format!("row has {} entries for {} members", probs.len(), menu.len()),
        });
    }
    if probs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
        return Err(Error::InvalidProbability {
            menu: menu.member_vec(),
            detail: "probabilities must be finite and strictly positive".into(),
        });
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidProbability {
            menu: menu.member_vec(),
            detail: format!("row sums to {sum:.17} (tolerance 1e-12)"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Universe {
        Universe::new(["a", "b", "c"]).unwrap()
    }

    #[test]
    fn construction_and_lookup() {
        let u = abc();
        let m = Menu::from_members([0, 2]);
        let t = ChoiceTable::new(u, [(m, vec![0.3, 0.7])]).unwrap();
        assert_eq!(t.prob(0, m).unwrap(), 0.3);
        assert_eq!(t.prob(2, m).unwrap(), 0.7);
        assert!(t.prob(1, m).is_err());
        assert!(!t.is_complete());
        assert!((t.group_prob(Menu::from_members([0, 1]), m).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rows() {
        let u = abc();
        let m = Menu::from_members([0, 1]);
        assert!(ChoiceTable::new(u.clone(), [(m, vec![0.5, 0.6])]).is_err());
        assert!(ChoiceTable::new(u.clone(), [(m, vec![1.0, 0.0])]).is_err());
        assert!(ChoiceTable::new(u.clone(), [(m, vec![0.5])]).is_err());
        assert!(ChoiceTable::new(u, [(Menu::from_members([0, 3]), vec![0.5, 0.5])]).is_err());
    }
}
