//! Observed choice data: raw counts and relative-frequency views.
//!
//! `Dataset` stores how often each alternative was chosen from each observed
//! menu. `FrequencyData` is the view the identification routines consume:
//! strictly positive relative frequencies per menu, built either from exact
//! model probabilities or from counts (optionally half-count smoothed so that
//! log ratios stay finite).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::table::ChoiceTable;
use crate::universe::{Menu, Universe};

/// Choice counts per menu. Rows are aligned with the menu's members in
/// ascending order. Duplicate menus merge by summing counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    universe: Universe,
    rows: BTreeMap<Menu, Vec<u64>>,
}

impl Dataset {
    pub fn new(
        universe: Universe,
        rows: impl IntoIterator<Item = (Menu, Vec<u64>)>,
    ) -> Result<Self> {
        let mut ds = Dataset { universe, rows: BTreeMap::new() };
        for (menu, counts) in rows {
            ds.add_counts(menu, &counts)?;
        }
        Ok(ds)
    }

    pub fn empty(universe: Universe) -> Self {
        Dataset { universe, rows: BTreeMap::new() }
    }

    /// Adds counts for one menu, merging with any existing row.
    pub fn add_counts(&mut self, menu: Menu, counts: &[u64]) -> Result<()> {
        if menu.is_empty() {
            return Err(Error::EmptyMenu);
        }
        if !menu.is_subset_of(self.universe.full_menu()) {
            return Err(Error::InvalidModel(format!(
                "menu {:?} is not a subset of the universe",
                menu.member_vec()
            )));
        }
        if counts.len() != menu.len() {
            return Err(Error::InvalidModel(format!(
                "{} counts for a menu of {} alternatives",
                counts.len(),
                menu.len()
            )));
        }
        let row = self.rows.entry(menu).or_insert_with(|| vec![0; counts.len()]);
        for (slot, c) in row.iter_mut().zip(counts) {
            *slot += c;
        }
        Ok(())
    }

    /// Records a single choice of `a` from `menu`.
    pub fn record(&mut self, menu: Menu, a: usize) -> Result<()> {
        if !menu.contains(a) {
            return Err(Error::AlternativeNotInMenu { alternative: a, menu: menu.member_vec() });
        }
        let len = menu.len();
        let pos = menu.position_of(a).unwrap();
        let row = self.rows.entry(menu).or_insert_with(|| vec![0; len]);
        row[pos] += 1;
        Ok(())
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

    pub fn menus(&self) -> impl Iterator<Item = Menu> + '_ {
        self.rows.keys().copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = (Menu, &[u64])> {
        self.rows.iter().map(|(m, r)| (*m, r.as_slice()))
    }

    pub fn counts(&self, menu: Menu) -> Option<&[u64]> {
        self.rows.get(&menu).map(|r| r.as_slice())
    }

    /// Number of observations on one menu.
    pub fn trials(&self, menu: Menu) -> u64 {
        self.rows.get(&menu).map(|r| r.iter().sum()).unwrap_or(0)
    }

    pub fn total_observations(&self) -> u64 {
        self.rows.values().flatten().sum()
    }
}

/// Strictly positive relative frequencies per menu; the input to the
/// identification and similarity routines.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyData {
    universe: Universe,
    rows: BTreeMap<Menu, Vec<f64>>,
}

impl FrequencyData {
    /// Exact probabilities from a choice table.
    pub fn from_table(table: &ChoiceTable) -> Self {
        FrequencyData {
            universe: table.universe().clone(),
            rows: table.rows().map(|(m, r)| (m, r.to_vec())).collect(),
        }
    }

    /// Raw frequencies count/N. Errors on any zero cell (log ratios would be
    /// infinite); use [`FrequencyData::from_dataset_smoothed`] for sampled data.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for (menu, counts) in dataset.rows() {
            if let Some(pos) = counts.iter().position(|c| *c == 0) {
                let a = menu.members().nth(pos).unwrap();
                return Err(Error::ZeroFrequency { alternative: a, menu: menu.member_vec() });
            }
            let n: u64 = counts.iter().sum();
            rows.insert(menu, counts.iter().map(|c| *c as f64 / n as f64).collect());
        }
        Ok(FrequencyData { universe: dataset.universe().clone(), rows })
    }

    /// Half-count smoothed frequencies (count + ½) / (N + ½·|menu|); always
    /// strictly positive.
    pub fn from_dataset_smoothed(dataset: &Dataset) -> Self {
        let mut rows = BTreeMap::new();
        for (menu, counts) in dataset.rows() {
            let n: u64 = counts.iter().sum();
            let denom = n as f64 + 0.5 * counts.len() as f64;
            rows.insert(menu, counts.iter().map(|c| (*c as f64 + 0.5) / denom).collect());
        }
        FrequencyData { universe: dataset.universe().clone(), rows }
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

    /// True iff every nonempty menu over the universe has a row.
    pub fn is_complete(&self) -> bool {
        self.universe.len() < usize::BITS as usize
            && self.rows.len() == (1usize << self.universe.len()) - 1
    }

    pub fn menus(&self) -> impl Iterator<Item = Menu> + '_ {
        self.rows.keys().copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = (Menu, &[f64])> {
        self.rows.iter().map(|(m, r)| (*m, r.as_slice()))
    }

    pub fn row(&self, menu: Menu) -> Option<&[f64]> {
        self.rows.get(&menu).map(|r| r.as_slice())
    }

    pub fn has_menu(&self, menu: Menu) -> bool {
        self.rows.contains_key(&menu)
    }

    /// Frequency of `a` in `menu`; the menu must be present and contain `a`.
    pub fn prob(&self, a: usize, menu: Menu) -> Result<f64> {
        if !menu.contains(a) {
            return Err(Error::AlternativeNotInMenu { alternative: a, menu: menu.member_vec() });
        }
        let row = self
            .rows
            .get(&menu)
            .ok_or_else(|| Error::InvalidModel(format!("no row for menu {:?}", menu.member_vec())))?;
        Ok(row[menu.position_of(a).unwrap()])
    }

    /// Combined frequency of the alternatives of `set ∩ menu`.
    pub fn group_prob(&self, set: Menu, menu: Menu) -> Result<f64> {
        let row = self
            .rows
            .get(&menu)
            .ok_or_else(|| Error::InvalidModel(format!("no row for menu {:?}", menu.member_vec())))?;
        let mut total = 0.0;
        for a in set.intersect(menu).members() {
            total += row[menu.position_of(a).unwrap()];
        }
        Ok(total)
    }

    /// log p(a, menu) − log p(b, menu).
    pub fn log_ratio(&self, a: usize, b: usize, menu: Menu) -> Result<f64> {
        Ok(self.prob(a, menu)?.ln() - self.prob(b, menu)?.ln())
    }
}
