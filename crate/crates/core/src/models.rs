//! Model parameter bundles and probability evaluation.
//!
//! The NSC choice rule is a two-stage Luce rule. With the universe
//! partitioned into nests `X_1 … X_K`, a utility `u` on alternatives, and a
//! nest value `v` on nonempty subsets of each nest,
//!
//! ```text
//! p(a, A) = [ v(A ∩ X_i) / Σ_j v(A ∩ X_j) ] · [ u(a) / Σ_{b ∈ A∩X_i} u(b) ]
//! ```
//!
//! for `a ∈ X_i`, with `v(∅) = 0`. Nested logit is the special case
//! `v(A ∩ X_i) = (Σ u)^{η_i}`; the 3-step model stacks one more Luce stage on
//! top with an outer partition and outer nest value `w`. `v` is stored
//! extensionally (a table over subsets) so that plain NSC and the preset
//! families of nest values all share one evaluator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::NestStructure;
use crate::table::ChoiceTable;
use crate::universe::{Menu, Universe};

/// Anything that can be evaluated to a choice probability.
pub trait ChoiceModel {
    fn universe(&self) -> &Universe;

    /// p(a, menu). `a` must be a member of `menu`.
    fn prob(&self, a: usize, menu: Menu) -> Result<f64>;
}

/// Luce choice: probability proportional to utility.
pub fn luce_prob(u: &[f64], a: usize, menu: Menu) -> Result<f64> {
    if !menu.contains(a) {
        return Err(Error::AlternativeNotInMenu { alternative: a, menu: menu.member_vec() });
    }
    let mut total = 0.0;
    for b in menu.members() {
        let ub = u.get(b).copied().unwrap_or(f64::NAN);
        if !(ub > 0.0) || !ub.is_finite() {
            return Err(Error::NonpositiveUtility(b));
        }
        total += ub;
    }
    Ok(u[a] / total)
}

fn check_membership(a: usize, menu: Menu) -> Result<()> {
    if menu.contains(a) {
        Ok(())
    } else {
        Err(Error::AlternativeNotInMenu { alternative: a, menu: menu.member_vec() })
    }
}

fn validate_u(universe: &Universe, u: &[f64]) -> Result<()> {
    if u.len() != universe.len() {
        return Err(Error::InvalidModel(format!(
            "{} utilities for {} alternatives",
            u.len(),
            universe.len()
        )));
    }
    for (a, &ua) in u.iter().enumerate() {
        if !(ua > 0.0) || !ua.is_finite() {
            return Err(Error::NonpositiveUtility(a));
        }
    }
    Ok(())
}

fn validate_structure(universe: &Universe, structure: &NestStructure) -> Result<()> {
    let covered = structure.blocks().iter().fold(Menu::empty(), |acc, b| acc.union(*b));
    if covered != universe.full_menu() {
        return Err(Error::InvalidPartition);
    }
    Ok(())
}

/// Checks that `v` maps exactly the nonempty subsets of each given block to
/// strictly positive values.
fn validate_v(blocks: &[Menu], v: &BTreeMap<Menu, f64>) -> Result<()> {
    let mut expected = 0usize;
    for block in blocks {
        expected += (1usize << block.len()) - 1;
        for subset in block.subsets() {
            match v.get(&subset) {
                Some(val) if val.is_finite() && *val > 0.0 => {}
                Some(_) => {
                    return Err(Error::NonpositiveVValue { subset: subset.member_vec() });
                }
                None => return Err(Error::MissingVEntry { subset: subset.member_vec() }),
            }
        }
    }
    if v.len() != expected {
        // some key is not a subset of a single block
        for key in v.keys() {
            if !blocks.iter().any(|b| key.is_subset_of(*b)) {
                return Err(Error::InvalidModel(format!(
                    "v key {:?} is not a subset of one nest",
                    key.member_vec()
                )));
            }
        }
    }
    Ok(())
}

/// Nested stochastic choice model: nests, utility `u`, extensional nest value `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NscModel {
    universe: Universe,
    structure: NestStructure,
    u: Vec<f64>,
    v: BTreeMap<Menu, f64>,
}

impl NscModel {
    pub fn new(
        universe: Universe,
        structure: NestStructure,
        u: Vec<f64>,
        v: BTreeMap<Menu, f64>,
    ) -> Result<Self> {
        validate_u(&universe, &u)?;
        validate_structure(&universe, &structure)?;
        validate_v(structure.blocks(), &v)?;
        Ok(NscModel { universe, structure, u, v })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn structure(&self) -> &NestStructure {
        &self.structure
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v_table(&self) -> &BTreeMap<Menu, f64> {
        &self.v
    }

    /// v(subset), with v(∅) = 0.
    pub fn v(&self, subset: Menu) -> Result<f64> {
        if subset.is_empty() {
            return Ok(0.0);
        }
        self.v
            .get(&subset)
            .copied()
            .ok_or_else(|| Error::MissingVEntry { subset: subset.member_vec() })
    }

    /// Rescales to the canonical parameterization: the minimum utility in
    /// each block is 1, and v of block 1's full set is 1. Choice
    /// probabilities are unchanged (within-block u ratios and v ratios are
    /// preserved).
    pub fn canonicalize(&self) -> NscModel {
        let mut u = self.u.clone();
        for block in self.structure.blocks() {
            let min = block.members().map(|a| self.u[a]).fold(f64::INFINITY, f64::min);
            for a in block.members() {
                u[a] = self.u[a] / min;
            }
        }
        let scale = self.v[&self.structure.blocks()[0]];
        let v = self.v.iter().map(|(k, val)| (*k, val / scale)).collect();
        NscModel { universe: self.universe.clone(), structure: self.structure.clone(), u, v }
    }
}

impl ChoiceModel for NscModel {
    fn universe(&self) -> &Universe {
        &self.universe
    }

    fn prob(&self, a: usize, menu: Menu) -> Result<f64> {
        nsc_prob(self, a, menu)
    }
}

pub fn nsc_prob(model: &NscModel, a: usize, menu: Menu) -> Result<f64> {
    check_membership(a, menu)?;
    let i = model.structure.block_of(a);
    let own = menu.intersect(model.structure.blocks()[i]);
    let v_own = model.v(own)?;
    let mut v_total = 0.0;
    for block in model.structure.blocks() {
        v_total += model.v(menu.intersect(*block))?;
    }
    let u_sum: f64 = own.members().map(|b| model.u[b]).sum();
    Ok(v_own / v_total * (model.u[a] / u_sum))
}

/// Nested logit: NSC with `v(A ∩ X_i) = (Σ u)^{η_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedLogitModel {
    universe: Universe,
    structure: NestStructure,
    u: Vec<f64>,
    eta: Vec<f64>,
}

impl NestedLogitModel {
    pub fn new(
        universe: Universe,
        structure: NestStructure,
        u: Vec<f64>,
        eta: Vec<f64>,
    ) -> Result<Self> {
        validate_u(&universe, &u)?;
        validate_structure(&universe, &structure)?;
        if eta.len() != structure.k() {
            return Err(Error::InvalidModel(format!(
                "{} exponents for {} nests",
                eta.len(),
                structure.k()
            )));
        }
        if let Some(i) = eta.iter().position(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidModel(format!("eta[{i}] must be strictly positive")));
        }
        Ok(NestedLogitModel { universe, structure, u, eta })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn structure(&self) -> &NestStructure {
        &self.structure
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// True iff every η_i ≤ 1 (the random-utility case).
    pub fn is_random_utility(&self) -> bool {
        self.eta.iter().all(|e| *e <= 1.0)
    }

    fn v_of(&self, i: usize, subset: Menu) -> f64 {
        if subset.is_empty() {
            return 0.0;
        }
        let sum: f64 = subset.members().map(|a| self.u[a]).sum();
        sum.powf(self.eta[i])
    }

    /// Materializes the extensional v table.
    pub fn to_nsc(&self) -> Result<NscModel> {
        let mut v = BTreeMap::new();
        for (i, block) in self.structure.blocks().iter().enumerate() {
            for subset in block.subsets() {
                v.insert(subset, self.v_of(i, subset));
            }
        }
        NscModel::new(self.universe.clone(), self.structure.clone(), self.u.clone(), v)
    }
}

impl ChoiceModel for NestedLogitModel {
    fn universe(&self) -> &Universe {
        &self.universe
    }

    fn prob(&self, a: usize, menu: Menu) -> Result<f64> {
        nested_logit_prob(self, a, menu)
    }
}

pub fn nested_logit_prob(model: &NestedLogitModel, a: usize, menu: Menu) -> Result<f64> {
    check_membership(a, menu)?;
    let i = model.structure.block_of(a);
    let own = menu.intersect(model.structure.blocks()[i]);
    let mut v_total = 0.0;
    for (j, block) in model.structure.blocks().iter().enumerate() {
        v_total += model.v_of(j, menu.intersect(*block));
    }
    let u_sum: f64 = own.members().map(|b| model.u[b]).sum();
    Ok(model.v_of(i, own) / v_total * (model.u[a] / u_sum))
}

/// 3-step NSC: an outer partition with nest value `w`, and per outer block an
/// inner partition with nest value `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeStepModel {
    universe: Universe,
    outer: NestStructure,
    /// Inner nests of each outer block, sorted by smallest member.
    inner: Vec<Vec<Menu>>,
    u: Vec<f64>,
    v: BTreeMap<Menu, f64>,
    w: BTreeMap<Menu, f64>,
}

impl ThreeStepModel {
    pub fn new(
        universe: Universe,
        outer: NestStructure,
        inner: Vec<Vec<Menu>>,
        u: Vec<f64>,
        v: BTreeMap<Menu, f64>,
        w: BTreeMap<Menu, f64>,
    ) -> Result<Self> {
        validate_u(&universe, &u)?;
        validate_structure(&universe, &outer)?;
        if inner.len() != outer.k() {
            return Err(Error::InvalidModel(format!(
                "{} inner partitions for {} outer blocks",
                inner.len(),
                outer.k()
            )));
        }
        let mut inner = inner;
        for (k, nests) in inner.iter_mut().enumerate() {
            let block = outer.blocks()[k];
            let mut seen = Menu::empty();
            for nest in nests.iter() {
                if nest.is_empty() || !nest.is_subset_of(block) || seen.intersects(*nest) {
                    return Err(Error::InvalidPartition);
                }
                seen = seen.union(*nest);
            }
            if seen != block {
                return Err(Error::InvalidPartition);
            }
            nests.sort_by_key(|n| n.min_member());
        }
        let all_inner: Vec<Menu> = inner.iter().flatten().copied().collect();
        validate_v(&all_inner, &v)?;
        validate_v(outer.blocks(), &w)?;
        Ok(ThreeStepModel { universe, outer, inner, u, v, w })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn outer(&self) -> &NestStructure {
        &self.outer
    }

    pub fn inner(&self) -> &[Vec<Menu>] {
        &self.inner
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v_table(&self) -> &BTreeMap<Menu, f64> {
        &self.v
    }

    pub fn w_table(&self) -> &BTreeMap<Menu, f64> {
        &self.w
    }

    fn v(&self, subset: Menu) -> Result<f64> {
        if subset.is_empty() {
            return Ok(0.0);
        }
        self.v
            .get(&subset)
            .copied()
            .ok_or_else(|| Error::MissingVEntry { subset: subset.member_vec() })
    }

    fn w(&self, subset: Menu) -> Result<f64> {
        if subset.is_empty() {
            return Ok(0.0);
        }
        self.w
            .get(&subset)
            .copied()
            .ok_or_else(|| Error::MissingVEntry { subset: subset.member_vec() })
    }
}

impl ChoiceModel for ThreeStepModel {
    fn universe(&self) -> &Universe {
        &self.universe
    }

    fn prob(&self, a: usize, menu: Menu) -> Result<f64> {
        three_step_prob(self, a, menu)
    }
}

pub fn three_step_prob(model: &ThreeStepModel, a: usize, menu: Menu) -> Result<f64> {
    check_membership(a, menu)?;
    let k = model.outer.block_of(a);
    let nests = &model.inner[k];
    let own_nest = nests
        .iter()
        .find(|n| n.contains(a))
        .copied()
        .expect("inner nests partition the outer block");

    let own_inner = menu.intersect(own_nest);
    let u_sum: f64 = own_inner.members().map(|b| model.u[b]).sum();
    let t1 = model.u[a] / u_sum;

    let mut v_total = 0.0;
    for nest in nests {
        v_total += model.v(menu.intersect(*nest))?;
    }
    let t2 = model.v(own_inner)? / v_total;

    let mut w_total = 0.0;
    for block in model.outer.blocks() {
        w_total += model.w(menu.intersect(*block))?;
    }
    let t3 = model.w(menu.intersect(model.outer.blocks()[k]))? / w_total;

    Ok(t1 * t2 * t3)
}

/// Closed-form nest-value families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PresetNestValueSpec {
    /// v(A) = λ_i · Σu(A) + ν_i per block i.
    Linear { lambda: Vec<f64>, nu: Vec<f64> },
    /// v(A) = (Σu)^{η_i} when |A| > τ_i, else (Σu)^{η̃_i}.
    Threshold { tau: Vec<usize>, eta: Vec<f64>, eta_tilde: Vec<f64> },
    /// v(A) = max of a per-alternative salience over A.
    Salience { s: Vec<f64> },
}

pub fn make_preset_v(
    spec: &PresetNestValueSpec,
    structure: &NestStructure,
    u: &[f64],
) -> Result<BTreeMap<Menu, f64>> {
    let k = structure.k();
    let mut v = BTreeMap::new();
    match spec {
        PresetNestValueSpec::Linear { lambda, nu } => {
            if lambda.len() != k || nu.len() != k {
                return Err(Error::InvalidPreset(format!("linear parameters for {k} blocks")));
            }
            if let Some(i) = lambda.iter().position(|l| *l < 0.0 || !l.is_finite()) {
                return Err(Error::InvalidPreset(format!("lambda[{i}] must be ≥ 0")));
            }
            for (i, block) in structure.blocks().iter().enumerate() {
                for subset in block.subsets() {
                    let sum: f64 = subset.members().map(|a| u[a]).sum();
                    let val = lambda[i] * sum + nu[i];
                    if !(val > 0.0) {
                        return Err(Error::NonpositiveVValue { subset: subset.member_vec() });
                    }
                    v.insert(subset, val);
                }
            }
        }
        PresetNestValueSpec::Threshold { tau, eta, eta_tilde } => {
            if tau.len() != k || eta.len() != k || eta_tilde.len() != k {
                return Err(Error::InvalidPreset(format!("threshold parameters for {k} blocks")));
            }
            for (i, block) in structure.blocks().iter().enumerate() {
                if tau[i] < 1 || tau[i] > block.len() {
                    return Err(Error::InvalidPreset(format!(
                        "tau[{i}] = {} outside 1..={}",
                        tau[i],
                        block.len()
                    )));
                }
                if !(eta[i] > 0.0) || !(eta_tilde[i] > 0.0) {
                    return Err(Error::InvalidPreset(format!("exponents for block {i} must be > 0")));
                }
                for subset in block.subsets() {
                    let sum: f64 = subset.members().map(|a| u[a]).sum();
                    let e = if subset.len() > tau[i] { eta[i] } else { eta_tilde[i] };
                    v.insert(subset, sum.powf(e));
                }
            }
        }
        PresetNestValueSpec::Salience { s } => {
            for block in structure.blocks() {
                for a in block.members() {
                    let sa = s.get(a).copied().unwrap_or(f64::NAN);
                    if !(sa > 0.0) || !sa.is_finite() {
                        return Err(Error::InvalidPreset(format!(
                            "salience of alternative {a} must be > 0"
                        )));
                    }
                }
                for subset in block.subsets() {
                    let val = subset.members().map(|a| s[a]).fold(f64::NEG_INFINITY, f64::max);
                    v.insert(subset, val);
                }
            }
        }
    }
    Ok(v)
}

/// Degeneracy report: which blocks have `v` proportional to utility sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub degenerate: bool,
    /// Indices of non-singleton blocks where v(A) = c·Σu(A) for every subset
    /// containing some anchor.
    pub proportional_blocks: Vec<usize>,
}

/// Tests each block for utility-proportionality of `v`; the model is
/// degenerate when two or more blocks are proportional (the nest structure is
/// then not unique). Singleton blocks satisfy the condition vacuously and are
/// not counted.
pub fn is_degenerate(model: &NscModel, tol: f64) -> DegeneracyReport {
    let mut proportional = Vec::new();
    for (i, block) in model.structure().blocks().iter().enumerate() {
        if block.len() < 2 {
            continue;
        }
        let anchored = block.members().any(|a| {
            let c = model.u()[a].ln() - model.v(Menu::singleton(a)).unwrap().ln();
            block.subsets().filter(|s| s.contains(a)).all(|s| {
                let sum: f64 = s.members().map(|b| model.u()[b]).sum();
                (sum.ln() - model.v(s).unwrap().ln() - c).abs() <= tol
            })
        });
        if anchored {
            proportional.push(i);
        }
    }
    DegeneracyReport { degenerate: proportional.len() >= 2, proportional_blocks: proportional }
}

/// Default cap for complete-table materialization (2^12 − 1 menus).
pub const FULL_TABLE_CAP: usize = 12;

pub fn full_choice_table<M: ChoiceModel>(model: &M) -> Result<ChoiceTable> {
    full_choice_table_with_cap(model, FULL_TABLE_CAP)
}

pub fn full_choice_table_with_cap<M: ChoiceModel>(model: &M, cap: usize) -> Result<ChoiceTable> {
    let n = model.universe().len();
    if n > cap {
        return Err(Error::UniverseTooLarge { size: n, cap });
    }
    let mut rows = Vec::with_capacity((1usize << n) - 1);
    for menu in model.universe().menus() {
        let row: Vec<f64> =
            menu.members().map(|a| model.prob(a, menu)).collect::<Result<Vec<f64>>>()?;
        rows.push((menu, row));
    }
    ChoiceTable::new(model.universe().clone(), rows)
}
