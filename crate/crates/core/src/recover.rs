//! Inverting complete choice tables back into models.
//!
//! `recover_nsc` rebuilds a nested stochastic choice model from a table that
//! satisfies ratio invariance for symmetric additions: the partition is the
//! quotient of revealed similarity, utilities come from binary menus inside
//! each block, and nest values come from group-odds against reference blocks.
//! `recover_eta` then tests whether a recovered model's nest values are a
//! power of summed utility, and `recover_three_step` runs the same program
//! one level up, splitting the universe by the coarser two-layer relation and
//! recovering each outer block as its own model.
//!
//! Every recovery is verified by regenerating the full table and comparing
//! against the input; nothing is returned on faith.

use std::collections::BTreeMap;

use crate::axioms::{check_consistency, check_gisa, check_isa};
use crate::error::{Error, Result};
use crate::models::{is_degenerate, ChoiceModel, NestedLogitModel, NscModel, ThreeStepModel};
use crate::partition::NestStructure;
use crate::similarity::{approx_revealed_similarity, revealed_similarity, SimilarityRelation};
use crate::table::ChoiceTable;
use crate::universe::{Menu, Universe};

/// Max absolute probability gap between a table and a model over the table's
/// menus.
fn table_model_gap(table: &ChoiceTable, model: &impl ChoiceModel) -> Result<f64> {
    let mut worst = 0.0f64;
    for (menu, row) in table.rows() {
        for (pos, a) in menu.members().enumerate() {
            let gap = (model.prob(a, menu)? - row[pos]).abs();
            worst = worst.max(gap);
        }
    }
    Ok(worst)
}

fn similarity_partition(sim: &SimilarityRelation) -> Result<NestStructure> {
    if let Some((a, b, c)) = sim.transitivity_violation() {
        return Err(Error::NotTransitiveSimilarity { a, b, c });
    }
    Ok(sim.partition().expect("transitive relation partitions"))
}

/// Recovers an NSC model from a complete table.
///
/// The table must satisfy the symmetric-additions axiom within `tol`. The
/// result is canonical (min utility 1 per block, first block's v equal 1) and
/// verified: its full table reproduces the input within `tol`. With fewer
/// than three blocks the construction is not guaranteed and failures surface
/// as [`Error::AmbiguousRecovery`].
pub fn recover_nsc(table: &ChoiceTable, tol: f64) -> Result<NscModel> {
    let isa = check_isa(table, tol)?;
    if !isa.passed {
        return Err(Error::IsaViolated { witnesses: isa.witnesses });
    }
    let sim = revealed_similarity(table, tol)?;
    let structure = similarity_partition(&sim)?;
    recover_nsc_with(table, structure, tol)
}

/// The constructive core, with the nest structure supplied by the caller.
pub(crate) fn recover_nsc_with(
    table: &ChoiceTable,
    structure: NestStructure,
    tol: f64,
) -> Result<NscModel> {
    table.require_complete()?;
    let universe = table.universe().clone();
    let blocks = structure.blocks().to_vec();

    // utilities from binary menus against each block's smallest member
    let mut u = vec![0.0; universe.len()];
    for block in &blocks {
        let anchor = block.min_member();
        u[anchor] = 1.0;
        for a in block.members() {
            if a == anchor {
                continue;
            }
            let pair = Menu::singleton(anchor).with(a);
            u[a] = table.prob(a, pair)? / table.prob(anchor, pair)?;
        }
    }

    // nest values from group odds: blocks after the first are measured
    // against block 1; block 1 is measured against block 2 and rescaled so
    // the construction agrees on block 2 itself (v of block 1's full set
    // comes out as exactly 1 after canonicalization)
    let mut v: BTreeMap<Menu, f64> = BTreeMap::new();
    if blocks.len() == 1 {
        for s in blocks[0].subsets() {
            v.insert(s, s.members().map(|a| u[a]).sum());
        }
    } else {
        let x1 = blocks[0];
        let x2 = blocks[1];
        for block in &blocks[1..] {
            for s in block.subsets() {
                let m = s.union(x1);
                v.insert(s, table.group_prob(s, m)? / table.group_prob(x1, m)?);
            }
        }
        let base_menu = x1.union(x2);
        let base = table.group_prob(x2, base_menu)? / table.group_prob(x1, base_menu)?;
        for s in x1.subsets() {
            let m = s.union(x2);
            v.insert(s, table.group_prob(s, m)? / table.group_prob(x2, m)? * base);
        }
    }

    let model = NscModel::new(universe, structure, u, v)?.canonicalize();
    let degeneracy = is_degenerate(&model, tol);
    if degeneracy.degenerate {
        return Err(Error::DegenerateTable { blocks: degeneracy.proportional_blocks });
    }
    let gap = table_model_gap(table, &model)?;
    if gap > tol {
        return Err(Error::AmbiguousRecovery { nests: model.structure().k(), max_err: gap });
    }
    Ok(model)
}

/// Whether a model's nest values are a power of summed utility.
#[derive(Debug, Clone, PartialEq)]
pub enum EtaOutcome {
    NestedLogit(NestedLogitModel),
    /// Worst-violating subset with its log-space deviation. Also returned,
    /// with the block's full set and zero deviation, when a fitted exponent
    /// is not strictly positive.
    NotNestedLogit { block: usize, subset: Menu, deviation: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaRecovery {
    /// Fitted exponent per block.
    pub eta: Vec<f64>,
    /// Fitted per-block scale: v(A) ≈ δ_i · (Σ_A u)^{η_i}.
    pub delta: Vec<f64>,
    /// Blocks whose exponent is unidentified (singletons); η fixed to 1.
    pub defaulted_blocks: Vec<usize>,
    pub outcome: EtaOutcome,
}

/// Tests whether an NSC model is a nested logit in disguise.
///
/// Each block's exponent is pinned by its smallest member and full set, the
/// scale by the smallest member alone; every other subset is then checked
/// against the implied power law in log space. Singleton blocks carry no
/// information about the exponent and default to 1, flagged.
pub fn recover_eta(model: &NscModel, tol: f64) -> Result<EtaRecovery> {
    let degeneracy = is_degenerate(model, tol);
    if degeneracy.degenerate {
        return Err(Error::DegenerateTable { blocks: degeneracy.proportional_blocks });
    }
    let blocks = model.structure().blocks();
    let mut eta = Vec::with_capacity(blocks.len());
    let mut delta = Vec::with_capacity(blocks.len());
    let mut defaulted = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        let anchor = block.min_member();
        if block.len() == 1 {
            eta.push(1.0);
            delta.push(model.v(*block)? / model.u()[anchor]);
            defaulted.push(i);
            continue;
        }
        let u_sum: f64 = block.members().map(|a| model.u()[a]).sum();
        let e = (model.v(*block)?.ln() - model.v(Menu::singleton(anchor))?.ln())
            / (u_sum.ln() - model.u()[anchor].ln());
        delta.push(model.v(Menu::singleton(anchor))? / model.u()[anchor].powf(e));
        eta.push(e);
    }

    let mut worst: Option<(usize, Menu, f64)> = None;
    for (i, block) in blocks.iter().enumerate() {
        for s in block.subsets() {
            let u_sum: f64 = s.members().map(|a| model.u()[a]).sum();
            let dev = (model.v(s)?.ln() - delta[i].ln() - eta[i] * u_sum.ln()).abs();
            if worst.map_or(true, |(_, _, d)| dev > d) {
                worst = Some((i, s, dev));
            }
        }
    }
    let (wb, ws, wd) = worst.expect("at least one block");

    let outcome = if wd > tol {
        EtaOutcome::NotNestedLogit { block: wb, subset: ws, deviation: wd }
    } else if let Some(bad) = eta.iter().position(|e| !(*e > 0.0) || !e.is_finite()) {
        EtaOutcome::NotNestedLogit { block: bad, subset: blocks[bad], deviation: 0.0 }
    } else {
        // fold the scale into utility: ū = δ^{1/η} u reproduces v exactly
        let mut scaled = model.u().to_vec();
        for (i, block) in blocks.iter().enumerate() {
            let factor = delta[i].powf(1.0 / eta[i]);
            for a in block.members() {
                scaled[a] *= factor;
            }
        }
        EtaOutcome::NestedLogit(NestedLogitModel::new(
            model.universe().clone(),
            model.structure().clone(),
            scaled,
            eta.clone(),
        )?)
    };
    Ok(EtaRecovery { eta, delta, defaulted_blocks: defaulted, outcome })
}

fn to_local(global: Menu, members: &[usize]) -> Menu {
    Menu::from_members(
        members.iter().enumerate().filter(|(_, g)| global.contains(**g)).map(|(l, _)| l),
    )
}

fn to_global(local: Menu, members: &[usize]) -> Menu {
    Menu::from_members(local.members().map(|l| members[l]))
}

/// Recovers a two-layer nested model from a complete table.
///
/// The outer partition is the quotient of the coarser revealed relation (the
/// union of similarity and its invariance-based extension); each outer block
/// is recovered as a standalone model on its restricted table, and the outer
/// nest value comes from the same group-odds construction applied to whole
/// blocks. With one outer block the outer layer collapses (w ≡ 1) and the
/// result is the plain recovery wrapped in a trivial shell.
pub fn recover_three_step(table: &ChoiceTable, tol: f64) -> Result<ThreeStepModel> {
    let gisa = check_gisa(table, tol)?;
    if !gisa.passed {
        return Err(Error::GisaViolated { witnesses: gisa.witnesses });
    }
    let consistency = check_consistency(table, tol)?;
    if !consistency.passed {
        return Err(Error::ConsistencyViolated { witnesses: consistency.witnesses });
    }
    let sim = revealed_similarity(table, tol)?;
    let approx = approx_revealed_similarity(table, &sim, tol)?;
    let outer = similarity_partition(&approx.union)?;
    let inner_classes = similarity_partition(&sim)?;

    let universe = table.universe().clone();
    let mut u = vec![0.0; universe.len()];
    let mut v: BTreeMap<Menu, f64> = BTreeMap::new();
    let mut inner: Vec<Vec<Menu>> = Vec::new();
    for block in outer.blocks() {
        let members = block.member_vec();
        let sub_universe = Universe::new(members.iter().map(|a| universe.name(*a)))?;
        let sub_blocks: Vec<Menu> = inner_classes
            .blocks()
            .iter()
            .filter(|c| c.intersects(*block))
            .map(|c| to_local(*c, &members))
            .collect();
        let sub_structure = NestStructure::new(sub_blocks, members.len())?;
        let rows: Vec<(Menu, Vec<f64>)> = block
            .subsets()
            .map(|s| (to_local(s, &members), table.row(s).expect("complete table").to_vec()))
            .collect();
        let sub_table = ChoiceTable::new(sub_universe, rows)?;
        let sub_model = recover_nsc_with(&sub_table, sub_structure, tol)?;
        for (l, g) in members.iter().enumerate() {
            u[*g] = sub_model.u()[l];
        }
        for (s, val) in sub_model.v_table() {
            v.insert(to_global(*s, &members), *val);
        }
        inner.push(
            sub_model.structure().blocks().iter().map(|b| to_global(*b, &members)).collect(),
        );
    }

    let mut w: BTreeMap<Menu, f64> = BTreeMap::new();
    if outer.k() == 1 {
        for s in outer.blocks()[0].subsets() {
            w.insert(s, 1.0);
        }
    } else {
        let x1 = outer.blocks()[0];
        let x2 = outer.blocks()[1];
        for block in &outer.blocks()[1..] {
            for s in block.subsets() {
                let m = s.union(x1);
                w.insert(s, table.group_prob(s, m)? / table.group_prob(x1, m)?);
            }
        }
        let base_menu = x1.union(x2);
        let base = table.group_prob(x2, base_menu)? / table.group_prob(x1, base_menu)?;
        for s in x1.subsets() {
            let m = s.union(x2);
            w.insert(s, table.group_prob(s, m)? / table.group_prob(x2, m)? * base);
        }
    }

    let k = outer.k();
    let model = ThreeStepModel::new(universe, outer, inner, u, v, w)?;
    let gap = table_model_gap(table, &model)?;
    if gap > tol {
        return Err(Error::AmbiguousRecovery { nests: k, max_err: gap });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{full_choice_table, make_preset_v, PresetNestValueSpec};

    const TOL: f64 = 1e-9;

    fn menu(m: &[usize]) -> Menu {
        Menu::from_members(m.iter().copied())
    }

    #[test]
    fn bus_table_recovery() {
        let universe = Universe::new(["r", "b", "t"]).unwrap();
        let structure = NestStructure::new(vec![menu(&[0, 1]), menu(&[2])], 3).unwrap();
        let v = BTreeMap::from([
            (menu(&[0]), 1.0),
            (menu(&[1]), 1.0),
            (menu(&[0, 1]), 1.0),
            (menu(&[2]), 1.0),
        ]);
        let m = NscModel::new(universe, structure, vec![1.0; 3], v).unwrap();
        let table = full_choice_table(&m).unwrap();
        let rec = recover_nsc(&table, TOL).unwrap();
        assert_eq!(rec.structure().blocks(), &[menu(&[0, 1]), menu(&[2])]);
        assert!((rec.u()[0] - rec.u()[1]).abs() < 1e-15);
        let full = menu(&[0, 1, 2]);
        let rt = full_choice_table(&rec).unwrap();
        approx::assert_abs_diff_eq!(rt.prob(0, full).unwrap(), 0.25, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(rt.prob(1, full).unwrap(), 0.25, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(rt.prob(2, full).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn luce_recovery_single_block() {
        let universe = Universe::indexed(3).unwrap();
        let m = NestedLogitModel::new(
            universe,
            NestStructure::one_block(3),
            vec![1.0, 2.0, 3.5],
            vec![1.0],
        )
        .unwrap();
        let table = full_choice_table(&m).unwrap();
        let rec = recover_nsc(&table, TOL).unwrap();
        assert_eq!(rec.structure().k(), 1);
        // canonical scale: smallest utility is 1
        approx::assert_abs_diff_eq!(rec.u()[0], 1.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(rec.u()[1], 2.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(rec.u()[2], 3.5, epsilon = 1e-12);
    }

    fn generic_three_block() -> NscModel {
        let universe = Universe::indexed(6).unwrap();
        let structure =
            NestStructure::new(vec![menu(&[0, 1, 2]), menu(&[3, 4]), menu(&[5])], 6).unwrap();
        let u = vec![1.0, 1.7, 0.6, 2.1, 0.9, 1.3];
        let v = BTreeMap::from([
            (menu(&[0]), 1.0),
            (menu(&[1]), 1.4),
            (menu(&[2]), 0.5),
            (menu(&[0, 1]), 2.9),
            (menu(&[0, 2]), 1.8),
            (menu(&[1, 2]), 2.3),
            (menu(&[0, 1, 2]), 3.8),
            (menu(&[3]), 1.2),
            (menu(&[4]), 0.8),
            (menu(&[3, 4]), 2.7),
            (menu(&[5]), 0.9),
        ]);
        NscModel::new(universe, structure, u, v).unwrap()
    }

    #[test]
    fn three_block_round_trip() {
        let m = generic_three_block();
        let table = full_choice_table(&m).unwrap();
        let rec = recover_nsc(&table, TOL).unwrap();
        assert_eq!(rec.structure(), m.structure());
        let gap = table_model_gap(&table, &rec).unwrap();
        assert!(gap < 1e-10, "round-trip gap {gap}");
        // canonical parameters are a fixed point, up to rounding
        let again = recover_nsc(&full_choice_table(&rec).unwrap(), TOL).unwrap();
        for (a, b) in rec.u().iter().copied().zip(again.u().iter().copied()) {
            approx::assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        assert_eq!(
            rec.v_table().keys().collect::<Vec<_>>(),
            again.v_table().keys().collect::<Vec<_>>()
        );
        for (a, b) in rec.v_table().values().copied().zip(again.v_table().values().copied()) {
            approx::assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn isa_violation_rejected() {
        let universe = Universe::indexed(3).unwrap();
        let rows: Vec<(Menu, Vec<f64>)> = vec![
            (menu(&[0]), vec![1.0]),
            (menu(&[1]), vec![1.0]),
            (menu(&[2]), vec![1.0]),
            (menu(&[0, 1]), vec![0.5, 0.5]),
            (menu(&[0, 2]), vec![0.5, 0.5]),
            (menu(&[1, 2]), vec![0.5, 0.5]),
            // the skewed triple makes every pair dissimilar, and then the
            // dissimilar-additions branch demands the binary ratios persist
            (menu(&[0, 1, 2]), vec![0.6, 0.25, 0.15]),
        ];
        let table = ChoiceTable::new(universe, rows).unwrap();
        match recover_nsc(&table, TOL) {
            Err(Error::IsaViolated { witnesses }) => assert!(!witnesses.is_empty()),
            other => panic!("expected ISA violation, got {other:?}"),
        }
    }

    #[test]
    fn eta_recovered_from_power_form() {
        let universe = Universe::indexed(4).unwrap();
        let structure = NestStructure::new(vec![menu(&[0, 1]), menu(&[2, 3])], 4).unwrap();
        let m = NestedLogitModel::new(universe, structure, vec![1.0, 2.0, 0.5, 1.5], vec![0.5, 0.5])
            .unwrap();
        let rec = recover_eta(&m.to_nsc().unwrap(), 1e-12).unwrap();
        approx::assert_abs_diff_eq!(rec.eta[0], 0.5, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(rec.eta[1], 0.5, epsilon = 1e-12);
        assert!(matches!(rec.outcome, EtaOutcome::NestedLogit(_)));
        assert!(rec.defaulted_blocks.is_empty());
    }

    #[test]
    fn eta_round_trip_through_table_recovery() {
        let universe = Universe::indexed(4).unwrap();
        let structure = NestStructure::new(vec![menu(&[0, 1]), menu(&[2, 3])], 4).unwrap();
        let m = NestedLogitModel::new(universe, structure, vec![1.0, 2.0, 0.5, 1.5], vec![0.3, 1.7])
            .unwrap();
        let table = full_choice_table(&m).unwrap();
        let nsc = recover_nsc(&table, TOL).unwrap();
        let rec = recover_eta(&nsc, TOL).unwrap();
        assert!((rec.eta[0] - 0.3).abs() < 1e-10, "eta0 {}", rec.eta[0]);
        assert!((rec.eta[1] - 1.7).abs() < 1e-10, "eta1 {}", rec.eta[1]);
        match rec.outcome {
            EtaOutcome::NestedLogit(nl) => {
                let gap = table_model_gap(&table, &nl).unwrap();
                assert!(gap < 1e-10, "nested logit gap {gap}");
            }
            other => panic!("expected nested logit, got {other:?}"),
        }
    }

    #[test]
    fn linear_preset_is_not_a_nested_logit() {
        let universe = Universe::indexed(4).unwrap();
        let structure = NestStructure::new(vec![menu(&[0, 1, 2]), menu(&[3])], 4).unwrap();
        let u = vec![1.0, 2.0, 0.5, 1.0];
        let v = make_preset_v(
            &PresetNestValueSpec::Linear { lambda: vec![1.0, 1.0], nu: vec![5.0, 5.0] },
            &structure,
            &u,
        )
        .unwrap();
        let m = NscModel::new(universe, structure, u, v).unwrap();
        let rec = recover_eta(&m, TOL).unwrap();
        match rec.outcome {
            EtaOutcome::NotNestedLogit { block, deviation, .. } => {
                assert_eq!(block, 0);
                assert!(deviation > TOL);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn singleton_block_eta_defaults_to_one() {
        let universe = Universe::indexed(3).unwrap();
        let structure = NestStructure::new(vec![menu(&[0, 1]), menu(&[2])], 3).unwrap();
        let u = vec![1.0, 2.0, 1.5];
        let v = BTreeMap::from([
            (menu(&[0]), 1.0),
            (menu(&[1]), 2.0),
            (menu(&[0, 1]), 3.0),
            (menu(&[2]), 0.7),
        ]);
        let m = NscModel::new(universe, structure, u, v).unwrap();
        let rec = recover_eta(&m, TOL).unwrap();
        assert_eq!(rec.defaulted_blocks, vec![1]);
        assert_eq!(rec.eta[1], 1.0);
        assert!(matches!(rec.outcome, EtaOutcome::NestedLogit(_)));
    }

    fn three_step_parts() -> (Vec<f64>, BTreeMap<Menu, f64>, BTreeMap<Menu, f64>) {
        let u = vec![1.0, 2.0, 0.5, 1.5, 1.2, 0.8, 1.0];
        let v = BTreeMap::from([
            (menu(&[0]), 1.0),
            (menu(&[1]), 1.7),
            (menu(&[0, 1]), 3.1),
            (menu(&[2]), 0.9),
            (menu(&[3]), 1.1),
            (menu(&[2, 3]), 2.6),
            (menu(&[4]), 1.3),
            (menu(&[5]), 0.7),
            (menu(&[4, 5]), 2.2),
            (menu(&[6]), 1.0),
        ]);
        (u, v, BTreeMap::new())
    }

    fn fill_w(outer: &NestStructure, w: &mut BTreeMap<Menu, f64>) {
        for block in outer.blocks() {
            for s in block.subsets() {
                let size = s.len() as f64;
                let weight: f64 = s.members().map(|a| 0.2 * (a as f64 + 1.0)).sum();
                w.insert(s, 0.5 + weight + 0.3 * size.sqrt());
            }
        }
    }

    fn generic_three_step() -> ThreeStepModel {
        let universe = Universe::indexed(7).unwrap();
        let outer = NestStructure::new(vec![menu(&[0, 1, 2, 3]), menu(&[4, 5, 6])], 7).unwrap();
        let inner = vec![
            vec![menu(&[0, 1]), menu(&[2, 3])],
            vec![menu(&[4, 5]), menu(&[6])],
        ];
        let (u, v, mut w) = three_step_parts();
        fill_w(&outer, &mut w);
        ThreeStepModel::new(universe, outer, inner, u, v, w).unwrap()
    }

    #[test]
    fn three_step_structure_recovered() {
        // Every outer block has at least two inner nests, so the outer layer
        // is pinned down and the generating structure comes back exactly.
        let m = generic_three_step();
        let table = full_choice_table(&m).unwrap();
        let rec = recover_three_step(&table, TOL).unwrap();
        assert_eq!(rec.outer(), m.outer());
        assert_eq!(rec.inner(), m.inner());
        let gap = table_model_gap(&table, &rec).unwrap();
        assert!(gap < 1e-10, "three-step gap {gap}");
    }

    #[test]
    fn single_nest_outer_blocks_merge_into_the_quotient() {
        // Outer blocks whose inner layer is one whole nest are observationally
        // interchangeable with a merged block (the merged w is the sum of the
        // parts), so recovery returns the coarser canonical structure.
        let universe = Universe::indexed(7).unwrap();
        let outer =
            NestStructure::new(vec![menu(&[0, 1, 2, 3]), menu(&[4, 5]), menu(&[6])], 7).unwrap();
        let inner = vec![
            vec![menu(&[0, 1]), menu(&[2, 3])],
            vec![menu(&[4, 5])],
            vec![menu(&[6])],
        ];
        let (u, v, mut w) = three_step_parts();
        fill_w(&outer, &mut w);
        let m = ThreeStepModel::new(universe, outer, inner, u, v, w).unwrap();
        let table = full_choice_table(&m).unwrap();
        let rec = recover_three_step(&table, TOL).unwrap();
        assert_eq!(rec.outer().blocks(), &[menu(&[0, 1, 2, 3]), menu(&[4, 5, 6])]);
        assert_eq!(rec.inner()[1], vec![menu(&[4, 5]), menu(&[6])]);
        let gap = table_model_gap(&table, &rec).unwrap();
        assert!(gap < 1e-10, "merged-structure gap {gap}");
    }

    #[test]
    fn plain_nsc_collapses_to_trivial_outer_layer() {
        let universe = Universe::indexed(4).unwrap();
        let structure = NestStructure::new(vec![menu(&[0, 1]), menu(&[2, 3])], 4).unwrap();
        let m = NestedLogitModel::new(universe, structure, vec![1.0, 2.0, 0.5, 1.5], vec![0.4, 1.6])
            .unwrap();
        let table = full_choice_table(&m).unwrap();
        let rec = recover_three_step(&table, TOL).unwrap();
        assert_eq!(rec.outer().k(), 1, "cross-block pairs coalesce the outer layer");
        assert_eq!(rec.inner()[0], vec![menu(&[0, 1]), menu(&[2, 3])]);
        assert!(rec.w_table().values().all(|w| *w == 1.0));
        // matches the plain recovery exactly
        let plain = recover_nsc(&table, TOL).unwrap();
        assert_eq!(rec.u(), plain.u());
        assert_eq!(rec.v_table(), plain.v_table());
        let gap = table_model_gap(&table, &rec).unwrap();
        assert!(gap < 1e-10);
    }

    #[test]
    fn gisa_violation_rejected() {
        let m = generic_three_step();
        let table = full_choice_table(&m).unwrap();
        // perturb one big-menu row
        let target = menu(&[0, 2, 4, 6]);
        let rows: Vec<(Menu, Vec<f64>)> = table
            .rows()
            .map(|(menu, row)| {
                let mut row = row.to_vec();
                if menu == target {
                    row[0] *= 1.3;
                    let s: f64 = row.iter().sum();
                    for p in &mut row {
                        *p /= s;
                    }
                }
                (menu, row)
            })
            .collect();
        let bad = ChoiceTable::new(table.universe().clone(), rows).unwrap();
        match recover_three_step(&bad, TOL) {
            Err(Error::GisaViolated { witnesses }) => assert!(!witnesses.is_empty()),
            other => panic!("expected GISA violation, got {other:?}"),
        }
    }
}
