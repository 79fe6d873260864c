//! Nest identification by minimizing measured IIA violations.
//!
//! For a hypothesized partition 𝒴 the loss D(𝒴) = D1(𝒴) + D2(𝒴) aggregates
//! squared cross-menu deviations of log odds: D1 between alternatives sharing
//! a block (IIA should hold within a nest), D2 between whole blocks holding
//! both intersections fixed (odds between nests should not react to third
//! alternatives). The true nest structure zeroes both on exact tables and
//! stays the argmin under sampling noise, which turns nest discovery into a
//! search over partitions: exhaustive for small universes, or restricted to
//! the ≤ |X| candidates derived from the pairwise distance matrix.

use rayon::prelude::*;

use crate::data::FrequencyData;
use crate::error::Result;
use crate::numeric::centered_sum_sq;
use crate::partition::{self, NestStructure, Partitions};
use crate::similarity::{candidate_partitions, distance_matrix};
use crate::universe::{Menu, Universe};

/// Scored partition: the two loss halves with their tuple counts.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub partition: NestStructure,
    pub d1: f64,
    pub d2: f64,
    pub total: f64,
    /// Number of (menu, menu, a, b) tuples behind d1; 0 means d1 was an
    /// empty average (reported as 0).
    pub n1: u64,
    /// Number of (menu, menu) tuples behind d2; 0 likewise.
    pub n2: u64,
}

impl LossBreakdown {
    pub fn d1_degenerate(&self) -> bool {
        self.n1 == 0
    }

    pub fn d2_degenerate(&self) -> bool {
        self.n2 == 0
    }
}

/// Cross-menu log-odds statistics of one alternative pair: over the m menus
/// containing both, the count and centered square sum of
/// x_A = log p(a,A) − log p(b,A).
#[derive(Debug, Clone, Copy, Default)]
struct PairStat {
    m: u64,
    /// Σ (x_A − x̄)², computed centered: the raw-moment shortcut cancels to
    /// rounding noise on exact tables, where the true spread is ~1e-30.
    ss: f64,
}

impl PairStat {
    /// Σ over ordered menu pairs of (x_A − x_B)² = 2·m·Σ(x_A − x̄)².
    fn spread(&self) -> f64 {
        2.0 * self.m as f64 * self.ss
    }
}

/// Precomputed per-dataset tables shared across partition scores.
pub(crate) struct LossEngine {
    n: usize,
    menus: Vec<Menu>,
    rows: Vec<Vec<f64>>,
    stats: Vec<PairStat>,
}

impl LossEngine {
    pub(crate) fn new(data: &FrequencyData) -> Self {
        let n = data.universe().len();
        let mut menus = Vec::with_capacity(data.len());
        let mut rows = Vec::with_capacity(data.len());
        for (menu, row) in data.rows() {
            menus.push(menu);
            rows.push(row.to_vec());
        }
        let mut samples = vec![Vec::new(); n * n];
        for (menu, row) in menus.iter().zip(&rows) {
            let members: Vec<usize> = menu.members().collect();
            let logs: Vec<f64> = row.iter().map(|p| p.ln()).collect();
            for (i, &a) in members.iter().enumerate() {
                for (j, &b) in members.iter().enumerate().skip(i + 1) {
                    samples[a * n + b].push(logs[i] - logs[j]);
                }
            }
        }
        let stats = samples
            .into_iter()
            .map(|xs| PairStat { m: xs.len() as u64, ss: centered_sum_sq(&xs) })
            .collect();
        LossEngine { n, menus, rows, stats }
    }

    fn d1(&self, y: &NestStructure) -> (f64, u64) {
        let mut numer = 0.0;
        let mut count = 0u64;
        for block in y.blocks() {
            let members: Vec<usize> = block.members().collect();
            for (i, &a) in members.iter().enumerate() {
                for &b in members.iter().skip(i + 1) {
                    let s = &self.stats[a * self.n + b];
                    if s.m > 0 {
                        // both orders of (a, b) contribute the same square
                        numer += 2.0 * s.spread();
                        count += 2 * s.m * s.m;
                    }
                }
            }
        }
        (if count == 0 { 0.0 } else { numer / count as f64 }, count)
    }

    fn d2(&self, y: &NestStructure) -> (f64, u64) {
        let k = y.k();
        if k < 2 {
            return (0.0, 0);
        }
        // per menu, log of the summed frequency of each block's intersection
        let mut block_logs = vec![f64::NAN; self.menus.len() * k];
        for (mi, (menu, row)) in self.menus.iter().zip(&self.rows).enumerate() {
            for (bi, block) in y.blocks().iter().enumerate() {
                let common = menu.intersect(*block);
                if common.is_empty() {
                    continue;
                }
                let sum: f64 =
                    common.members().map(|a| row[menu.position_of(a).unwrap()]).sum();
                block_logs[mi * k + bi] = sum.ln();
            }
        }
        let mut numer = 0.0;
        let mut count = 0u64;
        let mut keyed: Vec<(u64, u64, f64)> = Vec::with_capacity(self.menus.len());
        let mut group: Vec<f64> = Vec::with_capacity(self.menus.len());
        for bi in 0..k {
            for bj in (bi + 1)..k {
                keyed.clear();
                for (mi, menu) in self.menus.iter().enumerate() {
                    let li = block_logs[mi * k + bi];
                    let lj = block_logs[mi * k + bj];
                    if li.is_nan() || lj.is_nan() {
                        continue; // a block misses the menu: odds undefined
                    }
                    let yi = menu.intersect(y.blocks()[bi]).bits();
                    let yj = menu.intersect(y.blocks()[bj]).bits();
                    keyed.push((yi, yj, li - lj));
                }
                keyed.sort_unstable_by(|p, q| {
                    p.0.cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.total_cmp(&q.2))
                });
                let mut idx = 0;
                while idx < keyed.len() {
                    let (ka, kb, _) = keyed[idx];
                    group.clear();
                    while idx < keyed.len() && keyed[idx].0 == ka && keyed[idx].1 == kb {
                        group.push(keyed[idx].2);
                        idx += 1;
                    }
                    let g = group.len() as u64;
                    numer += 2.0 * g as f64 * centered_sum_sq(&group);
                    count += g * g;
                }
            }
        }
        (if count == 0 { 0.0 } else { numer / count as f64 }, count)
    }

    pub(crate) fn score(&self, partition: &NestStructure) -> LossBreakdown {
        let (d1, n1) = self.d1(partition);
        let (d2, n2) = self.d2(partition);
        LossBreakdown { partition: partition.clone(), d1, d2, total: d1 + d2, n1, n2 }
    }
}

/// D1(𝒴): mean squared cross-menu deviation of log(p(a,A)/p(b,A)) over all
/// ordered menu pairs (A = B included) and ordered distinct (a, b) sharing a
/// block. An empty index set yields (0, 0).
pub fn loss_d1(data: &FrequencyData, y: &NestStructure) -> (f64, u64) {
    LossEngine::new(data).d1(y)
}

/// D2(𝒴): mean squared cross-menu deviation of the block odds
/// log(p(A∩Y,A)/p(A∩Y′,A)) over distinct block pairs and ordered menu pairs
/// agreeing on both intersections (both nonempty). Empty set yields (0, 0).
pub fn loss_d2(data: &FrequencyData, y: &NestStructure) -> (f64, u64) {
    LossEngine::new(data).d2(y)
}

/// Both halves of the loss for one partition.
pub fn score_partition(data: &FrequencyData, y: &NestStructure) -> LossBreakdown {
    LossEngine::new(data).score(y)
}

/// All partitions of the universe in restricted-growth order; capped at
/// |X| ≤ 12 (Bell(12) = 4,213,597).
pub fn enumerate_partitions(universe: &Universe) -> Result<Partitions> {
    partition::partitions(universe.len())
}

/// Totals below this are double-precision residue of a mathematically zero
/// loss (centered accumulation leaves ~1e-30 on exact tables). Ranking treats
/// them as exact ties so IIA data resolves to the coarsest partition.
const ZERO_TIE: f64 = 1e-24;

fn rank(mut list: Vec<LossBreakdown>, n: usize) -> (NestStructure, Vec<LossBreakdown>) {
    let key = |b: &LossBreakdown| if b.total < ZERO_TIE { 0.0 } else { b.total };
    list.sort_unstable_by(|x, y| {
        key(x)
            .partial_cmp(&key(y))
            .unwrap()
            .then_with(|| x.partition.k().cmp(&y.partition.k()))
            .then_with(|| x.partition.rgs(n).cmp(&y.partition.rgs(n)))
    });
    (list[0].partition.clone(), list)
}

/// Scores every partition of the universe and returns the argmin plus the
/// full ranked list (ascending loss; ties go to fewer blocks, then
/// restricted-growth order). The list has Bell(|X|) entries, so keep |X|
/// small; |X| > 12 is rejected.
pub fn identify_full(data: &FrequencyData) -> Result<(NestStructure, Vec<LossBreakdown>)> {
    let n = data.universe().len();
    let engine = LossEngine::new(data);
    let mut iter = enumerate_partitions(data.universe())?;
    let mut list = Vec::new();
    loop {
        let chunk: Vec<NestStructure> = iter.by_ref().take(8192).collect();
        if chunk.is_empty() {
            break;
        }
        list.par_extend(chunk.into_par_iter().map(|p| engine.score(&p)));
    }
    Ok(rank(list, n))
}

/// Scores only the ≤ |X| candidate partitions derived from the distance
/// matrix; the tie-break matches `identify_full`. Usable when full
/// enumeration is out of reach.
pub fn identify_reduced(data: &FrequencyData) -> (NestStructure, Vec<LossBreakdown>) {
    let n = data.universe().len();
    let engine = LossEngine::new(data);
    let candidates = candidate_partitions(&distance_matrix(data));
    let list = candidates.partitions.iter().map(|p| engine.score(p)).collect();
    rank(list, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{full_choice_table, NestedLogitModel};
    use crate::table::ChoiceTable;
    use approx::assert_abs_diff_eq;

    fn menu(m: &[usize]) -> Menu {
        Menu::from_members(m.iter().copied())
    }

    /// Dataset fixed in the loss oracle.
    fn oracle_data() -> FrequencyData {
        let universe = Universe::indexed(3).unwrap();
        let t = ChoiceTable::new(
            universe,
            [
                (menu(&[0, 1]), vec![0.6, 0.4]),
                (menu(&[0, 1, 2]), vec![0.5, 0.3, 0.2]),
                (menu(&[1, 2]), vec![0.55, 0.45]),
            ],
        )
        .unwrap();
        FrequencyData::from_table(&t)
    }

    #[test]
    fn d1_oracle_values() {
        let data = oracle_data();
        let one = NestStructure::one_block(3);
        let (d1, n1) = loss_d1(&data, &one);
        assert_abs_diff_eq!(d1, 0.01178701993571301, epsilon = 1e-16);
        assert_eq!(n1, 18);
        let (d1, n1) = loss_d1(&data, &NestStructure::from_rgs(&[0, 0, 1]));
        assert_abs_diff_eq!(d1, 0.00555041912984155, epsilon = 1e-16);
        assert_eq!(n1, 8);
        let (d1, n1) = loss_d1(&data, &NestStructure::from_rgs(&[0, 1, 1]));
        assert_abs_diff_eq!(d1, 0.020970375725512726, epsilon = 1e-16);
        assert_eq!(n1, 8);
        let (d1, n1) = loss_d1(&data, &NestStructure::from_rgs(&[0, 1, 0]));
        assert_abs_diff_eq!(d1, 0.0);
        assert_eq!(n1, 2);
        let (d1, n1) = loss_d1(&data, &NestStructure::singletons(3));
        assert_abs_diff_eq!(d1, 0.0);
        assert_eq!(n1, 0);
    }

    #[test]
    fn d2_oracle_values() {
        let data = oracle_data();
        let (d2, n2) = loss_d2(&data, &NestStructure::one_block(3));
        assert_abs_diff_eq!(d2, 0.0);
        assert_eq!(n2, 0);
        let (d2, n2) = loss_d2(&data, &NestStructure::from_rgs(&[0, 0, 1]));
        assert_abs_diff_eq!(d2, 0.0);
        assert_eq!(n2, 2);
        let (d2, n2) = loss_d2(&data, &NestStructure::from_rgs(&[0, 1, 0]));
        assert_abs_diff_eq!(d2, 0.0);
        assert_eq!(n2, 3);
        let (d2, n2) = loss_d2(&data, &NestStructure::singletons(3));
        assert_abs_diff_eq!(d2, 0.01178701993571301, epsilon = 1e-16);
        assert_eq!(n2, 9);
    }

    #[test]
    fn identify_full_oracle_argmin() {
        let (best, list) = identify_full(&oracle_data()).unwrap();
        assert_eq!(best, NestStructure::from_rgs(&[0, 1, 0]));
        assert_eq!(list.len(), 5);
        assert_abs_diff_eq!(list[0].total, 0.0);
        assert!(list.windows(2).all(|w| w[0].total <= w[1].total));
    }

    fn exact_two_block() -> (NestStructure, FrequencyData) {
        let universe = Universe::indexed(4).unwrap();
        let structure = NestStructure::new(vec![menu(&[0, 1]), menu(&[2, 3])], 4).unwrap();
        let m = NestedLogitModel::new(
            universe,
            structure.clone(),
            vec![1.0, 2.0, 0.5, 1.5],
            vec![0.4, 1.6],
        )
        .unwrap();
        (structure, FrequencyData::from_table(&full_choice_table(&m).unwrap()))
    }

    #[test]
    fn exact_table_identifies_truth_uniquely() {
        let (truth, data) = exact_two_block();
        let (best, list) = identify_full(&data).unwrap();
        assert_eq!(best, truth);
        assert!(list[0].total < 1e-20);
        assert!(list[1].total > 1e-6, "second best should have positive loss");
    }

    #[test]
    fn luce_tie_breaks_to_one_block() {
        let universe = Universe::indexed(3).unwrap();
        let m = NestedLogitModel::new(
            universe,
            NestStructure::one_block(3),
            vec![1.0, 2.0, 3.0],
            vec![1.0],
        )
        .unwrap();
        let data = FrequencyData::from_table(&full_choice_table(&m).unwrap());
        let (best, list) = identify_full(&data).unwrap();
        assert_eq!(best, NestStructure::one_block(3));
        for entry in &list {
            assert!(entry.total < 1e-24, "IIA data should zero every partition");
        }
    }

    #[test]
    fn reduced_matches_full_on_exact_tables() {
        let (truth, data) = exact_two_block();
        let (best, list) = identify_reduced(&data);
        assert_eq!(best, truth);
        assert!(list.len() <= 4);
        let (full_best, _) = identify_full(&data).unwrap();
        assert_eq!(best, full_best);
    }

    #[test]
    fn refinements_of_truth_have_zero_d1() {
        let (truth, data) = exact_two_block();
        for p in enumerate_partitions(data.universe()).unwrap() {
            if p.refines(&truth) {
                let (d1, _) = loss_d1(&data, &p);
                assert!(d1 < 1e-24);
            }
        }
    }

    #[test]
    fn enumerate_counts_and_cap() {
        let u3 = Universe::indexed(3).unwrap();
        assert_eq!(enumerate_partitions(&u3).unwrap().count(), 5);
        let u13 = Universe::indexed(13).unwrap();
        assert!(enumerate_partitions(&u13).is_err());
    }

    #[test]
    fn empty_data_flags_degenerate_losses() {
        let universe = Universe::indexed(3).unwrap();
        let data =
            FrequencyData::from_dataset(&crate::data::Dataset::empty(universe)).unwrap();
        let (best, list) = identify_full(&data).unwrap();
        assert_eq!(best, NestStructure::one_block(3));
        assert!(list.iter().all(|l| l.d1_degenerate() && l.d2_degenerate()));
    }

    #[test]
    fn loss_invariant_to_count_scale() {
        // frequencies carry no sample-size information, so x2 counts match
        let universe = Universe::indexed(3).unwrap();
        let m = menu(&[0, 1, 2]);
        let d1 = crate::data::Dataset::new(universe.clone(), [(m, vec![6, 3, 1])]).unwrap();
        let d2 = crate::data::Dataset::new(universe, [(m, vec![12, 6, 2])]).unwrap();
        let f1 = FrequencyData::from_dataset(&d1).unwrap();
        let f2 = FrequencyData::from_dataset(&d2).unwrap();
        let y = NestStructure::from_rgs(&[0, 0, 1]);
        assert_eq!(loss_d1(&f1, &y), loss_d1(&f2, &y));
        assert_eq!(loss_d2(&f1, &y), loss_d2(&f2, &y));
    }
}
