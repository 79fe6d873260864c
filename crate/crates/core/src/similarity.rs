//! Revealed similarity and the IIA-violation distance.
//!
//! Two layers of similarity are read off a complete choice table:
//!
//! * `a ∼ b` (categorically similar): the odds p(a,A)/p(b,A) are the same on
//!   every menu containing both, so IIA holds between them everywhere.
//! * `a ⋈ b` (approximately similar): `a ≁ b`, but the odds are unaffected by
//!   adding any alternative dissimilar to both. This is the upper layer of a
//!   3-step nest tree.
//!
//! For finite data the module provides the pairwise distance `d(a,b)`, the
//! mean squared cross-menu deviation of log odds, together with threshold
//! partitions `∼_ε` (`d(a,b) < ε`) and the candidate set construction that
//! yields at most |X| partitions worth scoring.

use std::collections::BTreeMap;

use crate::data::FrequencyData;
use crate::error::{Error, Result};
use crate::models::NscModel;
use crate::numeric::centered_sum_sq;
use crate::partition::NestStructure;
use crate::table::ChoiceTable;
use crate::universe::{Menu, Universe};

/// Reflexive symmetric boolean relation on the universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityRelation {
    universe: Universe,
    related: Vec<bool>,
}

impl SimilarityRelation {
    /// Builds the relation from a predicate evaluated on pairs a < b; the
    /// diagonal is true and symmetry is by construction.
    pub fn from_fn(universe: Universe, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let n = universe.len();
        let mut related = vec![false; n * n];
        for a in 0..n {
            related[a * n + a] = true;
            for b in (a + 1)..n {
                let r = f(a, b);
                related[a * n + b] = r;
                related[b * n + a] = r;
            }
        }
        SimilarityRelation { universe, related }
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn n(&self) -> usize {
        self.universe.len()
    }

    pub fn similar(&self, a: usize, b: usize) -> bool {
        self.related[a * self.n() + b]
    }

    pub fn is_complete(&self) -> bool {
        self.related.iter().all(|r| *r)
    }

    /// First triple (a, b, c) with a ∼ b, b ∼ c, a ≁ c, if any.
    pub fn transitivity_violation(&self) -> Option<(usize, usize, usize)> {
        let n = self.n();
        for a in 0..n {
            for b in 0..n {
                if b == a || !self.similar(a, b) {
                    continue;
                }
                for c in 0..n {
                    if c != a && c != b && self.similar(b, c) && !self.similar(a, c) {
                        return Some((a, b, c));
                    }
                }
            }
        }
        None
    }

    pub fn is_transitive(&self) -> bool {
        self.transitivity_violation().is_none()
    }

    /// Quotient partition, or `None` when the relation is not transitive.
    pub fn partition(&self) -> Option<NestStructure> {
        if !self.is_transitive() {
            return None;
        }
        let n = self.n();
        let mut assigned = vec![false; n];
        let mut blocks = Vec::new();
        for a in 0..n {
            if assigned[a] {
                continue;
            }
            let class = Menu::from_members((a..n).filter(|b| self.similar(a, *b)));
            for b in class.members() {
                assigned[b] = true;
            }
            blocks.push(class);
        }
        Some(NestStructure::new(blocks, n).expect("classes of an equivalence relation partition"))
    }

    /// Pointwise union (a ∼ b in either relation). Both must share a universe.
    pub fn union(&self, other: &SimilarityRelation) -> SimilarityRelation {
        assert_eq!(self.n(), other.n(), "relations over different universes");
        SimilarityRelation {
            universe: self.universe.clone(),
            related: self
                .related
                .iter()
                .zip(&other.related)
                .map(|(x, y)| *x || *y)
                .collect(),
        }
    }

    /// Neighbor lists (including self), for serialization.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        (0..n).map(|a| (0..n).filter(|b| self.similar(a, *b)).collect()).collect()
    }
}

/// a ∼ b iff the log odds of a over b on every menu containing both stay
/// within `tol` of their binary-menu value. Requires a complete table.
pub fn revealed_similarity(table: &ChoiceTable, tol: f64) -> Result<SimilarityRelation> {
    table.require_complete()?;
    let rel = SimilarityRelation::from_fn(table.universe().clone(), |a, b| {
        let pair = Menu::singleton(a).with(b);
        let base = table.log_ratio(a, b, pair).unwrap();
        table
            .menus()
            .filter(|m| m.contains(a) && m.contains(b))
            .all(|m| (table.log_ratio(a, b, m).unwrap() - base).abs() <= tol)
    });
    Ok(rel)
}

/// The two-layer similarity structure built on top of `∼`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSimilarity {
    /// a ⋈ b: dissimilar, but odds invariant to adding mutually dissimilar x.
    pub bowtie: SimilarityRelation,
    /// ≃ = ∼ ∪ ⋈.
    pub union: SimilarityRelation,
    /// Pairs whose ⋈ verdict is vacuous (no menu/alternative qualified).
    pub vacuous_pairs: Vec<(usize, usize)>,
}

/// Computes `⋈` and `≃` from a complete table and its `∼` relation.
///
/// a ⋈ b holds when a ≁ b and, for every menu A containing both and every
/// x ∉ A with x ≁ a and x ≁ b, the log odds of a over b move by at most `tol`
/// when x is added. An empty quantifier counts as holding and the pair is
/// flagged as vacuous.
pub fn approx_revealed_similarity(
    table: &ChoiceTable,
    sim: &SimilarityRelation,
    tol: f64,
) -> Result<ApproxSimilarity> {
    table.require_complete()?;
    if sim.n() != table.universe().len() {
        return Err(Error::InvalidModel(
            "similarity relation does not match the table's universe".into(),
        ));
    }
    let n = table.universe().len();
    let mut vacuous_pairs = Vec::new();
    let bowtie = SimilarityRelation::from_fn(table.universe().clone(), |a, b| {
        if sim.similar(a, b) {
            return false;
        }
        let mut quantified = false;
        let mut invariant = true;
        'menus: for m in table.menus() {
            if !m.contains(a) || !m.contains(b) {
                continue;
            }
            let base = table.log_ratio(a, b, m).unwrap();
            for x in 0..n {
                if m.contains(x) || sim.similar(x, a) || sim.similar(x, b) {
                    continue;
                }
                quantified = true;
                if (table.log_ratio(a, b, m.with(x)).unwrap() - base).abs() > tol {
                    invariant = false;
                    break 'menus;
                }
            }
        }
        if invariant && !quantified {
            vacuous_pairs.push((a, b));
        }
        invariant
    });
    let union = sim.union(&bowtie);
    Ok(ApproxSimilarity { bowtie, union, vacuous_pairs })
}

/// Pairwise IIA-violation distances with their tuple counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    universe: Universe,
    d: Vec<f64>,
    counts: Vec<u64>,
}

impl DistanceMatrix {
    fn from_raw(universe: Universe, d: Vec<f64>, counts: Vec<u64>) -> Self {
        DistanceMatrix { universe, d, counts }
    }

    /// Builds a matrix from externally supplied dissimilarities: the upper
    /// triangle in (a, b) order with a < b, row by row. Entries must be
    /// finite and nonnegative; every pair gets count 1.
    pub fn from_pairwise(universe: Universe, upper: &[f64]) -> Result<Self> {
        let n = universe.len();
        if upper.len() != n * (n - 1) / 2 {
            return Err(Error::InvalidModel(format!(
                "{} distances for {} alternatives (need {})",
                upper.len(),
                n,
                n * (n - 1) / 2
            )));
        }
        let mut d = vec![0.0; n * n];
        let mut counts = vec![0u64; n * n];
        let mut it = upper.iter();
        for a in 0..n {
            for b in (a + 1)..n {
                let val = *it.next().unwrap();
                if !(val >= 0.0) || !val.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "distance between {a} and {b} must be finite and nonnegative"
                    )));
                }
                d[a * n + b] = val;
                d[b * n + a] = val;
                counts[a * n + b] = 1;
                counts[b * n + a] = 1;
            }
        }
        Ok(DistanceMatrix { universe, d, counts })
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn n(&self) -> usize {
        self.universe.len()
    }

    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.d[a * self.n() + b]
    }

    /// Number of ordered menu pairs (A, B) with a, b ∈ A ∩ B (the
    /// normalizing denominator of d).
    pub fn count(&self, a: usize, b: usize) -> u64 {
        self.counts[a * self.n() + b]
    }

    /// Largest pairwise distance (0 for a single alternative).
    pub fn max_d(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// Upper-triangle entries (a, b, d, count) with a < b.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64, u64)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |a| {
            ((a + 1)..n).map(move |b| (a, b, self.d(a, b), self.count(a, b)))
        })
    }

    #[cfg(test)]
    fn from_upper(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let universe = Universe::indexed(n).unwrap();
        let mut d = vec![0.0; n * n];
        let mut counts = vec![0u64; n * n];
        for (a, b, val) in entries {
            d[a * n + b] = *val;
            d[b * n + a] = *val;
            counts[a * n + b] = 1;
            counts[b * n + a] = 1;
        }
        DistanceMatrix::from_raw(universe, d, counts)
    }
}

/// d(a, b): the squared deviations of log(p(a,A)/p(b,A)) across all ordered
/// pairs of observed menus containing both a and b (the A = B pairs
/// contribute zero), divided by the number of such pairs. Pairs never
/// observed together get d = 0 with count 0.
pub fn distance_matrix(data: &FrequencyData) -> DistanceMatrix {
    let n = data.universe().len();
    let mut d = vec![0.0; n * n];
    let mut counts = vec![0u64; n * n];
    // Per menu log odds, gathered once per pair. With m menus containing the
    // pair, the double sum over ordered menu pairs collapses to
    // 2·m·Σ(x − x̄)², centered so that rounding-scale spreads survive.
    let mut xs: Vec<f64> = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            xs.clear();
            for (menu, _) in data.rows() {
                if menu.contains(a) && menu.contains(b) {
                    xs.push(data.log_ratio(a, b, menu).unwrap());
                }
            }
            let m = xs.len() as u64;
            let (val, cnt) = if m == 0 {
                (0.0, 0)
            } else {
                let numer = 2.0 * m as f64 * centered_sum_sq(&xs);
                (numer / (m * m) as f64, m * m)
            };
            d[a * n + b] = val;
            d[b * n + a] = val;
            counts[a * n + b] = cnt;
            counts[b * n + a] = cnt;
        }
    }
    DistanceMatrix::from_raw(data.universe().clone(), d, counts)
}

/// Outcome of thresholding the distance matrix at one ε.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonPartition {
    pub epsilon: f64,
    pub outcome: EpsilonOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonOutcome {
    Partition(NestStructure),
    /// a ∼ b and b ∼ c but a ≁ c at this threshold.
    NotTransitive { a: usize, b: usize, c: usize },
}

fn epsilon_relation(d: &DistanceMatrix, epsilon: f64) -> SimilarityRelation {
    SimilarityRelation::from_fn(d.universe().clone(), |a, b| d.d(a, b) < epsilon)
}

/// Quotients the relation a ∼_ε b iff d(a, b) < ε (strict), reporting the
/// violating triple when ∼_ε fails transitivity.
pub fn epsilon_partition(d: &DistanceMatrix, epsilon: f64) -> EpsilonPartition {
    let rel = epsilon_relation(d, epsilon);
    let outcome = match rel.transitivity_violation() {
        Some((a, b, c)) => EpsilonOutcome::NotTransitive { a, b, c },
        None => EpsilonOutcome::Partition(rel.partition().unwrap()),
    };
    EpsilonPartition { epsilon, outcome }
}

/// The candidate partitions worth scoring, with the thresholds that
/// generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePartitionSet {
    pub partitions: Vec<NestStructure>,
    /// Smallest ε producing each partition; ∞ marks the forced one-block
    /// candidate (any ε above the largest distance).
    pub thresholds: Vec<f64>,
}

impl CandidatePartitionSet {
    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NestStructure, f64)> {
        self.partitions.iter().zip(self.thresholds.iter().copied())
    }
}

/// Builds the candidate set: thresholds are the pairwise distances
/// themselves; each transitive ∼_ε contributes its quotient; the
/// all-singletons partition (ε = 0) and the one-block partition (the complete
/// relation, reached above the largest distance) are always included. The
/// thresholded relations are nested, so the transitive quotients form a
/// refinement chain and at most |X| distinct partitions result.
pub fn candidate_partitions(d: &DistanceMatrix) -> CandidatePartitionSet {
    let n = d.n();
    let mut by_partition: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut record = |partition: NestStructure, eps: f64| {
        let key = partition.rgs(n);
        let slot = by_partition.entry(key).or_insert(eps);
        if eps < *slot {
            *slot = eps;
        }
    };
    record(NestStructure::singletons(n), 0.0);
    record(NestStructure::one_block(n), f64::INFINITY);
    for (a, b, _, _) in d.pairs() {
        let eps = d.d(a, b);
        let rel = epsilon_relation(d, eps);
        if let Some(partition) = rel.partition() {
            record(partition, eps);
        }
    }
    let mut entries: Vec<(f64, NestStructure)> =
        by_partition.into_iter().map(|(rgs, eps)| (eps, NestStructure::from_rgs(&rgs))).collect();
    entries.sort_by(|(e1, p1), (e2, p2)| {
        e1.partial_cmp(e2).unwrap().then_with(|| p2.k().cmp(&p1.k()))
    });
    let (thresholds, partitions) = entries.into_iter().map(|(e, p)| (e, p)).unzip();
    CandidatePartitionSet { partitions, thresholds }
}

/// Cap for the separating-menu search.
pub const ASSUMPTION1_CAP: usize = 10;

/// Result of the separating-menu check behind nest identification.
#[derive(Debug, Clone, PartialEq)]
pub struct Assumption1Report {
    pub holds: bool,
    /// True when the model has a single nest (nothing to separate).
    pub vacuous: bool,
    /// (block index, within-block subset) pairs admitting no pair of menus
    /// whose group odds against another block differ.
    pub failures: Vec<(usize, Menu)>,
}

/// Checks that for every proper subset A_i of a nest and every subset A_j of
/// another nest, some two menus agreeing on A_i and on the other nest give
/// different group odds p(A_i, ·)/p(A_j, ·).
///
/// For an NSC the group odds factor as v(A∩X_i)·Σu(A∩A_i)/Σu(A∩X_i) against
/// the fixed j-part, and the shared two-stage normalizer cancels; menus can
/// therefore only differ through their block-i parts C = A∩X_i, D = B∩X_i
/// with C∩A_i = D∩A_i ≠ ∅. The search space collapses to within-block subset
/// pairs, graded by v(C)/Σu(C); a margin of `tol` in logs counts as
/// different.
pub fn check_assumption1(model: &NscModel, tol: f64) -> Result<Assumption1Report> {
    let n = model.universe().len();
    if n > ASSUMPTION1_CAP {
        return Err(Error::UniverseTooLarge { size: n, cap: ASSUMPTION1_CAP });
    }
    if model.structure().k() == 1 {
        return Ok(Assumption1Report { holds: true, vacuous: true, failures: Vec::new() });
    }
    let mut failures = Vec::new();
    for (i, block) in model.structure().blocks().iter().enumerate() {
        if block.len() < 2 {
            continue; // no nonempty proper subsets
        }
        // log(v(C)/Σu(C)) for every nonempty C ⊆ X_i
        let ratios: BTreeMap<Menu, f64> = block
            .subsets()
            .map(|c| {
                let sum: f64 = c.members().map(|x| model.u()[x]).sum();
                (c, model.v(c).unwrap().ln() - sum.ln())
            })
            .collect();
        for a_i in block.subsets().filter(|s| *s != *block) {
            // group C ⊆ X_i by E = C ∩ A_i and look for spread within a group
            let mut spread: BTreeMap<Menu, (f64, f64)> = BTreeMap::new();
            for (c, rho) in &ratios {
                let e = c.intersect(a_i);
                if e.is_empty() {
                    continue;
                }
                let entry = spread.entry(e).or_insert((*rho, *rho));
                entry.0 = entry.0.min(*rho);
                entry.1 = entry.1.max(*rho);
            }
            if !spread.values().any(|(lo, hi)| hi - lo > tol) {
                failures.push((i, a_i));
            }
        }
    }
    Ok(Assumption1Report { holds: failures.is_empty(), vacuous: false, failures })
}
