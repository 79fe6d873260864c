//! Executable axiom checkers.
//!
//! Each checker scans a complete choice table for violations of one
//! behavioral property and returns an [`AxiomReport`]: pass/fail, the
//! offending instances (menus, alternatives, and the two compared values, in
//! log space), and bookkeeping for skipped or vacuous instances. Together
//! they form the falsification surface separating Luce, NSC, nested logit,
//! 3-step NSC, and random-utility behavior.
//!
//! All comparisons happen on log probabilities with an absolute tolerance.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::models::NscModel;
use crate::similarity::{approx_revealed_similarity, revealed_similarity};
use crate::table::ChoiceTable;
use crate::universe::Menu;

/// One failing instance: the menus and alternatives involved plus the two
/// log-space values whose comparison failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub menus: Vec<Menu>,
    pub alternatives: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "menus [")?;
        for (i, m) in self.menus.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:?}", m.member_vec())?;
        }
        write!(
            f,
            "] alternatives {:?} lhs={:.6} rhs={:.6}",
            self.alternatives, self.lhs, self.rhs
        )
    }
}

/// Outcome of one axiom check. `passed` holds exactly when `witnesses` is
/// empty; at most [`MAX_WITNESSES`] violations are collected.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub axiom: String,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
    pub tol: f64,
    /// Instances skipped because a compared quantity was undefined (zero log
    /// denominators in the log-ratio test).
    pub skipped: u64,
    /// True when no instance qualified at all: the axiom holds vacuously.
    pub vacuous: bool,
    /// (checked, total) tuple counts when the scan sampled the tuple space
    /// instead of enumerating it.
    pub coverage: Option<(u64, u64)>,
}

pub const MAX_WITNESSES: usize = 16;

struct ReportBuilder {
    axiom: &'static str,
    tol: f64,
    witnesses: Vec<Witness>,
    skipped: u64,
    quantified: bool,
    coverage: Option<(u64, u64)>,
}

impl ReportBuilder {
    fn new(axiom: &'static str, tol: f64) -> Self {
        ReportBuilder { axiom, tol, witnesses: Vec::new(), skipped: 0, quantified: false, coverage: None }
    }

    /// True once enough witnesses were collected to stop scanning.
    fn saturated(&self) -> bool {
        self.witnesses.len() >= MAX_WITNESSES
    }

    fn push(&mut self, w: Witness) {
        if !self.saturated() {
            self.witnesses.push(w);
        }
    }

    fn finish(self) -> AxiomReport {
        AxiomReport {
            axiom: self.axiom.to_string(),
            passed: self.witnesses.is_empty(),
            vacuous: !self.quantified && self.witnesses.is_empty(),
            witnesses: self.witnesses,
            tol: self.tol,
            skipped: self.skipped,
            coverage: self.coverage,
        }
    }
}

/// Log probabilities of a complete table, indexed by menu bits.
struct Logs {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl Logs {
    fn new(table: &ChoiceTable) -> Result<Self> {
        table.require_complete()?;
        let n = table.universe().len();
        let mut rows = vec![Vec::new(); 1 << n];
        for (menu, row) in table.rows() {
            rows[menu.bits() as usize] = row.iter().map(|p| p.ln()).collect();
        }
        Ok(Logs { n, rows })
    }

    fn lp(&self, a: usize, menu: Menu) -> f64 {
        self.rows[menu.bits() as usize][menu.position_of(a).unwrap()]
    }

    /// log p(a, menu) − log p(b, menu).
    fn lr(&self, a: usize, b: usize, menu: Menu) -> f64 {
        self.lp(a, menu) - self.lp(b, menu)
    }

    /// log Σ_{x ∈ set∩menu} p(x, menu); the intersection must be nonempty.
    fn group_lp(&self, set: Menu, menu: Menu) -> f64 {
        let row = &self.rows[menu.bits() as usize];
        let sum: f64 = set
            .intersect(menu)
            .members()
            .map(|a| row[menu.position_of(a).unwrap()].exp())
            .sum();
        sum.ln()
    }

    fn menus(&self) -> impl Iterator<Item = Menu> + '_ {
        (1..self.rows.len() as u64).map(Menu::from_bits)
    }
}

/// Scans (A, a, b, x) instances with a, b ∈ A, x ∉ A, applying `applies` to
/// decide whether the ratio-invariance conclusion is demanded.
fn scan_ratio_invariance(
    logs: &Logs,
    builder: &mut ReportBuilder,
    mut applies: impl FnMut(usize, usize, usize) -> bool,
) {
    for menu in logs.menus() {
        if menu.len() < 2 {
            continue;
        }
        let members: Vec<usize> = menu.members().collect();
        for x in 0..logs.n {
            if menu.contains(x) {
                continue;
            }
            let bigger = menu.with(x);
            for (i, &a) in members.iter().enumerate() {
                for &b in members.iter().skip(i + 1) {
                    // (a,b) and (b,a) violate together; scan unordered
                    if !applies(a, b, x) {
                        continue;
                    }
                    builder.quantified = true;
                    let before = logs.lr(a, b, menu);
                    let after = logs.lr(a, b, bigger);
                    if (after - before).abs() > builder.tol {
                        builder.push(Witness {
                            menus: vec![menu, bigger],
                            alternatives: vec![a, b, x],
                            lhs: after,
                            rhs: before,
                        });
                        if builder.saturated() {
                            return;
                        }
                    }
                }
            }
        }
    }
}

/// IIA: the odds of a over b are menu independent, for every pair.
pub fn check_iia(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("iia", tol);
    'outer: for a in 0..logs.n {
        for b in (a + 1)..logs.n {
            let pair = Menu::singleton(a).with(b);
            let base = logs.lr(a, b, pair);
            builder.quantified = true;
            for menu in logs.menus() {
                if !menu.contains(a) || !menu.contains(b) {
                    continue;
                }
                let got = logs.lr(a, b, menu);
                if (got - base).abs() > tol {
                    builder.push(Witness {
                        menus: vec![pair, menu],
                        alternatives: vec![a, b],
                        lhs: got,
                        rhs: base,
                    });
                    if builder.saturated() {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(builder.finish())
}

/// Independence of symmetric alternatives: adding x leaves the odds of a, b
/// unchanged when x is similar to both or dissimilar to both.
pub fn check_isa(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("isa", tol);
    scan_ratio_invariance(&logs, &mut builder, |a, b, x| {
        sim.similar(a, x) == sim.similar(b, x)
    });
    Ok(builder.finish())
}

/// Independence of asymmetric alternatives: adding x leaves the odds
/// unchanged when x is similar to exactly one of a, b. Jointly with the
/// symmetric half this is IIA.
pub fn check_iaa(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("iaa", tol);
    scan_ratio_invariance(&logs, &mut builder, |a, b, x| {
        sim.similar(a, x) != sim.similar(b, x)
    });
    Ok(builder.finish())
}

/// The similarity effect: adding x strictly lowers the odds of the
/// alternative it is similar to against one it is dissimilar to.
pub fn check_similarity_effect(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("similarity_effect", tol);
    'outer: for menu in logs.menus() {
        if menu.len() < 2 {
            continue;
        }
        let members: Vec<usize> = menu.members().collect();
        for x in 0..logs.n {
            if menu.contains(x) {
                continue;
            }
            let bigger = menu.with(x);
            for &a in &members {
                if !sim.similar(a, x) {
                    continue;
                }
                for &b in &members {
                    if b == a || sim.similar(b, x) {
                        continue;
                    }
                    builder.quantified = true;
                    let before = logs.lr(a, b, menu);
                    let after = logs.lr(a, b, bigger);
                    // strict decrease demanded, with margin
                    if before - after <= tol {
                        builder.push(Witness {
                            menus: vec![menu, bigger],
                            alternatives: vec![a, b, x],
                            lhs: after,
                            rhs: before,
                        });
                        if builder.saturated() {
                            break 'outer;
                        }
                    }
                }
            }
        }
    }
    Ok(builder.finish())
}

fn scan_regularity(
    logs: &Logs,
    builder: &mut ReportBuilder,
    mut applies: impl FnMut(usize, usize) -> bool,
) {
    for menu in logs.menus() {
        for y in 0..logs.n {
            if menu.contains(y) {
                continue;
            }
            let bigger = menu.with(y);
            for x in menu.members() {
                if !applies(x, y) {
                    continue;
                }
                builder.quantified = true;
                let before = logs.lp(x, menu);
                let after = logs.lp(x, bigger);
                if after > before + builder.tol {
                    builder.push(Witness {
                        menus: vec![menu, bigger],
                        alternatives: vec![x, y],
                        lhs: after,
                        rhs: before,
                    });
                    if builder.saturated() {
                        return;
                    }
                }
            }
        }
    }
}

/// Regularity: enlarging a menu never raises an alternative's probability.
pub fn check_regularity(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("regularity", tol);
    scan_regularity(&logs, &mut builder, |_, _| true);
    Ok(builder.finish())
}

/// Regularity restricted to additions similar to the tracked alternative.
pub fn check_similar_regularity(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("similar_regularity", tol);
    scan_regularity(&logs, &mut builder, |x, y| sim.similar(x, y));
    Ok(builder.finish())
}

/// Regularity restricted to additions dissimilar to the tracked alternative.
pub fn check_dissimilar_regularity(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("dissimilar_regularity", tol);
    scan_regularity(&logs, &mut builder, |x, y| !sim.similar(x, y));
    Ok(builder.finish())
}

/// Log-ratio invariance: for menus A within one similarity class, the ratio
/// log[(p(A,A∪x)/p(x,A∪x)) / (p(a,{a,x})/p(x,{a,x}))] over
/// log[p(A,A∪a)/p(a,A∪a)] does not depend on A. For nested logit the ratio
/// is the nest exponent (cross-nest x) or 1 (same-nest x). Instances with a
/// near-zero denominator are skipped and counted.
pub fn check_lri(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("lri", tol);
    'outer: for a in 0..logs.n {
        let class = Menu::from_members((0..logs.n).filter(|b| sim.similar(a, *b)));
        for x in 0..logs.n {
            let pair_ratio = if x == a {
                0.0
            } else {
                let pair = Menu::singleton(a).with(x);
                logs.lr(a, x, pair)
            };
            // value of each A ⊆ class, with the A achieving min and max
            let mut lo: Option<(f64, Menu)> = None;
            let mut hi: Option<(f64, Menu)> = None;
            for menu in class.subsets() {
                let with_a = menu.with(a);
                let denom = logs.group_lp(menu, with_a) - logs.lp(a, with_a);
                if denom.abs() <= tol {
                    builder.skipped += 1;
                    continue;
                }
                let with_x = menu.with(x);
                let numer = logs.group_lp(menu, with_x) - logs.lp(x, with_x) - pair_ratio;
                let value = numer / denom;
                if lo.map_or(true, |(v, _)| value < v) {
                    lo = Some((value, menu));
                }
                if hi.map_or(true, |(v, _)| value > v) {
                    hi = Some((value, menu));
                }
            }
            if let (Some((vlo, mlo)), Some((vhi, mhi))) = (lo, hi) {
                if mlo != mhi {
                    builder.quantified = true;
                }
                if vhi - vlo > tol {
                    builder.push(Witness {
                        menus: vec![mhi, mlo],
                        alternatives: vec![a, x],
                        lhs: vhi,
                        rhs: vlo,
                    });
                    if builder.saturated() {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(builder.finish())
}

/// Universe size up to which the relative-likelihood scan enumerates every
/// tuple; larger universes are sampled with a fixed seed.
pub const RLI_EXHAUSTIVE_CAP: usize = 7;
const RLI_SAMPLES: u64 = 200_000;
const RLI_SAMPLE_SEED: u64 = 0x524c_4953;

/// Relative likelihood independence: for menus A, B, A′, B′ within one
/// similarity class and any x, if A beats B (in group odds on A∪B) more than
/// A′ beats B′, then the odds of A against x must beat those of B against x
/// at least as much as the primed pair does. Monotone nest attractiveness in
/// summed utility is exactly what this encodes.
pub fn check_rli(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("rli", tol);
    let n = logs.n;
    let mut classes: Vec<Menu> = Vec::new();
    for a in 0..n {
        let class = Menu::from_members((0..n).filter(|b| sim.similar(a, *b)));
        if !classes.contains(&class) {
            classes.push(class);
        }
    }
    if n <= RLI_EXHAUSTIVE_CAP {
        for class in &classes {
            rli_exhaustive(&logs, *class, &mut builder);
            if builder.saturated() {
                break;
            }
        }
    } else {
        let total: u64 = classes
            .iter()
            .map(|c| {
                let m = (1u64 << c.len()) - 1;
                m * m * m * m * n as u64
            })
            .sum();
        let mut rng = ChaCha8Rng::seed_from_u64(RLI_SAMPLE_SEED);
        let mut checked = 0u64;
        for _ in 0..RLI_SAMPLES {
            let class = classes[rng.gen_range(0..classes.len())];
            let a = random_submenu(&mut rng, class);
            let b = random_submenu(&mut rng, class);
            let a2 = random_submenu(&mut rng, class);
            let b2 = random_submenu(&mut rng, class);
            let x = rng.gen_range(0..n);
            checked += 1;
            builder.quantified = true;
            let l1 = pair_log_odds(&logs, a, b);
            let l2 = pair_log_odds(&logs, a2, b2);
            if l1 > l2 + tol {
                let r1 = against_x(&logs, a, x) - against_x(&logs, b, x);
                let r2 = against_x(&logs, a2, x) - against_x(&logs, b2, x);
                if r1 - r2 < -tol {
                    builder.push(Witness {
                        menus: vec![a, b, a2, b2],
                        alternatives: vec![x],
                        lhs: r1,
                        rhs: r2,
                    });
                    if builder.saturated() {
                        break;
                    }
                }
            }
        }
        builder.coverage = Some((checked, total));
    }
    Ok(builder.finish())
}

fn random_submenu(rng: &mut ChaCha8Rng, class: Menu) -> Menu {
    loop {
        let bits = rng.gen::<u64>() & class.bits();
        if bits != 0 {
            return Menu::from_bits(bits);
        }
    }
}

/// log p(A, A∪B) − log p(B, A∪B).
fn pair_log_odds(logs: &Logs, a: Menu, b: Menu) -> f64 {
    let joint = a.union(b);
    logs.group_lp(a, joint) - logs.group_lp(b, joint)
}

/// log p(A, A∪x) − log p(x, A∪x).
fn against_x(logs: &Logs, a: Menu, x: usize) -> f64 {
    let joint = a.with(x);
    logs.group_lp(a, joint) - logs.lp(x, joint)
}

/// Exhaustive scan of one class: sort pair tuples by their group log odds,
/// then for each x sweep them in order keeping the running max of the
/// response over tuples whose odds trail by more than tol. Any later tuple
/// whose response falls more than tol below that max is a violation. This
/// covers every ordered tuple pair without materializing the 4th power.
fn rli_exhaustive(logs: &Logs, class: Menu, builder: &mut ReportBuilder) {
    let menus: Vec<Menu> = class.subsets().collect();
    let mut pairs: Vec<(Menu, Menu, f64)> = Vec::with_capacity(menus.len() * menus.len());
    for &a in &menus {
        for &b in &menus {
            pairs.push((a, b, pair_log_odds(logs, a, b)));
        }
    }
    if pairs.len() > 1 {
        builder.quantified = true;
    }
    pairs.sort_by(|p, q| p.2.total_cmp(&q.2));
    let mut responses = vec![0.0; pairs.len()];
    for x in 0..logs.n {
        for (slot, (a, b, _)) in responses.iter_mut().zip(&pairs) {
            *slot = against_x(logs, *a, x) - against_x(logs, *b, x);
        }
        let mut trail = 0usize;
        let mut best: Option<usize> = None;
        for i in 0..pairs.len() {
            while pairs[trail].2 + builder.tol < pairs[i].2 {
                if best.map_or(true, |j| responses[trail] > responses[j]) {
                    best = Some(trail);
                }
                trail += 1;
            }
            if let Some(j) = best {
                if responses[j] - responses[i] > builder.tol {
                    // pairs[i] has strictly larger odds yet a smaller response
                    builder.push(Witness {
                        menus: vec![pairs[i].0, pairs[i].1, pairs[j].0, pairs[j].1],
                        alternatives: vec![x],
                        lhs: responses[i],
                        rhs: responses[j],
                    });
                    if builder.saturated() {
                        return;
                    }
                }
            }
        }
    }
}

/// First half of the similarity-free axiom pair: when both premises hold as
/// binary/triple menu equalities, adding x must leave the odds of a, b
/// unchanged.
pub fn check_isa1(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("isa1", tol);
    let n = logs.n;
    // premise(a, x): p(a,{a,x})/p(x,{a,x}) agrees with the triple menu for b
    let premise = |a: usize, b: usize, x: usize| -> bool {
        let pair = Menu::singleton(a).with(x);
        let triple = pair.with(b);
        (logs.lr(a, x, pair) - logs.lr(a, x, triple)).abs() <= tol
    };
    let mut cache = vec![vec![false; n * n]; n];
    for a in 0..n {
        for b in 0..n {
            for x in 0..n {
                if a != b && x != a && x != b {
                    cache[a][b * n + x] = premise(a, b, x);
                }
            }
        }
    }
    scan_ratio_invariance(&logs, &mut builder, |a, b, x| {
        cache[a][b * n + x] && cache[b][a * n + x]
    });
    Ok(builder.finish())
}

/// Second half: when both a and b are witnessed dissimilar to x somewhere
/// (some menu shifts their odds against x by more than tol), adding x must
/// leave the odds of a, b unchanged.
pub fn check_isa2(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("isa2", tol);
    let n = logs.n;
    let mut dissim = vec![false; n * n];
    for a in 0..n {
        for x in (a + 1)..n {
            let pair = Menu::singleton(a).with(x);
            let base = logs.lr(a, x, pair);
            let witnessed = logs
                .menus()
                .any(|m| m.contains(a) && m.contains(x) && (logs.lr(a, x, m) - base).abs() > builder.tol);
            dissim[a * n + x] = witnessed;
            dissim[x * n + a] = witnessed;
        }
    }
    scan_ratio_invariance(&logs, &mut builder, |a, b, x| {
        dissim[a * n + x] && dissim[b * n + x]
    });
    Ok(builder.finish())
}

/// Generalized independence of symmetric alternatives: invariance is
/// demanded when x relates to a and b identically on either similarity layer
/// (both ∼, both ⋈, or both fully unrelated).
pub fn check_gisa(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let approx = approx_revealed_similarity(table, &sim, tol)?;
    let logs = Logs::new(table)?;
    let mut builder = ReportBuilder::new("gisa", tol);
    scan_ratio_invariance(&logs, &mut builder, |a, b, x| {
        (sim.similar(a, x) && sim.similar(b, x))
            || (approx.bowtie.similar(a, x) && approx.bowtie.similar(b, x))
            || (!approx.union.similar(a, x) && !approx.union.similar(b, x))
    });
    Ok(builder.finish())
}

/// Consistency of the two similarity layers: ∼-equivalent alternatives have
/// identical ⋈ neighborhoods.
pub fn check_consistency(table: &ChoiceTable, tol: f64) -> Result<AxiomReport> {
    let sim = revealed_similarity(table, tol)?;
    let approx = approx_revealed_similarity(table, &sim, tol)?;
    let mut builder = ReportBuilder::new("consistency", tol);
    let n = sim.n();
    'outer: for x in 0..n {
        for x2 in (x + 1)..n {
            if !sim.similar(x, x2) {
                continue;
            }
            for y in 0..n {
                if y == x || y == x2 {
                    continue;
                }
                builder.quantified = true;
                let a = approx.bowtie.similar(x, y);
                let b = approx.bowtie.similar(x2, y);
                if a != b {
                    builder.push(Witness {
                        menus: vec![],
                        alternatives: vec![x, x2, y],
                        lhs: a as u8 as f64,
                        rhs: b as u8 as f64,
                    });
                    if builder.saturated() {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(builder.finish())
}

/// Monotone nest value: v(B) ≤ v(A) for nonempty B ⊆ A within a block.
/// Equivalent to dissimilar regularity of the generated table.
pub fn check_increasing(model: &NscModel, tol: f64) -> AxiomReport {
    let mut builder = ReportBuilder::new("increasing", tol);
    'outer: for block in model.structure().blocks() {
        for a in block.subsets() {
            let va = model.v(a).unwrap().ln();
            for b in a.subsets() {
                if b == a {
                    continue;
                }
                builder.quantified = true;
                let vb = model.v(b).unwrap().ln();
                if vb - va > tol {
                    builder.push(Witness {
                        menus: vec![a, b],
                        alternatives: vec![],
                        lhs: va,
                        rhs: vb,
                    });
                    if builder.saturated() {
                        break 'outer;
                    }
                }
            }
        }
    }
    builder.finish()
}
