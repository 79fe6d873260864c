//! Cross-nested logit construction: any complete, strictly positive choice
//! table can be written as a generalized nested logit in which the nest
//! collection is the set of all nonempty menus. This module evaluates such
//! models and constructs them from tables by solving a fixed-point system.
//!
//! The construction runs in three stages. First, per-menu utilities `u^A_x`
//! (one positive number for each menu A and member x) are initialized at an
//! interior point of the feasible set S. Second, the map sigma, whose fixed
//! points reproduce the table exactly, is iterated with damping until the
//! sup-norm residual is below tolerance. Third, the fixed point is converted
//! into allocation weights alpha, a utility u, and a common exponent lambda.
//!
//! Because lambda grows like |X| + log(1/p*), where p* is the smallest table
//! probability, every power `(sum u)^lambda` here is computed in log space,
//! and the model stores log(alpha) and log(u) as its primary representation:
//! for small p* the linear-domain weights underflow to zero while the model
//! is still perfectly well defined.

use crate::error::{Error, Result};
use crate::models::ChoiceModel;
use crate::numeric::log_sum_exp;
use crate::table::ChoiceTable;
use crate::universe::{Menu, Universe};

use rayon::prelude::*;

/// Largest universe `solve_cnl` accepts by default. The fixed-point variable
/// has dimension |X|·2^(|X|-1), so this keeps the system comfortably small.
pub const CNL_UNIVERSE_CAP: usize = 6;

/// Hard cap on the universe size for per-menu utility vectors (the storage
/// is indexed by menu bit pattern, so it is exponential in the universe).
const MENU_UTILITIES_CAP: usize = 16;

/// Generalized nested logit: nests may overlap, each alternative splits its
/// weight across the nests containing it, and each nest has its own exponent.
///
/// Stored in log space: `log_alpha[k]` is aligned with `nests[k].members()`
/// and holds log allocation weights, `log_u[x]` holds log utilities. The
/// linear-domain accessors [`CnlModel::alpha`] and [`CnlModel::u`] may
/// underflow or overflow for models built by the solver at large lambda;
/// prefer the log accessors in downstream numeric work.
#[derive(Debug, Clone, PartialEq)]
pub struct CnlModel {
    universe: Universe,
    nests: Vec<Menu>,
    log_alpha: Vec<Vec<f64>>,
    log_u: Vec<f64>,
    lambda: Vec<f64>,
    residual: f64,
}

/// How far each alternative's total allocation may drift from 1 in log space.
const ALLOCATION_TOL: f64 = 1e-9;

impl CnlModel {
    /// Builds a model from linear-domain weights. `alpha[k]` must be aligned
    /// with `nests[k].members()`; weights are strictly positive on members
    /// (non-members implicitly carry weight zero) and sum to 1 over the
    /// nests containing each alternative.
    pub fn new(
        universe: Universe,
        nests: Vec<Menu>,
        alpha: Vec<Vec<f64>>,
        u: Vec<f64>,
        lambda: Vec<f64>,
    ) -> Result<Self> {
        if alpha.len() != nests.len() {
            return Err(Error::InvalidModel(format!(
                "{} allocation rows for {} nests",
                alpha.len(),
                nests.len()
            )));
        }
        let log_alpha = nests
            .iter()
            .zip(&alpha)
            .map(|(nest, row)| {
                if row.len() != nest.len() {
                    return Err(Error::InvalidModel(format!(
                        "allocation row has {} entries for a nest of {} members",
                        row.len(),
                        nest.len()
                    )));
                }
                row.iter()
                    .map(|a| {
                        if *a > 0.0 && a.is_finite() {
                            Ok(a.ln())
                        } else {
                            Err(Error::InvalidModel(format!(
                                "allocation weight {a} is not strictly positive"
                            )))
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let log_u = u
            .iter()
            .enumerate()
            .map(|(x, ux)| {
                if *ux > 0.0 && ux.is_finite() {
                    Ok(ux.ln())
                } else {
                    Err(Error::NonpositiveUtility(x))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Self::from_log_parts(universe, nests, log_alpha, log_u, lambda, 0.0)
    }

    /// Builds a model directly from log-domain parts. Used by the solver,
    /// whose weights are far outside the linear-domain f64 range.
    pub fn from_log_parts(
        universe: Universe,
        nests: Vec<Menu>,
        log_alpha: Vec<Vec<f64>>,
        log_u: Vec<f64>,
        lambda: Vec<f64>,
        residual: f64,
    ) -> Result<Self> {
        let n = universe.len();
        if nests.is_empty() {
            return Err(Error::InvalidModel("no nests".into()));
        }
        if log_alpha.len() != nests.len() || lambda.len() != nests.len() {
            return Err(Error::InvalidModel(format!(
                "{} allocation rows and {} exponents for {} nests",
                log_alpha.len(),
                lambda.len(),
                nests.len()
            )));
        }
        if log_u.len() != n {
            return Err(Error::InvalidModel(format!(
                "{} utilities for a universe of {n}",
                log_u.len()
            )));
        }
        for nest in &nests {
            if nest.is_empty() {
                return Err(Error::EmptyMenu);
            }
            if nest.bits() >> n != 0 {
                return Err(Error::InvalidModel(format!(
                    "nest {:?} is outside the universe",
                    nest.member_vec()
                )));
            }
        }
        for (k, (nest, row)) in nests.iter().zip(&log_alpha).enumerate() {
            if row.len() != nest.len() {
                return Err(Error::InvalidModel(format!(
                    "allocation row {k} has {} entries for a nest of {} members",
                    row.len(),
                    nest.len()
                )));
            }
            if row.iter().any(|a| a.is_nan() || *a == f64::INFINITY) {
                return Err(Error::InvalidModel(format!(
                    "allocation row {k} has a non-finite log weight"
                )));
            }
        }
        if let Some(k) = lambda.iter().position(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "lambda[{k}] must be strictly positive"
            )));
        }
        if log_u.iter().any(|l| l.is_nan()) {
            return Err(Error::InvalidModel("non-finite log utility".into()));
        }
        let model = CnlModel { universe, nests, log_alpha, log_u, lambda, residual };
        for x in 0..n {
            let total = model.allocation_log_sum(x);
            if !(total.abs() <= ALLOCATION_TOL) {
                return Err(Error::InvalidModel(format!(
                    "allocation weights for alternative {x} sum to exp({total:.3e}), not 1"
                )));
            }
        }
        Ok(model)
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn nests(&self) -> &[Menu] {
        &self.nests
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Max absolute reproduction error recorded by the solver; 0 for
    /// hand-built models.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// log alpha^k_x; -inf when `x` is not a member of nest `k`.
    pub fn log_alpha(&self, k: usize, x: usize) -> f64 {
        match self.nests[k].position_of(x) {
            Some(pos) => self.log_alpha[k][pos],
            None => f64::NEG_INFINITY,
        }
    }

    /// Linear-domain allocation weight; may underflow to 0 at large lambda.
    pub fn alpha(&self, k: usize, x: usize) -> f64 {
        self.log_alpha(k, x).exp()
    }

    pub fn log_u(&self, x: usize) -> f64 {
        self.log_u[x]
    }

    /// Linear-domain utility; may overflow at large lambda.
    pub fn u(&self, x: usize) -> f64 {
        self.log_u[x].exp()
    }

    /// log of the total allocation weight of `x` across nests; 0 for a
    /// well-formed model.
    pub fn allocation_log_sum(&self, x: usize) -> f64 {
        let terms: Vec<f64> = (0..self.nests.len())
            .filter(|k| self.nests[*k].contains(x))
            .map(|k| self.log_alpha(k, x))
            .collect();
        log_sum_exp(&terms)
    }

    /// True when every nest shares one exponent (the cross-nested case, as
    /// opposed to the generalized one).
    pub fn is_cross_nested(&self) -> bool {
        self.lambda.windows(2).all(|w| w[0] == w[1])
    }
}

impl ChoiceModel for CnlModel {
    fn universe(&self) -> &Universe {
        &self.universe
    }

    fn prob(&self, a: usize, menu: Menu) -> Result<f64> {
        gnl_prob(self, a, menu)
    }
}

/// Choice probability of `x` from `menu` under a generalized nested logit.
///
/// Each nest k meeting the menu contributes its share
/// `(sum_{y in A∩X_k} U^k_y)^{lambda_k}` of the normalizer, where
/// `U^k_y = (alpha^k_y u(y))^{1/lambda_k}`, times the within-nest share of
/// `x`. Evaluated fully in log space.
pub fn gnl_prob(model: &CnlModel, x: usize, menu: Menu) -> Result<f64> {
    let n = model.universe.len();
    if menu.is_empty() {
        return Err(Error::EmptyMenu);
    }
    if menu.bits() >> n != 0 {
        return Err(Error::InvalidModel(format!(
            "menu {:?} is outside the universe",
            menu.member_vec()
        )));
    }
    let pos = menu.position_of(x);
    if pos.is_none() {
        return Err(Error::AlternativeNotInMenu { alternative: x, menu: menu.member_vec() });
    }

    // s[k] = log sum over y in A∩X_k of U^k_y; NEG_INFINITY off-menu.
    let mut s = vec![f64::NEG_INFINITY; model.nests.len()];
    let mut den_terms = Vec::with_capacity(model.nests.len());
    for (k, nest) in model.nests.iter().enumerate() {
        let inter = nest.intersect(menu);
        if inter.is_empty() {
            continue;
        }
        let terms: Vec<f64> = inter
            .members()
            .map(|y| (model.log_alpha(k, y) + model.log_u[y]) / model.lambda[k])
            .collect();
        s[k] = log_sum_exp(&terms);
        den_terms.push(model.lambda[k] * s[k]);
    }
    let log_den = log_sum_exp(&den_terms);
    if !log_den.is_finite() {
        return Err(Error::InvalidModel(format!(
            "no nest covers menu {:?}",
            menu.member_vec()
        )));
    }

    let mut p = 0.0;
    for (k, nest) in model.nests.iter().enumerate() {
        if !nest.contains(x) || s[k] == f64::NEG_INFINITY {
            continue;
        }
        let log_ux = (model.log_alpha(k, x) + model.log_u[x]) / model.lambda[k];
        p += (log_ux - s[k] + model.lambda[k] * s[k] - log_den).exp();
    }
    Ok(p)
}

/// The fixed-point variable: one positive utility per (menu, member) pair,
/// indexed by menu bit pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct MenuUtilities {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl MenuUtilities {
    /// The interior point `u^A_x = 1/|A| + p*/|X|^2`, which lies in S.
    pub fn interior(n: usize, p_star: f64) -> Result<Self> {
        Self::build(n, |menu, _| 1.0 / menu.len() as f64 + p_star / (n * n) as f64)
    }

    /// Builds utilities from a function of (menu, member).
    pub fn build(n: usize, f: impl Fn(Menu, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyUniverse);
        }
        if n > MENU_UTILITIES_CAP {
            return Err(Error::UniverseTooLarge { size: n, cap: MENU_UTILITIES_CAP });
        }
        let rows = (0..(1u64 << n))
            .map(|bits| {
                let menu = Menu::from_bits(bits);
                menu.members().map(|x| f(menu, x)).collect()
            })
            .collect();
        Ok(MenuUtilities { n, rows })
    }

    pub fn universe_len(&self) -> usize {
        self.n
    }

    /// Total number of (menu, member) entries: |X|·2^(|X|-1).
    pub fn dimension(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// u^A_x. `x` must be a member of `menu`.
    pub fn get(&self, menu: Menu, x: usize) -> f64 {
        self.rows[menu.bits() as usize][menu.position_of(x).unwrap()]
    }

    /// The row for `menu`, aligned with `menu.members()`.
    pub fn values(&self, menu: Menu) -> &[f64] {
        &self.rows[menu.bits() as usize]
    }

    pub fn row_sum(&self, menu: Menu) -> f64 {
        self.rows[menu.bits() as usize].iter().sum()
    }

    /// Membership in the feasible set S: every row sums to
    /// `1 + |A|p*/|X|^2` and every proper sub-sum stays at or below
    /// `1 - (p*)^2/4`. Since entries are positive, the worst proper subset
    /// drops only the smallest entry.
    pub fn is_in_s(&self, p_star: f64, tol: f64) -> bool {
        let n2 = (self.n * self.n) as f64;
        let bound = 1.0 - p_star * p_star / 4.0;
        for bits in 1..self.rows.len() {
            let row = &self.rows[bits];
            let target = 1.0 + row.len() as f64 * p_star / n2;
            let sum: f64 = row.iter().sum();
            if (sum - target).abs() > tol {
                return false;
            }
            if row.len() > 1 {
                let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                if !(min > 0.0) || sum - min > bound + tol {
                    return false;
                }
            }
        }
        true
    }

    /// Sup-norm distance to another utility vector of the same shape.
    pub fn sup_distance(&self, other: &MenuUtilities) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    fn blend_from(&mut self, target: &MenuUtilities, gamma: f64) {
        for (row, trow) in self.rows.iter_mut().zip(&target.rows) {
            for (u, t) in row.iter_mut().zip(trow) {
                *u = (1.0 - gamma) * *u + gamma * *t;
            }
        }
    }
}

/// Solver parameters derived from the table plus iteration controls.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// min{smallest table probability, 1/|X|}.
    pub p_star: f64,
    /// The threshold exponent; any lambda strictly above it is valid.
    pub lambda_star: f64,
    /// The exponent actually used (default 1.01·lambda_star).
    pub lambda: f64,
    /// Row-sum targets by menu size: m[a] = 1 + a·p*/|X|^2.
    pub m: Vec<f64>,
    pub max_iters: usize,
    pub residual_tol: f64,
    /// Damping factor in (0, 1] for the fixed-point iteration.
    pub damping: f64,
    /// Largest universe `solve_cnl` will accept with this config.
    pub universe_cap: usize,
}

impl SolverConfig {
    /// Computes p*, the row-sum targets, and lambda = 1.01·lambda* for a
    /// complete, strictly positive table, with default iteration controls.
    pub fn for_table(table: &ChoiceTable) -> Result<Self> {
        table.require_complete()?;
        let n = table.universe().len();
        let mut p_star = 1.0 / n as f64;
        for (_, row) in table.rows() {
            for p in row {
                p_star = p_star.min(*p);
            }
        }
        if !(p_star > 0.0) {
            return Err(Error::TableNotPositive);
        }
        let n2 = (n * n) as f64;
        let m: Vec<f64> = (0..=n).map(|a| 1.0 + a as f64 * p_star / n2).collect();
        // lambda* = max over menu sizes of log(2^{|X|+2}/p*) / log(m_a/m_{a-1});
        // the ratio shrinks with a, so the full menu attains the max.
        let num = (n as f64 + 2.0) * std::f64::consts::LN_2 - p_star.ln();
        let mut lambda_star = 0.0f64;
        for a in 1..=n {
            lambda_star = lambda_star.max(num / (m[a] / m[a - 1]).ln());
        }
        Ok(SolverConfig {
            p_star,
            lambda_star,
            lambda: 1.01 * lambda_star,
            m,
            max_iters: 20_000,
            residual_tol: 1e-11,
            damping: 0.5,
            universe_cap: CNL_UNIVERSE_CAP,
        })
    }

    /// Row-sum target m^A for a menu.
    pub fn m_of(&self, menu: Menu) -> f64 {
        self.m[menu.len()]
    }
}

/// Bounds observed during one sigma evaluation; the solver asserts the
/// proof's brackets on them each iteration.
#[derive(Debug, Clone, Copy)]
struct SigmaStats {
    min_f: f64,
    max_f: f64,
    /// min over entries of sigma^A_x / m^A.
    min_share: f64,
}

/// One application of the sigma map at exponent `lambda`.
///
/// For each menu A: f^A is nest A's own share of the power-lambda
/// normalizer, g^A_x collects the contributions of every other nest
/// containing x, and sigma^A_x = m^A (p(x,A) - g^A_x)/f^A. All powers are
/// taken in log space.
fn sigma_core(
    utilities: &MenuUtilities,
    table: &ChoiceTable,
    cfg: &SolverConfig,
    lambda: f64,
) -> Result<(MenuUtilities, SigmaStats)> {
    let n = utilities.n;
    if table.universe().len() != n {
        return Err(Error::InvalidModel(format!(
            "menu utilities over {n} alternatives against a table over {}",
            table.universe().len()
        )));
    }
    table.require_complete()?;
    let full = (1u64 << n) - 1;

    let per_menu: Vec<(Vec<f64>, f64, f64)> = (1..=full)
        .into_par_iter()
        .map(|bits| {
            let menu = Menu::from_bits(bits);
            // log of sum over z in C∩A of u^C_z, for every nest C.
            let mut slog = vec![f64::NEG_INFINITY; (full + 1) as usize];
            let mut den_terms = Vec::with_capacity(full as usize);
            for c in 1..=full {
                let inter = Menu::from_bits(c & bits);
                if inter.is_empty() {
                    continue;
                }
                let nest = Menu::from_bits(c);
                let sum: f64 = inter.members().map(|z| utilities.get(nest, z)).sum();
                slog[c as usize] = sum.ln();
                den_terms.push(lambda * slog[c as usize]);
            }
            let log_den = log_sum_exp(&den_terms);
            let f = (lambda * slog[bits as usize] - log_den).exp();
            let m = cfg.m_of(menu);

            let mut row = Vec::with_capacity(menu.len());
            let mut min_share = f64::INFINITY;
            for x in menu.members() {
                let mut g = 0.0;
                for b in 1..=full {
                    if b == bits || b & (1 << x) == 0 {
                        continue;
                    }
                    let nest = Menu::from_bits(b);
                    let sb = slog[b as usize];
                    g += (utilities.get(nest, x).ln() - sb + lambda * sb - log_den).exp();
                }
                let p = table.prob(x, menu)?;
                let sigma = m * (p - g) / f;
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::NonpositiveSigma {
                        alternative: x,
                        menu: menu.member_vec(),
                        value: sigma,
                    });
                }
                min_share = min_share.min(sigma / m);
                row.push(sigma);
            }
            Ok((row, f, min_share))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats =
        SigmaStats { min_f: f64::INFINITY, max_f: f64::NEG_INFINITY, min_share: f64::INFINITY };
    let mut rows = vec![Vec::new(); (full + 1) as usize];
    for (bits, (row, f, min_share)) in (1..=full).zip(per_menu) {
        stats.min_f = stats.min_f.min(f);
        stats.max_f = stats.max_f.max(f);
        stats.min_share = stats.min_share.min(min_share);
        rows[bits as usize] = row;
    }
    Ok((MenuUtilities { n, rows }, stats))
}

/// Applies the sigma map once. Errors with `NonpositiveSigma` when the input
/// utilities are outside the basin where the map stays positive.
pub fn sigma_map(
    utilities: &MenuUtilities,
    table: &ChoiceTable,
    cfg: &SolverConfig,
) -> Result<MenuUtilities> {
    sigma_core(utilities, table, cfg, cfg.lambda).map(|(u, _)| u)
}

/// Convergence diagnostics for [`solve_cnl`].
#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    /// Iterations of the successful attempt.
    pub iterations: usize,
    /// Damped-iteration attempts made, over all damping factors and
    /// exponent escalations.
    pub attempts: usize,
    /// Exponent doublings applied before convergence.
    pub escalations: usize,
    /// The exponent of the returned model.
    pub lambda: f64,
    /// The damping factor of the successful attempt.
    pub damping: f64,
    /// Final sup-norm residual ||sigma(U) - U||.
    pub residual: f64,
    /// Max |model probability - table probability| over all menu rows.
    pub max_reproduction_error: f64,
    /// Per-iteration residuals of the successful attempt (of the last
    /// attempt when solving fails).
    pub residual_trace: Vec<f64>,
}

enum Attempt {
    Converged { fixed: MenuUtilities, iterations: usize, trace: Vec<f64> },
    Stalled { residual: f64, iterations: usize },
}

/// Slack for the in-iteration bracket assertions; they guard against drift,
/// not against honest floating-point noise.
const BRACKET_SLACK: f64 = 1e-9;

fn iterate(
    table: &ChoiceTable,
    cfg: &SolverConfig,
    lambda: f64,
    gamma: f64,
) -> Result<Attempt> {
    let n = table.universe().len();
    let mut current = MenuUtilities::interior(n, cfg.p_star)?;
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        let (next, stats) = sigma_core(&current, table, cfg, lambda)?;
        debug_assert!(
            stats.min_f > 1.0 - cfg.p_star / 2.0 - BRACKET_SLACK
                && stats.max_f < 1.0 + BRACKET_SLACK,
            "f-bracket violated: [{}, {}]",
            stats.min_f,
            stats.max_f
        );
        debug_assert!(
            stats.min_share > cfg.p_star / 2.0 - BRACKET_SLACK,
            "sigma lower bound violated: min share {}",
            stats.min_share
        );
        debug_assert!(
            next.is_in_s(cfg.p_star, BRACKET_SLACK),
            "sigma output left the feasible set"
        );
        residual = next.sup_distance(&current);
        trace.push(residual);
        if residual < cfg.residual_tol {
            return Ok(Attempt::Converged { fixed: next, iterations: it, trace });
        }
        current.blend_from(&next, gamma);
    }
    Ok(Attempt::Stalled { residual, iterations: cfg.max_iters })
}

/// Converts a fixed point into the log-domain model: the Lemma-1 algebra
/// u(x) = sum_k (u^k_x)^lambda and alpha^k_x = (u^k_x)^lambda / u(x),
/// entirely in logs.
fn convert(
    utilities: &MenuUtilities,
    lambda: f64,
    universe: &Universe,
    residual: f64,
) -> Result<CnlModel> {
    let n = utilities.n;
    let nests: Vec<Menu> = universe.menus().collect();
    let log_u: Vec<f64> = (0..n)
        .map(|x| {
            let terms: Vec<f64> = nests
                .iter()
                .filter(|nest| nest.contains(x))
                .map(|nest| lambda * utilities.get(*nest, x).ln())
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    let log_alpha: Vec<Vec<f64>> = nests
        .iter()
        .map(|nest| {
            nest.members()
                .map(|x| lambda * utilities.get(*nest, x).ln() - log_u[x])
                .collect()
        })
        .collect();
    CnlModel::from_log_parts(
        universe.clone(),
        nests.clone(),
        log_alpha,
        log_u,
        vec![lambda; nests.len()],
        residual,
    )
}

fn reproduction_error(model: &CnlModel, table: &ChoiceTable) -> Result<f64> {
    let mut worst = 0.0f64;
    for (menu, row) in table.rows() {
        for (pos, x) in menu.members().enumerate() {
            worst = worst.max((gnl_prob(model, x, menu)? - row[pos]).abs());
        }
    }
    Ok(worst)
}

/// Constructs a cross-nested logit representation of a complete, strictly
/// positive table.
///
/// Starts at the interior point and iterates `U <- (1-gamma)U + gamma
/// sigma(U)`. If the default damping stalls, successively smaller damping
/// factors are tried, and then the exponent is doubled (up to 8x the
/// starting value); larger exponents make the map more strongly
/// contractive. The returned model is verified to reproduce the table
/// within `10 * residual_tol`.
pub fn solve_cnl(
    table: &ChoiceTable,
    config: Option<SolverConfig>,
) -> Result<(CnlModel, SolveDiagnostics)> {
    let cfg = match config {
        Some(c) => c,
        None => SolverConfig::for_table(table)?,
    };
    let n = table.universe().len();
    if n > cfg.universe_cap {
        return Err(Error::UniverseTooLarge { size: n, cap: cfg.universe_cap });
    }
    table.require_complete()?;
    if !(cfg.p_star > 0.0) {
        return Err(Error::TableNotPositive);
    }

    let gammas = [cfg.damping, cfg.damping / 2.0, cfg.damping / 5.0];
    let mut attempts = 0;
    let mut total_iters = 0;
    let mut best_residual = f64::INFINITY;

    for escalation in 0..4 {
        let lambda = cfg.lambda * f64::from(1u32 << escalation);
        for gamma in gammas {
            attempts += 1;
            match iterate(table, &cfg, lambda, gamma)? {
                Attempt::Converged { fixed, iterations, trace } => {
                    total_iters += iterations;
                    let model = convert(&fixed, lambda, table.universe(), 0.0)?;
                    let max_err = reproduction_error(&model, table)?;
                    if max_err <= 10.0 * cfg.residual_tol {
                        let model = CnlModel { residual: max_err, ..model };
                        let diagnostics = SolveDiagnostics {
                            iterations,
                            attempts,
                            escalations: escalation,
                            lambda,
                            damping: gamma,
                            residual: *trace.last().unwrap(),
                            max_reproduction_error: max_err,
                            residual_trace: trace,
                        };
                        return Ok((model, diagnostics));
                    }
                    // Converged but failed verification: numerically suspect,
                    // treat like a stall and move on.
                    best_residual = best_residual.min(max_err);
                }
                Attempt::Stalled { residual, iterations } => {
                    total_iters += iterations;
                    best_residual = best_residual.min(residual);
                }
            }
        }
    }
    Err(Error::NoConvergence { residual: best_residual, iters: total_iters })
}
