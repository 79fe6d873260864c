//! Random model generation, uniform table perturbation, finite-sample
//! multinomial datasets, and the identification-rate experiment.
//!
//! The experiment protocol: draw a random nested model, materialize its
//! complete choice table, contaminate it (additive uniform noise on each
//! probability, renormalized per menu, or multinomial sampling), run nest
//! identification on the result, and count how often the true structure is
//! recovered. Rates come with Wilson 95% intervals.
//!
//! Determinism contract: every trial derives its own rng stream from the
//! master seed and the trial index, so results are bit-identical across
//! runs and thread counts.

use crate::data::{Dataset, FrequencyData};
use crate::error::{Error, Result};
use crate::identify::{identify_full, identify_reduced};
use crate::models::{full_choice_table, is_degenerate, NscModel};
use crate::partition::NestStructure;
use crate::similarity::check_assumption1;
use crate::table::ChoiceTable;
use crate::universe::{Menu, Universe};

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;

/// Draws allowed before random model generation gives up.
pub const REJECTION_BUDGET: usize = 1000;

/// 97.5% standard-normal quantile, for 95% Wilson intervals.
pub const WILSON_Z: f64 = 1.959963984540054;

/// Coincidence tolerance used when screening generated models for
/// degeneracy and separability. Uniform draws sit on a knife edge with
/// probability zero; this only catches exact collisions.
const SCREEN_TOL: f64 = 1e-9;

/// How a trial turns the exact table into noisy data.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingMode {
    /// p'(a, A) = (p(a, A) + zeta_a) / sum_b (p(b, A) + zeta_b) with
    /// zeta i.i.d. uniform on [0, delta].
    FrequencyPerturbation,
    /// Fixed-size multinomial draws per menu; identification runs on the
    /// smoothed empirical frequencies and the noise bound is ignored.
    Multinomial { draws_per_menu: u64 },
}

/// Experiment configuration: the true structure, draw ranges, noise level,
/// trial count, master seed, and sampling mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub structure: NestStructure,
    /// Uniform range for alternative utilities (positive).
    pub u_range: (f64, f64),
    /// Uniform range for nest values on block subsets (positive).
    pub v_range: (f64, f64),
    /// Noise bound delta >= 0 for frequency perturbation.
    pub delta: f64,
    /// Trials per grid point.
    pub trials: u32,
    pub seed: u64,
    pub sampling: SamplingMode,
}

impl SimConfig {
    /// Six alternatives in two blocks of three, both ranges [0.5, 2],
    /// delta = 0.05, 400 trials, frequency perturbation.
    pub fn two_blocks_of_three(seed: u64) -> SimConfig {
        let structure = NestStructure::new(
            vec![Menu::from_members([0, 1, 2]), Menu::from_members([3, 4, 5])],
            6,
        )
        .unwrap();
        SimConfig {
            structure,
            u_range: (0.5, 2.0),
            v_range: (0.5, 2.0),
            delta: 0.05,
            trials: 400,
            seed,
            sampling: SamplingMode::FrequencyPerturbation,
        }
    }

    pub fn universe_len(&self) -> usize {
        self.structure.universe_len()
    }

    pub fn validate(&self) -> Result<()> {
        let ok_range = |r: (f64, f64)| r.0 > 0.0 && r.1 >= r.0 && r.1.is_finite();
        if !ok_range(self.u_range) || !ok_range(self.v_range) {
            return Err(Error::InvalidModel(
                "draw ranges must be positive with low <= high".into(),
            ));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidModel("noise bound must be nonnegative".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidModel("at least one trial".into()));
        }
        if let SamplingMode::Multinomial { draws_per_menu } = self.sampling {
            if draws_per_menu == 0 {
                return Err(Error::InvalidModel("at least one draw per menu".into()));
            }
        }
        Ok(())
    }
}

/// Draws a random nested model: utilities i.i.d. uniform on the u-range and
/// a nest value for every nonempty block subset i.i.d. uniform on the
/// v-range, rejection-resampled until the model is nondegenerate and
/// separable (so identification has a well-defined target). Returns the
/// model and the number of rejected draws.
pub fn random_nsc(cfg: &SimConfig, rng: &mut impl Rng) -> Result<(NscModel, u32)> {
    cfg.validate()?;
    let n = cfg.universe_len();
    let universe = Universe::indexed(n)?;
    let u_dist = Uniform::new_inclusive(cfg.u_range.0, cfg.u_range.1);
    let v_dist = Uniform::new_inclusive(cfg.v_range.0, cfg.v_range.1);

    let mut rejections = 0u32;
    while (rejections as usize) < REJECTION_BUDGET {
        let u: Vec<f64> = (0..n).map(|_| u_dist.sample(rng)).collect();
        let mut v = std::collections::BTreeMap::new();
        for block in cfg.structure.blocks() {
            for subset in block.subsets() {
                v.insert(subset, v_dist.sample(rng));
            }
        }
        let model = NscModel::new(universe.clone(), cfg.structure.clone(), u, v)?;
        if !is_degenerate(&model, SCREEN_TOL).degenerate
            && check_assumption1(&model, SCREEN_TOL)?.holds
        {
            return Ok((model, rejections));
        }
        rejections += 1;
    }
    Err(Error::RejectionBudgetExhausted(REJECTION_BUDGET))
}

/// Adds i.i.d. uniform [0, delta] noise to every probability of every row
/// and renormalizes: p'(a, A) = (p(a, A) + zeta_a) / sum_b (p(b, A) + zeta_b).
/// delta = 0 returns the table unchanged.
pub fn perturb_table(
    table: &ChoiceTable,
    delta: f64,
    rng: &mut impl Rng,
) -> Result<ChoiceTable> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidModel("noise bound must be nonnegative".into()));
    }
    if delta == 0.0 {
        return Ok(table.clone());
    }
    let dist = Uniform::new(0.0, delta);
    let rows: Vec<(Menu, Vec<f64>)> = table
        .rows()
        .map(|(menu, row)| {
            let noisy: Vec<f64> = row.iter().map(|p| p + dist.sample(rng)).collect();
            let total: f64 = noisy.iter().sum();
            (menu, noisy.into_iter().map(|p| p / total).collect())
        })
        .collect();
    ChoiceTable::new(table.universe().clone(), rows)
}

/// Multinomial sample: for each table menu, `draws(menu)` independent
/// choices according to the table row, realized as a chain of conditional
/// binomials.
pub fn sample_dataset_with(
    table: &ChoiceTable,
    draws: impl Fn(Menu) -> u64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    let mut dataset = Dataset::empty(table.universe().clone());
    for (menu, row) in table.rows() {
        let mut remaining = draws(menu);
        let mut rest = 1.0f64;
        let mut counts = Vec::with_capacity(row.len());
        for (i, p) in row.iter().enumerate() {
            if i + 1 == row.len() {
                counts.push(remaining);
            } else {
                let ratio = (p / rest).clamp(0.0, 1.0);
                let c = Binomial::new(remaining, ratio)
                    .map_err(|e| Error::InvalidModel(e.to_string()))?
                    .sample(rng);
                counts.push(c);
                remaining -= c;
                rest -= p;
            }
        }
        dataset.add_counts(menu, &counts)?;
    }
    Ok(dataset)
}

/// [`sample_dataset_with`] with the same number of draws for every menu.
pub fn sample_dataset(
    table: &ChoiceTable,
    draws_per_menu: u64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    sample_dataset_with(table, |_| draws_per_menu, rng)
}

/// Seeded rng on stream 0 of the master seed, for one-off draws outside
/// the experiment grid.
pub fn seeded_rng(seed: u64) -> impl Rng {
    trial_rng(seed, 0, 0)
}

/// Draws one model with its exact and `cfg.delta`-perturbed tables, exactly
/// as the first trial of an experiment would see them.
pub fn draw_example(cfg: &SimConfig) -> Result<(NscModel, ChoiceTable, ChoiceTable)> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, 0, 0);
    let (model, _) = random_nsc(cfg, &mut rng)?;
    let table = full_choice_table(&model)?;
    let noisy = perturb_table(&table, cfg.delta, &mut rng)?;
    Ok((model, table, noisy))
}

/// 95% Wilson score interval for `correct` successes in `trials`.
pub fn wilson_interval(correct: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let phat = correct as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At the boundary the endpoint is exactly phat; don't let rounding in
    // center +/- half pull it inside.
    let low = if correct == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if correct == trials { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// One grid point of the identification-rate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub delta: f64,
    pub trials: u32,
    pub correct: u32,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Per-trial rng stream: one master seed, a distinct stream per
/// (grid point, trial), so parallel scheduling cannot change results.
fn trial_rng(seed: u64, grid_index: usize, trial: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((grid_index as u64) << 32) | u64::from(trial));
    rng
}

fn run_trial(cfg: &SimConfig, delta: f64, reduced: bool, rng: &mut ChaCha8Rng) -> Result<bool> {
    let (model, _) = random_nsc(cfg, rng)?;
    let table = full_choice_table(&model)?;
    let data = match cfg.sampling {
        SamplingMode::FrequencyPerturbation => {
            FrequencyData::from_table(&perturb_table(&table, delta, rng)?)
        }
        SamplingMode::Multinomial { draws_per_menu } => {
            FrequencyData::from_dataset_smoothed(&sample_dataset(&table, draws_per_menu, rng)?)
        }
    };
    let found = if reduced {
        identify_reduced(&data).0
    } else {
        identify_full(&data)?.0
    };
    Ok(found == cfg.structure)
}

/// Runs the identification-rate experiment over a noise grid: for each
/// delta, `trials` independent trials of draw-perturb-identify, reported as
/// a rate with a Wilson 95% interval. The grid and `trials` override the
/// `delta` and `trials` fields of `cfg`; `reduced` selects the screened
/// candidate search instead of exhaustive partition enumeration.
pub fn replicate_figure(
    deltas: &[f64],
    trials: u32,
    cfg: &SimConfig,
    reduced: bool,
) -> Result<Vec<RatePoint>> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::InvalidModel("at least one trial".into()));
    }
    let mut points = Vec::with_capacity(deltas.len());
    for (gi, delta) in deltas.iter().enumerate() {
        if !(*delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidModel("noise bound must be nonnegative".into()));
        }
        let outcomes: Vec<bool> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(cfg.seed, gi, t);
                run_trial(cfg, *delta, reduced, &mut rng)
            })
            .collect::<Result<Vec<bool>>>()?;
        let correct = outcomes.iter().filter(|ok| **ok).count() as u32;
        let (ci_low, ci_high) = wilson_interval(u64::from(correct), u64::from(trials));
        points.push(RatePoint {
            delta: *delta,
            trials,
            correct,
            rate: f64::from(correct) / f64::from(trials),
            ci_low,
            ci_high,
        });
    }
    Ok(points)
}
