/*!
Nested stochastic choice models: evaluation, simulation, axiom checking, and
nest-structure identification.

A stochastic choice function assigns every menu (nonempty subset of a finite
universe) a full-support probability distribution over its members. This crate
works with the nested families of such functions:

* **Luce**: probabilities proportional to a utility `u`.
* **NSC** (nested stochastic choice): a two-stage Luce rule — the universe is
  partitioned into nests, a nest is chosen with weight `v(A ∩ X_i)`, then an
  alternative within it with weight `u`. See [`NscModel`].
* **Nested logit**: the NSC special case `v = (Σ u)^η_i`. See
  [`NestedLogitModel`].
* **3-step NSC**: a two-layer nest hierarchy. See [`ThreeStepModel`].
* **Cross-nested / generalized nested logit**: alternatives fractionally
  allocated to overlapping nests. See [`CnlModel`].

The central inverse problems are implemented constructively:

* [`recover_nsc`] rebuilds an NSC (nests, `u`, `v`) from an exact choice
  table, and [`recover_eta`] detects whether a recovered `v` is a power of
  utility sums (nested logit) and extracts the exponents.
* [`identify_full`] / [`identify_reduced`] find the nest partition minimizing
  the squared log-IIA-violation loss `D = D1 + D2` on (possibly noisy)
  frequency data, with [`candidate_partitions`] providing the `≤ |X|`
  threshold-induced search set.
* [`solve_cnl`] realizes the universality theorem: any positive choice table
  is reproduced exactly by an unrestricted cross-nested logit, found by a
  damped fixed-point iteration.
* The [`axioms`] module provides executable checkers (IIA, ISA, IAA,
  similarity effect, regularity variants, LRI, RLI, GISA, …) that separate
  the model classes behaviorally.

All operations are pure and deterministic; randomized operations take an
explicit seed and produce identical results regardless of thread count.
*/

pub mod axioms;
pub mod cnl;
pub mod data;
pub mod error;
pub mod identify;
pub mod io;
pub mod models;
pub mod numeric;
pub mod partition;
pub mod recover;
pub mod sim;
pub mod similarity;
pub mod table;
pub mod universe;

pub use axioms::{AxiomReport, Witness};
pub use cnl::{
    gnl_prob, sigma_map, solve_cnl, CnlModel, MenuUtilities, SolveDiagnostics, SolverConfig,
    CNL_UNIVERSE_CAP,
};
pub use data::{Dataset, FrequencyData};
pub use error::{Error, Result};
pub use identify::{
    enumerate_partitions, identify_full, identify_reduced, loss_d1, loss_d2, LossBreakdown,
};
pub use io::AnyModel;
pub use models::{
    full_choice_table, is_degenerate, luce_prob, make_preset_v, nested_logit_prob, nsc_prob,
    three_step_prob, ChoiceModel, DegeneracyReport, NestedLogitModel, NscModel,
    PresetNestValueSpec, ThreeStepModel,
};
pub use partition::NestStructure;
pub use recover::{recover_eta, recover_nsc, recover_three_step, EtaOutcome, EtaRecovery};
pub use sim::{
    draw_example, perturb_table, random_nsc, replicate_figure, sample_dataset, seeded_rng,
    wilson_interval, RatePoint, SamplingMode, SimConfig,
};
pub use similarity::{
    approx_revealed_similarity, candidate_partitions, check_assumption1, distance_matrix,
    epsilon_partition, revealed_similarity, ApproxSimilarity, Assumption1Report,
    CandidatePartitionSet, DistanceMatrix, EpsilonPartition, SimilarityRelation,
};
pub use table::ChoiceTable;
pub use universe::{Menu, Universe};
