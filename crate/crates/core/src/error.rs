//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("universe is empty")]
    EmptyUniverse,
    #[error("duplicate alternative id {0:?}")]
    DuplicateAlternative(String),
    #[error("unknown alternative id {0:?}")]
    UnknownAlternative(String),
    #[error("universe has {size} alternatives, operation capped at {cap}")]
    UniverseTooLarge { size: usize, cap: usize },
    #[error("menu is empty")]
    EmptyMenu,
    #[error("alternative {alternative} not in menu {menu:?}")]
    AlternativeNotInMenu { alternative: usize, menu: Vec<usize> },
    #[error("utility of alternative {0} is not strictly positive")]
    NonpositiveUtility(usize),
    #[error("v value for subset {subset:?} is not strictly positive")]
    NonpositiveVValue { subset: Vec<usize> },
    #[error("no v entry for subset {subset:?}")]
    MissingVEntry { subset: Vec<usize> },
    #[error("blocks do not partition the universe")]
    InvalidPartition,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid preset parameter: {0}")]
    InvalidPreset(String),
    #[error("invalid probability row for menu {menu:?}: {detail}")]
    InvalidProbability { menu: Vec<usize>, detail: String },
    #[error("table is not complete over its universe")]
    IncompleteTable,
    #[error("table violates ISA ({} witness(es); first: {})", witnesses.len(), witnesses[0])]
    IsaViolated { witnesses: Vec<crate::axioms::Witness> },
    #[error("table violates GISA ({} witness(es); first: {})", witnesses.len(), witnesses[0])]
    GisaViolated { witnesses: Vec<crate::axioms::Witness> },
    #[error("revealed similarity relations are inconsistent ({} witness(es); first: {})", witnesses.len(), witnesses[0])]
    ConsistencyViolated { witnesses: Vec<crate::axioms::Witness> },
    #[error("degenerate table: blocks {blocks:?} are all utility-proportional, nest structure is not unique")]
    DegenerateTable { blocks: Vec<usize> },
    #[error("revealed similarity is not transitive at ({a}, {b}, {c}); no nest partition exists at this tolerance")]
    NotTransitiveSimilarity { a: usize, b: usize, c: usize },
    #[error("recovery is ambiguous with {nests} nest(s): round-trip verification failed (max abs error {max_err:.3e}); the construction needs three mutually dissimilar alternatives")]
    AmbiguousRecovery { nests: usize, max_err: f64 },
    #[error("zero empirical frequency for alternative {alternative} in menu {menu:?} (enable smoothing or drop the menu)")]
    ZeroFrequency { alternative: usize, menu: Vec<usize> },
    #[error("sigma map produced a nonpositive entry {value:.3e} for alternative {alternative} in menu {menu:?}")]
    NonpositiveSigma { alternative: usize, menu: Vec<usize>, value: f64 },
    #[error("fixed-point iteration did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },
    #[error("table has nonpositive probabilities")]
    TableNotPositive,
    #[error("rejection sampling exhausted its budget ({0} draws)")]
    RejectionBudgetExhausted(usize),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
