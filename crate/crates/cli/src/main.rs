//! Command-line surface for the nested stochastic choice toolkit.
//!
//! Every subcommand is a thin adapter over the library: inputs and outputs
//! use the JSON/CSV formats of `nestchoice::io`, all randomness flows through
//! an explicit `--seed`, and results do not depend on `--threads`. No
//! environment variables are consulted.
//!
//! Exit codes: 0 success; 1 domain error, reported as a JSON object
//! `{"error": kind, "message": text}` on stderr; 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nestchoice::axioms;
use nestchoice::cnl::{solve_cnl, SolverConfig};
use nestchoice::data::FrequencyData;
use nestchoice::identify::{identify_full, identify_reduced};
use nestchoice::io;
use nestchoice::models::full_choice_table;
use nestchoice::partition::NestStructure;
use nestchoice::recover::{recover_eta, recover_nsc, recover_three_step};
use nestchoice::sim::{
    draw_example, replicate_figure, sample_dataset, seeded_rng, SamplingMode, SimConfig,
};
use nestchoice::similarity::distance_matrix;
use nestchoice::table::ChoiceTable;
use nestchoice::universe::Menu;
use nestchoice::{AxiomReport, Error as NcError};

#[derive(Parser)]
#[command(name = "nestchoice", version, about = "Nested stochastic choice models: simulate, sample, identify, check, recover, fit", propagate_version = true)]
struct Cli {
    /// Cap worker threads (default: all cores). Results are identical for any value.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random nested model and tabulate its choice probabilities
    Simulate(SimulateArgs),
    /// Sample a count dataset from a table by seeded multinomial draws
    Sample(SampleArgs),
    /// Rank nest partitions of frequency data by the identification loss
    Identify(IdentifyArgs),
    /// Check behavioral axioms on a choice table
    Check(CheckArgs),
    /// Recover a nested model from an exact choice table
    Recover(RecoverArgs),
    /// Fit per-nest exponents: is the table a nested logit?
    FitEta(FitEtaArgs),
    /// Fit a cross-nested logit reproducing a positive table exactly
    FitCnl(FitCnlArgs),
    /// Run the identification-rate experiment over a noise grid
    ReplicateFigure(ReplicateArgs),
    /// Tabulate pairwise IIA-violation distances from frequency data
    Distance(DistanceArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Master seed for the model draw and the noise
    #[arg(long)]
    seed: u64,
    /// Nest blocks as 1-based alternative indices, e.g. "1,2,3|4,5,6"
    #[arg(long, default_value = "1,2,3|4,5,6", value_name = "SPEC")]
    blocks: String,
    /// Uniform range "lo,hi" for alternative utilities
    #[arg(long, default_value = "0.5,2", value_name = "LO,HI")]
    u_range: String,
    /// Uniform range "lo,hi" for nest values
    #[arg(long, default_value = "0.5,2", value_name = "LO,HI")]
    v_range: String,
    /// Noise bound for the perturbed table
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Write the drawn model (JSON)
    #[arg(long, value_name = "FILE")]
    out_model: Option<PathBuf>,
    /// Write the exact choice table (JSON)
    #[arg(long, value_name = "FILE")]
    out_table: Option<PathBuf>,
    /// Write the delta-perturbed table (JSON)
    #[arg(long, value_name = "FILE")]
    out_perturbed: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(group = clap::ArgGroup::new("input").required(true).multiple(false).args(["table", "model"]))]
struct SampleArgs {
    /// Choice table to sample from (JSON)
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    /// Model whose full table is sampled (JSON)
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Number of draws per menu
    #[arg(long)]
    draws: u64,
    /// Seed for the multinomial draws
    #[arg(long)]
    seed: u64,
    /// Output dataset CSV (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(group = clap::ArgGroup::new("input").required(true).multiple(false).args(["data", "table"]))]
struct IdentifyArgs {
    /// Count dataset (CSV: menu_id,alternative,count)
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Exact choice table (JSON), used as frequencies directly
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    /// Add half a count to every cell (avoids zero frequencies)
    #[arg(long, requires = "data")]
    smoothing: bool,
    /// Search only threshold-induced candidate partitions instead of all
    #[arg(long)]
    reduced: bool,
    /// Output report JSON (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CheckArgs {
    /// Choice table to check (JSON)
    #[arg(long, value_name = "FILE")]
    table: PathBuf,
    /// Comma-separated axiom names, or "all"
    #[arg(long, default_value = "all")]
    axioms: String,
    /// Numeric tolerance for the comparisons
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Output report JSON (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RecoverArgs {
    /// Exact choice table (JSON)
    #[arg(long, value_name = "FILE")]
    table: PathBuf,
    /// 2 recovers nests; 3 recovers a two-layer (outer/inner) structure
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    layers: u8,
    /// Numeric tolerance for exactness tests during recovery
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Output model JSON (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FitEtaArgs {
    /// Exact choice table (JSON)
    #[arg(long, value_name = "FILE")]
    table: PathBuf,
    /// Numeric tolerance for recovery and the power-form test
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Output fit JSON (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FitCnlArgs {
    /// Strictly positive choice table (JSON)
    #[arg(long, value_name = "FILE")]
    table: PathBuf,
    /// Override the fixed-point residual tolerance
    #[arg(long, value_name = "TOL")]
    residual_tol: Option<f64>,
    /// Override the iteration budget per attempt
    #[arg(long, value_name = "N")]
    max_iters: Option<usize>,
    /// Output model JSON (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write solver diagnostics (JSON)
    #[arg(long, value_name = "FILE")]
    diagnostics: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReplicateArgs {
    /// Comma-separated noise grid, e.g. "0,0.01,0.025,0.035,0.05,0.075"
    #[arg(long, value_name = "LIST")]
    deltas: String,
    /// Trials per grid point
    #[arg(long)]
    trials: u32,
    /// Master seed; each (grid point, trial) gets its own stream
    #[arg(long)]
    seed: u64,
    /// True nest blocks, 1-based, e.g. "1,2,3|4,5,6"
    #[arg(long, default_value = "1,2,3|4,5,6", value_name = "SPEC")]
    blocks: String,
    /// Uniform range "lo,hi" for alternative utilities
    #[arg(long, default_value = "0.5,2", value_name = "LO,HI")]
    u_range: String,
    /// Uniform range "lo,hi" for nest values
    #[arg(long, default_value = "0.5,2", value_name = "LO,HI")]
    v_range: String,
    /// Use screened candidate partitions instead of full enumeration
    #[arg(long)]
    reduced: bool,
    /// Sample N multinomial draws per menu instead of perturbing frequencies
    #[arg(long, value_name = "N")]
    multinomial: Option<u64>,
    /// Output rates CSV (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
#[command(group = clap::ArgGroup::new("input").required(true).multiple(false).args(["data", "table"]))]
struct DistanceArgs {
    /// Count dataset (CSV: menu_id,alternative,count)
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Exact choice table (JSON), used as frequencies directly
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
    /// Add half a count to every cell (avoids zero frequencies)
    #[arg(long, requires = "data")]
    smoothing: bool,
    /// Output distance CSV (stdout if omitted)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

/// A subcommand failure: domain errors exit 1 with JSON on stderr, usage
/// errors exit 2 with a plain message.
enum Failure {
    Domain { kind: &'static str, message: String },
    Usage(String),
}

impl From<NcError> for Failure {
    fn from(e: NcError) -> Failure {
        Failure::Domain { kind: error_kind(&e), message: e.to_string() }
    }
}

fn error_kind(e: &NcError) -> &'static str {
    match e {
        NcError::EmptyUniverse => "empty-universe",
        NcError::DuplicateAlternative(_) => "duplicate-alternative",
        NcError::UnknownAlternative(_) => "unknown-alternative",
        NcError::UniverseTooLarge { .. } => "universe-too-large",
        NcError::EmptyMenu => "empty-menu",
        NcError::AlternativeNotInMenu { .. } => "alternative-not-in-menu",
        NcError::NonpositiveUtility(_) => "nonpositive-utility",
        NcError::NonpositiveVValue { .. } => "nonpositive-v-value",
        NcError::MissingVEntry { .. } => "missing-v-entry",
        NcError::InvalidPartition => "invalid-partition",
        NcError::InvalidModel(_) => "invalid-model",
        NcError::InvalidPreset(_) => "invalid-preset",
        NcError::InvalidProbability { .. } => "invalid-probability",
        NcError::IncompleteTable => "incomplete-table",
        NcError::IsaViolated { .. } => "isa-violated",
        NcError::GisaViolated { .. } => "gisa-violated",
        NcError::ConsistencyViolated { .. } => "consistency-violated",
        NcError::DegenerateTable { .. } => "degenerate-table",
        NcError::NotTransitiveSimilarity { .. } => "not-transitive-similarity",
        NcError::AmbiguousRecovery { .. } => "ambiguous-recovery",
        NcError::ZeroFrequency { .. } => "zero-frequency",
        NcError::NonpositiveSigma { .. } => "nonpositive-sigma",
        NcError::NoConvergence { .. } => "no-convergence",
        NcError::TableNotPositive => "table-not-positive",
        NcError::RejectionBudgetExhausted(_) => "rejection-budget-exhausted",
        NcError::Parse(_) => "parse",
        NcError::Io(_) => "file-io",
        NcError::Json(_) => "json",
    }
}

type Checker = fn(&ChoiceTable, f64) -> Result<AxiomReport, NcError>;

/// Table-based checkers by CLI name, in report order for `--axioms all`.
const AXIOMS: &[(&str, Checker)] = &[
    ("iia", axioms::check_iia),
    ("isa", axioms::check_isa),
    ("iaa", axioms::check_iaa),
    ("similarity_effect", axioms::check_similarity_effect),
    ("regularity", axioms::check_regularity),
    ("similar_regularity", axioms::check_similar_regularity),
    ("dissimilar_regularity", axioms::check_dissimilar_regularity),
    ("lri", axioms::check_lri),
    ("rli", axioms::check_rli),
    ("isa1", axioms::check_isa1),
    ("isa2", axioms::check_isa2),
    ("gisa", axioms::check_gisa),
    ("consistency", axioms::check_consistency),
];

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        // Ignore "already built": only possible if set twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(Failure::Domain { kind, message }) => {
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Sample(args) => sample(args),
        Command::Identify(args) => identify(args),
        Command::Check(args) => check(args),
        Command::Recover(args) => recover(args),
        Command::FitEta(args) => fit_eta(args),
        Command::FitCnl(args) => fit_cnl(args),
        Command::ReplicateFigure(args) => replicate(args),
        Command::Distance(args) => distance(args),
    }
}

// ---- shared plumbing ----

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Domain {
        kind: "file-io",
        message: format!("{}: {e}", path.display()),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Domain {
        kind: "file-io",
        message: format!("{}: {e}", path.display()),
    })
}

/// Writes to the file, or to stdout when no path was given.
fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_table(path: &Path) -> Result<ChoiceTable, Failure> {
    Ok(io::table_from_json(&read(path)?)?)
}

fn load_frequency(
    data: Option<&PathBuf>,
    table: Option<&PathBuf>,
    smoothing: bool,
) -> Result<FrequencyData, Failure> {
    if smoothing && data.is_none() {
        return Err(Failure::Usage("--smoothing applies only to --data".into()));
    }
    match (data, table) {
        (Some(path), None) => {
            let dataset = io::dataset_from_csv(&read(path)?)?;
            if smoothing {
                Ok(FrequencyData::from_dataset_smoothed(&dataset))
            } else {
                Ok(FrequencyData::from_dataset(&dataset)?)
            }
        }
        (None, Some(path)) => Ok(FrequencyData::from_table(&load_table(path)?)),
        _ => unreachable!("clap group enforces exactly one input"),
    }
}

/// Parses "1,2,3|4,5,6" (1-based alternative indices) into a partition.
fn parse_blocks(spec: &str) -> Result<NestStructure, Failure> {
    let mut blocks = Vec::new();
    let mut n = 0usize;
    for part in spec.split('|') {
        let mut members = Vec::new();
        for tok in part.split(',') {
            let i: usize = tok
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("--blocks: {:?} is not an index", tok.trim())))?;
            if i == 0 {
                return Err(Failure::Usage("--blocks indices are 1-based".into()));
            }
            members.push(i - 1);
            n = n.max(i);
        }
        blocks.push(Menu::from_members(members));
    }
    Ok(NestStructure::new(blocks, n)?)
}

fn parse_range(flag: &str, spec: &str) -> Result<(f64, f64), Failure> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() == 2 {
        if let (Ok(lo), Ok(hi)) = (parts[0].parse(), parts[1].parse()) {
            return Ok((lo, hi));
        }
    }
    Err(Failure::Usage(format!("{flag} expects \"lo,hi\", got {spec:?}")))
}

fn parse_f64_list(flag: &str, spec: &str) -> Result<Vec<f64>, Failure> {
    spec.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("{flag}: {:?} is not a number", tok.trim())))
        })
        .collect()
}

fn sim_config(seed: u64, blocks: &str, u_range: &str, v_range: &str) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig::two_blocks_of_three(seed);
    cfg.structure = parse_blocks(blocks)?;
    cfg.u_range = parse_range("--u-range", u_range)?;
    cfg.v_range = parse_range("--v-range", v_range)?;
    Ok(cfg)
}

// ---- subcommands ----

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = sim_config(args.seed, &args.blocks, &args.u_range, &args.v_range)?;
    cfg.delta = args.delta;
    let (model, table, noisy) = draw_example(&cfg)?;
    let no_files = args.out_model.is_none() && args.out_table.is_none() && args.out_perturbed.is_none();
    if let Some(path) = &args.out_model {
        write_file(path, &io::nsc_to_json(&model)?)?;
    }
    if let Some(path) = &args.out_table {
        write_file(path, &io::table_to_json(&table)?)?;
    }
    if let Some(path) = &args.out_perturbed {
        write_file(path, &io::table_to_json(&noisy)?)?;
    }
    if no_files {
        print!("{}", io::table_to_json(&table)?);
    }
    Ok(())
}

fn sample(args: SampleArgs) -> Result<(), Failure> {
    let table = match (&args.table, &args.model) {
        (Some(path), None) => load_table(path)?,
        (None, Some(path)) => full_choice_table(&io::model_from_json(&read(path)?)?)?,
        _ => unreachable!("clap group enforces exactly one input"),
    };
    let mut rng = seeded_rng(args.seed);
    let dataset = sample_dataset(&table, args.draws, &mut rng)?;
    write_output(args.out.as_ref(), &io::dataset_to_csv(&dataset)?)
}

fn identify(args: IdentifyArgs) -> Result<(), Failure> {
    let data = load_frequency(args.data.as_ref(), args.table.as_ref(), args.smoothing)?;
    let ranked = if args.reduced {
        identify_reduced(&data).1
    } else {
        identify_full(&data)?.1
    };
    write_output(args.out.as_ref(), &io::report_to_json(&ranked, data.universe())?)
}

fn check(args: CheckArgs) -> Result<(), Failure> {
    let table = load_table(&args.table)?;
    let selected: Vec<&str> = if args.axioms == "all" {
        AXIOMS.iter().map(|(name, _)| *name).collect()
    } else {
        args.axioms.split(',').map(str::trim).collect()
    };
    let mut reports = Vec::new();
    for name in selected {
        let (_, checker) = AXIOMS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let known: Vec<&str> = AXIOMS.iter().map(|(n, _)| *n).collect();
            Failure::Usage(format!("unknown axiom {name:?}; available: {}", known.join(", ")))
        })?;
        reports.push(checker(&table, args.tol)?);
    }
    write_output(args.out.as_ref(), &io::axiom_reports_to_json(&reports, table.universe())?)?;
    let failed: Vec<&str> =
        reports.iter().filter(|r| !r.passed).map(|r| r.axiom.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Domain {
            kind: "axiom-violations",
            message: format!(
                "{} of {} axioms failed: {}",
                failed.len(),
                reports.len(),
                failed.join(", ")
            ),
        })
    }
}

fn recover(args: RecoverArgs) -> Result<(), Failure> {
    let table = load_table(&args.table)?;
    let text = if args.layers == 2 {
        io::nsc_to_json(&recover_nsc(&table, args.tol)?)?
    } else {
        io::three_step_to_json(&recover_three_step(&table, args.tol)?)?
    };
    write_output(args.out.as_ref(), &text)
}

fn fit_eta(args: FitEtaArgs) -> Result<(), Failure> {
    let table = load_table(&args.table)?;
    let model = recover_nsc(&table, args.tol)?;
    let fit = recover_eta(&model, args.tol)?;
    write_output(args.out.as_ref(), &io::eta_to_json(&fit, table.universe())?)
}

fn fit_cnl(args: FitCnlArgs) -> Result<(), Failure> {
    let table = load_table(&args.table)?;
    let mut cfg = SolverConfig::for_table(&table)?;
    if let Some(tol) = args.residual_tol {
        cfg.residual_tol = tol;
    }
    if let Some(iters) = args.max_iters {
        cfg.max_iters = iters;
    }
    let (model, diag) = solve_cnl(&table, Some(cfg))?;
    write_output(args.out.as_ref(), &io::cnl_to_json(&model)?)?;
    if let Some(path) = &args.diagnostics {
        write_file(path, &io::diagnostics_to_json(&diag))?;
    }
    Ok(())
}

fn replicate(args: ReplicateArgs) -> Result<(), Failure> {
    let deltas = parse_f64_list("--deltas", &args.deltas)?;
    let mut cfg = sim_config(args.seed, &args.blocks, &args.u_range, &args.v_range)?;
    if let Some(draws) = args.multinomial {
        cfg.sampling = SamplingMode::Multinomial { draws_per_menu: draws };
    }
    let points = replicate_figure(&deltas, args.trials, &cfg, args.reduced)?;
    write_output(args.out.as_ref(), &io::rates_to_csv(&points))
}

fn distance(args: DistanceArgs) -> Result<(), Failure> {
    let data = load_frequency(args.data.as_ref(), args.table.as_ref(), args.smoothing)?;
    let matrix = distance_matrix(&data);
    write_output(args.out.as_ref(), &io::distance_to_csv(&matrix)?)
}
