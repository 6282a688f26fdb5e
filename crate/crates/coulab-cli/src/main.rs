//! `coulab`: batch front-end for the coulomb-lab numerical laboratory.

mod output;
mod pipelines;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use coulomb_lab::verify::{self, Suite};

use crate::output::{Manifest, Outputs};
use crate::spec::{LoadedSpec, Pipeline, RunSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] coulomb_lab::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} of {1} criteria failed")]
    Verify(usize, usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Spec(_) | Self::Numerical(coulomb_lab::Error::InvalidInput(_)) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) | Self::Verify(..) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "coulab", version, about = "Numerical laboratory for classical Coulomb gases in d = 2, 3")]
struct Cli {
    /// Worker threads; 0 lets rayon choose.
    #[arg(long, global = true, env = "COULAB_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Run specification (JSON or TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the seed of the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the spec.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs the pipeline named by `command` in the spec.
    Run(RunArgs),
    /// Best-of-restarts annealing for the ground state.
    GroundState(RunArgs),
    /// Gibbs sampling at inverse temperature `beta`.
    Gibbs(RunArgs),
    /// Thermodynamic integration with the mean-field bounds.
    FreeEnergy(RunArgs),
    /// Tiled configuration from lattice patches.
    Tile(RunArgs),
    /// Equilibrium measure, and `mu_beta` when `beta` is set.
    Equilibrium(RunArgs),
    /// Lattice energies and Epstein zeta values.
    Jellium(RunArgs),
    /// Discrepancy tails, density profile and bond order.
    Diagnostics(RunArgs),
    /// Runs the acceptance suite.
    Verify {
        #[arg(value_parser = ["fast", "full"])]
        suite: String,
        /// Spec whose `tolerances` block replaces the defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Writes `verify.csv` and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_threads(cli.threads, || dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coulab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T>(_threads: usize, f: impl FnOnce() -> T) -> T {
    f()
}

fn effective_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let (args, forced) = match command {
        Command::Verify { suite, spec, seed, out } => return run_verify(&suite, spec, seed, out),
        Command::Run(a) => (a, None),
        Command::GroundState(a) => (a, Some(Pipeline::GroundState)),
        Command::Gibbs(a) => (a, Some(Pipeline::Gibbs)),
        Command::FreeEnergy(a) => (a, Some(Pipeline::FreeEnergy)),
        Command::Tile(a) => (a, Some(Pipeline::Tile)),
        Command::Equilibrium(a) => (a, Some(Pipeline::Equilibrium)),
        Command::Jellium(a) => (a, Some(Pipeline::Jellium)),
        Command::Diagnostics(a) => (a, Some(Pipeline::Diagnostics)),
    };
    let loaded = spec::load(&args.spec)?;
    run(loaded, forced, args.seed, args.out)
}

/// Executes one pipeline and writes its manifest.
fn run(loaded: LoadedSpec, forced: Option<Pipeline>, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let start = Instant::now();
    let mut spec = loaded.spec.clone();
    let pipeline = match (forced, spec.command) {
        (Some(p), Some(q)) if p != q => {
            return Err(CliError::Spec(format!("field `command` is {:?} but the subcommand is {}", q.name(), p.name())))
        }
        (Some(p), _) => p,
        (None, Some(q)) => q,
        (None, None) => return Err(CliError::Spec("missing required field `command`".into())),
    };
    spec.command = Some(pipeline);
    if let Some(s) = seed {
        spec.seed = Some(s);
    }
    spec.seed = Some(spec.seed());
    let dir = out.or_else(|| spec.out.clone()).unwrap_or_else(|| PathBuf::from("coulab-out"));
    spec.out = Some(dir.clone());
    let mut outputs = Outputs::new(&dir)?;
    let summary = pipelines::execute(pipeline, &spec, &mut outputs)?;
    let manifest = Manifest::new(pipeline.name(), &loaded, &spec, &outputs, summary, effective_threads(), start.elapsed());
    outputs.write_manifest(&manifest)?;
    println!("{}: wrote {} files to {}", pipeline.name(), outputs.files().len() + 1, dir.display());
    Ok(())
}

fn run_verify(suite: &str, spec: Option<PathBuf>, seed: u64, out: Option<PathBuf>) -> Result<(), CliError> {
    let start = Instant::now();
    let suite: Suite = suite.parse().map_err(CliError::Spec)?;
    let loaded = spec.map(|p| spec::load(&p)).transpose()?;
    let tol = loaded.as_ref().and_then(|l| l.spec.tolerances.clone()).unwrap_or_default();
    let outcomes = verify::run_suite(suite, &tol, seed);
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if let Some(dir) = out {
        let mut outputs = Outputs::new(&dir)?;
        let rows: Vec<Vec<String>> = outcomes
            .iter()
            .map(|o| {
                vec![
                    o.id.to_string(),
                    o.title.clone(),
                    o.passed.to_string(),
                    o.known_gap.clone().unwrap_or_default(),
                    o.detail.clone(),
                ]
            })
            .collect();
        outputs.table("verify.csv", &["criterion", "title", "passed", "known_gap", "detail"], &rows)?;
        let spec = RunSpec { seed: Some(seed), tolerances: Some(tol.clone()), ..RunSpec::default() };
        let placeholder = LoadedSpec { spec: spec.clone(), bytes: Vec::new(), path: PathBuf::new() };
        let summary = serde_json::json!({ "suite": format!("{suite:?}").to_lowercase(), "failed": failed });
        let manifest = Manifest::new("verify", loaded.as_ref().unwrap_or(&placeholder), &spec, &outputs, summary, effective_threads(), start.elapsed());
        outputs.write_manifest(&manifest)?;
    }
    if failed > 0 {
        return Err(CliError::Verify(failed, outcomes.len()));
    }
    Ok(())
}
