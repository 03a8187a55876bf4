use std::path::PathBuf;
use std::process::ExitCode;

use betkit::datastore::save_dataset;
use betkit::harness::{
    compare_ranks, read_results, results_csv, run_and_write, Experiment, ExperimentConfig,
    HarnessError, KernelChoice,
};
use betkit::toy::{make_toy, ToySpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "betkit",
    version,
    about = "Sequential kernelized tests of semantic importance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Marginal, conditional and local tests on the three-concept Gaussian model
    SyntheticGaussian(RunArgs),
    /// Marginal and conditional tests of the six counting concepts
    SyntheticCounting(RunArgs),
    /// Marginal test of every dataset concept against a class score
    Global(RunArgs),
    /// Conditional test of every dataset concept given the others
    GlobalCond(RunArgs),
    /// Local test of every concept for one sample
    Local(RunArgs),
    /// Rank and importance agreement between two results.csv files
    Compare(CompareArgs),
    /// Write a small synthetic dataset and its manifest
    MakeToy(ToyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Sample budget per test
    #[arg(long, default_value_t = 1000)]
    tau_max: usize,
    #[arg(long, value_enum, default_value = "rbf")]
    kernel: KernelArg,
    /// Quantile of pairwise distances used as the RBF bandwidth
    #[arg(long, default_value_t = 0.5)]
    bandwidth_q: f64,
    /// "ons" or a constant betting fraction in [0, 1]
    #[arg(long, default_value = "ons")]
    strategy: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated coefficients for the Gaussian sweeps
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
    betas: Vec<f64>,
    /// Comma-separated z3 values for the Gaussian local test
    #[arg(long, value_delimiter = ',', default_value = "-1,-0.5,0,0.5,1")]
    z3: Vec<f64>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Concept to test; repeat to test several (default: all)
    #[arg(long)]
    concept: Vec<String>,
    /// Target class (default: the first)
    #[arg(long)]
    class: Option<String>,
    /// Sample id or row index for the local test
    #[arg(long)]
    sample_id: Option<String>,
    /// Size of the random conditioning sets of the local test
    #[arg(long, default_value_t = 1)]
    cond_size: usize,
    /// Effective sample size of the KDE samplers
    #[arg(long, default_value_t = betkit_core::samplers::DEFAULT_TARGET_NEFF)]
    target_neff: f64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (0: available parallelism); BETKIT_THREADS takes precedence
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Also write wealth.svg
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// File with one important concept name per line
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Directory for compare.json (printed to stdout otherwise)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value = "toy")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    rows: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    concepts: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
}

fn threads(requested: usize) -> Result<usize, HarnessError> {
    match std::env::var("BETKIT_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config(format!("BETKIT_THREADS={v:?} is not a count"))),
        Err(_) => Ok(requested),
    }
}

fn config(experiment: Experiment, a: RunArgs) -> Result<(ExperimentConfig, usize), HarnessError> {
    let constant_bet = match a.strategy.as_str() {
        "ons" => None,
        s => Some(s.parse::<f64>().map_err(|_| {
            HarnessError::Config(format!("strategy {s:?} is neither \"ons\" nor a number"))
        })?),
    };
    let cfg = ExperimentConfig {
        experiment,
        alpha: a.alpha,
        tau_max: a.tau_max,
        kernel: match a.kernel {
            KernelArg::Rbf => KernelChoice::Rbf,
            KernelArg::Linear => KernelChoice::Linear,
        },
        bandwidth_q: a.bandwidth_q,
        constant_bet,
        reps: a.reps,
        seed: a.seed,
        betas: a.betas,
        z3_values: a.z3,
        cond_size: a.cond_size,
        target_neff: a.target_neff,
        manifest: a.manifest,
        concepts: a.concept,
        class: a.class,
        sample_id: a.sample_id,
        out: a.out,
        plot: a.plot,
    };
    Ok((cfg, threads(a.threads)?))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let (experiment, args) = match cli.command {
        Command::SyntheticGaussian(a) => (Experiment::SyntheticGaussian, a),
        Command::SyntheticCounting(a) => (Experiment::SyntheticCounting, a),
        Command::Global(a) => (Experiment::Global, a),
        Command::GlobalCond(a) => (Experiment::GlobalCond, a),
        Command::Local(a) => (Experiment::Local, a),
        Command::Compare(a) => return compare(a),
        Command::MakeToy(a) => {
            let spec = ToySpec {
                rows: a.rows,
                dim: a.dim,
                concepts: a.concepts,
                classes: a.classes,
                seed: a.seed,
            };
            let path = save_dataset(&a.out, &make_toy(&spec)?)?;
            println!("{}", path.display());
            return Ok(());
        }
    };
    let (cfg, threads) = config(experiment, args)?;
    let out = run_and_write(&cfg, threads)?;
    print!("{}", results_csv(&out.rows));
    Ok(())
}

fn compare(a: CompareArgs) -> Result<(), HarnessError> {
    let ra = read_results(&a.a)?;
    let rb = read_results(&a.b)?;
    let truth = match &a.truth {
        None => None,
        Some(p) => Some(
            std::fs::read_to_string(p)
                .map_err(|e| HarnessError::Results {
                    path: p.clone(),
                    reason: e.to_string(),
                })?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect::<Vec<_>>(),
        ),
    };
    let report = compare_ranks(&ra, &rb, a.alpha, truth.as_deref())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match a.out {
        None => print!("{json}"),
        Some(dir) => {
            let path = dir.join("compare.json");
            std::fs::create_dir_all(&dir)
                .and_then(|_| std::fs::write(&path, &json))
                .map_err(|source| HarnessError::Output { path, source })?;
            print!("{json}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
