use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use rfield_cli::config::{DomainSource, ExperimentConfig, Outputs, Task, Weights};
use rfield_cli::model::ModelSpec;
use rfield_cli::run::{run, workers_from_env};
use rfield_core::fclt::{CollectionKind, VcSearch};
use rfield_core::verify::Standardization;
use rfield_core::{DomainShape, IndexSet, LatticePoint, NoiseDistribution};

/// Simulate stationary random fields and check their limit theorems.
#[derive(Parser, Debug)]
#[command(name = "rfield", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// `linear:2tap`, `linear:ma:1,0.5`, `volterra:lag1`, `subordinated:2tap:K=abs`, ...
    #[arg(long, global = true)]
    model: Option<ModelSpec>,
    #[arg(long, global = true, default_value = "normal")]
    noise: NoiseDistribution,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// `box:n=48,d=2`, `line:n=2304,d=2`, `lshape:arm=60,width=24`, `random:n=68,d=2,keep=0.5,seed=7`, ...
    #[arg(long, global = true, conflicts_with = "domain_file")]
    shape: Option<DomainShape>,
    #[arg(long, global = true)]
    domain_file: Option<PathBuf>,
    /// Lattice dimension when no domain is given.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Constant added to every field value.
    #[arg(long, global = true, default_value_t = 0.0, allow_hyphen_values = true)]
    mean: f64,
    /// JSON report path (stdout when absent).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Also write the resolved configuration here.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Field values on the domain for one replicate.
    Simulate {
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Dependence measures over the influence set and their sum.
    Dependence {
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Orlicz norm with exponent 2q/(2 − q) instead of an L^p norm.
        #[arg(long)]
        orlicz_q: Option<f64>,
        /// Force Monte Carlo with this many replicates per site.
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Replicated sample mean and autocovariances.
    Estimate {
        /// Lag such as `1,0`; repeatable.
        #[arg(long = "lag", required = true, allow_hyphen_values = true)]
        lags: Vec<LatticePoint>,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Distance of the normalized partial sum to its normal limit.
    VerifyClt {
        #[arg(long, default_value_t = 5000)]
        replicates: usize,
        /// exact, longrun or empirical.
        #[arg(long)]
        mode: Option<Standardization>,
        #[arg(long, default_value_t = 0.03)]
        tolerance: f64,
    },
    /// Weighted-sum moment bound.
    VerifyMoment {
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 5000)]
        replicates: usize,
        /// `ones` or `uniform:<seed>`.
        #[arg(long, default_value = "ones", value_parser = parse_weights)]
        weights: Weights,
    },
    /// Exact variance ratio on growing boxes.
    VerifyVariance {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        sizes: Vec<usize>,
    },
    /// Partial-sum gap of the m-dependent approximation.
    VerifyTruncation {
        #[arg(long = "m", value_delimiter = ',', default_value = "0,1,2")]
        ms: Vec<u64>,
        #[arg(long, default_value_t = 2000)]
        replicates: usize,
    },
    /// Normal limit of the lag-k autocovariance estimate.
    VerifyAutocov {
        #[arg(long, allow_hyphen_values = true)]
        lag: LatticePoint,
        #[arg(long, default_value_t = 5000)]
        replicates: usize,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Covariances of smoothed set-indexed sums and the discrete gap.
    Fclt {
        #[arg(long)]
        n: usize,
        /// `<set>|<set>`, e.g. `quadrant:t=0.5,0.5|rect:s=0.2,0;t=1,0.6`; repeatable.
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(IndexSet, IndexSet)>,
        /// Set whose discrete-vs-smoothed gap is measured; repeatable.
        #[arg(long = "gap-set")]
        gap_sets: Vec<IndexSet>,
        #[arg(long, default_value_t = 4000)]
        replicates: usize,
    },
    /// Brute-force VC index of quadrants or rectangles.
    VcIndex {
        #[arg(long)]
        kind: CollectionKind,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Re-run a saved configuration.
    Run { config: PathBuf },
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    match s {
        "ones" => Ok(Weights::Ones),
        _ => s
            .strip_prefix("uniform:")
            .and_then(|seed| seed.parse().ok())
            .map(Weights::Uniform)
            .ok_or_else(|| format!("expected `ones` or `uniform:<seed>`, got {s:?}")),
    }
}

fn parse_pair(s: &str) -> Result<(IndexSet, IndexSet), String> {
    let (a, b) = s.split_once('|').ok_or("expected `<set>|<set>`")?;
    Ok((
        a.parse().map_err(|e| format!("{e}"))?,
        b.parse().map_err(|e| format!("{e}"))?,
    ))
}

fn task(command: Command) -> Task {
    match command {
        Command::Simulate { replicate } => Task::Simulate { replicate },
        Command::Dependence { p, orlicz_q, replicates } => Task::Dependence { p, orlicz_q, replicates },
        Command::Estimate { lags, replicates, level } => Task::Estimate { lags, replicates, level },
        Command::VerifyClt { replicates, mode, tolerance } => Task::VerifyClt { replicates, mode, tolerance },
        Command::VerifyMoment { p, replicates, weights } => Task::VerifyMoment { p, replicates, weights },
        Command::VerifyVariance { sizes } => Task::VerifyVariance { sizes },
        Command::VerifyTruncation { ms, replicates } => Task::VerifyTruncation { ms, replicates },
        Command::VerifyAutocov { lag, replicates, tolerance } => Task::VerifyAutocov { lag, replicates, tolerance },
        Command::Fclt { n, pairs, gap_sets, replicates } => Task::Fclt { n, pairs, gap_sets, replicates },
        Command::VcIndex { kind, d, grid, restarts, budget } => {
            let mut search = VcSearch::default();
            search.grid = grid.unwrap_or(search.grid);
            search.random_restarts = restarts.unwrap_or(search.random_restarts);
            search.budget = budget.unwrap_or(search.budget);
            Task::VcIndex { kind, d, search }
        }
        Command::Run { .. } => unreachable!("handled by the caller"),
    }
}

fn configure(cli: Cli) -> Result<ExperimentConfig> {
    let c = cli.common;
    let config = match cli.command {
        Command::Run { config } => {
            let mut loaded = ExperimentConfig::load(&config)?;
            if c.output.is_some() || c.csv.is_some() {
                loaded.output = Outputs { json: c.output, csv: c.csv };
            }
            loaded
        }
        command => ExperimentConfig {
            model: c.model,
            noise: c.noise,
            domain: match (c.shape, c.domain_file) {
                (Some(s), _) => Some(DomainSource::Shape(s)),
                (None, Some(p)) => Some(DomainSource::File(p)),
                (None, None) => None,
            },
            dim: c.dim,
            mean: c.mean,
            seed: c.seed,
            task: task(command),
            output: Outputs { json: c.output, csv: c.csv },
        },
    };
    config.validate()?;
    if let Some(p) = c.save_config {
        std::fs::write(&p, config.to_json() + "\n").with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = workers_from_env().and_then(|w| {
        let config = configure(cli)?;
        run(&config, w)
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
