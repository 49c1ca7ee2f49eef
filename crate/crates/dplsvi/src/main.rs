//! Benchmark CLI: seeded training suites, privacy-budget sweeps, instance
//! validation, and the privacy accountant.

use clap::{Args, Parser, Subcommand};
use dplsvi::agents::AgentMode;
use dplsvi::bench::{
    parse_kv_file, run_suite, sweep_epsilon, AggregateCurve, BenchError, RawOptions,
};
use dplsvi::dp::{dp_to_zcdp, AccountantReport, NoiseCalibration};
use dplsvi::linear_mdp::{parse_instance, validate_spec};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dplsvi",
    about = "Regret benchmarks for differentially private least-squares value iteration on linear MDPs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded multi-algorithm suite and emit traces, aggregates, and
    /// optionally a plot.
    Run(RunArgs),
    /// Paired privacy-budget sweep with a zero-noise reference curve.
    SweepEpsilon(SweepArgs),
    /// Validate a serialized instance file (or a generated instance).
    ValidateInstance(ValidateArgs),
    /// Print the privacy accountant's report for a budget and run shape.
    Accountant(AccountantArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat `key = value` config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance generator: `tabular` or `lowrank`.
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    actions: Option<usize>,
    /// Feature dimension of the lowrank generator.
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    instance_seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Number of independent seeds per algorithm.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Algorithms to run: comma-separated subset of dp, pp, ucb.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<String>>,
    /// Privacy budget (private entries).
    #[arg(long)]
    epsilon: Option<f64>,
    /// zCDP budget; overrides --epsilon when set.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    delta_prime: Option<f64>,
    /// Utility failure probability for noise-norm bounds and radii.
    #[arg(long)]
    delta: Option<f64>,
    /// Scale on the confidence radii.
    #[arg(long)]
    radius_mult: Option<f64>,
    /// Scale on the variance-correction terms (default 1 / (d^3 H^2)).
    #[arg(long)]
    variance_scale: Option<f64>,
    /// Ridge regularizer for the non-private modes.
    #[arg(long)]
    lambda: Option<f64>,
    /// Hoeffding bonus of the LSVI-UCB baseline.
    #[arg(long)]
    ucb_beta: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    /// Noise freshness: `fresh` (per released statistic) or `once`.
    #[arg(long)]
    noise_reuse: Option<String>,
    /// Output directory for runs.csv, aggregates.csv, metadata.txt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render regret.svg into the output directory.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ascending list of privacy budgets, e.g. `0.2,1,5`.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Serialized instance to validate; omit to validate a generated one.
    #[arg(long)]
    file: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct AccountantArgs {
    #[command(flatten)]
    common: CommonArgs,
}

impl CommonArgs {
    fn resolve(&self) -> Result<RawOptions, BenchError> {
        let file = match &self.config {
            Some(path) => parse_kv_file(path)?,
            None => RawOptions::default(),
        };
        let cli = RawOptions {
            instance: self.instance.clone(),
            states: self.states,
            actions: self.actions,
            feature_dim: self.feature_dim,
            horizon: self.horizon,
            instance_seed: self.instance_seed,
            episodes: self.episodes,
            seeds: self.seeds,
            master_seed: self.master_seed,
            algo: self.algo.clone(),
            epsilon: self.epsilon,
            rho: self.rho,
            delta_prime: self.delta_prime,
            delta: self.delta,
            radius_mult: self.radius_mult,
            variance_scale: self.variance_scale,
            lambda: self.lambda,
            ucb_beta: self.ucb_beta,
            c1: self.c1,
            c2: self.c2,
            noise_reuse: self.noise_reuse.clone(),
            epsilons: None,
            out: self.out.clone(),
            plot: if self.plot { Some(true) } else { None },
        };
        Ok(cli.over(file))
    }
}

fn print_summary(aggregates: &[AggregateCurve]) {
    println!(
        "{:<28} {:>16} {:>12} {:>6}",
        "algorithm", "final mean regret", "std", "n"
    );
    for agg in aggregates {
        let n = agg.n.last().copied().unwrap_or(0);
        let flag = if agg.partial { " (partial)" } else { "" };
        println!(
            "{:<28} {:>16.3} {:>12.3} {:>6}{}",
            agg.label,
            agg.final_mean(),
            agg.final_std(),
            n,
            flag
        );
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), BenchError> {
    let opts = args.common.resolve()?;
    let config = opts.experiment()?;
    let suite = run_suite(&config)?;
    print_summary(&suite.aggregates);
    if let Some(dir) = &config.out_dir {
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), BenchError> {
    let mut opts = args.common.resolve()?;
    if let Some(eps) = &args.epsilons {
        opts.epsilons = Some(eps.clone());
    }
    let epsilons = opts
        .epsilons
        .clone()
        .ok_or_else(|| BenchError::Config("sweep-epsilon requires --epsilons".into()))?;
    let config = opts.experiment()?;
    let template = opts.entry_for(AgentMode::DpLsviUcbPP)?;
    let suite = sweep_epsilon(&config, &template, &epsilons)?;
    print_summary(&suite.aggregates);
    if let Some(dir) = &config.out_dir {
        println!("artifacts written to {}", dir.display());
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<bool, BenchError> {
    let spec = match &args.file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
                path: path.clone(),
                source,
            })?;
            parse_instance(&text)?
        }
        None => args.common.resolve()?.instance_config()?.build(),
    };
    let violations = validate_spec(&spec);
    if violations.is_empty() {
        println!(
            "ok: d={} H={} |S|={} |A|={} s0={}",
            spec.d, spec.horizon, spec.num_states, spec.num_actions, spec.initial_state
        );
        Ok(true)
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        Ok(false)
    }
}

fn cmd_accountant(args: &AccountantArgs) -> Result<(), BenchError> {
    let opts = args.common.resolve()?;
    let instance = opts.instance_config()?;
    let episodes = opts.episodes.unwrap_or(dplsvi::bench::DEFAULT_EPISODES);
    let delta_prime = opts
        .delta_prime
        .unwrap_or(dplsvi::bench::DEFAULT_DELTA_PRIME);
    let delta = opts.delta.unwrap_or(dplsvi::bench::DEFAULT_UTILITY_DELTA);
    let rho = match (opts.rho, opts.epsilon) {
        (Some(r), _) => r,
        (None, Some(e)) => dp_to_zcdp(e, delta_prime)?,
        (None, None) => dp_to_zcdp(1.0, delta_prime)?,
    };
    let calibration = NoiseCalibration::new(
        rho,
        instance.horizon,
        episodes,
        instance.feature_dim(),
        delta,
        opts.c1.unwrap_or(1.0),
        opts.c2.unwrap_or(1.0),
    )?;
    let mode = opts.noise_reuse.as_deref().unwrap_or("fresh");
    let report = AccountantReport::new(&calibration, delta_prime, mode)?;
    println!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args).map(|_| true),
        Command::SweepEpsilon(args) => cmd_sweep(args).map(|_| true),
        Command::ValidateInstance(args) => cmd_validate(args),
        Command::Accountant(args) => cmd_accountant(args).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
