//! Experiment orchestration: seeded multi-run suites, algorithm comparisons,
//! privacy-budget sweeps, and artifact emission.
//!
//! Suites are paired by seed: every algorithm entry sees the same per-seed
//! run seeds (derived from the master seed by fixed arithmetic), so curve
//! differences across entries are attributable to the algorithms alone.

mod csv;
mod plot;
mod textcfg;

pub use csv::{parse_runs_csv, render_aggregates_csv, render_runs_csv, CsvRow};
pub use plot::render_svg;
pub use textcfg::{parse_kv_file, RawOptions};

use crate::agents::{
    run_lsvi_ucb_baseline, run_training, AgentConfig, AgentError, AgentMode, NoiseReuse, RunResult,
};
use crate::dp::{dp_to_zcdp, zcdp_to_dp, AccountantReport, DpError, NoiseCalibration};
use crate::linear_mdp::{
    make_low_rank_instance, make_tabular_instance, validate_spec, write_instance, LinearMdpSpec,
    MdpError,
};
use crate::rng::{split_seed, stream, StreamKind};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which generator builds the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Tabular {
        states: usize,
        actions: usize,
    },
    LowRank {
        d: usize,
        states: usize,
        actions: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceConfig {
    pub kind: InstanceKind,
    pub horizon: usize,
    pub seed: u64,
}

impl InstanceConfig {
    pub fn build(&self) -> LinearMdpSpec {
        let mut rng = stream(self.seed, StreamKind::Instance, 0, 0);
        match self.kind {
            InstanceKind::Tabular { states, actions } => {
                make_tabular_instance(states, actions, self.horizon, &mut rng)
            }
            InstanceKind::LowRank { d, states, actions } => {
                make_low_rank_instance(d, states, actions, self.horizon, &mut rng)
            }
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self.kind {
            InstanceKind::Tabular { states, actions } => states * actions,
            InstanceKind::LowRank { d, .. } => d,
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            InstanceKind::Tabular { states, actions } => {
                format!(
                    "tabular states={} actions={} horizon={} seed={}",
                    states, actions, self.horizon, self.seed
                )
            }
            InstanceKind::LowRank { d, states, actions } => format!(
                "lowrank d={} states={} actions={} horizon={} seed={}",
                d, states, actions, self.horizon, self.seed
            ),
        }
    }
}

/// Desk-scale default environment: tabular 3 states x 4 actions (d = 12),
/// horizon 5. The generator seed is fixed to an instance whose action-value
/// gaps are wide enough for every learner to converge within the default
/// episode budget.
pub fn default_instance_config() -> InstanceConfig {
    InstanceConfig {
        kind: InstanceKind::Tabular {
            states: 3,
            actions: 4,
        },
        horizon: 5,
        seed: 6,
    }
}

pub const DEFAULT_DELTA_PRIME: f64 = 1e-3;
pub const DEFAULT_UTILITY_DELTA: f64 = 0.05;
/// Bench-default scale on the confidence radii. The literal radii are
/// asymptotic and saturate every bonus at desk scale; this multiplier keeps
/// their shape while letting learning happen within a few thousand episodes.
pub const DEFAULT_RADIUS_MULTIPLIER: f64 = 1e-5;
/// Ridge regularizer of the zero-noise weighted learner. Small, because the
/// step weights are floored at H and the effective shrinkage is
/// `2 lambda sigma_bar^2`; anything much larger biases the bootstrapped
/// values down and the monotone table clipping locks the bias in.
pub const DEFAULT_PP_LAMBDA: f64 = 5e-4;
/// Baseline ridge and Hoeffding-bonus defaults (plain unweighted regression).
pub const DEFAULT_UCB_LAMBDA: f64 = 1.0;
pub const DEFAULT_UCB_BETA: f64 = 1.0;
pub const DEFAULT_EPISODES: usize = 2000;
pub const DEFAULT_NUM_SEEDS: usize = 10;
pub const DEFAULT_MASTER_SEED: u64 = 42;

/// Bench-default variance scaling, `1 / (d^3 H^2)`: cancels the cubic-in-d
/// coefficients of the variance-correction terms so the regularized step
/// weights settle near their `H` floor instead of freezing the Gram growth.
pub fn default_variance_scale(d: usize, horizon: usize) -> f64 {
    1.0 / ((d as f64).powi(3) * (horizon as f64).powi(2))
}

/// One algorithm entry of a suite.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgoEntry {
    pub mode: AgentMode,
    /// Privacy budget; exactly one of `epsilon`/`rho` must be set for the
    /// private mode.
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    /// For the zero-noise mode only: configure the run exactly as the
    /// private mode at this budget (regularizer, noise-norm bound, radii)
    /// but inject no noise. Used as the sweep's reference curve.
    pub twin_of_epsilon: Option<f64>,
    pub delta_prime: f64,
    pub utility_delta: f64,
    pub radius_multiplier: f64,
    /// `None` selects the desk-scale default for the instance.
    pub variance_scale: Option<f64>,
    /// Ridge regularizer for the non-private modes.
    pub lambda: f64,
    /// Hoeffding bonus for the baseline.
    pub ucb_beta: f64,
    pub noise_reuse: NoiseReuse,
    pub c1: f64,
    pub c2: f64,
}

impl AlgoEntry {
    pub fn non_private() -> Self {
        AlgoEntry {
            mode: AgentMode::LsviUcbPP,
            epsilon: None,
            rho: None,
            twin_of_epsilon: None,
            delta_prime: DEFAULT_DELTA_PRIME,
            utility_delta: DEFAULT_UTILITY_DELTA,
            radius_multiplier: DEFAULT_RADIUS_MULTIPLIER,
            variance_scale: None,
            lambda: DEFAULT_PP_LAMBDA,
            ucb_beta: DEFAULT_UCB_BETA,
            noise_reuse: NoiseReuse::Fresh,
            c1: 1.0,
            c2: 1.0,
        }
    }

    pub fn private(epsilon: f64) -> Self {
        AlgoEntry {
            mode: AgentMode::DpLsviUcbPP,
            epsilon: Some(epsilon),
            ..AlgoEntry::non_private()
        }
    }

    pub fn baseline() -> Self {
        AlgoEntry {
            mode: AgentMode::LsviUcb,
            lambda: DEFAULT_UCB_LAMBDA,
            ..AlgoEntry::non_private()
        }
    }

    /// Stable label naming the algorithm and its budget.
    pub fn label(&self) -> String {
        match self.mode {
            AgentMode::DpLsviUcbPP => match (self.epsilon, self.rho) {
                (Some(e), _) => format!("dp_lsvi_ucb_pp_eps{e}"),
                (None, Some(r)) => format!("dp_lsvi_ucb_pp_rho{r}"),
                _ => "dp_lsvi_ucb_pp".to_string(),
            },
            AgentMode::LsviUcbPP => "lsvi_ucb_pp".to_string(),
            AgentMode::LsviUcb => "lsvi_ucb".to_string(),
        }
    }
}

/// A full experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub episodes: usize,
    pub num_seeds: usize,
    pub master_seed: u64,
    pub algorithms: Vec<AlgoEntry>,
    pub out_dir: Option<PathBuf>,
    pub plot: bool,
}

impl ExperimentConfig {
    pub fn new(instance: InstanceConfig, episodes: usize, num_seeds: usize) -> Self {
        ExperimentConfig {
            instance,
            episodes,
            num_seeds,
            master_seed: DEFAULT_MASTER_SEED,
            algorithms: Vec::new(),
            out_dir: None,
            plot: false,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.num_seeds < 1 {
            return Err(BenchError::Config("num_seeds must be >= 1".into()));
        }
        if self.episodes < 1 {
            return Err(BenchError::Config("episodes must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(BenchError::Config(
                "at least one algorithm entry is required".into(),
            ));
        }
        for entry in &self.algorithms {
            if entry.mode == AgentMode::DpLsviUcbPP {
                match (entry.epsilon, entry.rho) {
                    (Some(e), None) if e > 0.0 => {}
                    (None, Some(r)) if r > 0.0 => {}
                    _ => {
                        return Err(BenchError::Config(
                            "private entries need a positive epsilon or rho".into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mean/std cumulative-regret curve for one algorithm entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub label: String,
    pub algorithm: String,
    pub epsilon: Option<f64>,
    /// Per-episode mean cumulative regret.
    pub mean: Vec<f64>,
    /// Per-episode sample standard deviation (0 for a single seed).
    pub std: Vec<f64>,
    /// Seeds contributing at each episode (shrinks if runs aborted).
    pub n: Vec<usize>,
    /// True when some contributing run aborted before the last episode.
    pub partial: bool,
}

impl AggregateCurve {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().unwrap_or(&0.0)
    }

    pub fn final_std(&self) -> f64 {
        *self.std.last().unwrap_or(&0.0)
    }
}

/// Aggregates the per-seed cumulative-regret traces of one entry.
pub fn aggregate_runs(label: &str, runs: &[&RunResult], episodes: usize) -> AggregateCurve {
    let mut mean = Vec::with_capacity(episodes);
    let mut std = Vec::with_capacity(episodes);
    let mut n = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let values: Vec<f64> = runs
            .iter()
            .filter_map(|r| r.episodes.get(e).map(|rec| rec.cumulative_regret))
            .collect();
        let count = values.len();
        let m = if count > 0 {
            values.iter().sum::<f64>() / count as f64
        } else {
            0.0
        };
        let s = if count > 1 {
            (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        std.push(s);
        n.push(count);
    }
    AggregateCurve {
        label: label.to_string(),
        algorithm: runs
            .first()
            .map(|r| r.algorithm.clone())
            .unwrap_or_default(),
        epsilon: runs.first().and_then(|r| r.epsilon),
        mean,
        std,
        n,
        partial: runs.iter().any(|r| r.aborted.is_some()),
    }
}

/// All artifacts of one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub spec: LinearMdpSpec,
    pub runs: Vec<RunResult>,
    pub aggregates: Vec<AggregateCurve>,
    pub partial: bool,
}

/// Builds the learner configuration for one entry and runs one seed.
pub fn run_one(
    spec: &LinearMdpSpec,
    entry: &AlgoEntry,
    episodes: usize,
    seed: u64,
    seed_index: usize,
) -> Result<RunResult, BenchError> {
    let d = spec.d;
    let horizon = spec.horizon;
    let vs = entry
        .variance_scale
        .unwrap_or_else(|| default_variance_scale(d, horizon));
    let mut result = match entry.mode {
        AgentMode::LsviUcb => {
            run_lsvi_ucb_baseline(spec, episodes, entry.lambda, entry.ucb_beta, seed)
        }
        AgentMode::LsviUcbPP => {
            let cfg = match entry.twin_of_epsilon {
                // Noise-free twin: the private configuration at the given
                // budget with the noise scales zeroed out.
                Some(eps) => {
                    let rho = dp_to_zcdp(eps, entry.delta_prime)?;
                    let calibration = NoiseCalibration::new(
                        rho,
                        horizon,
                        episodes.max(1),
                        d,
                        entry.utility_delta,
                        entry.c1,
                        entry.c2,
                    )?;
                    let mut cfg = AgentConfig::private(
                        d,
                        horizon,
                        episodes,
                        &calibration,
                        entry.utility_delta,
                        entry.radius_multiplier,
                        vs,
                        entry.noise_reuse,
                    )?;
                    cfg.mode = AgentMode::LsviUcbPP;
                    cfg.noise = None;
                    cfg
                }
                None => AgentConfig::non_private(
                    d,
                    horizon,
                    episodes,
                    entry.lambda,
                    entry.utility_delta,
                    entry.radius_multiplier,
                    vs,
                )?,
            };
            run_training(spec, &cfg, episodes, seed)
        }
        AgentMode::DpLsviUcbPP => {
            let rho = match (entry.epsilon, entry.rho) {
                (_, Some(r)) => r,
                (Some(e), None) => dp_to_zcdp(e, entry.delta_prime)?,
                (None, None) => {
                    return Err(BenchError::Config("private entry without a budget".into()))
                }
            };
            let calibration = NoiseCalibration::new(
                rho,
                horizon,
                episodes.max(1),
                d,
                entry.utility_delta,
                entry.c1,
                entry.c2,
            )?;
            let cfg = AgentConfig::private(
                d,
                horizon,
                episodes,
                &calibration,
                entry.utility_delta,
                entry.radius_multiplier,
                vs,
                entry.noise_reuse,
            )?;
            let mut r = run_training(spec, &cfg, episodes, seed);
            r.epsilon = Some(match entry.epsilon {
                Some(e) => e,
                None => zcdp_to_dp(rho, entry.delta_prime)?.epsilon,
            });
            r.delta_prime = Some(entry.delta_prime);
            r
        }
    };
    result.run_id = format!("{}-s{:02}", entry.label(), seed_index);
    Ok(result)
}

/// Runs `num_seeds` independent seeds of every algorithm entry, aggregates,
/// and writes artifacts when an output directory is configured. Aborted runs
/// are retained and mark their aggregate as partial; the suite continues.
pub fn run_suite(config: &ExperimentConfig) -> Result<SuiteResult, BenchError> {
    config.validate()?;
    let spec = config.instance.build();
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        return Err(BenchError::Config(format!(
            "generated instance failed validation: {}",
            violations[0]
        )));
    }
    let seeds: Vec<u64> = (0..config.num_seeds)
        .map(|i| split_seed(config.master_seed, i as u64))
        .collect();
    let mut runs = Vec::with_capacity(config.algorithms.len() * config.num_seeds);
    let mut aggregates = Vec::with_capacity(config.algorithms.len());
    for entry in &config.algorithms {
        let start = runs.len();
        for (i, &seed) in seeds.iter().enumerate() {
            runs.push(run_one(&spec, entry, config.episodes, seed, i)?);
        }
        let slice: Vec<&RunResult> = runs[start..].iter().collect();
        aggregates.push(aggregate_runs(&entry.label(), &slice, config.episodes));
    }
    let partial = aggregates.iter().any(|a| a.partial);
    let suite = SuiteResult {
        spec,
        runs,
        aggregates,
        partial,
    };
    if let Some(dir) = &config.out_dir {
        write_artifacts(config, &suite, dir)?;
    }
    Ok(suite)
}

/// Paired privacy-budget sweep: one private entry per `epsilon` (ascending,
/// positive) plus a zero-noise reference, all over identical seeds so curve
/// differences are attributable to the privacy calibration alone.
/// `template` supplies the non-budget knobs of the private entries. The
/// reference is the noise-free twin of the largest swept budget: identical
/// regularizer, noise-norm bound, and radii, with the noise injections
/// removed, which is the curve the private runs approach as the budget
/// grows.
pub fn sweep_epsilon(
    config: &ExperimentConfig,
    template: &AlgoEntry,
    epsilons: &[f64],
) -> Result<SuiteResult, BenchError> {
    if epsilons.is_empty() {
        return Err(BenchError::Config(
            "epsilon sweep needs at least one value".into(),
        ));
    }
    if epsilons.iter().any(|&e| e <= 0.0) {
        return Err(BenchError::Config("epsilons must be positive".into()));
    }
    if epsilons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::Config(
            "epsilons must be sorted ascending".into(),
        ));
    }
    let mut sweep = config.clone();
    sweep.algorithms = epsilons
        .iter()
        .map(|&e| AlgoEntry {
            mode: AgentMode::DpLsviUcbPP,
            epsilon: Some(e),
            rho: None,
            twin_of_epsilon: None,
            ..template.clone()
        })
        .collect();
    sweep.algorithms.push(AlgoEntry {
        mode: AgentMode::LsviUcbPP,
        epsilon: None,
        rho: None,
        twin_of_epsilon: Some(*epsilons.last().expect("nonempty")),
        ..template.clone()
    });
    run_suite(&sweep)
}

/// Renders the metadata sidecar: instance, suite settings, per-entry
/// configuration, the accountant report of every private entry, and any
/// abort records.
pub fn render_metadata(
    config: &ExperimentConfig,
    suite: &SuiteResult,
) -> Result<String, BenchError> {
    let mut out = String::new();
    let _ = writeln!(out, "instance = {}", config.instance.describe());
    let _ = writeln!(out, "episodes = {}", config.episodes);
    let _ = writeln!(out, "num_seeds = {}", config.num_seeds);
    let _ = writeln!(out, "master_seed = {}", config.master_seed);
    for entry in &config.algorithms {
        let _ = writeln!(out, "\n[algorithm {}]", entry.label());
        let _ = writeln!(out, "mode = {}", entry.mode.label());
        let _ = writeln!(out, "radius_multiplier = {}", entry.radius_multiplier);
        let vs = entry.variance_scale.unwrap_or_else(|| {
            default_variance_scale(config.instance.feature_dim(), config.instance.horizon)
        });
        let _ = writeln!(out, "variance_scale = {vs}");
        let _ = writeln!(out, "delta = {}", entry.utility_delta);
        match entry.mode {
            AgentMode::DpLsviUcbPP => {
                let rho = match (entry.epsilon, entry.rho) {
                    (_, Some(r)) => r,
                    (Some(e), None) => dp_to_zcdp(e, entry.delta_prime)?,
                    _ => unreachable!("validated"),
                };
                let calibration = NoiseCalibration::new(
                    rho,
                    config.instance.horizon,
                    config.episodes,
                    config.instance.feature_dim(),
                    entry.utility_delta,
                    entry.c1,
                    entry.c2,
                )?;
                let report = AccountantReport::new(
                    &calibration,
                    entry.delta_prime,
                    entry.noise_reuse.label(),
                )?;
                let _ = writeln!(out, "{report}");
            }
            AgentMode::LsviUcbPP => match entry.twin_of_epsilon {
                Some(eps) => {
                    let _ = writeln!(out, "zero_noise_twin_of_epsilon = {eps}");
                }
                None => {
                    let _ = writeln!(out, "lambda = {}", entry.lambda);
                }
            },
            AgentMode::LsviUcb => {
                let _ = writeln!(out, "lambda = {}", entry.lambda);
                let _ = writeln!(out, "ucb_beta = {}", entry.ucb_beta);
            }
        }
    }
    for run in &suite.runs {
        if let Some(abort) = &run.aborted {
            let _ = writeln!(
                out,
                "\naborted: run {} at episode {} stage {}: {}",
                run.run_id, abort.episode, abort.stage, abort.reason
            );
        }
    }
    Ok(out)
}

fn write_artifacts(
    config: &ExperimentConfig,
    suite: &SuiteResult,
    dir: &Path,
) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let runs_path = dir.join("runs.csv");
    fs::write(&runs_path, render_runs_csv(&suite.runs)).map_err(io_err(&runs_path))?;
    let agg_path = dir.join("aggregates.csv");
    fs::write(&agg_path, render_aggregates_csv(&suite.aggregates)).map_err(io_err(&agg_path))?;
    let meta_path = dir.join("metadata.txt");
    fs::write(&meta_path, render_metadata(config, suite)?).map_err(io_err(&meta_path))?;
    let inst_path = dir.join("instance.txt");
    fs::write(&inst_path, write_instance(&suite.spec)).map_err(io_err(&inst_path))?;
    if config.plot {
        let plot_path = dir.join("regret.svg");
        fs::write(&plot_path, render_svg(&suite.aggregates)).map_err(io_err(&plot_path))?;
    }
    Ok(())
}
