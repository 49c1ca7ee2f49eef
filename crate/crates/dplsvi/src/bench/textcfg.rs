//! Flat `key = value` configuration files mirroring the CLI flags.
//!
//! Precedence: CLI flags override file values, file values override the
//! built-in defaults. Keys use the long flag names (kebab-case).

use super::{
    default_instance_config, AlgoEntry, BenchError, ExperimentConfig, InstanceConfig, InstanceKind,
    DEFAULT_DELTA_PRIME, DEFAULT_EPISODES, DEFAULT_MASTER_SEED, DEFAULT_NUM_SEEDS,
    DEFAULT_PP_LAMBDA, DEFAULT_RADIUS_MULTIPLIER, DEFAULT_UCB_BETA, DEFAULT_UCB_LAMBDA,
    DEFAULT_UTILITY_DELTA,
};
use crate::agents::{AgentMode, NoiseReuse};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Every tunable of the harness, all optional so that layers can be merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawOptions {
    pub instance: Option<String>,
    pub states: Option<usize>,
    pub actions: Option<usize>,
    pub feature_dim: Option<usize>,
    pub horizon: Option<usize>,
    pub instance_seed: Option<u64>,
    pub episodes: Option<usize>,
    pub seeds: Option<usize>,
    pub master_seed: Option<u64>,
    pub algo: Option<Vec<String>>,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    pub delta_prime: Option<f64>,
    pub delta: Option<f64>,
    pub radius_mult: Option<f64>,
    pub variance_scale: Option<f64>,
    pub lambda: Option<f64>,
    pub ucb_beta: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub noise_reuse: Option<String>,
    pub epsilons: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub plot: Option<bool>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, BenchError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| BenchError::Config(format!("bad value for {key}: {e}")))
}

/// Parses a `key = value` file. Blank lines and `#` comments are ignored.
pub fn parse_kv_file(path: &Path) -> Result<RawOptions, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_kv(&text)
}

pub fn parse_kv(text: &str) -> Result<RawOptions, BenchError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            BenchError::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    let mut opts = RawOptions::default();
    for (key, value) in &map {
        match key.as_str() {
            "instance" => opts.instance = Some(value.clone()),
            "states" => opts.states = Some(parse_num(key, value)?),
            "actions" => opts.actions = Some(parse_num(key, value)?),
            "feature-dim" => opts.feature_dim = Some(parse_num(key, value)?),
            "horizon" => opts.horizon = Some(parse_num(key, value)?),
            "instance-seed" => opts.instance_seed = Some(parse_num(key, value)?),
            "episodes" => opts.episodes = Some(parse_num(key, value)?),
            "seeds" => opts.seeds = Some(parse_num(key, value)?),
            "master-seed" => opts.master_seed = Some(parse_num(key, value)?),
            "algo" => opts.algo = Some(value.split(',').map(|s| s.trim().to_string()).collect()),
            "epsilon" => opts.epsilon = Some(parse_num(key, value)?),
            "rho" => opts.rho = Some(parse_num(key, value)?),
            "delta-prime" => opts.delta_prime = Some(parse_num(key, value)?),
            "delta" => opts.delta = Some(parse_num(key, value)?),
            "radius-mult" => opts.radius_mult = Some(parse_num(key, value)?),
            "variance-scale" => opts.variance_scale = Some(parse_num(key, value)?),
            "lambda" => opts.lambda = Some(parse_num(key, value)?),
            "ucb-beta" => opts.ucb_beta = Some(parse_num(key, value)?),
            "c1" => opts.c1 = Some(parse_num(key, value)?),
            "c2" => opts.c2 = Some(parse_num(key, value)?),
            "noise-reuse" => opts.noise_reuse = Some(value.clone()),
            "epsilons" => {
                let parsed: Result<Vec<f64>, _> =
                    value.split(',').map(|s| s.trim().parse::<f64>()).collect();
                opts.epsilons =
                    Some(parsed.map_err(|e| BenchError::Config(format!("bad epsilons: {e}")))?);
            }
            "out" => opts.out = Some(PathBuf::from(value)),
            "plot" => opts.plot = Some(parse_num(key, value)?),
            other => return Err(BenchError::Config(format!("unknown key: {other}"))),
        }
    }
    Ok(opts)
}

impl RawOptions {
    /// Overlays `self` (higher precedence) on `base`.
    pub fn over(self, base: RawOptions) -> RawOptions {
        RawOptions {
            instance: self.instance.or(base.instance),
            states: self.states.or(base.states),
            actions: self.actions.or(base.actions),
            feature_dim: self.feature_dim.or(base.feature_dim),
            horizon: self.horizon.or(base.horizon),
            instance_seed: self.instance_seed.or(base.instance_seed),
            episodes: self.episodes.or(base.episodes),
            seeds: self.seeds.or(base.seeds),
            master_seed: self.master_seed.or(base.master_seed),
            algo: self.algo.or(base.algo),
            epsilon: self.epsilon.or(base.epsilon),
            rho: self.rho.or(base.rho),
            delta_prime: self.delta_prime.or(base.delta_prime),
            delta: self.delta.or(base.delta),
            radius_mult: self.radius_mult.or(base.radius_mult),
            variance_scale: self.variance_scale.or(base.variance_scale),
            lambda: self.lambda.or(base.lambda),
            ucb_beta: self.ucb_beta.or(base.ucb_beta),
            c1: self.c1.or(base.c1),
            c2: self.c2.or(base.c2),
            noise_reuse: self.noise_reuse.or(base.noise_reuse),
            epsilons: self.epsilons.or(base.epsilons),
            out: self.out.or(base.out),
            plot: self.plot.or(base.plot),
        }
    }

    pub fn instance_config(&self) -> Result<InstanceConfig, BenchError> {
        let defaults = default_instance_config();
        let kind = match self.instance.as_deref().unwrap_or("tabular") {
            "tabular" => InstanceKind::Tabular {
                states: self.states.unwrap_or(3),
                actions: self.actions.unwrap_or(4),
            },
            "lowrank" => InstanceKind::LowRank {
                d: self.feature_dim.unwrap_or(3),
                states: self.states.unwrap_or(4),
                actions: self.actions.unwrap_or(3),
            },
            other => {
                return Err(BenchError::Config(format!(
                    "unknown instance kind: {other} (expected tabular or lowrank)"
                )))
            }
        };
        Ok(InstanceConfig {
            kind,
            horizon: self.horizon.unwrap_or(defaults.horizon),
            seed: self.instance_seed.unwrap_or(defaults.seed),
        })
    }

    fn noise_reuse(&self) -> Result<NoiseReuse, BenchError> {
        match self.noise_reuse.as_deref() {
            None | Some("fresh") => Ok(NoiseReuse::Fresh),
            Some("once") => Ok(NoiseReuse::Once),
            Some(other) => Err(BenchError::Config(format!(
                "unknown noise-reuse mode: {other} (expected fresh or once)"
            ))),
        }
    }

    /// One algorithm entry with this option set's knobs applied.
    pub fn entry_for(&self, mode: AgentMode) -> Result<AlgoEntry, BenchError> {
        let default_lambda = match mode {
            AgentMode::LsviUcb => DEFAULT_UCB_LAMBDA,
            _ => DEFAULT_PP_LAMBDA,
        };
        Ok(AlgoEntry {
            mode,
            epsilon: if mode == AgentMode::DpLsviUcbPP {
                self.epsilon
                    .or(if self.rho.is_none() { Some(1.0) } else { None })
            } else {
                None
            },
            rho: if mode == AgentMode::DpLsviUcbPP {
                self.rho
            } else {
                None
            },
            twin_of_epsilon: None,
            delta_prime: self.delta_prime.unwrap_or(DEFAULT_DELTA_PRIME),
            utility_delta: self.delta.unwrap_or(DEFAULT_UTILITY_DELTA),
            radius_multiplier: self.radius_mult.unwrap_or(DEFAULT_RADIUS_MULTIPLIER),
            variance_scale: self.variance_scale,
            lambda: self.lambda.unwrap_or(default_lambda),
            ucb_beta: self.ucb_beta.unwrap_or(DEFAULT_UCB_BETA),
            noise_reuse: self.noise_reuse()?,
            c1: self.c1.unwrap_or(1.0),
            c2: self.c2.unwrap_or(1.0),
        })
    }

    /// Resolves into a full experiment, with `algo` selecting the entries
    /// (`dp`, `pp`, `ucb`).
    pub fn experiment(&self) -> Result<ExperimentConfig, BenchError> {
        let mut config = ExperimentConfig::new(
            self.instance_config()?,
            self.episodes.unwrap_or(DEFAULT_EPISODES),
            self.seeds.unwrap_or(DEFAULT_NUM_SEEDS),
        );
        config.master_seed = self.master_seed.unwrap_or(DEFAULT_MASTER_SEED);
        config.out_dir = self.out.clone();
        config.plot = self.plot.unwrap_or(false);
        let names = self.algo.clone().unwrap_or_else(|| vec!["pp".to_string()]);
        for name in &names {
            let mode = match name.as_str() {
                "dp" => AgentMode::DpLsviUcbPP,
                "pp" => AgentMode::LsviUcbPP,
                "ucb" => AgentMode::LsviUcb,
                other => {
                    return Err(BenchError::Config(format!(
                        "unknown algorithm: {other} (expected dp, pp, or ucb)"
                    )))
                }
            };
            config.algorithms.push(self.entry_for(mode)?);
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_merges_layers() {
        let file = parse_kv(
            "# comment\nepisodes = 500\nseeds = 3\nalgo = pp, ucb\nlambda = 2.0\nplot = true\n",
        )
        .unwrap();
        let mut cli = RawOptions::default();
        cli.episodes = Some(100);
        let merged = cli.over(file);
        assert_eq!(merged.episodes, Some(100)); // CLI wins
        assert_eq!(merged.seeds, Some(3)); // file fills the rest
        let config = merged.experiment().unwrap();
        assert_eq!(config.episodes, 100);
        assert_eq!(config.num_seeds, 3);
        assert_eq!(config.algorithms.len(), 2);
        assert_eq!(config.algorithms[0].lambda, 2.0);
        assert!(config.plot);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(parse_kv("nonsense = 1\n").is_err());
        assert!(parse_kv("episodes\n").is_err());
        assert!(parse_kv("episodes = many\n").is_err());
        let mut opts = RawOptions::default();
        opts.algo = Some(vec!["zzz".into()]);
        assert!(opts.experiment().is_err());
        opts.algo = None;
        opts.instance = Some("weird".into());
        assert!(opts.experiment().is_err());
        opts.instance = None;
        opts.noise_reuse = Some("never".into());
        opts.algo = Some(vec!["dp".into()]);
        assert!(opts.experiment().is_err());
    }

    #[test]
    fn default_experiment_matches_bench_defaults() {
        let config = RawOptions::default().experiment().unwrap();
        assert_eq!(config.episodes, DEFAULT_EPISODES);
        assert_eq!(config.num_seeds, DEFAULT_NUM_SEEDS);
        assert_eq!(config.instance, default_instance_config());
        assert_eq!(config.algorithms.len(), 1);
        assert_eq!(config.algorithms[0].mode, AgentMode::LsviUcbPP);
    }

    #[test]
    fn dp_entry_defaults_to_epsilon_one() {
        let mut opts = RawOptions::default();
        opts.algo = Some(vec!["dp".into()]);
        let config = opts.experiment().unwrap();
        assert_eq!(config.algorithms[0].epsilon, Some(1.0));

        opts.rho = Some(0.5);
        let config = opts.experiment().unwrap();
        assert_eq!(config.algorithms[0].epsilon, None);
        assert_eq!(config.algorithms[0].rho, Some(0.5));
    }
}
