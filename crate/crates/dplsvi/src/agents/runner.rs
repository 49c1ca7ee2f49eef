//! Training loops and run records.
//!
//! One run is strictly sequential across episodes. Each episode performs a
//! backward pass (regression weights for every stage, plus optimistic and
//! pessimistic table refreshes when the rare-switching determinant condition
//! fires) followed by a forward pass (act greedily, estimate step variances,
//! accumulate the weighted Gram statistics, release the next private Gram).
//!
//! Per-episode regret is computed against the exact environment oracles, so
//! the traces are free of Monte Carlo error.

use super::{
    act, compute_d_from_norm, compute_e_from_norm, elliptical_floor_coeff,
    estimate_variance_scalar, sigma_and_bar_from_norm, solve_weights, switch_condition,
    AgentConfig, AgentError, GramFactor, NoiseReuse, StageState, WeightTriple,
};
use crate::dp::{sample_gaussian_vector, sample_goe_with_sigma, spectral_norm_symmetric};
use crate::linear_mdp::{
    exact_optimal_values, regret_against, sample_next_state, LinearMdpSpec, PolicySnapshot,
};
use crate::rng::{stream, StreamKind};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// One row of the per-episode regret trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    pub instant_regret: f64,
    pub cumulative_regret: f64,
    pub switch_count_so_far: usize,
}

/// Variance bookkeeping for one (episode, stage) step.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRecord {
    pub episode: usize,
    pub stage: usize,
    /// Clipped second-moment estimate.
    pub v_bar: f64,
    /// Estimation-error term (after the configured variance scaling).
    pub e_term: f64,
    /// Optimism-gap error term (after the configured variance scaling).
    pub d_term: f64,
    pub sigma: f64,
    pub sigma_bar: f64,
}

/// Optimistic and pessimistic tables captured at a switch episode.
#[derive(Debug, Clone, PartialEq)]
pub struct QSnapshot {
    pub episode: usize,
    /// `q_hat[h][s][a]`.
    pub q_hat: Vec<Vec<Vec<f64>>>,
    pub q_check: Vec<Vec<Vec<f64>>>,
}

/// Online invariant audit. Every counter should stay zero on a healthy run;
/// `q_cross_violations` may tick at desk-scale radii where the optimism and
/// pessimism envelopes are not guaranteed to nest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvariantCounters {
    pub q_hat_monotone_violations: usize,
    pub q_check_monotone_violations: usize,
    pub q_range_violations: usize,
    pub q_cross_violations: usize,
    pub sigma_floor_violations: usize,
    pub weight_norm_violations: usize,
    /// Zero-noise mode only: log-det exceeding the trace-based ceiling.
    pub det_ceiling_violations: usize,
    /// Zero-noise mode only: smallest Gram eigenvalue below `2 lambda`.
    pub lambda_floor_violations: usize,
    /// Released noise exceeding its utility bound (`L`, `H L`, or
    /// `lambda_tilde`).
    pub utility_noise_violations: usize,
}

/// Why and where a run stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAbort {
    pub episode: usize,
    pub stage: usize,
    pub reason: String,
}

/// Everything recorded about one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_id: String,
    pub algorithm: String,
    /// Privacy budget of the run, if private.
    pub epsilon: Option<f64>,
    pub delta_prime: Option<f64>,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub variance_records: Vec<VarianceRecord>,
    pub q_snapshots: Vec<QSnapshot>,
    pub counters: InvariantCounters,
    pub switch_count: usize,
    pub aborted: Option<RunAbort>,
}

impl RunResult {
    pub fn final_cumulative_regret(&self) -> f64 {
        self.episodes.last().map_or(0.0, |e| e.cumulative_regret)
    }
}

/// Per-(episode, stage) noise bundle: the three Gaussian vectors folded into
/// the regression targets, plus the GOE term for the next Gram release.
struct NoiseDraw {
    phi1: DVector<f64>,
    phi2: DVector<f64>,
    phi3: DVector<f64>,
}

struct NoisePlan {
    scales: super::NoiseScales,
    reuse: NoiseReuse,
    seed: u64,
    d: usize,
    /// Initialization-time draws for `once` mode.
    once_vectors: Option<NoiseDraw>,
    once_goe: Option<DMatrix<f64>>,
}

impl NoisePlan {
    fn new(config: &AgentConfig, d: usize, seed: u64) -> Self {
        let scales = config.scales();
        let (once_vectors, once_goe) = if config.noise_reuse == NoiseReuse::Once {
            let draw = NoiseDraw {
                phi1: sample_gaussian_vector(
                    d,
                    scales.sigma2_value_sum,
                    &mut stream(seed, StreamKind::ValueSum, 0, 0),
                ),
                phi2: sample_gaussian_vector(
                    d,
                    scales.sigma2_value_sum,
                    &mut stream(seed, StreamKind::CheckSum, 0, 0),
                ),
                phi3: sample_gaussian_vector(
                    d,
                    scales.sigma2_squared_value_sum,
                    &mut stream(seed, StreamKind::SquareSum, 0, 0),
                ),
            };
            let goe = sample_goe_with_sigma(
                d,
                scales.sigma2_goe_entry.sqrt(),
                &mut stream(seed, StreamKind::Gram, 0, 0),
            );
            (Some(draw), Some(goe))
        } else {
            (None, None)
        };
        NoisePlan {
            scales,
            reuse: config.noise_reuse,
            seed,
            d,
            once_vectors,
            once_goe,
        }
    }

    fn vectors(&self, episode: usize, stage: usize) -> NoiseDraw {
        match (self.reuse, &self.once_vectors) {
            (NoiseReuse::Once, Some(draw)) => NoiseDraw {
                phi1: draw.phi1.clone(),
                phi2: draw.phi2.clone(),
                phi3: draw.phi3.clone(),
            },
            _ => NoiseDraw {
                phi1: sample_gaussian_vector(
                    self.d,
                    self.scales.sigma2_value_sum,
                    &mut stream(
                        self.seed,
                        StreamKind::ValueSum,
                        episode as u64,
                        stage as u64,
                    ),
                ),
                phi2: sample_gaussian_vector(
                    self.d,
                    self.scales.sigma2_value_sum,
                    &mut stream(
                        self.seed,
                        StreamKind::CheckSum,
                        episode as u64,
                        stage as u64,
                    ),
                ),
                phi3: sample_gaussian_vector(
                    self.d,
                    self.scales.sigma2_squared_value_sum,
                    &mut stream(
                        self.seed,
                        StreamKind::SquareSum,
                        episode as u64,
                        stage as u64,
                    ),
                ),
            },
        }
    }

    /// GOE term inside the Gram released for `episode` (none before the
    /// first data arrives).
    fn goe_release(&self, episode: usize, stage: usize) -> DMatrix<f64> {
        if episode <= 1 {
            return DMatrix::zeros(self.d, self.d);
        }
        match (self.reuse, &self.once_goe) {
            (NoiseReuse::Once, Some(k1)) => k1.clone(),
            _ => sample_goe_with_sigma(
                self.d,
                self.scales.sigma2_goe_entry.sqrt(),
                &mut stream(self.seed, StreamKind::Gram, episode as u64, stage as u64),
            ),
        }
    }
}

fn value_row(q_table: &[Vec<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        q_table.len(),
        q_table
            .iter()
            .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
    )
}

fn greedy_policy_from_tables(stages: &[StageState]) -> PolicySnapshot {
    let actions = stages
        .iter()
        .map(|st| (0..st.q_hat.len()).map(|s| act(&st.q_hat, s)).collect())
        .collect();
    PolicySnapshot { actions }
}

fn snapshot_tables(stages: &[StageState], episode: usize) -> QSnapshot {
    QSnapshot {
        episode,
        q_hat: stages.iter().map(|st| st.q_hat.clone()).collect(),
        q_check: stages.iter().map(|st| st.q_check.clone()).collect(),
    }
}

/// Refreshes both tables of one stage from fresh weights. Clipping keeps the
/// optimistic table non-increasing in `[0, H]` and the pessimistic table
/// non-decreasing in `[0, H]`.
fn update_stage_q_tables(
    spec: &LinearMdpSpec,
    stage: &mut StageState,
    h: usize,
    weights: &WeightTriple,
    factor: &GramFactor,
    beta_hat: f64,
    beta_check: f64,
    counters: &mut InvariantCounters,
) -> Result<(), AgentError> {
    let horizon = spec.horizon as f64;
    for s in 0..spec.num_states {
        for a in 0..spec.num_actions {
            let phi = spec.feature(s, a);
            let r = spec
                .reward(h, s, a)
                .map_err(|e| AgentError::Argument(e.to_string()))?;
            let norm = factor.elliptical_norm(phi);
            let opt_est = r + weights.w_hat.dot(phi) + beta_hat * norm;
            let pess_est = r + weights.w_check.dot(phi) - beta_check * norm;
            let prev_hat = stage.q_hat[s][a];
            let prev_check = stage.q_check[s][a];
            let new_hat = opt_est.min(prev_hat).min(horizon).max(0.0);
            let new_check = pess_est.max(prev_check).max(0.0).min(horizon);
            if new_hat > prev_hat + 1e-12 {
                counters.q_hat_monotone_violations += 1;
            }
            if new_check < prev_check - 1e-12 {
                counters.q_check_monotone_violations += 1;
            }
            if !(0.0..=horizon + 1e-12).contains(&new_hat)
                || !(0.0..=horizon + 1e-12).contains(&new_check)
            {
                counters.q_range_violations += 1;
            }
            if new_check > new_hat + 1e-9 {
                counters.q_cross_violations += 1;
            }
            stage.q_hat[s][a] = new_hat;
            stage.q_check[s][a] = new_check;
        }
    }
    Ok(())
}

/// Runs the weighted-ridge learner (private or zero-noise) for `episodes`
/// episodes. Infallible by design: state corruption surfaces as an `aborted`
/// record with the truncated trace retained, as the benchmark requires.
pub fn run_training(
    spec: &LinearMdpSpec,
    config: &AgentConfig,
    episodes: usize,
    seed: u64,
) -> RunResult {
    let d = spec.d;
    let horizon = spec.horizon;
    let num_states = spec.num_states;
    let scales = config.scales();
    let zero_noise = scales.is_zero();
    let lambda_tilde = config.lambda_tilde;
    let vs = config.variance_scale;
    let floor_coeff = vs * elliptical_floor_coeff(d, horizon);
    let total_episodes = episodes.max(1);
    let weight_bound_hat = horizon as f64
        * total_episodes as f64
        * config.l_bound
        * (2.0 * d as f64 / lambda_tilde).sqrt();
    let weight_bound_bar = weight_bound_hat * horizon as f64;

    let mut result = RunResult {
        run_id: format!("{}-seed{:016x}", config.mode.label(), seed),
        algorithm: config.mode.label().to_string(),
        epsilon: None,
        delta_prime: None,
        seed,
        episodes: Vec::with_capacity(episodes),
        variance_records: Vec::with_capacity(episodes * horizon),
        q_snapshots: Vec::new(),
        counters: InvariantCounters::default(),
        switch_count: 0,
        aborted: None,
    };

    let optimal = match exact_optimal_values(spec) {
        Ok(v) => v,
        Err(e) => {
            result.aborted = Some(RunAbort {
                episode: 0,
                stage: 0,
                reason: e.to_string(),
            });
            return result;
        }
    };
    let v_star = optimal.v[0][spec.initial_state];

    let noise = NoisePlan::new(config, d, seed);
    let mut stages: Vec<StageState> = (0..horizon)
        .map(|_| StageState::new(d, num_states, spec.num_actions, horizon, lambda_tilde))
        .collect();
    // Whether the GOE term inside each stage's released Gram satisfied its
    // utility bound; the weight-norm bounds are only claimed under it.
    let mut goe_within_bound = vec![true; horizon];
    result.q_snapshots.push(snapshot_tables(&stages, 0));

    let mut cached_policy = greedy_policy_from_tables(&stages);
    let mut cached_regret = match regret_against(spec, v_star, &cached_policy) {
        Ok(r) => r,
        Err(e) => {
            result.aborted = Some(RunAbort {
                episode: 0,
                stage: 0,
                reason: e.to_string(),
            });
            return result;
        }
    };
    let mut cumulative = 0.0;

    'training: for k in 1..=episodes {
        // Factor the released Gram matrices and refresh log-determinants.
        let mut factors: Vec<GramFactor> = Vec::with_capacity(horizon);
        for (h, stage) in stages.iter_mut().enumerate() {
            match GramFactor::new(&stage.lambda) {
                Ok(f) => {
                    stage.logdet = f.logdet();
                    if zero_noise {
                        let ceiling =
                            d as f64 * (3.0 * lambda_tilde + (k as f64 - 1.0) / d as f64).ln();
                        if stage.logdet > ceiling + 1e-9 {
                            result.counters.det_ceiling_violations += 1;
                        }
                    }
                    factors.push(f);
                }
                Err(_) => {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: h,
                        reason:
                            "utility event failure: released Gram matrix lost positive definiteness"
                                .into(),
                    });
                    break 'training;
                }
            }
        }

        let switching = switch_condition(&stages);

        // Backward pass: weights for every stage; table refreshes when
        // switching. Stage h reads the (possibly just-updated) tables at
        // h + 1.
        let mut weights: Vec<Option<WeightTriple>> = (0..horizon).map(|_| None).collect();
        for h in (0..horizon).rev() {
            let (v_hat_next, v_check_next) = if h + 1 < horizon {
                (
                    value_row(&stages[h + 1].q_hat),
                    value_row(&stages[h + 1].q_check),
                )
            } else {
                (DVector::zeros(num_states), DVector::zeros(num_states))
            };
            let v_hat_sq = v_hat_next.map(|v| v * v);
            let draw = noise.vectors(k, h + 1);
            let l = config.l_bound;
            let mut vectors_within_bound = true;
            if draw.phi1.norm() > l || draw.phi2.norm() > l {
                result.counters.utility_noise_violations += 1;
                vectors_within_bound = false;
            }
            if draw.phi3.norm() > horizon as f64 * l {
                result.counters.utility_noise_violations += 1;
                vectors_within_bound = false;
            }
            let stage = &mut stages[h];
            stage.b_hat = &stage.next_state_accum * &v_hat_next + draw.phi1;
            stage.b_check = &stage.next_state_accum * &v_check_next + draw.phi2;
            stage.b_bar = &stage.next_state_accum * &v_hat_sq + draw.phi3;
            let triple = match solve_weights(
                &factors[h],
                &stage.lambda,
                &stage.b_hat,
                &stage.b_check,
                &stage.b_bar,
            ) {
                Ok(t) => t,
                Err(e) => {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: h,
                        reason: e.to_string(),
                    });
                    break 'training;
                }
            };
            if vectors_within_bound
                && goe_within_bound[h]
                && (triple.w_hat.norm() > weight_bound_hat + 1e-9
                    || triple.w_bar.norm() > weight_bound_bar + 1e-9)
            {
                result.counters.weight_norm_violations += 1;
            }
            if switching {
                if let Err(e) = update_stage_q_tables(
                    spec,
                    stage,
                    h,
                    &triple,
                    &factors[h],
                    config.radii.beta_hat,
                    config.radii.beta_check,
                    &mut result.counters,
                ) {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: h,
                        reason: e.to_string(),
                    });
                    break 'training;
                }
            }
            weights[h] = Some(triple);
        }

        if switching {
            result.switch_count += 1;
            for stage in &mut stages {
                stage.lambda_at_last_switch = stage.lambda.clone();
                stage.logdet_at_last_switch = stage.logdet;
            }
            result.q_snapshots.push(snapshot_tables(&stages, k));
            cached_policy = greedy_policy_from_tables(&stages);
            cached_regret = match regret_against(spec, v_star, &cached_policy) {
                Ok(r) => r,
                Err(e) => {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: 0,
                        reason: e.to_string(),
                    });
                    break 'training;
                }
            };
        }

        // Forward pass: play the greedy policy, estimate step variances,
        // accumulate statistics, release the next Gram matrices.
        let mut env_rng = stream(seed, StreamKind::Env, k as u64, 0);
        let mut s = spec.initial_state;
        for h in 0..horizon {
            let a = act(&stages[h].q_hat, s);
            let phi = spec.feature(s, a).clone();
            let triple = weights[h]
                .as_ref()
                .expect("weights computed in backward pass");
            let norm = factors[h].elliptical_norm(&phi);
            let w_hat_dot = triple.w_hat.dot(&phi);
            let w_check_dot = triple.w_check.dot(&phi);
            let w_bar_dot = triple.w_bar.dot(&phi);
            let v_bar = estimate_variance_scalar(w_hat_dot, w_bar_dot, horizon);
            let e_term = vs
                * compute_e_from_norm(config.radii.beta_bar, config.radii.beta_hat, norm, horizon);
            let d_term = vs
                * compute_d_from_norm(
                    w_hat_dot,
                    w_check_dot,
                    config.radii.beta_hat,
                    norm,
                    d,
                    horizon,
                );
            let (sigma, sigma_bar) =
                sigma_and_bar_from_norm(v_bar, e_term, d_term, horizon, floor_coeff, norm);
            if sigma_bar < horizon as f64 - 1e-12 {
                result.counters.sigma_floor_violations += 1;
            }
            result.variance_records.push(VarianceRecord {
                episode: k,
                stage: h,
                v_bar,
                e_term,
                d_term,
                sigma,
                sigma_bar,
            });

            let p = match spec.transition_distribution(h, s, a) {
                Ok(p) => p,
                Err(e) => {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: h,
                        reason: e.to_string(),
                    });
                    break 'training;
                }
            };
            let u: f64 = env_rng.gen();
            let next = sample_next_state(&p, u);

            let inv_w = 1.0 / (sigma_bar * sigma_bar);
            let stage = &mut stages[h];
            // Exact symmetric accumulation of the raw statistics.
            for i in 0..d {
                for j in i..d {
                    let v = stage.gram_raw[(i, j)] + inv_w * phi[i] * phi[j];
                    stage.gram_raw[(i, j)] = v;
                    stage.gram_raw[(j, i)] = v;
                }
            }
            for i in 0..d {
                stage.next_state_accum[(i, next)] += inv_w * phi[i];
            }

            // Release the Gram for episode k + 1: swap the GOE term of the
            // current release for a fresh one and add the new data rank-one.
            let goe_next = noise.goe_release(k + 1, h + 1);
            goe_within_bound[h] = scales.sigma2_goe_entry == 0.0
                || spectral_norm_symmetric(&goe_next) <= config.lambda_tilde;
            if !goe_within_bound[h] {
                result.counters.utility_noise_violations += 1;
            }
            let noise_delta = &goe_next - &stage.goe_current;
            match super::gram_update(&stage.lambda, sigma_bar, &phi, &noise_delta) {
                Ok(next_lambda) => {
                    stage.lambda = next_lambda;
                    stage.goe_current = goe_next;
                }
                Err(AgentError::NotPositiveDefinite) => {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: h,
                        reason:
                            "utility event failure: Gram update rejected (not positive definite)"
                                .into(),
                    });
                    break 'training;
                }
                Err(e) => {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: h,
                        reason: e.to_string(),
                    });
                    break 'training;
                }
            }
            if zero_noise {
                let min_eig = stage
                    .lambda
                    .clone()
                    .symmetric_eigen()
                    .eigenvalues
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                if min_eig < 2.0 * lambda_tilde - 1e-9 {
                    result.counters.lambda_floor_violations += 1;
                }
            }
            s = next;
        }
        if result.aborted.is_some() {
            break 'training;
        }

        cumulative += cached_regret;
        result.episodes.push(EpisodeRecord {
            episode: k,
            instant_regret: cached_regret,
            cumulative_regret: cumulative,
            switch_count_so_far: result.switch_count,
        });
    }
    result
}

/// Runs the unweighted Hoeffding-bonus baseline: plain ridge regression on
/// every stage, a single optimistic table recomputed from scratch each
/// episode, no rare switching.
pub fn run_lsvi_ucb_baseline(
    spec: &LinearMdpSpec,
    episodes: usize,
    lambda: f64,
    beta: f64,
    seed: u64,
) -> RunResult {
    let d = spec.d;
    let horizon = spec.horizon;
    let num_states = spec.num_states;

    let mut result = RunResult {
        run_id: format!("lsvi_ucb-seed{seed:016x}"),
        algorithm: "lsvi_ucb".to_string(),
        epsilon: None,
        delta_prime: None,
        seed,
        episodes: Vec::with_capacity(episodes),
        variance_records: Vec::new(),
        q_snapshots: Vec::new(),
        counters: InvariantCounters::default(),
        switch_count: 0,
        aborted: None,
    };
    if lambda <= 0.0 || beta < 0.0 {
        result.aborted = Some(RunAbort {
            episode: 0,
            stage: 0,
            reason: format!("invalid baseline parameters: lambda {lambda}, beta {beta}"),
        });
        return result;
    }

    let optimal = match exact_optimal_values(spec) {
        Ok(v) => v,
        Err(e) => {
            result.aborted = Some(RunAbort {
                episode: 0,
                stage: 0,
                reason: e.to_string(),
            });
            return result;
        }
    };
    let v_star = optimal.v[0][spec.initial_state];

    let mut grams: Vec<DMatrix<f64>> = (0..horizon)
        .map(|_| DMatrix::from_diagonal_element(d, d, lambda))
        .collect();
    let mut next_accums: Vec<DMatrix<f64>> = (0..horizon)
        .map(|_| DMatrix::zeros(d, num_states))
        .collect();
    let mut q: Vec<Vec<Vec<f64>>> =
        vec![vec![vec![horizon as f64; spec.num_actions]; num_states]; horizon];
    let mut cumulative = 0.0;

    'training: for k in 1..=episodes {
        // Backward pass, recomputed from scratch every episode.
        let mut factors = Vec::with_capacity(horizon);
        for (h, gram) in grams.iter().enumerate() {
            match GramFactor::new(gram) {
                Ok(f) => factors.push(f),
                Err(e) => {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: h,
                        reason: e.to_string(),
                    });
                    break 'training;
                }
            }
        }
        for h in (0..horizon).rev() {
            let v_next = if h + 1 < horizon {
                DVector::from_iterator(
                    num_states,
                    q[h + 1]
                        .iter()
                        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
                )
            } else {
                DVector::zeros(num_states)
            };
            let b = &next_accums[h] * &v_next;
            let w = factors[h].solve(&b);
            for s in 0..num_states {
                for a in 0..spec.num_actions {
                    let phi = spec.feature(s, a);
                    let r = match spec.reward(h, s, a) {
                        Ok(r) => r,
                        Err(e) => {
                            result.aborted = Some(RunAbort {
                                episode: k,
                                stage: h,
                                reason: e.to_string(),
                            });
                            break 'training;
                        }
                    };
                    let est = r + w.dot(phi) + beta * factors[h].elliptical_norm(phi);
                    q[h][s][a] = est.clamp(0.0, horizon as f64);
                }
            }
        }

        let policy = PolicySnapshot {
            actions: (0..horizon)
                .map(|h| (0..num_states).map(|s| act(&q[h], s)).collect())
                .collect(),
        };
        let instant = match regret_against(spec, v_star, &policy) {
            Ok(r) => r,
            Err(e) => {
                result.aborted = Some(RunAbort {
                    episode: k,
                    stage: 0,
                    reason: e.to_string(),
                });
                break 'training;
            }
        };

        let mut env_rng = stream(seed, StreamKind::Env, k as u64, 0);
        let mut s = spec.initial_state;
        for h in 0..horizon {
            let a = policy.action(h, s);
            let phi = spec.feature(s, a).clone();
            let p = match spec.transition_distribution(h, s, a) {
                Ok(p) => p,
                Err(e) => {
                    result.aborted = Some(RunAbort {
                        episode: k,
                        stage: h,
                        reason: e.to_string(),
                    });
                    break 'training;
                }
            };
            let u: f64 = env_rng.gen();
            let next = sample_next_state(&p, u);
            for i in 0..d {
                for j in i..d {
                    let v = grams[h][(i, j)] + phi[i] * phi[j];
                    grams[h][(i, j)] = v;
                    grams[h][(j, i)] = v;
                }
            }
            for i in 0..d {
                next_accums[h][(i, next)] += phi[i];
            }
            s = next;
        }
        if result.aborted.is_some() {
            break 'training;
        }

        result.switch_count = k;
        cumulative += instant;
        result.episodes.push(EpisodeRecord {
            episode: k,
            instant_regret: instant,
            cumulative_regret: cumulative,
            switch_count_so_far: k,
        });
    }
    result
}
