//! The learners: DP-LSVI-UCB++ with privatized weighted ridge regression,
//! variance estimation, rare switching, and optimistic/pessimistic value
//! iteration; a zero-noise LSVI-UCB++ mode; and a Hoeffding-bonus LSVI-UCB
//! baseline.
//!
//! This module holds the stateless numeric operations and configuration
//! types; the training loops live in [`runner`].

mod runner;

pub use runner::{
    run_lsvi_ucb_baseline, run_training, EpisodeRecord, InvariantCounters, QSnapshot, RunAbort,
    RunResult, VarianceRecord,
};

use crate::dp::NoiseCalibration;
use crate::linear_mdp::argmax;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("Gram matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("linear solve residual {residual:.3e} exceeds {tol:.3e}")]
    SolveResidual { residual: f64, tol: f64 },
}

/// Which learner to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentMode {
    /// Privatized weighted-ridge learner.
    DpLsviUcbPP,
    /// The same recursions with all noise removed.
    LsviUcbPP,
    /// Unweighted ridge with a Hoeffding bonus, updated every episode.
    LsviUcb,
}

impl AgentMode {
    pub fn label(&self) -> &'static str {
        match self {
            AgentMode::DpLsviUcbPP => "dp_lsvi_ucb_pp",
            AgentMode::LsviUcbPP => "lsvi_ucb_pp",
            AgentMode::LsviUcb => "lsvi_ucb",
        }
    }
}

/// Whether privatization noise is resampled per released statistic or the
/// literal initialization-time draws are reused for every release.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseReuse {
    Fresh,
    Once,
}

impl NoiseReuse {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseReuse::Fresh => "fresh",
            NoiseReuse::Once => "once",
        }
    }
}

/// The four confidence radii. `beta_hat` and `beta_check` share one formula,
/// `beta_bar` scales it for squared values, and `beta_bern` is the sharper
/// Bernstein-type radius (reported, not used by the update rules).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRadii {
    pub beta_hat: f64,
    pub beta_check: f64,
    pub beta_bar: f64,
    pub beta_bern: f64,
}

/// Evaluates the radii at their defining expressions, scaled by a single
/// configurable multiplier (the leading constants are not pinned by theory).
pub fn compute_confidence_radii(
    d: usize,
    horizon: usize,
    episodes: usize,
    l_bound: f64,
    lambda_tilde: f64,
    delta: f64,
    multiplier: f64,
) -> Result<ConfidenceRadii, AgentError> {
    for (name, v) in [
        ("d", d as f64),
        ("horizon", horizon as f64),
        ("episodes", episodes as f64),
        ("l_bound", l_bound),
        ("lambda_tilde", lambda_tilde),
        ("delta", delta),
        ("multiplier", multiplier),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(AgentError::Argument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let (dd, h, k) = (d as f64, horizon as f64, episodes as f64);
    let log_arg = h * k.powi(4) * l_bound * l_bound * dd / (delta * lambda_tilde);
    let log_sq = log_arg.ln().powi(2);
    let hat = multiplier
        * (h * l_bound * (dd * lambda_tilde).sqrt() + (dd.powi(3) * h * h * log_sq).sqrt());
    let bar = multiplier
        * (h * h * l_bound * l_bound * (dd * lambda_tilde).sqrt()
            + (dd.powi(3) * h.powi(4) * log_sq).sqrt());
    let bern_log_sq = (1.0 + log_arg).ln().powi(2);
    let bern = multiplier * (h * l_bound * (dd * lambda_tilde).sqrt() + (dd * bern_log_sq).sqrt());
    Ok(ConfidenceRadii {
        beta_hat: hat,
        beta_check: hat,
        beta_bar: bar,
        beta_bern: bern,
    })
}

/// Noise variances actually injected at runtime. All zeros in the
/// non-private modes, which makes a noise-free private run bit-identical to
/// the non-private one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScales {
    pub sigma2_value_sum: f64,
    pub sigma2_squared_value_sum: f64,
    pub sigma2_goe_entry: f64,
}

impl NoiseScales {
    pub fn zero() -> Self {
        NoiseScales {
            sigma2_value_sum: 0.0,
            sigma2_squared_value_sum: 0.0,
            sigma2_goe_entry: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma2_value_sum == 0.0
            && self.sigma2_squared_value_sum == 0.0
            && self.sigma2_goe_entry == 0.0
    }
}

/// Full learner configuration for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub mode: AgentMode,
    pub radii: ConfidenceRadii,
    pub radius_multiplier: f64,
    /// Regularizer scale: the Gram matrices start at `2 * lambda_tilde * I`.
    /// For non-private modes this is the plain ridge parameter.
    pub lambda_tilde: f64,
    /// Noise-norm bound entering the radii (`1` in non-private modes).
    pub l_bound: f64,
    /// Failure probability for the radii and utility bounds.
    pub delta: f64,
    /// Injected noise; `None` for non-private modes.
    pub noise: Option<NoiseScales>,
    pub noise_reuse: NoiseReuse,
    /// Desk-scale factor on the variance-correction terms `E`, `D` and the
    /// elliptical floor coefficient of `sigma_bar`. `1.0` is the literal
    /// theoretical calibration; benchmark configs shrink it so the cubic-in-d
    /// constants do not freeze the Gram accumulation at small scale.
    pub variance_scale: f64,
}

impl AgentConfig {
    /// Zero-noise weighted-ridge learner (`lsvi_ucb_pp`).
    pub fn non_private(
        d: usize,
        horizon: usize,
        episodes: usize,
        lambda: f64,
        delta: f64,
        radius_multiplier: f64,
        variance_scale: f64,
    ) -> Result<Self, AgentError> {
        let radii =
            compute_confidence_radii(d, horizon, episodes, 1.0, lambda, delta, radius_multiplier)?;
        Ok(AgentConfig {
            mode: AgentMode::LsviUcbPP,
            radii,
            radius_multiplier,
            lambda_tilde: lambda,
            l_bound: 1.0,
            delta,
            noise: None,
            noise_reuse: NoiseReuse::Fresh,
            variance_scale,
        })
    }

    /// Private learner configured from a noise calibration.
    pub fn private(
        d: usize,
        horizon: usize,
        episodes: usize,
        calibration: &NoiseCalibration,
        delta: f64,
        radius_multiplier: f64,
        variance_scale: f64,
        noise_reuse: NoiseReuse,
    ) -> Result<Self, AgentError> {
        let radii = compute_confidence_radii(
            d,
            horizon,
            episodes,
            calibration.l_bound,
            calibration.lambda_tilde,
            delta,
            radius_multiplier,
        )?;
        Ok(AgentConfig {
            mode: AgentMode::DpLsviUcbPP,
            radii,
            radius_multiplier,
            lambda_tilde: calibration.lambda_tilde,
            l_bound: calibration.l_bound,
            delta,
            noise: Some(NoiseScales {
                sigma2_value_sum: calibration.sigma2_value_sum,
                sigma2_squared_value_sum: calibration.sigma2_squared_value_sum,
                sigma2_goe_entry: calibration.sigma2_goe_entry,
            }),
            noise_reuse,
            variance_scale,
        })
    }

    pub(crate) fn scales(&self) -> NoiseScales {
        self.noise.unwrap_or_else(NoiseScales::zero)
    }
}

/// The three regression weight vectors of one (episode, stage).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTriple {
    pub w_hat: DVector<f64>,
    pub w_check: DVector<f64>,
    pub w_bar: DVector<f64>,
}

/// Per-stage learner state.
#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    /// The released Gram matrix currently driving the regression,
    /// `2 lambda I + gram_raw + goe_current`.
    pub lambda: DMatrix<f64>,
    pub lambda_at_last_switch: DMatrix<f64>,
    pub logdet: f64,
    pub logdet_at_last_switch: f64,
    /// Exact weighted feature outer-product sum (no regularizer, no noise).
    pub gram_raw: DMatrix<f64>,
    /// `d x |S|` accumulator: column `s'` holds `sum sigma_bar^-2 phi` over
    /// past steps whose next state was `s'`. Regression targets are read off
    /// by one matrix-vector product against the current value table.
    pub next_state_accum: DMatrix<f64>,
    /// GOE noise inside `lambda` (zero matrix before the first release).
    pub goe_current: DMatrix<f64>,
    pub b_hat: DVector<f64>,
    pub b_check: DVector<f64>,
    pub b_bar: DVector<f64>,
    /// Optimistic table, `q_hat[s][a]`, clipped to `[0, H]`, pointwise
    /// non-increasing across episodes.
    pub q_hat: Vec<Vec<f64>>,
    /// Pessimistic table, pointwise non-decreasing across episodes.
    pub q_check: Vec<Vec<f64>>,
}

impl StageState {
    pub fn new(
        d: usize,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        lambda_tilde: f64,
    ) -> Self {
        let lambda = DMatrix::from_diagonal_element(d, d, 2.0 * lambda_tilde);
        let logdet = d as f64 * (2.0 * lambda_tilde).ln();
        StageState {
            lambda: lambda.clone(),
            lambda_at_last_switch: lambda,
            logdet,
            logdet_at_last_switch: logdet,
            gram_raw: DMatrix::zeros(d, d),
            next_state_accum: DMatrix::zeros(d, num_states),
            goe_current: DMatrix::zeros(d, d),
            b_hat: DVector::zeros(d),
            b_check: DVector::zeros(d),
            b_bar: DVector::zeros(d),
            q_hat: vec![vec![horizon as f64; num_actions]; num_states],
            q_check: vec![vec![0.0; num_actions]; num_states],
        }
    }
}

/// Cholesky factorization of a released Gram matrix, reused for solves and
/// elliptical norms within one episode.
pub struct GramFactor {
    chol: Cholesky<f64, Dyn>,
}

impl GramFactor {
    pub fn new(lambda: &DMatrix<f64>) -> Result<Self, AgentError> {
        let chol = Cholesky::new(lambda.clone()).ok_or(AgentError::NotPositiveDefinite)?;
        Ok(GramFactor { chol })
    }

    /// `log det` via the factor diagonal.
    pub fn logdet(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Elliptical norm `sqrt(phi^T Lambda^-1 phi)`.
    pub fn elliptical_norm(&self, phi: &DVector<f64>) -> f64 {
        let x = self.chol.solve(phi);
        phi.dot(&x).max(0.0).sqrt()
    }
}

/// Log-determinant of a symmetric positive-definite matrix.
pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64, AgentError> {
    Ok(GramFactor::new(m)?.logdet())
}

/// Elliptical norm `sqrt(phi^T Lambda^-1 phi)` for a PD `Lambda`.
pub fn elliptical_norm(lambda: &DMatrix<f64>, phi: &DVector<f64>) -> Result<f64, AgentError> {
    Ok(GramFactor::new(lambda)?.elliptical_norm(phi))
}

/// Solves the three ridge systems `Lambda x = b` for one (episode, stage).
/// The `b` vectors must already carry their privatization noise. Residuals
/// beyond `1e-8 * ||b||` are a state-corruption error.
pub fn compute_weights(
    lambda: &DMatrix<f64>,
    b_hat: &DVector<f64>,
    b_check: &DVector<f64>,
    b_bar: &DVector<f64>,
) -> Result<WeightTriple, AgentError> {
    let factor = GramFactor::new(lambda)?;
    solve_weights(&factor, lambda, b_hat, b_check, b_bar)
}

pub(crate) fn solve_weights(
    factor: &GramFactor,
    lambda: &DMatrix<f64>,
    b_hat: &DVector<f64>,
    b_check: &DVector<f64>,
    b_bar: &DVector<f64>,
) -> Result<WeightTriple, AgentError> {
    let solve_checked = |b: &DVector<f64>| -> Result<DVector<f64>, AgentError> {
        let x = factor.solve(b);
        let residual = (lambda * &x - b).norm();
        let tol = 1e-8 * b.norm();
        if residual > tol && residual > 0.0 {
            return Err(AgentError::SolveResidual { residual, tol });
        }
        Ok(x)
    };
    Ok(WeightTriple {
        w_hat: solve_checked(b_hat)?,
        w_check: solve_checked(b_check)?,
        w_bar: solve_checked(b_bar)?,
    })
}

fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.clamp(lo, hi)
}

/// Clipped second-moment estimate: `[w_bar . phi]_[0,H^2] -
/// ([w_hat . phi]_[0,H])^2`. Lands in `[-H^2, H^2]`.
pub fn estimate_variance(
    w_hat: &DVector<f64>,
    w_bar: &DVector<f64>,
    phi: &DVector<f64>,
    horizon: usize,
) -> f64 {
    estimate_variance_scalar(w_hat.dot(phi), w_bar.dot(phi), horizon)
}

pub(crate) fn estimate_variance_scalar(w_hat_dot: f64, w_bar_dot: f64, horizon: usize) -> f64 {
    let h = horizon as f64;
    let first = clip(w_bar_dot, 0.0, h * h);
    let second = clip(w_hat_dot, 0.0, h);
    first - second * second
}

/// Error between the estimated and true variance of the optimistic value:
/// `min(beta_bar * n, H^2) + min(2 H beta_hat * n, H^2)` where `n` is the
/// elliptical feature norm. Lands in `[0, 2 H^2]`.
pub fn compute_e(
    beta_bar: f64,
    beta_hat: f64,
    phi: &DVector<f64>,
    lambda: &DMatrix<f64>,
    horizon: usize,
) -> Result<f64, AgentError> {
    Ok(compute_e_from_norm(
        beta_bar,
        beta_hat,
        elliptical_norm(lambda, phi)?,
        horizon,
    ))
}

pub(crate) fn compute_e_from_norm(beta_bar: f64, beta_hat: f64, norm: f64, horizon: usize) -> f64 {
    let h2 = (horizon * horizon) as f64;
    (beta_bar * norm).min(h2) + (2.0 * horizon as f64 * beta_hat * norm).min(h2)
}

/// Error between the optimistic-value variance and the optimal-value
/// variance, driven by the optimism/pessimism gap. The inner expression is
/// clamped below at zero (sampling noise can transiently push the gap
/// negative, while the quantity bounds a variance). Lands in `[0, d^3 H^3]`.
pub fn compute_d(
    w_hat: &DVector<f64>,
    w_check: &DVector<f64>,
    beta_hat: f64,
    phi: &DVector<f64>,
    lambda: &DMatrix<f64>,
    d: usize,
    horizon: usize,
) -> Result<f64, AgentError> {
    let norm = elliptical_norm(lambda, phi)?;
    Ok(compute_d_from_norm(
        w_hat.dot(phi),
        w_check.dot(phi),
        beta_hat,
        norm,
        d,
        horizon,
    ))
}

pub(crate) fn compute_d_from_norm(
    w_hat_dot: f64,
    w_check_dot: f64,
    beta_hat: f64,
    norm: f64,
    d: usize,
    horizon: usize,
) -> f64 {
    let (dd, h) = (d as f64, horizon as f64);
    let inner = (w_hat_dot - w_check_dot + 2.0 * beta_hat * norm).max(0.0);
    (4.0 * dd.powi(3) * h * h * inner).min(dd.powi(3) * h.powi(3))
}

/// The elliptical floor coefficient `2 d^3 H^2` of the regularized variance.
pub fn elliptical_floor_coeff(d: usize, horizon: usize) -> f64 {
    2.0 * (d as f64).powi(3) * (horizon as f64).powi(2)
}

/// Estimated and regularized standard deviations for one step:
/// `sigma = sqrt(max(v_bar + e + d_err + H, 0))` and
/// `sigma_bar = max(sigma, H, 2 d^3 H^2 * n^(1/2))`.
pub fn sigma_and_bar(
    v_bar: f64,
    e_term: f64,
    d_term: f64,
    horizon: usize,
    d: usize,
    phi: &DVector<f64>,
    lambda: &DMatrix<f64>,
) -> Result<(f64, f64), AgentError> {
    let norm = elliptical_norm(lambda, phi)?;
    Ok(sigma_and_bar_from_norm(
        v_bar,
        e_term,
        d_term,
        horizon,
        elliptical_floor_coeff(d, horizon),
        norm,
    ))
}

pub(crate) fn sigma_and_bar_from_norm(
    v_bar: f64,
    e_term: f64,
    d_term: f64,
    horizon: usize,
    floor_coeff: f64,
    norm: f64,
) -> (f64, f64) {
    let h = horizon as f64;
    let radicand = (v_bar + e_term + d_term + h).max(0.0);
    let sigma = radicand.sqrt();
    let sigma_bar = sigma.max(h).max(floor_coeff * norm.sqrt());
    (sigma, sigma_bar)
}

/// Tolerance protecting the inclusive determinant-doubling boundary from
/// float rounding in the log domain.
const SWITCH_SLACK: f64 = 1e-12;

/// True iff some stage's released Gram determinant has at least doubled
/// since the last switch, compared in the log domain.
pub fn switch_condition(stages: &[StageState]) -> bool {
    stages
        .iter()
        .any(|st| st.logdet >= st.logdet_at_last_switch + std::f64::consts::LN_2 - SWITCH_SLACK)
}

/// Greedy action for state `s`, ties broken toward the lowest index.
pub fn act(q_table: &[Vec<f64>], s: usize) -> usize {
    argmax(&q_table[s])
}

/// One released-Gram step: `Lambda + sigma_bar^-2 phi phi^T + noise`, built
/// exactly symmetric and verified positive definite before acceptance.
pub fn gram_update(
    lambda: &DMatrix<f64>,
    sigma_bar: f64,
    phi: &DVector<f64>,
    noise_sym: &DMatrix<f64>,
) -> Result<DMatrix<f64>, AgentError> {
    if sigma_bar <= 0.0 {
        return Err(AgentError::Argument(format!(
            "sigma_bar must be positive, got {sigma_bar}"
        )));
    }
    let d = lambda.nrows();
    let w = 1.0 / (sigma_bar * sigma_bar);
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = lambda[(i, j)] + w * phi[i] * phi[j] + noise_sym[(i, j)];
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    if Cholesky::new(out.clone()).is_none() {
        return Err(AgentError::NotPositiveDefinite);
    }
    Ok(out)
}
