//! Privacy accounting and calibrated noise mechanisms.
//!
//! Accounting is done in zCDP: the run's total budget `rho` is split evenly
//! over the `4 * H * K` statistics the learner releases, each statistic is
//! privatized by a Gaussian (vectors) or GOE (Gram matrices) mechanism
//! calibrated to its l2 sensitivity, and adaptive composition plus the
//! zCDP-to-DP conversion give the reported `(epsilon, delta')` guarantee.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DpError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in (0, 1), got {value}")]
    NotAProbability { name: &'static str, value: f64 },
}

fn require_positive(name: &'static str, value: f64) -> Result<(), DpError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(DpError::NonPositive { name, value })
    }
}

fn require_probability(name: &'static str, value: f64) -> Result<(), DpError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(DpError::NotAProbability { name, value })
    }
}

/// The per-statistic share of a total zCDP budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZcdpBudget {
    pub rho_total: f64,
    /// Number of released statistics: `4 * H * K`.
    pub statistic_count: u64,
    /// `rho_total / statistic_count`.
    pub rho_per_statistic: f64,
}

/// Splits `rho` evenly over the `4 * H * K` statistics of one run.
pub fn per_statistic_budget(
    rho: f64,
    horizon: usize,
    episodes: usize,
) -> Result<ZcdpBudget, DpError> {
    require_positive("rho", rho)?;
    if horizon == 0 {
        return Err(DpError::NonPositive {
            name: "horizon",
            value: 0.0,
        });
    }
    if episodes == 0 {
        return Err(DpError::NonPositive {
            name: "episodes",
            value: 0.0,
        });
    }
    let statistic_count = 4 * horizon as u64 * episodes as u64;
    Ok(ZcdpBudget {
        rho_total: rho,
        statistic_count,
        rho_per_statistic: rho / statistic_count as f64,
    })
}

/// Gaussian-mechanism variance for releasing a statistic of the given l2
/// sensitivity at `rho0`-zCDP: `sigma^2 = Delta^2 / (2 rho0)`.
pub fn gaussian_sigma2_for_zcdp(l2_sensitivity: f64, rho0: f64) -> Result<f64, DpError> {
    require_positive("l2_sensitivity", l2_sensitivity)?;
    require_positive("rho0", rho0)?;
    Ok(l2_sensitivity * l2_sensitivity / (2.0 * rho0))
}

/// A converted `(epsilon, delta')`-DP guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpReport {
    pub epsilon: f64,
    pub delta_prime: f64,
    /// The zCDP level the guarantee was converted from.
    pub rho: f64,
}

/// Converts `rho`-zCDP to `(rho + 2 sqrt(rho ln(1/delta')), delta')`-DP.
pub fn zcdp_to_dp(rho: f64, delta_prime: f64) -> Result<DpReport, DpError> {
    if rho < 0.0 || !rho.is_finite() {
        return Err(DpError::NonPositive {
            name: "rho",
            value: rho,
        });
    }
    require_probability("delta_prime", delta_prime)?;
    let epsilon = rho + 2.0 * (rho * (1.0 / delta_prime).ln()).sqrt();
    Ok(DpReport {
        epsilon,
        delta_prime,
        rho,
    })
}

/// Inverts [`zcdp_to_dp`]: the unique `rho > 0` whose conversion at
/// `delta'` equals `epsilon`, via `sqrt(rho) = sqrt(ln(1/delta') + epsilon)
/// - sqrt(ln(1/delta'))`.
pub fn dp_to_zcdp(epsilon: f64, delta_prime: f64) -> Result<f64, DpError> {
    require_positive("epsilon", epsilon)?;
    require_probability("delta_prime", delta_prime)?;
    let log_term = (1.0 / delta_prime).ln();
    let sqrt_rho = (log_term + epsilon).sqrt() - log_term.sqrt();
    Ok(sqrt_rho * sqrt_rho)
}

/// Adaptive composition: the total budget of a sequence of zCDP releases is
/// the sum of their budgets.
pub fn compose_zcdp(rho_list: &[f64]) -> f64 {
    debug_assert!(rho_list.iter().all(|&r| r >= 0.0));
    rho_list.iter().sum()
}

/// Draws a vector with i.i.d. `N(0, sigma2)` entries. `sigma2 = 0` yields
/// the zero vector without consuming randomness, so a zero-noise run is
/// bit-identical to one that never sampled.
pub fn sample_gaussian_vector<R: Rng>(d: usize, sigma2: f64, rng: &mut R) -> DVector<f64> {
    assert!(d >= 1);
    assert!(sigma2 >= 0.0);
    if sigma2 == 0.0 {
        return DVector::zeros(d);
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("finite std");
    DVector::from_iterator(d, (0..d).map(|_| normal.sample(rng)))
}

/// Draws a GOE perturbation `(Z + Z^T) / sqrt(2)` with `Z_ij ~ N(0,
/// 1/(4 rho0))`. The result is exactly symmetric by construction: each
/// off-diagonal pair is written from a single combined draw. Entry variances
/// are `1/(4 rho0)` off the diagonal and `1/(2 rho0)` on it.
pub fn sample_goe<R: Rng>(d: usize, rho0: f64, rng: &mut R) -> DMatrix<f64> {
    assert!(d >= 1);
    assert!(rho0 > 0.0);
    let sigma = (1.0 / (4.0 * rho0)).sqrt();
    sample_goe_with_sigma(d, sigma, rng)
}

/// GOE sample parameterized by the entry standard deviation of `Z` directly.
/// `sigma = 0` yields the zero matrix without consuming randomness.
pub fn sample_goe_with_sigma<R: Rng>(d: usize, sigma: f64, rng: &mut R) -> DMatrix<f64> {
    assert!(d >= 1);
    assert!(sigma >= 0.0);
    let mut m = DMatrix::zeros(d, d);
    if sigma == 0.0 {
        return m;
    }
    let normal = Normal::new(0.0, sigma).expect("finite std");
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    // Z is drawn row-major; (i, j) and (j, i) combine into one value.
    let mut z = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            z[(i, j)] = normal.sample(rng);
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = (z[(i, j)] + z[(j, i)]) * inv_sqrt2;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// High-probability bound on the norm of each Gaussian noise vector:
/// `L = 4 H sqrt(d H K / rho * ln(10 d K H / delta))`.
pub fn utility_l(
    rho: f64,
    horizon: usize,
    episodes: usize,
    d: usize,
    delta: f64,
) -> Result<f64, DpError> {
    require_positive("rho", rho)?;
    require_positive("horizon", horizon as f64)?;
    require_positive("episodes", episodes as f64)?;
    require_positive("d", d as f64)?;
    require_probability("delta", delta)?;
    let (h, k, dd) = (horizon as f64, episodes as f64, d as f64);
    Ok(4.0 * h * (dd * h * k / rho * (10.0 * dd * k * h / delta).ln()).sqrt())
}

/// High-probability bound on the GOE spectral norm, doubling as the
/// regularizer scale: `lambda = sqrt(8 d H K / rho) * (2 +
/// (ln(5 c1 H / delta) / (c2 d))^(2/3))`.
pub fn utility_lambda_tilde(
    rho: f64,
    horizon: usize,
    episodes: usize,
    d: usize,
    delta: f64,
    c1: f64,
    c2: f64,
) -> Result<f64, DpError> {
    require_positive("rho", rho)?;
    require_positive("horizon", horizon as f64)?;
    require_positive("episodes", episodes as f64)?;
    require_positive("d", d as f64)?;
    require_probability("delta", delta)?;
    require_positive("c1", c1)?;
    require_positive("c2", c2)?;
    let (h, k, dd) = (horizon as f64, episodes as f64, d as f64);
    let head = (8.0 * dd * h * k / rho).sqrt();
    let tail = 2.0 + ((5.0 * c1 * h / delta).ln() / (c2 * dd)).powf(2.0 / 3.0);
    Ok(head * tail)
}

/// All privacy-derived constants consumed by one private run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    pub rho_total: f64,
    pub rho0: f64,
    /// Variance for the two value-sum statistics (sensitivity `2H`).
    pub sigma2_value_sum: f64,
    /// Variance for the squared-value-sum statistic (sensitivity `2H^2`).
    pub sigma2_squared_value_sum: f64,
    /// Per-entry variance of the GOE generator matrix `Z`.
    pub sigma2_goe_entry: f64,
    /// Utility bound on the Gaussian vector norms.
    pub l_bound: f64,
    /// Regularizer / GOE spectral bound.
    pub lambda_tilde: f64,
    pub c1: f64,
    pub c2: f64,
}

impl NoiseCalibration {
    /// Calibrates every noise scale and utility constant for a run of
    /// `episodes` episodes at horizon `horizon` under total budget `rho`.
    pub fn new(
        rho: f64,
        horizon: usize,
        episodes: usize,
        d: usize,
        delta: f64,
        c1: f64,
        c2: f64,
    ) -> Result<Self, DpError> {
        let budget = per_statistic_budget(rho, horizon, episodes)?;
        let rho0 = budget.rho_per_statistic;
        let h = horizon as f64;
        Ok(NoiseCalibration {
            rho_total: rho,
            rho0,
            sigma2_value_sum: gaussian_sigma2_for_zcdp(2.0 * h, rho0)?,
            sigma2_squared_value_sum: gaussian_sigma2_for_zcdp(2.0 * h * h, rho0)?,
            sigma2_goe_entry: 1.0 / (4.0 * rho0),
            l_bound: utility_l(rho, horizon, episodes, d, delta)?,
            lambda_tilde: utility_lambda_tilde(rho, horizon, episodes, d, delta, c1, c2)?,
            c1,
            c2,
        })
    }
}

/// The accountant's report for one run, emitted into run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountantReport {
    pub rho_total: f64,
    pub rho_per_statistic: f64,
    pub epsilon: f64,
    pub delta_prime: f64,
    pub l_bound: f64,
    pub lambda_tilde: f64,
    pub c1: f64,
    pub c2: f64,
    /// `fresh` or `once`.
    pub noise_mode: String,
}

impl AccountantReport {
    pub fn new(
        calibration: &NoiseCalibration,
        delta_prime: f64,
        noise_mode: &str,
    ) -> Result<Self, DpError> {
        let report = zcdp_to_dp(calibration.rho_total, delta_prime)?;
        Ok(AccountantReport {
            rho_total: calibration.rho_total,
            rho_per_statistic: calibration.rho0,
            epsilon: report.epsilon,
            delta_prime,
            l_bound: calibration.l_bound,
            lambda_tilde: calibration.lambda_tilde,
            c1: calibration.c1,
            c2: calibration.c2,
            noise_mode: noise_mode.to_string(),
        })
    }
}

impl fmt::Display for AccountantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rho_total = {}", self.rho_total)?;
        writeln!(f, "rho_per_statistic = {}", self.rho_per_statistic)?;
        writeln!(f, "epsilon = {}", self.epsilon)?;
        writeln!(f, "delta_prime = {}", self.delta_prime)?;
        writeln!(f, "L = {}", self.l_bound)?;
        writeln!(f, "lambda_tilde = {}", self.lambda_tilde)?;
        writeln!(f, "c1 = {}", self.c1)?;
        writeln!(f, "c2 = {}", self.c2)?;
        write!(f, "noise_freshness = {}", self.noise_mode)
    }
}

/// Largest magnitude among the eigenvalues of a symmetric matrix.
pub fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
}
