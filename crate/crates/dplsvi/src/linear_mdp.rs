//! Exact finite episodic linear MDPs.
//!
//! A linear MDP carries a known feature map `phi(s, a)` in `R^d`, per-stage
//! measures `mu_h` (a `d x |S|` matrix) and reward parameters `theta_h`, so
//! that transitions are `P_h(.|s,a) = <phi(s,a), mu_h(.)>` and rewards are
//! `r_h(s,a) = <phi(s,a), theta_h>`. Everything here is exact and finite:
//! transition rows are recoverable to float precision, and value functions
//! are computed by brute-force backward induction, which is what makes the
//! regret numbers in the benchmark trustworthy.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::fmt;
use thiserror::Error;

/// Tolerance on a transition row summing to one.
pub const PROB_TOL: f64 = 1e-9;
/// Window within which tiny numeric excursions are clamped instead of
/// rejected.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("{what} index {got} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        got: usize,
        limit: usize,
    },
    #[error("probability mass violation at (h={h}, s={s}, a={a}): row sums to {sum:.17e}")]
    ProbabilityMass {
        h: usize,
        s: usize,
        a: usize,
        sum: f64,
    },
    #[error("negative transition probability at (h={h}, s={s}, a={a}, next={next}): {value:.17e}")]
    NegativeProbability {
        h: usize,
        s: usize,
        a: usize,
        next: usize,
        value: f64,
    },
    #[error("reward out of [0,1] at (h={h}, s={s}, a={a}): {value:.17e}")]
    RewardRange {
        h: usize,
        s: usize,
        a: usize,
        value: f64,
    },
    #[error("instance parse error: {0}")]
    Parse(String),
}

/// A violation reported by [`validate_spec`]. Each variant names the broken
/// invariant and the indices where it was observed.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecViolation {
    FeatureNorm {
        s: usize,
        a: usize,
        norm: f64,
    },
    NegativeMass {
        h: usize,
        s: usize,
        a: usize,
        next: usize,
        value: f64,
    },
    MassSum {
        h: usize,
        s: usize,
        a: usize,
        sum: f64,
    },
    RewardRange {
        h: usize,
        s: usize,
        a: usize,
        value: f64,
    },
    MeasureNorm {
        h: usize,
        norm: f64,
        bound: f64,
    },
    ThetaNorm {
        h: usize,
        norm: f64,
        bound: f64,
    },
}

impl fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecViolation::FeatureNorm { s, a, norm } => {
                write!(f, "||phi({s},{a})||_2 = {norm} exceeds 1")
            }
            SpecViolation::NegativeMass {
                h,
                s,
                a,
                next,
                value,
            } => {
                write!(
                    f,
                    "P_{h}({next}|{s},{a}) = {value} is negative beyond tolerance"
                )
            }
            SpecViolation::MassSum { h, s, a, sum } => {
                write!(f, "P_{h}(.|{s},{a}) sums to {sum}, not 1")
            }
            SpecViolation::RewardRange { h, s, a, value } => {
                write!(f, "r_{h}({s},{a}) = {value} outside [0,1]")
            }
            SpecViolation::MeasureNorm { h, norm, bound } => {
                write!(f, "||mu_{h}(S)||_2 = {norm} exceeds sqrt(d) = {bound}")
            }
            SpecViolation::ThetaNorm { h, norm, bound } => {
                write!(f, "||theta_{h}||_2 = {norm} exceeds sqrt(d) = {bound}")
            }
        }
    }
}

/// An exact finite linear MDP instance.
///
/// Immutable after construction; safe to share across concurrent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMdpSpec {
    /// Feature dimension.
    pub d: usize,
    /// Horizon (number of stages per episode).
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    /// Feature vectors, indexed by `s * num_actions + a`.
    features: Vec<DVector<f64>>,
    /// Per-stage measure matrices, each `d x num_states`.
    mu: Vec<DMatrix<f64>>,
    /// Per-stage reward parameters, each of length `d`.
    theta: Vec<DVector<f64>>,
    /// Fixed initial state for every episode.
    pub initial_state: usize,
}

/// One step of a rolled-out episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// A full episode: exactly `horizon` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

/// A deterministic greedy policy: one action per (stage, state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicySnapshot {
    /// `actions[h][s]` is the action taken in state `s` at stage `h`.
    pub actions: Vec<Vec<usize>>,
}

impl PolicySnapshot {
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }

    /// The policy that plays `a` everywhere.
    pub fn constant(horizon: usize, num_states: usize, a: usize) -> Self {
        PolicySnapshot {
            actions: vec![vec![a; num_states]; horizon],
        }
    }
}

/// Optimal value tables from backward induction.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValues {
    /// `q[h][s][a]` = Q*_h(s,a).
    pub q: Vec<Vec<Vec<f64>>>,
    /// `v[h][s]` = V*_h(s); `v[horizon]` is the all-zero boundary row.
    pub v: Vec<Vec<f64>>,
}

impl OptimalValues {
    /// Greedy policy w.r.t. Q*, ties broken toward the lowest action index.
    pub fn greedy_policy(&self) -> PolicySnapshot {
        let actions = self
            .q
            .iter()
            .map(|per_state| per_state.iter().map(|row| argmax(row)).collect())
            .collect();
        PolicySnapshot { actions }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl LinearMdpSpec {
    /// Assembles an instance from raw parts. Shape errors panic (these are
    /// programming errors); semantic violations are reported by
    /// [`validate_spec`].
    pub fn new(
        d: usize,
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        features: Vec<DVector<f64>>,
        mu: Vec<DMatrix<f64>>,
        theta: Vec<DVector<f64>>,
        initial_state: usize,
    ) -> Self {
        assert!(d >= 1 && horizon >= 1 && num_states >= 1 && num_actions >= 1);
        assert_eq!(features.len(), num_states * num_actions);
        assert!(features.iter().all(|p| p.len() == d));
        assert_eq!(mu.len(), horizon);
        assert!(mu.iter().all(|m| m.nrows() == d && m.ncols() == num_states));
        assert_eq!(theta.len(), horizon);
        assert!(theta.iter().all(|t| t.len() == d));
        assert!(initial_state < num_states);
        LinearMdpSpec {
            d,
            horizon,
            num_states,
            num_actions,
            features,
            mu,
            theta,
            initial_state,
        }
    }

    #[inline]
    pub fn sa_index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    /// Feature vector `phi(s, a)`.
    pub fn feature(&self, s: usize, a: usize) -> &DVector<f64> {
        &self.features[self.sa_index(s, a)]
    }

    pub fn mu(&self, h: usize) -> &DMatrix<f64> {
        &self.mu[h]
    }

    pub fn theta(&self, h: usize) -> &DVector<f64> {
        &self.theta[h]
    }

    fn check_indices(&self, h: usize, s: usize, a: usize) -> Result<(), MdpError> {
        if h >= self.horizon {
            return Err(MdpError::IndexOutOfRange {
                what: "stage",
                got: h,
                limit: self.horizon,
            });
        }
        if s >= self.num_states {
            return Err(MdpError::IndexOutOfRange {
                what: "state",
                got: s,
                limit: self.num_states,
            });
        }
        if a >= self.num_actions {
            return Err(MdpError::IndexOutOfRange {
                what: "action",
                got: a,
                limit: self.num_actions,
            });
        }
        Ok(())
    }

    /// Transition distribution `P_h(.|s,a)` as a probability vector.
    ///
    /// Entries within `-CLAMP_TOL` of zero are clamped to zero and the row is
    /// renormalized when its sum is within `PROB_TOL` of one; anything worse
    /// is a validation error naming the offending indices.
    pub fn transition_distribution(
        &self,
        h: usize,
        s: usize,
        a: usize,
    ) -> Result<Vec<f64>, MdpError> {
        self.check_indices(h, s, a)?;
        let phi = self.feature(s, a);
        let raw = self.mu[h].tr_mul(phi);
        let mut p = Vec::with_capacity(self.num_states);
        for (next, &v) in raw.iter().enumerate() {
            if v < -CLAMP_TOL {
                return Err(MdpError::NegativeProbability {
                    h,
                    s,
                    a,
                    next,
                    value: v,
                });
            }
            p.push(v.max(0.0));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(MdpError::ProbabilityMass { h, s, a, sum });
        }
        // Renormalize only beyond machine scale, so exactly-stored rows come
        // back bit-identical.
        if (sum - 1.0).abs() > CLAMP_TOL {
            for v in &mut p {
                *v /= sum;
            }
        }
        Ok(p)
    }

    /// Deterministic reward `r_h(s,a) = <phi(s,a), theta_h>`, clamped to
    /// `[0,1]` only within `CLAMP_TOL` of the boundary.
    pub fn reward(&self, h: usize, s: usize, a: usize) -> Result<f64, MdpError> {
        self.check_indices(h, s, a)?;
        let r = self.feature(s, a).dot(&self.theta[h]);
        if !(-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&r) {
            return Err(MdpError::RewardRange { h, s, a, value: r });
        }
        Ok(r.clamp(0.0, 1.0))
    }
}

/// Checks every instance invariant and returns the list of violations
/// (empty when the instance is valid).
pub fn validate_spec(spec: &LinearMdpSpec) -> Vec<SpecViolation> {
    let mut out = Vec::new();
    let sqrt_d = (spec.d as f64).sqrt();
    for s in 0..spec.num_states {
        for a in 0..spec.num_actions {
            let norm = spec.feature(s, a).norm();
            if norm > 1.0 + CLAMP_TOL {
                out.push(SpecViolation::FeatureNorm { s, a, norm });
            }
        }
    }
    for h in 0..spec.horizon {
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                let phi = spec.feature(s, a);
                let row = spec.mu[h].tr_mul(phi);
                let mut sum = 0.0;
                for (next, &v) in row.iter().enumerate() {
                    if v < -CLAMP_TOL {
                        out.push(SpecViolation::NegativeMass {
                            h,
                            s,
                            a,
                            next,
                            value: v,
                        });
                    }
                    sum += v;
                }
                if (sum - 1.0).abs() > PROB_TOL {
                    out.push(SpecViolation::MassSum { h, s, a, sum });
                }
                let r = phi.dot(&spec.theta[h]);
                if !(-CLAMP_TOL..=1.0 + CLAMP_TOL).contains(&r) {
                    out.push(SpecViolation::RewardRange { h, s, a, value: r });
                }
            }
        }
        // Total measure mu_h(S) as a d-vector: sum of columns.
        let total = spec.mu[h].column_sum();
        let norm = total.norm();
        if norm > sqrt_d + 1e-9 {
            out.push(SpecViolation::MeasureNorm {
                h,
                norm,
                bound: sqrt_d,
            });
        }
        let tnorm = spec.theta[h].norm();
        if tnorm > sqrt_d + 1e-9 {
            out.push(SpecViolation::ThetaNorm {
                h,
                norm: tnorm,
                bound: sqrt_d,
            });
        }
    }
    out
}

fn dirichlet_uniform<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    // Dirichlet(1,...,1) via normalized unit exponentials.
    let mut e: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>();
            -(1.0 - u).ln()
        })
        .collect();
    let sum: f64 = e.iter().sum();
    for v in &mut e {
        *v /= sum;
    }
    e
}

/// Builds a tabular MDP as a linear MDP with one-hot features
/// (`d = |S| * |A|`). Transition rows are Dirichlet-uniform over states and
/// rewards are uniform in `[0,1]`, all drawn from `rng` in a fixed order.
pub fn make_tabular_instance<R: Rng>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut R,
) -> LinearMdpSpec {
    assert!(num_states * num_actions >= 1);
    let d = num_states * num_actions;
    let mut features = Vec::with_capacity(d);
    for i in 0..d {
        let mut phi = DVector::zeros(d);
        phi[i] = 1.0;
        features.push(phi);
    }
    let mut mu = Vec::with_capacity(horizon);
    let mut theta = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut m = DMatrix::zeros(d, num_states);
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = dirichlet_uniform(num_states, rng);
                let i = s * num_actions + a;
                for (next, &p) in row.iter().enumerate() {
                    m[(i, next)] = p;
                }
            }
        }
        mu.push(m);
        let t = DVector::from_iterator(d, (0..d).map(|_| rng.gen::<f64>()));
        theta.push(t);
    }
    LinearMdpSpec::new(d, horizon, num_states, num_actions, features, mu, theta, 0)
}

/// Builds a low-rank instance: each `phi(s,a)` is a point in the
/// `d`-simplex and each stage has `d` anchor distributions over states, so
/// every transition row is an explicit convex combination of anchor rows.
pub fn make_low_rank_instance<R: Rng>(
    d: usize,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rng: &mut R,
) -> LinearMdpSpec {
    assert!(d >= 1 && num_states >= 1 && num_actions >= 1);
    let features: Vec<DVector<f64>> = (0..num_states * num_actions)
        .map(|_| DVector::from_vec(dirichlet_uniform(d, rng)))
        .collect();
    let mut mu = Vec::with_capacity(horizon);
    let mut theta = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut m = DMatrix::zeros(d, num_states);
        for j in 0..d {
            let anchor = dirichlet_uniform(num_states, rng);
            for (next, &p) in anchor.iter().enumerate() {
                m[(j, next)] = p;
            }
        }
        mu.push(m);
        theta.push(DVector::from_iterator(d, (0..d).map(|_| rng.gen::<f64>())));
    }
    LinearMdpSpec::new(d, horizon, num_states, num_actions, features, mu, theta, 0)
}

/// Draws the next state by inverse CDF on a single uniform variate.
pub fn sample_next_state(p: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &v) in p.iter().enumerate() {
        cum += v;
        if u < cum {
            return i;
        }
    }
    p.len() - 1
}

/// Rolls out one episode under a deterministic policy, consuming exactly one
/// uniform draw per stage (fixed order, for reproducibility).
pub fn sample_episode<R: Rng>(
    spec: &LinearMdpSpec,
    policy: &PolicySnapshot,
    rng: &mut R,
) -> Result<Trajectory, MdpError> {
    let mut steps = Vec::with_capacity(spec.horizon);
    let mut s = spec.initial_state;
    for h in 0..spec.horizon {
        let a = policy.action(h, s);
        let reward = spec.reward(h, s, a)?;
        let p = spec.transition_distribution(h, s, a)?;
        let u: f64 = rng.gen::<f64>();
        let next = sample_next_state(&p, u);
        steps.push(Step {
            state: s,
            action: a,
            reward,
            next_state: next,
        });
        s = next;
    }
    Ok(Trajectory { steps })
}

/// Backward induction for `Q*` and `V*` from `V*_{H+1} = 0`.
pub fn exact_optimal_values(spec: &LinearMdpSpec) -> Result<OptimalValues, MdpError> {
    let mut v = vec![vec![0.0; spec.num_states]; spec.horizon + 1];
    let mut q = vec![vec![vec![0.0; spec.num_actions]; spec.num_states]; spec.horizon];
    for h in (0..spec.horizon).rev() {
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                let r = spec.reward(h, s, a)?;
                let p = spec.transition_distribution(h, s, a)?;
                let cont: f64 = p.iter().zip(&v[h + 1]).map(|(pi, vi)| pi * vi).sum();
                q[h][s][a] = r + cont;
            }
            v[h][s] = q[h][s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(OptimalValues { q, v })
}

/// Exact value `V^pi_1(initial_state)` of a deterministic policy.
pub fn exact_policy_value(spec: &LinearMdpSpec, policy: &PolicySnapshot) -> Result<f64, MdpError> {
    let mut v_next = vec![0.0; spec.num_states];
    for h in (0..spec.horizon).rev() {
        let mut v = vec![0.0; spec.num_states];
        for s in 0..spec.num_states {
            let a = policy.action(h, s);
            let r = spec.reward(h, s, a)?;
            let p = spec.transition_distribution(h, s, a)?;
            let cont: f64 = p.iter().zip(&v_next).map(|(pi, vi)| pi * vi).sum();
            v[s] = r + cont;
        }
        v_next = v;
    }
    Ok(v_next[spec.initial_state])
}

/// Exact value of the uniform-random policy, used as the no-learning
/// baseline in the benchmark.
pub fn exact_uniform_policy_value(spec: &LinearMdpSpec) -> Result<f64, MdpError> {
    let inv_a = 1.0 / spec.num_actions as f64;
    let mut v_next = vec![0.0; spec.num_states];
    for h in (0..spec.horizon).rev() {
        let mut v = vec![0.0; spec.num_states];
        for s in 0..spec.num_states {
            let mut acc = 0.0;
            for a in 0..spec.num_actions {
                let r = spec.reward(h, s, a)?;
                let p = spec.transition_distribution(h, s, a)?;
                let cont: f64 = p.iter().zip(&v_next).map(|(pi, vi)| pi * vi).sum();
                acc += r + cont;
            }
            v[s] = acc * inv_a;
        }
        v_next = v;
    }
    Ok(v_next[spec.initial_state])
}

/// Per-episode regret `V*_1(s0) - V^pi_1(s0)` of a deployed policy.
/// Negative values within `1e-10` (float noise) are clamped to zero.
pub fn per_episode_regret(spec: &LinearMdpSpec, policy: &PolicySnapshot) -> Result<f64, MdpError> {
    let opt = exact_optimal_values(spec)?;
    let v_star = opt.v[0][spec.initial_state];
    regret_against(spec, v_star, policy)
}

/// Same as [`per_episode_regret`] with `V*_1(s0)` precomputed, so callers in
/// a training loop do not re-run the optimal backward induction each episode.
pub fn regret_against(
    spec: &LinearMdpSpec,
    v_star_initial: f64,
    policy: &PolicySnapshot,
) -> Result<f64, MdpError> {
    let v_pi = exact_policy_value(spec, policy)?;
    let gap = v_star_initial - v_pi;
    debug_assert!(gap >= -1e-10, "policy value above optimal: gap = {gap}");
    Ok(gap.max(0.0))
}

// ---------------------------------------------------------------------------
// Flat text serialization
// ---------------------------------------------------------------------------

fn push_row(out: &mut String, row: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        // 17 significant digits: enough to reload every f64 bit-exactly.
        out.push_str(&format!("{:.16e}", v));
        first = false;
    }
    out.push('\n');
}

/// Serializes an instance to the flat text format: one header line
/// `d H |S| |A| s0`, then the feature matrix (one `(s,a)` row per line),
/// the per-stage `mu` matrices (row-major), and the per-stage `theta`
/// vectors, all in decimal with 17 significant digits.
pub fn write_instance(spec: &LinearMdpSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} {} {} {} {}\n",
        spec.d, spec.horizon, spec.num_states, spec.num_actions, spec.initial_state
    ));
    for s in 0..spec.num_states {
        for a in 0..spec.num_actions {
            push_row(&mut out, spec.feature(s, a).iter().cloned());
        }
    }
    for h in 0..spec.horizon {
        for i in 0..spec.d {
            push_row(&mut out, spec.mu[h].row(i).iter().cloned());
        }
    }
    for h in 0..spec.horizon {
        push_row(&mut out, spec.theta[h].iter().cloned());
    }
    out
}

/// Parses the format emitted by [`write_instance`].
pub fn parse_instance(text: &str) -> Result<LinearMdpSpec, MdpError> {
    let mut tokens = text.split_whitespace();
    let mut next_usize = |what: &str| -> Result<usize, MdpError> {
        tokens
            .next()
            .ok_or_else(|| MdpError::Parse(format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|e| MdpError::Parse(format!("bad {what}: {e}")))
    };
    let d = next_usize("d")?;
    let horizon = next_usize("H")?;
    let num_states = next_usize("|S|")?;
    let num_actions = next_usize("|A|")?;
    let initial_state = next_usize("s0")?;
    if d == 0 || horizon == 0 || num_states == 0 || num_actions == 0 {
        return Err(MdpError::Parse("zero dimension in header".into()));
    }
    if initial_state >= num_states {
        return Err(MdpError::Parse("initial state out of range".into()));
    }
    let mut rest = text.split_whitespace().skip(5);
    let mut next_f64 = |what: &str| -> Result<f64, MdpError> {
        rest.next()
            .ok_or_else(|| MdpError::Parse(format!("missing value in {what}")))?
            .parse::<f64>()
            .map_err(|e| MdpError::Parse(format!("bad value in {what}: {e}")))
    };
    let mut features = Vec::with_capacity(num_states * num_actions);
    for _ in 0..num_states * num_actions {
        let mut phi = DVector::zeros(d);
        for j in 0..d {
            phi[j] = next_f64("features")?;
        }
        features.push(phi);
    }
    let mut mu = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut m = DMatrix::zeros(d, num_states);
        for i in 0..d {
            for j in 0..num_states {
                m[(i, j)] = next_f64("mu")?;
            }
        }
        mu.push(m);
    }
    let mut theta = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut t = DVector::zeros(d);
        for j in 0..d {
            t[j] = next_f64("theta")?;
        }
        theta.push(t);
    }
    if rest.next().is_some() {
        return Err(MdpError::Parse("trailing data after theta block".into()));
    }
    Ok(LinearMdpSpec::new(
        d,
        horizon,
        num_states,
        num_actions,
        features,
        mu,
        theta,
        initial_state,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamKind};
    use approx::assert_relative_eq;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        stream(seed, StreamKind::Instance, 0, 0)
    }

    /// Hand-built 2-state 1-action chain with stored transition rows
    /// `(p00, p01)` and `(0, 1)`.
    fn two_state_chain(p00: f64, p01: f64) -> LinearMdpSpec {
        // Tabular layout: d = 2, features one-hot per (s, a).
        let features = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ];
        let mu = vec![DMatrix::from_row_slice(2, 2, &[p00, p01, 0.0, 1.0])];
        let theta = vec![DVector::from_vec(vec![0.7, 0.2])];
        LinearMdpSpec::new(2, 1, 2, 1, features, mu, theta, 0)
    }

    #[test]
    fn tabular_transition_selects_stored_row() {
        let spec = two_state_chain(0.3, 0.7);
        let p = spec.transition_distribution(0, 0, 0).unwrap();
        assert_eq!(p, vec![0.3, 0.7]);
    }

    #[test]
    fn single_state_mdp_is_trivial() {
        let features = vec![DVector::from_vec(vec![1.0])];
        let mu = vec![DMatrix::from_row_slice(1, 1, &[1.0])];
        let theta = vec![DVector::from_vec(vec![0.5])];
        let spec = LinearMdpSpec::new(1, 1, 1, 1, features, mu, theta, 0);
        assert_eq!(spec.transition_distribution(0, 0, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn low_rank_transition_matches_scalar_loop() {
        let mut r = rng(11);
        let spec = make_low_rank_instance(3, 4, 2, 2, &mut r);
        for h in 0..2 {
            for s in 0..4 {
                for a in 0..2 {
                    let p = spec.transition_distribution(h, s, a).unwrap();
                    // Independent oracle: scalar-loop inner products.
                    let phi = spec.feature(s, a);
                    for next in 0..4 {
                        let mut dot = 0.0;
                        for j in 0..3 {
                            dot += phi[j] * spec.mu(h)[(j, next)];
                        }
                        assert_relative_eq!(p[next], dot, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn reward_matches_scalar_loop_and_trivial_cases() {
        let spec = two_state_chain(0.5, 0.5);
        assert_eq!(spec.reward(0, 0, 0).unwrap(), 0.7);

        let mut r = rng(3);
        let low = make_low_rank_instance(3, 4, 2, 1, &mut r);
        for s in 0..4 {
            for a in 0..2 {
                let phi = low.feature(s, a);
                let mut dot = 0.0;
                for j in 0..3 {
                    dot += phi[j] * low.theta(0)[j];
                }
                assert_relative_eq!(low.reward(0, s, a).unwrap(), dot, epsilon = 1e-12);
            }
        }

        // Zero parameter gives zero reward.
        let mut zero = low.clone();
        zero.theta[0].fill(0.0);
        assert_eq!(zero.reward(0, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn validate_flags_constructed_violations() {
        let mut r = rng(5);
        let spec = make_tabular_instance(2, 2, 2, &mut r);
        assert!(validate_spec(&spec).is_empty());

        // Scale one mu row by 1.5: exactly one mass-sum violation there.
        let mut bad = spec.clone();
        let i = bad.sa_index(1, 0);
        for next in 0..2 {
            bad.mu[1][(i, next)] *= 1.5;
        }
        let violations = validate_spec(&bad);
        let mass: Vec<_> = violations
            .iter()
            .filter(|v| {
                matches!(
                    v,
                    SpecViolation::MassSum {
                        h: 1,
                        s: 1,
                        a: 0,
                        ..
                    }
                )
            })
            .collect();
        assert_eq!(mass.len(), 1);
        // The inflated row also pushes the total measure past sqrt(d).
        assert!(violations.iter().all(|v| matches!(
            v,
            SpecViolation::MassSum { .. } | SpecViolation::MeasureNorm { .. }
        )));

        // Reward parameter entry set to 2: a reward-range violation.
        let mut bad_r = spec.clone();
        bad_r.theta[0][0] = 2.0;
        let violations = validate_spec(&bad_r);
        assert!(violations.iter().any(|v| matches!(
            v,
            SpecViolation::RewardRange {
                h: 0,
                s: 0,
                a: 0,
                ..
            }
        )));
    }

    #[test]
    fn tabular_generator_is_deterministic_and_valid() {
        let spec1 = make_tabular_instance(2, 2, 3, &mut rng(7));
        let spec2 = make_tabular_instance(2, 2, 3, &mut rng(7));
        assert_eq!(spec1, spec2);
        assert!(validate_spec(&spec1).is_empty());
        assert_eq!(spec1.d, 4);

        // Trivial 1x1x1 instance.
        let one = make_tabular_instance(1, 1, 1, &mut rng(0));
        assert_eq!(one.d, 1);
        assert_eq!(one.transition_distribution(0, 0, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn tabular_transition_matches_generator_rows() {
        // One-hot features select stored rows directly from mu.
        let spec = make_tabular_instance(3, 2, 2, &mut rng(9));
        for h in 0..2 {
            for s in 0..3 {
                for a in 0..2 {
                    let p = spec.transition_distribution(h, s, a).unwrap();
                    let i = spec.sa_index(s, a);
                    for next in 0..3 {
                        assert_relative_eq!(p[next], spec.mu(h)[(i, next)], epsilon = 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn episodes_follow_deterministic_chains() {
        // All probability mass on (s + 1) mod |S|.
        let n = 3;
        let d = n; // one action
        let features: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let mut phi = DVector::zeros(d);
                phi[i] = 1.0;
                phi
            })
            .collect();
        let mut m = DMatrix::zeros(d, n);
        for s in 0..n {
            m[(s, (s + 1) % n)] = 1.0;
        }
        let mu = vec![m.clone(), m.clone(), m];
        let theta = vec![DVector::zeros(d); 3];
        let spec = LinearMdpSpec::new(d, 3, n, 1, features, mu, theta, 0);
        let policy = PolicySnapshot::constant(3, n, 0);
        let traj = sample_episode(&spec, &policy, &mut rng(1)).unwrap();
        let visited: Vec<usize> = traj.steps.iter().map(|st| st.next_state).collect();
        assert_eq!(visited, vec![1, 2, 0]);
        assert_eq!(traj.steps.len(), 3);

        // H = 1 yields exactly one step.
        let spec1 = make_tabular_instance(2, 2, 1, &mut rng(2));
        let t1 = sample_episode(&spec1, &PolicySnapshot::constant(1, 2, 0), &mut rng(3)).unwrap();
        assert_eq!(t1.steps.len(), 1);
    }

    #[test]
    fn sampling_is_bit_identical_for_fixed_seed() {
        let spec = make_tabular_instance(3, 2, 4, &mut rng(21));
        let policy = PolicySnapshot::constant(4, 3, 1);
        let a = sample_episode(&spec, &policy, &mut rng(33)).unwrap();
        let b = sample_episode(&spec, &policy, &mut rng(33)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_frequencies_match_transition_distribution() {
        let spec = make_tabular_instance(3, 2, 1, &mut rng(17));
        let p = spec.transition_distribution(0, 0, 1).unwrap();
        let n = 100_000usize;
        let mut counts = vec![0usize; 3];
        let mut r = stream(99, StreamKind::Env, 0, 0);
        for _ in 0..n {
            let u: f64 = rand::Rng::gen(&mut r);
            counts[sample_next_state(&p, u)] += 1;
        }
        for next in 0..3 {
            let freq = counts[next] as f64 / n as f64;
            let se = (p[next] * (1.0 - p[next]) / n as f64).sqrt();
            assert!(
                (freq - p[next]).abs() <= 3.0 * se + 1e-12,
                "next={next}: freq {freq} vs p {}",
                p[next]
            );
        }
    }

    /// Independent oracle: evaluate a fixed deterministic policy by direct
    /// recursion over the transition tree (no shared code with the
    /// backward-induction implementations).
    fn recursive_policy_value(
        spec: &LinearMdpSpec,
        policy: &PolicySnapshot,
        h: usize,
        s: usize,
    ) -> f64 {
        if h == spec.horizon {
            return 0.0;
        }
        let a = policy.action(h, s);
        let r = spec.reward(h, s, a).unwrap();
        let p = spec.transition_distribution(h, s, a).unwrap();
        let mut acc = r;
        for (next, &pi) in p.iter().enumerate() {
            if pi > 0.0 {
                acc += pi * recursive_policy_value(spec, policy, h + 1, next);
            }
        }
        acc
    }

    fn enumerate_policies(spec: &LinearMdpSpec) -> Vec<PolicySnapshot> {
        let slots = spec.horizon * spec.num_states;
        let total = spec.num_actions.pow(slots as u32);
        let mut out = Vec::with_capacity(total);
        for code in 0..total {
            let mut c = code;
            let mut actions = vec![vec![0usize; spec.num_states]; spec.horizon];
            for h in 0..spec.horizon {
                for s in 0..spec.num_states {
                    actions[h][s] = c % spec.num_actions;
                    c /= spec.num_actions;
                }
            }
            out.push(PolicySnapshot { actions });
        }
        out
    }

    #[test]
    fn optimal_values_match_exhaustive_policy_enumeration() {
        let spec = make_tabular_instance(2, 2, 3, &mut rng(13));
        let opt = exact_optimal_values(&spec).unwrap();
        let best = enumerate_policies(&spec)
            .iter()
            .map(|p| recursive_policy_value(&spec, p, 0, spec.initial_state))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(opt.v[0][spec.initial_state], best, epsilon = 1e-10);
    }

    #[test]
    fn optimal_values_trivial_cases() {
        // H = 1: V*_1(s) = max_a r(s,a).
        let spec = make_tabular_instance(3, 4, 1, &mut rng(19));
        let opt = exact_optimal_values(&spec).unwrap();
        for s in 0..3 {
            let best = (0..4)
                .map(|a| spec.reward(0, s, a).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(opt.v[0][s], best, epsilon = 1e-15);
        }

        // All rewards zero: all values zero, for V* and any fixed policy.
        let mut zero = make_tabular_instance(2, 2, 3, &mut rng(23));
        for t in &mut zero.theta {
            t.fill(0.0);
        }
        let opt = exact_optimal_values(&zero).unwrap();
        assert!(opt.v.iter().flatten().all(|&v| v == 0.0));
        let sink_policy = PolicySnapshot::constant(3, 2, 1);
        assert_eq!(exact_policy_value(&zero, &sink_policy).unwrap(), 0.0);

        // Range: V*_h in [0, H - h].
        let spec = make_tabular_instance(3, 2, 5, &mut rng(29));
        let opt = exact_optimal_values(&spec).unwrap();
        for h in 0..5 {
            for s in 0..3 {
                assert!(opt.v[h][s] >= 0.0 && opt.v[h][s] <= (5 - h) as f64);
            }
        }
    }

    #[test]
    fn policy_value_consistency() {
        let spec = make_tabular_instance(3, 3, 4, &mut rng(31));
        let opt = exact_optimal_values(&spec).unwrap();
        let greedy = opt.greedy_policy();
        let v = exact_policy_value(&spec, &greedy).unwrap();
        assert_relative_eq!(v, opt.v[0][spec.initial_state], epsilon = 1e-10);
    }

    #[test]
    fn policy_value_matches_monte_carlo() {
        let spec = make_tabular_instance(2, 2, 3, &mut rng(37));
        let policy = PolicySnapshot::constant(3, 2, 1);
        let exact = exact_policy_value(&spec, &policy).unwrap();
        let n = 1_000_000usize;
        let mut r = stream(5, StreamKind::Env, 0, 0);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let traj = sample_episode(&spec, &policy, &mut r).unwrap();
            let ret: f64 = traj.steps.iter().map(|st| st.reward).sum();
            sum += ret;
            sumsq += ret * ret;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se + 1e-9,
            "MC mean {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn regret_is_nonnegative_over_all_policies() {
        let spec = make_tabular_instance(2, 2, 2, &mut rng(41));
        let opt = exact_optimal_values(&spec).unwrap();
        assert_eq!(
            per_episode_regret(&spec, &opt.greedy_policy()).unwrap(),
            0.0
        );
        for policy in enumerate_policies(&spec) {
            let reg = per_episode_regret(&spec, &policy).unwrap();
            assert!(reg >= 0.0 && reg <= spec.horizon as f64);
        }
    }

    #[test]
    fn regret_direct_example() {
        // H = 1, best reward 0.7, policy picks 0.2: regret 0.5.
        let spec = two_state_chain(0.5, 0.5);
        // Single action per state; extend to two actions via a fresh build.
        let features = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ];
        let mu = vec![DMatrix::from_row_slice(2, 1, &[1.0, 1.0])];
        let theta = vec![DVector::from_vec(vec![0.7, 0.2])];
        let spec2 = LinearMdpSpec::new(2, 1, 1, 2, features, mu, theta, 0);
        let bad = PolicySnapshot::constant(1, 1, 1);
        assert_relative_eq!(
            per_episode_regret(&spec2, &bad).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        drop(spec);
    }

    #[test]
    fn reward_bump_does_not_decrease_optimal_values() {
        let mut r = rng(43);
        let spec = make_tabular_instance(3, 2, 3, &mut r);
        let base = exact_optimal_values(&spec).unwrap();
        let mut bumped = spec.clone();
        for t in &mut bumped.theta {
            for v in t.iter_mut() {
                *v = (*v + 0.1).min(1.0);
            }
        }
        let up = exact_optimal_values(&bumped).unwrap();
        for h in 0..3 {
            for s in 0..3 {
                assert!(up.v[h][s] >= base.v[h][s] - 1e-12);
            }
        }
    }

    #[test]
    fn instance_text_roundtrip_is_bit_exact() {
        let spec = make_low_rank_instance(3, 4, 2, 3, &mut rng(47));
        let text = write_instance(&spec);
        let back = parse_instance(&text).unwrap();
        assert_eq!(spec, back);
        // Emission itself is deterministic.
        assert_eq!(text, write_instance(&back));
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(parse_instance("2 1 2").is_err());
        assert!(parse_instance("1 1 1 1 0\n1.0\nnot_a_number\n0.5").is_err());
        let spec = make_tabular_instance(2, 2, 1, &mut rng(53));
        let mut text = write_instance(&spec);
        text.push_str("0.25\n");
        assert!(parse_instance(&text).is_err());
    }
}
