//! Differentially private least-squares value iteration for episodic linear
//! MDPs, together with the exact environment oracles and benchmark harness
//! needed to verify its privacy accounting, switching behavior, and regret.
//!
//! The crate is organized in four layers:
//!
//! - [`linear_mdp`]: exact finite linear MDPs (features, measures, rewards),
//!   trajectory sampling, and brute-force value oracles used for regret.
//! - [`dp`]: zCDP accounting, the Gaussian and GOE noise mechanisms, and the
//!   utility constants consumed by the private learner.
//! - [`agents`]: the learners — DP-LSVI-UCB++ with privatized weighted ridge
//!   regression and rare switching, its zero-noise counterpart, and a
//!   Hoeffding-bonus LSVI-UCB baseline.
//! - [`bench`]: seeded multi-run experiment suites, privacy-budget sweeps,
//!   CSV emission, and static regret-curve plots.

pub mod agents;
pub mod bench;
pub mod dp;
pub mod linear_mdp;
pub mod rng;
