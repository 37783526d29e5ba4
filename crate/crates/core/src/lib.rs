//! Budgeted multi-product influence and profit maximization on social
//! networks under the independent cascade model.
//!
//! The library selects seed users for `q` products sharing one activation
//! budget. Diffusion of product `i` is modeled as an independent cascade on a
//! virtual copy of the network, a seed of product `i` costs `c_i`, and every
//! user it reaches earns `p_i`. Seed selection runs on reverse-reachable
//! (RR) set samples: the expected profit of an assignment is estimated from
//! the fraction of sampled sets it covers, and a modified greedy over that
//! estimator yields a `(1 - 1/e - eps)`-approximate assignment when the
//! sample count is sized from a lower bound on the optimum.
//!
//! Module map:
//! - [`graph`]: graphs, the virtual copy graph, product catalogs, seed
//!   assignments.
//! - [`diffusion`]: forward cascade simulation, Monte-Carlo estimators and
//!   exhaustive oracles for desk-scale verification.
//! - [`ris`]: RR-set sampling, coverage indexing, the profit estimator and
//!   the sample-count formula.
//! - [`tim`]: the two-phase sampling/selection routine for the single-product
//!   `k`-seed problem, used to lower-bound the optimum.
//! - [`optbound`]: per-product and matrix-refined lower bounds on the optimum.
//! - [`rmg`]: the modified greedy selector and the end-to-end pipeline.
//! - [`baselines`]: random, cost-ratio greedy and cost-effectiveness
//!   comparison algorithms.
//! - [`harness`]: experiment sweeps, synthetic graphs, CSV reporting.
//!
//! All randomized routines take a `u64` seed and derive one independent
//! stream per work item, so results are identical for any worker count. The
//! `parallel` feature (on by default) runs the sampling and evaluation loops
//! on rayon; without it the same code runs on plain loops.

pub mod baselines;
pub mod diffusion;
mod error;
mod exec;
pub mod graph;
pub mod harness;
pub mod optbound;
pub mod ris;
pub mod rmg;
pub mod rng;
pub mod tim;

pub use error::{Error, Result};
