//! Simulator and decision solvers for three-tier federated learning
//! (clients, edge servers, cloud) where clients participate
//! intermittently.
//!
//! The crate models per-round compute/communication cost, label-mixture
//! divergence at each edge aggregator, and client availability, and
//! provides:
//!
//! * a long-term planner that picks a client cohort and its
//!   client-to-edge association once, hedging against dropouts with
//!   probabilistic constraint surrogates ([`plan_a`]),
//! * a cheap per-round repair step that patches the long-term plan
//!   against the realized set of online clients ([`plan_b`]),
//! * per-round benchmark policies ([`baselines`]),
//! * exact brute-force reference solvers for small instances
//!   ([`oracle`]),
//! * a training engine with a synthetic softmax-regression task that
//!   turns association decisions into accuracy trajectories
//!   ([`engine`]).
//!
//! All randomness flows through seeded ChaCha streams; every public
//! entry point is deterministic given its inputs, in both the parallel
//! and the sequential execution modes (see [`par`]).

pub mod assoc;
pub mod baselines;
pub mod cost;
pub mod divergence;
pub mod engine;
pub mod learner;
pub mod oracle;
pub mod par;
pub mod participation;
pub mod plan_a;
pub mod plan_b;
pub mod rng;
pub mod scenario;
pub mod search;

/// Large-but-finite sentinel standing in for an unbounded cost or
/// divergence (unreachable uplink, empty aggregator). Kept finite so
/// comparisons and sums stay well-defined; solvers must treat any
/// value at or above this as inadmissible rather than feed it into
/// arithmetic that matters.
pub const INF_SENTINEL: f64 = 1e30;

/// Index of a client in `Scenario::clients`.
pub type ClientId = usize;
/// Index of an edge server in `Scenario::edges`.
pub type EdgeId = usize;
