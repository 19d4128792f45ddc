//! Label-mixture divergence at edge aggregators and the probabilistic
//! constraint surrogates built on it.
//!
//! Each edge aggregates the datasets of its online associated clients;
//! the mixture's KL divergence from a reference distribution measures
//! how skewed that edge's effective training data is. Because the
//! online set is random, the long-term planner cannot check the
//! divergence directly; it bounds the probability of a violation using
//! a worst-case per-label divergence bound plus Markov's inequality,
//! and bounds the data-shortfall probability through the expected
//! aggregated data size. Both surrogates, the exact enumerated
//! violation probabilities they dominate, and a Monte-Carlo estimate
//! of realized violation rates live here.
//!
//! All logarithms are natural.

use crate::assoc::Association;
use crate::par::{self, ExecMode};
use crate::rng;
use crate::scenario::{ClientProfile, Scenario, Thresholds};
use crate::{ClientId, EdgeId, INF_SENTINEL};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DivergenceError {
    #[error("reference distribution has a zero entry at label {0}")]
    ZeroReference(usize),
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// KL divergence `sum_h p(h) ln(p(h)/q(h))`, with `0 ln 0 = 0`.
/// The reference `q` must be strictly positive.
pub fn kld(p: &[f64], q: &[f64]) -> Result<f64, DivergenceError> {
    if p.len() != q.len() {
        return Err(DivergenceError::LengthMismatch(p.len(), q.len()));
    }
    if let Some(h) = q.iter().position(|&x| x <= 0.0) {
        return Err(DivergenceError::ZeroReference(h));
    }
    let mut s = 0.0;
    for (&ph, &qh) in p.iter().zip(q) {
        if ph > 0.0 {
            s += ph * (ph / qh).ln();
        }
    }
    Ok(s)
}

/// Label mixture aggregated at edge `j` over assigned online clients;
/// `None` when no assigned client is online.
pub fn edge_distribution(
    assoc: &Association,
    xi: &[bool],
    clients: &[ClientProfile],
    j: EdgeId,
    n_labels: usize,
) -> Option<Vec<f64>> {
    let mut counts = vec![0.0; n_labels];
    let mut total = 0.0;
    for (i, e) in assoc.pairs() {
        if e == j && xi[i] {
            for (h, &y) in clients[i].label_counts.iter().enumerate() {
                counts[h] += y as f64;
            }
            total += clients[i].data_size as f64;
        }
    }
    if total == 0.0 {
        return None;
    }
    for c in counts.iter_mut() {
        *c /= total;
    }
    Some(counts)
}

/// Divergence of a raw label-count vector against the reference, with
/// the inadmissible sentinel when the counts are all zero.
pub fn kld_from_counts(counts: &[u64], q: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return INF_SENTINEL;
    }
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    kld(&p, q).expect("reference distribution validated by caller")
}

/// Divergence of edge `j`'s online mixture, with the inadmissible
/// sentinel for an empty aggregator.
pub fn edge_kld(
    assoc: &Association,
    xi: &[bool],
    clients: &[ClientProfile],
    j: EdgeId,
    q: &[f64],
) -> f64 {
    match edge_distribution(assoc, xi, clients, j, q.len()) {
        Some(p) => kld(&p, q).expect("reference distribution validated by caller"),
        None => INF_SENTINEL,
    }
}

/// `U(rho) = rho ln(rho/q_h)` with `U(0) = 0`: one label's
/// contribution to the divergence when that label's mixture ratio is
/// `rho`.
fn u(rho: f64, q_h: f64) -> f64 {
    if rho <= 0.0 {
        0.0
    } else {
        rho * (rho / q_h).ln()
    }
}

/// Worst-case contribution of label `h` to the divergence of any
/// non-empty participating subset of `members`, from the per-client
/// ratio envelope alone.
///
/// Any subset's mixture ratio for `h` lies between the smallest and
/// largest per-client ratios `[m, M]`. `U` decreases up to `q_h / e`
/// and increases afterwards, so its maximum over `[m, M]` sits at an
/// endpoint: `U(m)` when the whole envelope is left of the turn,
/// `U(M)` when it is right of it, the larger endpoint otherwise.
pub fn piecewise_bound_g(
    members: &[ClientId],
    clients: &[ClientProfile],
    h: usize,
    q_h: f64,
) -> f64 {
    debug_assert!(!members.is_empty());
    let mut m = f64::INFINITY;
    let mut big = f64::NEG_INFINITY;
    for &i in members {
        let rho = clients[i].label_counts[h] as f64 / clients[i].data_size as f64;
        m = m.min(rho);
        big = big.max(rho);
    }
    let turn = q_h / std::f64::consts::E;
    if turn >= big {
        u(m, q_h)
    } else if turn <= m {
        u(big, q_h)
    } else {
        u(m, q_h).max(u(big, q_h))
    }
}

/// Sum of the per-label worst-case contributions: an upper bound on
/// the divergence of every non-empty participating subset of
/// `members`.
pub fn kld_upper_bound(members: &[ClientId], clients: &[ClientProfile], q: &[f64]) -> f64 {
    (0..q.len())
        .map(|h| piecewise_bound_g(members, clients, h, q[h]))
        .sum()
}

/// Upper bound on the probability that edge members realize a
/// divergence above `kld_max - delta_k` (an empty realization counts
/// as a violation): the empty-set probability plus a Markov term on
/// the non-empty remainder. An edge with no members is certainly in
/// violation, bound 1. `probs[i]` is the online probability the
/// planner believes client `i` has (estimated or true).
pub fn markov_kld_bound(
    members: &[ClientId],
    clients: &[ClientProfile],
    probs: &[f64],
    q: &[f64],
    th: &Thresholds,
) -> f64 {
    if members.is_empty() {
        return 1.0;
    }
    let p_empty: f64 = members.iter().map(|&i| 1.0 - probs[i]).product();
    let g = kld_upper_bound(members, clients, q);
    p_empty + (1.0 - p_empty) * g / (th.kld_max - th.delta_k)
}

/// Expected aggregated data size of the members, the left side of the
/// probabilistic data-size requirement.
pub fn expected_data(members: &[ClientId], clients: &[ClientProfile], probs: &[f64]) -> f64 {
    members
        .iter()
        .map(|&i| probs[i] * clients[i].data_size as f64)
        .sum()
}

/// Probabilistic data-size requirement: expected aggregated data must
/// reach `(d_min + delta_d) * (1 - epsilon)`.
pub fn markov_data_ok(
    members: &[ClientId],
    clients: &[ClientProfile],
    probs: &[f64],
    th: &Thresholds,
) -> bool {
    expected_data(members, clients, probs) >= (th.d_min + th.delta_d) * (1.0 - th.epsilon_risk)
}

/// Which per-edge condition a participation pattern is tested against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Realized divergence above `kld_max - delta_k`, or an empty
    /// aggregator.
    Divergence,
    /// Realized aggregated data below `d_min + delta_d`.
    DataSize,
}

/// Exact probability that the members of one edge realize a violation,
/// by enumeration over all participation subsets. Member count is
/// capped at 20 to keep the enumeration tractable.
pub fn exact_violation_prob(
    members: &[ClientId],
    clients: &[ClientProfile],
    q: &[f64],
    th: &Thresholds,
    kind: ViolationKind,
) -> f64 {
    assert!(members.len() <= 20, "enumeration capped at 20 members");
    let n = members.len();
    let n_labels = q.len();
    let mut prob = 0.0;
    for mask in 0u32..(1 << n) {
        let mut w = 1.0;
        let mut counts = vec![0.0; n_labels];
        let mut total = 0.0;
        for (b, &i) in members.iter().enumerate() {
            let c = &clients[i];
            if mask >> b & 1 == 1 {
                w *= c.online_prob;
                for (h, &y) in c.label_counts.iter().enumerate() {
                    counts[h] += y as f64;
                }
                total += c.data_size as f64;
            } else {
                w *= 1.0 - c.online_prob;
            }
        }
        let violated = match kind {
            ViolationKind::Divergence => {
                if total == 0.0 {
                    true
                } else {
                    for c in counts.iter_mut() {
                        *c /= total;
                    }
                    kld(&counts, q).unwrap() > th.kld_max - th.delta_k
                }
            }
            ViolationKind::DataSize => total < th.d_min + th.delta_d,
        };
        if violated {
            prob += w;
        }
    }
    prob
}

/// Monte-Carlo estimate of realized per-round violation rates for a
/// deployed association, against the original (unrelaxed) thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationEstimate {
    /// Fraction of rounds violating the divergence ceiling, per edge.
    pub kld_rate: Vec<f64>,
    /// Fraction of rounds violating the data-size floor, per edge.
    pub data_rate: Vec<f64>,
    pub trials: u64,
}

impl ViolationEstimate {
    /// Divergence violation rate averaged over edges.
    pub fn delta_hat(&self) -> f64 {
        self.kld_rate.iter().sum::<f64>() / self.kld_rate.len() as f64
    }

    /// Data-size violation rate averaged over edges.
    pub fn epsilon_hat(&self) -> f64 {
        self.data_rate.iter().sum::<f64>() / self.data_rate.len() as f64
    }
}

/// Sample participation patterns for the selected clients and count
/// how often each edge of `assoc` breaks `kld <= kld_max` or
/// `D_j >= d_min`. Deterministic in `seed` and identical across
/// execution modes: each trial draws from its own derived stream.
pub fn estimate_violation_rate(
    assoc: &Association,
    scenario: &Scenario,
    q: &[f64],
    th: &Thresholds,
    trials: u64,
    seed: u64,
    mode: ExecMode,
) -> ViolationEstimate {
    let n_edges = scenario.n_edges();
    assert!(n_edges <= 64, "per-trial edge flags are packed in a u64");
    let members: Vec<Vec<ClientId>> = (0..n_edges).map(|j| assoc.clients_of(j)).collect();
    let clients = &scenario.clients;
    let n_labels = scenario.n_labels();

    let flags: Vec<(u64, u64)> = par::map_indexed(mode, trials as usize, |t| {
        use rand::Rng;
        let mut rng = rng::stream2(seed, rng::tag::VIOLATION, t as u64);
        let mut kld_mask = 0u64;
        let mut data_mask = 0u64;
        for (j, ms) in members.iter().enumerate() {
            let mut counts = vec![0.0; n_labels];
            let mut total = 0.0;
            for &i in ms {
                if rng.random_bool(clients[i].online_prob) {
                    for (h, &y) in clients[i].label_counts.iter().enumerate() {
                        counts[h] += y as f64;
                    }
                    total += clients[i].data_size as f64;
                }
            }
            if total < th.d_min {
                data_mask |= 1 << j;
            }
            if total == 0.0 {
                kld_mask |= 1 << j;
            } else {
                for c in counts.iter_mut() {
                    *c /= total;
                }
                if kld(&counts, q).unwrap() > th.kld_max {
                    kld_mask |= 1 << j;
                }
            }
        }
        (kld_mask, data_mask)
    });

    let mut kld_counts = vec![0u64; n_edges];
    let mut data_counts = vec![0u64; n_edges];
    for (km, dm) in flags {
        for j in 0..n_edges {
            kld_counts[j] += km >> j & 1;
            data_counts[j] += dm >> j & 1;
        }
    }
    ViolationEstimate {
        kld_rate: kld_counts.iter().map(|&c| c as f64 / trials as f64).collect(),
        data_rate: data_counts.iter().map(|&c| c as f64 / trials as f64).collect(),
        trials,
    }
}

/// Per-edge and structural feasibility of an association under a
/// realized participation vector, against the original deterministic
/// constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// `kld(edge mixture) <= kld_max` per edge (empty mixture fails).
    pub kld_ok: Vec<bool>,
    /// `D_j >= d_min` per edge.
    pub data_ok: Vec<bool>,
    /// Every edge within its association capacity.
    pub capacity_ok: bool,
    /// At most one edge per client (structural in this representation,
    /// reported for completeness).
    pub uniqueness_ok: bool,
    /// No offline client is assigned.
    pub offline_excluded_ok: bool,
}

impl ConstraintReport {
    pub fn all_ok(&self) -> bool {
        self.capacity_ok
            && self.uniqueness_ok
            && self.offline_excluded_ok
            && self.kld_ok.iter().all(|&b| b)
            && self.data_ok.iter().all(|&b| b)
    }
}

pub fn check_p0_constraints(
    assoc: &Association,
    xi: &[bool],
    scenario: &Scenario,
    q: &[f64],
    th: &Thresholds,
) -> ConstraintReport {
    let clients = &scenario.clients;
    let mut kld_ok = Vec::with_capacity(scenario.n_edges());
    let mut data_ok = Vec::with_capacity(scenario.n_edges());
    for j in 0..scenario.n_edges() {
        let total: f64 = assoc
            .clients_of(j)
            .iter()
            .filter(|&&i| xi[i])
            .map(|&i| clients[i].data_size as f64)
            .sum();
        data_ok.push(total >= th.d_min);
        kld_ok.push(edge_kld(assoc, xi, clients, j, q) <= th.kld_max);
    }
    let capacity_ok = scenario
        .edges
        .iter()
        .all(|e| assoc.load(e.id) <= e.max_clients);
    let offline_excluded_ok = assoc.pairs().all(|(i, _)| xi[i]);
    ConstraintReport {
        kld_ok,
        data_ok,
        capacity_ok,
        uniqueness_ok: true,
        offline_excluded_ok,
    }
}
