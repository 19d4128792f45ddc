//! Delay and energy model for one round of hierarchical training.
//!
//! A client pays `local_steps` mini-batch compute passes plus one
//! model upload per edge round; an edge pays a fixed backhaul delay
//! and energy per global round. Round delay is the slowest edge's
//! slowest participating client (edges aggregate in parallel, clients
//! within an edge are synchronous); round energy is the sum of all
//! participating clients' costs plus backhaul.

use crate::assoc::Association;
use crate::scenario::{ClientProfile, EdgeProfile, Scenario, Weights};
use crate::{ClientId, EdgeId, INF_SENTINEL};

/// One compute pass over a mini-batch: `(seconds, joules)`.
///
/// Time is `cycles_per_point * batch_fraction * data_size / cpu_freq`;
/// energy is the same cycle count weighted by `capacitance *
/// cpu_freq^2`.
pub fn local_compute_cost(c: &ClientProfile) -> (f64, f64) {
    let cycles = c.cycles_per_point * c.batch_fraction * c.data_size as f64;
    let t = cycles / c.cpu_freq;
    let e = c.capacitance * c.cpu_freq * c.cpu_freq * cycles;
    (t, e)
}

/// Shannon-capacity uplink rate in bits/s for a client-edge pair.
pub fn uplink_rate(c: &ClientProfile, e: &EdgeProfile, gain: f64, noise_psd: f64) -> f64 {
    if gain <= 0.0 {
        return 0.0;
    }
    let snr = c.tx_power * gain / (noise_psd * e.bandwidth_hz);
    e.bandwidth_hz * (1.0 + snr).log2()
}

/// One model upload: `(seconds, joules)`. An unusable link (zero gain
/// or zero rate) maps to the inadmissible-cost sentinel, not to
/// floating-point infinity.
pub fn uplink_cost(
    c: &ClientProfile,
    e: &EdgeProfile,
    gain: f64,
    noise_psd: f64,
    model_bits: f64,
) -> (f64, f64) {
    let r = uplink_rate(c, e, gain, noise_psd);
    if r <= 0.0 {
        return (INF_SENTINEL, INF_SENTINEL);
    }
    let t = model_bits / r;
    (t, c.tx_power * t)
}

/// Per-edge-round cost of a client training under an edge:
/// `local_steps` compute passes plus one upload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCost {
    pub delay: f64,
    pub energy: f64,
    /// Upload time alone, for policies that rank edges by link speed.
    pub uplink_delay: f64,
}

impl PairCost {
    pub fn is_admissible(&self) -> bool {
        self.delay < INF_SENTINEL && self.energy < INF_SENTINEL
    }
}

pub fn pair_cost(
    c: &ClientProfile,
    e: &EdgeProfile,
    gain: f64,
    noise_psd: f64,
    model_bits: f64,
    local_steps: u32,
) -> PairCost {
    let (t_cmp, e_cmp) = local_compute_cost(c);
    let (t_com, e_com) = uplink_cost(c, e, gain, noise_psd, model_bits);
    if t_com >= INF_SENTINEL {
        return PairCost {
            delay: INF_SENTINEL,
            energy: INF_SENTINEL,
            uplink_delay: INF_SENTINEL,
        };
    }
    PairCost {
        delay: local_steps as f64 * t_cmp + t_com,
        energy: local_steps as f64 * e_cmp + e_com,
        uplink_delay: t_com,
    }
}

/// Dense `(client, edge)` cost table for one channel state.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCosts {
    costs: Vec<Vec<PairCost>>,
}

impl PairCosts {
    pub fn get(&self, i: ClientId, j: EdgeId) -> PairCost {
        self.costs[i][j]
    }
}

/// Build the cost table from a scenario and an explicit per-pair gain
/// table (the scenario's own, or a per-round resample).
pub fn pair_cost_matrix(scenario: &Scenario, gains: &[Vec<f64>]) -> PairCosts {
    let cfg = &scenario.config;
    let costs = scenario
        .clients
        .iter()
        .map(|c| {
            scenario
                .edges
                .iter()
                .map(|e| {
                    pair_cost(
                        c,
                        e,
                        gains[c.id][e.id],
                        cfg.noise_psd_w_per_hz,
                        cfg.model_bits,
                        cfg.local_steps,
                    )
                })
                .collect()
        })
        .collect();
    PairCosts { costs }
}

/// Round delay and energy for an association under a participation
/// vector. Non-participating and unassigned clients cost nothing; an
/// edge with no participating clients still pays its backhaul terms.
pub fn round_cost(
    assoc: &Association,
    xi: &[bool],
    pair: &PairCosts,
    edges: &[EdgeProfile],
    edge_rounds: u32,
) -> (f64, f64) {
    let l = edge_rounds as f64;
    let mut delay: f64 = 0.0;
    let mut energy = 0.0;
    let mut edge_max = vec![0.0f64; edges.len()];
    let mut edge_sum = vec![0.0f64; edges.len()];
    for (i, j) in assoc.pairs() {
        if xi[i] {
            let c = pair.get(i, j);
            edge_max[j] = edge_max[j].max(c.delay);
            edge_sum[j] += c.energy;
        }
    }
    for e in edges {
        delay = delay.max(l * edge_max[e.id] + e.backhaul_delay);
        energy += l * edge_sum[e.id] + e.backhaul_energy;
    }
    (delay, energy)
}

/// Geometric mean of the online probabilities of the selected clients;
/// 0 for an empty selection. Higher means the chosen cohort is more
/// likely to stay around.
pub fn continuity(assoc: &Association, online_probs: &[f64]) -> f64 {
    let mut sum_ln = 0.0;
    let mut n = 0u32;
    for (i, _) in assoc.pairs() {
        sum_ln += online_probs[i].ln();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum_ln / n as f64).exp()
    }
}

/// Weighted delay-plus-energy cost of a round.
pub fn weighted_cost(delay: f64, energy: f64, w: &Weights) -> f64 {
    w.lambda_t * delay + w.lambda_e * energy
}

/// Long-term planning objective: weighted cost assuming everyone
/// selected shows up, minus a continuity reward.
pub fn objective_plan_a(
    assoc: &Association,
    pair: &PairCosts,
    edges: &[EdgeProfile],
    edge_rounds: u32,
    w: &Weights,
    online_probs: &[f64],
) -> f64 {
    let xi = vec![true; assoc.n_clients()];
    let (t, e) = round_cost(assoc, &xi, pair, edges, edge_rounds);
    weighted_cost(t, e, w) - w.lambda_c * continuity(assoc, online_probs)
}

/// Descriptor used by the per-round repair step to judge how
/// interchangeable two clients are under an edge: data size, pair
/// delay, pair energy.
pub fn feature_vector(i: ClientId, j: EdgeId, clients: &[ClientProfile], pair: &PairCosts) -> [f64; 3] {
    let c = pair.get(i, j);
    [clients[i].data_size as f64, c.delay, c.energy]
}
