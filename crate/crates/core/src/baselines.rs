//! Per-round benchmark policies.
//!
//! Every policy sees the same inputs: the scenario, this round's pair costs,
//! the realized online set, and a seed. Each returns a complete association
//! over online clients plus the objective it achieved, so runs are
//! comparable row for row.

use serde::{Deserialize, Serialize};

use crate::assoc::{AssocRole, Association};
use crate::cost::PairCosts;
use crate::scenario::Scenario;
use crate::search::{
    self, AssocRule, ConstraintMode, ObjectiveKind, SearchContext, SearchOptions, SolverOutcome,
};
use crate::rng::{self, tag};
use crate::ClientId;

use rand::seq::SliceRandom;
use rand::Rng;

/// Round-decision policies comparable against the stagewise planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Joint selection and association by local search on the weighted
    /// cost, solved from scratch every round.
    OrigProb,
    /// Selection that minimizes mean per-edge divergence subject to the
    /// data-size floor.
    KldMin,
    /// Cost-driven selection, uniformly random association.
    ClientSelOnly,
    /// Uniformly random selection, greedy cost-gain association.
    C2eAssocOnly,
    /// Cost-driven selection, association by fastest uplink.
    C2eGreedyAssoc,
    /// Maximum client admission under capacity, network-style.
    FedCs,
}

impl Policy {
    pub const ALL: [Policy; 6] = [
        Policy::OrigProb,
        Policy::KldMin,
        Policy::ClientSelOnly,
        Policy::C2eAssocOnly,
        Policy::C2eGreedyAssoc,
        Policy::FedCs,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::OrigProb => "orig_prob",
            Policy::KldMin => "kld_min",
            Policy::ClientSelOnly => "client_sel_only",
            Policy::C2eAssocOnly => "c2e_assoc_only",
            Policy::C2eGreedyAssoc => "c2e_greedy_assoc",
            Policy::FedCs => "fed_cs",
        }
    }
}

fn online_pool(xi: &[bool]) -> Vec<ClientId> {
    xi.iter()
        .enumerate()
        .filter_map(|(i, &on)| on.then_some(i))
        .collect()
}

fn round_context<'a>(
    scenario: &'a Scenario,
    pair: &'a PairCosts,
    q: &'a [f64],
    probs: &'a [f64],
    objective: ObjectiveKind,
) -> SearchContext<'a> {
    let mut w = scenario.config.weights();
    w.lambda_c = 0.0;
    SearchContext {
        scenario,
        pair,
        q,
        th: scenario.config.thresholds(),
        w,
        probs,
        objective,
    }
}

/// Solves one round under `policy`. The association only contains online
/// clients; `feasible` reports the constraint mode native to the policy.
pub fn solve_round(
    policy: Policy,
    scenario: &Scenario,
    pair: &PairCosts,
    xi: &[bool],
    q: &[f64],
    opts: &SearchOptions,
) -> SolverOutcome {
    let ones = vec![1.0; scenario.n_clients()];
    let pool = online_pool(xi);
    let mut opts = opts.clone();
    match policy {
        Policy::OrigProb => {
            let ctx = round_context(scenario, pair, q, &ones, ObjectiveKind::WeightedCost);
            opts.mode = ConstraintMode::Deterministic;
            opts.rule = AssocRule::GainOfCost;
            search::local_search(&ctx, &pool, None, &opts, AssocRole::GroundTruth).0
        }
        Policy::KldMin => {
            let ctx = round_context(scenario, pair, q, &ones, ObjectiveKind::MeanDivergence);
            opts.mode = ConstraintMode::DataSizeOnly;
            opts.rule = AssocRule::GainOfCost;
            search::local_search(&ctx, &pool, None, &opts, AssocRole::GroundTruth).0
        }
        Policy::ClientSelOnly => {
            let ctx = round_context(scenario, pair, q, &ones, ObjectiveKind::WeightedCost);
            opts.mode = ConstraintMode::Deterministic;
            opts.rule = AssocRule::Random;
            search::local_search(&ctx, &pool, None, &opts, AssocRole::GroundTruth).0
        }
        Policy::C2eAssocOnly => {
            let ctx = round_context(scenario, pair, q, &ones, ObjectiveKind::WeightedCost);
            opts.mode = ConstraintMode::Deterministic;
            opts.rule = AssocRule::GainOfCost;
            let capacity: usize = scenario.edges.iter().map(|e| e.max_clients).sum();
            let mut rng = rng::stream(opts.seed, tag::POLICY);
            let cap = capacity.min(pool.len());
            if cap == 0 {
                let assoc =
                    Association::new(AssocRole::GroundTruth, scenario.n_clients(), scenario.edges.len());
                return search::associate(&ctx, &[], Some(&assoc), &opts, AssocRole::GroundTruth);
            }
            let size = rng.random_range(1..=cap);
            let mut shuffled = pool.clone();
            shuffled.shuffle(&mut rng);
            let mut sel: Vec<ClientId> = shuffled[..size].to_vec();
            sel.sort_unstable();
            search::associate(&ctx, &sel, None, &opts, AssocRole::GroundTruth)
        }
        Policy::C2eGreedyAssoc => {
            let ctx = round_context(scenario, pair, q, &ones, ObjectiveKind::WeightedCost);
            opts.mode = ConstraintMode::Deterministic;
            opts.rule = AssocRule::MinUplink;
            search::local_search(&ctx, &pool, None, &opts, AssocRole::GroundTruth).0
        }
        Policy::FedCs => fed_cs(scenario, pair, xi, q, &opts),
    }
}

/// Admits as many online clients as capacity and reachability allow, via
/// augmenting paths over edge slots, then reports whether the data-size
/// floor held.
fn fed_cs(
    scenario: &Scenario,
    pair: &PairCosts,
    xi: &[bool],
    q: &[f64],
    opts: &SearchOptions,
) -> SolverOutcome {
    let ones = vec![1.0; scenario.n_clients()];
    let ctx = round_context(scenario, pair, q, &ones, ObjectiveKind::WeightedCost);

    let mut slot_edge = Vec::new();
    for (j, e) in scenario.edges.iter().enumerate() {
        for _ in 0..e.max_clients {
            slot_edge.push(j);
        }
    }
    let mut slot_of: Vec<Option<usize>> = vec![None; scenario.n_clients()];
    let mut owner: Vec<Option<ClientId>> = vec![None; slot_edge.len()];

    fn augment(
        i: ClientId,
        scenario: &Scenario,
        pair: &PairCosts,
        slot_edge: &[usize],
        owner: &mut [Option<ClientId>],
        slot_of: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for (s, &j) in slot_edge.iter().enumerate() {
            if visited[s]
                || !scenario.clients[i].reachable.contains(&j)
                || !pair.get(i, j).is_admissible()
            {
                continue;
            }
            visited[s] = true;
            let free = match owner[s] {
                None => true,
                Some(prev) => augment(prev, scenario, pair, slot_edge, owner, slot_of, visited),
            };
            if free {
                owner[s] = Some(i);
                slot_of[i] = Some(s);
                return true;
            }
        }
        false
    }

    let mut nodes = 0u64;
    for i in online_pool(xi) {
        let mut visited = vec![false; slot_edge.len()];
        augment(
            i,
            scenario,
            pair,
            &slot_edge,
            &mut owner,
            &mut slot_of,
            &mut visited,
        );
        nodes += 1;
    }

    let mut assoc = Association::new(
        AssocRole::GroundTruth,
        scenario.n_clients(),
        scenario.edges.len(),
    );
    for (s, o) in owner.iter().enumerate() {
        if let Some(i) = o {
            assoc.assign(*i, slot_edge[s]);
        }
    }
    let mut out = search::associate(&ctx, &[], Some(&assoc), opts, AssocRole::GroundTruth);
    out.stats.nodes = nodes;
    out.mode = ConstraintMode::DataSizeOnly;
    out.feasible = {
        let th = scenario.config.thresholds();
        (0..scenario.edges.len()).all(|j| {
            let data: u64 = assoc
                .clients_of(j)
                .iter()
                .map(|&i| scenario.clients[i].data_size)
                .sum();
            data as f64 >= th.d_min
        })
    };
    out
}
