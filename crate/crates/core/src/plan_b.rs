//! Per-round repair of the long-term plan (stage two).
//!
//! Each round the realized online set punches holes in the planned
//! association. Repair keeps every planned client that showed up, replaces
//! each dropout with the most similar online spare from the same feature
//! cluster, and re-checks the per-edge divergence and data-size constraints
//! on what actually aggregates. When substitution cannot restore
//! feasibility, a local search over the remaining online spares patches the
//! association around the fixed base.

use serde::Serialize;

use crate::assoc::{AssocRole, Association};
use crate::cost::{feature_vector, PairCosts};
use crate::divergence::kld_from_counts;
use crate::scenario::Scenario;
use crate::search::{self, AssocRule, ConstraintMode, ObjectiveKind, SearchContext, SearchOptions};
use crate::{ClientId, EdgeId};

/// Cosine similarity of two feature vectors; zero when either is null.
fn cosine(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Pairwise cosine similarities, symmetric with unit diagonal.
pub fn similarity_matrix(features: &[[f64; 3]]) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut sim = vec![vec![0.0; n]; n];
    for a in 0..n {
        sim[a][a] = 1.0;
        for b in (a + 1)..n {
            let s = cosine(&features[a], &features[b]);
            sim[a][b] = s;
            sim[b][a] = s;
        }
    }
    sim
}

/// Density clustering over a similarity matrix. A point is core when at
/// least `min_pts` other points sit within `psi_min` similarity; clusters
/// grow from cores, border points join the first cluster that reaches them,
/// and unreached points stay `None`.
pub fn dbscan(sim: &[Vec<f64>], psi_min: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = sim.len();
    let neighbors = |p: usize| -> Vec<usize> {
        (0..n).filter(|&q| q != p && sim[p][q] >= psi_min).collect()
    };
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;
    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        let seed = neighbors(p);
        if seed.len() < min_pts {
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        label[p] = Some(c);
        let mut queue = seed;
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head];
            head += 1;
            if label[q].is_none() {
                label[q] = Some(c);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            let nq = neighbors(q);
            if nq.len() >= min_pts {
                queue.extend(nq);
            }
        }
    }
    label
}

/// One dropout replaced by an online spare.
#[derive(Debug, Clone, Serialize)]
pub struct Substitution {
    pub dropout: ClientId,
    pub substitute: ClientId,
    pub edge: EdgeId,
    pub similarity: f64,
}

/// What one round of repair did and whether the result meets the per-edge
/// constraints.
#[derive(Debug, Clone, Serialize)]
pub struct RepairReport {
    pub dropouts: Vec<ClientId>,
    pub substitutions: Vec<Substitution>,
    pub fallback: bool,
    pub feasible: bool,
}

fn edge_constraints_ok(scenario: &Scenario, assoc: &Association, q: &[f64]) -> bool {
    let th = scenario.config.thresholds();
    let n_labels = scenario.config.n_labels;
    for j in 0..scenario.edges.len() {
        let mut counts = vec![0u64; n_labels];
        let mut data = 0u64;
        for i in assoc.clients_of(j) {
            let c = &scenario.clients[i];
            for (h, &k) in c.label_counts.iter().enumerate() {
                counts[h] += k;
            }
            data += c.data_size;
        }
        if kld_from_counts(&counts, q) > th.kld_max || (data as f64) < th.d_min {
            return false;
        }
    }
    true
}

/// Repairs the planned association against the realized online set `xi`.
///
/// Keeps online planned clients in place, substitutes dropouts from their
/// feature clusters, and falls back to local search over the remaining
/// online spares when the substituted association still violates a
/// constraint. The returned association only ever contains online clients.
pub fn repair_round(
    scenario: &Scenario,
    pair: &PairCosts,
    plan: &Association,
    xi: &[bool],
    q: &[f64],
    opts: &SearchOptions,
) -> (Association, RepairReport) {
    let n = scenario.n_clients();
    let mut assoc = Association::new(AssocRole::PlanB, n, scenario.edges.len());
    let mut dropouts: Vec<(ClientId, EdgeId)> = Vec::new();
    for (i, j) in plan.pairs() {
        if xi[i] {
            assoc.assign(i, j);
        } else {
            dropouts.push((i, j));
        }
    }
    dropouts.sort_unstable_by_key(|&(i, j)| (j, i));

    let psi_min = scenario.config.psi_min;
    let min_pts = scenario.config.p_min_points;
    let descending = scenario.config.similarity_descending;
    let mut substitutions = Vec::new();

    for &(drop, j) in &dropouts {
        if assoc.load(j) >= scenario.edges[j].max_clients {
            continue;
        }
        // Cluster everyone who could serve edge `j` on this round's costs.
        let universe: Vec<ClientId> = (0..n)
            .filter(|&i| {
                scenario.clients[i].reachable.contains(&j) && pair.get(i, j).is_admissible()
            })
            .collect();
        let features: Vec<[f64; 3]> = universe
            .iter()
            .map(|&i| feature_vector(i, j, &scenario.clients, pair))
            .collect();
        let sim = similarity_matrix(&features);
        let labels = dbscan(&sim, psi_min, min_pts);
        let Some(drop_pos) = universe.iter().position(|&i| i == drop) else {
            continue;
        };
        let Some(cluster) = labels[drop_pos] else {
            continue;
        };
        let mut candidates: Vec<(f64, ClientId)> = universe
            .iter()
            .enumerate()
            .filter(|&(pos, &i)| {
                labels[pos] == Some(cluster)
                    && i != drop
                    && xi[i]
                    && !plan.is_selected(i)
                    && !assoc.is_selected(i)
            })
            .map(|(pos, &i)| (sim[drop_pos][pos], i))
            .collect();
        candidates.sort_by(|a, b| {
            let ord = a.0.partial_cmp(&b.0).unwrap();
            if descending {
                ord.reverse().then(a.1.cmp(&b.1))
            } else {
                ord.then(a.1.cmp(&b.1))
            }
        });
        if let Some(&(s, sub)) = candidates.first() {
            assoc.assign(sub, j);
            substitutions.push(Substitution {
                dropout: drop,
                substitute: sub,
                edge: j,
                similarity: s,
            });
        }
    }

    let mut feasible = edge_constraints_ok(scenario, &assoc, q);
    let mut fallback = false;
    if !feasible {
        fallback = true;
        let mut w = scenario.config.weights();
        w.lambda_c = 0.0;
        let ctx = SearchContext {
            scenario,
            pair,
            q,
            th: scenario.config.thresholds(),
            w,
            probs: &vec![1.0; n],
            objective: ObjectiveKind::WeightedCost,
        };
        let pool: Vec<ClientId> = (0..n)
            .filter(|&i| xi[i] && !assoc.is_selected(i))
            .collect();
        let mut fb_opts = opts.clone();
        fb_opts.mode = ConstraintMode::Deterministic;
        fb_opts.rule = AssocRule::GainOfCost;
        let (out, _) = search::local_search(&ctx, &pool, Some(&assoc), &fb_opts, AssocRole::PlanB);
        if out.feasible {
            assoc = out.assoc;
            feasible = true;
        }
    }

    let report = RepairReport {
        dropouts: dropouts.iter().map(|&(i, _)| i).collect(),
        substitutions,
        fallback,
        feasible,
    };
    (assoc, report)
}
