//! Shared association and selection machinery.
//!
//! Every policy in this crate reduces to two operations. `associate` places a
//! fixed set of clients onto edges, greedily by cost gain with bounded
//! backtracking when the greedy pass violates a constraint. `local_search`
//! wraps it with a selection loop that grows, shrinks, and swaps the chosen
//! set until no single move improves the objective. Policies differ only in
//! the objective, the constraint mode, and the association rule they plug in.

use serde::Serialize;

use crate::assoc::{AssocRole, Association};
use crate::cost::PairCosts;
use crate::divergence::{expected_data, kld_from_counts, markov_kld_bound, piecewise_bound_g};
use crate::par::{self, ExecMode};
use crate::rng::{self, tag};
use crate::scenario::{Scenario, Thresholds, Weights};
use crate::{ClientId, EdgeId, INF_SENTINEL};

use rand::seq::IndexedRandom;
use rand::seq::SliceRandom;

/// Which quantity a solve minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Weighted round delay and energy, minus the weighted continuity bonus.
    WeightedCost,
    /// Mean per-edge divergence from the reference distribution.
    MeanDivergence,
}

/// Which feasibility test a completed association must pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Probabilistic surrogates: divergence bound and expected data volume
    /// under believed online probabilities.
    Chance,
    /// Realized divergence and data volume per edge.
    Deterministic,
    /// Realized data volume per edge only.
    DataSizeOnly,
    /// Capacity and reachability only.
    StructuralOnly,
}

/// How a client picks among its reachable edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssocRule {
    /// Global argmin of the objective increment, with backtracking.
    GainOfCost,
    /// Uniform choice among open edges.
    Random,
    /// Fastest upload link first.
    MinUplink,
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub mode: ConstraintMode,
    pub rule: AssocRule,
    pub max_sweeps: u32,
    pub node_budget: u64,
    pub init_attempts: u32,
    pub exec: ExecMode,
    pub seed: u64,
}

impl SearchOptions {
    pub fn from_config(cfg: &crate::scenario::ScenarioConfig, seed: u64) -> Self {
        SearchOptions {
            mode: ConstraintMode::Deterministic,
            rule: AssocRule::GainOfCost,
            max_sweeps: cfg.plan_a_max_sweeps,
            node_budget: cfg.backtrack_node_budget,
            init_attempts: cfg.init_attempts,
            exec: ExecMode::default(),
            seed,
        }
    }
}

/// Everything a solve reads but never mutates.
pub struct SearchContext<'a> {
    pub scenario: &'a Scenario,
    pub pair: &'a PairCosts,
    pub q: &'a [f64],
    pub th: Thresholds,
    pub w: Weights,
    /// Believed online probabilities; drives chance constraints and the
    /// continuity bonus.
    pub probs: &'a [f64],
    pub objective: ObjectiveKind,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub backtracks: u64,
    pub sweeps: u32,
}

#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub assoc: Association,
    pub objective: f64,
    pub feasible: bool,
    pub mode: ConstraintMode,
    pub stats: SolveStats,
}

/// One evaluated move in the selection loop, kept for run diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct DecisionEntry {
    pub sweep: u32,
    pub op: MoveKind,
    pub added: Option<ClientId>,
    pub removed: Option<ClientId>,
    pub objective: f64,
    pub delta: f64,
    pub feasible: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Add,
    Remove,
    Exchange,
}

/// Incremental view of a partial association: per-edge member stacks plus the
/// running aggregates both objectives and all constraint modes read.
struct State<'a> {
    ctx: &'a SearchContext<'a>,
    members: Vec<Vec<ClientId>>,
    counts: Vec<Vec<u64>>,
    data: Vec<u64>,
    esum: Vec<f64>,
    dmax: Vec<f64>,
    kld: Vec<f64>,
    sum_ln_p: f64,
    n_sel: usize,
}

impl<'a> State<'a> {
    fn new(ctx: &'a SearchContext<'a>, base: &Association) -> Self {
        let m = ctx.scenario.edges.len();
        let n_labels = ctx.scenario.config.n_labels;
        let mut s = State {
            ctx,
            members: vec![Vec::new(); m],
            counts: vec![vec![0u64; n_labels]; m],
            data: vec![0; m],
            esum: vec![0.0; m],
            dmax: vec![0.0; m],
            kld: vec![INF_SENTINEL; m],
            sum_ln_p: 0.0,
            n_sel: 0,
        };
        for (i, j) in base.pairs() {
            s.assign(i, j);
        }
        s
    }

    fn assign(&mut self, i: ClientId, j: EdgeId) {
        let c = &self.ctx.scenario.clients[i];
        let pc = self.ctx.pair.get(i, j);
        self.members[j].push(i);
        for (h, &k) in c.label_counts.iter().enumerate() {
            self.counts[j][h] += k;
        }
        self.data[j] += c.data_size;
        self.esum[j] += pc.energy;
        if pc.delay > self.dmax[j] {
            self.dmax[j] = pc.delay;
        }
        self.kld[j] = kld_from_counts(&self.counts[j], self.ctx.q);
        self.sum_ln_p += self.ctx.probs[i].max(f64::MIN_POSITIVE).ln();
        self.n_sel += 1;
    }

    /// Reverts the most recent `assign` on edge `j`; calls must nest.
    fn unassign_last(&mut self, j: EdgeId) {
        let i = self.members[j].pop().expect("unassign on empty edge");
        let c = &self.ctx.scenario.clients[i];
        let pc = self.ctx.pair.get(i, j);
        for (h, &k) in c.label_counts.iter().enumerate() {
            self.counts[j][h] -= k;
        }
        self.data[j] -= c.data_size;
        self.esum[j] -= pc.energy;
        if pc.delay >= self.dmax[j] {
            self.dmax[j] = self.members[j]
                .iter()
                .map(|&k| self.ctx.pair.get(k, j).delay)
                .fold(0.0, f64::max);
        }
        self.kld[j] = kld_from_counts(&self.counts[j], self.ctx.q);
        self.sum_ln_p -= self.ctx.probs[i].max(f64::MIN_POSITIVE).ln();
        self.n_sel -= 1;
    }

    fn edge_delay_term(&self, j: EdgeId) -> f64 {
        let e = &self.ctx.scenario.edges[j];
        self.ctx.scenario.config.edge_rounds as f64 * self.dmax[j] + e.backhaul_delay
    }

    fn round_delay(&self) -> f64 {
        (0..self.members.len())
            .map(|j| self.edge_delay_term(j))
            .fold(0.0, f64::max)
    }

    fn round_energy(&self) -> f64 {
        let l = self.ctx.scenario.config.edge_rounds as f64;
        self.members
            .iter()
            .enumerate()
            .map(|(j, _)| l * self.esum[j] + self.ctx.scenario.edges[j].backhaul_energy)
            .sum()
    }

    fn continuity(&self) -> f64 {
        if self.n_sel == 0 {
            0.0
        } else {
            (self.sum_ln_p / self.n_sel as f64).exp()
        }
    }

    fn objective(&self) -> f64 {
        match self.ctx.objective {
            ObjectiveKind::WeightedCost => {
                let w = &self.ctx.w;
                w.lambda_t * self.round_delay() + w.lambda_e * self.round_energy()
                    - w.lambda_c * self.continuity()
            }
            ObjectiveKind::MeanDivergence => {
                self.kld.iter().sum::<f64>() / self.kld.len() as f64
            }
        }
    }

    /// Objective change if `i` were assigned to `j`, without mutating.
    fn delta_assign(&self, i: ClientId, j: EdgeId) -> f64 {
        match self.ctx.objective {
            ObjectiveKind::WeightedCost => {
                let w = &self.ctx.w;
                let pc = self.ctx.pair.get(i, j);
                let l = self.ctx.scenario.config.edge_rounds as f64;
                let cur_delay = self.round_delay();
                let new_term = l * self.dmax[j].max(pc.delay)
                    + self.ctx.scenario.edges[j].backhaul_delay;
                let new_delay = (0..self.members.len())
                    .map(|k| if k == j { new_term } else { self.edge_delay_term(k) })
                    .fold(0.0, f64::max);
                let ln_p = self.ctx.probs[i].max(f64::MIN_POSITIVE).ln();
                let new_cont = ((self.sum_ln_p + ln_p) / (self.n_sel + 1) as f64).exp();
                w.lambda_t * (new_delay - cur_delay) + w.lambda_e * l * pc.energy
                    - w.lambda_c * (new_cont - self.continuity())
            }
            ObjectiveKind::MeanDivergence => {
                let c = &self.ctx.scenario.clients[i];
                let mut counts = self.counts[j].clone();
                for (h, &k) in c.label_counts.iter().enumerate() {
                    counts[h] += k;
                }
                (kld_from_counts(&counts, self.ctx.q) - self.kld[j]) / self.kld.len() as f64
            }
        }
    }

    fn edge_feasible(&self, j: EdgeId, mode: ConstraintMode) -> bool {
        let th = &self.ctx.th;
        match mode {
            ConstraintMode::StructuralOnly => true,
            ConstraintMode::DataSizeOnly => self.data[j] as f64 >= th.d_min,
            ConstraintMode::Deterministic => {
                self.kld[j] <= th.kld_max && self.data[j] as f64 >= th.d_min
            }
            ConstraintMode::Chance => {
                let clients = &self.ctx.scenario.clients;
                let bound =
                    markov_kld_bound(&self.members[j], clients, self.ctx.probs, self.ctx.q, th);
                let need = (th.d_min + th.delta_d) * (1.0 - th.epsilon_risk);
                bound <= th.delta_risk
                    && expected_data(&self.members[j], clients, self.ctx.probs) >= need
            }
        }
    }

    fn feasible(&self, mode: ConstraintMode) -> bool {
        (0..self.members.len()).all(|j| self.edge_feasible(j, mode))
    }

    /// Sum of the per-label divergence envelopes on edge `j`. Monotone in the
    /// member set, so exceeding the divergence threshold is a dead end for
    /// the whole subtree in chance mode.
    fn edge_g_sum(&self, j: EdgeId) -> f64 {
        let q = self.ctx.q;
        let clients = &self.ctx.scenario.clients;
        (0..q.len())
            .map(|h| piecewise_bound_g(&self.members[j], clients, h, q[h]))
            .sum()
    }
}

fn open_edges(
    ctx: &SearchContext,
    assoc: &Association,
    i: ClientId,
) -> impl Iterator<Item = EdgeId> {
    let reach: Vec<EdgeId> = ctx.scenario.clients[i]
        .reachable
        .iter()
        .copied()
        .filter(|&j| {
            assoc.load(j) < ctx.scenario.edges[j].max_clients
                && ctx.pair.get(i, j).is_admissible()
        })
        .collect();
    reach.into_iter()
}

struct Dfs<'a, 'b> {
    ctx: &'a SearchContext<'a>,
    opts: &'a SearchOptions,
    order: &'a [ClientId],
    state: &'b mut State<'a>,
    assoc: &'b mut Association,
    /// `suffix_data[t][j]` bounds how much data clients `order[t..]` could
    /// still bring to edge `j`; `suffix_pd` is the same weighted by belief.
    suffix_data: Vec<Vec<u64>>,
    suffix_pd: Vec<Vec<f64>>,
    nodes: u64,
    backtracks: u64,
    exhausted: bool,
}

impl Dfs<'_, '_> {
    fn data_prune(&self, level: usize) -> bool {
        let th = &self.ctx.th;
        match self.opts.mode {
            ConstraintMode::StructuralOnly => false,
            ConstraintMode::Deterministic | ConstraintMode::DataSizeOnly => {
                (0..self.assoc.n_edges()).any(|j| {
                    ((self.state.data[j] + self.suffix_data[level][j]) as f64) < th.d_min
                })
            }
            ConstraintMode::Chance => {
                let need = (th.d_min + th.delta_d) * (1.0 - th.epsilon_risk);
                let clients = &self.ctx.scenario.clients;
                (0..self.assoc.n_edges()).any(|j| {
                    let cur =
                        expected_data(&self.state.members[j], clients, self.ctx.probs);
                    cur + self.suffix_pd[level][j] < need - 1e-9
                })
            }
        }
    }

    fn kld_prune(&self, j: EdgeId) -> bool {
        if self.opts.mode != ConstraintMode::Chance {
            return false;
        }
        self.state.edge_g_sum(j) >= self.ctx.th.kld_max - self.ctx.th.delta_k
    }

    fn run(&mut self, level: usize) -> bool {
        if self.exhausted {
            return false;
        }
        if level == self.order.len() {
            return self.state.feasible(self.opts.mode);
        }
        if self.data_prune(level) {
            return false;
        }
        let i = self.order[level];
        let mut cands: Vec<(f64, EdgeId)> = open_edges(self.ctx, self.assoc, i)
            .map(|j| (self.state.delta_assign(i, j), j))
            .collect();
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for (_, j) in cands {
            self.nodes += 1;
            if self.nodes > self.opts.node_budget {
                self.exhausted = true;
                return false;
            }
            self.state.assign(i, j);
            self.assoc.assign(i, j);
            let dead = self.kld_prune(j);
            if !dead && self.run(level + 1) {
                return true;
            }
            self.assoc.unassign(i);
            self.state.unassign_last(j);
            self.backtracks += 1;
            if self.exhausted {
                return false;
            }
        }
        false
    }
}

fn suffix_potentials(
    ctx: &SearchContext,
    order: &[ClientId],
) -> (Vec<Vec<u64>>, Vec<Vec<f64>>) {
    let m = ctx.scenario.edges.len();
    let mut data = vec![vec![0u64; m]; order.len() + 1];
    let mut pd = vec![vec![0.0f64; m]; order.len() + 1];
    for (t, &i) in order.iter().enumerate().rev() {
        let c = &ctx.scenario.clients[i];
        for j in 0..m {
            data[t][j] = data[t + 1][j];
            pd[t][j] = pd[t + 1][j];
        }
        for &j in &c.reachable {
            if ctx.pair.get(i, j).is_admissible() {
                data[t][j] += c.data_size;
                pd[t][j] += ctx.probs[i] * c.data_size as f64;
            }
        }
    }
    (data, pd)
}

/// Assigns `selected` (ascending ids) on top of `base`, which is kept intact.
/// Under `GainOfCost` a failed greedy pass falls back to depth-first
/// reassignment in greedy order; the other rules are single-pass. Returns a
/// best-effort association with `feasible = false` when nothing admissible
/// satisfies the constraint mode.
pub fn associate(
    ctx: &SearchContext,
    selected: &[ClientId],
    base: Option<&Association>,
    opts: &SearchOptions,
    role: AssocRole,
) -> SolverOutcome {
    match opts.rule {
        AssocRule::GainOfCost => associate_gain(ctx, selected, base, opts, role),
        AssocRule::Random | AssocRule::MinUplink => {
            associate_single_pass(ctx, selected, base, opts, role)
        }
    }
}

fn new_assoc(ctx: &SearchContext, base: Option<&Association>, role: AssocRole) -> Association {
    match base {
        Some(b) => {
            let mut a = b.clone();
            a.role = role;
            a
        }
        None => Association::new(role, ctx.scenario.clients.len(), ctx.scenario.edges.len()),
    }
}

fn outcome(
    ctx: &SearchContext,
    assoc: Association,
    feasible: bool,
    opts: &SearchOptions,
    stats: SolveStats,
) -> SolverOutcome {
    let state = State::new(ctx, &assoc);
    SolverOutcome {
        objective: state.objective(),
        assoc,
        feasible,
        mode: opts.mode,
        stats,
    }
}

fn associate_single_pass(
    ctx: &SearchContext,
    selected: &[ClientId],
    base: Option<&Association>,
    opts: &SearchOptions,
    role: AssocRole,
) -> SolverOutcome {
    let mut assoc = new_assoc(ctx, base, role);
    let mut state = State::new(ctx, &assoc);
    let mut complete = true;
    let mut stats = SolveStats::default();
    let mut rng = rng::stream(opts.seed, tag::ASSOC);
    for &i in selected {
        let edges: Vec<EdgeId> = open_edges(ctx, &assoc, i).collect();
        stats.nodes += 1;
        let pick = match opts.rule {
            AssocRule::Random => edges.choose(&mut rng).copied(),
            _ => edges
                .into_iter()
                .map(|j| (ctx.pair.get(i, j).uplink_delay, j))
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
                .map(|(_, j)| j),
        };
        match pick {
            Some(j) => {
                assoc.assign(i, j);
                state.assign(i, j);
            }
            None => complete = false,
        }
    }
    let feasible = complete && state.feasible(opts.mode);
    outcome(ctx, assoc, feasible, opts, stats)
}

fn associate_gain(
    ctx: &SearchContext,
    selected: &[ClientId],
    base: Option<&Association>,
    opts: &SearchOptions,
    role: AssocRole,
) -> SolverOutcome {
    let mut assoc = new_assoc(ctx, base, role);
    let mut state = State::new(ctx, &assoc);
    let mut stats = SolveStats::default();

    // Clients that can only ever live on one edge go first; everyone else
    // competes on objective increments.
    let mut singles = Vec::new();
    let mut multis = Vec::new();
    for &i in selected {
        let n_open: Vec<EdgeId> = ctx.scenario.clients[i]
            .reachable
            .iter()
            .copied()
            .filter(|&j| ctx.pair.get(i, j).is_admissible())
            .collect();
        if n_open.len() == 1 {
            singles.push((i, n_open[0]));
        } else {
            multis.push(i);
        }
    }
    for &(i, j) in &singles {
        stats.nodes += 1;
        if assoc.load(j) < ctx.scenario.edges[j].max_clients {
            assoc.assign(i, j);
            state.assign(i, j);
        } else {
            // No alternative exists for this client anywhere.
            return outcome(ctx, assoc, false, opts, stats);
        }
    }

    let mut remaining: Vec<ClientId> = multis.clone();
    let mut order: Vec<ClientId> = Vec::with_capacity(multis.len());
    let mut greedy_edges: Vec<EdgeId> = Vec::with_capacity(multis.len());
    while !remaining.is_empty() {
        let mut best: Option<(f64, ClientId, EdgeId)> = None;
        for &i in &remaining {
            for j in open_edges(ctx, &assoc, i) {
                let d = state.delta_assign(i, j);
                let better = match best {
                    None => true,
                    Some((bd, bi, bj)) => {
                        d < bd || (d == bd && (i, j) < (bi, bj))
                    }
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        match best {
            Some((_, i, j)) => {
                stats.nodes += 1;
                assoc.assign(i, j);
                state.assign(i, j);
                order.push(i);
                greedy_edges.push(j);
                remaining.retain(|&k| k != i);
            }
            None => break,
        }
    }

    if remaining.is_empty() && state.feasible(opts.mode) {
        return outcome(ctx, assoc, true, opts, stats);
    }

    // Rewind the greedy placements and retry the same client order,
    // reconsidering edges per client from the cheapest increment up.
    order.extend(remaining.iter().copied());
    for &j in greedy_edges.iter().rev() {
        let i = *state.members[j].last().expect("greedy rewind");
        assoc.unassign(i);
        state.unassign_last(j);
    }
    let (suffix_data, suffix_pd) = suffix_potentials(ctx, &order);
    let mut dfs = Dfs {
        ctx,
        opts,
        order: &order,
        state: &mut state,
        assoc: &mut assoc,
        suffix_data,
        suffix_pd,
        nodes: stats.nodes,
        backtracks: 0,
        exhausted: false,
    };
    let found = dfs.run(0);
    stats.nodes = dfs.nodes;
    stats.backtracks = dfs.backtracks;
    if found {
        return outcome(ctx, assoc, true, opts, stats);
    }

    // Nothing satisfies the constraints (or the budget ran out): hand back
    // the greedy placement as a best effort.
    debug_assert_eq!(
        assoc.selected_count(),
        base.map_or(0, |b| b.selected_count()) + singles.len()
    );
    for (&i, &j) in order.iter().zip(greedy_edges.iter()) {
        assoc.assign(i, j);
        state.assign(i, j);
    }
    outcome(ctx, assoc, false, opts, stats)
}

/// Clients that can never sit on a chance-feasible edge: their own divergence
/// already exceeds the tightened threshold, and the per-edge envelope only
/// grows with more members.
pub fn chance_viable_pool(ctx: &SearchContext, pool: &[ClientId]) -> Vec<ClientId> {
    // For any member set S containing i, the envelope sum is at least
    // client i's own divergence g, so the edge's violation bound is at
    // least p_empty + (1 - p_empty) * g / (kld_max - delta_k) >= g /
    // (kld_max - delta_k). A client above the risk budget on its own can
    // therefore never sit on a feasible edge, whoever joins it.
    let thr = ctx.th.delta_risk * (ctx.th.kld_max - ctx.th.delta_k);
    pool.iter()
        .copied()
        .filter(|&i| {
            kld_from_counts(&ctx.scenario.clients[i].label_counts, ctx.q) <= thr
        })
        .collect()
}

/// Randomized greedy construction of a feasible starting set: shuffle the
/// pool, add clients while infeasible, restart with a fresh order when the
/// pass fails.
pub fn initial_selection(
    ctx: &SearchContext,
    pool: &[ClientId],
    base: Option<&Association>,
    opts: &SearchOptions,
) -> Option<Vec<ClientId>> {
    let mut inner = opts.clone();
    inner.node_budget = opts.node_budget.min(10_000);
    for attempt in 0..opts.init_attempts.max(1) {
        let mut rng = rng::stream2(opts.seed, tag::INIT_SELECT, attempt as u64);
        let mut order = pool.to_vec();
        order.shuffle(&mut rng);
        let mut sel: Vec<ClientId> = Vec::new();
        for &i in &order {
            let pos = sel.binary_search(&i).unwrap_err();
            sel.insert(pos, i);
            let res = associate(ctx, &sel, base, &inner, AssocRole::PlanA);
            if res.feasible {
                return Some(sel);
            }
        }
    }
    None
}

struct Move {
    added: Option<ClientId>,
    removed: Option<ClientId>,
    sel: Vec<ClientId>,
}

fn apply_move(sel: &[ClientId], add: Option<ClientId>, remove: Option<ClientId>) -> Vec<ClientId> {
    let mut out: Vec<ClientId> = sel
        .iter()
        .copied()
        .filter(|&i| Some(i) != remove)
        .collect();
    if let Some(a) = add {
        let pos = out.binary_search(&a).unwrap_err();
        out.insert(pos, a);
    }
    out
}

/// Local search over the selected set. Starts from a feasible seed when one
/// is found, otherwise from the whole pool greedily placed, then sweeps add,
/// remove, and exchange moves against a frozen snapshot, keeping the best
/// candidate of each phase: any feasible one while the incumbent is
/// infeasible, strictly improving feasible ones afterwards. Stops when a
/// full sweep leaves the incumbent unchanged.
pub fn local_search(
    ctx: &SearchContext,
    pool: &[ClientId],
    base: Option<&Association>,
    opts: &SearchOptions,
    role: AssocRole,
) -> (SolverOutcome, Vec<DecisionEntry>) {
    let mut log = Vec::new();
    let pool: Vec<ClientId> = match opts.mode {
        ConstraintMode::Chance => chance_viable_pool(ctx, pool),
        _ => pool.to_vec(),
    };
    let mut sel = initial_selection(ctx, &pool, base, opts).unwrap_or_else(|| pool.clone());
    let mut incumbent = associate(ctx, &sel, base, opts, role);
    let mut stats = incumbent.stats;

    for sweep in 1..=opts.max_sweeps {
        let mut improved = false;
        for op in [MoveKind::Add, MoveKind::Remove, MoveKind::Exchange] {
            let snapshot = sel.clone();
            let outside: Vec<ClientId> = pool
                .iter()
                .copied()
                .filter(|i| snapshot.binary_search(i).is_err())
                .collect();
            let moves: Vec<Move> = match op {
                MoveKind::Add => outside
                    .iter()
                    .map(|&a| Move {
                        added: Some(a),
                        removed: None,
                        sel: apply_move(&snapshot, Some(a), None),
                    })
                    .collect(),
                MoveKind::Remove => snapshot
                    .iter()
                    .map(|&r| Move {
                        added: None,
                        removed: Some(r),
                        sel: apply_move(&snapshot, None, Some(r)),
                    })
                    .collect(),
                MoveKind::Exchange => snapshot
                    .iter()
                    .flat_map(|&r| {
                        outside.iter().map(move |&a| (r, a))
                    })
                    .map(|(r, a)| Move {
                        added: Some(a),
                        removed: Some(r),
                        sel: apply_move(&snapshot, Some(a), Some(r)),
                    })
                    .collect(),
            };
            if moves.is_empty() {
                continue;
            }
            let evals = par::map_slice(opts.exec, &moves, |mv| {
                associate(ctx, &mv.sel, base, opts, role)
            });
            for e in &evals {
                stats.nodes += e.stats.nodes;
                stats.backtracks += e.stats.backtracks;
            }
            let best_idx = (0..moves.len()).min_by(|&a, &b| {
                (!evals[a].feasible)
                    .cmp(&!evals[b].feasible)
                    .then(evals[a].objective.partial_cmp(&evals[b].objective).unwrap())
                    .then(a.cmp(&b))
            });
            if let Some(bi) = best_idx {
                let cand = &evals[bi];
                let accept = cand.feasible
                    && (!incumbent.feasible || cand.objective < incumbent.objective);
                log.push(DecisionEntry {
                    sweep,
                    op,
                    added: moves[bi].added,
                    removed: moves[bi].removed,
                    objective: cand.objective,
                    delta: cand.objective - incumbent.objective,
                    feasible: cand.feasible,
                    accepted: accept,
                });
                if accept {
                    sel = moves[bi].sel.clone();
                    incumbent = cand.clone();
                    improved = true;
                }
            }
        }
        stats.sweeps = sweep;
        if !improved {
            break;
        }
    }

    incumbent.stats = stats;
    (incumbent, log)
}
