//! End-to-end experiment driver.
//!
//! A run plays out on a fixed participation trace: a warm-up window feeds
//! the availability estimator, then the live rounds execute the chosen
//! policy. The stagewise policy plans once on estimated probabilities and
//! repairs per round; baselines solve every round from scratch. Decision
//! wall time is measured around the policy call alone so policies with very
//! different work profiles stay comparable.

use std::time::Instant;

use serde::Serialize;

use crate::assoc::Association;
use crate::baselines::{self, Policy};
use crate::cost::{pair_cost_matrix, round_cost, PairCosts};
use crate::learner::{self, Model};
use crate::par::ExecMode;
use crate::participation::{estimate_online_prob, sample_trace, ParticipationTrace};
use crate::plan_a::{self, LongTermPlan};
use crate::plan_b::{self, RepairReport};
use crate::rng::tag;
use crate::scenario::Scenario;
use crate::search::{ConstraintMode, SearchOptions};

/// What decides each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunPolicy {
    /// Long-term plan plus per-round repair.
    Stagewise,
    /// One of the per-round benchmark policies.
    Baseline(Policy),
}

impl RunPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            RunPolicy::Stagewise => "stagewise",
            RunPolicy::Baseline(p) => p.name(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub policy: RunPolicy,
    pub exec: ExecMode,
    /// Skip the learning loop to benchmark decisions alone.
    pub train: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            policy: RunPolicy::Stagewise,
            exec: ExecMode::default(),
            train: true,
        }
    }
}

/// One live round, flattened for CSV export.
#[derive(Debug, Clone, Serialize)]
pub struct RoundMetrics {
    pub round: u64,
    pub policy: &'static str,
    pub selected: usize,
    pub online: usize,
    pub delay: f64,
    pub energy: f64,
    pub objective: f64,
    pub feasible: bool,
    pub decision_nanos: u64,
    pub dropouts: usize,
    pub substitutions: usize,
    pub fallback: bool,
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug)]
pub struct RunResult {
    pub metrics: Vec<RoundMetrics>,
    /// Planning events, one entry per (re)plan. Empty for baselines.
    pub plans: Vec<LongTermPlan>,
    pub repairs: Vec<RepairReport>,
    pub round_assocs: Vec<Association>,
    /// Estimated per-client availability at the last planning event.
    pub estimates: Vec<f64>,
    pub trace: ParticipationTrace,
    pub final_model: Option<Model>,
}

impl RunResult {
    /// First live round whose test accuracy reaches `target`, if any.
    pub fn rounds_to_target(&self, target: f64) -> Option<u64> {
        self.metrics
            .iter()
            .find(|m| m.accuracy >= target)
            .map(|m| m.round)
    }
}

pub fn metrics_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(
        "round,policy,selected,online,delay,energy,objective,feasible,decision_nanos,\
         dropouts,substitutions,fallback,accuracy,loss\n",
    );
    for m in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m.round,
            m.policy,
            m.selected,
            m.online,
            m.delay,
            m.energy,
            m.objective,
            m.feasible,
            m.decision_nanos,
            m.dropouts,
            m.substitutions,
            m.fallback,
            m.accuracy,
            m.loss
        ));
    }
    out
}

fn estimate_all(scenario: &Scenario, trace: &ParticipationTrace, upto: usize) -> Vec<f64> {
    let cfg = &scenario.config;
    (0..scenario.n_clients())
        .map(|i| {
            let history = trace.history(i, upto);
            estimate_online_prob(
                history,
                cfg.window_len as usize,
                cfg.window_count as usize,
            )
                .expect("warm-up window sized by construction")
        })
        .collect()
}

/// Runs the full experiment described by the scenario config.
pub fn run_experiment(scenario: &Scenario, opts: &RunOptions) -> RunResult {
    let cfg = &scenario.config;
    let seed = cfg.seed;
    let warmup = (cfg.window_len * cfg.window_count) as usize;
    let rounds = cfg.global_rounds as usize;
    let probs_true = scenario.online_probs();
    let trace = sample_trace(&probs_true, warmup + rounds, seed);
    let q = scenario.reference_distribution();

    let base_pair = pair_cost_matrix(scenario, &scenario.channel.gains);
    let mut search_opts = SearchOptions::from_config(cfg, seed);
    search_opts.exec = opts.exec;

    let task = opts.train.then(|| learner::generate_task(scenario));
    let mut global = Model::zeros(cfg.n_labels, cfg.n_labels);

    let mut plans: Vec<LongTermPlan> = Vec::new();
    let mut estimates = Vec::new();
    if opts.policy == RunPolicy::Stagewise {
        estimates = estimate_all(scenario, &trace, warmup);
        let mut plan_opts = search_opts.clone();
        plan_opts.mode = ConstraintMode::Chance;
        plans.push(plan_a::select_long_term(
            scenario, &base_pair, &estimates, &q, &plan_opts,
        ));
    }

    let mut metrics = Vec::with_capacity(rounds);
    let mut repairs = Vec::new();
    let mut round_assocs = Vec::with_capacity(rounds);
    let mut round_pair: PairCosts;

    for r in 0..rounds {
        let pair: &PairCosts = if cfg.dynamic_channels {
            let channel = scenario.resample_channel((warmup + r) as u64);
            round_pair = pair_cost_matrix(scenario, &channel.gains);
            &round_pair
        } else {
            &base_pair
        };
        let xi = trace.column(warmup + r);

        if opts.policy == RunPolicy::Stagewise
            && cfg.replan_period > 0
            && r > 0
            && r % cfg.replan_period as usize == 0
        {
            estimates = estimate_all(scenario, &trace, warmup + r);
            let mut plan_opts = search_opts.clone();
            plan_opts.mode = ConstraintMode::Chance;
            plans.push(plan_a::select_long_term(
                scenario, pair, &estimates, &q, &plan_opts,
            ));
        }

        let started = Instant::now();
        let (assoc, feasible, report) = match opts.policy {
            RunPolicy::Stagewise => {
                let plan = &plans.last().expect("planned above").outcome.assoc;
                let mut repair_opts = search_opts.clone();
                repair_opts.seed = crate::rng::derive(seed, tag::REPAIR ^ r as u64);
                let (assoc, report) =
                    plan_b::repair_round(scenario, pair, plan, &xi, &q, &repair_opts);
                (assoc, report.feasible, Some(report))
            }
            RunPolicy::Baseline(policy) => {
                let mut round_opts = search_opts.clone();
                round_opts.seed = crate::rng::derive(seed, tag::POLICY ^ r as u64);
                let out = baselines::solve_round(policy, scenario, pair, &xi, &q, &round_opts);
                (out.assoc, out.feasible, None)
            }
        };
        let decision_nanos = started.elapsed().as_nanos() as u64;

        let (delay, energy) = round_cost(&assoc, &xi, pair, &scenario.edges, cfg.edge_rounds);
        let w = cfg.weights();
        let objective = w.lambda_t * delay + w.lambda_e * energy;

        let (accuracy, loss) = match &task {
            Some(task) => {
                global =
                    learner::hierarchical_round(&global, task, scenario, &assoc, &xi, r as u64, seed);
                (
                    learner::accuracy(&global, &task.test),
                    learner::loss(&global, &task.test),
                )
            }
            None => (f64::NAN, f64::NAN),
        };

        metrics.push(RoundMetrics {
            round: r as u64,
            policy: opts.policy.name(),
            selected: assoc.selected_count(),
            online: xi.iter().filter(|&&b| b).count(),
            delay,
            energy: energy / cfg.energy_divisor,
            objective,
            feasible,
            decision_nanos,
            dropouts: report.as_ref().map_or(0, |rep| rep.dropouts.len()),
            substitutions: report.as_ref().map_or(0, |rep| rep.substitutions.len()),
            fallback: report.as_ref().is_some_and(|rep| rep.fallback),
            accuracy,
            loss,
        });
        if let Some(rep) = report {
            repairs.push(rep);
        }
        round_assocs.push(assoc);
    }

    RunResult {
        metrics,
        plans,
        repairs,
        round_assocs,
        estimates,
        trace,
        final_model: task.map(|_| global),
    }
}
