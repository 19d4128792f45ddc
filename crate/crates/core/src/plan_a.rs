//! Long-term client selection and association under believed online
//! probabilities (stage one).
//!
//! The planner assumes every selected client participates, prices rounds with
//! the weighted delay-energy objective minus a continuity reward, and guards
//! data quality with probabilistic surrogates: a divergence bound that holds
//! with probability at least `1 - delta_risk`, and an expected data volume
//! covering `d_min + delta_d` up to `epsilon_risk`. When no plan satisfies
//! the surrogates the planner falls back to the deterministic per-edge
//! constraints over full membership; the outcome's `mode` declares which
//! contract the plan actually meets.

use crate::assoc::AssocRole;
use crate::cost::PairCosts;
use crate::scenario::Scenario;
use crate::search::{
    self, AssocRule, ConstraintMode, DecisionEntry, ObjectiveKind, SearchContext, SearchOptions,
    SolverOutcome,
};
use crate::ClientId;

/// A completed long-term plan plus the move log that produced it.
#[derive(Debug, Clone)]
pub struct LongTermPlan {
    pub outcome: SolverOutcome,
    pub log: Vec<DecisionEntry>,
}

fn context<'a>(
    scenario: &'a Scenario,
    pair: &'a PairCosts,
    probs: &'a [f64],
    q: &'a [f64],
) -> SearchContext<'a> {
    SearchContext {
        scenario,
        pair,
        q,
        th: scenario.config.thresholds(),
        w: scenario.config.weights(),
        probs,
        objective: ObjectiveKind::WeightedCost,
    }
}

/// Places a fixed client set on edges by greedy cost gain with bounded
/// backtracking, against the long-term objective.
pub fn greedy_association(
    scenario: &Scenario,
    pair: &PairCosts,
    probs: &[f64],
    q: &[f64],
    selected: &[ClientId],
    opts: &SearchOptions,
) -> SolverOutcome {
    let ctx = context(scenario, pair, probs, q);
    search::associate(&ctx, selected, None, opts, AssocRole::PlanA)
}

/// Full stage-one solve: local search over the selected set with greedy
/// association inside, chance constraints first, deterministic fallback.
/// `opts.mode` picks the starting contract; anything other than `Chance`
/// skips the fallback ladder.
pub fn select_long_term(
    scenario: &Scenario,
    pair: &PairCosts,
    probs: &[f64],
    q: &[f64],
    opts: &SearchOptions,
) -> LongTermPlan {
    let ctx = context(scenario, pair, probs, q);
    let pool: Vec<ClientId> = (0..scenario.n_clients()).collect();
    let mut opts = opts.clone();
    opts.rule = AssocRule::GainOfCost;

    let (outcome, log) = search::local_search(&ctx, &pool, None, &opts, AssocRole::PlanA);
    if outcome.feasible || opts.mode != ConstraintMode::Chance {
        return LongTermPlan { outcome, log };
    }

    let mut fallback = opts.clone();
    fallback.mode = ConstraintMode::Deterministic;
    let (outcome, log) = search::local_search(&ctx, &pool, None, &fallback, AssocRole::PlanA);
    LongTermPlan { outcome, log }
}
