//! Command-line front end: single runs, multi-policy benchmark sweeps,
//! and bound-validation campaigns over the hfl-core simulator.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hfl_core::baselines::Policy;
use hfl_core::cost::pair_cost_matrix;
use hfl_core::divergence::{
    estimate_violation_rate, exact_violation_prob, expected_data, markov_kld_bound, ViolationKind,
};
use hfl_core::engine::{metrics_csv, run_experiment, RunOptions, RunPolicy, RunResult};
use hfl_core::par::{self, ExecMode};
use hfl_core::plan_a;
use hfl_core::scenario::{generate_scenario, load_config, Scenario, Thresholds};

#[derive(Parser)]
#[command(name = "hfl", version, about = "Hierarchical federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one policy over one scenario and write the round artifacts.
    Run(RunArgs),
    /// Compare policies across seeds on cost and rounds-to-target.
    Bench(BenchArgs),
    /// Check the probabilistic constraint bounds of the long-term plan
    /// against Monte-Carlo and exact enumeration.
    ValidateBounds(ValidateArgs),
    /// Emit accuracy-vs-round and cost-vs-policy series for plotting.
    PlotData(PlotArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run the decision stack only, skipping model training.
    #[arg(long)]
    no_train: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Decision policy: stagewise or one of the benchmark names.
    #[arg(long, default_value = "stagewise")]
    policy: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated policies to compare.
    #[arg(long, default_value = "stagewise,orig_prob,kld_min,client_sel_only,c2e_assoc_only,c2e_greedy_assoc,fed_cs")]
    policies: String,
    /// Number of consecutive seeds, starting at the config seed.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Accuracy defining rounds-to-target; defaults to the config value.
    #[arg(long)]
    target_accuracy: Option<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Monte-Carlo participation samples.
    #[arg(long, default_value_t = 20_000)]
    trials: u64,
}

#[derive(Args)]
struct PlotArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated policies to include.
    #[arg(long, default_value = "stagewise,orig_prob,kld_min,client_sel_only,c2e_assoc_only,c2e_greedy_assoc,fed_cs")]
    policies: String,
}

enum CliError {
    Config(String),
    Assertion(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Assertion(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Assertion(m) | CliError::Io(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Bench(args) => cmd_bench(&args),
        Cmd::ValidateBounds(args) => cmd_validate_bounds(&args),
        Cmd::PlotData(args) => cmd_plot_data(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn load_scenario(common: &CommonArgs) -> Result<Scenario, CliError> {
    let mut cfg = load_config(&common.config).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    generate_scenario(&cfg).map_err(|e| CliError::Config(e.to_string()))
}

fn parse_policy(name: &str) -> Result<RunPolicy, CliError> {
    if name == "stagewise" {
        return Ok(RunPolicy::Stagewise);
    }
    Policy::ALL
        .iter()
        .find(|p| p.name() == name)
        .map(|&p| RunPolicy::Baseline(p))
        .ok_or_else(|| {
            CliError::Config(format!(
                "unknown policy `{name}`; expected stagewise or one of {}",
                Policy::ALL.map(|p| p.name()).join(", ")
            ))
        })
}

fn parse_policies(list: &str) -> Result<Vec<RunPolicy>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_policy)
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn manifest_json(scenario: &Scenario, policy: &str) -> String {
    let manifest = serde_json::json!({
        "version": format!("hfl-{}", env!("CARGO_PKG_VERSION")),
        "policy": policy,
        "seed": scenario.config.seed,
        "config": scenario.config,
    });
    serde_json::to_string_pretty(&manifest).expect("manifest serializes")
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.common)?;
    let policy = parse_policy(&args.policy)?;
    let opts = RunOptions {
        policy,
        train: !args.common.no_train,
        ..RunOptions::default()
    };
    let result = run_experiment(&scenario, &opts);

    let run_id = format!("{}-seed{}", policy.name(), scenario.config.seed);
    let dir = args.common.out.join(&run_id);
    create_dir(&dir)?;
    write_file(&dir.join("metrics.csv"), &metrics_csv(&result.metrics))?;
    write_file(&dir.join("manifest.json"), &manifest_json(&scenario, policy.name()))?;

    let mut decisions = String::new();
    for (k, plan) in result.plans.iter().enumerate() {
        for entry in &plan.log {
            let mut line = serde_json::to_value(entry).expect("decision entry serializes");
            line["plan"] = serde_json::json!(k);
            decisions.push_str(&line.to_string());
            decisions.push('\n');
        }
    }
    write_file(&dir.join("decisions.jsonl"), &decisions)?;

    let mut repairs = String::new();
    for (round, report) in result.repairs.iter().enumerate() {
        let mut line = serde_json::to_value(report).expect("repair report serializes");
        line["round"] = serde_json::json!(round);
        repairs.push_str(&line.to_string());
        repairs.push('\n');
    }
    write_file(&dir.join("repairs.jsonl"), &repairs)?;

    let last = result.metrics.last();
    println!(
        "wrote {} rounds to {} (final accuracy {}, feasible rounds {}/{})",
        result.metrics.len(),
        dir.display(),
        last.map_or_else(|| "n/a".into(), |m| format!("{:.4}", m.accuracy)),
        result.metrics.iter().filter(|m| m.feasible).count(),
        result.metrics.len(),
    );
    Ok(())
}

struct BenchRow {
    policy: &'static str,
    median_rounds: f64,
    mean_total_objective: f64,
    mean_decision_us: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn fmt_rounds(r: f64) -> String {
    if r.is_finite() {
        format!("{r}")
    } else {
        "inf".into()
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.common)?;
    let policies = parse_policies(&args.policies)?;
    if args.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let target = args
        .target_accuracy
        .unwrap_or(scenario.config.target_accuracy);

    let jobs: Vec<(RunPolicy, u64)> = policies
        .iter()
        .flat_map(|&p| (0..args.seeds).map(move |k| (p, scenario.config.seed + k)))
        .collect();
    let runs: Vec<RunResult> = par::map_slice(ExecMode::default(), &jobs, |&(policy, seed)| {
        let mut cfg = scenario.config.clone();
        cfg.seed = seed;
        let sc = generate_scenario(&cfg).expect("validated config stays valid under reseeding");
        run_experiment(
            &sc,
            &RunOptions {
                policy,
                train: !args.common.no_train,
                ..RunOptions::default()
            },
        )
    });

    let rows: Vec<BenchRow> = policies
        .iter()
        .enumerate()
        .map(|(pi, &policy)| {
            let span = pi * args.seeds as usize..(pi + 1) * args.seeds as usize;
            let per_seed = &runs[span];
            let rounds: Vec<f64> = per_seed
                .iter()
                .map(|r| {
                    r.rounds_to_target(target)
                        .map_or(f64::INFINITY, |g| g as f64)
                })
                .collect();
            let totals: Vec<f64> = per_seed
                .iter()
                .map(|r| r.metrics.iter().map(|m| m.objective).sum())
                .collect();
            let decisions: Vec<f64> = per_seed
                .iter()
                .flat_map(|r| r.metrics.iter().map(|m| m.decision_nanos as f64 / 1e3))
                .collect();
            BenchRow {
                policy: policy.name(),
                median_rounds: median(rounds),
                mean_total_objective: totals.iter().sum::<f64>() / totals.len() as f64,
                mean_decision_us: decisions.iter().sum::<f64>() / decisions.len() as f64,
            }
        })
        .collect();

    let mut csv = String::from("policy,median_rounds_to_target,mean_total_objective,mean_decision_us\n");
    for row in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            row.policy,
            fmt_rounds(row.median_rounds),
            row.mean_total_objective,
            row.mean_decision_us
        );
    }
    create_dir(&args.common.out)?;
    write_file(&args.common.out.join("bench.csv"), &csv)?;

    println!(
        "{:<18} {:>16} {:>20} {:>18}",
        "policy", "rounds-to-target", "mean total objective", "mean decision (us)"
    );
    for row in &rows {
        println!(
            "{:<18} {:>16} {:>20.4} {:>18.1}",
            row.policy,
            fmt_rounds(row.median_rounds),
            row.mean_total_objective,
            row.mean_decision_us
        );
    }
    Ok(())
}

fn cmd_validate_bounds(args: &ValidateArgs) -> Result<(), CliError> {
    const DOMINANCE_TOL: f64 = 1e-12;
    const ENUMERATION_CAP: usize = 20;

    let scenario = load_scenario(&args.common)?;
    let pair = pair_cost_matrix(&scenario, &scenario.channel.gains);
    let probs = scenario.online_probs();
    let q = scenario.reference_distribution();
    let th = scenario.config.thresholds();

    let mut opts =
        hfl_core::search::SearchOptions::from_config(&scenario.config, scenario.config.seed);
    opts.mode = hfl_core::search::ConstraintMode::Chance;
    let plan = plan_a::select_long_term(&scenario, &pair, &probs, &q, &opts);
    println!(
        "long-term plan: {} clients, mode {:?}, feasible {}",
        plan.outcome.assoc.selected_count(),
        plan.outcome.mode,
        plan.outcome.feasible
    );

    let est = estimate_violation_rate(
        &plan.outcome.assoc,
        &scenario,
        &q,
        &th,
        args.trials,
        scenario.config.seed,
        ExecMode::default(),
    );
    println!(
        "divergence risk: budget delta = {:.4}, realized delta-hat = {:.4} ({} trials)",
        th.delta_risk,
        est.delta_hat(),
        est.trials
    );
    println!(
        "data-size risk:  budget epsilon = {:.4}, realized epsilon-hat = {:.4}",
        th.epsilon_risk,
        est.epsilon_hat()
    );

    // Exact enumeration per edge where tractable: the Markov-style bounds
    // must dominate the exact violation probabilities, and the Monte-Carlo
    // estimate of the same relaxed event must agree within 3 sigma.
    let relaxed = Thresholds {
        kld_max: th.kld_max - th.delta_k,
        d_min: th.d_min + th.delta_d,
        delta_k: 0.0,
        delta_d: 0.0,
        ..th
    };
    let relaxed_est = estimate_violation_rate(
        &plan.outcome.assoc,
        &scenario,
        &q,
        &relaxed,
        args.trials,
        scenario.config.seed + 1,
        ExecMode::default(),
    );
    let mut failures = Vec::new();
    for j in 0..scenario.n_edges() {
        let members = plan.outcome.assoc.clients_of(j);
        if members.is_empty() || members.len() > ENUMERATION_CAP {
            continue;
        }
        let exact_kld =
            exact_violation_prob(&members, &scenario.clients, &q, &th, ViolationKind::Divergence);
        let bound_kld = markov_kld_bound(&members, &scenario.clients, &probs, &q, &th);
        let exact_data =
            exact_violation_prob(&members, &scenario.clients, &q, &th, ViolationKind::DataSize);
        let data_floor =
            1.0 - expected_data(&members, &scenario.clients, &probs) / (th.d_min + th.delta_d);
        println!(
            "edge {j}: exact divergence violation {exact_kld:.6} <= bound {bound_kld:.6}; \
             exact data violation {exact_data:.6} >= floor {data_floor:.6}"
        );
        if exact_kld > bound_kld + DOMINANCE_TOL {
            failures.push(format!(
                "edge {j}: exact divergence violation {exact_kld} exceeds bound {bound_kld}"
            ));
        }
        if exact_data < data_floor - DOMINANCE_TOL {
            failures.push(format!(
                "edge {j}: exact data violation {exact_data} below floor {data_floor}"
            ));
        }
        for (label, exact, sampled) in [
            ("divergence", exact_kld, relaxed_est.kld_rate[j]),
            ("data", exact_data, relaxed_est.data_rate[j]),
        ] {
            let sigma = (exact * (1.0 - exact) / args.trials as f64).sqrt();
            if (sampled - exact).abs() > 3.0 * sigma + 1e-9 {
                failures.push(format!(
                    "edge {j}: Monte-Carlo {label} rate {sampled} vs exact {exact} outside 3 sigma"
                ));
            }
        }
    }

    if failures.is_empty() {
        println!("dominance checks passed on all enumerable edges");
        Ok(())
    } else {
        Err(CliError::Assertion(failures.join("; ")))
    }
}

fn cmd_plot_data(args: &PlotArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.common)?;
    let policies = parse_policies(&args.policies)?;

    let runs: Vec<RunResult> = par::map_slice(ExecMode::default(), &policies, |&policy| {
        run_experiment(
            &scenario,
            &RunOptions {
                policy,
                train: !args.common.no_train,
                ..RunOptions::default()
            },
        )
    });

    let mut accuracy = String::from("round");
    for policy in &policies {
        let _ = write!(accuracy, ",{}", policy.name());
    }
    accuracy.push('\n');
    for r in 0..scenario.config.global_rounds as usize {
        let _ = write!(accuracy, "{r}");
        for run in &runs {
            let _ = write!(accuracy, ",{}", run.metrics[r].accuracy);
        }
        accuracy.push('\n');
    }

    let mut cost = String::from("policy,total_delay,total_energy,total_objective,mean_decision_us\n");
    for (policy, run) in policies.iter().zip(&runs) {
        let total_delay: f64 = run.metrics.iter().map(|m| m.delay).sum();
        let total_energy: f64 = run.metrics.iter().map(|m| m.energy).sum();
        let total_objective: f64 = run.metrics.iter().map(|m| m.objective).sum();
        let mean_decision: f64 = run
            .metrics
            .iter()
            .map(|m| m.decision_nanos as f64 / 1e3)
            .sum::<f64>()
            / run.metrics.len() as f64;
        let _ = writeln!(
            cost,
            "{},{},{},{},{}",
            policy.name(),
            total_delay,
            total_energy,
            total_objective,
            mean_decision
        );
    }

    create_dir(&args.common.out)?;
    write_file(&args.common.out.join("accuracy_vs_round.csv"), &accuracy)?;
    write_file(&args.common.out.join("cost_vs_policy.csv"), &cost)?;
    println!(
        "wrote accuracy_vs_round.csv and cost_vs_policy.csv to {}",
        args.common.out.display()
    );
    Ok(())
}
