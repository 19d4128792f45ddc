//! Network scenario: client and edge-server profiles, geometry,
//! channel state, and the experiment configuration they are generated
//! from.
//!
//! A configuration is a flat `key = value` text document (TOML
//! grammar, no tables). Every key has a default, so the empty document
//! is a valid config describing the reference setup: 93 clients, 4
//! edge servers, 10 labels, 500 m x 500 m region. `generate_scenario`
//! expands a config into concrete per-client and per-edge parameters
//! using only the config seed, so equal configs yield equal scenarios.

use serde::{Deserialize, Serialize};

use crate::rng::{self, tag};
use crate::{ClientId, EdgeId};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Experiment configuration. Field names are the config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    // Population shape.
    pub n_clients: usize,
    pub n_edges: usize,
    pub n_labels: usize,
    pub labels_per_client_min: usize,
    pub labels_per_client_max: usize,
    pub data_size_min: u64,
    pub data_size_max: u64,

    // Client hardware and radio.
    pub cpu_freq_min: f64,
    pub cpu_freq_max: f64,
    pub cycles_min: f64,
    pub cycles_max: f64,
    pub tx_power_min: f64,
    pub tx_power_max: f64,
    pub online_prob_min: f64,
    pub online_prob_max: f64,
    pub capacitance: f64,
    pub batch_fraction: f64,

    // Edge servers.
    pub bandwidth_hz: f64,
    pub max_clients_min: usize,
    pub max_clients_max: usize,
    pub backhaul_delay_min: f64,
    pub backhaul_delay_max: f64,
    pub backhaul_energy_min: f64,
    pub backhaul_energy_max: f64,

    // Channel.
    pub noise_psd_w_per_hz: f64,
    pub model_bits: f64,
    pub channel_gain_min: f64,
    pub channel_gain_max: f64,
    pub dynamic_channels: bool,

    // Geometry.
    pub region_size_m: f64,
    pub coverage_radius_m: f64,

    // Objective weights and constraint thresholds.
    pub lambda_t: f64,
    pub lambda_e: f64,
    pub lambda_c: f64,
    pub kld_max: f64,
    pub d_min: f64,
    pub delta_k: f64,
    pub delta_d: f64,
    pub delta_risk: f64,
    pub epsilon_risk: f64,

    // Training loop shape.
    pub local_steps: u32,
    pub edge_rounds: u32,
    pub global_rounds: u32,

    // Per-round repair.
    pub psi_min: f64,
    pub p_min_points: usize,
    pub similarity_descending: bool,

    // Availability estimator windows.
    pub window_len: u32,
    pub window_count: u32,

    // Long-term planner budgets.
    pub plan_a_max_sweeps: u32,
    pub backtrack_node_budget: u64,
    pub init_attempts: u32,
    pub replan_period: u32,

    // Synthetic learning task.
    pub learning_rate: f64,
    pub class_separation: f64,
    pub test_per_label: usize,
    pub target_accuracy: f64,

    // Reporting.
    pub energy_divisor: f64,

    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_clients: 93,
            n_edges: 4,
            n_labels: 10,
            labels_per_client_min: 1,
            labels_per_client_max: 3,
            data_size_min: 255,
            data_size_max: 1013,
            cpu_freq_min: 1e9,
            cpu_freq_max: 1e10,
            cycles_min: 30.0,
            cycles_max: 100.0,
            tx_power_min: 0.2,
            tx_power_max: 0.8,
            online_prob_min: 0.5,
            online_prob_max: 1.0,
            capacitance: 1e-28,
            batch_fraction: 1.0,
            bandwidth_hz: 1e6,
            max_clients_min: 8,
            max_clients_max: 12,
            backhaul_delay_min: 0.160,
            backhaul_delay_max: 0.200,
            backhaul_energy_min: 0.5,
            backhaul_energy_max: 1.0,
            noise_psd_w_per_hz: 10f64.powf(-20.4),
            model_bits: 1e6,
            channel_gain_min: 1e-9,
            channel_gain_max: 1e-8,
            dynamic_channels: false,
            region_size_m: 500.0,
            coverage_radius_m: 250.0,
            lambda_t: 0.5,
            lambda_e: 0.5,
            lambda_c: 1.0,
            kld_max: 0.2,
            d_min: 2500.0,
            delta_k: 0.05,
            delta_d: 250.0,
            delta_risk: 0.2,
            epsilon_risk: 0.2,
            local_steps: 5,
            edge_rounds: 3,
            global_rounds: 30,
            psi_min: 0.99,
            p_min_points: 2,
            similarity_descending: true,
            window_len: 10,
            window_count: 5,
            plan_a_max_sweeps: 50,
            backtrack_node_budget: 1_000_000,
            init_attempts: 10,
            replan_period: 0,
            learning_rate: 0.1,
            class_separation: 4.0,
            test_per_label: 50,
            target_accuracy: 0.9,
            energy_divisor: 1.0,
            seed: 1,
        }
    }
}

/// Objective weights (delay, energy, continuity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub lambda_t: f64,
    pub lambda_e: f64,
    pub lambda_c: f64,
}

/// Constraint thresholds shared by the planners and the checkers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Per-edge divergence ceiling.
    pub kld_max: f64,
    /// Per-edge minimum aggregated data size.
    pub d_min: f64,
    /// Divergence margin subtracted from `kld_max` in the
    /// probabilistic surrogate.
    pub delta_k: f64,
    /// Data-size margin added to `d_min` in the probabilistic
    /// surrogate.
    pub delta_d: f64,
    /// Tolerated probability of a divergence violation.
    pub delta_risk: f64,
    /// Tolerated probability of a data-size violation.
    pub epsilon_risk: f64,
}

impl ScenarioConfig {
    pub fn weights(&self) -> Weights {
        Weights {
            lambda_t: self.lambda_t,
            lambda_e: self.lambda_e,
            lambda_c: self.lambda_c,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            kld_max: self.kld_max,
            d_min: self.d_min,
            delta_k: self.delta_k,
            delta_d: self.delta_d,
            delta_risk: self.delta_risk,
            epsilon_risk: self.epsilon_risk,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(key: &'static str, reason: impl Into<String>) -> ConfigError {
            ConfigError::Invalid {
                key,
                reason: reason.into(),
            }
        }
        let positive = |key, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(key, format!("must be positive and finite, got {v}")))
            }
        };
        let range_f =
            |kmin: &'static str, kmax: &'static str, lo: f64, hi: f64| -> Result<(), ConfigError> {
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(bad(kmin, "range bounds must be finite"));
                }
                if lo > hi {
                    return Err(bad(kmax, format!("must be >= {kmin} ({lo} > {hi})")));
                }
                Ok(())
            };

        if self.n_clients == 0 {
            return Err(bad("n_clients", "must be at least 1"));
        }
        if self.n_edges == 0 {
            return Err(bad("n_edges", "must be at least 1"));
        }
        if self.n_labels == 0 {
            return Err(bad("n_labels", "must be at least 1"));
        }
        if self.labels_per_client_min == 0 {
            return Err(bad("labels_per_client_min", "must be at least 1"));
        }
        if self.labels_per_client_min > self.labels_per_client_max {
            return Err(bad("labels_per_client_max", "must be >= labels_per_client_min"));
        }
        if self.labels_per_client_max > self.n_labels {
            return Err(bad("labels_per_client_max", "cannot exceed n_labels"));
        }
        if self.data_size_min == 0 {
            return Err(bad("data_size_min", "must be at least 1"));
        }
        if self.data_size_min > self.data_size_max {
            return Err(bad("data_size_max", "must be >= data_size_min"));
        }
        positive("cpu_freq_min", self.cpu_freq_min)?;
        range_f("cpu_freq_min", "cpu_freq_max", self.cpu_freq_min, self.cpu_freq_max)?;
        positive("cycles_min", self.cycles_min)?;
        range_f("cycles_min", "cycles_max", self.cycles_min, self.cycles_max)?;
        positive("tx_power_min", self.tx_power_min)?;
        range_f("tx_power_min", "tx_power_max", self.tx_power_min, self.tx_power_max)?;
        if !(self.online_prob_min > 0.0 && self.online_prob_min <= 1.0) {
            return Err(bad("online_prob_min", "must lie in (0, 1]"));
        }
        if !(self.online_prob_max >= self.online_prob_min && self.online_prob_max <= 1.0) {
            return Err(bad("online_prob_max", "must lie in [online_prob_min, 1]"));
        }
        positive("capacitance", self.capacitance)?;
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(bad("batch_fraction", "must lie in (0, 1]"));
        }
        positive("bandwidth_hz", self.bandwidth_hz)?;
        if self.max_clients_min == 0 {
            return Err(bad("max_clients_min", "must be at least 1"));
        }
        if self.max_clients_min > self.max_clients_max {
            return Err(bad("max_clients_max", "must be >= max_clients_min"));
        }
        if self.backhaul_delay_min < 0.0 {
            return Err(bad("backhaul_delay_min", "must be non-negative"));
        }
        range_f(
            "backhaul_delay_min",
            "backhaul_delay_max",
            self.backhaul_delay_min,
            self.backhaul_delay_max,
        )?;
        if self.backhaul_energy_min < 0.0 {
            return Err(bad("backhaul_energy_min", "must be non-negative"));
        }
        range_f(
            "backhaul_energy_min",
            "backhaul_energy_max",
            self.backhaul_energy_min,
            self.backhaul_energy_max,
        )?;
        positive("noise_psd_w_per_hz", self.noise_psd_w_per_hz)?;
        positive("model_bits", self.model_bits)?;
        positive("channel_gain_min", self.channel_gain_min)?;
        range_f(
            "channel_gain_min",
            "channel_gain_max",
            self.channel_gain_min,
            self.channel_gain_max,
        )?;
        positive("region_size_m", self.region_size_m)?;
        positive("coverage_radius_m", self.coverage_radius_m)?;
        if self.lambda_t < 0.0 {
            return Err(bad("lambda_t", "must be non-negative"));
        }
        if self.lambda_e < 0.0 {
            return Err(bad("lambda_e", "must be non-negative"));
        }
        if self.lambda_c < 0.0 {
            return Err(bad("lambda_c", "must be non-negative"));
        }
        if self.lambda_t + self.lambda_e <= 0.0 {
            return Err(bad("lambda_t", "lambda_t + lambda_e must be positive"));
        }
        positive("kld_max", self.kld_max)?;
        if self.d_min < 0.0 {
            return Err(bad("d_min", "must be non-negative"));
        }
        if !(self.delta_k >= 0.0 && self.delta_k < self.kld_max) {
            return Err(bad("delta_k", "must lie in [0, kld_max)"));
        }
        if self.delta_d < 0.0 {
            return Err(bad("delta_d", "must be non-negative"));
        }
        if !(self.delta_risk > 0.0 && self.delta_risk < 1.0) {
            return Err(bad("delta_risk", "must lie in (0, 1)"));
        }
        if !(self.epsilon_risk > 0.0 && self.epsilon_risk < 1.0) {
            return Err(bad("epsilon_risk", "must lie in (0, 1)"));
        }
        if self.local_steps == 0 {
            return Err(bad("local_steps", "must be at least 1"));
        }
        if self.edge_rounds == 0 {
            return Err(bad("edge_rounds", "must be at least 1"));
        }
        if !(self.psi_min >= -1.0 && self.psi_min <= 1.0) {
            return Err(bad("psi_min", "cosine similarity threshold must lie in [-1, 1]"));
        }
        if self.p_min_points == 0 {
            return Err(bad("p_min_points", "must be at least 1"));
        }
        if self.window_len == 0 {
            return Err(bad("window_len", "must be at least 1"));
        }
        if self.window_count == 0 {
            return Err(bad("window_count", "must be at least 1"));
        }
        if self.plan_a_max_sweeps == 0 {
            return Err(bad("plan_a_max_sweeps", "must be at least 1"));
        }
        if self.backtrack_node_budget == 0 {
            return Err(bad("backtrack_node_budget", "must be at least 1"));
        }
        if self.init_attempts == 0 {
            return Err(bad("init_attempts", "must be at least 1"));
        }
        positive("learning_rate", self.learning_rate)?;
        if self.class_separation < 0.0 {
            return Err(bad("class_separation", "must be non-negative"));
        }
        if self.test_per_label == 0 {
            return Err(bad("test_per_label", "must be at least 1"));
        }
        if !(self.target_accuracy > 0.0 && self.target_accuracy <= 1.0) {
            return Err(bad("target_accuracy", "must lie in (0, 1]"));
        }
        positive("energy_divisor", self.energy_divisor)?;
        Ok(())
    }
}

/// Parse a config document, apply defaults for missing keys, validate.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read and parse a config file.
pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// One client: dataset shape, hardware, radio, and availability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: ClientId,
    pub position: (f64, f64),
    /// Number of local datapoints.
    pub data_size: u64,
    /// Datapoints per label; sums to `data_size`.
    pub label_counts: Vec<u64>,
    /// CPU frequency in Hz.
    pub cpu_freq: f64,
    /// CPU cycles to process one datapoint.
    pub cycles_per_point: f64,
    /// Uplink transmit power in W.
    pub tx_power: f64,
    /// Long-run probability of being online in a round.
    pub online_prob: f64,
    /// Effective switched capacitance of the CPU.
    pub capacitance: f64,
    /// Fraction of the local dataset in one SGD mini-batch.
    pub batch_fraction: f64,
    /// Edges within coverage, ascending id. Never empty.
    pub reachable: Vec<EdgeId>,
}

/// One edge server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProfile {
    pub id: EdgeId,
    pub position: (f64, f64),
    /// Uplink bandwidth allocated to each associated client, Hz.
    pub bandwidth_hz: f64,
    /// Association capacity.
    pub max_clients: usize,
    /// Edge-to-cloud aggregation delay, s.
    pub backhaul_delay: f64,
    /// Edge-to-cloud aggregation energy, J.
    pub backhaul_energy: f64,
}

/// Per-pair uplink channel gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// `gains[client][edge]`.
    pub gains: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub clients: Vec<ClientProfile>,
    pub edges: Vec<EdgeProfile>,
    pub channel: ChannelState,
}

impl Scenario {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_labels(&self) -> usize {
        self.config.n_labels
    }

    /// Reference label distribution the edge mixtures are compared
    /// against: uniform over all labels.
    pub fn reference_distribution(&self) -> Vec<f64> {
        vec![1.0 / self.config.n_labels as f64; self.config.n_labels]
    }

    pub fn weights(&self) -> Weights {
        self.config.weights()
    }

    pub fn thresholds(&self) -> Thresholds {
        self.config.thresholds()
    }

    pub fn online_probs(&self) -> Vec<f64> {
        self.clients.iter().map(|c| c.online_prob).collect()
    }

    /// Fresh channel gains for a later round, derived from the
    /// scenario seed and the round index.
    pub fn resample_channel(&self, round: u64) -> ChannelState {
        let mut rng = rng::stream2(self.config.seed, tag::CHANNEL, round);
        sample_gains(&self.config, &mut rng)
    }
}

fn sample_gains(cfg: &ScenarioConfig, rng: &mut impl Rng) -> ChannelState {
    let gains = (0..cfg.n_clients)
        .map(|_| {
            (0..cfg.n_edges)
                .map(|_| rng.random_range(cfg.channel_gain_min..=cfg.channel_gain_max))
                .collect()
        })
        .collect();
    ChannelState { gains }
}

fn sample_u64(rng: &mut impl Rng, lo: u64, hi: u64) -> u64 {
    rng.random_range(lo..=hi)
}

fn sample_usize(rng: &mut impl Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

fn sample_f(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Pick `k` distinct labels, then split `total` datapoints over them
/// with at least one point per picked label.
fn sample_label_counts(
    rng: &mut impl Rng,
    n_labels: usize,
    k: usize,
    total: u64,
    forced: Option<usize>,
) -> Vec<u64> {
    let mut labels: Vec<usize> = (0..n_labels).collect();
    for i in 0..n_labels {
        let j = rng.random_range(i..n_labels);
        labels.swap(i, j);
    }
    labels.truncate(k);
    if let Some(f) = forced {
        if !labels.contains(&f) {
            labels[0] = f;
        }
    }
    labels.sort_unstable();

    let mut counts = vec![0u64; n_labels];
    for &l in &labels {
        counts[l] = 1;
    }
    for _ in 0..total - k as u64 {
        let l = labels[rng.random_range(0..k)];
        counts[l] += 1;
    }
    counts
}

/// Expand a validated config into a concrete scenario. Deterministic
/// in the config (including its seed).
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, ConfigError> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, tag::SCENARIO);

    let edges: Vec<EdgeProfile> = (0..cfg.n_edges)
        .map(|id| EdgeProfile {
            id,
            position: (
                sample_f(&mut rng, 0.0, cfg.region_size_m),
                sample_f(&mut rng, 0.0, cfg.region_size_m),
            ),
            bandwidth_hz: cfg.bandwidth_hz,
            max_clients: sample_usize(&mut rng, cfg.max_clients_min, cfg.max_clients_max),
            backhaul_delay: sample_f(&mut rng, cfg.backhaul_delay_min, cfg.backhaul_delay_max),
            backhaul_energy: sample_f(&mut rng, cfg.backhaul_energy_min, cfg.backhaul_energy_max),
        })
        .collect();

    let mut clients = Vec::with_capacity(cfg.n_clients);
    for id in 0..cfg.n_clients {
        let position = (
            sample_f(&mut rng, 0.0, cfg.region_size_m),
            sample_f(&mut rng, 0.0, cfg.region_size_m),
        );
        let mut reachable: Vec<EdgeId> = edges
            .iter()
            .filter(|e| dist(position, e.position) <= cfg.coverage_radius_m)
            .map(|e| e.id)
            .collect();
        if reachable.is_empty() {
            // Out-of-coverage clients attach to the nearest edge so the
            // population is never silently reduced.
            let nearest = edges
                .iter()
                .map(|e| (dist(position, e.position), e.id))
                .min_by(|a, b| a.partial_cmp(b).unwrap())
                .unwrap()
                .1;
            reachable.push(nearest);
        }
        let data_size = sample_u64(&mut rng, cfg.data_size_min, cfg.data_size_max);
        let k = sample_usize(&mut rng, cfg.labels_per_client_min, cfg.labels_per_client_max);
        let label_counts = sample_label_counts(&mut rng, cfg.n_labels, k, data_size, None);
        clients.push(ClientProfile {
            id,
            position,
            data_size,
            label_counts,
            cpu_freq: sample_f(&mut rng, cfg.cpu_freq_min, cfg.cpu_freq_max),
            cycles_per_point: sample_f(&mut rng, cfg.cycles_min, cfg.cycles_max),
            tx_power: sample_f(&mut rng, cfg.tx_power_min, cfg.tx_power_max),
            online_prob: sample_f(&mut rng, cfg.online_prob_min, cfg.online_prob_max),
            capacitance: cfg.capacitance,
            batch_fraction: cfg.batch_fraction,
            reachable,
        });
    }

    // Re-deal labels for a few clients if some label has no data
    // anywhere in the population; the trainable task needs every label
    // represented where the population is large enough to allow it.
    if cfg.n_clients * cfg.labels_per_client_max >= cfg.n_labels {
        loop {
            let uncovered: Vec<usize> = (0..cfg.n_labels)
                .filter(|&h| clients.iter().all(|c| c.label_counts[h] == 0))
                .collect();
            if uncovered.is_empty() {
                break;
            }
            for (slot, h) in uncovered.iter().enumerate() {
                let c = &mut clients[slot % cfg.n_clients];
                let k = c.label_counts.iter().filter(|&&x| x > 0).count();
                c.label_counts =
                    sample_label_counts(&mut rng, cfg.n_labels, k, c.data_size, Some(*h));
            }
        }
    }

    let channel = sample_gains(cfg, &mut rng);
    Ok(Scenario {
        config: cfg.clone(),
        clients,
        edges,
        channel,
    })
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}
