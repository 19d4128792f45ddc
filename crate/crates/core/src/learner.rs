//! Synthetic classification task and the model trained on it.
//!
//! The task is a Gaussian mixture: label `h` draws features from an
//! isotropic Gaussian centered at `class_separation` along axis `h`, so the
//! feature dimension equals the label count and class overlap shrinks as the
//! separation grows. Each client's shard realizes its label counts exactly,
//! which is what ties the data-quality constraints to actual training
//! behavior. The model is multinomial logistic regression with a bias
//! column, trained by mini-batch SGD.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::rng::{self, tag};
use crate::scenario::Scenario;
use crate::ClientId;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub dim: usize,
    pub n_labels: usize,
    /// Per-client training shards, label counts matching the scenario.
    pub shards: Vec<Vec<Sample>>,
    /// Stratified held-out set, `test_per_label` samples per label.
    pub test: Vec<Sample>,
}

fn sample_point(rng: &mut impl Rng, label: usize, dim: usize, separation: f64) -> Sample {
    let mut x = vec![0.0; dim];
    for (h, v) in x.iter_mut().enumerate() {
        let noise: f64 = StandardNormal.sample(rng);
        *v = noise + if h == label { separation } else { 0.0 };
    }
    Sample { x, y: label }
}

/// Draws every client shard and the test set from the scenario seed. Shard
/// `i` depends only on client `i`'s profile, so regenerating the task for
/// the same scenario is reproducible per client.
pub fn generate_task(scenario: &Scenario) -> SyntheticTask {
    let cfg = &scenario.config;
    let dim = cfg.n_labels;
    let sep = cfg.class_separation;
    let shards: Vec<Vec<Sample>> = scenario
        .clients
        .iter()
        .map(|c| {
            let mut rng = rng::stream2(cfg.seed, tag::TASK, c.id as u64);
            let mut shard = Vec::with_capacity(c.data_size as usize);
            for (label, &count) in c.label_counts.iter().enumerate() {
                for _ in 0..count {
                    shard.push(sample_point(&mut rng, label, dim, sep));
                }
            }
            shard
        })
        .collect();
    let mut rng = rng::stream2(cfg.seed, tag::TASK, scenario.n_clients() as u64);
    let mut test = Vec::with_capacity(cfg.n_labels * cfg.test_per_label);
    for label in 0..cfg.n_labels {
        for _ in 0..cfg.test_per_label {
            test.push(sample_point(&mut rng, label, dim, sep));
        }
    }
    SyntheticTask {
        dim,
        n_labels: cfg.n_labels,
        shards,
        test,
    }
}

/// Multinomial logistic regression, parameters flattened row-major with a
/// trailing bias per label.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub n_labels: usize,
    pub dim: usize,
    pub w: Vec<f64>,
}

impl Model {
    pub fn zeros(n_labels: usize, dim: usize) -> Self {
        Model {
            n_labels,
            dim,
            w: vec![0.0; n_labels * (dim + 1)],
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let cols = self.dim + 1;
        (0..self.n_labels)
            .map(|k| {
                let row = &self.w[k * cols..(k + 1) * cols];
                row[self.dim] + row[..self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let z = self.logits(x);
        z.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k)
            .unwrap()
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Mean cross-entropy over `samples`.
pub fn loss(model: &Model, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for s in samples {
        let p = softmax(&model.logits(&s.x));
        total -= p[s.y].max(f64::MIN_POSITIVE).ln();
    }
    total / samples.len() as f64
}

/// Mean cross-entropy gradient over `samples`, same layout as `Model::w`.
pub fn gradient(model: &Model, samples: &[Sample]) -> Vec<f64> {
    let cols = model.dim + 1;
    let mut g = vec![0.0; model.w.len()];
    for s in samples {
        let p = softmax(&model.logits(&s.x));
        for k in 0..model.n_labels {
            let err = p[k] - if k == s.y { 1.0 } else { 0.0 };
            let row = &mut g[k * cols..(k + 1) * cols];
            for (h, &v) in s.x.iter().enumerate() {
                row[h] += err * v;
            }
            row[model.dim] += err;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    for v in g.iter_mut() {
        *v *= inv;
    }
    g
}

pub fn accuracy(model: &Model, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples.iter().filter(|s| model.predict(&s.x) == s.y).count();
    hits as f64 / samples.len() as f64
}

/// `local_steps` mini-batch SGD steps on one shard. The batch holds
/// `ceil(batch_fraction * |shard|)` samples drawn without replacement; a
/// full-batch fraction keeps shard order and skips sampling entirely.
pub fn local_sgd(
    model: &Model,
    shard: &[Sample],
    lr: f64,
    local_steps: u32,
    batch_fraction: f64,
    rng: &mut impl Rng,
) -> Model {
    let mut m = model.clone();
    if shard.is_empty() {
        return m;
    }
    let batch = ((batch_fraction * shard.len() as f64).ceil() as usize)
        .clamp(1, shard.len());
    let mut scratch: Vec<Sample>;
    for _ in 0..local_steps {
        let g = if batch == shard.len() {
            gradient(&m, shard)
        } else {
            let picks = index::sample(rng, shard.len(), batch);
            scratch = picks.iter().map(|i| shard[i].clone()).collect();
            gradient(&m, &scratch)
        };
        for (w, gv) in m.w.iter_mut().zip(&g) {
            *w -= lr * gv;
        }
    }
    m
}

/// Data-weighted parameter mean. A single contributor passes through
/// bit-identically, which makes a one-edge hierarchy collapse to flat
/// averaging exactly.
pub fn aggregate(parts: &[(Model, f64)]) -> Option<Model> {
    let total: f64 = parts.iter().map(|(_, w)| w).sum();
    if parts.is_empty() || total <= 0.0 {
        return None;
    }
    if parts.len() == 1 {
        return Some(parts[0].0.clone());
    }
    let mut out = Model::zeros(parts[0].0.n_labels, parts[0].0.dim);
    for (m, w) in parts {
        for (o, v) in out.w.iter_mut().zip(&m.w) {
            *o += w * v;
        }
    }
    for o in out.w.iter_mut() {
        *o /= total;
    }
    Some(out)
}

/// One full global round: `edge_rounds` cycles of local training and edge
/// aggregation, then a data-weighted merge of the participating edges.
/// Clients train from their edge's current model; edges with no online
/// members keep the incoming global model and do not vote.
pub fn hierarchical_round(
    global: &Model,
    task: &SyntheticTask,
    scenario: &Scenario,
    assoc: &crate::assoc::Association,
    xi: &[bool],
    round: u64,
    seed: u64,
) -> Model {
    let cfg = &scenario.config;
    let mut edge_models: Vec<Model> = vec![global.clone(); scenario.edges.len()];
    let mut edge_weight = vec![0.0f64; scenario.edges.len()];
    for ell in 0..cfg.edge_rounds {
        for j in 0..scenario.edges.len() {
            let members: Vec<ClientId> = assoc
                .clients_of(j)
                .into_iter()
                .filter(|&i| xi[i])
                .collect();
            if members.is_empty() {
                continue;
            }
            let parts: Vec<(Model, f64)> = members
                .iter()
                .map(|&i| {
                    let mut rng = rng::stream3(
                        seed,
                        tag::TRAIN,
                        round * cfg.edge_rounds as u64 + ell as u64,
                        i as u64,
                    );
                    let trained = local_sgd(
                        &edge_models[j],
                        &task.shards[i],
                        cfg.learning_rate,
                        cfg.local_steps,
                        cfg.batch_fraction,
                        &mut rng,
                    );
                    (trained, scenario.clients[i].data_size as f64)
                })
                .collect();
            edge_weight[j] = parts.iter().map(|(_, w)| w).sum();
            edge_models[j] = aggregate(&parts).expect("non-empty member list");
        }
    }
    let votes: Vec<(Model, f64)> = edge_models
        .into_iter()
        .zip(edge_weight)
        .filter(|(_, w)| *w > 0.0)
        .collect();
    aggregate(&votes).unwrap_or_else(|| global.clone())
}

/// Flat federated averaging over `participants`, no edge tier. Uses the
/// same per-client sample streams as `hierarchical_round`, so with a single
/// edge and one edge round the two produce bit-identical parameters.
pub fn flat_round(
    global: &Model,
    task: &SyntheticTask,
    scenario: &Scenario,
    participants: &[ClientId],
    round: u64,
    seed: u64,
) -> Model {
    let cfg = &scenario.config;
    let parts: Vec<(Model, f64)> = participants
        .iter()
        .map(|&i| {
            let mut rng = rng::stream3(seed, tag::TRAIN, round * cfg.edge_rounds as u64, i as u64);
            let trained = local_sgd(
                global,
                &task.shards[i],
                cfg.learning_rate,
                cfg.local_steps,
                cfg.batch_fraction,
                &mut rng,
            );
            (trained, scenario.clients[i].data_size as f64)
        })
        .collect();
    aggregate(&parts).unwrap_or_else(|| global.clone())
}
