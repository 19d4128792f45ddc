//! Client availability: sampled participation traces and the
//! window-weighted estimator of each client's online probability.

use crate::rng::{self, tag};
use crate::ClientId;
use rand::Rng;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TraceError {
    #[error("need at least {need} observations, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("trace csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// Realized per-round availability for every client.
/// `xi[client][round]` is true when the client is online that round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipationTrace {
    pub xi: Vec<Vec<bool>>,
}

impl ParticipationTrace {
    pub fn n_clients(&self) -> usize {
        self.xi.len()
    }

    pub fn n_rounds(&self) -> usize {
        self.xi.first().map_or(0, |r| r.len())
    }

    /// Online flags of one round, indexed by client.
    pub fn column(&self, round: usize) -> Vec<bool> {
        self.xi.iter().map(|row| row[round]).collect()
    }

    /// A client's history up to (excluding) `round`.
    pub fn history(&self, client: ClientId, round: usize) -> &[bool] {
        &self.xi[client][..round]
    }

    /// Round-major CSV with header `round,client_id,xi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,client_id,xi\n");
        for g in 0..self.n_rounds() {
            for (i, row) in self.xi.iter().enumerate() {
                out.push_str(&format!("{g},{i},{}\n", row[g] as u8));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TraceError> {
        let mut entries = Vec::new();
        let mut max_client = 0usize;
        let mut max_round = 0usize;
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                if line.trim() != "round,client_id,xi" {
                    return Err(TraceError::Csv {
                        line: 1,
                        reason: format!("unexpected header `{line}`"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| TraceError::Csv { line: idx + 1, reason };
            let mut parts = line.split(',');
            let mut field = |name: &str| {
                parts
                    .next()
                    .ok_or_else(|| bad(format!("missing field `{name}`")))
            };
            let g: usize = field("round")?
                .trim()
                .parse()
                .map_err(|e| bad(format!("round: {e}")))?;
            let i: usize = field("client_id")?
                .trim()
                .parse()
                .map_err(|e| bad(format!("client_id: {e}")))?;
            let x = match field("xi")?.trim() {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("xi must be 0 or 1, got `{other}`"))),
            };
            max_client = max_client.max(i);
            max_round = max_round.max(g);
            entries.push((g, i, x));
        }
        let mut xi = vec![vec![false; max_round + 1]; max_client + 1];
        let mut seen = vec![vec![false; max_round + 1]; max_client + 1];
        for (g, i, x) in entries {
            if seen[i][g] {
                return Err(TraceError::Csv {
                    line: 0,
                    reason: format!("duplicate entry for round {g}, client {i}"),
                });
            }
            seen[i][g] = true;
            xi[i][g] = x;
        }
        if let Some((i, g)) = seen
            .iter()
            .enumerate()
            .find_map(|(i, row)| row.iter().position(|&s| !s).map(|g| (i, g)))
        {
            return Err(TraceError::Csv {
                line: 0,
                reason: format!("missing entry for round {g}, client {i}"),
            });
        }
        Ok(ParticipationTrace { xi })
    }
}

/// Draw `rounds` i.i.d. Bernoulli rounds per client. Each client reads
/// its own derived stream, so traces are stable under changes to the
/// population size or round count.
pub fn sample_trace(online_probs: &[f64], rounds: usize, seed: u64) -> ParticipationTrace {
    let xi = online_probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut rng = rng::stream2(seed, tag::TRACE, i as u64);
            (0..rounds).map(|_| rng.random_bool(p)).collect()
        })
        .collect();
    ParticipationTrace { xi }
}

/// Window weights `2k / (K (K + 1))` for `k = 1..=K`, increasing
/// toward the freshest window. The closing weight absorbs float
/// rounding so the vector always sums to exactly 1.
pub fn estimator_weights(window_count: usize) -> Vec<f64> {
    let k = window_count;
    let denom = (k * (k + 1)) as f64 / 2.0;
    let mut w: Vec<f64> = (1..k).map(|kappa| kappa as f64 / denom).collect();
    let partial: f64 = w.iter().sum();
    w.push(1.0 - partial);
    w
}

/// Estimate a client's online probability from its most recent
/// `window_count * window_len` observations: the per-window empirical
/// rates combined with weights that grow linearly toward the present.
pub fn estimate_online_prob(
    history: &[bool],
    window_len: usize,
    window_count: usize,
) -> Result<f64, TraceError> {
    let need = window_len * window_count;
    if history.len() < need {
        return Err(TraceError::InsufficientHistory {
            need,
            have: history.len(),
        });
    }
    let recent = &history[history.len() - need..];
    let weights = estimator_weights(window_count);
    let mut p = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let window = &recent[k * window_len..(k + 1) * window_len];
        let rate = window.iter().filter(|&&x| x).count() as f64 / window_len as f64;
        p += w * rate;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_window_example() {
        // Oldest recent window [1,0] rate 0.5 weight 1/3; freshest
        // [1,1] rate 1.0 weight 2/3.
        let h = [true, false, true, true];
        let p = estimate_online_prob(&h, 2, 2).unwrap();
        assert_relative_eq!(p, 5.0 / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn only_the_recent_block_matters() {
        let mut h = vec![false; 100];
        h.extend([true, false, true, true]);
        let p = estimate_online_prob(&h, 2, 2).unwrap();
        assert_relative_eq!(p, 5.0 / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn weights_increase_and_sum_to_exactly_one() {
        for k in 1..40 {
            let w = estimator_weights(k);
            assert_eq!(w.iter().sum::<f64>(), 1.0, "K = {k}");
            assert!(w.windows(2).all(|p| p[0] < p[1]));
        }
        assert_relative_eq!(estimator_weights(3)[0], 2.0 / 12.0, max_relative = 1e-12);
    }

    #[test]
    fn constant_history_is_estimated_exactly() {
        let h = vec![true; 50];
        assert_eq!(estimate_online_prob(&h, 10, 5).unwrap(), 1.0);
        let h = vec![false; 50];
        assert_eq!(estimate_online_prob(&h, 10, 5).unwrap(), 0.0);
    }

    #[test]
    fn short_history_is_rejected() {
        let h = vec![true; 9];
        assert_eq!(
            estimate_online_prob(&h, 5, 2).unwrap_err(),
            TraceError::InsufficientHistory { need: 10, have: 9 }
        );
    }

    #[test]
    fn estimator_concentrates_near_the_true_probability() {
        for &p in &[0.5, 0.7, 0.9] {
            let trace = sample_trace(&[p], 1000, 77);
            let est = estimate_online_prob(&trace.xi[0], 100, 10).unwrap();
            assert!((est - p).abs() <= 0.05, "p = {p}, estimate = {est}");
        }
    }

    #[test]
    fn traces_are_deterministic_and_match_rates() {
        let probs = vec![0.5, 0.9, 1.0];
        let a = sample_trace(&probs, 2000, 5);
        let b = sample_trace(&probs, 2000, 5);
        assert_eq!(a, b);
        assert!(a.xi[2].iter().all(|&x| x));
        let rate = a.xi[0].iter().filter(|&&x| x).count() as f64 / 2000.0;
        assert!((rate - 0.5).abs() < 0.05);

        // Extending the horizon preserves the prefix.
        let longer = sample_trace(&probs, 3000, 5);
        assert_eq!(&longer.xi[1][..2000], &a.xi[1][..]);
    }

    #[test]
    fn csv_round_trip() {
        let t = sample_trace(&[0.6, 0.8], 5, 3);
        let csv = t.to_csv();
        assert!(csv.starts_with("round,client_id,xi\n0,0,"));
        let back = ParticipationTrace::from_csv(&csv).unwrap();
        assert_eq!(t, back);

        let err = ParticipationTrace::from_csv("round,client,oops\n").unwrap_err();
        assert!(matches!(err, TraceError::Csv { .. }));
    }
}
