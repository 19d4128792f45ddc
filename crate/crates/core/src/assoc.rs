//! Binary client-to-edge association with at most one edge per client.

use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;
use crate::{ClientId, EdgeId};

/// Which decision stage produced an association.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssocRole {
    /// Per-round decision over the realized online set.
    GroundTruth,
    /// Long-term pre-selection assuming full participation.
    PlanA,
    /// Per-round repair of the long-term plan.
    PlanB,
}

/// Sparse representation of the binary matrix `a[i][j]`: each client
/// holds at most one edge, so a row is an `Option<EdgeId>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Association {
    pub role: AssocRole,
    edge_of: Vec<Option<EdgeId>>,
    load: Vec<usize>,
}

impl Association {
    pub fn new(role: AssocRole, n_clients: usize, n_edges: usize) -> Self {
        Association {
            role,
            edge_of: vec![None; n_clients],
            load: vec![0; n_edges],
        }
    }

    pub fn n_clients(&self) -> usize {
        self.edge_of.len()
    }

    pub fn n_edges(&self) -> usize {
        self.load.len()
    }

    pub fn edge_of(&self, i: ClientId) -> Option<EdgeId> {
        self.edge_of[i]
    }

    pub fn is_selected(&self, i: ClientId) -> bool {
        self.edge_of[i].is_some()
    }

    /// Number of clients currently assigned to `j`.
    pub fn load(&self, j: EdgeId) -> usize {
        self.load[j]
    }

    pub fn selected_count(&self) -> usize {
        self.edge_of.iter().filter(|e| e.is_some()).count()
    }

    pub fn assign(&mut self, i: ClientId, j: EdgeId) {
        debug_assert!(self.edge_of[i].is_none(), "client {i} already assigned");
        self.edge_of[i] = Some(j);
        self.load[j] += 1;
    }

    pub fn unassign(&mut self, i: ClientId) -> Option<EdgeId> {
        let j = self.edge_of[i].take();
        if let Some(j) = j {
            self.load[j] -= 1;
        }
        j
    }

    /// Assigned (client, edge) pairs in ascending client id.
    pub fn pairs(&self) -> impl Iterator<Item = (ClientId, EdgeId)> + '_ {
        self.edge_of
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|j| (i, j)))
    }

    /// Clients assigned to `j`, ascending id.
    pub fn clients_of(&self, j: EdgeId) -> Vec<ClientId> {
        self.pairs().filter(|&(_, e)| e == j).map(|(i, _)| i).collect()
    }

    pub fn selected(&self) -> Vec<ClientId> {
        self.pairs().map(|(i, _)| i).collect()
    }

    /// Structural validity against a scenario: array shapes, capacity,
    /// and reachability of every assignment.
    pub fn validate(&self, scenario: &Scenario) -> Result<(), String> {
        if self.edge_of.len() != scenario.n_clients() {
            return Err(format!(
                "association covers {} clients, scenario has {}",
                self.edge_of.len(),
                scenario.n_clients()
            ));
        }
        if self.load.len() != scenario.n_edges() {
            return Err(format!(
                "association covers {} edges, scenario has {}",
                self.load.len(),
                scenario.n_edges()
            ));
        }
        let mut load = vec![0usize; self.load.len()];
        for (i, j) in self.pairs() {
            if !scenario.clients[i].reachable.contains(&j) {
                return Err(format!("client {i} assigned to unreachable edge {j}"));
            }
            load[j] += 1;
        }
        if load != self.load {
            return Err("cached edge loads are stale".into());
        }
        for (j, edge) in scenario.edges.iter().enumerate() {
            if load[j] > edge.max_clients {
                return Err(format!(
                    "edge {j} holds {} clients, capacity {}",
                    load[j], edge.max_clients
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assign_unassign_round_trip() {
        let mut a = Association::new(AssocRole::PlanA, 4, 2);
        a.assign(1, 0);
        a.assign(3, 1);
        assert_eq!(a.edge_of(1), Some(0));
        assert_eq!(a.load(0), 1);
        assert_eq!(a.selected(), vec![1, 3]);
        assert_eq!(a.clients_of(1), vec![3]);
        assert_eq!(a.unassign(1), Some(0));
        assert_eq!(a.load(0), 0);
        assert_eq!(a.unassign(1), None);
        assert_eq!(a.selected_count(), 1);
    }
}
