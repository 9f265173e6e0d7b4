//! Agent interaction graph.
//!
//! Agents are dense ids `0..K`. Hop distances are precomputed by BFS from every
//! agent; a disconnected pair gets the sentinel distance `K`, which is strictly
//! larger than any finite hop count.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Undirected, unweighted agent network with all-pairs hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentGraph {
    num_agents: usize,
    edges: Vec<(usize, usize)>,
    dist: Vec<usize>,
    max_diameter: usize,
}

impl AgentGraph {
    /// Builds the graph and its distance matrix. Duplicate edges (in either
    /// orientation) are collapsed.
    pub fn new(num_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_agents == 0 {
            return input("graph must have at least one agent");
        }
        let mut canon = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= num_agents || v >= num_agents {
                return input(format!(
                    "edge ({u},{v}) has an endpoint outside 0..{num_agents}"
                ));
            }
            if u == v {
                return input(format!("self-loop on agent {u}"));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut adj = vec![Vec::new(); num_agents];
        for &(u, v) in &canon {
            adj[u].push(v);
            adj[v].push(u);
        }

        let sentinel = num_agents;
        let mut dist = vec![sentinel; num_agents * num_agents];
        let mut queue = VecDeque::new();
        for src in 0..num_agents {
            let row = &mut dist[src * num_agents..(src + 1) * num_agents];
            row[src] = 0;
            queue.clear();
            queue.push_back(src);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if row[v] == sentinel {
                        row[v] = row[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        let max_diameter = dist.iter().copied().filter(|&d| d < sentinel).max().unwrap_or(0);

        Ok(Self {
            num_agents,
            edges: canon,
            dist,
            max_diameter,
        })
    }

    pub fn path(num_agents: usize) -> Result<Self> {
        let edges: Vec<_> = (1..num_agents).map(|k| (k - 1, k)).collect();
        Self::new(num_agents, &edges)
    }

    pub fn cycle(num_agents: usize) -> Result<Self> {
        if num_agents < 3 {
            return input("a cycle needs at least 3 agents");
        }
        let mut edges: Vec<_> = (1..num_agents).map(|k| (k - 1, k)).collect();
        edges.push((num_agents - 1, 0));
        Self::new(num_agents, &edges)
    }

    /// Row-major `rows x cols` lattice with 4-neighbour connectivity.
    pub fn grid2d(rows: usize, cols: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                let id = i * cols + j;
                if j + 1 < cols {
                    edges.push((id, id + 1));
                }
                if i + 1 < rows {
                    edges.push((id, id + cols));
                }
            }
        }
        Self::new(rows * cols, &edges)
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Hop distance; equals [`AgentGraph::infinity`] for disconnected pairs.
    pub fn dist(&self, k: usize, j: usize) -> usize {
        self.dist[k * self.num_agents + j]
    }

    /// Sentinel used for unreachable pairs.
    pub fn infinity(&self) -> usize {
        self.num_agents
    }

    pub fn is_reachable(&self, k: usize, j: usize) -> bool {
        self.dist(k, j) < self.infinity()
    }

    /// Largest finite hop distance between two agents.
    pub fn max_diameter(&self) -> usize {
        self.max_diameter
    }

    /// Agents within `r` hops of `k`, ascending. Always contains `k`.
    pub fn neighborhood(&self, k: usize, r: usize) -> Vec<usize> {
        (0..self.num_agents).filter(|&j| self.dist(k, j) <= r).collect()
    }

    /// Agents strictly farther than `r` hops from `k` (including unreachable ones).
    pub fn complement(&self, k: usize, r: usize) -> Vec<usize> {
        (0..self.num_agents).filter(|&j| self.dist(k, j) > r).collect()
    }
}

/// Graph description as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GraphSpec {
    Path { agents: usize },
    Cycle { agents: usize },
    Grid2d { rows: usize, cols: usize },
    Explicit { agents: usize, edges: Vec<(usize, usize)> },
}

impl GraphSpec {
    pub fn build(&self) -> Result<AgentGraph> {
        match self {
            GraphSpec::Path { agents } => AgentGraph::path(*agents),
            GraphSpec::Cycle { agents } => AgentGraph::cycle(*agents),
            GraphSpec::Grid2d { rows, cols } => AgentGraph::grid2d(*rows, *cols),
            GraphSpec::Explicit { agents, edges } => AgentGraph::new(*agents, edges),
        }
    }
}
