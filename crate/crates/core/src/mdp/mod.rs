//! Factored multi-agent MDPs.
//!
//! The global kernel is the product of per-agent local kernels
//! `P_k(s'_k | s, a)`, and the global reward is the agent average of local
//! rewards `r_k(s_k, a_k)`.

mod exact;
mod index;
mod influence;

pub use exact::{
    exact_values, exact_visitation_pairs, exact_visitation_states, optimal_policy, ExactModel,
    ExactSolution, OptimalSolution, PolicyTable, DEFAULT_SIZE_CAP,
};
pub use index::{GlobalIndex, MixedRadix, SubsetCodec};
pub use influence::{make_influence_env, InfluenceNet, InfluenceNetParams};

use crate::error::{input, Result};
use crate::network::AgentGraph;

const ROW_TOL: f64 = 1e-12;

/// Local kernel of one agent depending on a subset ("scope") of agents.
///
/// Rows are indexed by the mixed-radix code of `(s_j * |A_j| + a_j)` over the
/// scope members in ascending order; each row is a distribution over `S_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopedKernel {
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

/// Local transition structure.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Influence(InfluenceNet),
    Scoped(Vec<ScopedKernel>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMdp {
    graph: AgentGraph,
    state_sizes: Vec<usize>,
    action_sizes: Vec<usize>,
    kernel: Kernel,
    rewards: Vec<Vec<f64>>,
    gamma: f64,
    start_states: Vec<Vec<f64>>,
    start_pairs: Vec<Vec<f64>>,
    index: GlobalIndex,
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return input(format!("{what} has a negative or non-finite entry"));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return input(format!("{what} sums to {total}, not 1"));
    }
    Ok(())
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

impl FactoredMdp {
    /// Builds and validates a factored MDP. `rewards[k]` is indexed by
    /// `s_k * |A_k| + a_k`. Start distributions default to uniform products.
    pub fn new(
        graph: AgentGraph,
        state_sizes: Vec<usize>,
        action_sizes: Vec<usize>,
        kernel: Kernel,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
    ) -> Result<Self> {
        let k = graph.num_agents();
        if state_sizes.len() != k || action_sizes.len() != k || rewards.len() != k {
            return input("per-agent tables must have one entry per agent");
        }
        if state_sizes.iter().chain(&action_sizes).any(|&n| n == 0) {
            return input("state and action spaces must be non-empty");
        }
        if !(0.0..1.0).contains(&gamma) {
            return input(format!("discount {gamma} outside [0,1)"));
        }
        for (j, r) in rewards.iter().enumerate() {
            if r.len() != state_sizes[j] * action_sizes[j] {
                return input(format!("reward table of agent {j} has wrong length"));
            }
            if r.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return input(format!("reward of agent {j} outside [0,1]"));
            }
        }
        let start_states = state_sizes.iter().map(|&n| uniform(n)).collect();
        let start_pairs = state_sizes
            .iter()
            .zip(&action_sizes)
            .map(|(&s, &a)| uniform(s * a))
            .collect();
        let index = GlobalIndex::new(&state_sizes, &action_sizes);
        let mdp = Self {
            graph,
            state_sizes,
            action_sizes,
            kernel,
            rewards,
            gamma,
            start_states,
            start_pairs,
            index,
        };
        mdp.validate_kernel()?;
        Ok(mdp)
    }

    fn validate_kernel(&self) -> Result<()> {
        match &self.kernel {
            Kernel::Influence(net) => {
                if self.state_sizes.iter().chain(&self.action_sizes).any(|&n| n != 2) {
                    return input("influence net requires binary states and actions");
                }
                if net.weights.len() != self.num_agents() {
                    return input("influence weights do not match agent count");
                }
                Ok(())
            }
            Kernel::Scoped(kernels) => {
                if kernels.len() != self.num_agents() {
                    return input("one scoped kernel per agent required");
                }
                for (k, sk) in kernels.iter().enumerate() {
                    if sk.scope.windows(2).any(|w| w[0] >= w[1]) {
                        return input(format!("scope of agent {k} must be strictly ascending"));
                    }
                    if sk.scope.iter().any(|&j| j >= self.num_agents()) {
                        return input(format!("scope of agent {k} names an unknown agent"));
                    }
                    let rows: usize = sk
                        .scope
                        .iter()
                        .map(|&j| self.state_sizes[j] * self.action_sizes[j])
                        .product();
                    let width = self.state_sizes[k];
                    if sk.table.len() != rows * width {
                        return input(format!("kernel table of agent {k} has wrong length"));
                    }
                    for (i, row) in sk.table.chunks(width).enumerate() {
                        check_distribution(row, &format!("kernel row {i} of agent {k}"))?;
                    }
                }
                Ok(())
            }
        }
    }

    /// Replaces the per-agent start distributions `mu_k` over `S_k`.
    pub fn with_start_states(mut self, mu: Vec<Vec<f64>>) -> Result<Self> {
        if mu.len() != self.num_agents() {
            return input("start distribution needs one factor per agent");
        }
        for (k, m) in mu.iter().enumerate() {
            if m.len() != self.state_sizes[k] {
                return input(format!("start factor of agent {k} has wrong length"));
            }
            check_distribution(m, &format!("start factor of agent {k}"))?;
        }
        self.start_states = mu;
        Ok(self)
    }

    /// Replaces the per-agent state-action start distributions `nu_k`.
    pub fn with_start_pairs(mut self, nu: Vec<Vec<f64>>) -> Result<Self> {
        if nu.len() != self.num_agents() {
            return input("start distribution needs one factor per agent");
        }
        for (k, n) in nu.iter().enumerate() {
            if n.len() != self.state_sizes[k] * self.action_sizes[k] {
                return input(format!("pair start factor of agent {k} has wrong length"));
            }
            check_distribution(n, &format!("pair start factor of agent {k}"))?;
        }
        self.start_pairs = nu;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return input(format!("discount {gamma} outside [0,1)"));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn graph(&self) -> &AgentGraph {
        &self.graph
    }

    pub fn num_agents(&self) -> usize {
        self.graph.num_agents()
    }

    pub fn state_sizes(&self) -> &[usize] {
        &self.state_sizes
    }

    pub fn action_sizes(&self) -> &[usize] {
        &self.action_sizes
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn index(&self) -> &GlobalIndex {
        &self.index
    }

    pub fn reward(&self, k: usize, s_k: usize, a_k: usize) -> f64 {
        self.rewards[k][s_k * self.action_sizes[k] + a_k]
    }

    pub fn reward_table(&self, k: usize) -> &[f64] {
        &self.rewards[k]
    }

    /// Global reward: agent average of local rewards.
    pub fn global_reward(&self, s: &[usize], a: &[usize]) -> f64 {
        let total: f64 = (0..self.num_agents()).map(|k| self.reward(k, s[k], a[k])).sum();
        total / self.num_agents() as f64
    }

    pub fn start_states(&self) -> &[Vec<f64>] {
        &self.start_states
    }

    pub fn start_pairs(&self) -> &[Vec<f64>] {
        &self.start_pairs
    }

    /// Writes `P_k(. | s, a)` into `out` (length `|S_k|`).
    pub fn local_dist(&self, k: usize, s: &[usize], a: &[usize], out: &mut [f64]) {
        match &self.kernel {
            Kernel::Influence(net) => {
                let p1 = net.prob_one(k, s, a);
                out[0] = 1.0 - p1;
                out[1] = p1;
            }
            Kernel::Scoped(kernels) => {
                let sk = &kernels[k];
                let mut row = 0usize;
                for &j in &sk.scope {
                    let radix = self.state_sizes[j] * self.action_sizes[j];
                    row = row * radix + s[j] * self.action_sizes[j] + a[j];
                }
                let width = self.state_sizes[k];
                out.copy_from_slice(&sk.table[row * width..(row + 1) * width]);
            }
        }
    }

    /// Full global next-state distribution over flat state indices.
    pub fn global_step_dist(&self, s: &[usize], a: &[usize]) -> Vec<f64> {
        let locals: Vec<Vec<f64>> = (0..self.num_agents())
            .map(|k| {
                let mut row = vec![0.0; self.state_sizes[k]];
                self.local_dist(k, s, a, &mut row);
                row
            })
            .collect();
        product_distribution(&locals)
    }

    /// Product distribution over flat global states for the per-agent start factors.
    pub fn start_state_dist(&self) -> Vec<f64> {
        product_distribution(&self.start_states)
    }

    /// Product distribution over flat global pairs `s * |A| + a` for the
    /// per-agent pair start factors.
    pub fn start_pair_dist(&self) -> Vec<f64> {
        let na = self.index.num_actions();
        let mut out = vec![0.0; self.index.num_pairs()];
        let mut s = vec![0; self.num_agents()];
        let mut a = vec![0; self.num_agents()];
        for si in 0..self.index.num_states() {
            self.index.states.decode_into(si, &mut s);
            for ai in 0..na {
                self.index.actions.decode_into(ai, &mut a);
                out[si * na + ai] = (0..self.num_agents())
                    .map(|k| self.start_pairs[k][s[k] * self.action_sizes[k] + a[k]])
                    .product();
            }
        }
        out
    }

    /// `true` when the kernel of agent `k` ignores every other agent. Checked
    /// structurally, never by floating-point comparison.
    pub fn agent_is_decoupled(&self, k: usize) -> bool {
        match &self.kernel {
            Kernel::Influence(net) => net.weights[k]
                .iter()
                .enumerate()
                .all(|(j, &w)| j == k || w == 0.0),
            Kernel::Scoped(kernels) => kernels[k].scope.iter().all(|&j| j == k),
        }
    }

    pub fn is_decoupled(&self) -> bool {
        (0..self.num_agents()).all(|k| self.agent_is_decoupled(k))
    }

    /// Single-agent MDP for a decoupled agent: its own kernel, reward, discount
    /// and start factors.
    pub fn sub_mdp(&self, k: usize) -> Result<FactoredMdp> {
        if !self.agent_is_decoupled(k) {
            return input(format!("agent {k} is coupled to other agents"));
        }
        self.restrict_agent(k)
    }

    /// Agent `k`'s kernel with every other agent pinned to state and action 0.
    /// Equals [`FactoredMdp::sub_mdp`] for decoupled agents.
    pub fn restrict_agent(&self, k: usize) -> Result<FactoredMdp> {
        let ns = self.state_sizes[k];
        let na = self.action_sizes[k];
        let mut s = vec![0; self.num_agents()];
        let mut a = vec![0; self.num_agents()];
        let mut table = Vec::with_capacity(ns * na * ns);
        let mut row = vec![0.0; ns];
        for sk in 0..ns {
            for ak in 0..na {
                s[k] = sk;
                a[k] = ak;
                self.local_dist(k, &s, &a, &mut row);
                table.extend_from_slice(&row);
            }
        }
        let graph = AgentGraph::new(1, &[])?;
        let kernel = Kernel::Scoped(vec![ScopedKernel {
            scope: vec![0],
            table,
        }]);
        FactoredMdp::new(
            graph,
            vec![ns],
            vec![na],
            kernel,
            vec![self.rewards[k].clone()],
            self.gamma,
        )?
        .with_start_states(vec![self.start_states[k].clone()])?
        .with_start_pairs(vec![self.start_pairs[k].clone()])
    }
}

/// Product of per-coordinate distributions in lexicographic flat order.
pub fn product_distribution(factors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0];
    for f in factors {
        let mut next = Vec::with_capacity(out.len() * f.len());
        for &p in &out {
            for &q in f {
                next.push(p * q);
            }
        }
        out = next;
    }
    out
}
