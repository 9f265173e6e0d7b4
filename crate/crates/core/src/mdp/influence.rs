//! Influence-network benchmark environment.
//!
//! Binary states and actions. Agent `k` moves to state 1 with probability
//! `clip(base_k + sum_j w_kj * xor(s_j, a_j), p_min, 1 - p_min)` where
//! `w_kj = lambda * exp(-beta * d(k, j)) / K`. Because clipping is 1-Lipschitz,
//! the Dobrushin entry `C_kj` is at most `w_kj`, so the weighted row sum
//! `sum_j exp(beta d(k,j)) C_kj` is at most `lambda`.

use serde::{Deserialize, Serialize};

use super::{FactoredMdp, Kernel};
use crate::error::{input, Error, Result};
use crate::network::AgentGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfluenceNetParams {
    pub lambda: f64,
    pub beta: f64,
    pub p_min: f64,
    /// Baseline success probability per agent; a single entry is broadcast.
    pub base: Vec<f64>,
    /// Reward tables `r(s, a)` at index `2 * s + a`; a single table is broadcast.
    pub rewards: Vec<[f64; 4]>,
}

impl Default for InfluenceNetParams {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            beta: std::f64::consts::LN_2,
            p_min: 0.05,
            base: vec![0.3],
            rewards: vec![[0.0, 0.3, 0.6, 1.0]],
        }
    }
}

/// Compiled influence kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceNet {
    pub lambda: f64,
    pub beta: f64,
    pub p_min: f64,
    pub base: Vec<f64>,
    /// `weights[k][j] = w_kj`; zero for unreachable pairs.
    pub weights: Vec<Vec<f64>>,
    /// Agents whose success probability is clipped for every input.
    pub saturated: Vec<usize>,
}

impl InfluenceNet {
    pub(crate) fn prob_one(&self, k: usize, s: &[usize], a: &[usize]) -> f64 {
        let mut x = self.base[k];
        for (j, &w) in self.weights[k].iter().enumerate() {
            if s[j] != a[j] {
                x += w;
            }
        }
        x.clamp(self.p_min, 1.0 - self.p_min)
    }

    /// Closed-form Dobrushin upper bound `C_kj <= w_kj`.
    pub fn analytic_dobrushin(&self) -> Vec<Vec<f64>> {
        self.weights.clone()
    }
}

fn broadcast<T: Clone>(values: &[T], k: usize, what: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0].clone(); k]),
        n if n == k => Ok(values.to_vec()),
        n => input(format!("{what} has {n} entries for {k} agents")),
    }
}

/// Builds the influence-network MDP. Fails when `lambda * gamma >= 1`, since
/// the dynamics would then not certify with `rho = lambda`.
pub fn make_influence_env(
    graph: AgentGraph,
    params: &InfluenceNetParams,
    gamma: f64,
) -> Result<FactoredMdp> {
    let k = graph.num_agents();
    if params.lambda < 0.0 || params.beta < 0.0 {
        return input("lambda and beta must be non-negative");
    }
    if !(params.p_min > 0.0 && params.p_min < 0.5) {
        return input("p_min must lie in (0, 0.5)");
    }
    if params.lambda * gamma >= 1.0 {
        return Err(Error::Certification(format!(
            "lambda * gamma = {} >= 1",
            params.lambda * gamma
        )));
    }
    let base = broadcast(&params.base, k, "base")?;
    if base.iter().any(|b| !(0.0..=1.0).contains(b)) {
        return input("base probabilities must lie in [0,1]");
    }
    let rewards = broadcast(&params.rewards, k, "rewards")?;

    let weights: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if graph.is_reachable(i, j) {
                        params.lambda * (-params.beta * graph.dist(i, j) as f64).exp() / k as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let saturated = (0..k)
        .filter(|&i| {
            let hi = base[i] + weights[i].iter().sum::<f64>();
            base[i] >= 1.0 - params.p_min || hi <= params.p_min
        })
        .collect();

    let net = InfluenceNet {
        lambda: params.lambda,
        beta: params.beta,
        p_min: params.p_min,
        base,
        weights,
        saturated,
    };
    FactoredMdp::new(
        graph,
        vec![2; k],
        vec![2; k],
        Kernel::Influence(net),
        rewards.iter().map(|r| r.to_vec()).collect(),
        gamma,
    )
}

impl FactoredMdp {
    /// Human-readable construction warnings (currently: clamp saturation).
    pub fn warnings(&self) -> Vec<String> {
        match self.kernel() {
            Kernel::Influence(net) => net
                .saturated
                .iter()
                .map(|k| format!("agent {k} is clamp-saturated for every input; its decay is trivially 0"))
                .collect(),
            Kernel::Scoped(_) => Vec::new(),
        }
    }
}
