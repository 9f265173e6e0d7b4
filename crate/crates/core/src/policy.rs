//! Localized softmax policy class.
//!
//! Agent `k` holds one logit table per radius `r = 0..=r_max`, indexed by the
//! local state `s_{N^r_k}` and the agent's own action. The policy logit is the
//! ring-weighted sum `f(s, a_k) = sum_r alpha_r * table_r(s_{N^r_k}, a_k)`.
//! Rings above the active radius are held at zero, so the policy and its score
//! only read states inside `N^{active}_k`.
//!
//! Table entries live in the box `[-C_f, C_f]`; updates are followed by a
//! projection onto that box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::mdp::{FactoredMdp, PolicyTable, SubsetCodec};
use crate::network::AgentGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyInit {
    /// All logits zero: the uniform policy.
    Uniform,
    /// Logits drawn uniformly from `[-scale, scale]` (clipped to the box).
    Random { seed: u64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct Ring {
    codec: SubsetCodec,
    offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct AgentBlock {
    rings: Vec<Ring>,
    params: Vec<f64>,
}

/// Sparse score vector `grad log pi_k(a_k | s)` over an agent's active block.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl Score {
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, g)| g * w[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, g)| g * g).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, g) in &self.entries {
            out[i] += g;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedPolicy {
    graph: AgentGraph,
    state_sizes: Vec<usize>,
    action_sizes: Vec<usize>,
    alphas: Vec<f64>,
    c_f: f64,
    active_radius: usize,
    agents: Vec<AgentBlock>,
}

/// Serialized policy: `agents[k][r]` is the ring-`r` table of agent `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub alphas: Vec<f64>,
    pub c_f: f64,
    pub active_radius: usize,
    pub agents: Vec<Vec<Vec<f64>>>,
}

fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logits.iter_mut() {
        *l /= total;
    }
}

impl LocalizedPolicy {
    /// `alphas` must have length `r_max + 1` where `r_max` is the graph's
    /// maximum diameter.
    pub fn new(
        graph: &AgentGraph,
        state_sizes: &[usize],
        action_sizes: &[usize],
        alphas: &[f64],
        c_f: f64,
        init: PolicyInit,
    ) -> Result<Self> {
        let k = graph.num_agents();
        if state_sizes.len() != k || action_sizes.len() != k {
            return input("policy needs one state and action size per agent");
        }
        let r_max = graph.max_diameter();
        if alphas.len() != r_max + 1 {
            return input(format!(
                "expected {} ring weights for diameter {r_max}, got {}",
                r_max + 1,
                alphas.len()
            ));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return input("ring weights must be non-negative");
        }
        if !(c_f.is_finite() && c_f > 0.0) {
            return input("logit bound C_f must be positive");
        }
        let mut rng = match init {
            PolicyInit::Random { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            PolicyInit::Uniform => None,
        };
        let agents = (0..k)
            .map(|j| {
                let mut offset = 0;
                let rings: Vec<Ring> = (0..=r_max)
                    .map(|r| {
                        let codec = SubsetCodec::new(&graph.neighborhood(j, r), state_sizes);
                        let ring = Ring { codec, offset };
                        offset += ring.codec.size() * action_sizes[j];
                        ring
                    })
                    .collect();
                let params = match (&mut rng, init) {
                    (Some(rng), PolicyInit::Random { scale, .. }) => (0..offset)
                        .map(|_| rng.random_range(-scale..=scale).clamp(-c_f, c_f))
                        .collect(),
                    _ => vec![0.0; offset],
                };
                AgentBlock { rings, params }
            })
            .collect();
        Ok(Self {
            graph: graph.clone(),
            state_sizes: state_sizes.to_vec(),
            action_sizes: action_sizes.to_vec(),
            alphas: alphas.to_vec(),
            c_f,
            active_radius: r_max,
            agents,
        })
    }

    pub fn for_mdp(mdp: &FactoredMdp, alphas: &[f64], c_f: f64, init: PolicyInit) -> Result<Self> {
        Self::new(mdp.graph(), mdp.state_sizes(), mdp.action_sizes(), alphas, c_f, init)
    }

    pub fn graph(&self) -> &AgentGraph {
        &self.graph
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn c_f(&self) -> f64 {
        self.c_f
    }

    pub fn max_radius(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn active_radius(&self) -> usize {
        self.active_radius
    }

    pub fn action_size(&self, k: usize) -> usize {
        self.action_sizes[k]
    }

    /// Ring weight with frozen rings counted as zero.
    pub fn effective_alpha(&self, r: usize) -> f64 {
        if r <= self.active_radius {
            self.alphas[r]
        } else {
            0.0
        }
    }

    /// All parameters of agent `k`, rings in ascending radius.
    pub fn params(&self, k: usize) -> &[f64] {
        &self.agents[k].params
    }

    /// Length of the active block `(theta_k)_{N^r_k}` (rings `0..=active`).
    pub fn active_len(&self, k: usize) -> usize {
        let block = &self.agents[k];
        match block.rings.get(self.active_radius + 1) {
            Some(ring) => ring.offset,
            None => block.params.len(),
        }
    }

    /// Ring `r` table of agent `k`, laid out as `[local_state * |A_k| + a_k]`.
    pub fn ring_table(&self, k: usize, r: usize) -> &[f64] {
        let block = &self.agents[k];
        let start = block.rings[r].offset;
        let end = block.rings.get(r + 1).map_or(block.params.len(), |n| n.offset);
        &block.params[start..end]
    }

    pub fn ring_members(&self, k: usize, r: usize) -> &[usize] {
        self.agents[k].rings[r].codec.members()
    }

    pub fn set_param(&mut self, k: usize, i: usize, value: f64) -> Result<()> {
        if i >= self.active_len(k) {
            return input(format!("parameter {i} of agent {k} is frozen or out of range"));
        }
        self.agents[k].params[i] = value.clamp(-self.c_f, self.c_f);
        Ok(())
    }

    /// `f_{theta_k}(s, .)` over the agent's actions.
    pub fn logits(&self, k: usize, s: &[usize]) -> Vec<f64> {
        let na = self.action_sizes[k];
        let block = &self.agents[k];
        let mut f = vec![0.0; na];
        for (r, ring) in block.rings.iter().enumerate().take(self.active_radius + 1) {
            let alpha = self.alphas[r];
            if alpha == 0.0 {
                continue;
            }
            let base = ring.offset + ring.codec.code(s) * na;
            for (b, fb) in f.iter_mut().enumerate() {
                *fb += alpha * block.params[base + b];
            }
        }
        f
    }

    /// `pi_{theta_k}(. | s)`; reads only coordinates inside `N^{active}_k`.
    pub fn action_probs(&self, k: usize, s: &[usize]) -> Vec<f64> {
        let mut p = self.logits(k, s);
        softmax_in_place(&mut p);
        p
    }

    /// Score `grad log pi_k(a_k | s)` over the active block.
    pub fn log_grad(&self, k: usize, s: &[usize], a_k: usize) -> Score {
        let probs = self.action_probs(k, s);
        self.log_grad_with_probs(k, s, a_k, &probs)
    }

    pub(crate) fn log_grad_with_probs(&self, k: usize, s: &[usize], a_k: usize, probs: &[f64]) -> Score {
        let na = self.action_sizes[k];
        let block = &self.agents[k];
        let mut entries = Vec::with_capacity((self.active_radius + 1) * na);
        for (r, ring) in block.rings.iter().enumerate().take(self.active_radius + 1) {
            let alpha = self.alphas[r];
            if alpha == 0.0 {
                continue;
            }
            let base = ring.offset + ring.codec.code(s) * na;
            for (b, &pb) in probs.iter().enumerate() {
                let ind = if b == a_k { 1.0 } else { 0.0 };
                entries.push((base + b, alpha * (ind - pb)));
            }
        }
        Score {
            dim: self.active_len(k),
            entries,
        }
    }

    /// Zeroes and freezes every ring above `r`.
    pub fn truncate(&mut self, r: usize) {
        let r = r.min(self.max_radius());
        self.active_radius = r;
        for k in 0..self.agents.len() {
            let start = self.active_len(k);
            for p in &mut self.agents[k].params[start..] {
                *p = 0.0;
            }
        }
    }

    /// Same parameters with every ring treated as active; frozen rings are
    /// still zero, so the policy itself is unchanged, only the score widens.
    pub fn widened(&self) -> Self {
        let mut out = self.clone();
        out.active_radius = self.max_radius();
        out
    }

    /// Single-agent policy over agent `k`'s own state holding its ring-0 table.
    pub fn ring0_policy(&self, k: usize) -> Result<Self> {
        let g = AgentGraph::new(1, &[])?;
        let mut out = Self::new(
            &g,
            &[self.state_sizes[k]],
            &[self.action_sizes[k]],
            &self.alphas[..1],
            self.c_f,
            PolicyInit::Uniform,
        )?;
        out.agents[0].params = self.ring_table(k, 0).to_vec();
        Ok(out)
    }

    /// `theta_k[active] += scale * w`, then projection onto the logit box.
    pub fn apply_update(&mut self, k: usize, w: &[f64], scale: f64) -> Result<()> {
        let n = self.active_len(k);
        if w.len() != n {
            return input(format!("update has length {}, active block has {n}", w.len()));
        }
        let c = self.c_f;
        for (p, wi) in self.agents[k].params[..n].iter_mut().zip(w) {
            *p = (*p + scale * wi).clamp(-c, c);
        }
        Ok(())
    }

    /// Upper bound on `sup TV(pi_k(.|s), pi_k(.|s~))` over `s, s~` agreeing on
    /// `N^r_k`: `2 C e^{2C(r_max - r)} sum_{r' > r} alpha_{r'}`.
    pub fn tv_bound(&self, r: usize) -> f64 {
        let r_max = self.max_radius();
        if r >= r_max {
            return 0.0;
        }
        let tail: f64 = (r + 1..=r_max).map(|q| self.effective_alpha(q)).sum();
        2.0 * self.c_f * (2.0 * self.c_f * (r_max - r) as f64).exp() * tail
    }

    /// Smallest `xi` with `tv_bound(r) <= xi * e^{-beta r}` for every radius.
    pub fn xi(&self, beta: f64) -> f64 {
        (0..=self.max_radius())
            .map(|r| self.tv_bound(r) * (beta * r as f64).exp())
            .fold(0.0, f64::max)
    }

    /// Bound `B` on the score norm: `sqrt(2 sum_{r <= active} alpha_r^2)`.
    pub fn grad_norm_bound(&self) -> f64 {
        (2.0 * (0..=self.active_radius).map(|r| self.alphas[r].powi(2)).sum::<f64>()).sqrt()
    }

    /// Smoothness constant `delta = 2 B^2` of `log pi`.
    pub fn smoothness(&self) -> f64 {
        2.0 * self.grad_norm_bound().powi(2)
    }

    /// Bound `omega_r` on `||grad_{rings > r} pi_k(a_k | s)||`. With indicator
    /// features each ring contributes at most `alpha^2 * 2 p^2 (1-p)^2 <= alpha^2 / 8`.
    pub fn omega(&self, r: usize) -> f64 {
        let tail: f64 = (r + 1..=self.max_radius()).map(|q| self.alphas[q].powi(2)).sum();
        (tail / 8.0).sqrt()
    }

    /// Product-form policy table over global states.
    pub fn to_table(&self, mdp: &FactoredMdp) -> PolicyTable {
        let idx = mdp.index();
        let ns = idx.num_states();
        let mut s = vec![0; self.num_agents()];
        let mut probs: Vec<Vec<f64>> = self
            .action_sizes
            .iter()
            .map(|&na| Vec::with_capacity(ns * na))
            .collect();
        for si in 0..ns {
            idx.states.decode_into(si, &mut s);
            for (k, table) in probs.iter_mut().enumerate() {
                table.extend(self.action_probs(k, &s));
            }
        }
        PolicyTable { probs }
    }

    /// Brute-force `max_k sup TV` over global state pairs agreeing on `N^r_k`.
    pub fn measured_tv(&self, mdp: &FactoredMdp, r: usize) -> f64 {
        let idx = mdp.index();
        let ns = idx.num_states();
        let states: Vec<Vec<usize>> = (0..ns).map(|i| idx.states.decode(i)).collect();
        let mut worst = 0.0f64;
        for k in 0..self.num_agents() {
            let codec = SubsetCodec::new(&self.graph.neighborhood(k, r), &self.state_sizes);
            let probs: Vec<Vec<f64>> = states.iter().map(|s| self.action_probs(k, s)).collect();
            for i in 0..ns {
                let ci = codec.code(&states[i]);
                for j in i + 1..ns {
                    if codec.code(&states[j]) == ci {
                        worst = worst.max(crate::decay::tv(&probs[i], &probs[j]));
                    }
                }
            }
        }
        worst
    }

    pub fn checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            alphas: self.alphas.clone(),
            c_f: self.c_f,
            active_radius: self.active_radius,
            agents: (0..self.num_agents())
                .map(|k| (0..=self.max_radius()).map(|r| self.ring_table(k, r).to_vec()).collect())
                .collect(),
        }
    }

    /// Restores parameters from a checkpoint taken on the same graph and spaces.
    pub fn restore(&mut self, ckpt: &PolicyCheckpoint) -> Result<()> {
        if ckpt.alphas.len() != self.alphas.len() || ckpt.agents.len() != self.agents.len() {
            return input("checkpoint does not match the policy layout");
        }
        for (k, rings) in ckpt.agents.iter().enumerate() {
            let flat: Vec<f64> = rings.iter().flatten().copied().collect();
            if flat.len() != self.agents[k].params.len() {
                return input(format!("checkpoint block of agent {k} has the wrong size"));
            }
            self.agents[k].params = flat;
        }
        self.alphas = ckpt.alphas.clone();
        self.c_f = ckpt.c_f;
        self.truncate(ckpt.active_radius);
        Ok(())
    }
}
