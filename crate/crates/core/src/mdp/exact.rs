//! Exact global oracle for desk-scale instances: per-agent values, visitation
//! distributions and the optimal policy, all by dense enumeration.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::FactoredMdp;
use crate::error::{input, Error, Result};

/// Default cap on the number of global state-action pairs.
pub const DEFAULT_SIZE_CAP: usize = 65_536;

/// Largest state count solved by dense LU; above it fixed-point iteration is used.
const DIRECT_LIMIT: usize = 1024;
/// Largest transition table (pairs x states) the oracle will materialize.
const TABLE_LIMIT: usize = 1 << 27;
const ITER_TOL: f64 = 1e-13;

/// Product-form policy over global states: `probs[k][s * |A_k| + a_k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyTable {
    pub probs: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn uniform(mdp: &FactoredMdp) -> Self {
        let ns = mdp.index().num_states();
        let probs = mdp
            .action_sizes()
            .iter()
            .map(|&na| vec![1.0 / na as f64; ns * na])
            .collect();
        Self { probs }
    }

    /// Deterministic policy from a flat global action per global state.
    pub fn deterministic(mdp: &FactoredMdp, actions: &[usize]) -> Self {
        let idx = mdp.index();
        let ns = idx.num_states();
        let probs = (0..mdp.num_agents())
            .map(|k| {
                let na = mdp.action_sizes()[k];
                let mut t = vec![0.0; ns * na];
                for (s, &a) in actions.iter().enumerate() {
                    t[s * na + idx.actions.digit(a, k)] = 1.0;
                }
                t
            })
            .collect();
        Self { probs }
    }

    pub fn agent_prob(&self, k: usize, s: usize, a_k: usize, na_k: usize) -> f64 {
        self.probs[k][s * na_k + a_k]
    }

    /// Joint table `pi(a | s)` at flat index `s * |A| + a`.
    pub fn joint(&self, mdp: &FactoredMdp) -> Vec<f64> {
        let idx = mdp.index();
        let ns = idx.num_states();
        let na = idx.num_actions();
        let sizes = mdp.action_sizes();
        let mut out = vec![0.0; ns * na];
        let mut a = vec![0; mdp.num_agents()];
        for ai in 0..na {
            idx.actions.decode_into(ai, &mut a);
            for s in 0..ns {
                let mut p = 1.0;
                for k in 0..a.len() {
                    p *= self.probs[k][s * sizes[k] + a[k]];
                }
                out[s * na + ai] = p;
            }
        }
        out
    }
}

/// Exact values and visitation measures of one policy.
#[derive(Debug, Clone, Serialize)]
pub struct ExactSolution {
    pub num_agents: usize,
    pub num_states: usize,
    pub num_actions: usize,
    /// `v_agent[k][s]`
    pub v_agent: Vec<Vec<f64>>,
    /// `q_agent[k][s * |A| + a]`
    pub q_agent: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    /// Joint policy table the solution was computed for.
    pub policy: Vec<f64>,
    /// Discounted state visitation from the MDP's `mu`.
    pub d_mu: Vec<f64>,
    /// Discounted state-action visitation from the MDP's `nu`.
    pub d_nu: Vec<f64>,
    /// Sup-norm residual of the per-agent Bellman equations.
    pub bellman_residual: f64,
}

impl ExactSolution {
    pub fn state_of(&self, pair: usize) -> usize {
        pair / self.num_actions
    }

    pub fn advantage_agent(&self, k: usize, pair: usize) -> f64 {
        self.q_agent[k][pair] - self.v_agent[k][self.state_of(pair)]
    }

    pub fn advantage(&self, pair: usize) -> f64 {
        self.q[pair] - self.v[self.state_of(pair)]
    }

    /// `V(mu) = sum_s mu(s) V(s)`.
    pub fn value_of(&self, start: &[f64]) -> f64 {
        start.iter().zip(&self.v).map(|(p, v)| p * v).sum()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalSolution {
    /// Greedy flat global action per state (lowest index on ties).
    pub actions: Vec<usize>,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Dense global model with a materialized transition table.
#[derive(Debug, Clone)]
pub struct ExactModel<'a> {
    mdp: &'a FactoredMdp,
    ns: usize,
    na: usize,
    /// `trans[(s * |A| + a) * |S| + s']`
    trans: Vec<f64>,
    /// `rewards[k][s * |A| + a] = r_k(s_k, a_k)`
    rewards: Vec<Vec<f64>>,
    global_reward: Vec<f64>,
}

impl<'a> ExactModel<'a> {
    pub fn new(mdp: &'a FactoredMdp) -> Result<Self> {
        Self::with_cap(mdp, DEFAULT_SIZE_CAP)
    }

    pub fn with_cap(mdp: &'a FactoredMdp, cap: usize) -> Result<Self> {
        let idx = mdp.index();
        let pairs = idx.num_pairs();
        if pairs > cap {
            return Err(Error::Size {
                what: "global state-action space",
                size: pairs,
                cap,
            });
        }
        let ns = idx.num_states();
        let na = idx.num_actions();
        if pairs.saturating_mul(ns) > TABLE_LIMIT {
            return Err(Error::Size {
                what: "global transition table",
                size: pairs.saturating_mul(ns),
                cap: TABLE_LIMIT,
            });
        }
        let k = mdp.num_agents();
        let mut trans = Vec::with_capacity(pairs * ns);
        let mut rewards = vec![vec![0.0; pairs]; k];
        let mut global_reward = vec![0.0; pairs];
        let mut s = vec![0; k];
        let mut a = vec![0; k];
        for si in 0..ns {
            idx.states.decode_into(si, &mut s);
            for ai in 0..na {
                idx.actions.decode_into(ai, &mut a);
                trans.extend(mdp.global_step_dist(&s, &a));
                let p = si * na + ai;
                for j in 0..k {
                    rewards[j][p] = mdp.reward(j, s[j], a[j]);
                }
                global_reward[p] = mdp.global_reward(&s, &a);
            }
        }
        Ok(Self {
            mdp,
            ns,
            na,
            trans,
            rewards,
            global_reward,
        })
    }

    pub fn mdp(&self) -> &FactoredMdp {
        self.mdp
    }

    pub fn num_states(&self) -> usize {
        self.ns
    }

    pub fn num_actions(&self) -> usize {
        self.na
    }

    /// Row `P(. | s, a)` over flat global states.
    pub fn transition_row(&self, pair: usize) -> &[f64] {
        &self.trans[pair * self.ns..(pair + 1) * self.ns]
    }

    pub fn agent_reward(&self, k: usize, pair: usize) -> f64 {
        self.rewards[k][pair]
    }

    fn check_joint(&self, joint: &[f64]) -> Result<()> {
        if joint.len() != self.ns * self.na {
            return input("policy table does not match the global action space");
        }
        for (s, row) in joint.chunks(self.na).enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < 0.0) {
                return input(format!("policy row of state {s} is not a distribution"));
            }
        }
        Ok(())
    }

    /// State-to-state kernel `P_pi(s, s')` as a dense matrix.
    fn state_kernel(&self, joint: &[f64]) -> DMatrix<f64> {
        let ns = self.ns;
        let mut m = DMatrix::zeros(ns, ns);
        for s in 0..ns {
            for a in 0..self.na {
                let p = joint[s * self.na + a];
                if p == 0.0 {
                    continue;
                }
                let row = self.transition_row(s * self.na + a);
                for (t, &q) in row.iter().enumerate() {
                    m[(s, t)] += p * q;
                }
            }
        }
        m
    }

    /// Applies `x -> sum_a pi(a|s) sum_s' P(s'|s,a) x(s')`.
    fn apply_kernel(&self, joint: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.ns)
            .map(|s| {
                let mut acc = 0.0;
                for a in 0..self.na {
                    let p = joint[s * self.na + a];
                    if p != 0.0 {
                        let row = self.transition_row(s * self.na + a);
                        acc += p * row.iter().zip(x).map(|(q, v)| q * v).sum::<f64>();
                    }
                }
                acc
            })
            .collect()
    }

    /// Applies the transpose `y -> y P_pi`.
    fn apply_kernel_t(&self, joint: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ns];
        for s in 0..self.ns {
            if y[s] == 0.0 {
                continue;
            }
            for a in 0..self.na {
                let p = joint[s * self.na + a] * y[s];
                if p != 0.0 {
                    let row = self.transition_row(s * self.na + a);
                    for (o, q) in out.iter_mut().zip(row) {
                        *o += p * q;
                    }
                }
            }
        }
        out
    }

    /// Solves `x = b + gamma P_pi x` (or its transpose) for several right-hand sides.
    fn solve_resolvent(&self, joint: &[f64], rhs: &[Vec<f64>], transpose: bool) -> Vec<Vec<f64>> {
        let gamma = self.mdp.gamma();
        if self.ns <= DIRECT_LIMIT {
            let p = self.state_kernel(joint);
            let p = if transpose { p.transpose() } else { p };
            let m = DMatrix::identity(self.ns, self.ns) - p * gamma;
            let lu = m.lu();
            rhs.iter()
                .map(|b| {
                    let x = lu
                        .solve(&DVector::from_column_slice(b))
                        .expect("I - gamma P is invertible for gamma < 1");
                    x.as_slice().to_vec()
                })
                .collect()
        } else {
            rhs.iter()
                .map(|b| {
                    let mut x = b.clone();
                    loop {
                        let px = if transpose {
                            self.apply_kernel_t(joint, &x)
                        } else {
                            self.apply_kernel(joint, &x)
                        };
                        let next: Vec<f64> = b.iter().zip(&px).map(|(bi, pi)| bi + gamma * pi).collect();
                        let diff = next.iter().zip(&x).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                        x = next;
                        if diff <= ITER_TOL {
                            break;
                        }
                    }
                    x
                })
                .collect()
        }
    }

    /// Per-agent and global values of a joint policy table, plus visitation
    /// distributions from the MDP's own start distributions.
    pub fn solve_joint(&self, joint: Vec<f64>) -> Result<ExactSolution> {
        self.check_joint(&joint)?;
        let gamma = self.mdp.gamma();
        let k = self.mdp.num_agents();
        let ns = self.ns;
        let na = self.na;

        let rhs: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                (0..ns)
                    .map(|s| {
                        (0..na)
                            .map(|a| joint[s * na + a] * self.rewards[j][s * na + a])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let v_agent = self.solve_resolvent(&joint, &rhs, false);

        let q_agent: Vec<Vec<f64>> = v_agent
            .iter()
            .enumerate()
            .map(|(j, vk)| {
                (0..ns * na)
                    .map(|p| {
                        let row = self.transition_row(p);
                        self.rewards[j][p] + gamma * row.iter().zip(vk).map(|(q, v)| q * v).sum::<f64>()
                    })
                    .collect()
            })
            .collect();

        let mut bellman_residual = 0.0f64;
        for (vk, qk) in v_agent.iter().zip(&q_agent) {
            for s in 0..ns {
                let back: f64 = (0..na).map(|a| joint[s * na + a] * qk[s * na + a]).sum();
                bellman_residual = bellman_residual.max((back - vk[s]).abs());
            }
        }

        let kf = k as f64;
        let v: Vec<f64> = (0..ns).map(|s| v_agent.iter().map(|vk| vk[s]).sum::<f64>() / kf).collect();
        let q: Vec<f64> = (0..ns * na)
            .map(|p| q_agent.iter().map(|qk| qk[p]).sum::<f64>() / kf)
            .collect();

        let d_mu = self.visitation_states_joint(&joint, &self.mdp.start_state_dist());
        let d_nu = self.visitation_pairs_joint(&joint, &self.mdp.start_pair_dist());

        Ok(ExactSolution {
            num_agents: k,
            num_states: ns,
            num_actions: na,
            v_agent,
            q_agent,
            v,
            q,
            policy: joint,
            d_mu,
            d_nu,
            bellman_residual,
        })
    }

    pub fn solve(&self, pi: &PolicyTable) -> Result<ExactSolution> {
        self.solve_joint(pi.joint(self.mdp))
    }

    /// `d(s) = (1 - gamma) sum_t gamma^t P(s_t = s)` with `s_0 ~ start`.
    pub fn visitation_states_joint(&self, joint: &[f64], start: &[f64]) -> Vec<f64> {
        let gamma = self.mdp.gamma();
        let b: Vec<f64> = start.iter().map(|p| (1.0 - gamma) * p).collect();
        self.solve_resolvent(joint, &[b], true).remove(0)
    }

    /// Discounted state-action visitation with `(s_0, a_0) ~ start` (flat pairs).
    pub fn visitation_pairs_joint(&self, joint: &[f64], start: &[f64]) -> Vec<f64> {
        let gamma = self.mdp.gamma();
        let ns = self.ns;
        let na = self.na;
        // x(s) = sum_{s0,a0} P(s | s0,a0) d(s0,a0) solves x = (1-g) P^T start + g P_pi^T x
        let mut y = vec![0.0; ns];
        for (p, &w) in start.iter().enumerate() {
            if w != 0.0 {
                for (o, q) in y.iter_mut().zip(self.transition_row(p)) {
                    *o += (1.0 - gamma) * w * q;
                }
            }
        }
        let x = self.solve_resolvent(joint, &[y], true).remove(0);
        (0..ns * na)
            .map(|p| (1.0 - gamma) * start[p] + gamma * joint[p] * x[p / na])
            .collect()
    }

    /// Value iteration on the global MDP, followed by exact evaluation of the
    /// greedy policy.
    pub fn optimal(&self) -> Result<OptimalSolution> {
        let gamma = self.mdp.gamma();
        let ns = self.ns;
        let na = self.na;
        let backup = |v: &[f64]| -> Vec<f64> {
            (0..ns * na)
                .map(|p| {
                    let row = self.transition_row(p);
                    self.global_reward[p] + gamma * row.iter().zip(v).map(|(q, x)| q * x).sum::<f64>()
                })
                .collect()
        };
        let mut v = vec![0.0; ns];
        let mut iterations = 0;
        let residual = loop {
            iterations += 1;
            let q = backup(&v);
            let next: Vec<f64> = q
                .chunks(na)
                .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if diff <= 1e-12 || iterations >= 100_000 {
                break diff;
            }
        };
        let q = backup(&v);
        let actions: Vec<usize> = q
            .chunks(na)
            .map(|row| {
                let mut best = 0;
                for a in 1..na {
                    if row[a] > row[best] + 1e-12 {
                        best = a;
                    }
                }
                best
            })
            .collect();
        let mut joint = vec![0.0; ns * na];
        for (s, &a) in actions.iter().enumerate() {
            joint[s * na + a] = 1.0;
        }
        let sol = self.solve_joint(joint)?;
        let q = backup(&sol.v);
        Ok(OptimalSolution {
            actions,
            v: sol.v,
            q,
            iterations,
            residual,
        })
    }
}

/// Exact per-agent values for `pi`. See [`ExactModel::solve`].
pub fn exact_values(mdp: &FactoredMdp, pi: &PolicyTable) -> Result<ExactSolution> {
    ExactModel::new(mdp)?.solve(pi)
}

pub fn exact_visitation_states(mdp: &FactoredMdp, pi: &PolicyTable, mu: &[f64]) -> Result<Vec<f64>> {
    let model = ExactModel::new(mdp)?;
    if mu.len() != model.num_states() {
        return input("start distribution has the wrong length");
    }
    Ok(model.visitation_states_joint(&pi.joint(mdp), mu))
}

pub fn exact_visitation_pairs(mdp: &FactoredMdp, pi: &PolicyTable, nu: &[f64]) -> Result<Vec<f64>> {
    let model = ExactModel::new(mdp)?;
    if nu.len() != model.num_states() * model.num_actions() {
        return input("start distribution has the wrong length");
    }
    Ok(model.visitation_pairs_joint(&pi.joint(mdp), nu))
}

pub fn optimal_policy(mdp: &FactoredMdp) -> Result<OptimalSolution> {
    ExactModel::new(mdp)?.optimal()
}
