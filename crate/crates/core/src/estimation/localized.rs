//! Exact localized values: per-agent V, Q and advantage averaged over the
//! states (and actions) outside `N^r_k` under a boundary distribution.

use crate::error::{input, Result};
use crate::mdp::{ExactSolution, FactoredMdp, SubsetCodec};

/// Conditional law of the outside coordinates given `s_{N^r_k}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    /// Conditional of the exact `d^pi_mu` (uniform on groups it never visits).
    Visitation,
    /// Uniform over the outside coordinates.
    Uniform,
    /// `weights[k][s]` over global states; must sum to one on every group of
    /// states sharing `s_{N^r_k}`.
    Weights(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedValues {
    pub radius: usize,
    pub states: Vec<SubsetCodec>,
    pub actions: Vec<SubsetCodec>,
    /// `v[k][code(s_N)]`
    pub v: Vec<Vec<f64>>,
    /// `q[k][code(s_N) * |A_N| + code(a_N)]`
    pub q: Vec<Vec<f64>>,
}

impl LocalizedValues {
    pub fn value(&self, k: usize, s: &[usize]) -> f64 {
        self.v[k][self.states[k].code(s)]
    }

    pub fn q_value(&self, k: usize, s: &[usize], a: &[usize]) -> f64 {
        self.q[k][self.states[k].code(s) * self.actions[k].size() + self.actions[k].code(a)]
    }

    pub fn advantage(&self, k: usize, s: &[usize], a: &[usize]) -> f64 {
        self.q_value(k, s, a) - self.value(k, s)
    }
}

fn normalized_weights(raw: &[f64], codes: &[usize], groups: usize, fallback_uniform: bool) -> Result<Vec<f64>> {
    let mut mass = vec![0.0; groups];
    let mut count = vec![0usize; groups];
    for (w, &c) in raw.iter().zip(codes) {
        if !(w.is_finite() && *w >= 0.0) {
            return input("boundary weights must be non-negative");
        }
        mass[c] += w;
        count[c] += 1;
    }
    raw.iter()
        .zip(codes)
        .map(|(w, &c)| {
            if mass[c] > 0.0 {
                Ok(w / mass[c])
            } else if fallback_uniform {
                Ok(1.0 / count[c] as f64)
            } else {
                input("boundary weights vanish on a local state")
            }
        })
        .collect()
}

pub fn localized_values_exact(
    mdp: &FactoredMdp,
    sol: &ExactSolution,
    r: usize,
    boundary: &Boundary,
) -> Result<LocalizedValues> {
    let idx = mdp.index();
    let (ns, na) = (idx.num_states(), idx.num_actions());
    let k = mdp.num_agents();
    let states: Vec<Vec<usize>> = (0..ns).map(|i| idx.states.decode(i)).collect();
    let actions: Vec<Vec<usize>> = (0..na).map(|i| idx.actions.decode(i)).collect();
    if let Boundary::Weights(w) = boundary {
        if w.len() != k || w.iter().any(|row| row.len() != ns) {
            return input("boundary weights need one row of global states per agent");
        }
    }
    let marginals = agent_marginals(sol, mdp);
    let mut out = LocalizedValues {
        radius: r,
        states: Vec::with_capacity(k),
        actions: Vec::with_capacity(k),
        v: Vec::with_capacity(k),
        q: Vec::with_capacity(k),
    };
    for ag in 0..k {
        let members = mdp.graph().neighborhood(ag, r);
        let outside = mdp.graph().complement(ag, r);
        let sc = SubsetCodec::new(&members, mdp.state_sizes());
        let ac = SubsetCodec::new(&members, mdp.action_sizes());
        let codes: Vec<usize> = states.iter().map(|s| sc.code(s)).collect();
        let weights = match boundary {
            Boundary::Visitation => normalized_weights(&sol.d_mu, &codes, sc.size(), true)?,
            Boundary::Uniform => normalized_weights(&vec![1.0; ns], &codes, sc.size(), true)?,
            Boundary::Weights(w) => {
                let given = &w[ag];
                let normed = normalized_weights(given, &codes, sc.size(), false)?;
                if given.iter().zip(&normed).any(|(a, b)| (a - b).abs() > 1e-9) {
                    return input("boundary weights are not a conditional distribution");
                }
                normed
            }
        };
        let mut v = vec![0.0; sc.size()];
        let mut q = vec![0.0; sc.size() * ac.size()];
        for si in 0..states.len() {
            let ws = weights[si];
            if ws == 0.0 {
                continue;
            }
            v[codes[si]] += ws * sol.v_agent[ag][si];
            for (ai, a) in actions.iter().enumerate() {
                let mut p = ws;
                for &j in &outside {
                    p *= marginals[j][si * mdp.action_sizes()[j] + a[j]];
                }
                if p == 0.0 {
                    continue;
                }
                q[codes[si] * ac.size() + ac.code(a)] += p * sol.q_agent[ag][si * na + ai];
            }
        }
        out.states.push(sc);
        out.actions.push(ac);
        out.v.push(v);
        out.q.push(q);
    }
    Ok(out)
}

/// Per-agent marginals `pi_j(a_j | s)` recovered from the joint table.
fn agent_marginals(sol: &ExactSolution, mdp: &FactoredMdp) -> Vec<Vec<f64>> {
    let idx = mdp.index();
    let (ns, na) = (idx.num_states(), idx.num_actions());
    (0..mdp.num_agents())
        .map(|j| {
            let na_j = mdp.action_sizes()[j];
            let mut m = vec![0.0; ns * na_j];
            for si in 0..ns {
                for ai in 0..na {
                    m[si * na_j + idx.actions.digit(ai, j)] += sol.policy[si * na + ai];
                }
            }
            m
        })
        .collect()
}
