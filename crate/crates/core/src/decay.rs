//! Dobrushin certification of the dynamics, closed-form decay constants, and
//! brute-force measurements of Q/V decay on small instances.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ExactModel, ExactSolution, FactoredMdp, Kernel, MixedRadix, PolicyTable, DEFAULT_SIZE_CAP};
use crate::policy::LocalizedPolicy;

/// Half L1 distance.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DobrushinMode {
    /// Closed-form bound for the influence net; scope-restricted enumeration
    /// for tabular kernels.
    #[default]
    Analytic,
    /// Exact sup over all global contexts.
    Enumerate,
}

/// Max pairwise TV within each group of rows sharing a key.
fn grouped_max_tv(rows: &[(usize, Vec<f64>)]) -> f64 {
    let mut groups: HashMap<usize, Vec<&[f64]>> = HashMap::new();
    for (key, row) in rows {
        groups.entry(*key).or_default().push(row);
    }
    let mut worst = 0.0f64;
    for members in groups.values() {
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                worst = worst.max(tv(members[i], members[j]));
            }
        }
    }
    worst
}

fn enumerate_dobrushin(mdp: &FactoredMdp) -> Result<Vec<Vec<f64>>> {
    let idx = mdp.index();
    let pairs = idx.num_pairs();
    if pairs > DEFAULT_SIZE_CAP {
        return Err(Error::Size {
            what: "global state-action pairs",
            size: pairs,
            cap: DEFAULT_SIZE_CAP,
        });
    }
    let k = mdp.num_agents();
    let local_radix: Vec<usize> = (0..k)
        .map(|j| mdp.state_sizes()[j] * mdp.action_sizes()[j])
        .collect();
    let codec = MixedRadix::new(&local_radix);
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut s = vec![0; k];
            let mut a = vec![0; k];
            let mut digits = vec![0; k];
            let dists: Vec<(Vec<usize>, Vec<f64>)> = (0..codec.size())
                .map(|code| {
                    codec.decode_into(code, &mut digits);
                    for j in 0..k {
                        s[j] = digits[j] / mdp.action_sizes()[j];
                        a[j] = digits[j] % mdp.action_sizes()[j];
                    }
                    let mut out = vec![0.0; mdp.state_sizes()[i]];
                    mdp.local_dist(i, &s, &a, &mut out);
                    (digits.clone(), out)
                })
                .collect();
            (0..k)
                .map(|j| {
                    let keyed: Vec<(usize, Vec<f64>)> = dists
                        .iter()
                        .map(|(d, row)| {
                            let mut ctx = d.clone();
                            ctx[j] = 0;
                            (codec.encode(&ctx), row.clone())
                        })
                        .collect();
                    grouped_max_tv(&keyed)
                })
                .collect()
        })
        .collect();
    Ok(rows)
}

fn scoped_dobrushin(mdp: &FactoredMdp) -> Vec<Vec<f64>> {
    let Kernel::Scoped(kernels) = mdp.kernel() else {
        unreachable!()
    };
    let k = mdp.num_agents();
    (0..k)
        .map(|i| {
            let sk = &kernels[i];
            let radix: Vec<usize> = sk
                .scope
                .iter()
                .map(|&j| mdp.state_sizes()[j] * mdp.action_sizes()[j])
                .collect();
            let codec = MixedRadix::new(&radix);
            let width = mdp.state_sizes()[i];
            let mut row = vec![0.0; k];
            for (pos, &j) in sk.scope.iter().enumerate() {
                let keyed: Vec<(usize, Vec<f64>)> = (0..codec.size())
                    .map(|code| {
                        let mut d = codec.decode(code);
                        d[pos] = 0;
                        (codec.encode(&d), sk.table[code * width..(code + 1) * width].to_vec())
                    })
                    .collect();
                row[j] = grouped_max_tv(&keyed);
            }
            row
        })
        .collect()
}

/// Dobrushin interaction matrix `C[i][j]`.
pub fn dobrushin_matrix(mdp: &FactoredMdp, mode: DobrushinMode) -> Result<Vec<Vec<f64>>> {
    match (mode, mdp.kernel()) {
        (DobrushinMode::Enumerate, _) => enumerate_dobrushin(mdp),
        (DobrushinMode::Analytic, Kernel::Influence(net)) => Ok(net.analytic_dobrushin()),
        (DobrushinMode::Analytic, Kernel::Scoped(_)) => Ok(scoped_dobrushin(mdp)),
    }
}

/// `rho = max_k sum_j e^{beta d(k,j)} C_kj` (infinite if an unreachable agent
/// has influence) and whether `rho * gamma < 1`.
pub fn certify(mdp: &FactoredMdp, c: &[Vec<f64>], beta: f64, gamma: f64) -> (f64, bool) {
    let g = mdp.graph();
    let rho = c
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &ckj)| {
                    if ckj == 0.0 {
                        0.0
                    } else if g.is_reachable(k, j) {
                        (beta * g.dist(k, j) as f64).exp() * ckj
                    } else {
                        f64::INFINITY
                    }
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    (rho, rho * gamma < 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConstants {
    pub c: f64,
    pub psi: f64,
    pub c_prime: f64,
    pub phi: f64,
}

/// Q-decay `(c, psi)` and V-decay `(c', phi)` constants.
pub fn decay_constants(rho: f64, beta: f64, xi: f64, gamma: f64) -> Result<DecayConstants> {
    if !(gamma * rho < 1.0) {
        return Err(Error::Certification(format!("gamma * rho = {} >= 1", gamma * rho)));
    }
    let rx = rho + xi;
    if !(gamma * rx < 1.0) {
        return Err(Error::Certification(format!("gamma * (rho + xi) = {} >= 1", gamma * rx)));
    }
    let eb = beta.exp();
    Ok(DecayConstants {
        c: gamma * rho * eb / (1.0 - gamma * rho),
        psi: (-beta).exp(),
        c_prime: gamma * rx * eb / (1.0 - gamma * rx),
        phi: (-beta).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyOptions {
    pub mode: DobrushinMode,
    /// Spatial rate of the dynamics; defaults to the influence net's own rate.
    pub beta: Option<f64>,
    /// Rate used for the policy decay coefficient; defaults to the dynamics rate.
    pub policy_beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub mode: DobrushinMode,
    pub c: Vec<Vec<f64>>,
    pub env_beta: f64,
    pub policy_beta: f64,
    /// `min(env_beta, policy_beta)`.
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub ok: bool,
    pub xi: f64,
    /// Brute-forced policy sup-TV scaled to the same form as `xi`, when computed.
    pub xi_measured: Option<f64>,
    pub constants: Option<DecayConstants>,
    pub warnings: Vec<String>,
}

pub fn certificate(
    mdp: &FactoredMdp,
    policy: Option<&LocalizedPolicy>,
    opts: CertifyOptions,
) -> Result<DecayCertificate> {
    let env_beta = opts.beta.unwrap_or(match mdp.kernel() {
        Kernel::Influence(net) => net.beta,
        Kernel::Scoped(_) => 0.0,
    });
    let policy_beta = opts.policy_beta.unwrap_or(env_beta);
    let beta = env_beta.min(policy_beta);
    let c = dobrushin_matrix(mdp, opts.mode)?;
    let gamma = mdp.gamma();
    let (rho, ok) = certify(mdp, &c, beta, gamma);
    let xi = policy.map_or(0.0, |p| p.xi(beta));
    let xi_measured = match policy {
        Some(p) if mdp.index().num_states() <= 4096 => Some(
            (0..=p.max_radius())
                .map(|r| p.measured_tv(mdp, r) * (beta * r as f64).exp())
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    let constants = decay_constants(rho, beta, xi, gamma).ok();
    Ok(DecayCertificate {
        mode: opts.mode,
        c,
        env_beta,
        policy_beta,
        beta,
        gamma,
        rho,
        ok,
        xi,
        xi_measured,
        constants,
        warnings: mdp.warnings(),
    })
}

fn local_key(codec_sizes: &[usize], members: &[usize], digits: &[usize]) -> usize {
    members
        .iter()
        .fold(0, |acc, &j| acc * codec_sizes[j] + digits[j])
}

/// `max_k max |Q_k(s,a) - Q_k(s~,a~)|` over pairs agreeing on `N^r_k`.
pub fn q_decay_gap(mdp: &FactoredMdp, sol: &ExactSolution, r: usize) -> f64 {
    let idx = mdp.index();
    let (ns, na) = (idx.num_states(), idx.num_actions());
    let k = mdp.num_agents();
    let pair_sizes: Vec<usize> = (0..k)
        .map(|j| mdp.state_sizes()[j] * mdp.action_sizes()[j])
        .collect();
    let states: Vec<Vec<usize>> = (0..ns).map(|i| idx.states.decode(i)).collect();
    let actions: Vec<Vec<usize>> = (0..na).map(|i| idx.actions.decode(i)).collect();
    (0..k)
        .map(|ag| {
            let members = mdp.graph().neighborhood(ag, r);
            let mut range: HashMap<usize, (f64, f64)> = HashMap::new();
            let mut digits = vec![0; k];
            for (si, s) in states.iter().enumerate() {
                for (ai, a) in actions.iter().enumerate() {
                    for j in 0..k {
                        digits[j] = s[j] * mdp.action_sizes()[j] + a[j];
                    }
                    let q = sol.q_agent[ag][si * na + ai];
                    let e = range
                        .entry(local_key(&pair_sizes, &members, &digits))
                        .or_insert((q, q));
                    e.0 = e.0.min(q);
                    e.1 = e.1.max(q);
                }
            }
            range.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// `max_k max |V_k(s) - V_k(s~)|` over states agreeing on `N^r_k`.
pub fn v_decay_gap(mdp: &FactoredMdp, sol: &ExactSolution, r: usize) -> f64 {
    let idx = mdp.index();
    let k = mdp.num_agents();
    (0..k)
        .map(|ag| {
            let members = mdp.graph().neighborhood(ag, r);
            let mut range: HashMap<usize, (f64, f64)> = HashMap::new();
            for si in 0..idx.num_states() {
                let s = idx.states.decode(si);
                let v = sol.v_agent[ag][si];
                let e = range
                    .entry(local_key(mdp.state_sizes(), &members, &s))
                    .or_insert((v, v));
                e.0 = e.0.min(v);
                e.1 = e.1.max(v);
            }
            range.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

pub fn measure_q_decay(mdp: &FactoredMdp, pi: &PolicyTable, r: usize) -> Result<f64> {
    let sol = ExactModel::new(mdp)?.solve(pi)?;
    Ok(q_decay_gap(mdp, &sol, r))
}

pub fn measure_v_decay(mdp: &FactoredMdp, pi: &PolicyTable, r: usize) -> Result<f64> {
    let sol = ExactModel::new(mdp)?.solve(pi)?;
    Ok(v_decay_gap(mdp, &sol, r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Compares `|E_mu f - E_nu f|` with `sum_k TV(mu_k, nu_k) osc_k(f)` for
/// product measures; `f` is a table over the mixed-radix product of the
/// coordinate supports (first coordinate most significant).
pub fn check_product_tv_lemma(f: &[f64], mus: &[Vec<f64>], nus: &[Vec<f64>]) -> LemmaCheck {
    let sizes: Vec<usize> = mus.iter().map(Vec::len).collect();
    let codec = MixedRadix::new(&sizes);
    assert_eq!(codec.size(), f.len(), "table does not match the product support");
    let mu = crate::mdp::product_distribution(mus);
    let nu = crate::mdp::product_distribution(nus);
    let e = |d: &[f64]| d.iter().zip(f).map(|(p, v)| p * v).sum::<f64>();
    let lhs = (e(&mu) - e(&nu)).abs();
    let mut rhs = 0.0;
    for k in 0..sizes.len() {
        let mut osc = 0.0f64;
        for z in 0..f.len() {
            let mut digits = codec.decode(z);
            let own = digits[k];
            for v in own + 1..sizes[k] {
                digits[k] = v;
                osc = osc.max((f[z] - f[codec.encode(&digits)]).abs());
            }
        }
        rhs += tv(&mus[k], &nus[k]) * osc;
    }
    LemmaCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + 1e-12,
    }
}
