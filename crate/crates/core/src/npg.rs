//! Decentralized natural policy gradient, its centralized counterpart, and
//! the independent-agents equivalence check.
//!
//! Each iteration takes a read-only snapshot of the policy, computes every
//! agent's update (in parallel, with per-agent random streams), then applies
//! all updates. Rows of the run record describe the policy before the update
//! of that iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{certificate, CertifyOptions, DecayConstants};
use crate::error::{input, Result};
use crate::estimation::{sample_batch, stream, Episode, SamplerOptions};
use crate::mdp::{ExactModel, ExactSolution, FactoredMdp, DEFAULT_SIZE_CAP};
use crate::optim::{exact_quadratic, solve_exact, spgd, Quadratic};
use crate::policy::{LocalizedPolicy, PolicyCheckpoint, Score};

const EVAL_TAG: u64 = 0x6576_616c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Regression solved exactly against oracle advantages and visitation.
    #[default]
    Exact,
    /// Sampler episodes plus projected SGD.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    #[default]
    None,
    Centralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpgConfig {
    pub radius: usize,
    pub iterations: usize,
    /// Ball radius `W` of each agent's update.
    pub w_radius: f64,
    /// SPGD steps (and sampler episodes) per iteration in sampled mode.
    pub spgd_steps: usize,
    /// Explicit step size; `None` selects the auto rate.
    pub eta: Option<f64>,
    /// Smoothness override; defaults to the policy's closed form.
    pub delta: Option<f64>,
    pub mode: Mode,
    pub baseline: Baseline,
    pub seed: u64,
    pub sampler: SamplerOptions,
    /// Monte-Carlo evaluation episodes when the oracle does not fit.
    pub eval_episodes: usize,
    /// Keep every iteration's parameters in the record.
    pub record_params: bool,
}

impl Default for NpgConfig {
    fn default() -> Self {
        Self {
            radius: 0,
            iterations: 200,
            w_radius: 1.0,
            spgd_steps: 1000,
            eta: None,
            delta: None,
            mode: Mode::Exact,
            baseline: Baseline::None,
            seed: 0,
            sampler: SamplerOptions::default(),
            eval_episodes: 2000,
            record_params: false,
        }
    }
}

/// `sqrt(2 ln max_k |A_k| / (delta K W^2 T))`.
pub fn learning_rate(delta: f64, w: f64, t: usize, k: usize, max_action_card: usize) -> f64 {
    (2.0 * (max_action_card as f64).ln() / (delta * k as f64 * w * w * t as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub v_mu: f64,
    /// Monte-Carlo standard error; zero for oracle evaluations.
    pub v_mu_stderr: f64,
    pub gap: Option<f64>,
    pub eta: f64,
    pub w_norms: Vec<f64>,
    /// Per-agent regression loss of the applied update under `d^(t)`.
    pub losses: Vec<f64>,
    /// `max_k L(w_k) - L(w*_k)` under `d^(t)` (oracle only).
    pub eps_stat_proxy: Option<f64>,
    /// `max_k L(w*_k)` under the optimal policy's visitation (oracle only).
    pub eps_bias_proxy: Option<f64>,
}

impl IterationRecord {
    pub fn mean_w_norm(&self) -> f64 {
        if self.w_norms.is_empty() {
            0.0
        } else {
            self.w_norms.iter().sum::<f64>() / self.w_norms.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub rows: Vec<IterationRecord>,
    pub eta: f64,
    pub radius: usize,
    pub v_star: Option<f64>,
    pub min_gap: Option<f64>,
    pub constants: Option<DecayConstants>,
    /// `(c psi^{r+1} + c' phi^{r+1}) / (1 - gamma)`.
    pub loc_bound: Option<f64>,
    /// `W / (1-gamma) sqrt(2 delta ln max|A_k| / T)`.
    pub optimization_term: f64,
    pub warnings: Vec<String>,
    /// `V(mu)` of the policy left after the last update.
    pub v_final: f64,
    pub final_policy: PolicyCheckpoint,
    /// `params[t][k]`: parameters before the update of iteration `t`, then the
    /// final parameters (only with `record_params`).
    pub params: Vec<Vec<Vec<f64>>>,
}

pub fn localization_bound(consts: &DecayConstants, r: usize, gamma: f64) -> f64 {
    let e = (r + 1) as i32;
    (consts.c * consts.psi.powi(e) + consts.c_prime * consts.phi.powi(e)) / (1.0 - gamma)
}

/// Oracle pieces shared by an iteration.
struct Oracle<'a> {
    model: ExactModel<'a>,
    v_star: f64,
    d_star: Vec<f64>,
}

impl<'a> Oracle<'a> {
    fn new(mdp: &'a FactoredMdp) -> Result<Self> {
        let model = ExactModel::new(mdp)?;
        let optimum = model.optimal()?;
        let mu = mdp.start_state_dist();
        let v_star: f64 = mu.iter().zip(&optimum.v).map(|(p, v)| p * v).sum();
        let na = model.num_actions();
        let ns = model.num_states();
        let mut joint = vec![0.0; ns * na];
        for (s, &a) in optimum.actions.iter().enumerate() {
            joint[s * na + a] = 1.0;
        }
        let d_states = model.visitation_states_joint(&joint, &mu);
        let d_star = (0..ns * na).map(|p| d_states[p / na] * joint[p]).collect();
        Ok(Self {
            model,
            v_star,
            d_star,
        })
    }
}

fn fits_oracle(mdp: &FactoredMdp) -> bool {
    mdp.index().num_pairs() <= DEFAULT_SIZE_CAP
}

fn norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Monte-Carlo `V(mu)` with continuation probability `gamma`.
fn mc_value(mdp: &FactoredMdp, policy: &LocalizedPolicy, seed: u64, t: u64, n: usize) -> (f64, f64) {
    use crate::estimation::draw_categorical;
    use rand::Rng;
    let k = mdp.num_agents();
    let totals: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|e| {
            let mut rng = stream(seed, &[EVAL_TAG, t, e]);
            let mut s: Vec<usize> = (0..k)
                .map(|j| draw_categorical(&mut rng, &mdp.start_states()[j]))
                .collect();
            let mut total = 0.0;
            loop {
                let a: Vec<usize> = (0..k)
                    .map(|j| draw_categorical(&mut rng, &policy.action_probs(j, &s)))
                    .collect();
                total += mdp.global_reward(&s, &a);
                if rng.random::<f64>() >= mdp.gamma() {
                    break;
                }
                let rows: Vec<Vec<f64>> = (0..k)
                    .map(|j| {
                        let mut row = vec![0.0; mdp.state_sizes()[j]];
                        mdp.local_dist(j, &s, &a, &mut row);
                        row
                    })
                    .collect();
                for j in 0..k {
                    s[j] = draw_categorical(&mut rng, &rows[j]);
                }
            }
            total
        })
        .collect();
    let mean = totals.iter().sum::<f64>() / n as f64;
    let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-agent exact regression under `dist` with target `A_k`.
fn agent_quadratic(mdp: &FactoredMdp, policy: &LocalizedPolicy, sol: &ExactSolution, k: usize, dist: &[f64]) -> Quadratic {
    exact_quadratic(mdp, policy, &[k], dist, |p| sol.advantage_agent(k, p))
}

struct AgentStep {
    w: Vec<f64>,
    loss: Option<f64>,
    stat: Option<f64>,
    bias: Option<f64>,
}

/// Exact updates for decoupled agents with ring-0 policies, computed from each
/// agent's own single-agent MDP.
fn factorized_exact_steps(mdp: &FactoredMdp, policy: &LocalizedPolicy, w_radius: f64) -> Result<Vec<AgentStep>> {
    (0..mdp.num_agents())
        .into_par_iter()
        .map(|k| {
            let sub = mdp.sub_mdp(k)?;
            let sub_policy = policy.ring0_policy(k)?;
            let oracle = Oracle::new(&sub)?;
            let sol = oracle.model.solve(&sub_policy.to_table(&sub))?;
            let quad = agent_quadratic(&sub, &sub_policy, &sol, 0, &sol.d_nu);
            let w = solve_exact(&quad, w_radius);
            let bias = agent_quadratic(&sub, &sub_policy, &sol, 0, &oracle.d_star).loss(&w);
            Ok(AgentStep {
                loss: Some(quad.loss(&w)),
                stat: Some(0.0),
                bias: Some(bias),
                w,
            })
        })
        .collect()
}

fn sampled_steps(
    mdp: &FactoredMdp,
    policy: &LocalizedPolicy,
    cfg: &NpgConfig,
    t: usize,
    agent_ids: &[u64],
    sol: Option<(&ExactSolution, &[f64])>,
) -> Result<Vec<AgentStep>> {
    let episodes: Vec<Episode> = sample_batch(
        mdp,
        policy,
        cfg.sampler,
        cfg.seed,
        t as u64,
        0,
        cfg.spgd_steps,
        agent_ids,
    );
    let b = policy.grad_norm_bound();
    (0..mdp.num_agents())
        .into_par_iter()
        .map(|k| {
            let scores: Vec<Score> = episodes
                .iter()
                .map(|e| policy.log_grad(k, &e.sample.state, e.sample.action[k]))
                .collect();
            let samples = scores
                .iter()
                .zip(&episodes)
                .map(|(g, e)| (g, e.estimate.values[k]));
            let res = spgd(policy.active_len(k), samples, cfg.spgd_steps, b, cfg.w_radius, mdp.gamma())?;
            let (loss, stat, bias) = match sol {
                Some((sol, d_star)) => {
                    let quad = agent_quadratic(mdp, policy, sol, k, &sol.d_nu);
                    let best = solve_exact(&quad, cfg.w_radius);
                    let loss = quad.loss(&res.w_bar);
                    let bias = agent_quadratic(mdp, policy, sol, k, d_star).loss(&best);
                    (Some(loss), Some(loss - quad.loss(&best)), Some(bias))
                }
                None => (None, None, None),
            };
            Ok(AgentStep {
                w: res.w_bar,
                loss,
                stat,
                bias,
            })
        })
        .collect()
}

fn exact_steps(
    mdp: &FactoredMdp,
    policy: &LocalizedPolicy,
    w_radius: f64,
    sol: &ExactSolution,
    d_star: &[f64],
) -> Vec<AgentStep> {
    (0..mdp.num_agents())
        .into_par_iter()
        .map(|k| {
            let quad = agent_quadratic(mdp, policy, sol, k, &sol.d_nu);
            let w = solve_exact(&quad, w_radius);
            let bias = agent_quadratic(mdp, policy, sol, k, d_star).loss(&w);
            AgentStep {
                loss: Some(quad.loss(&w)),
                stat: Some(0.0),
                bias: Some(bias),
                w,
            }
        })
        .collect()
}

fn max_opt(mut values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values.try_fold(f64::NEG_INFINITY, |acc, v| v.map(|b| acc.max(b)))
}

fn resolve_eta(mdp: &FactoredMdp, policy: &LocalizedPolicy, cfg: &NpgConfig) -> (f64, f64) {
    let delta = cfg.delta.unwrap_or_else(|| policy.smoothness());
    let max_a = mdp.action_sizes().iter().copied().max().unwrap_or(1);
    let eta = match cfg.eta {
        Some(eta) => eta,
        None if delta == 0.0 || cfg.iterations == 0 => 0.0,
        None => learning_rate(delta, cfg.w_radius, cfg.iterations, mdp.num_agents(), max_a),
    };
    (eta, delta)
}

fn validate(mdp: &FactoredMdp, policy: &LocalizedPolicy, cfg: &NpgConfig) -> Result<()> {
    if policy.num_agents() != mdp.num_agents() {
        return input("policy and MDP have different agent counts");
    }
    if !(cfg.w_radius > 0.0) {
        return input("ball radius W must be positive");
    }
    if cfg.mode == Mode::Sampled && cfg.spgd_steps == 0 {
        return input("sampled mode needs at least one SPGD step");
    }
    if let Some(eta) = cfg.eta {
        if !(eta.is_finite() && eta >= 0.0) {
            return input("eta must be a non-negative number");
        }
    }
    Ok(())
}

/// Decentralized NPG: every agent fits its own advantage on its
/// radius-`r` score and updates its own block.
pub fn decentralized_npg(mdp: &FactoredMdp, policy: &mut LocalizedPolicy, cfg: &NpgConfig) -> Result<RunRecord> {
    let ids: Vec<u64> = (0..mdp.num_agents() as u64).collect();
    decentralized_npg_with_ids(mdp, policy, cfg, &ids)
}

/// As [`decentralized_npg`], with explicit sampler stream keys per agent.
pub fn decentralized_npg_with_ids(
    mdp: &FactoredMdp,
    policy: &mut LocalizedPolicy,
    cfg: &NpgConfig,
    agent_ids: &[u64],
) -> Result<RunRecord> {
    validate(mdp, policy, cfg)?;
    if agent_ids.len() != mdp.num_agents() {
        return input("one stream key per agent is required");
    }
    policy.truncate(cfg.radius);
    run(mdp, policy, cfg, agent_ids, false)
}

/// Centralized NPG over the full parameter vector with ball `sqrt(K) W` and
/// the global advantage as target.
pub fn centralized_npg(mdp: &FactoredMdp, policy: &mut LocalizedPolicy, cfg: &NpgConfig) -> Result<RunRecord> {
    validate(mdp, policy, cfg)?;
    if !fits_oracle(mdp) {
        return Err(crate::error::Error::Size {
            what: "global state-action pairs",
            size: mdp.index().num_pairs(),
            cap: DEFAULT_SIZE_CAP,
        });
    }
    let ids: Vec<u64> = (0..mdp.num_agents() as u64).collect();
    run(mdp, policy, cfg, &ids, true)
}

fn run(
    mdp: &FactoredMdp,
    policy: &mut LocalizedPolicy,
    cfg: &NpgConfig,
    agent_ids: &[u64],
    centralized: bool,
) -> Result<RunRecord> {
    let gamma = mdp.gamma();
    let (eta, delta) = resolve_eta(mdp, policy, cfg);
    let scale = eta / (1.0 - gamma);
    let mut warnings = mdp.warnings();
    let cert = certificate(mdp, Some(policy), CertifyOptions::default())?;
    if !cert.ok {
        warnings.push(format!("dynamics do not certify: rho * gamma = {} >= 1", cert.rho * gamma));
    }
    if cert.constants.is_none() {
        warnings.push("decay constants unavailable; localization guarantee is void".into());
    }
    let loc_bound = cert.constants.as_ref().map(|c| localization_bound(c, cfg.radius, gamma));
    let max_a = mdp.action_sizes().iter().copied().max().unwrap_or(1);
    let optimization_term = if cfg.iterations == 0 {
        f64::INFINITY
    } else {
        cfg.w_radius / (1.0 - gamma) * (2.0 * delta * (max_a as f64).ln() / cfg.iterations as f64).sqrt()
    };

    let oracle = if fits_oracle(mdp) { Some(Oracle::new(mdp)?) } else { None };
    let factorized = !centralized && cfg.mode == Mode::Exact && mdp.is_decoupled() && policy.active_radius() == 0;
    let mu = mdp.start_state_dist_if_small();

    let mut rows = Vec::with_capacity(cfg.iterations);
    let mut params = Vec::new();
    for t in 0..cfg.iterations {
        if cfg.record_params {
            params.push((0..mdp.num_agents()).map(|k| policy.params(k).to_vec()).collect());
        }
        let sol = match &oracle {
            Some(o) => Some(o.model.solve(&policy.to_table(mdp))?),
            None => None,
        };
        let (v_mu, v_mu_stderr) = match (&sol, &mu) {
            (Some(sol), Some(mu)) => (sol.value_of(mu), 0.0),
            _ => mc_value(mdp, policy, cfg.seed, t as u64, cfg.eval_episodes.max(2)),
        };
        let gap = oracle.as_ref().map(|o| o.v_star - v_mu);

        let steps: Vec<AgentStep> = if centralized {
            centralized_step(mdp, policy, cfg, sol.as_ref().expect("oracle checked"), oracle.as_ref().expect("oracle checked"))
        } else {
            match cfg.mode {
                Mode::Exact if factorized => factorized_exact_steps(mdp, policy, cfg.w_radius)?,
                Mode::Exact => {
                    let (Some(sol), Some(o)) = (&sol, &oracle) else {
                        return Err(crate::error::Error::Size {
                            what: "global state-action pairs",
                            size: mdp.index().num_pairs(),
                            cap: DEFAULT_SIZE_CAP,
                        });
                    };
                    exact_steps(mdp, policy, cfg.w_radius, sol, &o.d_star)
                }
                Mode::Sampled => {
                    let pair = match (&sol, &oracle) {
                        (Some(s), Some(o)) => Some((s, o.d_star.as_slice())),
                        _ => None,
                    };
                    sampled_steps(mdp, policy, cfg, t, agent_ids, pair)?
                }
            }
        };

        rows.push(IterationRecord {
            iter: t,
            v_mu,
            v_mu_stderr,
            gap,
            eta,
            w_norms: steps.iter().map(|s| norm(&s.w)).collect(),
            losses: steps.iter().map(|s| s.loss.unwrap_or(f64::NAN)).collect(),
            eps_stat_proxy: max_opt(steps.iter().map(|s| s.stat)),
            eps_bias_proxy: max_opt(steps.iter().map(|s| s.bias)),
        });
        for (k, step) in steps.iter().enumerate() {
            policy.apply_update(k, &step.w, scale)?;
        }
    }
    if cfg.record_params {
        params.push((0..mdp.num_agents()).map(|k| policy.params(k).to_vec()).collect());
    }
    let v_final = match (&oracle, &mu) {
        (Some(o), Some(mu)) => o.model.solve(&policy.to_table(mdp))?.value_of(mu),
        _ => mc_value(mdp, policy, cfg.seed, cfg.iterations as u64, cfg.eval_episodes.max(2)).0,
    };
    let min_gap = rows
        .iter()
        .filter_map(|r| r.gap)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))));
    Ok(RunRecord {
        rows,
        eta,
        radius: policy.active_radius(),
        v_star: oracle.as_ref().map(|o| o.v_star),
        min_gap,
        constants: cert.constants,
        loc_bound,
        optimization_term,
        warnings,
        v_final,
        final_policy: policy.checkpoint(),
        params,
    })
}

fn centralized_step(
    mdp: &FactoredMdp,
    policy: &LocalizedPolicy,
    cfg: &NpgConfig,
    sol: &ExactSolution,
    oracle: &Oracle,
) -> Vec<AgentStep> {
    let agents: Vec<usize> = (0..mdp.num_agents()).collect();
    let quad = exact_quadratic(mdp, policy, &agents, &sol.d_nu, |p| sol.advantage(p));
    let radius = (mdp.num_agents() as f64).sqrt() * cfg.w_radius;
    let w = solve_exact(&quad, radius);
    let loss = quad.loss(&w);
    let bias = exact_quadratic(mdp, policy, &agents, &oracle.d_star, |p| sol.advantage(p)).loss(&w);
    let mut out = Vec::with_capacity(agents.len());
    let mut offset = 0;
    for &k in &agents {
        let n = policy.active_len(k);
        out.push(AgentStep {
            w: w[offset..offset + n].to_vec(),
            loss: Some(loss),
            stat: Some(0.0),
            bias: Some(bias),
        });
        offset += n;
    }
    out
}

impl FactoredMdp {
    fn start_state_dist_if_small(&self) -> Option<Vec<f64>> {
        fits_oracle(self).then(|| self.start_state_dist())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    /// False when the environment couples agents or the policy is not ring-0.
    pub applicable: bool,
    pub max_divergence: f64,
    pub iterations: usize,
}

/// Runs decentralized NPG at radius 0 and one single-agent run per agent on
/// its own restricted MDP with matched step size and random streams, then
/// compares the parameter trajectories.
pub fn independence_check(mdp: &FactoredMdp, policy: &LocalizedPolicy, cfg: &NpgConfig) -> Result<IndependenceReport> {
    let mut joint_cfg = cfg.clone();
    joint_cfg.radius = 0;
    joint_cfg.record_params = true;
    let mut joint_policy = policy.clone();
    joint_policy.truncate(0);
    let (eta, _) = resolve_eta(mdp, &joint_policy, &joint_cfg);
    joint_cfg.eta = Some(eta);
    let joint = decentralized_npg(mdp, &mut joint_policy, &joint_cfg)?;

    let mut worst = 0.0f64;
    for k in 0..mdp.num_agents() {
        let sub = mdp.restrict_agent(k)?;
        let mut single = policy.ring0_policy(k)?;
        let single_run = decentralized_npg_with_ids(&sub, &mut single, &joint_cfg, &[k as u64])?;
        for (jt, st) in joint.params.iter().zip(&single_run.params) {
            let n = st[0].len();
            let d = jt[k][..n]
                .iter()
                .zip(&st[0])
                .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs().max(f64::MIN_POSITIVE) })
                .fold(0.0, f64::max);
            worst = worst.max(d);
        }
    }
    let ring0_only = policy.alphas()[1..].iter().all(|a| *a == 0.0) || policy.active_radius() == 0;
    Ok(IndependenceReport {
        applicable: mdp.is_decoupled() && ring0_only,
        max_divergence: worst,
        iterations: cfg.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasGapRow {
    pub r: usize,
    pub eps_bias_r: f64,
    pub eps_bias: f64,
    pub gap: f64,
    /// `c psi^{r+1} + c' phi^{r+1}` when the constants exist.
    pub decay_term: Option<f64>,
    pub w: f64,
    pub b: f64,
    pub omega_r: f64,
    pub e_r: Option<f64>,
}

/// Localized vs full bias of the exact regression at the given policy, one
/// row per radius.
pub fn bias_gap(mdp: &FactoredMdp, policy: &LocalizedPolicy, w_radius: f64, radii: &[usize]) -> Result<Vec<BiasGapRow>> {
    use crate::estimation::{localized_values_exact, Boundary};
    let oracle = Oracle::new(mdp)?;
    let gamma = mdp.gamma();
    let idx = mdp.index();
    let na = idx.num_actions();
    let states: Vec<Vec<usize>> = (0..idx.num_states()).map(|i| idx.states.decode(i)).collect();
    let actions: Vec<Vec<usize>> = (0..na).map(|i| idx.actions.decode(i)).collect();
    radii
        .iter()
        .map(|&r| {
            let mut local = policy.clone();
            local.truncate(r);
            let full = local.widened();
            let sol = oracle.model.solve(&local.to_table(mdp))?;
            let lv = localized_values_exact(mdp, &sol, r, &Boundary::Visitation)?;
            let mut eps_r = 0.0f64;
            let mut eps = 0.0f64;
            for k in 0..mdp.num_agents() {
                let target = |p: usize| lv.advantage(k, &states[p / na], &actions[p % na]);
                let fit = exact_quadratic(mdp, &local, &[k], &sol.d_nu, target);
                let w = solve_exact(&fit, w_radius);
                eps_r = eps_r.max(exact_quadratic(mdp, &local, &[k], &oracle.d_star, target).loss(&w));

                let fit_full = agent_quadratic(mdp, &full, &sol, k, &sol.d_nu);
                let w_full = solve_exact(&fit_full, w_radius);
                eps = eps.max(agent_quadratic(mdp, &full, &sol, k, &oracle.d_star).loss(&w_full));
            }
            let cert = certificate(mdp, Some(&local), CertifyOptions::default())?;
            let b = full.grad_norm_bound();
            let omega_r = policy.omega(r);
            let decay_term = cert.constants.map(|c| {
                let e = (r + 1) as i32;
                c.c * c.psi.powi(e) + c.c_prime * c.phi.powi(e)
            });
            let lead = 4.0 / (1.0 - gamma) + 2.0 * w_radius * b;
            Ok(BiasGapRow {
                r,
                eps_bias_r: eps_r,
                eps_bias: eps,
                gap: eps_r - eps,
                decay_term,
                w: w_radius,
                b,
                omega_r,
                e_r: decay_term.map(|d| lead * w_radius * omega_r + lead * d),
            })
        })
        .collect()
}

/// `max_k sup_w (w' Sigma_{d*,k} w) / (w' Sigma_{nu,k} w)` at the given policy.
pub fn relative_condition_number(mdp: &FactoredMdp, policy: &LocalizedPolicy) -> Result<f64> {
    let oracle = Oracle::new(mdp)?;
    let sol = oracle.model.solve(&policy.to_table(mdp))?;
    let mut worst = 0.0f64;
    for k in 0..mdp.num_agents() {
        let star = agent_quadratic(mdp, policy, &sol, k, &oracle.d_star);
        let nu = agent_quadratic(mdp, policy, &sol, k, &sol.d_nu);
        worst = worst.max(crate::optim::relative_condition(&star.sigma, &nu.sigma));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{make_influence_env, InfluenceNetParams};
    use crate::network::AgentGraph;
    use crate::policy::PolicyInit;

    #[test]
    fn learning_rate_examples() {
        let eta = learning_rate(1.0, 1.0, 8, 1, 2);
        assert!((eta - (2.0 * 2f64.ln() / 8.0).sqrt()).abs() < 1e-15);
        assert!((eta - 0.4163).abs() < 1e-4);
        assert!((learning_rate(1.0, 1.0, 32, 1, 2) - eta / 2.0).abs() < 1e-15);
        assert!((learning_rate(1.0, 1.0, 8, 4, 2) - eta / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_reward_leaves_parameters() {
        let p = InfluenceNetParams {
            rewards: vec![[0.0; 4]],
            ..Default::default()
        };
        let m = make_influence_env(AgentGraph::path(3).unwrap(), &p, 0.5).unwrap();
        let mut pol = LocalizedPolicy::for_mdp(&m, &[1.0, 0.5, 0.25], 1.0, PolicyInit::Uniform).unwrap();
        let before = pol.clone();
        let cfg = NpgConfig {
            radius: 2,
            iterations: 1,
            ..Default::default()
        };
        let rec = decentralized_npg(&m, &mut pol, &cfg).unwrap();
        assert_eq!(pol, before);
        assert_eq!(rec.rows.len(), 1);
    }

    #[test]
    fn zero_iterations() {
        let m = make_influence_env(AgentGraph::path(2).unwrap(), &InfluenceNetParams::default(), 0.5).unwrap();
        let mut pol = LocalizedPolicy::for_mdp(&m, &[1.0, 0.5], 1.0, PolicyInit::Uniform).unwrap();
        let cfg = NpgConfig {
            iterations: 0,
            ..Default::default()
        };
        let rec = centralized_npg(&m, &mut pol, &cfg).unwrap();
        assert!(rec.rows.is_empty());
        assert_eq!(rec.min_gap, None);
    }
}
