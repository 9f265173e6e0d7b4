//! Two-phase episode sampler.
//!
//! Phase 1 draws `(s, a)` from `nu` and keeps moving with probability `gamma`
//! per step, accepting the current pair otherwise; the accepted pair is an
//! exact draw from the discounted visitation `d^pi_nu`. Phase 2 flips a fair
//! coin between a Q-rollout (keep `a(h)`) and a V-rollout (resample `a(h)` from
//! pi), then accumulates every agent's reward along one shared trajectory,
//! again continuing with probability `gamma`. `A_hat_k = 2 (Q_hat_k - V_hat_k)`
//! is unbiased for `A_k(s(h), a(h))`.
//!
//! Random draws are split so that trajectories of decoupled agents can be
//! replayed in isolation: continuation and branch coins come from a global
//! stream, while agent `k`'s start draw, transitions and actions come from its
//! own stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::stream;
use crate::mdp::{FactoredMdp, PolicyTable};
use crate::policy::LocalizedPolicy;

const GLOBAL_TAG: u64 = 0x676c_6f62;
const AGENT_TAG: u64 = 0x6167_6e74;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerOptions {
    /// Literal variant: stop (rather than continue) with probability `gamma`
    /// and skip the step-`h` reward in phase 2. Biased; kept for comparison.
    pub strict_paper_sampler: bool,
}

impl SamplerOptions {
    fn continue_prob(&self, gamma: f64) -> f64 {
        if self.strict_paper_sampler {
            1.0 - gamma
        } else {
            gamma
        }
    }
}

/// Product-form policy the sampler can draw from.
pub trait ProductPolicy: Sync {
    fn agent_probs(&self, k: usize, s: &[usize]) -> Vec<f64>;
}

impl ProductPolicy for LocalizedPolicy {
    fn agent_probs(&self, k: usize, s: &[usize]) -> Vec<f64> {
        self.action_probs(k, s)
    }
}

/// Tabular policy bound to the MDP that indexes its states.
pub struct TablePolicy<'a> {
    pub mdp: &'a FactoredMdp,
    pub table: &'a PolicyTable,
}

impl ProductPolicy for TablePolicy<'_> {
    fn agent_probs(&self, k: usize, s: &[usize]) -> Vec<f64> {
        let na = self.mdp.action_sizes()[k];
        let si = self.mdp.index().states.encode(s);
        self.table.probs[k][si * na..(si + 1) * na].to_vec()
    }
}

/// Inverse-CDF draw; the last index absorbs rounding.
pub fn draw_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Per-episode streams. `agent_ids[i]` is the stream key of local agent `i`,
/// which lets a single-agent run reuse the stream of agent `k` in a larger run.
pub struct EpisodeStreams {
    pub global: ChaCha8Rng,
    pub agents: Vec<ChaCha8Rng>,
}

impl EpisodeStreams {
    pub fn new(master: u64, iteration: u64, episode: u64, agent_ids: &[u64]) -> Self {
        Self {
            global: stream(master, &[GLOBAL_TAG, iteration, episode]),
            agents: agent_ids
                .iter()
                .map(|&k| stream(master, &[AGENT_TAG, iteration, k, episode]))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitationSample {
    pub state: Vec<usize>,
    pub action: Vec<usize>,
    pub accept_step: usize,
}

impl VisitationSample {
    /// `s_{members}` in member order.
    pub fn local_state(&self, members: &[usize]) -> Vec<usize> {
        members.iter().map(|&j| self.state[j]).collect()
    }

    pub fn local_action(&self, members: &[usize]) -> Vec<usize> {
        members.iter().map(|&j| self.action[j]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageEstimate {
    pub sample_q: bool,
    /// `A_hat_k` per agent.
    pub values: Vec<f64>,
    /// Rewards collected in phase 2.
    pub rollout_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: u64,
    pub sample: VisitationSample,
    pub estimate: AdvantageEstimate,
}

impl Episode {
    /// Pairs visited in phase 1 plus rewards collected in phase 2.
    pub fn length(&self) -> usize {
        self.sample.accept_step + 1 + self.estimate.rollout_len
    }
}

fn step<P: ProductPolicy + ?Sized>(
    mdp: &FactoredMdp,
    policy: &P,
    streams: &mut EpisodeStreams,
    s: &mut [usize],
    a: &mut [usize],
) {
    let k = mdp.num_agents();
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut row = vec![0.0; mdp.state_sizes()[j]];
            mdp.local_dist(j, s, a, &mut row);
            row
        })
        .collect();
    for j in 0..k {
        s[j] = draw_categorical(&mut streams.agents[j], &rows[j]);
    }
    resample_actions(policy, streams, s, a);
}

fn resample_actions<P: ProductPolicy + ?Sized>(policy: &P, streams: &mut EpisodeStreams, s: &[usize], a: &mut [usize]) {
    for (j, aj) in a.iter_mut().enumerate() {
        let probs = policy.agent_probs(j, s);
        *aj = draw_categorical(&mut streams.agents[j], &probs);
    }
}

/// Phase 1: an exact draw from `d^pi_nu` with `nu = mdp.start_pairs()`.
pub fn sample_visitation<P: ProductPolicy + ?Sized>(
    mdp: &FactoredMdp,
    policy: &P,
    opts: SamplerOptions,
    streams: &mut EpisodeStreams,
) -> VisitationSample {
    let k = mdp.num_agents();
    let mut s = vec![0; k];
    let mut a = vec![0; k];
    for j in 0..k {
        let pair = draw_categorical(&mut streams.agents[j], &mdp.start_pairs()[j]);
        s[j] = pair / mdp.action_sizes()[j];
        a[j] = pair % mdp.action_sizes()[j];
    }
    let cont = opts.continue_prob(mdp.gamma());
    let mut h = 0;
    while streams.global.random::<f64>() < cont {
        step(mdp, policy, streams, &mut s, &mut a);
        h += 1;
    }
    VisitationSample {
        state: s,
        action: a,
        accept_step: h,
    }
}

/// Phase 2 from an accepted sample.
pub fn sample_advantage<P: ProductPolicy + ?Sized>(
    mdp: &FactoredMdp,
    policy: &P,
    opts: SamplerOptions,
    vs: &VisitationSample,
    streams: &mut EpisodeStreams,
) -> AdvantageEstimate {
    let k = mdp.num_agents();
    let sample_q = streams.global.random::<f64>() < 0.5;
    let mut s = vs.state.clone();
    let mut a = vs.action.clone();
    if !sample_q {
        resample_actions(policy, streams, &s, &mut a);
    }
    let mut total = vec![0.0; k];
    let mut rollout_len = 0;
    if !opts.strict_paper_sampler {
        for j in 0..k {
            total[j] += mdp.reward(j, s[j], a[j]);
        }
        rollout_len += 1;
    }
    let cont = opts.continue_prob(mdp.gamma());
    while streams.global.random::<f64>() < cont {
        step(mdp, policy, streams, &mut s, &mut a);
        for j in 0..k {
            total[j] += mdp.reward(j, s[j], a[j]);
        }
        rollout_len += 1;
    }
    let sign = if sample_q { 2.0 } else { -2.0 };
    AdvantageEstimate {
        sample_q,
        values: total.into_iter().map(|r| sign * r).collect(),
        rollout_len,
    }
}

pub fn run_episode<P: ProductPolicy + ?Sized>(
    mdp: &FactoredMdp,
    policy: &P,
    opts: SamplerOptions,
    id: u64,
    streams: &mut EpisodeStreams,
) -> Episode {
    let sample = sample_visitation(mdp, policy, opts, streams);
    let estimate = sample_advantage(mdp, policy, opts, &sample, streams);
    Episode { id, sample, estimate }
}

/// Episodes `first..first + n` of one iteration, generated in parallel and
/// returned in id order.
#[allow(clippy::too_many_arguments)]
pub fn sample_batch<P: ProductPolicy + ?Sized>(
    mdp: &FactoredMdp,
    policy: &P,
    opts: SamplerOptions,
    master: u64,
    iteration: u64,
    first: u64,
    n: usize,
    agent_ids: &[u64],
) -> Vec<Episode> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let id = first + i;
            let mut streams = EpisodeStreams::new(master, iteration, id, agent_ids);
            run_episode(mdp, policy, opts, id, &mut streams)
        })
        .collect()
}
