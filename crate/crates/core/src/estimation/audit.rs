//! Sampler audit against the exact oracle: visitation TV, per-pair advantage
//! z-scores and mean episode length.

use serde::Serialize;

use super::sampler::{sample_batch, Episode, ProductPolicy, SamplerOptions};
use crate::decay::tv;
use crate::error::Result;
use crate::mdp::{ExactModel, FactoredMdp, PolicyTable};

const CHUNK: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairZ {
    pub pair: usize,
    pub agent: usize,
    pub n: u64,
    pub mean: f64,
    pub exact: f64,
    pub stderr: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub episodes: usize,
    pub advantage_episodes: usize,
    pub tv: f64,
    pub mean_length: f64,
    pub length_stderr: f64,
    pub expected_length: f64,
    pub length_z: f64,
    pub max_abs_z: f64,
    pub z_scores: Vec<PairZ>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub seed: u64,
    pub episodes: usize,
    pub advantage_episodes: usize,
    pub max_tv: f64,
    pub max_z: f64,
    pub sampler: SamplerOptions,
}

/// Runs the audit; `on_episode` sees every visitation-phase episode in id order.
pub fn audit_sampler<P: ProductPolicy>(
    mdp: &FactoredMdp,
    policy: &P,
    table: &PolicyTable,
    settings: &AuditSettings,
    mut on_episode: impl FnMut(&Episode),
) -> Result<AuditReport> {
    let model = ExactModel::new(mdp)?;
    let sol = model.solve(table)?;
    let idx = mdp.index();
    let na = idx.num_actions();
    let ids: Vec<u64> = (0..mdp.num_agents() as u64).collect();

    let mut counts = vec![0u64; idx.num_pairs()];
    let mut len_sum = 0.0;
    let mut len_sq = 0.0;
    let mut done = 0;
    while done < settings.episodes {
        let n = CHUNK.min(settings.episodes - done);
        let batch = sample_batch(mdp, policy, settings.sampler, settings.seed, 0, done as u64, n, &ids);
        for e in &batch {
            let pair = idx.states.encode(&e.sample.state) * na + idx.actions.encode(&e.sample.action);
            counts[pair] += 1;
            let l = e.length() as f64;
            len_sum += l;
            len_sq += l * l;
            on_episode(e);
        }
        done += n;
    }
    let total = settings.episodes.max(1) as f64;
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
    let tv_dist = tv(&empirical, &sol.d_nu);
    let mean_length = len_sum / total;
    let var = (len_sq / total - mean_length * mean_length).max(0.0) * total / (total - 1.0).max(1.0);
    let length_stderr = (var / total).sqrt();
    let expected_length = 2.0 / (1.0 - mdp.gamma());

    let k = mdp.num_agents();
    let mut sums = vec![vec![(0u64, 0.0f64, 0.0f64); k]; idx.num_pairs()];
    let mut done = 0;
    while done < settings.advantage_episodes {
        let n = CHUNK.min(settings.advantage_episodes - done);
        let batch = sample_batch(mdp, policy, settings.sampler, settings.seed, 1, done as u64, n, &ids);
        for e in &batch {
            let pair = idx.states.encode(&e.sample.state) * na + idx.actions.encode(&e.sample.action);
            for (j, &v) in e.estimate.values.iter().enumerate() {
                let s = &mut sums[pair][j];
                s.0 += 1;
                s.1 += v;
                s.2 += v * v;
            }
        }
        done += n;
    }
    let mut z_scores = Vec::new();
    for (pair, per_agent) in sums.iter().enumerate() {
        for (j, &(n, s1, s2)) in per_agent.iter().enumerate() {
            if n < 2 {
                continue;
            }
            let nf = n as f64;
            let mean = s1 / nf;
            let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
            let stderr = (var / nf).sqrt();
            let exact = sol.advantage_agent(j, pair);
            let diff = mean - exact;
            let z = if stderr > 0.0 {
                diff / stderr
            } else if diff.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            z_scores.push(PairZ {
                pair,
                agent: j,
                n,
                mean,
                exact,
                stderr,
                z,
            });
        }
    }
    let max_abs_z = z_scores.iter().map(|z| z.z.abs()).fold(0.0, f64::max);
    let length_z = if length_stderr > 0.0 {
        (mean_length - expected_length) / length_stderr
    } else {
        0.0
    };
    Ok(AuditReport {
        episodes: settings.episodes,
        advantage_episodes: settings.advantage_episodes,
        tv: tv_dist,
        mean_length,
        length_stderr,
        expected_length,
        length_z,
        max_abs_z,
        pass: max_abs_z <= settings.max_z && tv_dist <= settings.max_tv,
        z_scores,
    })
}
