#![allow(dead_code)]

use std::io::Write;

use locnpg::mdp::{make_influence_env, FactoredMdp, InfluenceNetParams};
use locnpg::network::AgentGraph;
use locnpg::policy::{LocalizedPolicy, PolicyInit};

pub const GAMMA: f64 = 0.5;
/// Ring weights of the training fixture: a strong local ring, weak outer rings.
pub const TRAIN_ALPHAS: [f64; 3] = [5.0, 0.005, 0.005];
pub const TRAIN_W: f64 = 0.1;

/// K-agent path influence net with lambda 0.6, beta ln 2, base 0.3.
pub fn influence(k: usize, lambda: f64) -> FactoredMdp {
    let p = InfluenceNetParams {
        lambda,
        ..Default::default()
    };
    make_influence_env(AgentGraph::path(k).unwrap(), &p, GAMMA).unwrap()
}

pub fn fixture3() -> FactoredMdp {
    influence(3, 0.6)
}

pub fn fixture2() -> FactoredMdp {
    influence(2, 0.6)
}

pub fn policy(mdp: &FactoredMdp, alphas: &[f64], init: PolicyInit) -> LocalizedPolicy {
    LocalizedPolicy::for_mdp(mdp, alphas, 1.0, init).unwrap()
}

pub fn random_init(seed: u64) -> PolicyInit {
    PolicyInit::Random { seed, scale: 1.0 }
}

/// Prints a criterion line on the real stdout, bypassing the harness capture.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {id:>2} {verdict} {name}: {detail}\n");
    let out = std::io::stdout();
    let mut lock = out.lock();
    let _ = lock.write_all(line.as_bytes());
    let _ = lock.flush();
}
