//! Versioned JSON experiment configuration.

use serde::{Deserialize, Serialize};

use crate::decay::CertifyOptions;
use crate::error::{Error, Result};
use crate::mdp::{make_influence_env, FactoredMdp, InfluenceNetParams, Kernel, ScopedKernel};
use crate::network::GraphSpec;
use crate::npg::NpgConfig;
use crate::policy::{LocalizedPolicy, PolicyInit};

pub const CONFIG_VERSION: u32 = 1;

fn version() -> u32 {
    CONFIG_VERSION
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EnvSpec {
    Influence {
        #[serde(flatten)]
        params: InfluenceNetParams,
    },
    /// Explicit local kernels; see [`ScopedKernel`] for the row layout.
    Tabular {
        state_sizes: Vec<usize>,
        action_sizes: Vec<usize>,
        kernels: Vec<TabularKernel>,
        rewards: Vec<Vec<f64>>,
    },
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Influence {
            params: InfluenceNetParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularKernel {
    pub scope: Vec<usize>,
    pub table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySpec {
    /// Ring weights `alpha_0..alpha_{r_max}`; defaults to `1, 0.01, 0.01, ...`.
    pub alphas: Option<Vec<f64>>,
    pub c_f: f64,
    pub init: PolicyInit,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self {
            alphas: None,
            c_f: 1.0,
            init: PolicyInit::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub radii: Vec<usize>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSpec {
    /// Episodes for the visitation and episode-length checks.
    pub episodes: usize,
    /// Episodes for the advantage z-scores.
    pub advantage_episodes: usize,
    pub max_tv: f64,
    pub max_z: f64,
    /// Write one CSV row per visitation episode.
    pub write_episodes: bool,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self {
            episodes: 100_000,
            advantage_episodes: 100_000,
            max_tv: 0.02,
            max_z: 4.0,
            write_episodes: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSpec {
    /// Radii to report; all radii `0..=r_max` when empty.
    pub radii: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "version")]
    pub version: u32,
    pub graph: GraphSpec,
    #[serde(default)]
    pub env: EnvSpec,
    #[serde(default = "half")]
    pub gamma: f64,
    /// Per-agent start distributions over `S_k`; uniform when absent.
    #[serde(default)]
    pub start_states: Option<Vec<Vec<f64>>>,
    /// Per-agent start distributions over `S_k x A_k`; uniform when absent.
    #[serde(default)]
    pub start_pairs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub npg: NpgConfig,
    #[serde(default)]
    pub certify: CertifyOptions,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub bias: BiasSpec,
    #[serde(default)]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build_mdp(&self) -> Result<FactoredMdp> {
        let graph = self.graph.build()?;
        let mut mdp = match &self.env {
            EnvSpec::Influence { params } => make_influence_env(graph, params, self.gamma)?,
            EnvSpec::Tabular {
                state_sizes,
                action_sizes,
                kernels,
                rewards,
            } => FactoredMdp::new(
                graph,
                state_sizes.clone(),
                action_sizes.clone(),
                Kernel::Scoped(
                    kernels
                        .iter()
                        .map(|k| ScopedKernel {
                            scope: k.scope.clone(),
                            table: k.table.clone(),
                        })
                        .collect(),
                ),
                rewards.clone(),
                self.gamma,
            )?,
        };
        if let Some(mu) = &self.start_states {
            mdp = mdp.with_start_states(mu.clone())?;
        }
        if let Some(nu) = &self.start_pairs {
            mdp = mdp.with_start_pairs(nu.clone())?;
        }
        Ok(mdp)
    }

    pub fn alphas(&self, r_max: usize) -> Vec<f64> {
        match &self.policy.alphas {
            Some(a) => a.clone(),
            None => (0..=r_max).map(|r| if r == 0 { 1.0 } else { 0.01 }).collect(),
        }
    }

    pub fn build_policy(&self, mdp: &FactoredMdp) -> Result<LocalizedPolicy> {
        let alphas = self.alphas(mdp.graph().max_diameter());
        LocalizedPolicy::for_mdp(mdp, &alphas, self.policy.c_f, self.policy.init)
    }
}
