//! Localized value quantities and the two-phase episode sampler.

mod audit;
mod localized;
mod rng;
mod sampler;

pub use audit::{audit_sampler, AuditReport, AuditSettings, PairZ};
pub use localized::{localized_values_exact, Boundary, LocalizedValues};
pub use rng::{derive_seed, stream};
pub use sampler::{
    draw_categorical, run_episode, sample_advantage, sample_batch, sample_visitation,
    AdvantageEstimate, Episode, EpisodeStreams, ProductPolicy, SamplerOptions, TablePolicy,
    VisitationSample,
};
