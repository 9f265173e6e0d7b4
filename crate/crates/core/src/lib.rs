//! Decentralized natural policy gradient for networked multi-agent MDPs.
//!
//! Every agent runs a localized softmax policy that reads only the states of
//! agents within a communication radius, fits its own advantage by projected
//! stochastic gradient descent and updates its own parameter block. Exact
//! oracles for desk-scale instances (values, visitation measures, optimal
//! policy, Dobrushin matrices) sit alongside so each estimator and bound can
//! be checked numerically.

pub mod cli;
pub mod decay;
pub mod error;
pub mod estimation;
pub mod mdp;
pub mod network;
pub mod npg;
pub mod optim;
pub mod policy;

pub use error::{Error, Result};
