//! Online federated learning over a drifting stream of per-round datasets.
//!
//! A round-level base learner (FedAvg or FedOMD) is run as many randomly
//! scheduled instances of dyadic lengths. Two drift tests compare played
//! losses against optimistic estimates and trigger restarts. The `regret`
//! module measures dynamic regret against per-round comparators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fed;
pub mod loss;
pub mod master;
pub mod multiscale;
pub mod regret;
pub mod rng;

pub use error::{Error, Result};
