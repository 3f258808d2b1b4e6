//! Offline multi-agent reinforcement learning on small cooperative Markov
//! games: in-sample sequential policy optimization in exact and practical
//! (dataset-driven) form, with benchmark games, dataset tooling and
//! equilibrium diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod envs;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod game;
pub mod practical;

pub use error::{Error, Result};
pub use game::{FactoredPolicy, GlobalQTable, JointAction, JointActionSpace, LocalQTable, TabularGame};
