//! Diverse near-optimal alternative policies on grid MDPs.
//!
//! Given a stochastic grid MDP and a start state, [`search::corridor_search`]
//! enumerates chains of cells ("corridors") from the start, solves a
//! reward-shaped local problem for each, and keeps those whose local value is
//! within a factor `epsilon` of the benchmark optimum. Each kept corridor
//! comes with a local policy, a certified lower bound on the value of the
//! switching policy built from it, and a lower bound on the probability of
//! traversing the corridor.

pub mod alt_policy;
pub mod corridor;
pub mod error;
pub mod export;
pub mod grid;
pub mod guarantees;
pub mod local;
pub mod maps;
pub mod mdp;
pub mod qlearn;
pub mod search;
pub mod sim;
pub mod solver;
pub mod suites;

pub use error::{Error, MapError, Result};
pub use grid::{Action, GridConfig, GridMdp, GridState};
pub use mdp::FiniteMdp;
