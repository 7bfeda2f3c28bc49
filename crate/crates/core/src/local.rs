//! The reward-shaped local problem of a corridor.
//!
//! Inside the corridor the base dynamics and rewards apply. Every other state
//! is absorbing: terminal-edge states pay `(1 - gamma) * V*(s)` per step, so
//! their discounted total is exactly `V*(s)`, and all remaining states pay 0.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corridor::{Partition, Region};
use crate::error::{Error, Result};
use crate::grid::{Action, GridMdp};
use crate::mdp::FiniteMdp;
use crate::qlearn::{absorbing_value, learn, sample_row, EpisodicTask, QLearnConfig, Step};
use crate::solver::{greedy_policy, value_iteration_from, Policy, QTable, ValueTable};

/// The local MDP `M_L` for one partition.
#[derive(Clone, Debug)]
pub struct LocalMdp<'a> {
    base: &'a GridMdp,
    partition: Partition,
    vstar: &'a ValueTable,
}

pub fn build_local_mdp<'a>(base: &'a GridMdp, partition: Partition, vstar: &'a ValueTable) -> Result<LocalMdp<'a>> {
    let n = base.num_states();
    if vstar.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: vstar.len(),
        });
    }
    if partition.num_states() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: partition.num_states(),
        });
    }
    Ok(LocalMdp { base, partition, vstar })
}

impl<'a> LocalMdp<'a> {
    pub fn base(&self) -> &'a GridMdp {
        self.base
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn benchmark_values(&self) -> &'a ValueTable {
        self.vstar
    }

    /// Q-table with edge rows pinned to `V*` and zeros elsewhere.
    fn warm_start(&self) -> QTable {
        let mut q = QTable::zeros(self.num_states(), self.num_actions(), self.discount());
        for s in self.partition.edge() {
            q.row_mut(s).fill(self.vstar[s]);
        }
        q
    }
}

impl FiniteMdp for LocalMdp<'_> {
    fn num_states(&self) -> usize {
        self.base.num_states()
    }

    fn num_actions(&self) -> usize {
        self.base.num_actions()
    }

    fn discount(&self) -> f64 {
        self.base.gamma()
    }

    fn reward(&self, state: usize, action: Action) -> f64 {
        match self.partition.region(state) {
            Region::Edge => (1.0 - self.base.gamma()) * self.vstar[state],
            Region::Inside => self.base.reward(state, action),
            Region::Outside => 0.0,
        }
    }

    fn for_each_successor<F: FnMut(usize, f64)>(&self, state: usize, action: Action, mut f: F) {
        if self.partition.is_inside(state) {
            self.base.for_each_successor(state, action, f);
        } else {
            f(state, 1.0);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMethod {
    Exact,
    QLearning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalDiagnostics {
    pub method: LocalMethod,
    /// Bellman residual of the returned table on `M_L`.
    pub residual: f64,
    pub converged: bool,
    /// Q-learning episodes, zero for the exact solver.
    pub episodes: usize,
}

/// Solution of a local problem: `Q_L`, `V_L*` and the greedy `pi_L`.
#[derive(Clone, Debug)]
pub struct LocalSolution {
    pub q: QTable,
    pub values: ValueTable,
    pub policy: Policy,
    pub diagnostics: LocalDiagnostics,
}

/// Value iteration on `M_L`, warm-started with the edge rows at `V*`.
pub fn solve_local_exact(local: &LocalMdp<'_>, tol: f64) -> Result<LocalSolution> {
    let (q, values) = value_iteration_from(local, local.warm_start(), tol)?;
    let policy = greedy_policy(&q);
    let residual = q.bellman_residual(local);
    Ok(LocalSolution {
        q,
        values,
        policy,
        diagnostics: LocalDiagnostics {
            method: LocalMethod::Exact,
            residual,
            converged: true,
            episodes: 0,
        },
    })
}

/// Episodic view of `M_L`: episodes start uniformly inside the corridor and
/// end on leaving it, bootstrapping from `V*` on the edge and 0 outside.
struct LocalTask<'l, 'a> {
    local: &'l LocalMdp<'a>,
    starts: Vec<usize>,
}

impl EpisodicTask for LocalTask<'_, '_> {
    fn num_states(&self) -> usize {
        self.local.num_states()
    }

    fn num_actions(&self) -> usize {
        self.local.num_actions()
    }

    fn gamma(&self) -> f64 {
        self.local.discount()
    }

    fn sample_start(&self, rng: &mut ChaCha8Rng) -> usize {
        self.starts[rng.random_range(0..self.starts.len())]
    }

    fn step(&self, state: usize, action: Action, rng: &mut ChaCha8Rng) -> Step {
        let base = self.local.base;
        let next = sample_row(base.row(state, action), rng);
        let terminal_value = match self.local.partition.region(next) {
            Region::Edge => Some(self.local.vstar[next]),
            Region::Outside => Some(0.0),
            Region::Inside if base.is_absorbing(next) => Some(absorbing_value(base, next)),
            Region::Inside => None,
        };
        Step {
            reward: base.reward(state, action),
            next,
            terminal_value,
        }
    }
}

/// Tabular Q-learning on the local problem.
pub fn solve_local_qlearning(local: &LocalMdp<'_>, cfg: &QLearnConfig) -> Result<LocalSolution> {
    let base = local.base;
    let starts: Vec<usize> = local
        .partition
        .inside()
        .into_iter()
        .filter(|&s| !base.is_absorbing(s))
        .collect();
    let mut q = local.warm_start();
    let (converged, episodes) = if starts.is_empty() {
        cfg.validate()?;
        (true, 0)
    } else {
        let run = learn(&LocalTask { local, starts }, q, cfg)?;
        q = run.q;
        (run.converged, run.episodes)
    };
    for s in local.partition.inside() {
        if base.is_absorbing(s) {
            let v = absorbing_value(base, s);
            q.row_mut(s).fill(v);
        }
    }
    let values = q.state_values();
    let policy = greedy_policy(&q);
    let residual = q.bellman_residual(local);
    Ok(LocalSolution {
        q,
        values,
        policy,
        diagnostics: LocalDiagnostics {
            method: LocalMethod::QLearning,
            residual,
            converged,
            episodes,
        },
    })
}
