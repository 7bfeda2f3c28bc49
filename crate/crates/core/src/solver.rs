//! Exact dynamic-programming solvers: value iteration, policy evaluation and
//! greedy extraction. These are the oracles every learned table is checked
//! against.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Action, GridMdp};
use crate::mdp::FiniteMdp;

/// Iteration cap shared by the fixed-point solvers.
pub const MAX_SWEEPS: usize = 1_000_000;

/// Default convergence tolerance for the benchmark oracle.
pub const ORACLE_TOL: f64 = 1e-10;

/// Dense action values indexed by `(state, action)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize, gamma: f64) -> Self {
        Self {
            num_states,
            num_actions,
            gamma,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn get(&self, state: usize, action: Action) -> f64 {
        self.values[state * self.num_actions + action.index()]
    }

    pub fn set(&mut self, state: usize, action: Action, value: f64) {
        self.values[state * self.num_actions + action.index()] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn max(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action with ties broken toward the lowest id.
    pub fn argmax(&self, state: usize) -> Action {
        let row = self.row(state);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q > row[best] {
                best = a;
            }
        }
        Action::new(best)
    }

    pub fn state_values(&self) -> ValueTable {
        ValueTable((0..self.num_states).map(|s| self.max(s)).collect())
    }

    /// Largest absolute entry difference over the given states.
    pub fn max_gap_on(&self, other: &QTable, states: impl IntoIterator<Item = usize>) -> f64 {
        states
            .into_iter()
            .flat_map(|s| self.row(s).iter().zip(other.row(s)))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max |Q - T Q|` under the Bellman optimality operator of `mdp`.
    pub fn bellman_residual<M: FiniteMdp>(&self, mdp: &M) -> f64 {
        let v = self.state_values();
        let gamma = mdp.discount();
        let mut worst: f64 = 0.0;
        for s in 0..self.num_states {
            for a in mdp.actions() {
                let backup = mdp.reward(s, a) + gamma * mdp.expectation(s, a, &v.0);
                worst = worst.max((self.get(s, a) - backup).abs());
            }
        }
        worst
    }
}

/// Dense per-state values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ValueTable {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// A deterministic stationary policy, total over states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(pub Vec<Action>);

impl Policy {
    pub fn constant(num_states: usize, action: Action) -> Self {
        Policy(vec![action; num_states])
    }

    pub fn action(&self, state: usize) -> Action {
        self.0[state]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Index<usize> for Policy {
    type Output = Action;

    fn index(&self, s: usize) -> &Action {
        &self.0[s]
    }
}

fn check_solver_args<M: FiniteMdp>(mdp: &M, tol: f64) -> Result<()> {
    let gamma = mdp.discount();
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("discount must lie in [0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// Value iteration from an all-zero table.
pub fn value_iteration<M: FiniteMdp>(mdp: &M, tol: f64) -> Result<(QTable, ValueTable)> {
    let init = QTable::zeros(mdp.num_states(), mdp.num_actions(), mdp.discount());
    value_iteration_from(mdp, init, tol)
}

/// Synchronous value iteration starting from `init`.
///
/// Stops once a sweep changes no entry by more than `tol`; the Bellman
/// residual of the result is then at most `gamma * tol`.
pub fn value_iteration_from<M: FiniteMdp>(mdp: &M, init: QTable, tol: f64) -> Result<(QTable, ValueTable)> {
    check_solver_args(mdp, tol)?;
    if init.num_states() != mdp.num_states() || init.num_actions() != mdp.num_actions() {
        return Err(Error::SizeMismatch {
            expected: mdp.num_states(),
            found: init.num_states(),
        });
    }
    let gamma = mdp.discount();
    let mut q = init;
    let mut v = q.state_values();
    let mut delta = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        delta = 0.0;
        for s in 0..mdp.num_states() {
            for a in mdp.actions() {
                let backup = mdp.reward(s, a) + gamma * mdp.expectation(s, a, &v.0);
                delta = delta.max((backup - q.get(s, a)).abs());
                q.set(s, a, backup);
            }
        }
        v = q.state_values();
        if delta <= tol {
            return Ok((q, v));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_SWEEPS,
        residual: delta,
    })
}

/// Fixed-point evaluation of `V^pi(s) = R(s, pi(s)) + gamma * E[V^pi(s')]`.
pub fn evaluate_policy<M: FiniteMdp>(mdp: &M, policy: &Policy, tol: f64) -> Result<ValueTable> {
    check_solver_args(mdp, tol)?;
    if policy.len() != mdp.num_states() {
        return Err(Error::SizeMismatch {
            expected: mdp.num_states(),
            found: policy.len(),
        });
    }
    let gamma = mdp.discount();
    let rewards: Vec<f64> = (0..mdp.num_states()).map(|s| mdp.reward(s, policy[s])).collect();
    let mut v = rewards.clone();
    let mut next = vec![0.0; v.len()];
    let mut delta = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        delta = 0.0;
        for s in 0..v.len() {
            next[s] = rewards[s] + gamma * mdp.expectation(s, policy[s], &v);
            delta = delta.max((next[s] - v[s]).abs());
        }
        std::mem::swap(&mut v, &mut next);
        if delta <= tol {
            return Ok(ValueTable(v));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_SWEEPS,
        residual: delta,
    })
}

/// Solves `(I - gamma P_pi) V = R_pi` by LU decomposition.
///
/// Accurate to rounding error, so checks that compare two values of the same
/// policy can use tolerances far below the iterative solvers'. Meant for
/// small state spaces (a few hundred states).
pub fn evaluate_policy_direct<M: FiniteMdp>(mdp: &M, policy: &Policy) -> Result<ValueTable> {
    check_solver_args(mdp, 1.0)?;
    let n = mdp.num_states();
    if policy.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: policy.len(),
        });
    }
    let gamma = mdp.discount();
    let mut a = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    for s in 0..n {
        b[s] = mdp.reward(s, policy[s]);
        mdp.for_each_successor(s, policy[s], |next, p| a[(s, next)] -= gamma * p);
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::InvalidArgument("policy evaluation system is singular".into()))?;
    Ok(ValueTable(x.iter().copied().collect()))
}

/// Greedy policy, lowest action id on ties.
pub fn greedy_policy(q: &QTable) -> Policy {
    Policy((0..q.num_states()).map(|s| q.argmax(s)).collect())
}

/// The benchmark optimum of a grid MDP: `Q*`, `V*` and `pi*`.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub q: QTable,
    pub values: ValueTable,
    pub policy: Policy,
}

impl Benchmark {
    pub fn solve(mdp: &GridMdp) -> Result<Self> {
        Self::solve_with_tol(mdp, ORACLE_TOL)
    }

    pub fn solve_with_tol(mdp: &GridMdp, tol: f64) -> Result<Self> {
        let (q, values) = value_iteration(mdp, tol)?;
        let policy = greedy_policy(&q);
        Ok(Self { q, values, policy })
    }
}
