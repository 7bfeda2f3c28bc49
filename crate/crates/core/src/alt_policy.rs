//! The switching policy built from a local policy, and rollouts under it.
//!
//! An augmented state carries a one-way bit `delta` that flips the first time
//! the walk steps outside `S_in`. While it is 0 the local policy acts, after
//! that the benchmark policy does.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corridor::{Partition, Region};
use crate::grid::{Action, GridMdp, GridShape};
use crate::mdp::FiniteMdp;
use crate::qlearn::sample_row;
use crate::solver::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentedState {
    pub state: usize,
    pub delta: bool,
}

impl AugmentedState {
    /// Starting bit: 0 inside the corridor, 1 anywhere else.
    pub fn initial(state: usize, part: &Partition) -> Self {
        Self {
            state,
            delta: !part.is_inside(state),
        }
    }
}

/// Next value of the switching bit after moving to `next`.
pub fn step_delta(current: AugmentedState, next: usize, part: &Partition) -> bool {
    current.delta || !part.is_inside(next)
}

/// `pi_L` while the bit is 0, `pi*` after it flips.
pub fn alternative_action(lambda: AugmentedState, pi_l: &Policy, pi_star: &Policy) -> Action {
    if lambda.delta {
        pi_star[lambda.state]
    } else {
        pi_l[lambda.state]
    }
}

/// How the corridor-following part of a rollout ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// First exit from `S_in` landed on the terminal edge.
    ReachedEdge,
    /// First exit from `S_in` landed outside the corridor.
    ExitedCorridor,
    /// Still inside `S_in` at the step cap.
    StepCap,
    /// Trapped in an absorbing state inside `S_in`.
    Absorbed,
}

impl Termination {
    pub fn is_success(self) -> bool {
        self == Termination::ReachedEdge
    }
}

/// One sampled episode of the switching policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<AugmentedState>,
    pub actions: Vec<Action>,
    /// Discounted return of the base MDP, including the closed-form tail of
    /// an absorbing final state.
    pub discounted_return: f64,
    pub termination: Termination,
    /// Index of the first state with `delta = 1`, if any.
    pub switch_index: Option<usize>,
}

impl Trajectory {
    pub fn success(&self) -> bool {
        self.termination.is_success()
    }
}

/// Default step cap, `10 |S|`.
pub fn default_step_cap(mdp: &GridMdp) -> usize {
    10 * mdp.shape().num_states()
}

/// Samples one trajectory from `s0`, reproducible from `seed`.
///
/// The walk continues under `pi*` after the switch until it is absorbed or
/// `step_cap` transitions have been taken; the outcome classification only
/// depends on the first exit from `S_in`.
pub fn rollout(
    mdp: &GridMdp,
    part: &Partition,
    pi_l: &Policy,
    pi_star: &Policy,
    s0: usize,
    seed: u64,
    step_cap: usize,
) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = mdp.gamma();
    let mut lambda = AugmentedState::initial(s0, part);
    let mut states = vec![lambda];
    let mut actions = Vec::new();
    let mut discounted_return = 0.0;
    let mut discount = 1.0;
    let mut outcome = None;
    let mut switch_index = lambda.delta.then_some(0);
    if lambda.delta {
        outcome = Some(exit_outcome(part, s0));
    }
    for t in 0..step_cap {
        let s = lambda.state;
        if mdp.is_absorbing(s) {
            discounted_return += discount * mdp.reward(s, Action::new(0)) / (1.0 - gamma);
            if outcome.is_none() {
                outcome = Some(Termination::Absorbed);
            }
            break;
        }
        let action = alternative_action(lambda, pi_l, pi_star);
        discounted_return += discount * mdp.reward(s, action);
        discount *= gamma;
        let next = sample_row(mdp.row(s, action), &mut rng);
        let delta = step_delta(lambda, next, part);
        if delta && !lambda.delta {
            switch_index = Some(t + 1);
            outcome = Some(exit_outcome(part, next));
        }
        lambda = AugmentedState { state: next, delta };
        states.push(lambda);
        actions.push(action);
    }
    Trajectory {
        states,
        actions,
        discounted_return,
        termination: outcome.unwrap_or(Termination::StepCap),
        switch_index,
    }
}

fn exit_outcome(part: &Partition, state: usize) -> Termination {
    match part.region(state) {
        Region::Edge => Termination::ReachedEdge,
        _ => Termination::ExitedCorridor,
    }
}

/// Symbols of the cell-to-cell moves in a corridor descriptor.
///
/// Symbol `b_i` says where cell `c_{i-1}` lies relative to `c_i`: 1 below
/// (the walk moved north), 2 right (moved west), 3 above (moved south),
/// 4 left (moved east). 0 marks an unused slot. The numbering past 2 is a
/// convention chosen here.
pub mod symbol {
    pub const NONE: u8 = 0;
    pub const NORTH: u8 = 1;
    pub const WEST: u8 = 2;
    pub const SOUTH: u8 = 3;
    pub const EAST: u8 = 4;
}

/// Corridor descriptor `b(rho)` in `{0..4}^b` of a 2-D state sequence.
///
/// Cells form the lattice of centers `s0 + spacing * m`. Each state belongs to
/// the lattice cell with the nearest center per axis (ties toward the lower
/// center), which turns the overlapping cells into a partition. A symbol is
/// emitted every time the walk crosses into a new cell, up to `b` symbols.
pub fn classify_trajectory(shape: &GridShape, states: &[usize], spacing: usize, b: usize) -> Vec<u8> {
    let mut out = vec![symbol::NONE; b];
    let Some(&first) = states.first() else {
        return out;
    };
    let origin = shape.state_of(first);
    let cell_of = |s: usize| -> Vec<i64> {
        let here = shape.state_of(s);
        here.coords()
            .iter()
            .zip(origin.coords())
            .map(|(&c, &o)| nearest_lattice_index(c - o, spacing as i64))
            .collect()
    };
    let mut current = cell_of(first);
    let mut filled = 0;
    for &s in &states[1..] {
        if filled == b {
            break;
        }
        let cell = cell_of(s);
        if cell == current {
            continue;
        }
        let sym = match (cell[0] - current[0], cell.get(1).map_or(0, |x| x - current[1])) {
            (-1, 0) => symbol::NORTH,
            (1, 0) => symbol::SOUTH,
            (0, -1) => symbol::WEST,
            (0, 1) => symbol::EAST,
            _ => unreachable!("single grid steps cross one cell boundary"),
        };
        out[filled] = sym;
        filled += 1;
        current = cell;
    }
    out
}

fn nearest_lattice_index(offset: i64, spacing: i64) -> i64 {
    // Round offset / spacing to the nearest integer, halves toward -inf.
    (2 * offset + spacing - 1).div_euclid(2 * spacing)
}
