//! The finite-MDP abstraction shared by every solver in the crate.
//!
//! The base grid, the reward-shaped local problem and the augmented
//! switching MDPs all implement [`FiniteMdp`], so one value-iteration and
//! one policy-evaluation routine serve all of them.

use crate::grid::Action;

/// A finite, discounted MDP over dense integer state ids.
pub trait FiniteMdp {
    fn num_states(&self) -> usize;

    fn num_actions(&self) -> usize;

    fn discount(&self) -> f64;

    fn reward(&self, state: usize, action: Action) -> f64;

    /// Calls `f(successor, probability)` for every successor with nonzero mass.
    fn for_each_successor<F: FnMut(usize, f64)>(&self, state: usize, action: Action, f: F);

    /// Expected value of `values` over the successor distribution.
    fn expectation(&self, state: usize, action: Action, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_successor(state, action, |next, p| acc += p * values[next]);
        acc
    }

    fn actions(&self) -> std::iter::Map<std::ops::Range<usize>, fn(usize) -> Action> {
        (0..self.num_actions()).map(Action::new as fn(usize) -> Action)
    }
}
