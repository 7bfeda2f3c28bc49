//! Executable forms of the two guarantees.
//!
//! The value guarantee is checked through the chain of augmented MDPs used in
//! its proof: the switching MDP `M_lambda` over `(s, delta)` pairs, the
//! variant `M~_lambda` in which switched states are absorbing and pay the
//! per-step equivalent of their `M_lambda` value, and `M~_R0`, which also
//! zeroes that payment away from the terminal edge. Each link in the chain is
//! a separate check so a failure points at a single step.

use serde::{Deserialize, Serialize};

use crate::corridor::{Partition, TerminalEdge};
use crate::error::{Error, Result};
use crate::grid::{Action, GridMdp, GridShape, GridState};
use crate::local::build_local_mdp;
use crate::mdp::FiniteMdp;
use crate::solver::{evaluate_policy_direct, Policy, ValueTable};

/// Which member of the proof chain an [`AugmentedMdp`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentedVariant {
    /// `M_lambda`: base dynamics and rewards, `delta` tracks visits to `S_delta`.
    Lambda,
    /// `M~_lambda`: switched states absorb and pay `(1 - gamma) V_lambda`.
    Tilde,
    /// `M~_R0`: as `Tilde`, with zero reward on switched states off the edge.
    TildeR0,
}

/// A policy over augmented states: `prefix` while `delta = 0`, `suffix` after.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentedPolicy {
    pub prefix: Policy,
    pub suffix: Policy,
}

impl AugmentedPolicy {
    /// A policy that ignores the switching bit.
    pub fn stationary(pi: Policy) -> Self {
        Self {
            prefix: pi.clone(),
            suffix: pi,
        }
    }

    /// Flattened over augmented ids `s + delta * |S|`.
    pub fn flatten(&self) -> Policy {
        Policy(self.prefix.0.iter().chain(&self.suffix.0).copied().collect())
    }
}

/// Augmented MDP over `2|S|` states, id `s + delta * |S|`.
#[derive(Clone, Debug)]
pub struct AugmentedMdp<'a> {
    variant: AugmentedVariant,
    base: &'a GridMdp,
    switch: Vec<bool>,
    omega: Vec<bool>,
    /// `V_lambda` of the policy, required by the tilde variants.
    lambda_values: Option<ValueTable>,
}

impl<'a> AugmentedMdp<'a> {
    pub fn variant(&self) -> AugmentedVariant {
        self.variant
    }

    pub fn base(&self) -> &'a GridMdp {
        self.base
    }

    pub fn id(&self, state: usize, delta: bool) -> usize {
        state + usize::from(delta) * self.base.num_states()
    }

    /// Whether `state` lies in `S_delta`.
    pub fn switches_at(&self, state: usize) -> bool {
        self.switch[state]
    }

    /// `f_delta`: set once the walk has entered `S_delta`.
    pub fn next_delta(&self, delta: bool, next: usize) -> bool {
        delta || self.switch[next]
    }

    fn split(&self, id: usize) -> (usize, bool) {
        let n = self.base.num_states();
        (id % n, id >= n)
    }
}

impl FiniteMdp for AugmentedMdp<'_> {
    fn num_states(&self) -> usize {
        2 * self.base.num_states()
    }

    fn num_actions(&self) -> usize {
        self.base.num_actions()
    }

    fn discount(&self) -> f64 {
        self.base.gamma()
    }

    fn reward(&self, id: usize, action: Action) -> f64 {
        let (s, delta) = self.split(id);
        if !delta || self.variant == AugmentedVariant::Lambda {
            return self.base.reward(s, action);
        }
        if self.variant == AugmentedVariant::TildeR0 && !self.omega[s] {
            return 0.0;
        }
        let v = self.lambda_values.as_ref().expect("tilde variants carry V_lambda");
        (1.0 - self.base.gamma()) * v[id]
    }

    fn for_each_successor<F: FnMut(usize, f64)>(&self, id: usize, action: Action, mut f: F) {
        let (s, delta) = self.split(id);
        if delta && self.variant != AugmentedVariant::Lambda {
            f(id, 1.0);
            return;
        }
        for &(next, p) in self.base.row(s, action) {
            f(self.id(next, self.next_delta(delta, next)), p);
        }
    }
}

/// Builds one member of the chain with `S_delta = S \ S_in` and
/// `S_omega` the partition's edge. The tilde variants evaluate `policy` on
/// `M_lambda` first to obtain their switched-state rewards.
pub fn build_augmented<'a>(
    variant: AugmentedVariant,
    mdp: &'a GridMdp,
    part: &Partition,
    policy: &AugmentedPolicy,
) -> Result<AugmentedMdp<'a>> {
    let n = mdp.num_states();
    if part.num_states() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: part.num_states(),
        });
    }
    for pi in [&policy.prefix, &policy.suffix] {
        if pi.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: pi.len(),
            });
        }
    }
    let mut aug = AugmentedMdp {
        variant: AugmentedVariant::Lambda,
        base: mdp,
        switch: (0..n).map(|s| !part.is_inside(s)).collect(),
        omega: (0..n).map(|s| part.is_edge(s)).collect(),
        lambda_values: None,
    };
    if variant != AugmentedVariant::Lambda {
        aug.lambda_values = Some(evaluate_policy_direct(&aug, &policy.flatten())?);
        aug.variant = variant;
    }
    Ok(aug)
}

/// Outcome of comparing two value tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// Largest observed gap; for one-sided checks the largest violation, which
    /// is negative when the inequality holds with room to spare.
    pub max_gap: f64,
    pub tolerance: f64,
    pub worst_state: Option<usize>,
    pub passed: bool,
}

impl GapReport {
    fn from_gaps(gaps: impl IntoIterator<Item = (usize, f64)>, tolerance: f64) -> Self {
        let mut max_gap = f64::NEG_INFINITY;
        let mut worst_state = None;
        for (s, gap) in gaps {
            if gap > max_gap {
                max_gap = gap;
                worst_state = Some(s);
            }
        }
        if worst_state.is_none() {
            max_gap = 0.0;
        }
        Self {
            max_gap,
            tolerance,
            worst_state,
            passed: max_gap <= tolerance,
        }
    }
}

/// Tolerance of the equality checks.
pub const LEMMA_EQ_TOL: f64 = 1e-9;
/// Slack of the one-sided reward-domination check.
pub const LEMMA_LE_TOL: f64 = 1e-12;
/// Slack of the value-guarantee check.
pub const THEOREM_TOL: f64 = 1e-9;

fn augmented_values(
    variant: AugmentedVariant,
    mdp: &GridMdp,
    part: &Partition,
    policy: &AugmentedPolicy,
) -> Result<(ValueTable, usize)> {
    let aug = build_augmented(variant, mdp, part, policy)?;
    Ok((evaluate_policy_direct(&aug, &policy.flatten())?, mdp.num_states()))
}

/// `V^pi(s) = V_lambda^pi((s, 0))` for a policy that ignores `delta`.
pub fn check_lemma1(mdp: &GridMdp, part: &Partition, pi: &Policy) -> Result<GapReport> {
    let plain = evaluate_policy_direct(mdp, pi)?;
    let (lifted, n) = augmented_values(AugmentedVariant::Lambda, mdp, part, &AugmentedPolicy::stationary(pi.clone()))?;
    Ok(GapReport::from_gaps(
        (0..n).map(|s| (s, (plain[s] - lifted[s]).abs())),
        LEMMA_EQ_TOL,
    ))
}

/// `V_lambda^pi((s, 0)) = V~_lambda^pi((s, 0))` at every `s`.
pub fn check_lemma2(mdp: &GridMdp, part: &Partition, policy: &AugmentedPolicy) -> Result<GapReport> {
    let (lambda, n) = augmented_values(AugmentedVariant::Lambda, mdp, part, policy)?;
    let (tilde, _) = augmented_values(AugmentedVariant::Tilde, mdp, part, policy)?;
    Ok(GapReport::from_gaps(
        (0..n).map(|s| (s, (lambda[s] - tilde[s]).abs())),
        LEMMA_EQ_TOL,
    ))
}

/// `V~_R0^pi(lambda) <= V~_lambda^pi(lambda)` at every augmented state.
pub fn check_lemma3(mdp: &GridMdp, part: &Partition, policy: &AugmentedPolicy) -> Result<GapReport> {
    let (tilde, _) = augmented_values(AugmentedVariant::Tilde, mdp, part, policy)?;
    let (zeroed, _) = augmented_values(AugmentedVariant::TildeR0, mdp, part, policy)?;
    Ok(GapReport::from_gaps(
        (0..tilde.len()).map(|s| (s, zeroed[s] - tilde[s])),
        LEMMA_LE_TOL,
    ))
}

/// Per-instance outcome of the value-guarantee check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    /// `max_{s in S_in} V_L(s) - V^pi_hat((s, 0))`; at most the tolerance on success.
    pub max_violation: f64,
    pub worst_state: Option<usize>,
    /// Exact local value of `pi_L` on `M_L`.
    pub local_values: ValueTable,
    /// Exact value of the switching policy on `M_lambda` at `(s, 0)`.
    pub switching_values: ValueTable,
    pub passed: bool,
}

/// Checks `V_L(s) <= V^pi_hat((s, 0))` on `S_in`.
///
/// `V_L` is the exact value of `pi_l` on the local problem built from
/// `vstar`, which equals `V_L*` when `pi_l` is the optimal local policy. The
/// right-hand side evaluates the switching policy (`pi_l`, then `pi_star`)
/// exactly over the augmented state space.
pub fn verify_theorem1(
    mdp: &GridMdp,
    part: &Partition,
    vstar: &ValueTable,
    pi_l: &Policy,
    pi_star: &Policy,
) -> Result<Theorem1Report> {
    let local = build_local_mdp(mdp, part.clone(), vstar)?;
    let local_values = evaluate_policy_direct(&local, pi_l)?;
    let policy = AugmentedPolicy {
        prefix: pi_l.clone(),
        suffix: pi_star.clone(),
    };
    let (aug, n) = augmented_values(AugmentedVariant::Lambda, mdp, part, &policy)?;
    let switching_values = ValueTable(aug.0[..n].to_vec());
    let gaps = GapReport::from_gaps(
        part.inside().into_iter().map(|s| (s, local_values[s] - switching_values[s])),
        THEOREM_TOL,
    );
    Ok(Theorem1Report {
        max_violation: gaps.max_gap,
        worst_state: gaps.worst_state,
        local_values,
        switching_values,
        passed: gaps.passed,
    })
}

/// Inputs of the traversal-probability bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub local_value: f64,
    pub max_r_in: f64,
    pub gamma: f64,
    pub tau: u64,
    /// `max_{s in S_omega} V*(s)`.
    pub max_edge_value: f64,
}

/// The traversal-probability lower bound, raw and clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessBound {
    pub raw: f64,
    pub clamped: f64,
}

/// `(V_L(s_t) - max(r_in) / (1 - gamma)) / (gamma^tau max_{S_omega} V*)`.
///
/// A non-positive raw value is a vacuous bound, reported rather than rejected.
pub fn success_bound(inputs: &BoundInputs) -> Result<SuccessBound> {
    let BoundInputs {
        local_value,
        max_r_in,
        gamma,
        tau,
        max_edge_value,
    } = *inputs;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("discount must lie in (0, 1), got {gamma}")));
    }
    if !(max_edge_value > 0.0) {
        return Err(Error::ZeroEdgeValue);
    }
    let exponent = i32::try_from(tau).map_err(|_| Error::InvalidArgument(format!("tau {tau} is too large")))?;
    let raw = (local_value - max_r_in / (1.0 - gamma)) / (gamma.powi(exponent) * max_edge_value);
    Ok(SuccessBound {
        raw,
        clamped: raw.clamp(0.0, 1.0),
    })
}

/// Fewest grid steps from `state` to any member of `edge`.
pub fn manhattan_tau(shape: &GridShape, state: &GridState, edge: &TerminalEdge) -> u64 {
    manhattan_tau_to(state, edge.members().iter().map(|&s| shape.state_of(s)))
}

/// As [`manhattan_tau`] for an explicit target set; 0 when it is empty.
pub fn manhattan_tau_to(state: &GridState, targets: impl IntoIterator<Item = GridState>) -> u64 {
    targets.into_iter().map(|t| state.manhattan(&t)).min().unwrap_or(0)
}

/// `max_{s in S_in} R(s, pi(s))`.
pub fn max_r_in(mdp: &GridMdp, part: &Partition, pi: &Policy) -> f64 {
    part.inside()
        .into_iter()
        .map(|s| mdp.reward(s, pi[s]))
        .fold(0.0, f64::max)
}

/// Whether `v_local / v_star >= eps`.
pub fn epsilon_check(v_local: f64, v_star: f64, eps: f64) -> Result<bool> {
    if !(v_star > 0.0) {
        return Err(Error::ZeroBenchmark);
    }
    Ok(v_local / v_star >= eps)
}
