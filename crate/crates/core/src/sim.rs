//! Monte Carlo success statistics for policy options.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alt_policy::{default_step_cap, rollout, Termination, Trajectory};
use crate::corridor::{Partition, Region};
use crate::error::{Error, Result};
use crate::grid::GridMdp;
use crate::guarantees::SuccessBound;
use crate::search::PolicyOption;
use crate::solver::Policy;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;
/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.5758293035489;

pub const DEFAULT_ROLLOUTS: usize = 500;

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("a Wilson interval needs n >= 1".into()));
    }
    if successes > n {
        return Err(Error::InvalidArgument(format!("{successes} successes out of {n}")));
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // Clamp so the interval always contains p despite rounding at p = 0 or 1.
    Ok(((center - half).max(0.0).min(p), (center + half).min(1.0).max(p)))
}

/// Rollout settings shared by every option in a study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub base_seed: u64,
    /// `None` means `10 |S|`.
    pub step_cap: Option<usize>,
}

impl SimConfig {
    pub fn new(n: usize, base_seed: u64) -> Self {
        Self {
            n,
            base_seed,
            step_cap: None,
        }
    }

    fn resolve_cap(&self, mdp: &GridMdp) -> Result<usize> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("number of rollouts must be at least 1".into()));
        }
        let cap = self.step_cap.unwrap_or_else(|| default_step_cap(mdp));
        if cap == 0 {
            return Err(Error::InvalidArgument("step cap must be at least 1".into()));
        }
        Ok(cap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub option_id: String,
    pub n: usize,
    pub base_seed: u64,
    pub step_cap: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Wilson 95% interval.
    pub interval: (f64, f64),
    pub bound_raw: Option<f64>,
    pub bound_clamped: Option<f64>,
    pub mean_return: f64,
    pub terminations: BTreeMap<Termination, usize>,
}

impl SimReport {
    /// Half-width of the stored 95% interval around the rate.
    pub fn half_width(&self) -> f64 {
        (self.interval.1 - self.interval.0) / 2.0
    }
}

/// What a rollout study needs from an option.
#[derive(Clone, Debug, PartialEq)]
pub struct OptionPlan {
    pub id: String,
    pub start: usize,
    pub ratio: f64,
    pub partition: Partition,
    /// `pi_L`; only its entries on `S_in` matter.
    pub policy: Policy,
    pub bound: Option<SuccessBound>,
}

impl From<&PolicyOption> for OptionPlan {
    fn from(option: &PolicyOption) -> Self {
        Self {
            id: option.id(),
            start: option.start,
            ratio: option.ratio,
            partition: option.partition.clone(),
            policy: option.solution.policy.clone(),
            bound: option.bound,
        }
    }
}

impl OptionPlan {
    fn rollout(&self, mdp: &GridMdp, pi_star: &Policy, seed: u64, cap: usize) -> Trajectory {
        rollout(mdp, &self.partition, &self.policy, pi_star, self.start, seed, cap)
    }
}

/// Runs `cfg.n` rollouts of the option's switching policy with seeds
/// `base_seed + i`.
pub fn simulate_option(mdp: &GridMdp, option: &PolicyOption, pi_star: &Policy, cfg: &SimConfig) -> Result<SimReport> {
    simulate_plan(mdp, &OptionPlan::from(option), pi_star, cfg)
}

pub fn simulate_plan(mdp: &GridMdp, plan: &OptionPlan, pi_star: &Policy, cfg: &SimConfig) -> Result<SimReport> {
    let cap = cfg.resolve_cap(mdp)?;
    let outcomes: Vec<(Termination, f64)> = (0..cfg.n)
        .into_par_iter()
        .map(|i| {
            let t = plan.rollout(mdp, pi_star, cfg.base_seed.wrapping_add(i as u64), cap);
            (t.termination, t.discounted_return)
        })
        .collect();
    let mut terminations = BTreeMap::new();
    let mut successes = 0;
    let mut total_return = 0.0;
    for &(term, ret) in &outcomes {
        *terminations.entry(term).or_insert(0) += 1;
        successes += usize::from(term.is_success());
        total_return += ret;
    }
    Ok(SimReport {
        option_id: plan.id.clone(),
        n: cfg.n,
        base_seed: cfg.base_seed,
        step_cap: cap,
        successes,
        success_rate: successes as f64 / cfg.n as f64,
        interval: wilson_interval(successes, cfg.n, Z95)?,
        bound_raw: plan.bound.map(|b| b.raw),
        bound_clamped: plan.bound.map(|b| b.clamped),
        mean_return: total_return / cfg.n as f64,
        terminations,
    })
}

/// The first `count` trajectories of a study, for playback.
pub fn sample_trajectories(
    mdp: &GridMdp,
    plan: &OptionPlan,
    pi_star: &Policy,
    cfg: &SimConfig,
    count: usize,
) -> Result<Vec<Trajectory>> {
    let cap = cfg.resolve_cap(mdp)?;
    Ok((0..count.min(cfg.n))
        .map(|i| plan.rollout(mdp, pi_star, cfg.base_seed.wrapping_add(i as u64), cap))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub ratio: f64,
    pub report: SimReport,
}

/// Simulates every option with the same seeds, rows sorted by descending ratio.
pub fn compare_options(
    mdp: &GridMdp,
    plans: &[OptionPlan],
    pi_star: &Policy,
    cfg: &SimConfig,
) -> Result<Vec<ComparisonRow>> {
    if plans.is_empty() {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    }
    let mut rows = plans
        .iter()
        .map(|p| {
            Ok(ComparisonRow {
                ratio: p.ratio,
                report: simulate_plan(mdp, p, pi_star, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.ratio.total_cmp(&a.ratio));
    Ok(rows)
}

/// Probability that the first exit from `S_in` lands on the edge when `pi_l`
/// acts from `s0`, ignoring the rollout step cap.
///
/// Iterates `p <- P_pi p` from zero with `p = 1` on the edge and `0` outside,
/// which converges upward to the least fixed point, the absorption
/// probability (staying inside forever counts as failure).
pub fn exact_success_probability(
    mdp: &GridMdp,
    part: &Partition,
    pi_l: &Policy,
    s0: usize,
    tol: f64,
    max_sweeps: usize,
) -> Result<f64> {
    Ok(exact_success_table(mdp, part, pi_l, tol, max_sweeps)?[s0])
}

/// The absorption probability for every start state.
pub fn exact_success_table(
    mdp: &GridMdp,
    part: &Partition,
    pi_l: &Policy,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    let n = part.num_states();
    let mut p: Vec<f64> = (0..n)
        .map(|s| if part.region(s) == Region::Edge { 1.0 } else { 0.0 })
        .collect();
    let inside: Vec<usize> = (0..n).filter(|&s| part.is_inside(s) && !mdp.is_absorbing(s)).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..max_sweeps {
        residual = 0.0;
        for &s in &inside {
            let next: f64 = mdp.row(s, pi_l[s]).iter().map(|&(t, w)| w * p[t]).sum();
            residual = f64::max(residual, (next - p[s]).abs());
            p[s] = next;
        }
        if residual <= tol {
            return Ok(p);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_sweeps,
        residual,
    })
}
