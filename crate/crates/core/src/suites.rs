//! Batch checks of the value and traversal guarantees.
//!
//! Each suite returns a serializable report with one row per instance or
//! option, so the command line and the acceptance target print the same
//! numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{Action, GridMdp};
use crate::guarantees::{check_lemma1, check_lemma2, check_lemma3, verify_theorem1, AugmentedPolicy};
use crate::local::{build_local_mdp, solve_local_exact};
use crate::maps::random_instance;
use crate::search::{corridor_search, SearchConfig};
use crate::sim::{exact_success_probability, simulate_option, SimConfig};
use crate::solver::{Benchmark, Policy};

/// Largest side of the random maps used by the instance suites.
pub const MAX_SIDE: usize = 6;

/// Tolerance of the exact absorption solve used against the bound.
const EXACT_TOL: f64 = 1e-13;
const EXACT_MAX_SWEEPS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub seed: u64,
    pub shape: Vec<usize>,
    pub gamma: f64,
    pub cells: usize,
    /// Named gaps with their tolerances, in check order.
    pub gaps: Vec<(String, f64, f64)>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub rows: Vec<InstanceRow>,
    pub passed: usize,
    pub total: usize,
}

impl SuiteReport {
    fn new(suite: &str, rows: Vec<InstanceRow>) -> Self {
        let passed = rows.iter().filter(|r| r.passed).count();
        Self {
            suite: suite.into(),
            total: rows.len(),
            rows,
            passed,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

fn random_policy(n: usize, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Policy((0..n).map(|_| Action::new(rng.random_range(0..4))).collect())
}

fn instance_rows(seeds: &[u64], check: impl Fn(u64) -> Result<InstanceRow> + Sync) -> Result<Vec<InstanceRow>> {
    seeds.par_iter().map(|&seed| check(seed)).collect()
}

/// The three augmentation identities on random instances, each with an
/// arbitrary policy (and an arbitrary switching pair for the last two).
pub fn lemma_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let rows = instance_rows(seeds, |seed| {
        let inst = random_instance(seed, MAX_SIDE)?;
        let n = inst.mdp.shape().num_states();
        let pi = random_policy(n, seed ^ 0x5eed_0001);
        let switching = AugmentedPolicy {
            prefix: pi.clone(),
            suffix: random_policy(n, seed ^ 0x5eed_0002),
        };
        let checks = [
            ("lifted", check_lemma1(&inst.mdp, &inst.partition, &pi)?),
            ("tilde", check_lemma2(&inst.mdp, &inst.partition, &switching)?),
            ("zeroed", check_lemma3(&inst.mdp, &inst.partition, &switching)?),
        ];
        Ok(InstanceRow {
            seed,
            shape: inst.mdp.shape().extents().to_vec(),
            gamma: inst.mdp.gamma(),
            cells: inst.corridor.len(),
            passed: checks.iter().all(|(_, r)| r.passed),
            gaps: checks.into_iter().map(|(name, r)| (name.into(), r.max_gap, r.tolerance)).collect(),
        })
    })?;
    Ok(SuiteReport::new("lemmas", rows))
}

/// The value guarantee of the switching policy on random instances.
pub fn theorem1_suite(seeds: &[u64]) -> Result<SuiteReport> {
    let rows = instance_rows(seeds, |seed| {
        let inst = random_instance(seed, MAX_SIDE)?;
        let bench = Benchmark::solve(&inst.mdp)?;
        let local = build_local_mdp(&inst.mdp, inst.partition.clone(), &bench.values)?;
        let sol = solve_local_exact(&local, 1e-12)?;
        let report = verify_theorem1(&inst.mdp, &inst.partition, &bench.values, &sol.policy, &bench.policy)?;
        Ok(InstanceRow {
            seed,
            shape: inst.mdp.shape().extents().to_vec(),
            gamma: inst.mdp.gamma(),
            cells: inst.corridor.len(),
            gaps: vec![("value".into(), report.max_violation, crate::guarantees::THEOREM_TOL)],
            passed: report.passed,
        })
    })?;
    Ok(SuiteReport::new("theorem1", rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalRow {
    pub option_id: String,
    pub ratio: f64,
    pub bound_raw: Option<f64>,
    /// Exact probability of reaching the edge before leaving the corridor.
    pub exact: f64,
    pub success_rate: f64,
    pub half_width: f64,
    /// `rate >= bound - 3 * half_width`.
    pub sampled_ok: bool,
    /// `exact >= bound`.
    pub exact_ok: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalReport {
    pub suite: String,
    pub query: SearchConfig,
    pub sim: SimConfig,
    pub rows: Vec<TraversalRow>,
    pub passed: usize,
    pub total: usize,
}

impl TraversalReport {
    pub fn all_passed(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }
}

/// Simulates every option of one search and compares the traversal rate and
/// its exact value with the certified bound.
pub fn theorem2_suite(mdp: &GridMdp, query: &SearchConfig, sim: &SimConfig) -> Result<TraversalReport> {
    let bench = Benchmark::solve(mdp)?;
    let outcome = corridor_search(mdp, &bench.q, query)?;
    let mut rows = Vec::with_capacity(outcome.options.len());
    for option in &outcome.options {
        let report = simulate_option(mdp, option, &bench.policy, sim)?;
        let exact = exact_success_probability(
            mdp,
            &option.partition,
            &option.solution.policy,
            option.start,
            EXACT_TOL,
            EXACT_MAX_SWEEPS,
        )?;
        let bound = report.bound_raw;
        let sampled_ok = bound.is_none_or(|b| report.success_rate >= b - 3.0 * report.half_width());
        let exact_ok = bound.is_none_or(|b| exact >= b);
        rows.push(TraversalRow {
            option_id: report.option_id.clone(),
            ratio: option.ratio,
            bound_raw: bound,
            exact,
            success_rate: report.success_rate,
            half_width: report.half_width(),
            sampled_ok,
            exact_ok,
            passed: sampled_ok && exact_ok,
        });
    }
    let passed = rows.iter().filter(|r| r.passed).count();
    Ok(TraversalReport {
        suite: "theorem2".into(),
        query: query.clone(),
        sim: *sim,
        total: rows.len(),
        rows,
        passed,
    })
}
