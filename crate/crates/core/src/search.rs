//! Breadth-ordered corridor search with epsilon pruning.
//!
//! Corridors grow one cell at a time from a cell centered on the start. For
//! each face of the last cell, a candidate local problem is skipped outright
//! when no edge state is worth `epsilon V*(s0)`, solved otherwise, and kept
//! when its local value at the start clears `epsilon V*(s0)`. Only kept
//! candidates are extended, and only those at the full length are returned.
//! Candidates sharing a cell union and an edge pose the same local problem
//! and are solved once.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corridor::{
    extend_corridor, partition_states, terminal_edges, Corridor, Direction, LocalKey, Partition, TerminalEdge,
};
use crate::error::{Error, Result};
use crate::grid::{GridMdp, GridState};
use crate::guarantees::{manhattan_tau, max_r_in, success_bound, BoundInputs, SuccessBound};
use crate::local::{build_local_mdp, solve_local_exact, solve_local_qlearning, LocalSolution};
use crate::mdp::FiniteMdp;
use crate::qlearn::QLearnConfig;
use crate::solver::{QTable, ValueTable};

/// How local problems are solved inside the search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    #[default]
    Exact,
    #[serde(alias = "qlearn")]
    QLearning,
}

/// When a corridor prefix is extended.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixRule {
    /// Extend through every face once any face of the last cell passes the
    /// epsilon test; cut the prefix only when all of them fail.
    #[default]
    AnyEdge,
    /// Extend only through the faces that pass themselves.
    PerEdge,
}

/// What happens when an extension recreates a cell already in the corridor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backtrack {
    /// Discard the extension: it adds no states to the corridor.
    #[default]
    Drop,
    /// Keep it, but never explore the face pointing back the way it came.
    IgnoreBackEdge,
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub start: GridState,
    pub epsilon: f64,
    /// Cells per returned corridor, `B + 1`.
    pub max_cells: usize,
    pub d: usize,
    pub spacing: usize,
    #[serde(default)]
    pub mode: SolverMode,
    #[serde(default)]
    pub prefix_rule: PrefixRule,
    #[serde(default)]
    pub backtrack: Backtrack,
    /// Exact-solver tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Learner settings for [`SolverMode::QLearning`].
    #[serde(default)]
    pub qlearn: QLearnConfig,
}

impl SearchConfig {
    pub fn new(start: GridState, epsilon: f64, max_cells: usize, d: usize, spacing: usize) -> Self {
        Self {
            start,
            epsilon,
            max_cells,
            d,
            spacing,
            mode: SolverMode::Exact,
            prefix_rule: PrefixRule::AnyEdge,
            backtrack: Backtrack::Drop,
            tol: default_tol(),
            qlearn: QLearnConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        if self.max_cells == 0 {
            return Err(Error::Config("corridors need at least one cell".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidCellSize(0));
        }
        if self.spacing == 0 || self.spacing > 2 * self.d + 1 {
            return Err(Error::Config(format!(
                "spacing must lie in [1, 2d + 1] = [1, {}] so that consecutive cells touch, got {}",
                2 * self.d + 1,
                self.spacing
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if self.mode == SolverMode::QLearning {
            self.qlearn.validate()?;
        }
        Ok(())
    }
}

/// One returned alternative: a corridor with its local policy and guarantees.
#[derive(Clone, Debug)]
pub struct PolicyOption {
    /// Start state id `s0`.
    pub start: usize,
    pub corridor: Corridor,
    pub partition: Partition,
    pub solution: Arc<LocalSolution>,
    /// `V_L*(s0)`.
    pub local_value: f64,
    /// `V_L*(s0) / V*(s0)`.
    pub ratio: f64,
    pub bound_inputs: BoundInputs,
    /// `None` when every edge state has zero benchmark value.
    pub bound: Option<SuccessBound>,
    /// Filled in by a rollout study.
    pub success_rate: Option<f64>,
}

impl PolicyOption {
    /// States inside both corridors where the local policies disagree.
    pub fn differing_actions(&self, other: &PolicyOption) -> Vec<usize> {
        (0..self.partition.num_states())
            .filter(|&s| self.partition.is_inside(s) && other.partition.is_inside(s))
            .filter(|&s| self.solution.policy[s] != other.solution.policy[s])
            .collect()
    }

    /// Stable label built from the cell centers and the edge, e.g. `0,0>0,3:E`.
    pub fn id(&self) -> String {
        let centers: Vec<String> = self
            .corridor
            .cells()
            .iter()
            .map(|c| c.center().coords().iter().map(i64::to_string).collect::<Vec<_>>().join(","))
            .collect();
        let edge = self.corridor.edge_direction().map_or("?", Direction::name);
        format!("{}:{edge}", centers.join(">"))
    }

    pub fn local_key(&self) -> LocalKey {
        LocalKey {
            union: self.corridor.union(),
            edge: self.partition.edge(),
        }
    }
}

/// Counters of one search run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchReport {
    /// Candidate `(corridor, edge)` pairs examined.
    pub enumerated: u64,
    /// Candidates skipped because no edge state reaches `epsilon V*(s0)`.
    pub prefiltered: u64,
    /// Corridor prefixes cut because no face of their last cell passed.
    pub truncated: u64,
    /// Candidates whose local problem had already been solved.
    pub deduplicated: u64,
    /// Local problems actually solved.
    pub solved: u64,
    /// Extensions that fell entirely off the grid.
    pub off_grid: u64,
    /// Extensions discarded for recreating a cell of their own corridor.
    pub revisits: u64,
    /// Candidates never generated because an ancestor was cut.
    pub skipped: u64,
    /// Candidates that passed the epsilon test at full length.
    pub accepted: u64,
    /// Options returned after removing repeated local problems.
    pub options: u64,
    /// The combinatorial ceiling `sum_b (2K)^(b+1)`.
    pub upper_bound: u64,
}

/// Options sorted by descending ratio, with run counters.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub options: Vec<PolicyOption>,
    pub report: SearchReport,
    pub benchmark_value: f64,
}

/// `sum_{b=0}^{B} (2k)^(b+1)`, saturating.
pub fn corridor_count_upper_bound(k: usize, b: usize) -> u64 {
    let branching = 2 * k as u64;
    let mut term: u64 = 1;
    let mut total: u64 = 0;
    for _ in 0..=b {
        term = term.saturating_mul(branching);
        total = total.saturating_add(term);
    }
    total
}

/// Candidates below a cut made at corridor length `length`.
fn subtree_size(k: usize, length: usize, max_cells: usize) -> u64 {
    if length >= max_cells {
        0
    } else {
        corridor_count_upper_bound(k, max_cells - length - 1)
    }
}

struct Node {
    corridor: Corridor,
    excluded: Option<Direction>,
}

struct Candidate {
    node: usize,
    corridor: Corridor,
    key: LocalKey,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pruning {
    On,
    Off,
}

/// Runs the pruned search.
pub fn corridor_search(mdp: &GridMdp, qstar: &QTable, cfg: &SearchConfig) -> Result<SearchOutcome> {
    run(mdp, qstar, cfg, Pruning::On)
}

/// Reference search without the edge prefilter or prefix truncation: every
/// corridor up to full length is solved and only the final epsilon test is
/// applied. Structural rules (clipping, backtrack exclusion, dedup of
/// returned options) match [`corridor_search`].
pub fn brute_force_search(mdp: &GridMdp, qstar: &QTable, cfg: &SearchConfig) -> Result<SearchOutcome> {
    run(mdp, qstar, cfg, Pruning::Off)
}

/// Largest local value that interior rewards alone could produce,
/// `max R / (1 - gamma)` over corridor states off the edge. Zero unless a
/// rewarding state (the goal) lies inside the corridor.
fn interior_ceiling_for(mdp: &GridMdp, corridor: &Corridor, edge: &TerminalEdge) -> f64 {
    corridor
        .union()
        .into_iter()
        .filter(|s| !edge.members().contains(s))
        .flat_map(|s| mdp.actions().map(move |a| mdp.reward(s, a)))
        .fold(0.0, f64::max)
        / (1.0 - mdp.gamma())
}

fn solve_candidate(mdp: &GridMdp, vstar: &ValueTable, corridor: &Corridor, cfg: &SearchConfig) -> Result<LocalSolution> {
    let part = partition_states(mdp.shape(), corridor)?;
    let local = build_local_mdp(mdp, part, vstar)?;
    match cfg.mode {
        SolverMode::Exact => solve_local_exact(&local, cfg.tol),
        SolverMode::QLearning => solve_local_qlearning(&local, &cfg.qlearn),
    }
}

fn run(mdp: &GridMdp, qstar: &QTable, cfg: &SearchConfig, pruning: Pruning) -> Result<SearchOutcome> {
    cfg.validate()?;
    let shape = mdp.shape();
    let n = mdp.num_states();
    if qstar.num_states() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: qstar.num_states(),
        });
    }
    let s0 = mdp.id(&cfg.start)?;
    let vstar = qstar.state_values();
    let v0 = vstar[s0];
    if !(v0 > 0.0) {
        return Err(Error::ZeroBenchmark);
    }
    let threshold = cfg.epsilon * v0;
    let k = shape.dim();
    let mut report = SearchReport {
        upper_bound: corridor_count_upper_bound(k, cfg.max_cells - 1),
        ..SearchReport::default()
    };

    let mut cache: HashMap<LocalKey, Arc<LocalSolution>> = HashMap::new();
    let mut emitted: HashSet<LocalKey> = HashSet::new();
    let mut options = Vec::new();
    let mut level = vec![Node {
        corridor: Corridor::starting_at(shape, &cfg.start, cfg.d)?,
        excluded: None,
    }];

    for length in 1..=cfg.max_cells {
        let below = subtree_size(k, length, cfg.max_cells);
        let mut candidates = Vec::new();
        for (idx, node) in level.iter().enumerate() {
            for edge in terminal_edges(shape, node.corridor.last()) {
                let dir = edge.direction();
                if node.excluded == Some(dir) {
                    continue;
                }
                report.enumerated += 1;
                if pruning == Pruning::On {
                    let best = edge.members().iter().map(|&s| vstar[s]).fold(interior_ceiling_for(mdp, &node.corridor, &edge), f64::max);
                    if best < threshold {
                        report.prefiltered += 1;
                        continue;
                    }
                }
                let corridor = node.corridor.with_edge(dir);
                let key = corridor.local_key(shape).expect("edge exists");
                candidates.push(Candidate { node: idx, corridor, key });
            }
        }

        let mut fresh: Vec<&Candidate> = Vec::new();
        let mut queued: HashSet<&LocalKey> = HashSet::new();
        for cand in &candidates {
            if !cache.contains_key(&cand.key) && queued.insert(&cand.key) {
                fresh.push(cand);
            }
        }
        report.solved += fresh.len() as u64;
        report.deduplicated += (candidates.len() - fresh.len()) as u64;
        let solved: Vec<LocalSolution> = fresh
            .par_iter()
            .map(|cand| solve_candidate(mdp, &vstar, &cand.corridor, cfg))
            .collect::<Result<_>>()?;
        for (cand, sol) in fresh.iter().zip(solved) {
            cache.insert(cand.key.clone(), Arc::new(sol));
        }

        let mut alive = vec![false; level.len()];
        let mut extend_through: Vec<Vec<Direction>> = vec![Vec::new(); level.len()];
        for cand in candidates {
            let solution = Arc::clone(&cache[&cand.key]);
            let passes = solution.values[s0] >= threshold;
            let dir = cand.corridor.edge_direction().expect("candidates carry an edge");
            alive[cand.node] |= passes;
            if passes || pruning == Pruning::Off {
                extend_through[cand.node].push(dir);
            }
            if length == cfg.max_cells && passes {
                report.accepted += 1;
                if emitted.insert(cand.key.clone()) {
                    options.push(make_option(mdp, &vstar, s0, v0, cand.corridor, solution)?);
                }
            }
        }
        if length == cfg.max_cells {
            break;
        }

        let mut next = Vec::new();
        for (idx, node) in level.iter().enumerate() {
            let faces: Vec<Direction> = match (pruning, cfg.prefix_rule) {
                (Pruning::On, PrefixRule::AnyEdge) if alive[idx] => terminal_edges(shape, node.corridor.last())
                    .iter()
                    .map(|e| e.direction())
                    .filter(|&dir| node.excluded != Some(dir))
                    .collect(),
                (Pruning::On, PrefixRule::AnyEdge) => Vec::new(),
                _ => std::mem::take(&mut extend_through[idx]),
            };
            let open = terminal_edges(shape, node.corridor.last())
                .iter()
                .filter(|e| node.excluded != Some(e.direction()))
                .count();
            if faces.len() < open {
                if faces.is_empty() {
                    report.truncated += 1;
                }
                report.skipped += (open - faces.len()) as u64 * below;
            }
            for dir in faces {
                let edge = node.corridor.last().edge(shape, dir).expect("edge exists");
                match extend_corridor(shape, &node.corridor, &edge, cfg.spacing) {
                    Ok(child) => {
                        let revisit = node.corridor.contains_cell(child.last());
                        match (revisit, cfg.backtrack) {
                            (true, Backtrack::Drop) => report.revisits += 1,
                            _ => next.push(Node {
                                excluded: revisit.then(|| dir.opposite()),
                                corridor: child,
                            }),
                        }
                    }
                    Err(Error::OffGrid) => {
                        report.off_grid += 1;
                        report.skipped += below;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        level = next;
    }

    options.sort_by(|a: &PolicyOption, b: &PolicyOption| b.ratio.total_cmp(&a.ratio));
    report.options = options.len() as u64;
    Ok(SearchOutcome {
        options,
        report,
        benchmark_value: v0,
    })
}

fn make_option(
    mdp: &GridMdp,
    vstar: &ValueTable,
    s0: usize,
    v0: f64,
    corridor: Corridor,
    solution: Arc<LocalSolution>,
) -> Result<PolicyOption> {
    let shape = mdp.shape();
    let partition = partition_states(shape, &corridor)?;
    let edge = corridor.terminal_edge(shape).expect("options carry an edge");
    let local_value = solution.values[s0];
    let bound_inputs = BoundInputs {
        local_value,
        max_r_in: max_r_in(mdp, &partition, &solution.policy),
        gamma: mdp.gamma(),
        tau: manhattan_tau(shape, &shape.state_of(s0), &edge),
        max_edge_value: edge.members().iter().map(|&s| vstar[s]).fold(0.0, f64::max),
    };
    let bound = match success_bound(&bound_inputs) {
        Ok(b) => Some(b),
        Err(Error::ZeroEdgeValue) => None,
        Err(e) => return Err(e),
    };
    Ok(PolicyOption {
        start: s0,
        corridor,
        partition,
        solution,
        local_value,
        ratio: local_value / v0,
        bound_inputs,
        bound,
        success_rate: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridConfig;
    use crate::solver::Benchmark;

    #[test]
    fn upper_bound_examples() {
        assert_eq!(corridor_count_upper_bound(2, 0), 4);
        assert_eq!(corridor_count_upper_bound(2, 1), 20);
        assert_eq!(corridor_count_upper_bound(1, 0), 2);
        assert_eq!(corridor_count_upper_bound(2, 4), 4 + 16 + 64 + 256 + 1024);
    }

    #[test]
    fn rejects_worthless_start() {
        let mdp = GridMdp::from_text("SHH\nHHH\nHHG", GridConfig::default()).unwrap();
        let bench = Benchmark::solve(&mdp).unwrap();
        let cfg = SearchConfig::new(GridState::yx(0, 0), 0.5, 2, 1, 1);
        assert!(matches!(corridor_search(&mdp, &bench.q, &cfg), Err(Error::ZeroBenchmark)));
    }

    #[test]
    fn open_map_single_cell() {
        let mdp = GridMdp::from_text("SFF\nFFF\nFFG", GridConfig::deterministic(0.9)).unwrap();
        let bench = Benchmark::solve(&mdp).unwrap();
        let cfg = SearchConfig::new(GridState::yx(0, 0), 0.5, 1, 1, 1);
        let out = corridor_search(&mdp, &bench.q, &cfg).unwrap();
        // The clipped corner cell has only its south and east faces.
        assert_eq!(out.report.enumerated, 2);
        assert_eq!(out.options.len(), 2);
        for opt in &out.options {
            assert!(opt.ratio >= 0.5);
            assert_eq!(opt.corridor.len(), 1);
        }
    }

    #[test]
    fn counts_respect_ceiling() {
        let mdp = GridMdp::from_text("SFFF\nFHFF\nFFFH\nHFFG", GridConfig::default()).unwrap();
        let bench = Benchmark::solve(&mdp).unwrap();
        for eps in [0.1, 0.5, 0.9, 1.0] {
            let cfg = SearchConfig::new(GridState::yx(0, 0), eps, 3, 1, 1);
            let r = corridor_search(&mdp, &bench.q, &cfg).unwrap().report;
            assert!(r.solved <= r.enumerated);
            assert!(r.enumerated + r.skipped <= r.upper_bound, "{r:?}");
        }
    }

    #[test]
    fn config_validation() {
        let good = SearchConfig::new(GridState::yx(0, 0), 0.9, 3, 1, 1);
        assert!(good.validate().is_ok());
        assert!(SearchConfig { epsilon: 0.0, ..good.clone() }.validate().is_err());
        assert!(SearchConfig { epsilon: 1.5, ..good.clone() }.validate().is_err());
        assert!(SearchConfig { spacing: 4, ..good.clone() }.validate().is_err());
        assert!(SearchConfig { max_cells: 0, ..good }.validate().is_err());
    }
}
