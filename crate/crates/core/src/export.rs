//! JSON and CSV documents shared by the command line and the HTTP service.
//!
//! Every document goes through [`to_canonical_json`], so equal inputs give
//! byte-identical files no matter which front end produced them.

use serde::{Deserialize, Serialize};

use crate::alt_policy::{Termination, Trajectory};
use crate::corridor::{partition_states, Corridor, CorridorSpec, Partition};
use crate::error::{Error, Result};
use crate::grid::{Action, GridConfig, GridMdp};
use crate::guarantees::{BoundInputs, SuccessBound};
use crate::local::LocalDiagnostics;
use crate::mdp::FiniteMdp;
use crate::search::{corridor_search, PolicyOption, SearchConfig, SearchOutcome, SearchReport};
use crate::sim::{ComparisonRow, OptionPlan, SimConfig};
use crate::solver::{Benchmark, Policy, QTable, ValueTable};

pub const SEARCH_SCHEMA: &str = "dna.search/1";
pub const SOLVE_SCHEMA: &str = "dna.solve/1";
pub const SIMULATE_SCHEMA: &str = "dna.simulate/1";
pub const RENDER_SCHEMA: &str = "dna.render/1";

/// Pretty JSON with a trailing newline. Struct fields keep declaration order
/// and maps are ordered, so the text is a pure function of the value.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// A map and its configuration, enough to rebuild the MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub map: Vec<String>,
    pub config: GridConfig,
}

impl Environment {
    pub fn from_mdp(mdp: &GridMdp) -> Self {
        Self {
            map: mdp.to_text().lines().map(str::to_owned).collect(),
            config: mdp.config().clone(),
        }
    }

    pub fn build(&self) -> Result<GridMdp> {
        GridMdp::from_text(&self.map.join("\n"), self.config.clone())
    }
}

fn coords(mdp: &GridMdp, s: usize) -> Vec<i64> {
    mdp.state(s).coords().to_vec()
}

fn state_id(mdp: &GridMdp, coords: &[i64]) -> Result<usize> {
    mdp.shape()
        .index_of(&crate::grid::GridState::new(coords.to_vec()))
        .ok_or_else(|| Error::OutOfBounds(format!("{coords:?}")))
}

/// One policy arrow.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrow {
    pub state: Vec<i64>,
    pub action: String,
}

fn arrows(mdp: &GridMdp, states: &[usize], policy: &Policy) -> Vec<Arrow> {
    states
        .iter()
        .map(|&s| Arrow {
            state: coords(mdp, s),
            action: policy[s].name(),
        })
        .collect()
}

/// A returned option as stored on disk and served over HTTP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionRecord {
    pub id: String,
    /// Position in the ratio-sorted option list.
    pub rank: usize,
    pub start: Vec<i64>,
    pub corridor: CorridorSpec,
    pub local_value: f64,
    pub ratio: f64,
    pub bound: Option<SuccessBound>,
    pub bound_inputs: BoundInputs,
    pub inside: Vec<Vec<i64>>,
    pub edge: Vec<Vec<i64>>,
    /// `pi_L` on `S_in`.
    pub policy: Vec<Arrow>,
    pub diagnostics: LocalDiagnostics,
}

impl OptionRecord {
    pub fn from_option(mdp: &GridMdp, rank: usize, option: &PolicyOption) -> Self {
        let inside = option.partition.inside();
        Self {
            id: option.id(),
            rank,
            start: coords(mdp, option.start),
            corridor: option.corridor.to_spec(),
            local_value: option.local_value,
            ratio: option.ratio,
            bound: option.bound,
            bound_inputs: option.bound_inputs.clone(),
            inside: inside.iter().map(|&s| coords(mdp, s)).collect(),
            edge: option.partition.edge().iter().map(|&s| coords(mdp, s)).collect(),
            policy: arrows(mdp, &inside, &option.solution.policy),
            diagnostics: option.solution.diagnostics.clone(),
        }
    }

    /// Rebuilds the partition from the corridor and checks it against the
    /// stored state lists.
    pub fn partition(&self, mdp: &GridMdp) -> Result<Partition> {
        let corridor = Corridor::from_spec(mdp.shape(), &self.corridor)?;
        let part = partition_states(mdp.shape(), &corridor)?;
        let listed = |v: &[Vec<i64>]| -> Result<Vec<usize>> {
            let mut ids = v.iter().map(|c| state_id(mdp, c)).collect::<Result<Vec<_>>>()?;
            ids.sort_unstable();
            Ok(ids)
        };
        if listed(&self.inside)? != part.inside() || listed(&self.edge)? != part.edge() {
            return Err(Error::InvalidArgument(format!(
                "option {}: stored states do not match its corridor",
                self.id
            )));
        }
        Ok(part)
    }

    /// The rollout view of this record; states outside `S_in` get `N`, which
    /// the switching policy never consults.
    pub fn to_plan(&self, mdp: &GridMdp) -> Result<OptionPlan> {
        let partition = self.partition(mdp)?;
        let mut policy = Policy::constant(mdp.num_states(), Action::NORTH);
        for arrow in &self.policy {
            let s = state_id(mdp, &arrow.state)?;
            policy.0[s] = Action::from_name(&arrow.action)
                .filter(|a| a.index() < mdp.num_actions())
                .ok_or_else(|| Error::InvalidArgument(format!("unknown action {:?}", arrow.action)))?;
        }
        Ok(OptionPlan {
            id: self.id.clone(),
            start: state_id(mdp, &self.start)?,
            ratio: self.ratio,
            partition,
            policy,
            bound: self.bound,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchDocument {
    pub schema: String,
    pub environment: Environment,
    pub query: SearchConfig,
    /// `V*(s0)`.
    pub benchmark_value: f64,
    pub report: SearchReport,
    pub options: Vec<OptionRecord>,
}

impl SearchDocument {
    pub fn new(mdp: &GridMdp, query: &SearchConfig, outcome: &SearchOutcome) -> Self {
        Self {
            schema: SEARCH_SCHEMA.into(),
            environment: Environment::from_mdp(mdp),
            query: query.clone(),
            benchmark_value: outcome.benchmark_value,
            report: outcome.report.clone(),
            options: outcome
                .options
                .iter()
                .enumerate()
                .map(|(rank, o)| OptionRecord::from_option(mdp, rank, o))
                .collect(),
        }
    }
}

/// Solves the benchmark and runs one search. Both front ends go through
/// here, which is what makes their documents byte-identical.
pub fn search_document(mdp: &GridMdp, query: &SearchConfig) -> Result<SearchDocument> {
    let bench = Benchmark::solve(mdp)?;
    let outcome = corridor_search(mdp, &bench.q, query)?;
    Ok(SearchDocument::new(mdp, query, &outcome))
}

/// Benchmark tables of a map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueDocument {
    pub schema: String,
    pub environment: Environment,
    pub method: String,
    pub values: Vec<f64>,
    pub policy: Vec<String>,
    pub q: Vec<Vec<f64>>,
    pub diagnostics: serde_json::Value,
}

impl ValueDocument {
    pub fn new(mdp: &GridMdp, method: &str, q: &QTable, diagnostics: serde_json::Value) -> Self {
        let values = q.state_values();
        Self {
            schema: SOLVE_SCHEMA.into(),
            environment: Environment::from_mdp(mdp),
            method: method.into(),
            values: values.0.clone(),
            policy: (0..q.num_states()).map(|s| q.argmax(s).name()).collect(),
            q: (0..q.num_states()).map(|s| q.row(s).to_vec()).collect(),
            diagnostics,
        }
    }
}

/// `y,x,tile,value,action` rows of a value table.
pub fn values_csv(mdp: &GridMdp, values: &ValueTable, policy: &Policy) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["y", "x", "tile", "value", "action"])?;
    for s in 0..mdp.num_states() {
        let c = coords(mdp, s);
        w.write_record([
            c[0].to_string(),
            c.get(1).copied().unwrap_or(0).to_string(),
            mdp.tile(s).to_char().to_string(),
            values[s].to_string(),
            policy[s].name(),
        ])?;
    }
    csv_text(w)
}

fn csv_text(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub states: Vec<Vec<i64>>,
    pub delta: Vec<bool>,
    pub actions: Vec<String>,
    pub discounted_return: f64,
    pub termination: Termination,
    pub switch_index: Option<usize>,
}

impl TrajectoryRecord {
    pub fn new(mdp: &GridMdp, t: &Trajectory) -> Self {
        Self {
            states: t.states.iter().map(|l| coords(mdp, l.state)).collect(),
            delta: t.states.iter().map(|l| l.delta).collect(),
            actions: t.actions.iter().map(|a| a.name()).collect(),
            discounted_return: t.discounted_return,
            termination: t.termination,
            switch_index: t.switch_index,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateDocument {
    pub schema: String,
    pub environment: Environment,
    pub config: SimConfig,
    pub rows: Vec<ComparisonRow>,
}

/// One CSV row per compared option.
pub fn comparison_csv(rows: &[ComparisonRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "option",
        "ratio",
        "n",
        "successes",
        "success_rate",
        "wilson_low",
        "wilson_high",
        "bound_raw",
        "bound_clamped",
        "mean_return",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in rows {
        let r = &row.report;
        w.write_record([
            r.option_id.clone(),
            row.ratio.to_string(),
            r.n.to_string(),
            r.successes.to_string(),
            r.success_rate.to_string(),
            r.interval.0.to_string(),
            r.interval.1.to_string(),
            opt(r.bound_raw),
            opt(r.bound_clamped),
            r.mean_return.to_string(),
        ])?;
    }
    csv_text(w)
}

/// Plot layer of one option: cells, `S_in`, `S_omega` and arrows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayLayer {
    pub option: String,
    pub corridor: CorridorSpec,
    pub inside: Vec<Vec<i64>>,
    pub edge: Vec<Vec<i64>>,
    pub arrows: Vec<Arrow>,
}

impl From<&OptionRecord> for OverlayLayer {
    fn from(r: &OptionRecord) -> Self {
        Self {
            option: r.id.clone(),
            corridor: r.corridor.clone(),
            inside: r.inside.clone(),
            edge: r.edge.clone(),
            arrows: r.policy.clone(),
        }
    }
}

/// States inside both corridors where the two local policies disagree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffLayer {
    pub a: String,
    pub b: String,
    pub states: Vec<Vec<i64>>,
    pub actions_a: Vec<String>,
    pub actions_b: Vec<String>,
}

impl DiffLayer {
    pub fn new(a: &OptionRecord, b: &OptionRecord) -> Self {
        let mut states = Vec::new();
        let mut actions_a = Vec::new();
        let mut actions_b = Vec::new();
        for arrow in &a.policy {
            if let Some(other) = b.policy.iter().find(|o| o.state == arrow.state) {
                if other.action != arrow.action {
                    states.push(arrow.state.clone());
                    actions_a.push(arrow.action.clone());
                    actions_b.push(other.action.clone());
                }
            }
        }
        Self {
            a: a.id.clone(),
            b: b.id.clone(),
            states,
            actions_a,
            actions_b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderDocument {
    pub schema: String,
    pub environment: Environment,
    pub tiles: Vec<String>,
    pub benchmark_values: Vec<f64>,
    pub overlays: Vec<OverlayLayer>,
    pub diff: Option<DiffLayer>,
}
