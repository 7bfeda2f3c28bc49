//! MDPs on an integer grid: map loading, neighborhoods and the slip model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, MapError, Result};
use crate::mdp::FiniteMdp;

/// A lattice point. For map files this is `(y, x)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridState {
    coords: Vec<i64>,
}

impl GridState {
    pub fn new(coords: Vec<i64>) -> Self {
        Self { coords }
    }

    pub fn yx(y: i64, x: i64) -> Self {
        Self { coords: vec![y, x] }
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn manhattan(&self, other: &GridState) -> u64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }

    /// Copy of `self` displaced by `delta` along `axis`.
    pub fn offset(&self, axis: usize, delta: i64) -> GridState {
        let mut coords = self.coords.clone();
        coords[axis] += delta;
        GridState { coords }
    }
}

impl fmt::Display for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Parses `"y,x"` (any number of comma-separated integers).
impl FromStr for GridState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let coords = s
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')')
            .split(',')
            .map(|part| part.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad state {s:?}: {e}")))?;
        Ok(GridState { coords })
    }
}

/// A unit move along one axis.
///
/// Action `2k` steps `-1` along axis `k` and action `2k + 1` steps `+1`.
/// On a `(y, x)` map that gives north, south, west, east.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(usize);

impl Action {
    pub const NORTH: Action = Action(0);
    pub const SOUTH: Action = Action(1);
    pub const WEST: Action = Action(2);
    pub const EAST: Action = Action(3);

    pub const fn new(id: usize) -> Self {
        Action(id)
    }

    pub fn from_direction(axis: usize, sign: i64) -> Self {
        Action(2 * axis + usize::from(sign > 0))
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn axis(self) -> usize {
        self.0 / 2
    }

    pub fn sign(self) -> i64 {
        if self.0 % 2 == 0 {
            -1
        } else {
            1
        }
    }

    /// Compass letter for 2-D grids, `a<id>` otherwise.
    pub fn name(self) -> String {
        match self.0 {
            0 => "N".into(),
            1 => "S".into(),
            2 => "W".into(),
            3 => "E".into(),
            id => format!("a{id}"),
        }
    }

    pub fn from_name(name: &str) -> Option<Action> {
        match name {
            "N" => Some(Action::NORTH),
            "S" => Some(Action::SOUTH),
            "W" => Some(Action::WEST),
            "E" => Some(Action::EAST),
            other => other.strip_prefix('a')?.parse().ok().map(Action),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tile {
    Start,
    Frozen,
    Hole,
    Goal,
}

impl Tile {
    pub fn from_char(ch: char) -> Option<Tile> {
        match ch {
            'S' => Some(Tile::Start),
            'F' => Some(Tile::Frozen),
            'H' => Some(Tile::Hole),
            'G' => Some(Tile::Goal),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Tile::Start => 'S',
            Tile::Frozen => 'F',
            Tile::Hole => 'H',
            Tile::Goal => 'G',
        }
    }

    pub fn is_absorbing(self) -> bool {
        matches!(self, Tile::Hole | Tile::Goal)
    }
}

/// Extents of a K-dimensional box with row-major state ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridShape {
    extents: Vec<usize>,
    strides: Vec<usize>,
}

impl GridShape {
    pub fn new(extents: Vec<usize>) -> Self {
        let mut strides = vec![1; extents.len()];
        for k in (0..extents.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * extents[k + 1];
        }
        Self { extents, strides }
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn num_states(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn contains(&self, coords: &[i64]) -> bool {
        coords.len() == self.extents.len()
            && coords
                .iter()
                .zip(&self.extents)
                .all(|(&c, &n)| c >= 0 && (c as usize) < n)
    }

    pub fn index_of(&self, state: &GridState) -> Option<usize> {
        self.contains(state.coords()).then(|| {
            state
                .coords()
                .iter()
                .zip(&self.strides)
                .map(|(&c, &s)| c as usize * s)
                .sum()
        })
    }

    pub fn state_of(&self, id: usize) -> GridState {
        let coords = self
            .strides
            .iter()
            .zip(&self.extents)
            .map(|(&s, &n)| ((id / s) % n) as i64)
            .collect();
        GridState::new(coords)
    }
}

fn default_gamma() -> f64 {
    0.95
}
fn default_intended() -> f64 {
    0.9
}
fn default_lateral() -> f64 {
    0.05
}
fn default_cell_d() -> usize {
    2
}
fn default_cell_spacing() -> usize {
    1
}

/// Environment and corridor-geometry parameters read from the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_intended")]
    pub slip_intended: f64,
    #[serde(default = "default_lateral")]
    pub slip_lateral: f64,
    #[serde(default = "default_cell_d")]
    pub cell_d: usize,
    #[serde(default = "default_cell_spacing")]
    pub cell_spacing: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            slip_intended: default_intended(),
            slip_lateral: default_lateral(),
            cell_d: default_cell_d(),
            cell_spacing: default_cell_spacing(),
        }
    }
}

impl GridConfig {
    /// Deterministic moves with the given discount.
    pub fn deterministic(gamma: f64) -> Self {
        Self {
            gamma,
            slip_intended: 1.0,
            slip_lateral: 0.0,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GridConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !unit(self.slip_intended) || !unit(self.slip_lateral) {
            return Err(Error::Config("slip probabilities must lie in [0, 1]".into()));
        }
        if (self.slip_intended + 2.0 * self.slip_lateral - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "slip_intended + 2 * slip_lateral must equal 1, got {}",
                self.slip_intended + 2.0 * self.slip_lateral
            )));
        }
        if self.cell_d < 1 {
            return Err(Error::InvalidCellSize(self.cell_d));
        }
        if self.cell_spacing < 1 {
            return Err(Error::Config("cell_spacing must be at least 1".into()));
        }
        Ok(())
    }
}

/// Successor distribution of one `(state, action)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRow {
    pub entries: Vec<(GridState, f64)>,
}

impl TransitionRow {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn probability(&self, state: &GridState) -> f64 {
        self.entries
            .iter()
            .find(|(s, _)| s == state)
            .map_or(0.0, |(_, p)| *p)
    }
}

/// A stochastic MDP on a grid. Immutable once built.
#[derive(Clone, Debug)]
pub struct GridMdp {
    shape: GridShape,
    tiles: Vec<Tile>,
    start: usize,
    config: GridConfig,
    goal_reward: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

impl GridMdp {
    pub fn new(
        shape: GridShape,
        tiles: Vec<Tile>,
        start: &GridState,
        config: GridConfig,
    ) -> Result<Self> {
        config.validate()?;
        if tiles.len() != shape.num_states() {
            return Err(Error::SizeMismatch {
                expected: shape.num_states(),
                found: tiles.len(),
            });
        }
        let start = shape
            .index_of(start)
            .ok_or_else(|| Error::OutOfBounds(start.to_string()))?;
        let mut mdp = Self {
            shape,
            tiles,
            start,
            config,
            goal_reward: 1.0,
            rows: Vec::new(),
        };
        mdp.rows = (0..mdp.num_states())
            .flat_map(|s| (0..mdp.num_actions()).map(move |a| (s, a)))
            .map(|(s, a)| mdp.build_row(s, Action::new(a)))
            .collect();
        Ok(mdp)
    }

    /// Parses an `S`/`F`/`H`/`G` map.
    pub fn from_text(text: &str, config: GridConfig) -> Result<Self> {
        let (shape, tiles, start) = parse_map(text)?;
        Self::new(shape, tiles, &start, config)
    }

    /// Same MDP with the goal reward multiplied by `scale`.
    pub fn with_reward_scale(mut self, scale: f64) -> Self {
        self.goal_reward *= scale;
        self
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn gamma(&self) -> f64 {
        self.config.gamma
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn start_state(&self) -> GridState {
        self.shape.state_of(self.start)
    }

    pub fn tile(&self, id: usize) -> Tile {
        self.tiles[id]
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn is_absorbing(&self, id: usize) -> bool {
        self.tiles[id].is_absorbing()
    }

    pub fn goals(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.tiles.len()).filter(|&s| self.tiles[s] == Tile::Goal)
    }

    pub fn id(&self, state: &GridState) -> Result<usize> {
        self.shape
            .index_of(state)
            .ok_or_else(|| Error::OutOfBounds(state.to_string()))
    }

    pub fn state(&self, id: usize) -> GridState {
        self.shape.state_of(id)
    }

    /// Successor ids and probabilities, sorted by id.
    pub fn row(&self, id: usize, action: Action) -> &[(usize, f64)] {
        &self.rows[id * self.num_actions() + action.index()]
    }

    /// In-bounds states at Manhattan distance exactly one.
    pub fn neighbors(&self, state: &GridState) -> Result<Vec<GridState>> {
        self.id(state)?;
        let mut out = Vec::with_capacity(2 * self.shape.dim());
        for axis in 0..self.shape.dim() {
            for delta in [-1, 1] {
                let next = state.offset(axis, delta);
                if self.shape.contains(next.coords()) {
                    out.push(next);
                }
            }
        }
        Ok(out)
    }

    pub fn transition_distribution(&self, state: &GridState, action: Action) -> Result<TransitionRow> {
        let id = self.id(state)?;
        if action.index() >= self.num_actions() {
            return Err(Error::InvalidArgument(format!("no action {}", action.index())));
        }
        let entries = self
            .row(id, action)
            .iter()
            .map(|&(next, p)| (self.state(next), p))
            .collect();
        Ok(TransitionRow { entries })
    }

    /// Reward for acting in `state`: the goal pays every step, nothing else does.
    pub fn reward_at(&self, state: &GridState) -> Result<f64> {
        let id = self.id(state)?;
        Ok(self.reward(id, Action::NORTH))
    }

    /// States reachable from `from` under some sequence of actions.
    pub fn reachable_from(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.num_states()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(s) = stack.pop() {
            for a in self.actions() {
                for &(next, _) in self.row(s, a) {
                    if !seen[next] {
                        seen[next] = true;
                        stack.push(next);
                    }
                }
            }
        }
        seen
    }

    /// Map text for 2-D grids, one row per line.
    pub fn to_text(&self) -> String {
        let ext = self.shape.extents();
        assert_eq!(ext.len(), 2, "map text is only defined for 2-D grids");
        let mut out = String::with_capacity(ext[0] * (ext[1] + 1));
        for y in 0..ext[0] {
            for x in 0..ext[1] {
                out.push(self.tiles[y * ext[1] + x].to_char());
            }
            out.push('\n');
        }
        out
    }

    fn build_row(&self, id: usize, action: Action) -> Vec<(usize, f64)> {
        if self.is_absorbing(id) {
            return vec![(id, 1.0)];
        }
        let here = self.state(id);
        let dim = self.shape.dim();
        let mut moves = vec![(action.axis(), action.sign(), self.config.slip_intended)];
        let lateral = self.config.slip_lateral;
        if dim >= 2 {
            let side = (action.axis() + 1) % dim;
            moves.push((side, -1, lateral));
            moves.push((side, 1, lateral));
        } else {
            moves.push((0, 0, 2.0 * lateral));
        }
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
        for (axis, delta, p) in moves {
            if p == 0.0 {
                continue;
            }
            let target = here.offset(axis, delta);
            // Mass blocked by the boundary stays put.
            let next = self.shape.index_of(&target).unwrap_or(id);
            match row.iter_mut().find(|(s, _)| *s == next) {
                Some(entry) => entry.1 += p,
                None => row.push((next, p)),
            }
        }
        row.sort_by_key(|&(s, _)| s);
        row
    }
}

impl FiniteMdp for GridMdp {
    fn num_states(&self) -> usize {
        self.tiles.len()
    }

    fn num_actions(&self) -> usize {
        2 * self.shape.dim()
    }

    fn discount(&self) -> f64 {
        self.config.gamma
    }

    fn reward(&self, state: usize, _action: Action) -> f64 {
        if self.tiles[state] == Tile::Goal {
            self.goal_reward
        } else {
            0.0
        }
    }

    fn for_each_successor<F: FnMut(usize, f64)>(&self, state: usize, action: Action, mut f: F) {
        for &(next, p) in self.row(state, action) {
            f(next, p);
        }
    }
}

/// Parses map text into its shape, tiles and start state.
pub fn parse_map(text: &str) -> Result<(GridShape, Vec<Tile>, GridState), MapError> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect();
    let width = lines.first().ok_or(MapError::Empty)?.chars().count();
    let mut tiles = Vec::with_capacity(lines.len() * width);
    let mut start = None;
    let mut has_goal = false;
    for (row, line) in lines.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(MapError::Ragged {
                row,
                expected: width,
                found,
            });
        }
        for (col, ch) in line.chars().enumerate() {
            let tile = Tile::from_char(ch).ok_or(MapError::UnknownTile { row, col, ch })?;
            match tile {
                Tile::Start if start.is_some() => return Err(MapError::MultipleStarts { row, col }),
                Tile::Start => start = Some(GridState::yx(row as i64, col as i64)),
                Tile::Goal => has_goal = true,
                _ => {}
            }
            tiles.push(tile);
        }
    }
    let start = start.ok_or(MapError::NoStart)?;
    if !has_goal {
        return Err(MapError::NoGoal);
    }
    Ok((GridShape::new(vec![lines.len(), width]), tiles, start))
}
