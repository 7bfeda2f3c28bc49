//! Cells, terminal edges, continuous corridors and the
//! `(S_in, S_omega, S_out)` state partition they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, GridState};

/// Axis and sign of a cell face, `(k, alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Direction {
    pub k: usize,
    pub alpha: i64,
}

impl Direction {
    pub fn new(k: usize, alpha: i64) -> Self {
        Self { k, alpha }
    }

    pub fn opposite(self) -> Self {
        Self {
            k: self.k,
            alpha: -self.alpha,
        }
    }

    /// All `2K` faces, `k` ascending and `-1` before `+1`.
    pub fn all(dim: usize) -> impl Iterator<Item = Direction> {
        (0..dim).flat_map(|k| [-1, 1].map(|alpha| Direction { k, alpha }))
    }

    /// Compass name on 2-D grids.
    pub fn name(self) -> &'static str {
        match (self.k, self.alpha) {
            (0, -1) => "N",
            (0, 1) => "S",
            (1, -1) => "W",
            (1, 1) => "E",
            _ => "?",
        }
    }
}

/// Axis-aligned block of half-width `d` around `center`, clipped to the grid.
///
/// The center itself may sit off the grid when the clipped block is not empty
/// (extensions near the boundary produce such cells).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    center: GridState,
    d: usize,
    members: Vec<usize>,
}

impl Cell {
    /// Cell around an in-bounds center.
    pub fn new(shape: &GridShape, center: GridState, d: usize) -> Result<Cell> {
        if d < 1 {
            return Err(Error::InvalidCellSize(d));
        }
        if !shape.contains(center.coords()) {
            return Err(Error::OutOfBounds(center.to_string()));
        }
        Cell::clipped(shape, center, d)
    }

    /// Cell whose center may be off-grid; fails if nothing survives clipping.
    pub fn clipped(shape: &GridShape, center: GridState, d: usize) -> Result<Cell> {
        if d < 1 {
            return Err(Error::InvalidCellSize(d));
        }
        if center.dim() != shape.dim() {
            return Err(Error::InvalidArgument(format!(
                "center {center} has {} coordinates, grid has {}",
                center.dim(),
                shape.dim()
            )));
        }
        let d_i = d as i64;
        let ranges: Vec<(i64, i64)> = center
            .coords()
            .iter()
            .zip(shape.extents())
            .map(|(&c, &n)| ((c - d_i).max(0), (c + d_i).min(n as i64 - 1)))
            .collect();
        if ranges.iter().any(|(lo, hi)| lo > hi) {
            return Err(Error::OffGrid);
        }
        let mut members = Vec::new();
        let mut point: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            members.push(shape.index_of(&GridState::new(point.clone())).expect("clipped"));
            for k in (0..point.len()).rev() {
                if point[k] < ranges[k].1 {
                    point[k] += 1;
                    for (j, p) in point.iter_mut().enumerate().skip(k + 1) {
                        *p = ranges[j].0;
                    }
                    continue 'outer;
                }
            }
            break;
        }
        members.sort_unstable();
        Ok(Cell { center, d, members })
    }

    pub fn center(&self) -> &GridState {
        &self.center
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Member state ids, ascending.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, id: usize) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    /// The face in `dir`, or `None` when clipping removed it entirely.
    pub fn edge(&self, shape: &GridShape, dir: Direction) -> Option<TerminalEdge> {
        let target = self.center.coords()[dir.k] + dir.alpha * self.d as i64;
        let members: Vec<usize> = self
            .members
            .iter()
            .copied()
            .filter(|&s| shape.state_of(s).coords()[dir.k] == target)
            .collect();
        (!members.is_empty()).then(|| TerminalEdge {
            parent_center: self.center.clone(),
            d: self.d,
            direction: dir,
            members,
        })
    }
}

/// Builds the cell of half-width `d` around an in-bounds `center`.
pub fn make_cell(shape: &GridShape, center: GridState, d: usize) -> Result<Cell> {
    Cell::new(shape, center, d)
}

/// One face of a cell: `{s in c | s[k] - center[k] = alpha * d}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TerminalEdge {
    parent_center: GridState,
    d: usize,
    direction: Direction,
    members: Vec<usize>,
}

impl TerminalEdge {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn parent_center(&self) -> &GridState {
        &self.parent_center
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    fn belongs_to(&self, cell: &Cell) -> bool {
        self.parent_center == cell.center && self.d == cell.d
    }
}

/// Nonempty faces of `cell` in deterministic order.
pub fn terminal_edges(shape: &GridShape, cell: &Cell) -> Vec<TerminalEdge> {
    Direction::all(shape.dim())
        .filter_map(|dir| cell.edge(shape, dir))
        .collect()
}

/// Distinct cells with at least one pair of neighboring members.
pub fn cells_adjacent(shape: &GridShape, a: &Cell, b: &Cell) -> bool {
    if a.members == b.members {
        return false;
    }
    a.members.iter().any(|&s| {
        let here = shape.state_of(s);
        (0..shape.dim()).any(|k| {
            [-1, 1].into_iter().any(|delta| {
                shape
                    .index_of(&here.offset(k, delta))
                    .is_some_and(|n| b.contains(n))
            })
        })
    })
}

/// An ordered chain of adjacent cells, optionally with a chosen face of the
/// last cell as its terminal edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Corridor {
    cells: Vec<Cell>,
    edge: Option<Direction>,
}

impl Corridor {
    /// Single-cell corridor around `start`.
    pub fn starting_at(shape: &GridShape, start: &GridState, d: usize) -> Result<Corridor> {
        Ok(Corridor {
            cells: vec![Cell::new(shape, start.clone(), d)?],
            edge: None,
        })
    }

    /// Checks chain adjacency and that the edge is a nonempty face of the last cell.
    pub fn from_cells(shape: &GridShape, cells: Vec<Cell>, edge: Option<Direction>) -> Result<Corridor> {
        if cells.is_empty() {
            return Err(Error::InvalidArgument("a corridor needs at least one cell".into()));
        }
        for pair in cells.windows(2) {
            if !cells_adjacent(shape, &pair[0], &pair[1]) {
                return Err(Error::InvalidArgument(format!(
                    "cells centered at {} and {} are not adjacent",
                    pair[0].center, pair[1].center
                )));
            }
        }
        let corridor = Corridor { cells, edge };
        if let Some(dir) = edge {
            if dir.k >= shape.dim() || dir.alpha.abs() != 1 || corridor.last().edge(shape, dir).is_none() {
                return Err(Error::InvalidArgument(format!("no terminal edge {dir:?} on the last cell")));
            }
        }
        Ok(corridor)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn last(&self) -> &Cell {
        self.cells.last().expect("corridors are nonempty")
    }

    pub fn edge_direction(&self) -> Option<Direction> {
        self.edge
    }

    pub fn with_edge(&self, dir: Direction) -> Corridor {
        Corridor {
            cells: self.cells.clone(),
            edge: Some(dir),
        }
    }

    pub fn terminal_edge(&self, shape: &GridShape) -> Option<TerminalEdge> {
        self.edge.and_then(|dir| self.last().edge(shape, dir))
    }

    /// Union of the member sets, ascending.
    pub fn union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.cells.iter().flat_map(|c| c.members.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    pub fn contains_cell(&self, cell: &Cell) -> bool {
        self.cells.iter().any(|c| c.members == cell.members)
    }

    /// Key identifying the local problem: the cell union and the edge members.
    pub fn local_key(&self, shape: &GridShape) -> Option<LocalKey> {
        let edge = self.terminal_edge(shape)?;
        Some(LocalKey {
            union: self.union(),
            edge: edge.members,
        })
    }

    pub fn to_spec(&self) -> CorridorSpec {
        CorridorSpec {
            cells: self
                .cells
                .iter()
                .map(|c| CellSpec {
                    center: c.center.coords().to_vec(),
                    d: c.d,
                })
                .collect(),
            edge: self.edge,
        }
    }

    pub fn from_spec(shape: &GridShape, spec: &CorridorSpec) -> Result<Corridor> {
        let cells = spec
            .cells
            .iter()
            .map(|c| Cell::clipped(shape, GridState::new(c.center.clone()), c.d))
            .collect::<Result<Vec<_>>>()?;
        Corridor::from_cells(shape, cells, spec.edge)
    }
}

/// Identity of a local problem, used for deduplication.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalKey {
    pub union: Vec<usize>,
    pub edge: Vec<usize>,
}

/// Serialized corridor: `{"cells": [{"center": [y, x], "d": n}], "edge": {"k": 0, "alpha": -1}}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorridorSpec {
    pub cells: Vec<CellSpec>,
    pub edge: Option<Direction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSpec {
    pub center: Vec<i64>,
    pub d: usize,
}

/// Appends the cell displaced by `spacing` from the last cell through `edge`.
pub fn extend_corridor(
    shape: &GridShape,
    corridor: &Corridor,
    edge: &TerminalEdge,
    spacing: usize,
) -> Result<Corridor> {
    let last = corridor.last();
    if !edge.belongs_to(last) {
        return Err(Error::InvalidArgument("edge does not belong to the last cell".into()));
    }
    let dir = edge.direction;
    let center = last.center.offset(dir.k, dir.alpha * spacing as i64);
    let cell = Cell::clipped(shape, center, last.d)?;
    if !cells_adjacent(shape, last, &cell) && cell.members != last.members {
        return Err(Error::InvalidArgument(format!(
            "spacing {spacing} leaves a gap between cells of half-width {}",
            last.d
        )));
    }
    let mut cells = corridor.cells.clone();
    cells.push(cell);
    Ok(Corridor { cells, edge: None })
}

/// Region of a state relative to a corridor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Inside,
    Edge,
    Outside,
}

/// The disjoint split `S_in`, `S_omega`, `S_out` of every state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    regions: Vec<Region>,
}

impl Partition {
    /// Builds from explicit `S_in` and `S_omega`; an id in both goes to `S_omega`.
    pub fn from_sets(num_states: usize, inside: &[usize], edge: &[usize]) -> Partition {
        let mut regions = vec![Region::Outside; num_states];
        for &s in inside {
            regions[s] = Region::Inside;
        }
        for &s in edge {
            regions[s] = Region::Edge;
        }
        Partition { regions }
    }

    pub fn from_regions(regions: Vec<Region>) -> Partition {
        Partition { regions }
    }

    pub fn region(&self, s: usize) -> Region {
        self.regions[s]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn num_states(&self) -> usize {
        self.regions.len()
    }

    pub fn is_inside(&self, s: usize) -> bool {
        self.regions[s] == Region::Inside
    }

    pub fn is_edge(&self, s: usize) -> bool {
        self.regions[s] == Region::Edge
    }

    fn collect(&self, region: Region) -> Vec<usize> {
        (0..self.regions.len()).filter(|&s| self.regions[s] == region).collect()
    }

    pub fn inside(&self) -> Vec<usize> {
        self.collect(Region::Inside)
    }

    pub fn edge(&self) -> Vec<usize> {
        self.collect(Region::Edge)
    }

    pub fn outside(&self) -> Vec<usize> {
        self.collect(Region::Outside)
    }
}

/// Partition induced by a corridor with a chosen terminal edge.
pub fn partition_states(shape: &GridShape, corridor: &Corridor) -> Result<Partition> {
    let edge = corridor
        .terminal_edge(shape)
        .ok_or_else(|| Error::InvalidArgument("corridor has no terminal edge".into()))?;
    Ok(Partition::from_sets(shape.num_states(), &corridor.union(), edge.members()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> GridShape {
        GridShape::new(vec![n, n])
    }

    #[test]
    fn cell_sizes() {
        let g = square(10);
        assert_eq!(make_cell(&g, GridState::yx(2, 2), 1).unwrap().members().len(), 9);
        assert_eq!(make_cell(&g, GridState::yx(0, 0), 1).unwrap().members().len(), 4);
        assert_eq!(make_cell(&g, GridState::yx(5, 5), 2).unwrap().members().len(), 25);
        assert!(matches!(make_cell(&g, GridState::yx(5, 5), 0), Err(Error::InvalidCellSize(0))));
    }

    #[test]
    fn edges_of_interior_and_clipped_cells() {
        let g = square(10);
        let interior = make_cell(&g, GridState::yx(5, 5), 1).unwrap();
        let dirs: Vec<_> = terminal_edges(&g, &interior).iter().map(|e| e.direction()).collect();
        assert_eq!(
            dirs,
            vec![Direction::new(0, -1), Direction::new(0, 1), Direction::new(1, -1), Direction::new(1, 1)]
        );
        for e in terminal_edges(&g, &interior) {
            assert_eq!(e.members().len(), 3);
        }
        // The north face of a cell centered on row 0 would be row -1.
        let top = make_cell(&g, GridState::yx(0, 5), 1).unwrap();
        let dirs: Vec<_> = terminal_edges(&g, &top).iter().map(|e| e.direction()).collect();
        assert!(!dirs.contains(&Direction::new(0, -1)));
        assert_eq!(dirs.len(), 3);
        // With the center one row below the top, the north face survives.
        let near_top = make_cell(&g, GridState::yx(1, 5), 1).unwrap();
        assert_eq!(terminal_edges(&g, &near_top).len(), 4);

        let line = GridShape::new(vec![7]);
        let c = make_cell(&line, GridState::new(vec![3]), 1).unwrap();
        assert_eq!(terminal_edges(&line, &c).len(), 2);
    }

    #[test]
    fn adjacency() {
        let g = square(10);
        let a = make_cell(&g, GridState::yx(2, 2), 1).unwrap();
        let overlapping = make_cell(&g, GridState::yx(2, 3), 1).unwrap();
        let abutting = make_cell(&g, GridState::yx(2, 5), 1).unwrap();
        let gapped = make_cell(&g, GridState::yx(2, 7), 1).unwrap();
        assert!(cells_adjacent(&g, &a, &overlapping));
        assert!(cells_adjacent(&g, &a, &abutting));
        assert!(!cells_adjacent(&g, &a, &a.clone()));
        assert!(!cells_adjacent(&g, &a, &gapped));
    }

    #[test]
    fn extension() {
        let g = square(10);
        let corr = Corridor::starting_at(&g, &GridState::yx(2, 2), 1).unwrap();
        let east = corr.last().edge(&g, Direction::new(1, 1)).unwrap();
        let once = extend_corridor(&g, &corr, &east, 1).unwrap();
        assert_eq!(once.last().center(), &GridState::yx(2, 3));
        let east2 = once.last().edge(&g, Direction::new(1, 1)).unwrap();
        let twice = extend_corridor(&g, &once, &east2, 1).unwrap();
        let centers: Vec<_> = twice.cells().iter().map(|c| c.center().clone()).collect();
        assert_eq!(centers, vec![GridState::yx(2, 2), GridState::yx(2, 3), GridState::yx(2, 4)]);

        let corner = Corridor::starting_at(&g, &GridState::yx(0, 0), 1).unwrap();
        let south = corner.last().edge(&g, Direction::new(0, 1)).unwrap();
        let far = extend_corridor(&g, &corner, &south, 3).unwrap();
        assert_eq!(far.last().center(), &GridState::yx(3, 0));
        let edge_of_grid = make_cell(&g, GridState::yx(8, 8), 1).unwrap();
        let corr = Corridor::from_cells(&g, vec![edge_of_grid], None).unwrap();
        let se = corr.last().edge(&g, Direction::new(0, 1)).unwrap();
        assert!(matches!(extend_corridor(&g, &corr, &se, 3), Err(Error::OffGrid)));
        // Edges from another cell are rejected.
        assert!(extend_corridor(&g, &far, &south, 1).is_err());
    }

    #[test]
    fn partition_of_single_cell() {
        let g = square(10);
        let corr = Corridor::starting_at(&g, &GridState::yx(4, 4), 1)
            .unwrap()
            .with_edge(Direction::new(1, 1));
        let p = partition_states(&g, &corr).unwrap();
        assert_eq!(p.inside().len() + p.edge().len(), 9);
        assert_eq!(p.edge().len(), 3);
        assert_eq!(p.outside().len(), 91);
    }

    #[test]
    fn partition_covering_everything() {
        let g = square(3);
        let corr = Corridor::starting_at(&g, &GridState::yx(1, 1), 1)
            .unwrap()
            .with_edge(Direction::new(1, 1));
        let p = partition_states(&g, &corr).unwrap();
        assert!(p.outside().is_empty());
        assert!(partition_states(&g, &Corridor::starting_at(&g, &GridState::yx(1, 1), 1).unwrap()).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let g = square(10);
        let corr = Corridor::starting_at(&g, &GridState::yx(0, 0), 3).unwrap();
        let e = corr.last().edge(&g, Direction::new(1, 1)).unwrap();
        let corr = extend_corridor(&g, &corr, &e, 3).unwrap().with_edge(Direction::new(0, 1));
        let json = serde_json::to_string(&corr.to_spec()).unwrap();
        assert_eq!(
            json,
            r#"{"cells":[{"center":[0,0],"d":3},{"center":[0,3],"d":3}],"edge":{"k":0,"alpha":1}}"#
        );
        let back = Corridor::from_spec(&g, &serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, corr);
    }
}
