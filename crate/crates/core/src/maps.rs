//! Bundled environments and random map generation for tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corridor::{extend_corridor, partition_states, terminal_edges, Corridor, Partition};
use crate::error::Result;
use crate::grid::{GridConfig, GridMdp, GridState};

/// 10x10 lake with the start in the top-left corner and the goal in the
/// bottom-right. Searched with 5x5 abutting cells this has exactly one option
/// at `epsilon = 0.99` and more at `0.90`.
pub const LAKE10: &str = include_str!("../../../maps/lake10.txt");
pub const LAKE10_CONFIG: &str = include_str!("../../../maps/lake10.json");

/// Deterministic 4x4 lake without holes.
pub const OPEN4: &str = include_str!("../../../maps/open4.txt");
pub const OPEN4_CONFIG: &str = include_str!("../../../maps/open4.json");

/// Corridor parameters of the bundled lake search.
pub const LAKE10_CELLS: usize = 5;

pub fn lake10() -> Result<GridMdp> {
    GridMdp::from_text(LAKE10, GridConfig::from_json(LAKE10_CONFIG)?)
}

pub fn open4() -> Result<GridMdp> {
    GridMdp::from_text(OPEN4, GridConfig::from_json(OPEN4_CONFIG)?)
}

/// Map text with `S` at the top-left, `G` at the bottom-right and each other
/// tile a hole with probability `hole_rate`.
pub fn random_map_text(rows: usize, cols: usize, hole_rate: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::with_capacity(rows * (cols + 1));
    for y in 0..rows {
        for x in 0..cols {
            let tile = if (y, x) == (0, 0) {
                'S'
            } else if (y, x) == (rows - 1, cols - 1) {
                'G'
            } else if rng.random::<f64>() < hole_rate {
                'H'
            } else {
                'F'
            };
            out.push(tile);
        }
        if y + 1 < rows {
            out.push('\n');
        }
    }
    out
}

/// A random map with a random corridor on it, for property suites.
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub seed: u64,
    pub mdp: GridMdp,
    pub corridor: Corridor,
    pub partition: Partition,
}

/// Draws a map of at most `max_side` x `max_side` states (20% holes, gamma
/// 0.9 or 0.95, slippery three times out of four) and a corridor of 1 to 3
/// cells grown from a random non-hole state with random faces.
pub fn random_instance(seed: u64, max_side: usize) -> Result<RandomInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_side = max_side.max(2);
    let rows = rng.random_range(2..=max_side);
    let cols = rng.random_range(2..=max_side);
    let text = random_map_text(rows, cols, 0.2, rng.random());
    let gamma = if rng.random_bool(0.5) { 0.9 } else { 0.95 };
    let config = if rng.random_bool(0.75) {
        GridConfig {
            gamma,
            ..GridConfig::default()
        }
    } else {
        GridConfig::deterministic(gamma)
    };
    let mdp = GridMdp::from_text(&text, config)?;
    let shape = mdp.shape();
    let free: Vec<usize> = (0..shape.num_states()).filter(|&s| !mdp.is_absorbing(s)).collect();
    loop {
        // Cells covering the whole grid have no face; draw again.
        let start = shape.state_of(free[rng.random_range(0..free.len())]);
        let d = rng.random_range(1..=2);
        let spacing = rng.random_range(1..=2 * d + 1);
        let cells = rng.random_range(1..=3);
        if let Some(corridor) = grow_corridor(&mdp, &start, d, spacing, cells, &mut rng)? {
            let partition = partition_states(shape, &corridor)?;
            return Ok(RandomInstance {
                seed,
                mdp,
                corridor,
                partition,
            });
        }
    }
}

fn grow_corridor(
    mdp: &GridMdp,
    start: &GridState,
    d: usize,
    spacing: usize,
    cells: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Corridor>> {
    let shape = mdp.shape();
    let mut corridor = Corridor::starting_at(shape, start, d)?;
    while corridor.len() < cells {
        let grown: Vec<Corridor> = terminal_edges(shape, corridor.last())
            .iter()
            .filter_map(|e| extend_corridor(shape, &corridor, e, spacing).ok())
            .filter(|c| !corridor.contains_cell(c.last()))
            .collect();
        if grown.is_empty() {
            break;
        }
        corridor = grown[rng.random_range(0..grown.len())].clone();
    }
    let faces = terminal_edges(shape, corridor.last());
    if faces.is_empty() {
        return Ok(None);
    }
    let face = faces[rng.random_range(0..faces.len())].direction();
    Ok(Some(corridor.with_edge(face)))
}
