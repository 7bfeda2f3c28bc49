//! Tabular Q-learning, for the global problem and for corridor-local problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Action, GridMdp};
use crate::mdp::FiniteMdp;
use crate::solver::QTable;

/// Step-size schedule as a function of the per-pair visit count `n >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { rate: f64 },
    /// `initial / sqrt(n)`
    InverseSqrt { initial: f64 },
    /// `initial / n^exponent`
    Polynomial { initial: f64, exponent: f64 },
    /// `1 / (1 + (1 - gamma) * (n - 1))`
    RescaledLinear,
}

impl LearningRate {
    fn rate(&self, visits: u64, gamma: f64) -> f64 {
        let n = visits.max(1) as f64;
        match *self {
            LearningRate::Constant { rate } => rate,
            LearningRate::InverseSqrt { initial } => initial / n.sqrt(),
            LearningRate::Polynomial { initial, exponent } => initial / n.powf(exponent),
            LearningRate::RescaledLinear => 1.0 / (1.0 + (1.0 - gamma) * (n - 1.0)),
        }
    }

    fn initial(&self) -> f64 {
        match *self {
            LearningRate::Constant { rate } => rate,
            LearningRate::InverseSqrt { initial } | LearningRate::Polynomial { initial, .. } => initial,
            LearningRate::RescaledLinear => 1.0,
        }
    }
}

/// Linearly annealed epsilon-greedy exploration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exploration {
    pub start: f64,
    pub end: f64,
    /// Episodes over which epsilon falls from `start` to `end`; the whole
    /// budget when absent.
    #[serde(default)]
    pub decay_episodes: Option<usize>,
}

impl Exploration {
    fn epsilon(&self, episode: usize, budget: usize) -> f64 {
        let span = self.decay_episodes.unwrap_or(budget).max(1) as f64;
        let frac = (episode as f64 / span).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QLearnConfig {
    pub learning_rate: LearningRate,
    pub exploration: Exploration,
    pub max_episodes: usize,
    /// Step cap per episode.
    pub max_steps: usize,
    /// Episodes per convergence window.
    pub window: usize,
    /// Convergence threshold on the largest single update inside a window.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for QLearnConfig {
    fn default() -> Self {
        Self {
            learning_rate: LearningRate::InverseSqrt { initial: 0.1 },
            exploration: Exploration {
                start: 1.0,
                end: 0.05,
                decay_episodes: None,
            },
            max_episodes: 200_000,
            max_steps: 200,
            window: 1_000,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl QLearnConfig {
    /// Budget that brings the bundled 10x10 lake within 0.05 of `Q*` on
    /// reachable states: uniform exploration keeps every pair visited, and the
    /// `1 / (1 + (1 - gamma) n)` step size averages out the slip noise.
    pub fn cross_check(seed: u64) -> Self {
        Self {
            learning_rate: LearningRate::RescaledLinear,
            exploration: Exploration {
                start: 1.0,
                end: 1.0,
                decay_episodes: None,
            },
            max_episodes: 40_000_000,
            max_steps: 50,
            window: 100_000,
            tolerance: 1e-9,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !in_unit(self.learning_rate.initial()) {
            return Err(Error::Config("learning rate must lie in (0, 1]".into()));
        }
        if let LearningRate::Polynomial { exponent, .. } = self.learning_rate {
            if !(exponent > 0.0 && exponent <= 1.0) {
                return Err(Error::Config("learning-rate exponent must lie in (0, 1]".into()));
            }
        }
        let e = &self.exploration;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) {
            return Err(Error::Config("exploration rates must lie in [0, 1]".into()));
        }
        if self.window == 0 || !(self.tolerance > 0.0) {
            return Err(Error::Config("window and tolerance must be positive".into()));
        }
        if self.max_episodes == 0 || self.max_steps == 0 {
            return Err(Error::CapExhausted {
                episodes: 0,
                residual: f64::INFINITY,
            });
        }
        Ok(())
    }
}

/// Outcome of a learning run.
#[derive(Clone, Debug)]
pub struct QLearnRun {
    pub q: QTable,
    /// Whether the window criterion fired before the episode cap.
    pub converged: bool,
    pub episodes: usize,
    pub updates: u64,
    /// Largest single update in the last complete window.
    pub window_change: f64,
}

/// One sampled transition of an episodic task.
pub(crate) struct Step {
    pub reward: f64,
    pub next: usize,
    /// Set when the episode ends at `next`; the value to bootstrap from.
    pub terminal_value: Option<f64>,
}

/// An episodic view of an MDP for the learner.
pub(crate) trait EpisodicTask {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn gamma(&self) -> f64;
    fn sample_start(&self, rng: &mut ChaCha8Rng) -> usize;
    fn step(&self, state: usize, action: Action, rng: &mut ChaCha8Rng) -> Step;
}

pub(crate) fn sample_row(row: &[(usize, f64)], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(next, p) in row {
        acc += p;
        if u < acc {
            return next;
        }
    }
    row.last().expect("transition rows are nonempty").0
}

pub(crate) fn learn<T: EpisodicTask>(task: &T, init: QTable, cfg: &QLearnConfig) -> Result<QLearnRun> {
    cfg.validate()?;
    let gamma = task.gamma();
    let num_actions = task.num_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = init;
    let mut visits = vec![0u64; task.num_states() * num_actions];
    let mut updates = 0u64;
    let mut window_max: f64 = 0.0;
    let mut last_window = f64::INFINITY;

    for episode in 0..cfg.max_episodes {
        let epsilon = cfg.exploration.epsilon(episode, cfg.max_episodes);
        let mut state = task.sample_start(&mut rng);
        for _ in 0..cfg.max_steps {
            let action = if rng.random::<f64>() < epsilon {
                Action::new(rng.random_range(0..num_actions))
            } else {
                q.argmax(state)
            };
            let step = task.step(state, action, &mut rng);
            let bootstrap = step.terminal_value.unwrap_or_else(|| q.max(step.next));
            let target = step.reward + gamma * bootstrap;
            let slot = state * num_actions + action.index();
            visits[slot] += 1;
            let alpha = cfg.learning_rate.rate(visits[slot], gamma);
            let old = q.get(state, action);
            let change = alpha * (target - old);
            q.set(state, action, old + change);
            window_max = window_max.max(change.abs());
            updates += 1;
            if step.terminal_value.is_some() {
                break;
            }
            state = step.next;
        }
        if (episode + 1) % cfg.window == 0 {
            last_window = window_max;
            window_max = 0.0;
            let explored = cfg.exploration.decay_episodes.unwrap_or(cfg.max_episodes) <= episode + 1;
            if last_window < cfg.tolerance && explored {
                return Ok(QLearnRun {
                    q,
                    converged: true,
                    episodes: episode + 1,
                    updates,
                    window_change: last_window,
                });
            }
        }
    }
    Ok(QLearnRun {
        q,
        converged: false,
        episodes: cfg.max_episodes,
        updates,
        window_change: last_window,
    })
}

/// Global task: exploring starts over reachable non-absorbing states; an
/// absorbing successor ends the episode with its closed-form value.
struct GlobalTask<'a> {
    mdp: &'a GridMdp,
    starts: Vec<usize>,
}

impl EpisodicTask for GlobalTask<'_> {
    fn num_states(&self) -> usize {
        self.mdp.num_states()
    }

    fn num_actions(&self) -> usize {
        self.mdp.num_actions()
    }

    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    fn sample_start(&self, rng: &mut ChaCha8Rng) -> usize {
        self.starts[rng.random_range(0..self.starts.len())]
    }

    fn step(&self, state: usize, action: Action, rng: &mut ChaCha8Rng) -> Step {
        let next = sample_row(self.mdp.row(state, action), rng);
        let terminal_value = self
            .mdp
            .is_absorbing(next)
            .then(|| absorbing_value(self.mdp, next));
        Step {
            reward: self.mdp.reward(state, action),
            next,
            terminal_value,
        }
    }
}

/// Value of staying forever in an absorbing state.
pub(crate) fn absorbing_value(mdp: &GridMdp, state: usize) -> f64 {
    mdp.reward(state, Action::NORTH) / (1.0 - mdp.gamma())
}

/// Learns `Q*` of the grid MDP by tabular Q-learning.
pub fn q_learning(mdp: &GridMdp, cfg: &QLearnConfig) -> Result<QLearnRun> {
    let reachable = mdp.reachable_from(mdp.start());
    let mut starts: Vec<usize> = (0..mdp.num_states())
        .filter(|&s| reachable[s] && !mdp.is_absorbing(s))
        .collect();
    if starts.is_empty() {
        starts.push(mdp.start());
    }
    let task = GlobalTask { mdp, starts };
    let init = QTable::zeros(mdp.num_states(), mdp.num_actions(), mdp.gamma());
    let mut run = learn(&task, init, cfg)?;
    for s in (0..mdp.num_states()).filter(|&s| mdp.is_absorbing(s)) {
        let v = absorbing_value(mdp, s);
        run.q.row_mut(s).fill(v);
    }
    Ok(run)
}
