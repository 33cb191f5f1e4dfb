//! Episodic discrete-action environments behind one contract.

pub mod grid;
pub mod lander;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::ActionId;

pub use grid::{grid_similarity, grid_step, grid_transitions, parse_map, render_map, Cell, GridMap};
pub use lander::{lander_similarity, lander_step, LanderState};

/// What the pilot and copilot see each step.
///
/// `features` is the raw observation vector (gridworld: `[x, y]` of the
/// cell; MiniLander: `[x, y, vx, vy, theta, omega, left, right]`).
/// `cell` is set for discrete environments and keys tabular learners.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub cell: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    /// The episode is over (terminal state or step limit).
    pub done: bool,
    /// The episode ended in an absorbing state; false for step-limit cutoffs.
    pub terminal: bool,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Gridworld,
    Minilander,
}

impl EnvKind {
    pub fn default_discount(self) -> f64 {
        match self {
            EnvKind::Gridworld => 0.95,
            EnvKind::Minilander => 0.99,
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnvKind::Gridworld => "gridworld",
            EnvKind::Minilander => "minilander",
        })
    }
}

/// Declarative environment description, as it appears in run configs and
/// checkpoint headers. A resolved gridworld spec carries its map inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Gridworld {
        /// Map file path; resolved into `map` before use.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        map_file: Option<std::path::PathBuf>,
        /// Inline ASCII map. Defaults to the shipped layout.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        map: Option<String>,
        #[serde(default = "grid_step_limit")]
        step_limit: usize,
    },
    Minilander {
        #[serde(default = "lander_step_limit")]
        step_limit: usize,
    },
}

fn grid_step_limit() -> usize {
    grid::DEFAULT_STEP_LIMIT
}

fn lander_step_limit() -> usize {
    lander::DEFAULT_STEP_LIMIT
}

impl EnvSpec {
    pub fn gridworld() -> Self {
        EnvSpec::Gridworld {
            map_file: None,
            map: None,
            step_limit: grid::DEFAULT_STEP_LIMIT,
        }
    }

    pub fn minilander() -> Self {
        EnvSpec::Minilander {
            step_limit: lander::DEFAULT_STEP_LIMIT,
        }
    }

    pub fn kind(&self) -> EnvKind {
        match self {
            EnvSpec::Gridworld { .. } => EnvKind::Gridworld,
            EnvSpec::Minilander { .. } => EnvKind::Minilander,
        }
    }

    pub fn step_limit(&self) -> usize {
        match self {
            EnvSpec::Gridworld { step_limit, .. } | EnvSpec::Minilander { step_limit } => *step_limit,
        }
    }

    /// Reads any referenced map file and inlines it, so the description is
    /// self-contained.
    pub fn resolve(&self, base_dir: Option<&std::path::Path>) -> Result<Self> {
        match self {
            EnvSpec::Gridworld {
                map_file,
                map,
                step_limit,
            } => {
                if *step_limit == 0 {
                    return Err(Error::config("env.step_limit", "must be positive"));
                }
                let text = match (map_file, map) {
                    (Some(_), Some(_)) => {
                        return Err(Error::config("env", "set at most one of `map_file` and `map`"));
                    }
                    (Some(path), None) => {
                        let path = match base_dir {
                            Some(dir) if path.is_relative() => dir.join(path),
                            _ => path.clone(),
                        };
                        std::fs::read_to_string(&path).map_err(|e| {
                            Error::config("env.map_file", format!("{}: {e}", path.display()))
                        })?
                    }
                    (None, Some(text)) => text.clone(),
                    (None, None) => grid::DEFAULT_MAP.to_string(),
                };
                let parsed = parse_map(&text).map_err(|e| Error::config("env.map", e.to_string()))?;
                Ok(EnvSpec::Gridworld {
                    map_file: None,
                    map: Some(render_map(&parsed)),
                    step_limit: *step_limit,
                })
            }
            EnvSpec::Minilander { step_limit } => {
                if *step_limit == 0 {
                    return Err(Error::config("env.step_limit", "must be positive"));
                }
                Ok(self.clone())
            }
        }
    }

    /// The grid map of a gridworld spec (the shipped map when none is set).
    pub fn grid_map(&self) -> Result<Option<GridMap>> {
        match self {
            EnvSpec::Gridworld { map, map_file, .. } => {
                if map_file.is_some() && map.is_none() {
                    return Err(Error::contract("gridworld spec must be resolved before use"));
                }
                let text = map.as_deref().unwrap_or(grid::DEFAULT_MAP);
                Ok(Some(parse_map(text)?))
            }
            EnvSpec::Minilander { .. } => Ok(None),
        }
    }

    pub fn build(&self, seed: u64) -> Result<Env> {
        Ok(match self {
            EnvSpec::Gridworld { step_limit, .. } => {
                let map = self.grid_map()?.expect("gridworld has a map");
                Env::Grid(GridWorld::new(map, *step_limit, seed))
            }
            EnvSpec::Minilander { step_limit } => Env::Lander(MiniLander::new(*step_limit, seed)),
        })
    }
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    map: GridMap,
    cell: usize,
    steps: usize,
    step_limit: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl GridWorld {
    pub fn new(map: GridMap, step_limit: usize, seed: u64) -> Self {
        let cell = map.start();
        Self {
            map,
            cell,
            steps: 0,
            step_limit,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    fn observe(&self) -> Observation {
        let (x, y) = self.map.coords(self.cell);
        Observation {
            features: vec![x as f64, y as f64],
            cell: Some(self.cell),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MiniLander {
    state: LanderState,
    steps: usize,
    step_limit: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl MiniLander {
    pub fn new(step_limit: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = lander::lander_reset(&mut rng);
        Self {
            state,
            steps: 0,
            step_limit,
            done: false,
            rng,
        }
    }

    pub fn state(&self) -> &LanderState {
        &self.state
    }

    /// Places the lander in an arbitrary state (tests and analyses).
    pub fn set_state(&mut self, state: LanderState) {
        self.state = state;
        self.steps = 0;
        self.done = false;
    }

    fn observe(&self) -> Observation {
        Observation {
            features: self.state.features(),
            cell: None,
        }
    }
}

/// Feature scaling applied before observations reach a function
/// approximator; keeps all inputs O(1).
const LANDER_FEATURE_SCALE: [f64; lander::OBSERVATION_DIM] = [1.0, 1.0, 10.0, 10.0, 1.0, 10.0, 1.0, 1.0];

/// Closed set of environments; static dispatch keeps episode loops cheap.
#[derive(Debug, Clone)]
pub enum Env {
    Grid(GridWorld),
    Lander(MiniLander),
}

impl Env {
    pub fn kind(&self) -> EnvKind {
        match self {
            Env::Grid(_) => EnvKind::Gridworld,
            Env::Lander(_) => EnvKind::Minilander,
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            Env::Grid(_) => grid::ACTION_COUNT,
            Env::Lander(_) => lander::ACTION_COUNT,
        }
    }

    pub fn observation_dim(&self) -> usize {
        match self {
            Env::Grid(_) => 2,
            Env::Lander(_) => lander::OBSERVATION_DIM,
        }
    }

    /// Size of the discrete state space, when there is one.
    pub fn discrete_states(&self) -> Option<usize> {
        match self {
            Env::Grid(g) => Some(g.map.len()),
            Env::Lander(_) => None,
        }
    }

    pub fn step_limit(&self) -> usize {
        match self {
            Env::Grid(g) => g.step_limit,
            Env::Lander(l) => l.step_limit,
        }
    }

    pub fn noop_action(&self) -> Option<ActionId> {
        match self {
            Env::Grid(_) => None,
            Env::Lander(_) => Some(lander::NOOP),
        }
    }

    pub fn similarity(&self, a: ActionId, b: ActionId) -> f64 {
        match self {
            Env::Grid(_) => grid_similarity(a, b),
            Env::Lander(_) => lander_similarity(a, b),
        }
    }

    /// Per-feature scale for function approximators.
    pub fn feature_scale(&self) -> Vec<f64> {
        match self {
            Env::Grid(g) => vec![1.0 / g.map.width() as f64, 1.0 / g.map.height() as f64],
            Env::Lander(_) => LANDER_FEATURE_SCALE.to_vec(),
        }
    }

    pub fn action_name(&self, action: ActionId) -> &'static str {
        match self {
            Env::Grid(_) => grid::action_name(action),
            Env::Lander(_) => lander::action_name(action),
        }
    }

    /// Reseeds the environment's private RNG stream.
    pub fn reseed(&mut self, seed: u64) {
        match self {
            Env::Grid(g) => g.rng = ChaCha8Rng::seed_from_u64(seed),
            Env::Lander(l) => l.rng = ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn reset(&mut self) -> Observation {
        match self {
            Env::Grid(g) => {
                g.cell = g.map.start();
                g.steps = 0;
                g.done = false;
                g.observe()
            }
            Env::Lander(l) => {
                l.state = lander::lander_reset(&mut l.rng);
                l.steps = 0;
                l.done = false;
                l.observe()
            }
        }
    }

    pub fn observation(&self) -> Observation {
        match self {
            Env::Grid(g) => g.observe(),
            Env::Lander(l) => l.observe(),
        }
    }

    pub fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        match self {
            Env::Grid(g) => {
                if g.done {
                    return Err(Error::contract("step after episode end"));
                }
                let (next, reward, terminal) = grid_step(&g.map, g.cell, action, &mut g.rng)?;
                g.cell = next;
                g.steps += 1;
                g.done = terminal || g.steps >= g.step_limit;
                Ok(StepOutcome {
                    observation: g.observe(),
                    reward,
                    done: g.done,
                    terminal,
                    success: terminal,
                })
            }
            Env::Lander(l) => {
                if l.done {
                    return Err(Error::contract("step after episode end"));
                }
                let out = lander_step(&l.state, action, l.steps, l.step_limit)?;
                l.state = out.state;
                l.steps += 1;
                l.done = out.done;
                Ok(StepOutcome {
                    observation: l.observe(),
                    reward: out.reward,
                    done: out.done,
                    terminal: out.done && !out.truncated,
                    success: out.success,
                })
            }
        }
    }

    pub fn as_grid(&self) -> Option<&GridWorld> {
        match self {
            Env::Grid(g) => Some(g),
            Env::Lander(_) => None,
        }
    }

    pub fn as_lander_mut(&mut self) -> Option<&mut MiniLander> {
        match self {
            Env::Lander(l) => Some(l),
            Env::Grid(_) => None,
        }
    }
}
