//! Simulated pilots: the policies standing in for a human operator.
//!
//! Pilots may carry episode memory (the laggy pilot remembers the last
//! executed action) and private RNG streams. The runner drives them through
//! [`Pilot::act`], then reports what was actually executed through
//! [`Pilot::observe_executed`], since the copilot may have overridden the
//! pilot's suggestion.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::grid::{self, GridMap};
use crate::env::{lander, Env, EnvKind, Observation};
use crate::error::{Error, ParseError, Result};
use crate::learners::{EncodingSpec, QFunction};
use crate::mdp::ActionId;
use crate::rng::{derive_seed, stream};

pub trait Pilot: Send {
    /// The pilot's proposed action for the current observation.
    fn act(&mut self, obs: &Observation) -> Result<ActionId>;

    /// Feedback of the action the environment actually executed.
    fn observe_executed(&mut self, _action: ActionId) {}

    /// Clears all episode memory.
    fn reset(&mut self);

    /// Restarts the pilot's random streams.
    fn reseed(&mut self, _seed: u64) {}

    /// Name plus parameters, e.g. `laggy(p_repeat=0.8, base=optimal)`.
    fn descriptor(&self) -> String;
}

/// Always sends the environment's no-op action.
#[derive(Debug, Clone)]
pub struct NoopPilot {
    noop: ActionId,
}

impl NoopPilot {
    pub fn new(env: &Env) -> Result<Self> {
        let noop = env
            .noop_action()
            .ok_or_else(|| Error::config("pilot", format!("{} has no no-op action", env.kind())))?;
        Ok(Self { noop })
    }
}

impl Pilot for NoopPilot {
    fn act(&mut self, _obs: &Observation) -> Result<ActionId> {
        Ok(self.noop)
    }

    fn reset(&mut self) {}

    fn descriptor(&self) -> String {
        "noop".into()
    }
}

/// Half-width of the band around the pad centre where the sensor pilot idles.
pub const SENSOR_BAND: f64 = 0.1;

/// MiniLander heuristic: fire the left engine (pushing right) when left of
/// the pad, the right engine when right of it, nothing inside the closed
/// band `[-0.1, 0.1]`.
#[derive(Debug, Clone, Default)]
pub struct SensorPilot;

impl SensorPilot {
    pub fn new(env: &Env) -> Result<Self> {
        if env.kind() != EnvKind::Minilander {
            return Err(Error::config("pilot", "sensor pilot requires minilander"));
        }
        Ok(Self)
    }

    pub fn decide(x: f64) -> ActionId {
        if x < -SENSOR_BAND {
            lander::LEFT
        } else if x > SENSOR_BAND {
            lander::RIGHT
        } else {
            lander::NOOP
        }
    }
}

impl Pilot for SensorPilot {
    fn act(&mut self, obs: &Observation) -> Result<ActionId> {
        let x = *obs
            .features
            .first()
            .ok_or_else(|| Error::contract("sensor pilot needs an x coordinate"))?;
        Ok(Self::decide(x))
    }

    fn reset(&mut self) {}

    fn descriptor(&self) -> String {
        "sensor".into()
    }
}

/// Per-cell arrows of a scripted gridworld policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyMap {
    width: usize,
    height: usize,
    arrows: Vec<Option<ActionId>>,
}

impl PolicyMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn arrow(&self, cell: usize) -> Option<ActionId> {
        self.arrows.get(cell).copied().flatten()
    }

    /// Checks the policy against a map: same shape, and an arrow on every
    /// reachable non-terminal cell.
    pub fn check_against(&self, map: &GridMap) -> Result<()> {
        if self.width != map.width() || self.height != map.height() {
            return Err(Error::config(
                "pilot.policy",
                format!(
                    "policy is {}x{} but the map is {}x{}",
                    self.width,
                    self.height,
                    map.width(),
                    map.height()
                ),
            ));
        }
        let reachable = map.reachable();
        for cell in 0..map.len() {
            if reachable[cell] && !map.is_terminal(cell) && self.arrows[cell].is_none() {
                let (x, y) = map.coords(cell);
                return Err(Error::config(
                    "pilot.policy",
                    format!("no arrow for reachable cell at row {y}, column {x}"),
                ));
            }
        }
        Ok(())
    }
}

/// Parses `U D L R` arrows; `.`, `·`, `#` and `G` mark cells without one.
pub fn parse_policy(text: &str) -> std::result::Result<PolicyMap, ParseError> {
    let rows = grid::trim_trailing_blank(text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect());
    if rows.is_empty() {
        return Err(ParseError::line(0, "empty policy"));
    }
    let mut width = None;
    let mut arrows = Vec::new();
    for (y, row) in rows.iter().enumerate() {
        let mut count = 0;
        for (x, ch) in row.chars().enumerate() {
            arrows.push(match ch {
                'U' => Some(grid::UP),
                'R' => Some(grid::RIGHT),
                'D' => Some(grid::DOWN),
                'L' => Some(grid::LEFT),
                '.' | '·' | '#' | 'G' => None,
                other => return Err(ParseError::at(y, x, format!("unexpected character {other:?}"))),
            });
            count += 1;
        }
        match width {
            None if count == 0 => return Err(ParseError::line(y, "empty row")),
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(ParseError::line(y, format!("ragged row: {count} cells, expected {w}")));
            }
            _ => {}
        }
    }
    Ok(PolicyMap {
        width: width.unwrap_or(0),
        height: rows.len(),
        arrows,
    })
}

pub fn render_policy(policy: &PolicyMap) -> String {
    let mut out = String::with_capacity((policy.width + 1) * policy.height);
    for y in 0..policy.height {
        for x in 0..policy.width {
            out.push(match policy.arrows[y * policy.width + x] {
                Some(grid::UP) => 'U',
                Some(grid::RIGHT) => 'R',
                Some(grid::DOWN) => 'D',
                Some(grid::LEFT) => 'L',
                _ => '.',
            });
        }
        out.push('\n');
    }
    out
}

pub const DEFAULT_POLICY: &str = include_str!("../data/default_policy.txt");

/// Deterministic table lookup of the arrow at the current cell.
#[derive(Debug, Clone)]
pub struct ScriptedGridPilot {
    policy: PolicyMap,
}

impl ScriptedGridPilot {
    pub fn new(policy: PolicyMap, map: &GridMap) -> Result<Self> {
        policy.check_against(map)?;
        Ok(Self { policy })
    }

    pub fn default_for(map: &GridMap) -> Result<Self> {
        Self::new(parse_policy(DEFAULT_POLICY)?, map)
    }

    pub fn policy(&self) -> &PolicyMap {
        &self.policy
    }
}

impl Pilot for ScriptedGridPilot {
    fn act(&mut self, obs: &Observation) -> Result<ActionId> {
        let cell = obs.cell.ok_or_else(|| Error::contract("scripted pilot needs a grid cell"))?;
        self.policy
            .arrow(cell)
            .ok_or_else(|| Error::contract(format!("policy has no arrow at cell {cell}")))
    }

    fn reset(&mut self) {}

    fn descriptor(&self) -> String {
        "scripted".into()
    }
}

/// Greedy policy of a trained, unassisted agent.
#[derive(Debug, Clone)]
pub struct OptimalPilot {
    q: QFunction,
    encoding: EncodingSpec,
}

impl OptimalPilot {
    pub fn new(q: QFunction, encoding: EncodingSpec) -> Result<Self> {
        if encoding.human_actions.is_some() || encoding.budget_cap.is_some() {
            return Err(Error::config("pilot", "optimal pilot needs an unassisted agent's value function"));
        }
        Ok(Self { q, encoding })
    }
}

impl Pilot for OptimalPilot {
    fn act(&mut self, obs: &Observation) -> Result<ActionId> {
        self.q.greedy(&self.encoding.encode(obs, None, None)?)
    }

    fn reset(&mut self) {}

    fn descriptor(&self) -> String {
        "optimal".into()
    }
}

/// Repeats the last executed action with probability `p_repeat`.
pub struct LaggyPilot {
    base: Box<dyn Pilot>,
    p_repeat: f64,
    last_executed: Option<ActionId>,
    rng: ChaCha8Rng,
}

impl LaggyPilot {
    pub fn new(base: Box<dyn Pilot>, p_repeat: f64, seed: u64) -> Self {
        Self {
            base,
            p_repeat,
            last_executed: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Pilot for LaggyPilot {
    fn act(&mut self, obs: &Observation) -> Result<ActionId> {
        // The base is always queried so its own streams stay aligned.
        let proposal = self.base.act(obs)?;
        match self.last_executed {
            Some(prev) if self.rng.gen::<f64>() < self.p_repeat => Ok(prev),
            _ => Ok(proposal),
        }
    }

    fn observe_executed(&mut self, action: ActionId) {
        self.last_executed = Some(action);
        self.base.observe_executed(action);
    }

    fn reset(&mut self) {
        self.last_executed = None;
        self.base.reset();
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.base.reseed(derive_seed(seed, stream::WRAPPER, 0));
    }

    fn descriptor(&self) -> String {
        format!("laggy(p_repeat={}, base={})", self.p_repeat, self.base.descriptor())
    }
}

/// Substitutes a uniformly random action with probability `p_random`.
pub struct NoisyPilot {
    base: Box<dyn Pilot>,
    p_random: f64,
    actions: usize,
    rng: ChaCha8Rng,
}

impl NoisyPilot {
    pub fn new(base: Box<dyn Pilot>, p_random: f64, actions: usize, seed: u64) -> Self {
        Self {
            base,
            p_random,
            actions,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Pilot for NoisyPilot {
    fn act(&mut self, obs: &Observation) -> Result<ActionId> {
        let proposal = self.base.act(obs)?;
        if self.rng.gen::<f64>() < self.p_random {
            Ok(self.rng.gen_range(0..self.actions))
        } else {
            Ok(proposal)
        }
    }

    fn observe_executed(&mut self, action: ActionId) {
        self.base.observe_executed(action);
    }

    fn reset(&mut self) {
        self.base.reset();
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.base.reseed(derive_seed(seed, stream::WRAPPER, 0));
    }

    fn descriptor(&self) -> String {
        format!("noisy(p_random={}, base={})", self.p_random, self.base.descriptor())
    }
}

/// Declarative pilot description used in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PilotSpec {
    Noop,
    Sensor,
    Scripted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy_file: Option<PathBuf>,
        /// Inline policy text; defaults to the shipped policy.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy: Option<String>,
    },
    /// Greedy agent loaded from an unassisted-agent checkpoint.
    Optimal { checkpoint: PathBuf },
    Laggy {
        base: Box<PilotSpec>,
        #[serde(default = "default_p_repeat")]
        p_repeat: f64,
    },
    Noisy {
        base: Box<PilotSpec>,
        #[serde(default = "default_p_random")]
        p_random: f64,
    },
}

fn default_p_repeat() -> f64 {
    0.8
}

fn default_p_random() -> f64 {
    0.25
}

impl PilotSpec {
    pub fn scripted() -> Self {
        PilotSpec::Scripted {
            policy_file: None,
            policy: None,
        }
    }

    /// Inlines policy files and makes checkpoint paths absolute against
    /// `base_dir`; checks probabilities.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<Self> {
        let rebase = |p: &PathBuf| match base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        };
        Ok(match self {
            PilotSpec::Noop | PilotSpec::Sensor => self.clone(),
            PilotSpec::Scripted { policy_file, policy } => {
                let text = match (policy_file, policy) {
                    (Some(_), Some(_)) => {
                        return Err(Error::config("pilot", "set at most one of `policy_file` and `policy`"));
                    }
                    (Some(path), None) => {
                        let path = rebase(path);
                        std::fs::read_to_string(&path)
                            .map_err(|e| Error::config("pilot.policy_file", format!("{}: {e}", path.display())))?
                    }
                    (None, Some(text)) => text.clone(),
                    (None, None) => DEFAULT_POLICY.to_string(),
                };
                let parsed = parse_policy(&text).map_err(|e| Error::config("pilot.policy", e.to_string()))?;
                PilotSpec::Scripted {
                    policy_file: None,
                    policy: Some(render_policy(&parsed)),
                }
            }
            PilotSpec::Optimal { checkpoint } => PilotSpec::Optimal {
                checkpoint: rebase(checkpoint),
            },
            PilotSpec::Laggy { base, p_repeat } => {
                if !(0.0..=1.0).contains(p_repeat) {
                    return Err(Error::config("pilot.p_repeat", "must lie in [0, 1]"));
                }
                PilotSpec::Laggy {
                    base: Box::new(base.resolve(base_dir)?),
                    p_repeat: *p_repeat,
                }
            }
            PilotSpec::Noisy { base, p_random } => {
                if !(0.0..=1.0).contains(p_random) {
                    return Err(Error::config("pilot.p_random", "must lie in [0, 1]"));
                }
                PilotSpec::Noisy {
                    base: Box::new(base.resolve(base_dir)?),
                    p_random: *p_random,
                }
            }
        })
    }

    /// Instantiates the pilot for `env`. Optimal pilots load their
    /// checkpoint from disk.
    pub fn build(&self, env: &Env, seed: u64) -> Result<Box<dyn Pilot>> {
        Ok(match self {
            PilotSpec::Noop => Box::new(NoopPilot::new(env)?),
            PilotSpec::Sensor => Box::new(SensorPilot::new(env)?),
            PilotSpec::Scripted { policy_file, policy } => {
                let map = env
                    .as_grid()
                    .ok_or_else(|| Error::config("pilot", "scripted pilot requires gridworld"))?
                    .map();
                if policy_file.is_some() && policy.is_none() {
                    return Err(Error::contract("pilot spec must be resolved before use"));
                }
                let parsed = parse_policy(policy.as_deref().unwrap_or(DEFAULT_POLICY))?;
                Box::new(ScriptedGridPilot::new(parsed, map)?)
            }
            PilotSpec::Optimal { checkpoint } => {
                let ckpt = crate::checkpoint::load(checkpoint)?;
                if ckpt.header.env.kind() != env.kind() {
                    return Err(Error::config(
                        "pilot.checkpoint",
                        format!("checkpoint is for {}, run uses {}", ckpt.header.env.kind(), env.kind()),
                    ));
                }
                Box::new(OptimalPilot::new(ckpt.qfunction, ckpt.header.encoding)?)
            }
            PilotSpec::Laggy { base, p_repeat } => Box::new(LaggyPilot::new(
                base.build(env, derive_seed(seed, stream::WRAPPER, 0))?,
                *p_repeat,
                seed,
            )),
            PilotSpec::Noisy { base, p_random } => Box::new(NoisyPilot::new(
                base.build(env, derive_seed(seed, stream::WRAPPER, 0))?,
                *p_random,
                env.action_count(),
                seed,
            )),
        })
    }
}
