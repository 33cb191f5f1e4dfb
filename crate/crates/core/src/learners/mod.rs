//! Value-function learners shared by every copilot method.

pub mod ddqn;
pub mod mlp;
pub mod replay;
pub mod tabular;

use serde::{Deserialize, Serialize};

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::mdp::ActionId;

pub use ddqn::{ddqn_target, sync_target, DdqnLearner, DdqnParams};
pub use mlp::{Gradients, Mlp, OptimizerKind};
pub use replay::{EpsilonSchedule, Experience, ReplayBuffer};
pub use tabular::{tabular_update, QTable, TabularLearner};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A learner-ready view of an (augmented) state: a dense key for tables and
/// a scaled feature vector for networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub key: Option<usize>,
    pub features: Vec<f64>,
}

/// How observations, pilot actions and budgets are turned into learner
/// inputs. Stored in checkpoints so deployment encodes exactly as training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingSpec {
    pub feature_scale: Vec<f64>,
    /// Number of discrete environment states, when tabular keys are used.
    pub discrete_states: Option<usize>,
    /// One-hot width for the pilot's action; absent for an unassisted agent.
    pub human_actions: Option<usize>,
    /// Budget cap; present only for the budget method.
    pub budget_cap: Option<u32>,
}

impl EncodingSpec {
    pub fn input_dim(&self) -> usize {
        self.feature_scale.len() + self.human_actions.unwrap_or(0) + usize::from(self.budget_cap.is_some())
    }

    pub fn key_count(&self) -> Option<usize> {
        let states = self.discrete_states?;
        let humans = self.human_actions.unwrap_or(1);
        let budgets = self.budget_cap.map_or(1, |c| c as usize + 1);
        Some(states * humans * budgets)
    }

    pub fn encode(&self, obs: &Observation, human: Option<ActionId>, budget: Option<u32>) -> Result<Encoding> {
        if obs.features.len() != self.feature_scale.len() {
            return Err(Error::Dimension {
                expected: self.feature_scale.len(),
                actual: obs.features.len(),
            });
        }
        let mut features = Vec::with_capacity(self.input_dim());
        features.extend(obs.features.iter().zip(&self.feature_scale).map(|(x, s)| x * s));
        let human_slot = match (self.human_actions, human) {
            (Some(n), Some(h)) if h < n => {
                features.extend((0..n).map(|i| if i == h { 1.0 } else { 0.0 }));
                h
            }
            (Some(n), Some(h)) => return Err(Error::contract(format!("pilot action {h} outside 0..{n}"))),
            (Some(_), None) => return Err(Error::contract("encoding needs the pilot action")),
            (None, _) => 0,
        };
        let budget_slot = match (self.budget_cap, budget) {
            (Some(cap), Some(b)) => {
                let b = b.min(cap);
                features.push(if cap == 0 { 0.0 } else { f64::from(b) / f64::from(cap) });
                b as usize
            }
            (Some(_), None) => return Err(Error::contract("encoding needs the remaining budget")),
            (None, _) => 0,
        };
        let key = match (self.discrete_states, obs.cell) {
            (Some(states), Some(cell)) if cell < states => {
                let humans = self.human_actions.unwrap_or(1);
                let budgets = self.budget_cap.map_or(1, |c| c as usize + 1);
                Some((cell * humans + human_slot) * budgets + budget_slot)
            }
            (Some(_), _) => return Err(Error::contract("observation has no valid cell index")),
            (None, _) => None,
        };
        Ok(Encoding { key, features })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Tabular,
    Ddqn,
}

/// Learner hyperparameters. Unset optional fields take per-learner defaults
/// via [`LearnerConfig::resolved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// Defaults to the environment's discount.
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default = "defaults::target_update_frequency")]
    pub target_update_frequency: usize,
    #[serde(default = "defaults::final_exploration_rate")]
    pub final_exploration_rate: f64,
    #[serde(default = "defaults::final_exploration_frame")]
    pub final_exploration_frame: usize,
    #[serde(default = "defaults::training_frames")]
    pub training_frames: usize,
    #[serde(default = "defaults::replay_start_size")]
    pub replay_start_size: usize,
    #[serde(default = "defaults::replay_buffer_size")]
    pub replay_buffer_size: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::train_frequency")]
    pub train_frequency: usize,
    #[serde(default = "defaults::hidden_sizes")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "defaults::gradient_clip")]
    pub gradient_clip: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    /// Largest budget value distinguished by the encoding; defaults to the
    /// method's initial budget.
    #[serde(default)]
    pub budget_cap: Option<u32>,
}

mod defaults {
    pub fn target_update_frequency() -> usize {
        1500
    }
    pub fn final_exploration_rate() -> f64 {
        0.05
    }
    pub fn final_exploration_frame() -> usize {
        100_000
    }
    pub fn training_frames() -> usize {
        1_000_000
    }
    pub fn replay_start_size() -> usize {
        1000
    }
    pub fn replay_buffer_size() -> usize {
        50_000
    }
    pub fn batch_size() -> usize {
        64
    }
    pub fn train_frequency() -> usize {
        1
    }
    pub fn hidden_sizes() -> Vec<usize> {
        vec![64, 64]
    }
    pub fn gradient_clip() -> f64 {
        10.0
    }
}

impl LearnerConfig {
    pub fn new(kind: LearnerKind) -> Self {
        Self {
            kind,
            discount: None,
            learning_rate: None,
            target_update_frequency: defaults::target_update_frequency(),
            final_exploration_rate: defaults::final_exploration_rate(),
            final_exploration_frame: defaults::final_exploration_frame(),
            training_frames: defaults::training_frames(),
            replay_start_size: defaults::replay_start_size(),
            replay_buffer_size: defaults::replay_buffer_size(),
            batch_size: defaults::batch_size(),
            train_frequency: defaults::train_frequency(),
            hidden_sizes: defaults::hidden_sizes(),
            gradient_clip: defaults::gradient_clip(),
            optimizer: OptimizerKind::default(),
            budget_cap: None,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.kind {
            LearnerKind::Tabular => 0.1,
            LearnerKind::Ddqn => 1e-3,
        })
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule::new(self.final_exploration_rate, self.final_exploration_frame)
    }

    /// Checks ranges; `prefix` is the config path used in messages.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |name: &str| format!("{prefix}.{name}");
        if let Some(g) = self.discount {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::config(field("discount"), "must lie in [0, 1]"));
            }
        }
        let lr = self.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) || (self.kind == LearnerKind::Tabular && lr > 1.0) {
            return Err(Error::config(field("learning_rate"), "must be positive (and at most 1 for tables)"));
        }
        if !(0.0..=1.0).contains(&self.final_exploration_rate) {
            return Err(Error::config(field("final_exploration_rate"), "must lie in [0, 1]"));
        }
        if self.training_frames == 0 {
            return Err(Error::config(field("training_frames"), "must be positive"));
        }
        if self.kind == LearnerKind::Ddqn {
            if self.batch_size == 0 {
                return Err(Error::config(field("batch_size"), "must be positive"));
            }
            if self.replay_buffer_size == 0 {
                return Err(Error::config(field("replay_buffer_size"), "must be positive"));
            }
            if self.train_frequency == 0 {
                return Err(Error::config(field("train_frequency"), "must be positive"));
            }
            if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
                return Err(Error::config(field("hidden_sizes"), "need at least one non-empty layer"));
            }
            if !(self.gradient_clip > 0.0) {
                return Err(Error::config(field("gradient_clip"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// A frozen action-value function: what checkpoints store and deployment
/// evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum QFunction {
    Table(QTable),
    Network(Mlp),
}

impl QFunction {
    pub fn values(&self, enc: &Encoding) -> Result<Vec<f64>> {
        match self {
            QFunction::Table(t) => {
                let key = enc.key.ok_or_else(|| Error::contract("table lookup needs a discrete key"))?;
                Ok(t.row(key)?.to_vec())
            }
            QFunction::Network(net) => net.forward(&enc.features),
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            QFunction::Table(t) => t.actions(),
            QFunction::Network(net) => net.output_dim(),
        }
    }

    pub fn greedy(&self, enc: &Encoding) -> Result<ActionId> {
        Ok(argmax(&self.values(enc)?))
    }
}

/// A learner in training.
#[derive(Debug, Clone)]
pub enum Learner {
    Tabular(TabularLearner),
    Ddqn(Box<DdqnLearner>),
}

impl Learner {
    pub fn new(cfg: &LearnerConfig, encoding: &EncodingSpec, actions: usize, gamma: f64, seed: u64) -> Result<Self> {
        Ok(match cfg.kind {
            LearnerKind::Tabular => {
                let keys = encoding
                    .key_count()
                    .ok_or_else(|| Error::contract("tabular learner needs a discrete environment"))?;
                Learner::Tabular(TabularLearner::new(keys, actions, cfg.learning_rate(), gamma))
            }
            LearnerKind::Ddqn => {
                let mut sizes = vec![encoding.input_dim()];
                sizes.extend(&cfg.hidden_sizes);
                sizes.push(actions);
                let params = DdqnParams {
                    gamma,
                    learning_rate: cfg.learning_rate(),
                    batch_size: cfg.batch_size,
                    replay_start_size: cfg.replay_start_size,
                    replay_buffer_size: cfg.replay_buffer_size,
                    target_update_frequency: cfg.target_update_frequency,
                    train_frequency: cfg.train_frequency,
                    gradient_clip: cfg.gradient_clip,
                    optimizer: cfg.optimizer,
                };
                Learner::Ddqn(Box::new(DdqnLearner::new(&sizes, params, seed)))
            }
        })
    }

    pub fn q_values(&self, enc: &Encoding) -> Result<Vec<f64>> {
        match self {
            Learner::Tabular(t) => {
                let key = enc.key.ok_or_else(|| Error::contract("table lookup needs a discrete key"))?;
                Ok(t.table().row(key)?.to_vec())
            }
            Learner::Ddqn(d) => d.online().forward(&enc.features),
        }
    }

    /// Feeds one transition; returns a loss when a parameter update ran.
    pub fn observe(&mut self, exp: Experience) -> Result<Option<f64>> {
        match self {
            Learner::Tabular(t) => t.observe(&exp).map(Some),
            Learner::Ddqn(d) => d.observe(exp),
        }
    }

    pub fn snapshot(&self) -> QFunction {
        match self {
            Learner::Tabular(t) => QFunction::Table(t.table().clone()),
            Learner::Ddqn(d) => QFunction::Network(d.online().clone()),
        }
    }
}
