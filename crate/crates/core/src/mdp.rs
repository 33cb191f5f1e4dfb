//! Augmented-state types and the pure reward, budget and dual-variable rules
//! shared by every copilot method.
//!
//! The copilot never sees the bare environment state. It observes the state
//! concatenated with the pilot's proposed action, and under the hard-budget
//! method also the number of interventions it has left in the episode.

use serde::{Deserialize, Serialize};

/// Index into an environment's discrete action set.
pub type ActionId = usize;

/// `[s, a_h]`: the copilot's observation under the penalty-style methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub env_state: Vec<f64>,
    pub human_action: ActionId,
}

/// `[s, a_h, b]`: the copilot's observation under the budget method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub env_state: Vec<f64>,
    pub human_action: ActionId,
    pub budget: u32,
}

impl BudgetState {
    pub fn augmented(&self) -> AugmentedState {
        AugmentedState {
            env_state: self.env_state.clone(),
            human_action: self.human_action,
        }
    }
}

/// Intervention penalty and its dual-ascent settings.
///
/// `constraint_rate` is the per-step intervention rate the penalty-adapting
/// method tracks; `constraint_total` is the episode-level budget it implies
/// and is kept for reporting only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub constraint_rate: f64,
    pub lambda_lr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_total: Option<f64>,
}

impl PenaltyConfig {
    /// Episode-level constraint `c = c' * T_max`.
    pub fn with_episode_total(mut self, step_limit: usize) -> Self {
        self.constraint_total = Some(self.constraint_rate * step_limit as f64);
        self
    }

    /// Applies one dual step and returns the new multiplier.
    pub fn step(&mut self, intervened: bool) -> f64 {
        self.lambda = lambda_update(self.lambda, self.lambda_lr, self.constraint_rate, intervened);
        self.lambda
    }
}

/// One executed step of an assisted episode.
///
/// `agent_action` is the action actually sent to the environment.
/// `shaped_reward` equals `raw_reward` whenever no intervention happened,
/// except for budget-method training steps where the policy attempted to
/// intervene with an exhausted budget (the attempt is overridden but still
/// penalised).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub time: usize,
    pub env_state: Vec<f64>,
    pub human_action: ActionId,
    pub agent_action: ActionId,
    pub intervened: bool,
    pub raw_reward: f64,
    pub shaped_reward: f64,
    pub budget_after: Option<u32>,
    pub lambda_at_step: Option<f64>,
    /// Present on the final record of an episode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
}

/// `I(a_a, a_h)`.
#[inline]
pub fn intervention_indicator(agent_action: ActionId, human_action: ActionId) -> u8 {
    u8::from(agent_action != human_action)
}

/// Deterministic budget dynamics `P(b' | b, a_h, a_a)`.
#[inline]
pub fn budget_transition(budget: u32, agent_action: ActionId, human_action: ActionId) -> u32 {
    if budget == 0 || agent_action == human_action {
        budget
    } else {
        budget - 1
    }
}

/// Reward of the hard-constrained MDP: the penalty applies only to an
/// intervention attempted after the budget is exhausted.
#[inline]
pub fn hard_reward(
    raw_reward: f64,
    budget: u32,
    agent_action: ActionId,
    human_action: ActionId,
    lambda: f64,
) -> f64 {
    debug_assert!(lambda >= 0.0);
    if budget == 0 && agent_action != human_action {
        raw_reward - lambda
    } else {
        raw_reward
    }
}

/// Reward of the soft-constrained MDP: every intervention costs `lambda`.
#[inline]
pub fn soft_reward(raw_reward: f64, agent_action: ActionId, human_action: ActionId, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    if agent_action != human_action {
        raw_reward - lambda
    } else {
        raw_reward
    }
}

/// Projected stochastic gradient step on the Lagrange multiplier:
/// `max(0, lambda - lr * (rate - I))`.
#[inline]
pub fn lambda_update(lambda: f64, lambda_lr: f64, constraint_rate: f64, intervened: bool) -> f64 {
    let indicator = if intervened { 1.0 } else { 0.0 };
    let next = lambda - lambda_lr * (constraint_rate - indicator);
    if next > 0.0 {
        next
    } else {
        0.0
    }
}
