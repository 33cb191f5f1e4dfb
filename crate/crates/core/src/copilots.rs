//! Assistance methods: how a copilot arbitrates between its own action and
//! the pilot's, how it shapes rewards while learning, and the greedy
//! deployment loop.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvKind, EnvSpec, Observation, StepOutcome};
use crate::error::{Error, Result};
use crate::learners::{argmax, Encoding, EncodingSpec, Experience, Learner, LearnerConfig, LearnerKind, QFunction};
use crate::mdp::{budget_transition, hard_reward, soft_reward, ActionId, PenaltyConfig, StepRecord};
use crate::pilots::Pilot;
use crate::rng::{derive_rng, derive_seed, stream};

/// Assistance method and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    /// Accept the pilot's action when its normalized value clears `alpha`.
    Baseline { alpha: f64 },
    /// At most `budget` interventions per episode; attempts past it cost
    /// `lambda` during training.
    Budget {
        budget: u32,
        #[serde(default)]
        lambda: f64,
    },
    /// Every intervention costs `lambda`.
    Penalty { lambda: f64 },
    /// `lambda` tracks a target per-step intervention rate by dual ascent.
    PenaltyAdapt {
        constraint_rate: f64,
        lambda_lr: f64,
        #[serde(default)]
        initial_lambda: f64,
    },
    /// No pilot: trains the unassisted agent used as the optimal pilot.
    Agent,
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Baseline { .. } => "baseline",
            MethodSpec::Budget { .. } => "budget",
            MethodSpec::Penalty { .. } => "penalty",
            MethodSpec::PenaltyAdapt { .. } => "penalty_adapt",
            MethodSpec::Agent => "agent",
        }
    }

    /// The swept hyperparameter of each method.
    pub fn param(&self) -> (&'static str, f64) {
        match self {
            MethodSpec::Baseline { alpha } => ("alpha", *alpha),
            MethodSpec::Budget { budget, .. } => ("budget", f64::from(*budget)),
            MethodSpec::Penalty { lambda } => ("lambda", *lambda),
            MethodSpec::PenaltyAdapt { constraint_rate, .. } => ("constraint_rate", *constraint_rate),
            MethodSpec::Agent => ("none", 0.0),
        }
    }

    /// Copy with the swept hyperparameter replaced.
    pub fn with_param(&self, value: f64) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            MethodSpec::Baseline { alpha } => *alpha = value,
            MethodSpec::Budget { budget, .. } => {
                if value < 0.0 || value.fract() != 0.0 || value > f64::from(u32::MAX) {
                    return Err(Error::config("method.budget", format!("{value} is not a non-negative integer")));
                }
                *budget = value as u32;
            }
            MethodSpec::Penalty { lambda } => *lambda = value,
            MethodSpec::PenaltyAdapt { constraint_rate, .. } => *constraint_rate = value,
            MethodSpec::Agent => return Err(Error::config("method", "agent training has no swept parameter")),
        }
        Ok(out)
    }

    pub fn needs_pilot(&self) -> bool {
        !matches!(self, MethodSpec::Agent)
    }

    pub fn initial_budget(&self) -> Option<u32> {
        match self {
            MethodSpec::Budget { budget, .. } => Some(*budget),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            MethodSpec::Baseline { alpha } if !(0.0..=1.0).contains(alpha) => {
                Err(Error::config("method.alpha", "must lie in [0, 1]"))
            }
            MethodSpec::Budget { lambda, .. } | MethodSpec::Penalty { lambda } if !finite_nonneg(*lambda) => {
                Err(Error::config("method.lambda", "must be finite and non-negative"))
            }
            MethodSpec::PenaltyAdapt {
                constraint_rate,
                lambda_lr,
                initial_lambda,
            } => {
                if !(0.0..=1.0).contains(constraint_rate) {
                    return Err(Error::config("method.constraint_rate", "must lie in [0, 1]"));
                }
                if !finite_nonneg(*lambda_lr) {
                    return Err(Error::config("method.lambda_lr", "must be finite and non-negative"));
                }
                if !finite_nonneg(*initial_lambda) {
                    return Err(Error::config("method.initial_lambda", "must be finite and non-negative"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Min-max normalized values; all ones when the values are equal.
pub fn normalize_q(q: &[f64]) -> Vec<f64> {
    let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![1.0; q.len()];
    }
    q.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Tolerance arbitration: among actions whose normalized value is at least
/// `alpha`, pick the one most similar to the pilot's (ties to the lowest id).
/// The pilot's own action wins whenever it is feasible.
pub fn baseline_select(
    q: &[f64],
    human_action: ActionId,
    alpha: f64,
    similarity: impl Fn(ActionId, ActionId) -> f64,
) -> Result<ActionId> {
    if q.is_empty() {
        return Err(Error::contract("empty action-value vector"));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("non-finite action value"));
    }
    let normalized = normalize_q(q);
    let mut best: Option<(ActionId, f64)> = None;
    for (a, &v) in normalized.iter().enumerate() {
        if v < alpha {
            continue;
        }
        let score = similarity(a, human_action);
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((a, score));
        }
    }
    // alpha <= 1 and the maximum normalizes to 1, so the set is non-empty.
    best.map(|(a, _)| a)
        .ok_or_else(|| Error::contract(format!("no action clears tolerance {alpha}")))
}

fn record(
    t: usize,
    obs: &Observation,
    human: ActionId,
    executed: ActionId,
    out: &StepOutcome,
    shaped: f64,
    budget_after: Option<u32>,
    lambda: Option<f64>,
) -> StepRecord {
    StepRecord {
        time: t,
        env_state: obs.features.clone(),
        human_action: human,
        agent_action: executed,
        intervened: executed != human,
        raw_reward: out.reward,
        shaped_reward: shaped,
        budget_after,
        lambda_at_step: lambda,
        success: out.done.then_some(out.success),
    }
}

/// One hard-budget step given the policy's attempted action. The attempt is
/// executed only while budget remains; an attempt at zero budget is
/// overridden by the pilot's action but still penalised.
#[allow(clippy::too_many_arguments)]
pub fn budget_step(
    env: &mut Env,
    t: usize,
    obs: &Observation,
    human: ActionId,
    budget: u32,
    lambda: f64,
    attempted: ActionId,
) -> Result<(StepRecord, StepOutcome)> {
    let executed = if attempted != human && budget > 0 { attempted } else { human };
    let budget_after = budget_transition(budget, executed, human);
    let out = env.step(executed)?;
    let shaped = hard_reward(out.reward, budget, attempted, human, lambda);
    Ok((record(t, obs, human, executed, &out, shaped, Some(budget_after), Some(lambda)), out))
}

/// One fixed-penalty step: the copilot's action is always executed.
pub fn penalty_step(
    env: &mut Env,
    t: usize,
    obs: &Observation,
    human: ActionId,
    lambda: f64,
    agent_action: ActionId,
) -> Result<(StepRecord, StepOutcome)> {
    let out = env.step(agent_action)?;
    let shaped = soft_reward(out.reward, agent_action, human, lambda);
    Ok((record(t, obs, human, agent_action, &out, shaped, None, Some(lambda)), out))
}

/// One penalty-adapting step: execute, penalise with the current multiplier,
/// then take one dual step on it.
pub fn penalty_adapt_step(
    env: &mut Env,
    t: usize,
    obs: &Observation,
    human: ActionId,
    penalty: &mut PenaltyConfig,
    agent_action: ActionId,
) -> Result<(StepRecord, StepOutcome)> {
    let (rec, out) = penalty_step(env, t, obs, human, penalty.lambda, agent_action)?;
    penalty.step(rec.intervened);
    Ok((rec, out))
}

/// Tolerance-method step: the arbitrated action is executed unshaped.
pub fn baseline_step(
    env: &mut Env,
    t: usize,
    obs: &Observation,
    human: ActionId,
    executed: ActionId,
) -> Result<(StepRecord, StepOutcome)> {
    let out = env.step(executed)?;
    let shaped = out.reward;
    Ok((record(t, obs, human, executed, &out, shaped, None, None), out))
}

/// Everything needed to deploy a trained copilot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCopilot {
    pub method: MethodSpec,
    pub env: EnvSpec,
    pub encoding: EncodingSpec,
    pub learner: LearnerConfig,
    pub seed: u64,
    pub frames: usize,
    pub final_lambda: Option<f64>,
    pub pilot: Option<String>,
    pub qfunction: QFunction,
}

impl TrainedCopilot {
    /// The penalty in force at deployment, for reporting.
    pub fn deploy_lambda(&self) -> Option<f64> {
        match &self.method {
            MethodSpec::Penalty { lambda } => Some(*lambda),
            MethodSpec::PenaltyAdapt { initial_lambda, .. } => Some(self.final_lambda.unwrap_or(*initial_lambda)),
            _ => None,
        }
    }
}

/// Per-episode training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub frames: usize,
    pub steps: usize,
    pub raw_return: f64,
    pub shaped_return: f64,
    pub interventions: usize,
    pub success: bool,
    pub lambda: Option<f64>,
}

impl EpisodeStats {
    pub fn intervention_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.interventions as f64 / self.steps as f64
        }
    }
}

/// Trailing moving average; the first `window - 1` points average what is
/// available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Smoothing window of reported learning curves, in episodes.
pub const CURVE_WINDOW: usize = 20;

pub fn encoding_for(method: &MethodSpec, env: &Env, learner: &LearnerConfig) -> EncodingSpec {
    EncodingSpec {
        feature_scale: env.feature_scale(),
        discrete_states: match learner.kind {
            LearnerKind::Tabular => env.discrete_states(),
            LearnerKind::Ddqn => None,
        },
        human_actions: method.needs_pilot().then(|| env.action_count()),
        budget_cap: method
            .initial_budget()
            .map(|b| learner.budget_cap.unwrap_or(b)),
    }
}

/// Checks a method / environment / learner / pilot combination.
pub fn validate_combination(
    method: &MethodSpec,
    env: EnvKind,
    learner: &LearnerConfig,
    has_pilot: bool,
) -> Result<()> {
    method.validate()?;
    learner.validate("learner")?;
    if learner.kind == LearnerKind::Tabular && env != EnvKind::Gridworld {
        return Err(Error::config("learner.kind", format!("tabular learner needs a discrete environment, not {env}")));
    }
    if method.needs_pilot() && !has_pilot {
        return Err(Error::config("pilot", format!("method `{}` needs a pilot", method.name())));
    }
    Ok(())
}

struct Trainer<'a> {
    method: &'a MethodSpec,
    encoding: EncodingSpec,
    learner: Learner,
    epsilon: crate::learners::EpsilonSchedule,
    explore_rng: ChaCha8Rng,
    actions: usize,
}

impl Trainer<'_> {
    fn encode(&self, obs: &Observation, human: ActionId, budget: Option<u32>) -> Result<Encoding> {
        let human = self.method.needs_pilot().then_some(human);
        self.encoding.encode(obs, human, budget)
    }

    /// Epsilon-greedy over the learner's values; `None` means exploit.
    fn explore(&mut self, frame: usize) -> Option<ActionId> {
        let eps = self.epsilon.value(frame);
        (self.explore_rng.gen::<f64>() < eps).then(|| self.explore_rng.gen_range(0..self.actions))
    }
}

/// Trains a copilot (or, for [`MethodSpec::Agent`], an unassisted agent)
/// for `frames` environment steps. Returns the frozen value function and one
/// statistics row per completed episode.
pub fn train(
    method: &MethodSpec,
    env_spec: &EnvSpec,
    mut pilot: Option<&mut dyn Pilot>,
    learner_cfg: &LearnerConfig,
    frames: usize,
    seed: u64,
) -> Result<(TrainedCopilot, Vec<EpisodeStats>)> {
    let env_spec = env_spec.resolve(None)?;
    let mut env = env_spec.build(derive_seed(seed, stream::ENV, 0))?;
    validate_combination(method, env.kind(), learner_cfg, pilot.is_some())?;
    let gamma = learner_cfg.discount.unwrap_or_else(|| env.kind().default_discount());
    let encoding = encoding_for(method, &env, learner_cfg);
    let learner = Learner::new(
        learner_cfg,
        &encoding,
        env.action_count(),
        gamma,
        derive_seed(seed, stream::LEARNER, 0),
    )?;
    let mut trainer = Trainer {
        method,
        encoding,
        learner,
        epsilon: learner_cfg.epsilon(),
        explore_rng: derive_rng(seed, stream::EXPLORATION, 0),
        actions: env.action_count(),
    };
    if let Some(p) = pilot.as_deref_mut() {
        p.reseed(derive_seed(seed, stream::PILOT, 0));
    }
    let mut penalty = match method {
        MethodSpec::PenaltyAdapt {
            constraint_rate,
            lambda_lr,
            initial_lambda,
        } => Some(
            PenaltyConfig {
                lambda: *initial_lambda,
                constraint_rate: *constraint_rate,
                lambda_lr: *lambda_lr,
                constraint_total: None,
            }
            .with_episode_total(env.step_limit()),
        ),
        _ => None,
    };

    let mut frame = 0usize;
    let mut stats = Vec::new();
    'episodes: while frame < frames {
        let mut obs = env.reset();
        let mut budget = method.initial_budget();
        let mut human = match pilot.as_deref_mut() {
            Some(p) => {
                p.reset();
                p.act(&obs)?
            }
            None => 0,
        };
        let mut ep = EpisodeStats {
            episode: stats.len(),
            frames: frame,
            steps: 0,
            raw_return: 0.0,
            shaped_return: 0.0,
            interventions: 0,
            success: false,
            lambda: None,
        };
        let mut t = 0;
        loop {
            if frame >= frames {
                break 'episodes;
            }
            let state = trainer.encode(&obs, human, budget)?;
            let explored = trainer.explore(frame);
            let greedy = |tr: &Trainer| -> Result<Vec<f64>> { tr.learner.q_values(&state) };
            let (rec, out, learned_action) = match method {
                MethodSpec::Agent => {
                    let a = match explored {
                        Some(a) => a,
                        None => argmax(&greedy(&trainer)?),
                    };
                    let (mut rec, out) = baseline_step(&mut env, t, &obs, a, a)?;
                    rec.lambda_at_step = None;
                    (rec, out, a)
                }
                MethodSpec::Baseline { alpha } => {
                    let a = match explored {
                        Some(a) => a,
                        None => baseline_select(&greedy(&trainer)?, human, *alpha, |x, y| env.similarity(x, y))?,
                    };
                    let (rec, out) = baseline_step(&mut env, t, &obs, human, a)?;
                    (rec, out, a)
                }
                MethodSpec::Budget { lambda, .. } => {
                    let a = match explored {
                        Some(a) => a,
                        None => argmax(&greedy(&trainer)?),
                    };
                    let b = budget.expect("budget method tracks a budget");
                    let (rec, out) = budget_step(&mut env, t, &obs, human, b, *lambda, a)?;
                    budget = rec.budget_after;
                    (rec, out, a)
                }
                MethodSpec::Penalty { lambda } => {
                    let a = match explored {
                        Some(a) => a,
                        None => argmax(&greedy(&trainer)?),
                    };
                    let (rec, out) = penalty_step(&mut env, t, &obs, human, *lambda, a)?;
                    (rec, out, a)
                }
                MethodSpec::PenaltyAdapt { .. } => {
                    let a = match explored {
                        Some(a) => a,
                        None => argmax(&greedy(&trainer)?),
                    };
                    let cfg = penalty.as_mut().expect("adaptive method tracks a penalty");
                    let (rec, out) = penalty_adapt_step(&mut env, t, &obs, human, cfg, a)?;
                    (rec, out, a)
                }
            };
            if let Some(p) = pilot.as_deref_mut() {
                p.observe_executed(rec.agent_action);
            }
            frame += 1;
            t += 1;
            ep.steps += 1;
            ep.raw_return += rec.raw_reward;
            ep.shaped_return += rec.shaped_reward;
            ep.interventions += usize::from(rec.intervened);

            // Next augmented state; absorbing states never bootstrap, so the
            // pilot is not queried there.
            let next_human = match (pilot.as_deref_mut(), out.terminal) {
                (Some(p), false) => p.act(&out.observation)?,
                _ => human,
            };
            let next_state = if out.terminal {
                state.clone()
            } else {
                trainer.encode(&out.observation, next_human, budget)?
            };
            trainer.learner.observe(Experience {
                state,
                action: learned_action,
                reward: rec.shaped_reward,
                next_state,
                terminal: out.terminal,
            })?;

            obs = out.observation;
            human = next_human;
            if out.done {
                ep.success = out.success;
                ep.lambda = penalty.map(|p| p.lambda);
                ep.frames = frame;
                if ep.episode % 500 == 0 {
                    tracing::debug!(
                        episode = ep.episode,
                        frame,
                        ret = ep.raw_return,
                        rate = ep.intervention_rate(),
                        "training progress"
                    );
                }
                stats.push(ep);
                break;
            }
        }
    }

    let trained = TrainedCopilot {
        method: method.clone(),
        env: env_spec,
        encoding: trainer.encoding,
        learner: learner_cfg.clone(),
        seed,
        frames,
        final_lambda: penalty.map(|p| p.lambda),
        pilot: pilot.map(|p| p.descriptor()),
        qfunction: trainer.learner.snapshot(),
    };
    Ok((trained, stats))
}

/// A greedy deployment episode in progress, driven one pilot action at a
/// time. Offline evaluation and the interactive service both step through
/// this type, so their arbitration is identical.
#[derive(Debug, Clone)]
pub struct Deployment {
    env: Env,
    obs: Observation,
    budget: Option<u32>,
    initial_budget: Option<u32>,
    lambda: Option<f64>,
    t: usize,
    done: bool,
    success: bool,
    records: Vec<StepRecord>,
}

impl Deployment {
    /// Starts an episode. `budget` overrides the budget method's own `B`;
    /// other methods ignore it. With no copilot the pilot flies alone.
    pub fn start(copilot: Option<&TrainedCopilot>, env_spec: &EnvSpec, budget: Option<u32>, seed: u64) -> Result<Self> {
        let mut env = env_spec.build(derive_seed(seed, stream::ENV, 0))?;
        if let Some(c) = copilot {
            if c.env.kind() != env.kind() {
                return Err(Error::config(
                    "env",
                    format!("copilot was trained on {}, not {}", c.env.kind(), env.kind()),
                ));
            }
        }
        let obs = env.reset();
        let initial_budget = copilot.and_then(|c| c.method.initial_budget()).map(|b| budget.unwrap_or(b));
        Ok(Self {
            env,
            obs,
            budget: initial_budget,
            initial_budget,
            lambda: copilot.and_then(TrainedCopilot::deploy_lambda),
            t: 0,
            done: false,
            success: false,
            records: Vec::new(),
        })
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn budget(&self) -> Option<u32> {
        self.budget
    }

    pub fn initial_budget(&self) -> Option<u32> {
        self.initial_budget
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn step_count(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// The copilot's executed action for the pilot's proposal.
    pub fn arbitrate(&self, copilot: Option<&TrainedCopilot>, human: ActionId) -> Result<ActionId> {
        let Some(c) = copilot else { return Ok(human) };
        let human_slot = c.method.needs_pilot().then_some(human);
        let enc = c.encoding.encode(&self.obs, human_slot, self.budget)?;
        let q = c.qfunction.values(&enc)?;
        Ok(match &c.method {
            MethodSpec::Baseline { alpha } => baseline_select(&q, human, *alpha, |x, y| self.env.similarity(x, y))?,
            MethodSpec::Budget { .. } => {
                let a = argmax(&q);
                if a != human && self.budget.unwrap_or(0) > 0 {
                    a
                } else {
                    human
                }
            }
            MethodSpec::Penalty { .. } | MethodSpec::PenaltyAdapt { .. } | MethodSpec::Agent => argmax(&q),
        })
    }

    /// Executes one step for the pilot's `human` action.
    pub fn step(&mut self, copilot: Option<&TrainedCopilot>, human: ActionId) -> Result<(StepRecord, StepOutcome)> {
        if self.done {
            return Err(Error::contract("episode already finished"));
        }
        if human >= self.env.action_count() {
            return Err(Error::contract(format!("action {human} out of range")));
        }
        let executed = self.arbitrate(copilot, human)?;
        // The unassisted agent has no pilot to override.
        let human = match copilot {
            Some(c) if !c.method.needs_pilot() => executed,
            _ => human,
        };
        let out = self.env.step(executed)?;
        if let Some(b) = self.budget {
            self.budget = Some(budget_transition(b, executed, human));
        }
        let rec = record(self.t, &self.obs, human, executed, &out, out.reward, self.budget, self.lambda);
        self.t += 1;
        self.done = out.done;
        self.success = out.success;
        self.obs = out.observation.clone();
        self.records.push(rec.clone());
        Ok((rec, out))
    }

    pub fn into_log(self) -> EpisodeLog {
        EpisodeLog {
            success: self.success,
            records: self.records,
        }
    }
}

/// The step records of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
    pub success: bool,
}

impl EpisodeLog {
    pub fn total_return(&self) -> f64 {
        self.records.iter().map(|r| r.raw_reward).sum()
    }

    pub fn interventions(&self) -> usize {
        self.records.iter().filter(|r| r.intervened).count()
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }
}

/// Runs one greedy episode. Episode randomness (environment and pilot) is
/// keyed by `seed`; pass `copilot = None` to fly the pilot unassisted.
pub fn deploy_episode(
    copilot: Option<&TrainedCopilot>,
    pilot: Option<&mut dyn Pilot>,
    env_spec: &EnvSpec,
    budget: Option<u32>,
    seed: u64,
) -> Result<EpisodeLog> {
    let mut run = Deployment::start(copilot, env_spec, budget, seed)?;
    let needs_pilot = copilot.map_or(true, |c| c.method.needs_pilot());
    let mut pilot = match (pilot, needs_pilot) {
        (Some(p), _) => {
            p.reseed(derive_seed(seed, stream::PILOT, 0));
            p.reset();
            Some(p)
        }
        (None, false) => None,
        (None, true) => return Err(Error::contract("this deployment needs a pilot")),
    };
    while !run.is_done() {
        let human = match pilot.as_deref_mut() {
            Some(p) if needs_pilot => p.act(run.observation())?,
            _ => 0,
        };
        let (rec, _) = run.step(copilot, human)?;
        if let Some(p) = pilot.as_deref_mut() {
            p.observe_executed(rec.agent_action);
        }
    }
    Ok(run.into_log())
}
