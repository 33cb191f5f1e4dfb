//! Double-Q learner on the from-scratch MLP.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{Mlp, Optimizer, OptimizerKind};
use super::replay::{Experience, ReplayBuffer};
use crate::error::Result;

/// Double-DQN bootstrap target: the online network picks the next action,
/// the target network evaluates it.
pub fn ddqn_target(q_online_next: &[f64], q_target_next: &[f64], reward: f64, done: bool, gamma: f64) -> f64 {
    if done {
        return reward;
    }
    let best = super::argmax(q_online_next);
    reward + gamma * q_target_next[best]
}

/// Hard-copies the online parameters into the target net on every multiple
/// of `period`. Returns whether a copy happened.
pub fn sync_target(online: &Mlp, target: &mut Mlp, frame: usize, period: usize) -> bool {
    if period > 0 && frame > 0 && frame % period == 0 {
        target.copy_from(online);
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdqnParams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_start_size: usize,
    pub replay_buffer_size: usize,
    pub target_update_frequency: usize,
    pub train_frequency: usize,
    pub gradient_clip: f64,
    pub optimizer: OptimizerKind,
}

#[derive(Debug, Clone)]
pub struct DdqnLearner {
    online: Mlp,
    target: Mlp,
    buffer: ReplayBuffer,
    optimizer: Optimizer,
    params: DdqnParams,
    frames: usize,
    rng: ChaCha8Rng,
}

impl DdqnLearner {
    pub fn new(sizes: &[usize], params: DdqnParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = Mlp::init(sizes, &mut rng);
        let target = online.clone();
        let optimizer = Optimizer::new(params.optimizer, params.learning_rate, online.params().len());
        Self {
            online,
            target,
            buffer: ReplayBuffer::new(params.replay_buffer_size),
            optimizer,
            params,
            frames: 0,
            rng,
        }
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Stores the transition and, once warm, takes one gradient step every
    /// `train_frequency` frames. Returns the batch loss when a step ran.
    pub fn observe(&mut self, exp: Experience) -> Result<Option<f64>> {
        self.buffer.push(exp);
        self.frames += 1;
        let mut loss = None;
        if self.buffer.len() >= self.params.replay_start_size.max(1)
            && self.frames % self.params.train_frequency.max(1) == 0
        {
            loss = Some(self.train_batch()?);
        }
        sync_target(&self.online, &mut self.target, self.frames, self.params.target_update_frequency);
        Ok(loss)
    }

    fn train_batch(&mut self) -> Result<f64> {
        let batch = self.buffer.sample(self.params.batch_size, &mut self.rng);
        let mut inputs = Vec::with_capacity(batch.len());
        let mut actions = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for exp in batch {
            let y = if exp.terminal {
                exp.reward
            } else {
                let online_next = self.online.forward(&exp.next_state.features)?;
                let target_next = self.target.forward(&exp.next_state.features)?;
                ddqn_target(&online_next, &target_next, exp.reward, false, self.params.gamma)
            };
            inputs.push(exp.state.features.clone());
            actions.push(exp.action);
            targets.push(y);
        }
        let (loss, mut grad) = self.online.td_loss_and_gradient(&inputs, &actions, &targets)?;
        grad.clip_norm(self.params.gradient_clip);
        self.optimizer.apply(&mut self.online, &grad);
        Ok(loss)
    }
}
