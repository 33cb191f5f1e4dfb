//! Tabular Q-learning over dense integer keys.

use serde::{Deserialize, Serialize};

use super::replay::Experience;
use crate::error::{Error, Result};
use crate::mdp::ActionId;

/// Dense `keys x actions` table of action values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(keys: usize, actions: usize) -> Self {
        Self {
            actions,
            values: vec![0.0; keys * actions],
        }
    }

    pub fn from_parts(keys: usize, actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != keys * actions {
            return Err(Error::Dimension {
                expected: keys * actions,
                actual: values.len(),
            });
        }
        Ok(Self { actions, values })
    }

    pub fn keys(&self) -> usize {
        self.values.len() / self.actions
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, key: usize) -> Result<&[f64]> {
        if key >= self.keys() {
            return Err(Error::contract(format!("table key {key} out of range")));
        }
        Ok(&self.values[key * self.actions..(key + 1) * self.actions])
    }

    pub fn get(&self, key: usize, action: ActionId) -> f64 {
        self.values[key * self.actions + action]
    }

    fn max_value(&self, key: usize) -> f64 {
        self.values[key * self.actions..(key + 1) * self.actions]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One Q-learning backup; returns the new `Q(key, action)`.
#[allow(clippy::too_many_arguments)]
pub fn tabular_update(
    table: &mut QTable,
    key: usize,
    action: ActionId,
    reward: f64,
    next_key: usize,
    done: bool,
    lr: f64,
    gamma: f64,
) -> f64 {
    let bootstrap = if done { 0.0 } else { gamma * table.max_value(next_key) };
    let idx = key * table.actions + action;
    table.values[idx] += lr * (reward + bootstrap - table.values[idx]);
    table.values[idx]
}

#[derive(Debug, Clone)]
pub struct TabularLearner {
    table: QTable,
    lr: f64,
    gamma: f64,
}

impl TabularLearner {
    pub fn new(keys: usize, actions: usize, lr: f64, gamma: f64) -> Self {
        Self {
            table: QTable::new(keys, actions),
            lr,
            gamma,
        }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn observe(&mut self, exp: &Experience) -> Result<f64> {
        let key = exp.state.key.ok_or_else(|| Error::contract("tabular learner needs a discrete key"))?;
        let next = exp.next_state.key.ok_or_else(|| Error::contract("tabular learner needs a discrete key"))?;
        if key >= self.table.keys() || next >= self.table.keys() || exp.action >= self.table.actions {
            return Err(Error::contract("table index out of range"));
        }
        let before = self.table.get(key, exp.action);
        let after = tabular_update(
            &mut self.table,
            key,
            exp.action,
            exp.reward,
            next,
            exp.terminal,
            self.lr,
            self.gamma,
        );
        Ok((after - before).powi(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_reward_half_step() {
        let mut t = QTable::new(2, 2);
        assert_eq!(tabular_update(&mut t, 0, 1, 10.0, 1, true, 0.5, 0.9), 5.0);
    }

    #[test]
    fn done_ignores_next_values() {
        let mut t = QTable::from_parts(2, 1, vec![0.0, 100.0]).unwrap();
        assert_eq!(tabular_update(&mut t, 0, 0, 1.0, 1, true, 1.0, 0.9), 1.0);
        assert_eq!(tabular_update(&mut t, 0, 0, 1.0, 1, false, 1.0, 0.9), 91.0);
    }

    #[test]
    fn two_state_chain_converges_to_fixed_point() {
        // State 0 --(+1)--> state 1 --(+2, terminal)--> end; one action.
        // Fixed point: Q1 = 2, Q0 = 1 + gamma * 2.
        let gamma = 0.9;
        let mut t = QTable::new(2, 1);
        for _ in 0..2000 {
            tabular_update(&mut t, 0, 0, 1.0, 1, false, 0.1, gamma);
            tabular_update(&mut t, 1, 0, 2.0, 0, true, 0.1, gamma);
        }
        assert!((t.get(1, 0) - 2.0).abs() < 1e-6);
        assert!((t.get(0, 0) - (1.0 + gamma * 2.0)).abs() < 1e-6);
    }
}
