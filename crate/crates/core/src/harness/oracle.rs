//! Exact dynamic-programming references on the gridworld, used to check
//! learned policies and simulated statistics.

use std::collections::BTreeMap;

use crate::env::grid::{grid_reward, grid_transitions, GridMap, ACTION_COUNT};
use crate::error::Result;
use crate::learners::argmax;
use crate::mdp::ActionId;

/// Optimal discounted action values on `map`, with the per-step reward
/// reduced by `action_cost(cell, action)`.
pub fn value_iteration_with_cost(
    map: &GridMap,
    gamma: f64,
    action_cost: impl Fn(usize, ActionId) -> f64,
    tolerance: f64,
) -> Result<Vec<[f64; ACTION_COUNT]>> {
    let mut q = vec![[0.0; ACTION_COUNT]; map.len()];
    let active: Vec<usize> = map.active_cells().collect();
    let mut tables = BTreeMap::new();
    for &s in &active {
        for a in 0..ACTION_COUNT {
            tables.insert((s, a), grid_transitions(map, s, a)?);
        }
    }
    loop {
        let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut delta: f64 = 0.0;
        for &s in &active {
            for a in 0..ACTION_COUNT {
                let mut total = -action_cost(s, a);
                for (&next, &p) in &tables[&(s, a)] {
                    let (r, terminal) = grid_reward(map, s, next);
                    total += p * (r + if terminal { 0.0 } else { gamma * v[next] });
                }
                delta = delta.max((total - q[s][a]).abs());
                q[s][a] = total;
            }
        }
        if delta < tolerance {
            break;
        }
    }
    // Terminal and stone cells keep zero rows.
    Ok(q)
}

/// Optimal action values of the plain gridworld.
pub fn value_iteration(map: &GridMap, gamma: f64) -> Result<Vec<[f64; ACTION_COUNT]>> {
    value_iteration_with_cost(map, gamma, |_, _| 0.0, 1e-12)
}

/// Greedy policy of a value table, ties to the lowest action id.
pub fn greedy_policy(q: &[[f64; ACTION_COUNT]]) -> Vec<ActionId> {
    q.iter().map(|row| argmax(row)).collect()
}

/// Exact expected undiscounted return over `horizon` steps from the start
/// cell under a stochastic policy `policy(cell) -> P(action)`.
pub fn policy_return(map: &GridMap, policy: impl Fn(usize) -> [f64; ACTION_COUNT], horizon: usize) -> Result<f64> {
    let active: Vec<usize> = map.active_cells().collect();
    let mut v = vec![0.0; map.len()];
    for _ in 0..horizon {
        let mut next_v = vec![0.0; map.len()];
        for &s in &active {
            let probs = policy(s);
            let mut total = 0.0;
            for (a, &pa) in probs.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (next, p) in grid_transitions(map, s, a)? {
                    let (r, terminal) = grid_reward(map, s, next);
                    total += pa * p * (r + if terminal { 0.0 } else { v[next] });
                }
            }
            next_v[s] = total;
        }
        v = next_v;
    }
    Ok(v[map.start()])
}

/// Point mass on a deterministic action.
pub fn deterministic(action: ActionId) -> [f64; ACTION_COUNT] {
    let mut p = [0.0; ACTION_COUNT];
    p[action] = 1.0;
    p
}

/// Cells where the optimal soft-penalty copilot overrides a deterministic
/// pilot, from value iteration on the augmented chain.
pub fn penalty_intervention_cells(map: &GridMap, pilot: &[ActionId], lambda: f64, gamma: f64) -> Result<Vec<usize>> {
    let q = value_iteration_with_cost(map, gamma, |s, a| if a == pilot[s] { 0.0 } else { lambda }, 1e-12)?;
    Ok(map
        .active_cells()
        .filter(|&s| argmax(&q[s]) != pilot[s])
        .collect())
}

/// Exact transition kernel of the augmented chain: from `(cell, _)` with
/// copilot action `agent_action`, the probability of each `(cell', a_h')`
/// is `T(cell, agent_action, cell') * pilot(cell')[a_h']`. Terminal
/// successors carry no pilot action (`None`).
pub fn augmented_transitions(
    map: &GridMap,
    pilot: impl Fn(usize) -> [f64; ACTION_COUNT],
    cell: usize,
    agent_action: ActionId,
) -> Result<BTreeMap<(usize, Option<ActionId>), f64>> {
    let mut out = BTreeMap::new();
    for (next, p) in grid_transitions(map, cell, agent_action)? {
        if map.is_terminal(next) {
            *out.entry((next, None)).or_insert(0.0) += p;
            continue;
        }
        for (h, ph) in pilot(next).iter().enumerate() {
            if *ph > 0.0 {
                *out.entry((next, Some(h))).or_insert(0.0) += p * ph;
            }
        }
    }
    Ok(out)
}

/// Total-variation distance between two distributions over the same keys.
pub fn total_variation<K: Ord + Clone>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<&K> = p.keys().chain(q.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}
