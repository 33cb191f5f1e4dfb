//! Evaluation, sweeps and analysis exports.

pub mod export;
pub mod oracle;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::copilots::{deploy_episode, EpisodeLog, TrainedCopilot};
use crate::env::{EnvSpec, Observation};
use crate::mdp::ActionId;
use crate::error::{Error, Result};
use crate::pilots::Pilot;
use crate::rng::{derive_seed, stream};

pub use export::{
    feature_distribution_export, heatmap_export, write_curves, FeatureDistribution, Heatmap, HeatmapGrid,
};
pub use sweep::{parse_ledger, read_rows, run_sweep, write_rows, SweepRow, SweepSpec};

/// Aggregate statistics over a set of evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_return: f64,
    pub stderr_return: f64,
    pub intervention_rate: f64,
    pub success_rate: f64,
    pub episodes: usize,
    pub steps: usize,
    pub interventions: usize,
}

impl Metrics {
    pub fn from_logs(logs: &[EpisodeLog]) -> Self {
        let returns: Vec<f64> = logs.iter().map(EpisodeLog::total_return).collect();
        let (mean, stderr) = mean_and_stderr(&returns);
        let steps: usize = logs.iter().map(EpisodeLog::steps).sum();
        let interventions: usize = logs.iter().map(EpisodeLog::interventions).sum();
        let successes = logs.iter().filter(|l| l.success).count();
        Self {
            mean_return: mean,
            stderr_return: stderr,
            intervention_rate: if steps == 0 {
                0.0
            } else {
                interventions as f64 / steps as f64
            },
            success_rate: if logs.is_empty() {
                0.0
            } else {
                successes as f64 / logs.len() as f64
            },
            episodes: logs.len(),
            steps,
            interventions,
        }
    }
}

/// Sample mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Seed of the `index`-th evaluation episode under `seed`. An interactive
/// session created with seed `s` replays episode 0 of `evaluate(.., s)`.
pub fn episode_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, stream::EPISODE, index as u64)
}

/// Greedy evaluation over `episodes` seeded episodes. With `copilot = None`
/// the pilot flies unassisted; `budget` overrides a budget copilot's `B`.
pub fn evaluate(
    copilot: Option<&TrainedCopilot>,
    mut pilot: Option<&mut dyn Pilot>,
    env: &EnvSpec,
    episodes: usize,
    seed: u64,
    budget: Option<u32>,
) -> Result<(Metrics, Vec<EpisodeLog>)> {
    if episodes == 0 {
        return Err(Error::config("episodes", "must be positive"));
    }
    let env = env.resolve(None)?;
    let mut logs = Vec::with_capacity(episodes);
    for i in 0..episodes {
        logs.push(deploy_episode(copilot, pilot.as_deref_mut().map(|p| p as &mut dyn Pilot), &env, budget, episode_seed(seed, i))?);
    }
    Ok((Metrics::from_logs(&logs), logs))
}

/// Gridworld cells where the greedy copilot overrides the pilot's action
/// `pilot(cell)`, evaluated at full budget.
pub fn grid_intervention_cells(copilot: &TrainedCopilot, pilot: impl Fn(usize) -> ActionId) -> Result<Vec<usize>> {
    let map = copilot
        .env
        .grid_map()?
        .ok_or_else(|| Error::contract("intervention cells need a gridworld copilot"))?;
    let mut cells = Vec::new();
    for cell in map.active_cells() {
        let (x, y) = map.coords(cell);
        let obs = Observation {
            features: vec![x as f64, y as f64],
            cell: Some(cell),
        };
        let human = pilot(cell);
        let enc = copilot.encoding.encode(&obs, Some(human), copilot.method.initial_budget())?;
        if copilot.qfunction.greedy(&enc)? != human {
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// Kendall's tau-b rank correlation; 0 when either side is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "paired samples required");
    let n = x.len();
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap_or(std::cmp::Ordering::Equal);
            let dy = y[i].partial_cmp(&y[j]).unwrap_or(std::cmp::Ordering::Equal);
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => ties_x += 1,
                (_, Equal) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let denom = (((concordant + discordant + ties_x) * (concordant + discordant + ties_y)) as f64).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

/// Hyperparameter grids for each method.
pub mod grids {
    pub fn alpha() -> Vec<f64> {
        (0..=10).map(|i| f64::from(i) / 10.0).collect()
    }

    pub fn budget() -> Vec<f64> {
        [0, 25, 50, 75, 100, 125, 150, 175, 200, 225, 250, 275, 300, 400, 500, 1000]
            .iter()
            .map(|&b| f64::from(b))
            .collect()
    }

    pub fn penalty() -> Vec<f64> {
        vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
    }

    pub fn intervention_rate() -> Vec<f64> {
        (0..=10).map(|i| f64::from(i) / 10.0).collect()
    }

    /// Penalties of the gridworld intervention-state analysis.
    pub fn gridworld_penalty() -> Vec<f64> {
        vec![3.0, 2.0, 1.0, 0.5, 0.1, 0.0]
    }

    /// The grid for a method name, if it has one.
    pub fn for_method(method: &str) -> Option<Vec<f64>> {
        match method {
            "baseline" => Some(alpha()),
            "budget" => Some(budget()),
            "penalty" => Some(penalty()),
            "penalty_adapt" => Some(intervention_rate()),
            _ => None,
        }
    }
}
