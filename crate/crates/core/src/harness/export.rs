//! Occupancy heatmaps and intervention-conditioned feature distributions.

use std::io::Write;

use serde::Serialize;

use crate::copilots::{moving_average, EpisodeLog, EpisodeStats, CURVE_WINDOW};
use crate::env::EnvKind;
use crate::error::{Error, Result};

/// Binning of the `(x, y)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapGrid {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub bins_x: usize,
    pub bins_y: usize,
}

impl HeatmapGrid {
    /// One bin per cell for a `width x height` gridworld.
    pub fn gridworld(width: usize, height: usize) -> Self {
        Self {
            x_range: (-0.5, width as f64 - 0.5),
            y_range: (-0.5, height as f64 - 0.5),
            bins_x: width,
            bins_y: height,
        }
    }

    /// The MiniLander flight envelope at `resolution x resolution`.
    pub fn lander(resolution: usize) -> Self {
        Self {
            x_range: (-1.2, 1.2),
            y_range: (0.0, 1.2),
            bins_x: resolution,
            bins_y: resolution,
        }
    }

    pub fn for_env(kind: EnvKind, resolution: usize, grid_size: Option<(usize, usize)>) -> Self {
        match (kind, grid_size) {
            (EnvKind::Gridworld, Some((w, h))) => Self::gridworld(w, h),
            _ => Self::lander(resolution),
        }
    }

    fn bin(value: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
        let t = ((value - lo) / (hi - lo) * bins as f64).floor();
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(bins - 1)
        }
    }

    fn index(&self, x: f64, y: f64) -> (usize, usize) {
        (Self::bin(x, self.x_range, self.bins_x), Self::bin(y, self.y_range, self.bins_y))
    }
}

/// Fractions of steps per bin; `cells[row][col]` with row = y bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub cells: Vec<Vec<f64>>,
    pub count: usize,
}

impl Heatmap {
    fn from_counts(counts: Vec<Vec<usize>>) -> Self {
        let count: usize = counts.iter().flatten().sum();
        let cells = counts
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| if count == 0 { 0.0 } else { c as f64 / count as f64 })
                    .collect()
            })
            .collect();
        Self { cells, count }
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in &self.cells {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Occupancy over all steps and over intervened steps, each normalized to
/// sum to one (all zeros when a set is empty). Positions are the first two
/// state features.
pub fn heatmap_export(logs: &[EpisodeLog], grid: &HeatmapGrid) -> Result<(Heatmap, Heatmap)> {
    if grid.bins_x == 0 || grid.bins_y == 0 {
        return Err(Error::config("resolution", "must be positive"));
    }
    let mut all = vec![vec![0usize; grid.bins_x]; grid.bins_y];
    let mut intervened = all.clone();
    for rec in logs.iter().flat_map(|l| &l.records) {
        let [x, y, ..] = rec.env_state[..] else {
            return Err(Error::contract("heatmaps need at least two state features"));
        };
        let (bx, by) = grid.index(x, y);
        all[by][bx] += 1;
        if rec.intervened {
            intervened[by][bx] += 1;
        }
    }
    Ok((Heatmap::from_counts(all), Heatmap::from_counts(intervened)))
}

/// Number of histogram bins in feature exports.
pub const HISTOGRAM_BINS: usize = 64;

/// One feature's values split by the intervened flag, with a shared
/// fixed-width histogram over the observed range.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistribution {
    pub feature: String,
    pub intervened: Vec<f64>,
    pub not_intervened: Vec<f64>,
    pub edges: Vec<f64>,
    pub intervened_counts: Vec<usize>,
    pub not_intervened_counts: Vec<usize>,
}

fn histogram(values: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &v in values {
        let b = if hi > lo {
            (((v - lo) / (hi - lo)) * HISTOGRAM_BINS as f64).floor() as usize
        } else {
            0
        };
        counts[b.min(HISTOGRAM_BINS - 1)] += 1;
    }
    counts
}

impl FeatureDistribution {
    pub fn mean_abs(values: &[f64]) -> f64 {
        if values.is_empty() {
            return f64::NAN;
        }
        values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64
    }
}

#[derive(Serialize)]
struct HistogramRow<'a> {
    feature: &'a str,
    bin_low: f64,
    bin_high: f64,
    intervened: usize,
    not_intervened: usize,
}

#[derive(Serialize)]
struct ValueRow<'a> {
    feature: &'a str,
    intervened: bool,
    value: f64,
}

/// Per-feature values split by the intervened flag. `names` labels the
/// state features in order.
pub fn feature_distribution_export(logs: &[EpisodeLog], names: &[&str]) -> Result<Vec<FeatureDistribution>> {
    let mut out: Vec<FeatureDistribution> = names
        .iter()
        .map(|n| FeatureDistribution {
            feature: n.to_string(),
            intervened: Vec::new(),
            not_intervened: Vec::new(),
            edges: Vec::new(),
            intervened_counts: Vec::new(),
            not_intervened_counts: Vec::new(),
        })
        .collect();
    for rec in logs.iter().flat_map(|l| &l.records) {
        if rec.env_state.len() < names.len() {
            return Err(Error::Dimension {
                expected: names.len(),
                actual: rec.env_state.len(),
            });
        }
        for (d, &v) in out.iter_mut().zip(&rec.env_state) {
            if rec.intervened {
                d.intervened.push(v);
            } else {
                d.not_intervened.push(v);
            }
        }
    }
    for d in &mut out {
        let all = d.intervened.iter().chain(&d.not_intervened);
        let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        d.edges = (0..=HISTOGRAM_BINS).map(|i| lo + width * i as f64).collect();
        d.intervened_counts = histogram(&d.intervened, lo, hi);
        d.not_intervened_counts = histogram(&d.not_intervened, lo, hi);
    }
    Ok(out)
}

pub fn write_histograms<W: Write>(out: W, dists: &[FeatureDistribution]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for d in dists {
        for b in 0..HISTOGRAM_BINS {
            w.serialize(HistogramRow {
                feature: &d.feature,
                bin_low: d.edges[b],
                bin_high: d.edges[b + 1],
                intervened: d.intervened_counts[b],
                not_intervened: d.not_intervened_counts[b],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_values<W: Write>(out: W, dists: &[FeatureDistribution]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for d in dists {
        for (flag, values) in [(true, &d.intervened), (false, &d.not_intervened)] {
            for &value in values {
                w.serialize(ValueRow {
                    feature: &d.feature,
                    intervened: flag,
                    value,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CurveRow {
    episode: usize,
    frames: usize,
    steps: usize,
    raw_return: f64,
    shaped_return: f64,
    interventions: usize,
    intervention_rate: f64,
    success: bool,
    lambda: Option<f64>,
    raw_return_smoothed: f64,
    intervention_rate_smoothed: f64,
}

/// Learning curves, one row per training episode, with trailing moving
/// averages over [`CURVE_WINDOW`] episodes.
pub fn write_curves<W: Write>(out: W, stats: &[EpisodeStats]) -> Result<()> {
    let returns: Vec<f64> = stats.iter().map(|s| s.raw_return).collect();
    let rates: Vec<f64> = stats.iter().map(EpisodeStats::intervention_rate).collect();
    let smooth_returns = moving_average(&returns, CURVE_WINDOW);
    let smooth_rates = moving_average(&rates, CURVE_WINDOW);
    let mut w = csv::Writer::from_writer(out);
    for (i, s) in stats.iter().enumerate() {
        w.serialize(CurveRow {
            episode: s.episode,
            frames: s.frames,
            steps: s.steps,
            raw_return: s.raw_return,
            shaped_return: s.shaped_return,
            interventions: s.interventions,
            intervention_rate: rates[i],
            success: s.success,
            lambda: s.lambda,
            raw_return_smoothed: smooth_returns[i],
            intervention_rate_smoothed: smooth_rates[i],
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::StepRecord;

    fn log(points: &[(f64, f64, bool)]) -> EpisodeLog {
        EpisodeLog {
            records: points
                .iter()
                .enumerate()
                .map(|(t, &(x, y, i))| StepRecord {
                    time: t,
                    env_state: vec![x, y, x * y],
                    human_action: 0,
                    agent_action: usize::from(i),
                    intervened: i,
                    raw_reward: 0.0,
                    shaped_reward: 0.0,
                    budget_after: None,
                    lambda_at_step: None,
                    success: None,
                })
                .collect(),
            success: false,
        }
    }

    #[test]
    fn heatmap_normalizes() {
        let logs = [log(&[(0.0, 0.0, false), (1.0, 0.0, true), (1.0, 0.0, false), (2.0, 1.0, false)])];
        let (all, inter) = heatmap_export(&logs, &HeatmapGrid::gridworld(3, 2)).unwrap();
        assert!((all.total() - 1.0).abs() < 1e-12);
        assert_eq!(all.cells[0][1], 0.5);
        assert_eq!(inter.cells[0][1], 1.0);
        let quiet = [log(&[(0.0, 0.0, false)])];
        let (_, inter) = heatmap_export(&quiet, &HeatmapGrid::gridworld(3, 2)).unwrap();
        assert_eq!(inter.count, 0);
        assert_eq!(inter.total(), 0.0);
    }

    #[test]
    fn curves_carry_smoothed_columns() {
        let stats: Vec<EpisodeStats> = (0..3)
            .map(|i| EpisodeStats {
                episode: i,
                frames: 10 * i,
                steps: 10,
                raw_return: i as f64,
                shaped_return: 0.0,
                interventions: i,
                success: false,
                lambda: None,
            })
            .collect();
        let mut buf = Vec::new();
        write_curves(&mut buf, &stats).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].ends_with("raw_return_smoothed,intervention_rate_smoothed"));
        // Trailing mean of returns 0, 1, 2 is 1; of rates 0, 0.1, 0.2 is 0.1.
        let tail: Vec<f64> = lines[3].rsplit(',').take(2).map(|v| v.parse().unwrap()).collect();
        assert!((tail[1] - 1.0).abs() < 1e-12 && (tail[0] - 0.1).abs() < 1e-12, "{}", lines[3]);
    }

    #[test]
    fn out_of_range_points_clamp() {
        let logs = [log(&[(-5.0, 9.0, false), (5.0, -9.0, false)])];
        let (all, _) = heatmap_export(&logs, &HeatmapGrid::lander(4)).unwrap();
        assert_eq!(all.cells[3][0], 0.5);
        assert_eq!(all.cells[0][3], 0.5);
    }

    #[test]
    fn feature_split_and_histogram_sums() {
        let logs = [log(&[(0.1, 0.2, true), (0.3, 0.4, true), (0.5, 0.9, true)])];
        let d = feature_distribution_export(&logs, &["x", "y", "xy"]).unwrap();
        assert!(d[0].not_intervened.is_empty());
        assert_eq!(d[1].intervened, vec![0.2, 0.4, 0.9]);
        for f in &d {
            assert_eq!(f.intervened_counts.iter().sum::<usize>(), 3);
            assert_eq!(f.edges.len(), HISTOGRAM_BINS + 1);
        }
        let mut buf = Vec::new();
        write_histograms(&mut buf, &d).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 * HISTOGRAM_BINS);
    }
}
