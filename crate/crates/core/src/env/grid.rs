//! Slippery gridworld with stones, water and a single terminal goal.
//!
//! A move succeeds with probability 0.8, veers 90 degrees clockwise or
//! counter-clockwise with probability 0.05 each, and leaves the agent in
//! place with probability 0.1. Slips are sampled over *attempted*
//! directions; an attempted move into a stone or off the grid resolves to
//! staying put.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, ParseError, Result};
use crate::mdp::ActionId;

pub const UP: ActionId = 0;
pub const RIGHT: ActionId = 1;
pub const DOWN: ActionId = 2;
pub const LEFT: ActionId = 3;
pub const ACTION_COUNT: usize = 4;

pub const P_INTENDED: f64 = 0.8;
pub const P_VEER_CW: f64 = 0.05;
pub const P_VEER_CCW: f64 = 0.05;
pub const P_STAY: f64 = 0.1;

pub const GOAL_REWARD: f64 = 10.0;
pub const WATER_REWARD: f64 = -10.0;

pub const DEFAULT_STEP_LIMIT: usize = 100;

/// The shipped 8x8 layout.
pub const DEFAULT_MAP: &str = include_str!("../../data/default_map.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Stone,
    Water,
    Goal,
}

impl Cell {
    pub fn enterable(self) -> bool {
        !matches!(self, Cell::Stone)
    }
}

pub fn action_name(action: ActionId) -> &'static str {
    match action {
        UP => "up",
        RIGHT => "right",
        DOWN => "down",
        LEFT => "left",
        _ => "invalid",
    }
}

/// Direction after rotating `action` by 90 degrees clockwise (`+90`).
#[inline]
pub fn rotate_cw(action: ActionId) -> ActionId {
    (action + 1) % ACTION_COUNT
}

/// Direction after rotating `action` by 90 degrees counter-clockwise (`-90`).
#[inline]
pub fn rotate_ccw(action: ActionId) -> ActionId {
    (action + ACTION_COUNT - 1) % ACTION_COUNT
}

/// Validated rectangular map. Cells are indexed row-major, row 0 on top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    start: usize,
}

impl GridMap {
    pub fn new(width: usize, height: usize, cells: Vec<Cell>, start: usize) -> Result<Self> {
        if width == 0 || height == 0 || cells.len() != width * height {
            return Err(Error::contract("grid must be non-empty and rectangular"));
        }
        if start >= cells.len() || !matches!(cells[start], Cell::Empty) {
            return Err(Error::contract("start must be an empty cell"));
        }
        if !cells.contains(&Cell::Goal) {
            return Err(Error::contract("grid has no goal"));
        }
        Ok(Self {
            width,
            height,
            cells,
            start,
        })
    }

    pub fn default_map() -> Self {
        parse_map(DEFAULT_MAP).expect("shipped map is valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn cell(&self, index: usize) -> Cell {
        self.cells[index]
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn is_terminal(&self, index: usize) -> bool {
        self.cells[index] == Cell::Goal
    }

    /// Cells an agent can stand on and act from.
    pub fn active_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len()).filter(|&i| self.cells[i].enterable() && !self.is_terminal(i))
    }

    pub fn water_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len()).filter(|&i| self.cells[i] == Cell::Water)
    }

    /// Manhattan distance from `index` to the nearest water cell.
    pub fn distance_to_water(&self, index: usize) -> Option<usize> {
        let (x, y) = self.coords(index);
        self.water_cells()
            .map(|w| {
                let (wx, wy) = self.coords(w);
                x.abs_diff(wx) + y.abs_diff(wy)
            })
            .min()
    }

    /// Neighbour reached by moving one cell in `direction`, if it exists
    /// and is not a stone.
    pub fn neighbour(&self, index: usize, direction: ActionId) -> Option<usize> {
        let (x, y) = self.coords(index);
        let (nx, ny) = match direction {
            UP => (Some(x), y.checked_sub(1)),
            RIGHT => (Some(x + 1).filter(|&v| v < self.width), Some(y)),
            DOWN => (Some(x), Some(y + 1).filter(|&v| v < self.height)),
            LEFT => (x.checked_sub(1), Some(y)),
            _ => (None, None),
        };
        let next = self.index(nx?, ny?);
        self.cells[next].enterable().then_some(next)
    }

    /// Cell reached when the realized direction is `direction`.
    fn resolve(&self, index: usize, direction: Option<ActionId>) -> usize {
        direction
            .and_then(|d| self.neighbour(index, d))
            .unwrap_or(index)
    }

    /// Cells reachable from the start under any action sequence.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.cells.len()];
        let mut stack = vec![self.start];
        seen[self.start] = true;
        while let Some(cell) = stack.pop() {
            if self.is_terminal(cell) {
                continue;
            }
            for dir in 0..ACTION_COUNT {
                if let Some(n) = self.neighbour(cell, dir) {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        seen
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_map(self))
    }
}

/// Parses the ASCII map format: one row per line, `.` empty, `#` stone,
/// `W` water, `G` goal, `S` start (an empty cell).
pub fn parse_map(text: &str) -> std::result::Result<GridMap, ParseError> {
    let rows: Vec<&str> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect::<Vec<_>>();
    let rows = trim_trailing_blank(rows);
    if rows.is_empty() {
        return Err(ParseError::line(0, "empty map"));
    }
    let width = rows[0].chars().count();
    if width == 0 {
        return Err(ParseError::line(0, "empty row"));
    }
    let mut cells = Vec::with_capacity(width * rows.len());
    let mut start = None;
    for (r, row) in rows.iter().enumerate() {
        let len = row.chars().count();
        if len != width {
            return Err(ParseError::line(
                r,
                format!("ragged row: length {len}, expected {width}"),
            ));
        }
        for (c, ch) in row.chars().enumerate() {
            let cell = match ch {
                '.' => Cell::Empty,
                '#' => Cell::Stone,
                'W' => Cell::Water,
                'G' => Cell::Goal,
                'S' => {
                    if start.is_some() {
                        return Err(ParseError::at(r, c, "duplicate start"));
                    }
                    start = Some(r * width + c);
                    Cell::Empty
                }
                other => {
                    return Err(ParseError::at(r, c, format!("unexpected character {other:?}")));
                }
            };
            cells.push(cell);
        }
    }
    let start = start.ok_or_else(|| ParseError::line(rows.len(), "missing start"))?;
    if !cells.contains(&Cell::Goal) {
        return Err(ParseError::line(rows.len(), "missing goal"));
    }
    Ok(GridMap {
        width,
        height: rows.len(),
        cells,
        start,
    })
}

pub(crate) fn trim_trailing_blank(mut rows: Vec<&str>) -> Vec<&str> {
    while rows.last().is_some_and(|r| r.is_empty()) {
        rows.pop();
    }
    rows
}

pub fn render_map(map: &GridMap) -> String {
    let mut out = String::with_capacity((map.width + 1) * map.height);
    for y in 0..map.height {
        for x in 0..map.width {
            let i = map.index(x, y);
            let ch = if i == map.start {
                'S'
            } else {
                match map.cells[i] {
                    Cell::Empty => '.',
                    Cell::Stone => '#',
                    Cell::Water => 'W',
                    Cell::Goal => 'G',
                }
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

/// Reward and termination for the move `from -> to`.
pub fn grid_reward(map: &GridMap, from: usize, to: usize) -> (f64, bool) {
    match map.cell(to) {
        Cell::Goal => (GOAL_REWARD, true),
        Cell::Water if to != from => (WATER_REWARD, false),
        _ => (0.0, false),
    }
}

fn check_active(map: &GridMap, cell: usize, action: ActionId) -> Result<()> {
    if cell >= map.len() || !map.cell(cell).enterable() {
        return Err(Error::contract(format!("cell {cell} is not enterable")));
    }
    if map.is_terminal(cell) {
        return Err(Error::contract("step from terminal cell"));
    }
    if action >= ACTION_COUNT {
        return Err(Error::contract(format!("invalid gridworld action {action}")));
    }
    Ok(())
}

/// Exact next-cell distribution for `(cell, action)`, merged over slips
/// that land on the same cell.
pub fn grid_transitions(map: &GridMap, cell: usize, action: ActionId) -> Result<BTreeMap<usize, f64>> {
    check_active(map, cell, action)?;
    let mut table = BTreeMap::new();
    let outcomes = [
        (Some(action), P_INTENDED),
        (Some(rotate_cw(action)), P_VEER_CW),
        (Some(rotate_ccw(action)), P_VEER_CCW),
        (None, P_STAY),
    ];
    for (direction, p) in outcomes {
        *table.entry(map.resolve(cell, direction)).or_insert(0.0) += p;
    }
    Ok(table)
}

/// Samples one transition. Returns `(next_cell, reward, done)`.
pub fn grid_step(map: &GridMap, cell: usize, action: ActionId, rng: &mut ChaCha8Rng) -> Result<(usize, f64, bool)> {
    check_active(map, cell, action)?;
    let u: f64 = rng.gen();
    let direction = if u < P_INTENDED {
        Some(action)
    } else if u < P_INTENDED + P_VEER_CW {
        Some(rotate_cw(action))
    } else if u < P_INTENDED + P_VEER_CW + P_VEER_CCW {
        Some(rotate_ccw(action))
    } else {
        None
    };
    let next = map.resolve(cell, direction);
    let (reward, done) = grid_reward(map, cell, next);
    Ok((next, reward, done))
}

/// Similarity used by the baseline arbitration: 2 for equal directions,
/// 1 for perpendicular, 0 for opposite.
pub fn grid_similarity(a: ActionId, b: ActionId) -> f64 {
    if a == b {
        2.0
    } else if (a + 2) % ACTION_COUNT == b {
        0.0
    } else {
        1.0
    }
}
