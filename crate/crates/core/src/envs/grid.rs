//! Small key/door grid tasks with partial observation and a goal reward that
//! decays with elapsed time.
//!
//! # Layout format
//!
//! One text row per grid row, all rows the same width:
//!
//! ```text
//! #######
//! #A.K..#
//! ###D###
//! #....G#
//! #######
//! ```
//!
//! `#` wall, `.` floor, `A` agent start, `K` key, `D` locked door, `G` goal.
//! Exactly one `A` and one `G`; at most one `K` and one `D`.
//!
//! Actions: `0` up, `1` down, `2` left, `3` right, `4` pick up the key on
//! the agent's cell, `5` open an adjacent door (requires the key).

use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{EpisodeStep, Environment, Featurizer};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub const N_GRID_ACTIONS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Floor,
    Goal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTaskConfig {
    pub width: usize,
    pub height: usize,
    /// Row-major static cells.
    pub cells: Vec<Cell>,
    pub agent: (usize, usize),
    pub key: Option<(usize, usize)>,
    pub door: Option<(usize, usize)>,
    pub goal: (usize, usize),
    pub view_radius: usize,
    /// Goal reward if reached at step 0.
    pub goal_reward: f64,
    /// Goal reward lost per elapsed step.
    pub decay: f64,
    pub gamma: f64,
    pub horizon: usize,
    /// Largest state count for which a tabular export is built.
    pub export_cap: usize,
}

impl GridTaskConfig {
    pub fn from_layout(layout: &str) -> Result<Self> {
        let rows: Vec<&str> = layout.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if height == 0 || width == 0 || rows.iter().any(|r| r.chars().count() != width) {
            return Err(Error::invalid("grid layout must be a non-empty rectangle"));
        }
        let mut cells = Vec::with_capacity(width * height);
        let (mut agent, mut key, mut door, mut goal) = (None, None, None, None);
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                let put = |slot: &mut Option<(usize, usize)>, what: &str| {
                    if slot.replace((x, y)).is_some() {
                        Err(Error::invalid(format!("layout has more than one {what}")))
                    } else {
                        Ok(())
                    }
                };
                cells.push(match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Floor,
                    'A' => {
                        put(&mut agent, "agent")?;
                        Cell::Floor
                    }
                    'K' => {
                        put(&mut key, "key")?;
                        Cell::Floor
                    }
                    'D' => {
                        put(&mut door, "door")?;
                        Cell::Floor
                    }
                    'G' => {
                        put(&mut goal, "goal")?;
                        Cell::Goal
                    }
                    other => {
                        return Err(Error::Parse { line: y + 1, message: format!("unknown layout char `{other}`") })
                    }
                });
            }
        }
        let config = GridTaskConfig {
            width,
            height,
            cells,
            agent: agent.ok_or_else(|| Error::invalid("layout has no agent `A`"))?,
            key,
            door,
            goal: goal.ok_or_else(|| Error::invalid("layout has no goal `G`"))?,
            view_radius: 1,
            goal_reward: 1.0,
            decay: 0.0,
            gamma: 0.95,
            horizon: 100,
            export_cap: 100_000,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.len() != self.width * self.height {
            return Err(Error::invalid("cell table does not match grid size"));
        }
        let inside = |p: (usize, usize)| p.0 < self.width && p.1 < self.height;
        for (name, p) in [("agent", Some(self.agent)), ("key", self.key), ("door", self.door), ("goal", Some(self.goal))] {
            if let Some(p) = p {
                if !inside(p) || self.cells[p.1 * self.width + p.0] == Cell::Wall {
                    return Err(Error::invalid(format!("{name} at {p:?} is outside the grid or in a wall")));
                }
            }
        }
        if self.view_radius < 1 {
            return Err(Error::invalid("view radius must be at least 1"));
        }
        if !(self.goal_reward.is_finite() && self.decay.is_finite() && self.decay >= 0.0) {
            return Err(Error::invalid("goal reward and decay must be finite, decay >= 0"));
        }
        if !(0.0..1.0).contains(&self.gamma) || self.horizon == 0 {
            return Err(Error::invalid("need gamma in [0, 1) and a positive horizon"));
        }
        Ok(())
    }

    fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    /// Tabular state count: position x key held x door open, plus terminal.
    pub fn n_states(&self) -> usize {
        self.width * self.height * 4 + 1
    }

    pub fn terminal_id(&self) -> usize {
        self.n_states() - 1
    }

    fn id(&self, s: &GridState) -> usize {
        ((s.pos.1 * self.width + s.pos.0) * 2 + usize::from(s.has_key)) * 2 + usize::from(s.door_open)
    }

    fn decode(&self, id: usize) -> GridState {
        let door_open = id & 1 == 1;
        let has_key = (id >> 1) & 1 == 1;
        let cell = id >> 2;
        GridState { pos: (cell % self.width, cell / self.width), has_key, door_open }
    }

    fn blocked(&self, s: &GridState, x: usize, y: usize) -> bool {
        self.cell(x, y) == Cell::Wall || (self.door == Some((x, y)) && !s.door_open)
    }

    /// Deterministic effect of an action: `(next state, reached goal)`.
    fn apply(&self, s: &GridState, action: usize) -> (GridState, bool) {
        let mut n = *s;
        let (x, y) = s.pos;
        let target = match action {
            0 if y > 0 => Some((x, y - 1)),
            1 if y + 1 < self.height => Some((x, y + 1)),
            2 if x > 0 => Some((x - 1, y)),
            3 if x + 1 < self.width => Some((x + 1, y)),
            _ => None,
        };
        match action {
            0..=3 => {
                if let Some((tx, ty)) = target {
                    if !self.blocked(s, tx, ty) {
                        n.pos = (tx, ty);
                    }
                }
            }
            4 => {
                if self.key == Some(s.pos) {
                    n.has_key = true;
                }
            }
            5 => {
                if let Some(d) = self.door {
                    let adjacent = d.0.abs_diff(x) + d.1.abs_diff(y) == 1;
                    if adjacent && s.has_key {
                        n.door_open = true;
                    }
                }
            }
            _ => {}
        }
        (n, n.pos == self.goal)
    }

    fn window(&self, s: &GridState) -> Vec<u8> {
        let r = self.view_radius as isize;
        let mut out = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for dy in -r..=r {
            for dx in -r..=r {
                let x = s.pos.0 as isize + dx;
                let y = s.pos.1 as isize + dy;
                let code = if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
                    0
                } else {
                    let (x, y) = (x as usize, y as usize);
                    if self.door == Some((x, y)) {
                        if s.door_open { 4 } else { 3 }
                    } else if self.key == Some((x, y)) && !s.has_key {
                        2
                    } else {
                        match self.cell(x, y) {
                            Cell::Wall => 0,
                            Cell::Floor => 1,
                            Cell::Goal => 5,
                        }
                    }
                };
                out.push(code);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct GridState {
    pos: (usize, usize),
    has_key: bool,
    door_open: bool,
}

/// Egocentric view: cell codes in a `(2r+1)^2` window plus the inventory.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridObservation {
    pub window: Vec<u8>,
    pub has_key: bool,
}

#[derive(Debug, Clone)]
pub struct GridTask {
    config: GridTaskConfig,
    state: GridState,
    t: usize,
    done: bool,
    succeeded: bool,
}

impl GridTask {
    pub fn new(config: GridTaskConfig) -> Result<Self> {
        config.validate()?;
        let state = GridState { pos: config.agent, has_key: false, door_open: false };
        Ok(GridTask { config, state, t: 0, done: false, succeeded: false })
    }

    /// Environment, featurizer and (when under the cap) the tabular export.
    pub fn build(config: GridTaskConfig) -> Result<(Self, GridFeaturizer, Result<TabularMdp>)> {
        let env = GridTask::new(config)?;
        let feat = GridFeaturizer::new(env.config.view_radius);
        let mdp = env.export_mdp();
        Ok((env, feat, mdp))
    }

    pub fn config(&self) -> &GridTaskConfig {
        &self.config
    }

    pub fn start_state(&self) -> usize {
        self.config.id(&GridState { pos: self.config.agent, has_key: false, door_open: false })
    }

    /// Whether tabular state `id` holds the key / has the door open.
    pub fn key_and_door(&self, id: usize) -> (bool, bool) {
        let s = self.config.decode(id);
        (s.has_key, s.door_open)
    }

    /// Tabular export. The time-decaying goal reward is folded into a
    /// per-step penalty of `decay` plus `goal_reward` on arrival, which gives
    /// the same undiscounted return as the simulator.
    pub fn export_mdp(&self) -> Result<TabularMdp> {
        let c = &self.config;
        let n = c.n_states();
        if n > c.export_cap {
            return Err(Error::ExportUnavailable { states: n, cap: c.export_cap });
        }
        let term = c.terminal_id();
        let mut b = TabularMdp::builder(n, N_GRID_ACTIONS, c.gamma);
        for id in 0..term {
            let s = c.decode(id);
            let reachable_shape = c.cell(s.pos.0, s.pos.1) != Cell::Wall && s.pos != c.goal;
            for a in 0..N_GRID_ACTIONS {
                if !reachable_shape {
                    // unreachable placeholder states just loop
                    b = b.transition(id, a, id, 1.0);
                    continue;
                }
                let (next, goal) = c.apply(&s, a);
                let mut r = -c.decay;
                if goal {
                    r += c.goal_reward;
                    b = b.transition(id, a, term, 1.0);
                } else {
                    b = b.transition(id, a, c.id(&next), 1.0);
                }
                b = b.reward(id, a, r);
            }
        }
        b.absorbing(term).build()
    }

    fn observe(&self) -> GridObservation {
        GridObservation { window: self.config.window(&self.state), has_key: self.state.has_key }
    }

    pub fn render(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        for y in 0..c.height {
            for x in 0..c.width {
                let ch = if self.state.pos == (x, y) {
                    'A'
                } else if c.door == Some((x, y)) {
                    if self.state.door_open { '/' } else { 'D' }
                } else if c.key == Some((x, y)) && !self.state.has_key {
                    'K'
                } else {
                    match c.cell(x, y) {
                        Cell::Wall => '#',
                        Cell::Floor => '.',
                        Cell::Goal => 'G',
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

impl Environment for GridTask {
    type Observation = GridObservation;

    fn reset(&mut self, _rng: &mut dyn RngCore) -> GridObservation {
        self.state = GridState { pos: self.config.agent, has_key: false, door_open: false };
        self.t = 0;
        self.done = false;
        self.succeeded = false;
        self.observe()
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> EpisodeStep<GridObservation> {
        let observation = self.observe();
        let (next, goal) = self.config.apply(&self.state, action);
        self.state = next;
        self.t += 1;
        let reward = if goal {
            (self.config.goal_reward - self.config.decay * self.t as f64).max(0.0)
        } else {
            0.0
        };
        self.succeeded = goal;
        self.done = goal || self.t >= self.config.horizon;
        EpisodeStep {
            observation,
            action,
            reward,
            next_observation: self.observe(),
            done: self.done,
            location: self.location(),
        }
    }

    fn n_actions(&self) -> usize {
        N_GRID_ACTIONS
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn state_id(&self) -> usize {
        if self.succeeded {
            self.config.terminal_id()
        } else {
            self.config.id(&self.state)
        }
    }

    fn location(&self) -> usize {
        self.state.pos.1 * self.config.width + self.state.pos.0
    }

    fn location_names(&self) -> Vec<String> {
        (0..self.config.height)
            .flat_map(|y| (0..self.config.width).map(move |x| format!("{x}:{y}")))
            .collect()
    }

    fn goal_distance(&self) -> Option<f64> {
        let (x, y) = self.state.pos;
        Some((x.abs_diff(self.config.goal.0) + y.abs_diff(self.config.goal.1)) as f64)
    }

    fn succeeded(&self) -> bool {
        self.succeeded
    }
}

/// Assigns ids to distinct (window, inventory) observations in order of
/// first appearance.
#[derive(Debug, Clone)]
pub struct GridFeaturizer {
    window_len: usize,
    ids: HashMap<GridObservation, usize>,
}

impl GridFeaturizer {
    pub fn new(view_radius: usize) -> Self {
        let side = 2 * view_radius + 1;
        GridFeaturizer { window_len: side * side, ids: HashMap::new() }
    }
}

impl Featurizer<GridObservation> for GridFeaturizer {
    fn encode(&mut self, obs: &GridObservation) -> Result<usize> {
        if obs.window.len() != self.window_len {
            return Err(Error::invalid(format!(
                "observation window has {} cells, expected {}",
                obs.window.len(),
                self.window_len
            )));
        }
        let next = self.ids.len();
        Ok(*self.ids.entry(obs.clone()).or_insert(next))
    }

    fn n_ids(&self) -> usize {
        self.ids.len()
    }
}
