//! A hallway with rooms hanging off it. The agent starts in one room, must
//! go through the hallway, pick the goal room and complete the task there.
//! Picking the wrong room at the hallway costs a round trip, so the hallway
//! is the bottleneck where a better policy pays off most.
//!
//! Locations: `0` is the hallway, `1..=n_rooms` are rooms. Actions:
//! `0..n_rooms` enter room `a + 1` (only from the hallway), `n_rooms` returns
//! to the hallway (only from a room), `n_rooms + 1` attempts the task (only
//! succeeds in the goal room). Invalid actions leave the agent in place.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{EpisodeStep, Environment, Featurizer};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub const HALLWAY: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomsWorldConfig {
    pub n_rooms: usize,
    pub start_room: usize,
    pub goal_room: usize,
    /// `(location, reward)` paid on first entry to each location.
    pub subgoal_rewards: Vec<(usize, f64)>,
    pub goal_reward: f64,
    /// Subtracted from every step's reward.
    pub step_penalty: f64,
    pub horizon: usize,
    pub gamma: f64,
    /// Probability that the executed action is replaced by a uniform one.
    pub slip: f64,
}

impl Default for RoomsWorldConfig {
    fn default() -> Self {
        RoomsWorldConfig {
            n_rooms: 6,
            start_room: 1,
            goal_room: 4,
            subgoal_rewards: vec![(4, 0.5)],
            goal_reward: 1.0,
            step_penalty: 0.01,
            horizon: 50,
            gamma: 0.95,
            slip: 0.0,
        }
    }
}

impl RoomsWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let room = |r: usize| (1..=self.n_rooms).contains(&r);
        if self.n_rooms < 2 {
            return Err(Error::invalid("rooms world needs at least 2 rooms"));
        }
        if !room(self.goal_room) || !room(self.start_room) {
            return Err(Error::invalid(format!(
                "start room {} / goal room {} must be in 1..={}",
                self.start_room, self.goal_room, self.n_rooms
            )));
        }
        if self.horizon < self.n_rooms + 2 {
            return Err(Error::invalid(format!(
                "horizon {} shorter than n_rooms + 2 = {}",
                self.horizon,
                self.n_rooms + 2
            )));
        }
        if self.subgoal_rewards.len() > 16 {
            return Err(Error::invalid("at most 16 subgoals are supported"));
        }
        for &(loc, r) in &self.subgoal_rewards {
            if loc > self.n_rooms || !r.is_finite() {
                return Err(Error::invalid(format!("bad subgoal ({loc}, {r})")));
            }
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(Error::invalid(format!("slip {} not in [0, 1]", self.slip)));
        }
        if !(self.goal_reward.is_finite() && self.step_penalty.is_finite()) {
            return Err(Error::invalid("rewards must be finite"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.n_rooms + 2
    }

    fn n_masks(&self) -> usize {
        1 << self.subgoal_rewards.len()
    }

    /// Tabular state count including the terminal state.
    pub fn n_states(&self) -> usize {
        (self.n_rooms + 1) * self.n_masks() + 1
    }

    pub fn terminal_id(&self) -> usize {
        self.n_states() - 1
    }

    fn id(&self, location: usize, mask: usize) -> usize {
        location * self.n_masks() + mask
    }

    /// Deterministic effect of `action` from `(location, mask)`:
    /// `(next location, next mask, reward, done)`.
    fn transition(&self, location: usize, mask: usize, action: usize) -> (usize, usize, f64, bool) {
        let mut reward = -self.step_penalty;
        let next = if action < self.n_rooms {
            if location == HALLWAY {
                action + 1
            } else {
                location
            }
        } else if action == self.n_rooms {
            HALLWAY
        } else {
            if location == self.goal_room {
                return (location, mask, reward + self.goal_reward, true);
            }
            location
        };
        let mut mask = mask;
        if next != location {
            for (i, &(loc, r)) in self.subgoal_rewards.iter().enumerate() {
                if loc == next && mask & (1 << i) == 0 {
                    mask |= 1 << i;
                    reward += r;
                }
            }
        }
        (next, mask, reward, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoomsObservation {
    pub location: usize,
    pub collected: usize,
    /// Task completed (the episode sits in the terminal state).
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct RoomsWorld {
    config: RoomsWorldConfig,
    location: usize,
    mask: usize,
    done: bool,
    succeeded: bool,
    t: usize,
}

impl RoomsWorld {
    pub fn new(config: RoomsWorldConfig) -> Result<Self> {
        config.validate()?;
        let location = config.start_room;
        Ok(RoomsWorld { config, location, mask: 0, done: false, succeeded: false, t: 0 })
    }

    /// Environment, exact MDP export and featurizer.
    pub fn build(config: RoomsWorldConfig) -> Result<(Self, TabularMdp, RoomsFeaturizer)> {
        let env = RoomsWorld::new(config)?;
        let mdp = env.export_mdp()?;
        let feat = RoomsFeaturizer { config: env.config.clone() };
        Ok((env, mdp, feat))
    }

    pub fn config(&self) -> &RoomsWorldConfig {
        &self.config
    }

    pub fn start_state(&self) -> usize {
        self.config.id(self.config.start_room, 0)
    }

    /// Location of a tabular state id (terminal maps to the goal room).
    pub fn location_of(&self, state: usize) -> usize {
        if state == self.config.terminal_id() {
            self.config.goal_room
        } else {
            state / self.config.n_masks()
        }
    }

    pub fn export_mdp(&self) -> Result<TabularMdp> {
        let c = &self.config;
        let na = c.n_actions();
        let term = c.terminal_id();
        let mut b = TabularMdp::builder(c.n_states(), na, c.gamma);
        for location in 0..=c.n_rooms {
            for mask in 0..c.n_masks() {
                let s = c.id(location, mask);
                for a in 0..na {
                    let mut reward = 0.0;
                    let mut row = vec![0.0; c.n_states()];
                    for (b_act, w) in effective_actions(a, na, c.slip) {
                        let (loc2, mask2, r, done) = c.transition(location, mask, b_act);
                        let next = if done { term } else { c.id(loc2, mask2) };
                        row[next] += w;
                        reward += w * r;
                    }
                    for (next, p) in row.into_iter().enumerate() {
                        if p > 0.0 {
                            b = b.transition(s, a, next, p);
                        }
                    }
                    b = b.reward(s, a, reward);
                }
            }
        }
        b.absorbing(term).build()
    }

    fn observe(&self) -> RoomsObservation {
        RoomsObservation { location: self.location, collected: self.mask, finished: self.succeeded }
    }

    /// Debug text rendering of the current state.
    pub fn render(&self) -> String {
        let names = self.location_names();
        format!(
            "t={} at {} (goal {}), subgoals {:0w$b}{}",
            self.t,
            names[self.location],
            names[self.config.goal_room],
            self.mask,
            if self.done { " [done]" } else { "" },
            w = self.config.subgoal_rewards.len().max(1)
        )
    }
}

/// `(effective action, weight)` pairs under slip.
fn effective_actions(a: usize, na: usize, slip: f64) -> Vec<(usize, f64)> {
    (0..na)
        .map(|b| {
            let w = slip / na as f64 + if a == b { 1.0 - slip } else { 0.0 };
            (b, w)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect()
}

impl Environment for RoomsWorld {
    type Observation = RoomsObservation;

    fn reset(&mut self, _rng: &mut dyn RngCore) -> RoomsObservation {
        self.location = self.config.start_room;
        self.mask = 0;
        self.done = false;
        self.succeeded = false;
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> EpisodeStep<RoomsObservation> {
        let observation = self.observe();
        let na = self.n_actions();
        let executed = if self.config.slip > 0.0 && rng.gen::<f64>() < self.config.slip {
            rng.gen_range(0..na)
        } else {
            action
        };
        let (loc, mask, reward, finished) = self.config.transition(self.location, self.mask, executed);
        self.location = loc;
        self.mask = mask;
        self.t += 1;
        self.succeeded = finished;
        self.done = finished || self.t >= self.config.horizon;
        EpisodeStep {
            observation,
            action,
            reward,
            next_observation: self.observe(),
            done: self.done,
            location: self.location,
        }
    }

    fn n_actions(&self) -> usize {
        self.config.n_actions()
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn state_id(&self) -> usize {
        if self.succeeded {
            self.config.terminal_id()
        } else {
            self.config.id(self.location, self.mask)
        }
    }

    fn location(&self) -> usize {
        self.location
    }

    fn location_names(&self) -> Vec<String> {
        std::iter::once("hallway".to_string())
            .chain((1..=self.config.n_rooms).map(|r| format!("room{r}")))
            .collect()
    }

    fn goal_distance(&self) -> Option<f64> {
        Some(if self.location == self.config.goal_room {
            0.0
        } else if self.location == HALLWAY {
            1.0
        } else {
            2.0
        })
    }

    fn succeeded(&self) -> bool {
        self.succeeded
    }
}

/// Exact featurization: observation -> tabular state id.
#[derive(Debug, Clone)]
pub struct RoomsFeaturizer {
    config: RoomsWorldConfig,
}

impl Featurizer<RoomsObservation> for RoomsFeaturizer {
    fn encode(&mut self, obs: &RoomsObservation) -> Result<usize> {
        if obs.location > self.config.n_rooms || obs.collected >= self.config.n_masks() {
            return Err(Error::invalid(format!("observation {obs:?} does not fit this rooms world")));
        }
        Ok(if obs.finished {
            self.config.terminal_id()
        } else {
            self.config.id(obs.location, obs.collected)
        })
    }

    fn n_ids(&self) -> usize {
        self.config.n_states()
    }
}
