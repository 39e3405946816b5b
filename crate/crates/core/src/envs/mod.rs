//! Desk-scale environments. Each exposes a step/reset simulator and an exact
//! [`TabularMdp`](crate::mdp::TabularMdp) export for the DP oracles.

mod grid;
mod rooms;
mod tabular;

pub use grid::{GridFeaturizer, GridObservation, GridTask, GridTaskConfig, Cell};
pub use rooms::{RoomsFeaturizer, RoomsObservation, RoomsWorld, RoomsWorldConfig, HALLWAY};
pub use tabular::{MdpSimulator, StateFeaturizer};

use rand::RngCore;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep<O> {
    pub observation: O,
    pub action: usize,
    pub reward: f64,
    pub next_observation: O,
    /// Task finished (terminal state) or horizon reached.
    pub done: bool,
    /// Location id after the step, for heatmaps.
    pub location: usize,
}

pub trait Environment: Clone + Send {
    type Observation: Clone + std::fmt::Debug;

    fn reset(&mut self, rng: &mut dyn RngCore) -> Self::Observation;
    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> EpisodeStep<Self::Observation>;
    fn n_actions(&self) -> usize;
    fn horizon(&self) -> usize;

    /// Index of the full simulator state in the tabular export. Action
    /// policies act on this; the switcher only sees the featurized observation.
    fn state_id(&self) -> usize;

    /// Current location id.
    fn location(&self) -> usize;

    /// Human-readable names indexed by location id.
    fn location_names(&self) -> Vec<String>;

    /// Distance from the current location to the goal, where defined.
    fn goal_distance(&self) -> Option<f64> {
        None
    }

    /// Whether the episode ended by completing the task.
    fn succeeded(&self) -> bool {
        false
    }
}

/// Maps observations to stable discrete state ids.
pub trait Featurizer<O> {
    fn encode(&mut self, observation: &O) -> Result<usize>;

    /// Number of ids handed out so far (or the fixed id-space size).
    fn n_ids(&self) -> usize;
}
