//! Step/reset simulator over an explicit [`TabularMdp`]. The observation is
//! the state id itself and every state is its own location.

use std::sync::Arc;

use rand::RngCore;

use super::{EpisodeStep, Environment, Featurizer};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::policies::sample_row;

#[derive(Debug, Clone)]
pub struct MdpSimulator {
    mdp: Arc<TabularMdp>,
    start: usize,
    horizon: usize,
    state: usize,
    t: usize,
}

impl MdpSimulator {
    /// Episodes start in `start` and end on a terminal state or after `horizon` steps.
    pub fn new(mdp: TabularMdp, start: usize, horizon: usize) -> Result<Self> {
        if start >= mdp.n_states() {
            return Err(Error::invalid(format!("start state {start} outside {} states", mdp.n_states())));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be positive"));
        }
        Ok(MdpSimulator { mdp: Arc::new(mdp), start, horizon, state: start, t: 0 })
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn featurizer(&self) -> StateFeaturizer {
        StateFeaturizer { n_states: self.mdp.n_states() }
    }
}

impl Environment for MdpSimulator {
    type Observation = usize;

    fn reset(&mut self, _rng: &mut dyn RngCore) -> usize {
        self.state = self.start;
        self.t = 0;
        self.state
    }

    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> EpisodeStep<usize> {
        let s = self.state;
        let reward = self.mdp.reward(s, action);
        self.state = sample_row(self.mdp.row(s, action), rng);
        self.t += 1;
        EpisodeStep {
            observation: s,
            action,
            reward,
            next_observation: self.state,
            done: self.mdp.is_terminal(self.state) || self.t >= self.horizon,
            location: self.state,
        }
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn state_id(&self) -> usize {
        self.state
    }

    fn location(&self) -> usize {
        self.state
    }

    fn location_names(&self) -> Vec<String> {
        (0..self.mdp.n_states()).map(|s| format!("s{s}")).collect()
    }

    fn succeeded(&self) -> bool {
        self.mdp.is_terminal(self.state)
    }
}

/// Identity featurizer over state ids.
#[derive(Debug, Clone, Copy)]
pub struct StateFeaturizer {
    n_states: usize,
}

impl Featurizer<usize> for StateFeaturizer {
    fn encode(&mut self, observation: &usize) -> Result<usize> {
        if *observation >= self.n_states {
            return Err(Error::invalid(format!("state {observation} outside {} states", self.n_states)));
        }
        Ok(*observation)
    }

    fn n_ids(&self) -> usize {
        self.n_states
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn walks_a_deterministic_chain_to_the_terminal() {
        let mdp = TabularMdp::builder(3, 1, 0.9)
            .transition(0, 0, 1, 1.0)
            .transition(1, 0, 2, 1.0)
            .reward(1, 0, 1.0)
            .absorbing(2)
            .build()
            .unwrap();
        let mut env = MdpSimulator::new(mdp, 0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(env.reset(&mut rng), 0);
        let first = env.step(0, &mut rng);
        assert!(!first.done && first.reward == 0.0);
        let second = env.step(0, &mut rng);
        assert!(second.done && second.reward == 1.0 && env.succeeded());
        assert!(env.featurizer().encode(&3).is_err());
    }
}
