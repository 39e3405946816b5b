//! Model-free switcher training: the plain and budgeted switching loops, the
//! switched Q-learning update, and baseline switch policies.
//!
//! Randomness is split into independent streams (environment, action
//! policies, switch decisions, persistence draws, replay sampling) so that
//! changing one consumer never shifts the draws of another.

mod baselines;
mod buffer;
mod learner;
mod log;
mod qlearn;
mod rollout;

pub use baselines::{make_baseline_switcher, BaselineKind, BaselineSwitch};
pub use buffer::{ReplayBuffer, ReplayTransition};
pub use learner::{Exploration, GreedySwitch, LearningRate, SwitcherLearner};
pub use log::{validate_trace, StepRecord, TraceRules, TrainLog};
pub use qlearn::{run_switched_q_learning, sample_next_state, switched_q_update, BaseTransition};
pub use rollout::{
    run_episode, BudgetRule, DecisionContext, Decider, EpisodeOutcome, RolloutSettings, RunRngs,
    SwitchState,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Environment, Featurizer};
use crate::error::{Error, Result};
use crate::policies::{CostLedger, PolicyProvider};

/// Stream ids used with [`stream_rng`].
pub mod streams {
    pub const TRAIN_ENV: u64 = 0;
    pub const TRAIN_POLICY: u64 = 1;
    pub const TRAIN_SWITCH: u64 = 2;
    pub const TRAIN_PERSIST: u64 = 3;
    pub const TRAIN_REPLAY: u64 = 4;
    pub const EVAL_ENV: u64 = 8;
    pub const EVAL_POLICY: u64 = 9;
    pub const EVAL_SWITCH: u64 = 10;
    pub const EVAL_PERSIST: u64 = 11;
    pub const MISC: u64 = 15;
}

/// Counter-based stream derivation: the ChaCha key comes from `seed`, the
/// stream id selects an independent keystream. Runs with different seeds
/// never share draws, so adding a seed leaves every other run unchanged.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Caps the environment's own horizon when set.
    pub horizon: Option<usize>,
    pub persistence_p: f64,
    pub cost: f64,
    /// Activation budget (budgeted loop only).
    pub budget: u32,
    /// Per-step penalty while over budget (budgeted loop only).
    pub penalty: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub learning_rate: LearningRate,
    pub exploration: Exploration,
    pub seed: u64,
    /// Keep the per-step log (can be large).
    pub record_log: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 3000,
            horizon: None,
            persistence_p: 0.0,
            cost: 0.0,
            budget: 1,
            penalty: 10.0,
            buffer_capacity: 20_000,
            batch_size: 64,
            epochs: 1,
            gamma: 0.95,
            learning_rate: LearningRate::Constant { alpha: 0.1 },
            exploration: Exploration::default(),
            seed: 0,
            record_log: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.buffer_capacity == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("episodes, buffer capacity, batch size and epochs must be positive"));
        }
        if self.horizon == Some(0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if !(0.0..=1.0).contains(&self.persistence_p) {
            return Err(Error::invalid(format!("persistence_p {} not in [0, 1]", self.persistence_p)));
        }
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(Error::invalid(format!("cost must be finite and >= 0, got {}", self.cost)));
        }
        if !(self.penalty.is_finite() && self.penalty >= 0.0) {
            return Err(Error::invalid(format!("penalty must be finite and >= 0, got {}", self.penalty)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        self.learning_rate.validate()?;
        self.exploration.validate()
    }

    /// Learner matching this config: one budget level for the plain loop,
    /// `budget + 2` for the budgeted one.
    pub fn learner(&self, budgeted: bool) -> Result<SwitcherLearner> {
        let levels = if budgeted { self.budget as usize + 2 } else { 1 };
        SwitcherLearner::new(self.gamma, levels, self.learning_rate, self.exploration)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub learner: SwitcherLearner,
    pub log: TrainLog,
    pub ledger: CostLedger,
    pub episodes: Vec<EpisodeOutcome>,
}

impl TrainOutcome {
    pub fn policy(&self) -> GreedySwitch {
        self.learner.snapshot()
    }
}

/// Plain switching loop: cost `c` on consulted activations, persistence `p`.
pub fn train_switcher<E, F>(
    env: &mut E,
    featurizer: &mut F,
    quick: &dyn PolicyProvider,
    deep: &dyn PolicyProvider,
    learner: SwitcherLearner,
    config: &TrainConfig,
) -> Result<TrainOutcome>
where
    E: Environment,
    F: Featurizer<E::Observation>,
{
    train(env, featurizer, quick, deep, learner, config, false)
}

/// Budgeted loop: as [`train_switcher`], plus a per-episode activation budget
/// whose overdraft is penalised on every step; the learner sees the
/// remaining budget.
pub fn train_budgeted_switcher<E, F>(
    env: &mut E,
    featurizer: &mut F,
    quick: &dyn PolicyProvider,
    deep: &dyn PolicyProvider,
    learner: SwitcherLearner,
    config: &TrainConfig,
) -> Result<TrainOutcome>
where
    E: Environment,
    F: Featurizer<E::Observation>,
{
    train(env, featurizer, quick, deep, learner, config, true)
}

fn train<E, F>(
    env: &mut E,
    featurizer: &mut F,
    quick: &dyn PolicyProvider,
    deep: &dyn PolicyProvider,
    mut learner: SwitcherLearner,
    config: &TrainConfig,
    budgeted: bool,
) -> Result<TrainOutcome>
where
    E: Environment,
    F: Featurizer<E::Observation>,
{
    config.validate()?;
    let want_levels = if budgeted { config.budget as usize + 2 } else { 1 };
    if learner.levels() != want_levels {
        return Err(Error::invalid(format!(
            "learner has {} budget levels, config needs {want_levels}",
            learner.levels()
        )));
    }
    if (learner.gamma() - config.gamma).abs() > 0.0 {
        return Err(Error::invalid("learner and config disagree on gamma"));
    }
    let settings = RolloutSettings {
        persistence_p: config.persistence_p,
        cost: config.cost,
        budget: budgeted.then_some(BudgetRule { n: config.budget, penalty: config.penalty, hard_cap: false }),
        horizon: config.horizon,
    };
    let mut rngs = RunRngs::training(config.seed);
    let mut replay_rng = stream_rng(config.seed, streams::TRAIN_REPLAY);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut log = TrainLog::default();
    let mut ledger = CostLedger::new();
    let mut clock = 0u64;
    let mut episodes = Vec::with_capacity(config.episodes);

    for ep in 0..config.episodes {
        let progress = ep as f64 / config.episodes as f64;
        let mut explorer = learner.exploring(progress);
        let outcome = run_episode(
            env,
            featurizer,
            quick,
            deep,
            &mut explorer,
            &settings,
            &mut rngs,
            ep,
            &mut ledger,
            &mut clock,
            |record, transition| {
                if config.record_log {
                    log.push(record.clone());
                }
                buffer.push(transition.clone());
            },
        )?;
        episodes.push(outcome);
        for _ in 0..config.epochs {
            for t in buffer.sample(&mut replay_rng, config.batch_size) {
                learner.update(t);
            }
        }
    }
    Ok(TrainOutcome { learner, log, ledger, episodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{RoomsWorld, RoomsWorldConfig};
    use crate::mdp::StationaryPolicy;
    use crate::policies::{make_skilled_policy, SkillSpec, TablePolicy, Tier};
    use rand::RngCore;

    fn rooms() -> (RoomsWorld, crate::envs::RoomsFeaturizer, TablePolicy, TablePolicy) {
        let (env, mdp, feat) = RoomsWorld::build(RoomsWorldConfig::default()).unwrap();
        let quick = TablePolicy::new(
            "quick",
            Tier::Quick,
            1.0,
            StationaryPolicy::uniform(mdp.n_states(), mdp.n_actions()),
        )
        .unwrap();
        let deep = make_skilled_policy(&mdp, SkillSpec::new(0.0).unwrap(), Tier::Deep, 5.0).unwrap();
        (env, feat, quick, deep)
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut a = stream_rng(7, 1);
        let mut b = stream_rng(7, 1);
        let mut c = stream_rng(7, 2);
        let x = a.next_u64();
        assert_eq!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = TrainConfig { persistence_p: 1.5, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        c.persistence_p = 0.5;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn learner_levels_must_match() {
        let (mut env, mut feat, quick, deep) = rooms();
        let config = TrainConfig { episodes: 2, budget: 2, ..TrainConfig::default() };
        let learner = config.learner(false).unwrap();
        let err = train_budgeted_switcher(&mut env, &mut feat, &quick, &deep, learner, &config);
        assert!(err.is_err());
    }

    #[test]
    fn training_is_reproducible_and_lawful() {
        let (env, feat, quick, deep) = rooms();
        let config = TrainConfig { episodes: 50, persistence_p: 0.5, cost: 0.05, budget: 2, ..TrainConfig::default() };
        let run = || {
            let (mut e, mut f) = (env.clone(), feat.clone());
            train_budgeted_switcher(&mut e, &mut f, &quick, &deep, config.learner(true).unwrap(), &config).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.log.to_jsonl().unwrap(), b.log.to_jsonl().unwrap());
        let rules = TraceRules { cost: 0.05, budget: Some((2, config.penalty)) };
        validate_trace(a.log.records(), &rules).unwrap();
    }
}
