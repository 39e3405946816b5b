use std::collections::VecDeque;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::ReplayTransition;
use super::log::StepRecord;
use super::{stream_rng, streams};
use crate::envs::{Environment, Featurizer};
use crate::error::{Error, Result};
use crate::policies::{CostLedger, PolicyProvider, Tier};

/// Switch regime counter: `0` off, `> 0` DEEPTHINK regime active.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchState {
    pub m: u32,
}

impl SwitchState {
    pub fn is_on(&self) -> bool {
        self.m > 0
    }
}

/// What a switch policy sees when consulted.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionContext {
    /// Featurized state id.
    pub state: usize,
    /// Remaining budget clamped to `-1..=n` (budgeted runs only).
    pub remaining: Option<i64>,
    pub step: usize,
    /// Mean environment reward over the last few steps of this episode.
    pub recent_reward: f64,
    pub goal_distance: Option<f64>,
}

/// A switch policy used inside the rollout loop.
pub trait Decider {
    fn decide(&mut self, ctx: &DecisionContext, rng: &mut dyn RngCore) -> bool;

    /// Whether QUICK is always called before the decision (cascades).
    fn quick_first(&self) -> bool {
        false
    }
}

impl<D: Decider + ?Sized> Decider for &mut D {
    fn decide(&mut self, ctx: &DecisionContext, rng: &mut dyn RngCore) -> bool {
        (**self).decide(ctx, rng)
    }

    fn quick_first(&self) -> bool {
        (**self).quick_first()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetRule {
    pub n: u32,
    pub penalty: f64,
    /// Force QUICK once the budget is spent (baselines at a matched budget).
    pub hard_cap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutSettings {
    pub persistence_p: f64,
    pub cost: f64,
    pub budget: Option<BudgetRule>,
    pub horizon: Option<usize>,
}

impl RolloutSettings {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.persistence_p) {
            return Err(Error::invalid(format!("persistence_p {} not in [0, 1]", self.persistence_p)));
        }
        if !(self.cost.is_finite() && self.cost >= 0.0) {
            return Err(Error::invalid(format!("cost must be finite and >= 0, got {}", self.cost)));
        }
        if let Some(b) = self.budget {
            if !(b.penalty.is_finite() && b.penalty >= 0.0) {
                return Err(Error::invalid(format!("penalty must be finite and >= 0, got {}", b.penalty)));
            }
        }
        Ok(())
    }
}

/// Independent random streams for one run.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub env: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub switch: ChaCha8Rng,
    pub persist: ChaCha8Rng,
}

impl RunRngs {
    pub fn training(seed: u64) -> Self {
        RunRngs {
            env: stream_rng(seed, streams::TRAIN_ENV),
            policy: stream_rng(seed, streams::TRAIN_POLICY),
            switch: stream_rng(seed, streams::TRAIN_SWITCH),
            persist: stream_rng(seed, streams::TRAIN_PERSIST),
        }
    }

    pub fn evaluation(seed: u64) -> Self {
        RunRngs {
            env: stream_rng(seed, streams::EVAL_ENV),
            policy: stream_rng(seed, streams::EVAL_POLICY),
            switch: stream_rng(seed, streams::EVAL_SWITCH),
            persist: stream_rng(seed, streams::EVAL_PERSIST),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    /// Undiscounted environment return.
    pub env_return: f64,
    /// Return after cost and penalty adjustments.
    pub shaped_return: f64,
    pub steps: usize,
    pub consulted_activations: u32,
    pub deep_steps: u32,
    pub compute_cost: f64,
    pub succeeded: bool,
    /// Location at each consulted activation.
    pub activation_locations: Vec<usize>,
}

const RECENT_WINDOW: usize = 5;

/// Runs one episode of the switching loop.
///
/// Every step the decider is evaluated. If the regime is on and the
/// persistence draw is 1, DEEPTHINK acts without consulting the decision.
/// Otherwise the decision is consulted: 1 calls DEEPTHINK (fresh activations
/// also bump `m` and every consulted activation spends one budget unit), 0
/// calls QUICK and turns the regime off. The stored reward subtracts the
/// switch cost on consulted activations and the budget penalty on every step
/// that ends over budget.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<E, F>(
    env: &mut E,
    featurizer: &mut F,
    quick: &dyn PolicyProvider,
    deep: &dyn PolicyProvider,
    decider: &mut dyn Decider,
    settings: &RolloutSettings,
    rngs: &mut RunRngs,
    episode: usize,
    ledger: &mut CostLedger,
    clock: &mut u64,
    mut sink: impl FnMut(&StepRecord, &ReplayTransition),
) -> Result<EpisodeOutcome>
where
    E: Environment,
    F: Featurizer<E::Observation>,
{
    settings.validate()?;
    let horizon = settings.horizon.map_or(env.horizon(), |h| h.min(env.horizon()));
    let obs = env.reset(&mut rngs.env);
    let mut state = featurizer.encode(&obs)?;
    let mut regime = SwitchState::default();
    let mut n: i64 = settings.budget.map_or(0, |b| b.n as i64);
    let clamp = |n: i64| settings.budget.map(|b| n.clamp(-1, b.n as i64));
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(RECENT_WINDOW);
    let mut out = EpisodeOutcome::default();

    for t in 0..horizon {
        let remaining = clamp(n);
        let recent_reward =
            if recent.is_empty() { 0.0 } else { recent.iter().sum::<f64>() / recent.len() as f64 };
        let ctx = DecisionContext { state, remaining, step: t, recent_reward, goal_distance: env.goal_distance() };
        let mut g = decider.decide(&ctx, &mut rngs.switch);
        let location = env.location();
        let m_before = regime.m;

        let mut draw = None;
        if regime.is_on() {
            draw = Some(rngs.persist.gen_bool(settings.persistence_p));
        }
        let persisted = draw == Some(true);
        let consulted = !persisted;
        if consulted {
            if let Some(b) = settings.budget {
                if b.hard_cap && g && n <= 0 {
                    g = false;
                }
            }
        }
        let tier = if persisted || g { Tier::Deep } else { Tier::Quick };
        if consulted {
            if g {
                if regime.m == 0 {
                    regime.m += 1;
                }
                n -= 1;
            } else {
                regime.m = 0;
            }
        }

        let mut step_cost = 0.0;
        let mut action = None;
        if consulted && decider.quick_first() {
            action = Some(quick.act(env.state_id(), &mut rngs.policy));
            ledger.record_call(quick, *clock)?;
            step_cost += quick.call_cost();
        }
        if tier == Tier::Deep || action.is_none() {
            let provider = match tier {
                Tier::Deep => deep,
                Tier::Quick => quick,
            };
            action = Some(provider.act(env.state_id(), &mut rngs.policy));
            ledger.record_call(provider, *clock)?;
            step_cost += provider.call_cost();
        }
        let action = action.expect("an action is always chosen");
        let step = env.step(action, &mut rngs.env);
        *clock += 1;

        let mut reward = step.reward;
        if consulted && g {
            reward -= settings.cost;
        }
        if let Some(b) = settings.budget {
            if n < 0 {
                reward -= b.penalty;
            }
        }
        let next_state = featurizer.encode(&step.next_observation)?;
        let terminal = env.succeeded();

        let record = StepRecord {
            episode,
            step: t,
            state,
            location,
            m: m_before,
            persistence_draw: draw,
            consulted,
            g,
            tier,
            env_reward: step.reward,
            reward,
            cost: step_cost,
            remaining: settings.budget.map(|_| n),
        };
        let transition = ReplayTransition {
            state,
            remaining,
            g,
            consulted,
            reward,
            next_state,
            next_remaining: clamp(n),
            terminal,
        };
        sink(&record, &transition);

        out.env_return += step.reward;
        out.shaped_return += reward;
        out.steps += 1;
        out.compute_cost += step_cost;
        if tier == Tier::Deep {
            out.deep_steps += 1;
        }
        if consulted && g {
            out.consulted_activations += 1;
            out.activation_locations.push(location);
        }
        if recent.len() == RECENT_WINDOW {
            recent.pop_front();
        }
        recent.push_back(step.reward);

        state = next_state;
        if step.done {
            break;
        }
    }
    out.succeeded = env.succeeded();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{RoomsWorld, RoomsWorldConfig};
    use crate::mdp::StationaryPolicy;
    use crate::policies::TablePolicy;
    use crate::trainer::{validate_trace, TraceRules};

    struct Scripted(Vec<bool>);

    impl Decider for Scripted {
        fn decide(&mut self, ctx: &DecisionContext, _rng: &mut dyn RngCore) -> bool {
            self.0.get(ctx.step).copied().unwrap_or(false)
        }
    }

    fn setup() -> (RoomsWorld, crate::envs::RoomsFeaturizer, TablePolicy, TablePolicy) {
        let config = RoomsWorldConfig { horizon: 400, ..RoomsWorldConfig::default() };
        let (env, mdp, feat) = RoomsWorld::build(config).unwrap();
        // Both tiers only wander so episodes stay long.
        let mut stay = vec![0.0; mdp.n_states() * mdp.n_actions()];
        for s in 0..mdp.n_states() {
            stay[s * mdp.n_actions()] = 1.0;
        }
        let pi = StationaryPolicy::new(mdp.n_states(), mdp.n_actions(), stay).unwrap();
        let quick = TablePolicy::new("q", Tier::Quick, 1.0, pi.clone()).unwrap();
        let deep = TablePolicy::new("d", Tier::Deep, 5.0, pi).unwrap();
        (env, feat, quick, deep)
    }

    #[test]
    fn persistence_run_length_is_geometric() {
        let (mut env, mut feat, quick, deep) = setup();
        let settings = RolloutSettings { persistence_p: 0.9, cost: 0.0, budget: None, horizon: None };
        let mut rngs = RunRngs::training(11);
        let mut ledger = CostLedger::new();
        let mut clock = 0;
        let mut runs = Vec::new();
        for ep in 0..400 {
            let mut records = Vec::new();
            let mut d = Scripted(vec![true]);
            run_episode(&mut env, &mut feat, &quick, &deep, &mut d, &settings, &mut rngs, ep, &mut ledger, &mut clock, |r, _| {
                records.push(r.clone())
            })
            .unwrap();
            validate_trace(&records, &TraceRules { cost: 0.0, budget: None }).unwrap();
            let len = records.iter().take_while(|r| r.tier == Tier::Deep).count();
            assert!(len < 400, "regime never ended");
            runs.push(len as f64);
        }
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        assert!((mean - 10.0).abs() <= 1.0, "mean run length {mean}");
    }

    #[test]
    fn budget_and_penalty_are_applied() {
        let (mut env, mut feat, quick, deep) = setup();
        let settings = RolloutSettings {
            persistence_p: 0.0,
            cost: 0.5,
            budget: Some(BudgetRule { n: 1, penalty: 3.0, hard_cap: false }),
            horizon: Some(5),
        };
        let mut rngs = RunRngs::training(1);
        let mut records = Vec::new();
        let mut d = Scripted(vec![true, true, false]);
        let out = run_episode(
            &mut env, &mut feat, &quick, &deep, &mut d, &settings, &mut rngs, 0, &mut CostLedger::new(), &mut 0,
            |r, _| records.push(r.clone()),
        )
        .unwrap();
        assert_eq!(out.consulted_activations, 2);
        let remaining: Vec<_> = records.iter().map(|r| r.remaining.unwrap()).collect();
        assert_eq!(remaining, vec![0, -1, -1, -1, -1]);
        let adj: Vec<_> = records.iter().map(|r| r.env_reward - r.reward).collect();
        assert_eq!(adj, vec![0.5, 3.5, 3.0, 3.0, 3.0]);
        validate_trace(&records, &TraceRules { cost: 0.5, budget: Some((1, 3.0)) }).unwrap();
    }

    #[test]
    fn hard_cap_forces_quick() {
        let (mut env, mut feat, quick, deep) = setup();
        let settings = RolloutSettings {
            persistence_p: 0.0,
            cost: 0.0,
            budget: Some(BudgetRule { n: 1, penalty: 3.0, hard_cap: true }),
            horizon: Some(4),
        };
        let mut d = Scripted(vec![true; 4]);
        let out = run_episode(
            &mut env, &mut feat, &quick, &deep, &mut d, &settings, &mut RunRngs::training(2), 0,
            &mut CostLedger::new(), &mut 0, |_, _| {},
        )
        .unwrap();
        assert_eq!(out.consulted_activations, 1);
        assert_eq!(out.compute_cost, 5.0 + 3.0);
    }
}
