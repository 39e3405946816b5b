use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::rollout::{DecisionContext, Decider};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineKind {
    /// Independent Bernoulli(`p`) activation on every consulted step.
    Probabilistic { p: f64 },
    /// QUICK is always called; DEEPTHINK is added when the progress score
    /// (recent mean reward minus `distance_weight` times goal distance) is
    /// below `threshold`.
    Cascade { threshold: f64, distance_weight: f64 },
    AlwaysQuick,
    AlwaysDeep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSwitch {
    kind: BaselineKind,
}

impl BaselineSwitch {
    pub fn kind(&self) -> BaselineKind {
        self.kind
    }
}

pub fn make_baseline_switcher(kind: BaselineKind) -> Result<BaselineSwitch> {
    match kind {
        BaselineKind::Probabilistic { p } if !(0.0..=1.0).contains(&p) => {
            Err(Error::invalid(format!("activation probability {p} not in [0, 1]")))
        }
        BaselineKind::Cascade { threshold, distance_weight }
            if threshold.is_nan() || !distance_weight.is_finite() =>
        {
            Err(Error::invalid("cascade threshold and distance weight must be numbers"))
        }
        _ => Ok(BaselineSwitch { kind }),
    }
}

/// Cascade progress score; higher means the episode is going well.
pub(crate) fn cascade_score(ctx: &DecisionContext, distance_weight: f64) -> f64 {
    ctx.recent_reward - distance_weight * ctx.goal_distance.unwrap_or(0.0)
}

impl Decider for BaselineSwitch {
    fn decide(&mut self, ctx: &DecisionContext, rng: &mut dyn RngCore) -> bool {
        match self.kind {
            BaselineKind::Probabilistic { p } => rng.gen_bool(p),
            BaselineKind::Cascade { threshold, distance_weight } => cascade_score(ctx, distance_weight) < threshold,
            BaselineKind::AlwaysQuick => false,
            BaselineKind::AlwaysDeep => true,
        }
    }

    fn quick_first(&self) -> bool {
        matches!(self.kind, BaselineKind::Cascade { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> DecisionContext {
        DecisionContext { state: 0, remaining: None, step: 0, recent_reward: -0.01, goal_distance: Some(2.0) }
    }

    #[test]
    fn probabilistic_frequency_and_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut half = make_baseline_switcher(BaselineKind::Probabilistic { p: 0.5 }).unwrap();
        let hits = (0..10_000).filter(|_| half.decide(&ctx(), &mut rng)).count();
        assert!((hits as f64 / 10_000.0 - 0.5).abs() <= 0.02, "{hits}");
        let mut zero = make_baseline_switcher(BaselineKind::Probabilistic { p: 0.0 }).unwrap();
        let mut one = make_baseline_switcher(BaselineKind::Probabilistic { p: 1.0 }).unwrap();
        assert!((0..1000).all(|_| !zero.decide(&ctx(), &mut rng) && one.decide(&ctx(), &mut rng)));
        assert!(make_baseline_switcher(BaselineKind::Probabilistic { p: 1.5 }).is_err());
    }

    #[test]
    fn cascade_escalates_below_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = make_baseline_switcher(BaselineKind::Cascade { threshold: -0.5, distance_weight: 0.5 }).unwrap();
        assert!(c.quick_first());
        assert!(c.decide(&ctx(), &mut rng));
        let near = DecisionContext { goal_distance: Some(0.0), ..ctx() };
        assert!(!c.decide(&near, &mut rng));
    }
}
